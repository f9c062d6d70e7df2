"""Image-side math: channel extraction, 3-D convolution layers, OMP sparse
coding with patch-wise sparse/residual decomposition, frozen convolutional
feature extraction, and concatenating feature fusion.

Volumes are ``(depth, height, width, channels)`` float arrays.  A 2-D colour
image is a volume of depth 1 with three channels and a channel-order tag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericError, ParameterError, ShapeError

CHANNEL_ORDERS = ("RGB", "BGR")
CONV_ACTIVATIONS = ("relu", "sigmoid", "identity")
OMP_STOP = 1e-10


@dataclass(frozen=True, eq=False)
class Volume:
    data: np.ndarray
    channel_order: str | None = None

    def __post_init__(self):
        a = np.array(self.data, dtype=np.float64)
        if a.ndim == 2:
            a = a[None, :, :, None]
        elif a.ndim == 3:
            a = a[None]
        if a.ndim != 4 or min(a.shape) < 1:
            raise ShapeError(f"volume needs shape (depth, height, width, channels), got {a.shape}")
        if not np.isfinite(a).all():
            raise NumericError("volume intensities must be finite")
        if self.channel_order is not None and self.channel_order not in CHANNEL_ORDERS:
            raise ParameterError(f"channel_order must be one of {CHANNEL_ORDERS}")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def spatial(self) -> tuple[int, int, int]:
        return self.data.shape[:3]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    @property
    def plane(self) -> np.ndarray:
        """The single 2-D plane of a depth-1, one-channel volume."""
        if self.shape[0] != 1 or self.shape[3] != 1:
            raise ShapeError(f"not a single plane: shape {self.shape}")
        return self.data[0, :, :, 0]


def _as_plane(plane) -> np.ndarray:
    if isinstance(plane, Volume):
        return plane.plane
    a = np.asarray(plane, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D plane, got shape {a.shape}")
    return a


# ----------------------------------------------------------------------------
# channels


def extract_channel(image: Volume, channel: str = "green") -> Volume:
    """Pull one colour plane out of a tagged 3-channel image.

    Green is index 1 in both RGB and BGR layouts; red and blue swap ends.
    """
    if image.channels != 3:
        raise ShapeError(f"expected 3 channels, got {image.channels}")
    if image.channel_order is None:
        raise ParameterError("image has no channel_order tag")
    order = image.channel_order.lower()
    names = {"r": "red", "g": "green", "b": "blue"}
    layout = [names[c] for c in order]
    if channel not in layout:
        raise ParameterError(f"channel must be red, green or blue, got {channel!r}")
    idx = layout.index(channel)
    return Volume(image.data[..., idx:idx + 1])


# ----------------------------------------------------------------------------
# convolution


@dataclass(frozen=True, eq=False)
class ConvLayerSpec:
    """Kernel of shape ``(out_channels, kd, kh, kw, in_channels)`` and one bias
    per output channel.  Arrays are made read-only on construction."""

    kernel: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        k = np.array(self.kernel, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if k.ndim != 5:
            raise ShapeError(f"kernel must be 5-D, got shape {k.shape}")
        if b.shape != (k.shape[0],):
            raise ShapeError(f"need {k.shape[0]} biases, got {b.shape}")
        if not (np.isfinite(k).all() and np.isfinite(b).all()):
            raise NumericError("layer parameters must be finite")
        if self.activation not in CONV_ACTIVATIONS:
            raise ParameterError(f"activation must be one of {CONV_ACTIVATIONS}")
        k.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[4]

    def to_dict(self) -> dict:
        return {"kernel": self.kernel.tolist(), "bias": self.bias.tolist(),
                "activation": self.activation}


def activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def conv3d_forward(volume: Volume, layer: ConvLayerSpec) -> Volume:
    """Valid, stride-1 cross-correlation summed over input channels, plus bias,
    through the layer's activation."""
    x = volume.data
    _, kd, kh, kw, cin = layer.kernel.shape
    if cin != volume.channels:
        raise ShapeError(f"layer expects {cin} input channels, volume has {volume.channels}")
    if kd > x.shape[0] or kh > x.shape[1] or kw > x.shape[2]:
        raise ShapeError(f"kernel {(kd, kh, kw)} larger than input {volume.spatial}")
    windows = sliding_window_view(x, (kd, kh, kw), axis=(0, 1, 2))  # (D', H', W', C, kd, kh, kw)
    z = np.einsum("dhwcijk,oijkc->dhwo", windows, layer.kernel, optimize=True) + layer.bias
    return Volume(activate(layer.activation, z))


def threshold_mask(volume: Volume, level: float) -> Volume:
    """Binary mask (1.0 where intensity exceeds ``level``) of a response map."""
    return Volume((volume.data > level).astype(np.float64))


def random_stack(in_channels: int, widths: Sequence[int] = (4, 8), kernel: int = 3,
                 seed: int = 0, activation: str = "relu", depth_kernel: int | None = None):
    """Seeded convolution stack with He-uniform weights and zero biases."""
    rng = np.random.default_rng(seed)
    kd = kernel if depth_kernel is None else depth_kernel
    layers, cin = [], in_channels
    for cout in widths:
        fan_in = cin * kd * kernel * kernel
        r = np.sqrt(6.0 / fan_in)
        k = rng.uniform(-r, r, size=(cout, kd, kernel, kernel, cin))
        layers.append(ConvLayerSpec(k, np.zeros(cout), activation))
        cin = cout
    return layers


# ----------------------------------------------------------------------------
# patches


def _patch_grid(shape, size, stride):
    (H, W), (ph, pw) = shape, size
    if stride < 1:
        raise ParameterError("stride must be at least 1")
    if ph < 1 or pw < 1 or ph > H or pw > W:
        raise ShapeError(f"patch {size} does not fit in plane {shape}")
    return range(0, H - ph + 1, stride), range(0, W - pw + 1, stride)


def extract_patches(plane, size: tuple[int, int], stride: int) -> np.ndarray:
    """Row-major sliding-window patches, each flattened row-major.

    Returns an array of shape ``(n_patches, ph * pw)``.
    """
    a = _as_plane(plane)
    rows, cols = _patch_grid(a.shape, size, stride)
    ph, pw = size
    return np.array([a[r:r + ph, c:c + pw].ravel() for r in rows for c in cols])


def reconstruct_patches(patches, shape: tuple[int, int], size: tuple[int, int],
                        stride: int) -> np.ndarray:
    """Place patches back on the grid, averaging overlaps; uncovered pixels are 0."""
    rows, cols = _patch_grid(shape, size, stride)
    ph, pw = size
    patches = np.asarray(patches, dtype=np.float64)
    if len(patches) != len(rows) * len(cols):
        raise ShapeError(f"expected {len(rows) * len(cols)} patches, got {len(patches)}")
    acc = np.zeros(shape)
    hits = np.zeros(shape)
    i = 0
    for r in rows:
        for c in cols:
            acc[r:r + ph, c:c + pw] += patches[i].reshape(ph, pw)
            hits[r:r + ph, c:c + pw] += 1
            i += 1
    return np.divide(acc, hits, out=np.zeros(shape), where=hits > 0)


# ----------------------------------------------------------------------------
# dictionaries and OMP


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Unit-norm atoms stored as rows of ``atoms``."""

    atoms: np.ndarray
    provenance: str = "explicit"

    def __post_init__(self):
        a = np.array(self.atoms, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1:
            raise ShapeError("atoms must be a non-empty 2-D array (n_atoms, dim)")
        norms = np.linalg.norm(a, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ParameterError("every atom must have unit norm")
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)

    @classmethod
    def normalized(cls, atoms, provenance: str = "explicit") -> "Dictionary":
        a = np.asarray(atoms, dtype=np.float64)
        norms = np.linalg.norm(a, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ParameterError("zero atom cannot be normalised")
        return cls(a / norms, provenance)

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]


def dct_dictionary(patch: int = 8, per_axis: int = 16) -> Dictionary:
    """Overcomplete separable 2-D DCT dictionary for ``patch x patch`` blocks.

    The 1-D factor has ``per_axis`` cosines sampled on ``patch`` points with
    the mean removed from all but the DC atom; the 2-D atoms are the
    normalised outer products, ``per_axis**2`` of them.
    """
    n = np.arange(patch)
    D1 = np.cos(np.outer(n, np.arange(per_axis)) * np.pi / per_axis)
    D1[:, 1:] -= D1[:, 1:].mean(axis=0)
    D1 /= np.linalg.norm(D1, axis=0)
    D2 = np.kron(D1, D1)  # (patch*patch, per_axis**2)
    return Dictionary.normalized(D2.T, "dct_overcomplete")


def random_orthonormal_dictionary(dim: int, seed: int = 0) -> Dictionary:
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    return Dictionary.normalized(q.T, "explicit")


@dataclass(frozen=True)
class SparseCode:
    """Atom indices with their coefficients.

    ``residual_norm`` is the norm left by the pursuit that produced the code;
    it is ``None`` once the code has been thresholded.
    """

    indices: tuple[int, ...]
    coefficients: tuple[float, ...]
    k: int
    residual_norm: float | None = None
    residual_history: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.indices) != len(self.coefficients):
            raise ShapeError("indices and coefficients differ in length")
        if len(set(self.indices)) != len(self.indices):
            raise ParameterError("atom indices must be distinct")
        if len(self.indices) > self.k:
            raise ParameterError(f"{len(self.indices)} coefficients exceed sparsity {self.k}")

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.indices, self.coefficients))


def omp(dictionary: Dictionary, signal, k: int) -> SparseCode:
    """Orthogonal matching pursuit.

    Up to ``k`` times, the atom most correlated with the residual (absolute
    inner product, ties to the lowest index) joins the support, then all
    coefficients on the support are refitted by least squares.  Stops early
    once the residual norm drops below 1e-10.
    """
    y = np.asarray(signal, dtype=np.float64).reshape(-1)
    if y.size != dictionary.dim:
        raise ShapeError(f"signal length {y.size} does not match atom dimension {dictionary.dim}")
    if not 0 <= k <= dictionary.n_atoms:
        raise ParameterError(f"k must lie in [0, {dictionary.n_atoms}], got {k}")
    A = dictionary.atoms
    residual = y.copy()
    history = [float(np.linalg.norm(residual))]
    support: list[int] = []
    coef = np.zeros(0)
    while len(support) < k and history[-1] >= OMP_STOP:
        corr = np.abs(A @ residual)
        corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        basis = A[support].T
        coef, _, rank, _ = np.linalg.lstsq(basis, y, rcond=None)
        if rank < len(support):
            raise NumericError("singular least-squares system in OMP", support[-1])
        residual = y - basis @ coef
        history.append(float(np.linalg.norm(residual)))
    return SparseCode(tuple(support), tuple(float(c) for c in coef), k, history[-1],
                      tuple(history))


def threshold_code(code: SparseCode, tau: float) -> SparseCode:
    """Drop coefficients whose magnitude is below ``tau``."""
    keep = [(i, c) for i, c in zip(code.indices, code.coefficients) if abs(c) >= tau]
    if len(keep) == len(code.indices):
        return code
    return SparseCode(tuple(i for i, _ in keep), tuple(c for _, c in keep), code.k, None)


def reconstruct(dictionary: Dictionary, code: SparseCode) -> np.ndarray:
    out = np.zeros(dictionary.dim)
    for i, c in zip(code.indices, code.coefficients):
        out += c * dictionary.atoms[i]
    return out


@dataclass(frozen=True, eq=False)
class CsidResult:
    sparse: np.ndarray
    residual: np.ndarray
    codes: tuple[SparseCode, ...]


def csid_decompose(plane, dictionary: Dictionary, k: int, tau: float = 0.0,
                   patch: tuple[int, int] = (8, 8)) -> CsidResult:
    """Split a plane into a sparse-coded component and the remainder.

    Every non-overlapping ``patch`` block (row-major) is coded by OMP,
    thresholded and reconstructed; pixels outside the tiled area belong to
    the residual.  The residual is ``input - sparse`` and the sparse plane is
    then re-derived as ``input - residual``; that round trip is error-free in
    floating point wherever the sparse value does not exceed roughly twice the
    input, so the two parts add back to the input bit for bit in that regime.
    """
    a = _as_plane(plane)
    ph, pw = patch
    if ph * pw != dictionary.dim:
        raise ShapeError(f"patch {patch} has {ph * pw} pixels, atoms have {dictionary.dim}")
    _patch_grid(a.shape, patch, 1)
    rows, cols = range(0, a.shape[0] - ph + 1, ph), range(0, a.shape[1] - pw + 1, pw)
    sparse = np.zeros_like(a)
    codes = []
    for r in rows:
        for c in cols:
            code = threshold_code(omp(dictionary, a[r:r + ph, c:c + pw].ravel(), k), tau)
            codes.append(code)
            sparse[r:r + ph, c:c + pw] = reconstruct(dictionary, code).reshape(ph, pw)
    residual = a - sparse
    sparse = a - residual
    return CsidResult(sparse, residual, tuple(codes))


# ----------------------------------------------------------------------------
# transfer features and fusion


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Values plus the extractor that produced them.

    ``segments`` lists ``(source, start, stop)`` slices for fused vectors.
    """

    values: np.ndarray
    source: str
    segments: tuple[tuple[str, int, int], ...] = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.isfinite(v).all():
            raise NumericError("feature values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not self.segments:
            object.__setattr__(self, "segments", ((self.source, 0, v.size),))

    def __len__(self) -> int:
        return self.values.size

    def parts(self) -> list["FeatureVector"]:
        return [FeatureVector(self.values[a:b], src) for src, a, b in self.segments]


def transfer_features(volume: Volume, stack: Sequence[ConvLayerSpec], cut_index: int,
                      source: str = "transfer") -> FeatureVector:
    """Run the frozen stack through layer ``cut_index`` and average-pool each
    output channel over its spatial extent."""
    if not 0 <= cut_index < len(stack):
        raise ParameterError(f"cut_index must lie in [0, {len(stack)}), got {cut_index}")
    x = volume
    for i, layer in enumerate(stack[:cut_index + 1]):
        try:
            x = conv3d_forward(x, layer)
        except ShapeError as exc:
            raise ShapeError(f"layer {i}: {exc}") from exc
    return FeatureVector(x.data.mean(axis=(0, 1, 2)), source)


def fuse_concat(parts: Sequence[FeatureVector]) -> FeatureVector:
    """Concatenate feature vectors in argument order, recording segment sources."""
    if not parts:
        raise ParameterError("nothing to fuse")
    segments, pos = [], 0
    for part in parts:
        for src, a, b in part.segments:
            segments.append((src, pos + a, pos + b))
        pos += len(part)
    values = np.concatenate([p.values for p in parts])
    return FeatureVector(values, "fused", tuple(segments))


# ----------------------------------------------------------------------------
# file formats


def write_volume(volume: Volume, path) -> None:
    """ASCII header ``depth height width channels order`` then little-endian float64."""
    d, h, w, c = volume.shape
    order = volume.channel_order or "NONE"
    with open(path, "wb") as fh:
        fh.write(f"{d} {h} {w} {c} {order}\n".encode("ascii"))
        fh.write(volume.data.astype("<f8").tobytes(order="C"))


def read_volume(path) -> Volume:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ShapeError("volume file has no header line")
    try:
        d, h, w, c, order = raw[:nl].decode("ascii").split()
        shape = (int(d), int(h), int(w), int(c))
    except ValueError as exc:
        raise ShapeError(f"bad volume header: {exc}") from None
    body = raw[nl + 1:]
    if len(body) != 8 * int(np.prod(shape)):
        raise ShapeError(f"volume body has {len(body)} bytes, expected {8 * int(np.prod(shape))}")
    data = np.frombuffer(body, dtype="<f8").reshape(shape)
    return Volume(data, None if order == "NONE" else order)


def read_pnm(path) -> Volume:
    """PGM/PPM image as a depth-1 volume (PPM is tagged RGB)."""
    from PIL import Image

    with Image.open(path) as img:
        if img.format not in ("PPM", "PGM", "PBM"):
            raise ShapeError(f"{path} is not a PGM/PPM file")
        arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        return Volume(arr)
    return Volume(arr[..., :3], "RGB")


def stack_to_json(stack: Sequence[ConvLayerSpec]) -> str:
    return json.dumps([layer.to_dict() for layer in stack], sort_keys=True)


def conv3d_bruteforce(volume: Volume, layer: ConvLayerSpec) -> np.ndarray:
    """Explicit-loop evaluation of :func:`conv3d_forward`, for self-checks."""
    x = volume.data
    cout, kd, kh, kw, cin = layer.kernel.shape
    D, H, W = x.shape[0] - kd + 1, x.shape[1] - kh + 1, x.shape[2] - kw + 1
    out = np.zeros((D, H, W, cout))
    for o in range(cout):
        for d in range(D):
            for h in range(H):
                for w in range(W):
                    acc = layer.bias[o]
                    for i in range(kd):
                        for j in range(kh):
                            for m in range(kw):
                                for c in range(cin):
                                    acc += layer.kernel[o, i, j, m, c] * x[d + i, h + j, w + m, c]
                    out[d, h, w, o] = acc
    return activate(layer.activation, out)
