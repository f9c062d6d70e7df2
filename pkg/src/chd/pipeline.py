"""End-to-end orchestration: configuration, the tabular run, report files,
and the imaging demonstration."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import data as dc
from . import imaging as im
from .errors import ChdError, ConfigError
from .metrics import MetricsReport, evaluate, metrics_csv
from .models import (ForestConfig, GbtConfig, LogisticConfig, MlpConfig, NbConfig, SvmConfig,
                     TreeConfig, fit_forest, fit_gbt, fit_logistic, fit_mlp, fit_nb, fit_svm,
                     fit_tree, load_model, save_model)
from .models.trees import worker_count
from .optim import format_trace
from .relief import FeatureWeights, relieff_knn, relieff_literal, select_top

log = logging.getLogger(__name__)

CLASSIFIERS = {
    "naive_bayes": (fit_nb, NbConfig),
    "random_forest": (fit_forest, ForestConfig),
    "logistic_regression": (fit_logistic, LogisticConfig),
    "svm": (fit_svm, SvmConfig),
    "multilayer_perceptron": (fit_mlp, MlpConfig),
    "gradient_boosted_tree": (fit_gbt, GbtConfig),
    "decision_tree": (fit_tree, TreeConfig),
}
DEFAULT_ROSTER = ("naive_bayes", "random_forest", "logistic_regression", "svm",
                  "multilayer_perceptron", "gradient_boosted_tree")
DISPLAY_NAMES = {
    "naive_bayes": "Naive Bayes",
    "random_forest": "Random Forest",
    "logistic_regression": "Logistic Regression",
    "svm": "SVM",
    "multilayer_perceptron": "Multilayer Perceptron",
    "gradient_boosted_tree": "Gradient Boosted Tree",
    "decision_tree": "Decision Tree",
}

EXIT_CODES = {
    "config": 2, "load": 3, "clean": 4, "eda": 5, "split": 6, "select": 7,
    "train": 8, "evaluate": 9, "report": 10, "imaging": 11,
}


class StageError(ChdError):
    """A pipeline stage failed; ``exit_code`` identifies the stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = EXIT_CODES[stage]


# ----------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ImagingConfig:
    size: int = 32
    patch: int = 8
    k: int = 4
    tau: float = 0.05
    seed: int = 0
    widths: tuple[int, ...] = (4, 8)
    cut_index: int = 1
    mask_level: float = 0.5


@dataclass(frozen=True)
class PipelineConfig:
    input: str | None = None
    schema: object = "heart"
    clean_policy: str = "median_mode"
    ratio: float = 0.8
    seed: int = 0
    select: str = "knn"
    m: int | None = None
    k: int = 10
    top: int | None = None
    classifiers: tuple[str, ...] = DEFAULT_ROSTER
    models: dict = field(default_factory=dict)
    threshold: float = 0.5
    out: str = "chd_out"
    timings: str | None = None
    imaging: ImagingConfig = field(default_factory=ImagingConfig)

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise ConfigError(f"ratio must lie in (0, 1), got {self.ratio}")
        if self.select not in ("knn", "literal"):
            raise ConfigError(f"select must be 'knn' or 'literal', got {self.select!r}")
        if self.clean_policy not in ("median_mode", "drop_row"):
            raise ConfigError(f"unknown clean_policy {self.clean_policy!r}")
        if self.top is not None and self.top < 1:
            raise ConfigError("top must be at least 1")
        for name in self.classifiers:
            if name not in CLASSIFIERS:
                raise ConfigError(f"unknown classifier {name!r}; choose from {sorted(CLASSIFIERS)}")
        for name, overrides in self.models.items():
            if name not in CLASSIFIERS:
                raise ConfigError(f"hyperparameters given for unknown classifier {name!r}")
            _model_config(name, overrides, self.seed)
        if not 0 <= self.threshold <= 1:
            raise ConfigError("threshold must lie in [0, 1]")

    def schema_object(self) -> dc.Schema:
        return schema_from_config(self.schema)

    def model_config(self, name: str):
        return _model_config(name, self.models.get(name, {}), self.seed)


def _model_config(name: str, overrides: dict, seed: int):
    cls = CLASSIFIERS[name][1]
    known = {f.name for f in fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown hyperparameter(s) for {name}: {sorted(unknown)}")
    values = dict(overrides)
    if "seed" in known:
        values.setdefault("seed", seed)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad hyperparameters for {name}: {exc}") from exc


def schema_from_config(spec) -> dc.Schema:
    if spec == "heart":
        return dc.HEART_SCHEMA
    if not isinstance(spec, dict) or set(spec) - {"label", "features"}:
        raise ConfigError("schema must be 'heart' or {'label': ..., 'features': [...]}")
    try:
        feats = []
        for f in spec["features"]:
            f = dict(f)
            if "levels" in f:
                f["levels"] = tuple(str(v) for v in f["levels"])
            feats.append(dc.FeatureSpec(**f))
        return dc.Schema(tuple(feats), spec.get("label", "num"))
    except (KeyError, TypeError, ChdError) as exc:
        raise ConfigError(f"bad schema: {exc}") from exc


def config_from_dict(doc: dict, **overrides) -> PipelineConfig:
    """Build a config from parsed JSON; keyword overrides (CLI flags) win."""
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    values = dict(doc)
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "classifiers" in values:
        values["classifiers"] = tuple(values["classifiers"])
    if "imaging" in values and isinstance(values["imaging"], dict):
        ik = {f.name for f in fields(ImagingConfig)}
        bad = set(values["imaging"]) - ik
        if bad:
            raise ConfigError(f"unknown imaging key(s): {sorted(bad)}")
        img = dict(values["imaging"])
        if "widths" in img:
            img["widths"] = tuple(img["widths"])
        values["imaging"] = ImagingConfig(**img)
    if "models" in values and not isinstance(values["models"], dict):
        raise ConfigError("models must map classifier names to hyperparameter objects")
    try:
        return PipelineConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> PipelineConfig:
    if path is None:
        return config_from_dict({}, **overrides)
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(doc, **overrides)


# ----------------------------------------------------------------------------
# the run


@dataclass
class RunReport:
    eda: dc.EdaReport | None = None
    weights: FeatureWeights | None = None
    selected: list[str] = field(default_factory=list)
    rows: list[tuple[str, MetricsReport]] = field(default_factory=list)
    traces: dict[str, list[float]] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    n_train: int = 0
    n_test: int = 0
    threshold: float = 0.5


class _Stages:
    def __init__(self, report: RunReport):
        self.report = report

    def __call__(self, stage, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except StageError:
            raise
        except (ChdError, ValueError, ArithmeticError, OSError) as exc:
            raise StageError(stage, exc) from exc
        self.report.timings[stage] = self.report.timings.get(stage, 0.0) + time.perf_counter() - start
        return result


def _load(cfg: PipelineConfig) -> dc.Dataset:
    schema = cfg.schema_object()
    if cfg.input is None:
        if schema != dc.HEART_SCHEMA:
            raise ConfigError("a custom schema needs an input file")
        return dc.load_heart_fixture()
    return dc.load_csv(cfg.input, schema)


def _select(cfg: PipelineConfig, train: dc.Dataset):
    if cfg.select == "knn":
        weights = relieff_knn(train, cfg.m, cfg.k, cfg.seed)
    else:
        weights = relieff_literal(train, cfg.m, cfg.seed)
    n = len(weights.names) if cfg.top is None else cfg.top
    return weights, select_top(weights, n)


def prepare(cfg: PipelineConfig, report: RunReport, stages=None):
    """Load, clean, split and select; returns ``(clean_data, split, selected)``.

    Feature weights come from the training partition only so that the held-out
    records never influence which features are kept.
    """
    stages = stages or _Stages(report)
    raw = stages("load", _load, cfg)
    data = stages("clean", dc.clean, raw, cfg.clean_policy)
    report.eda = stages("eda", dc.eda_report, data)
    split = stages("split", dc.stratified_split, data, cfg.ratio, cfg.seed)
    report.weights, report.selected = stages("select", _select, cfg, split.train)
    report.n_train, report.n_test = len(split.train), len(split.test)
    return data, split, report.selected


def train_models(cfg: PipelineConfig, train: dc.Dataset) -> dict:
    """Fit every requested classifier; independent fits may run on threads."""
    def fit(name):
        return CLASSIFIERS[name][0](train, cfg.model_config(name))

    workers = min(worker_count(), max(1, len(cfg.classifiers)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fitted = list(pool.map(fit, cfg.classifiers))
    else:
        fitted = [fit(name) for name in cfg.classifiers]
    return dict(zip(cfg.classifiers, fitted))


def evaluate_models(models: dict, test: dc.Dataset, threshold: float = 0.5):
    rows = []
    for name, model in models.items():
        proba = np.asarray(model.predict_proba(test.X))
        pred = (proba >= threshold).astype(np.int64)
        rows.append((name, evaluate(test.y, pred, proba)))
    return rows


def run_pipeline(cfg: PipelineConfig) -> RunReport:
    report = RunReport(threshold=cfg.threshold)
    stages = _Stages(report)
    _, split, selected = prepare(cfg, report, stages)
    train, test = split.train.select(selected), split.test.select(selected)
    report.models = stages("train", train_models, cfg, train)
    report.traces = {n: list(m.loss_trace) for n, m in report.models.items()
                     if getattr(m, "loss_trace", None)}
    report.rows = stages("evaluate", evaluate_models, report.models, test, cfg.threshold)
    return report


# ----------------------------------------------------------------------------
# report files


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def eda_files(eda: dc.EdaReport) -> dict[str, str]:
    files = {
        "eda_report.txt": eda.to_text(),
        "eda_values.txt": eda.to_kv(),
        "class_balance.csv": _csv_text(
            ["label", "count", "proportion", "percent"],
            [[lbl, eda.class_counts[lbl], repr(eda.class_proportions[lbl]),
              dc.format_percent(eda.class_proportions[lbl], 1)] for lbl in (1, 0)],
        ),
        "age_scatter.csv": _csv_text(["age", "label"], [[dc._format_number(a), lbl]
                                                            for a, lbl in eda.age_scatter]),
    }
    if eda.sex_by_label is not None:
        files["sex_by_label.csv"] = _csv_text(
            ["sex", "label_0", "label_1"],
            [[s, *map(int, eda.sex_by_label[s])] for s in (0, 1)],
        )
    if eda.chest_pain_by_label is not None:
        files["chest_pain_by_label.csv"] = _csv_text(
            ["chest_pain", "label_0", "label_1"],
            [[lvl, *map(int, row)] for lvl, row in zip(eda.chest_pain_levels, eda.chest_pain_by_label)],
        )
    return files


def metric_files(rows) -> dict[str, str]:
    named = [(DISPLAY_NAMES.get(n, n), r) for n, r in rows]
    return {
        "metrics.csv": metrics_csv(named),
        "accuracy_by_classifier.csv": _csv_text(
            ["classifier", "accuracy_percent"],
            [[name, "" if r.accuracy is None else f"{100 * r.accuracy:.2f}"] for name, r in named],
        ),
        "precision_recall_f.csv": _csv_text(
            ["classifier", "precision", "recall", "f_measure"],
            [[name, _num(r.precision), _num(r.recall), _num(r.f_measure)] for name, r in named],
        ),
    }


def selection_files(weights: FeatureWeights, selected) -> dict[str, str]:
    return {
        "feature_weights.txt": weights.to_text(),
        "selected_features.txt": "".join(f"{n}\n" for n in selected),
    }


def _summary(report: RunReport) -> str:
    lines = ["CHD pipeline summary", ""]
    if report.eda is not None:
        props = report.eda.class_proportions
        lines.append(f"records after cleaning: {report.eda.n_records}")
        lines.append(f"disease present: {dc.format_percent(props[1], 1)}%  "
                     f"absent: {dc.format_percent(props[0], 1)}%")
    if report.n_train:
        lines.append(f"train / test records: {report.n_train} / {report.n_test}")
    if report.weights is not None:
        lines.append(f"feature weighting: ReliefF ({report.weights.method}, m={report.weights.m}, "
                     f"k={report.weights.k})")
        lines.append(f"selected features ({len(report.selected)}): {', '.join(report.selected)}")
    if report.rows:
        lines += ["", "Held-out performance", ""]
        lines += metrics_csv([(DISPLAY_NAMES.get(n, n), r) for n, r in report.rows]).splitlines()
    return "\n".join(lines) + "\n"


def report_files(report: RunReport) -> dict[str, bytes | str]:
    files: dict[str, bytes | str] = {}
    if report.eda is not None:
        files.update(eda_files(report.eda))
    if report.weights is not None:
        files.update(selection_files(report.weights, report.selected))
    if report.n_train:
        # an empty roster still gets a header-only metrics table
        files.update(metric_files(report.rows))
        for name, trace in report.traces.items():
            files[f"loss_{name}.txt"] = format_trace(trace)
        files["manifest.json"] = manifest(report)
    files["summary.txt"] = _summary(report)
    return files


def write_files(files: dict, out_dir, models: dict | None = None) -> list[Path]:
    """Write into a scratch directory first, then move into ``out_dir``.

    Nothing lands in ``out_dir`` if any write fails.
    """
    out = Path(out_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".chd-", dir=out.parent))
    try:
        for name, content in files.items():
            target = scratch / name
            target.parent.mkdir(parents=True, exist_ok=True)
            if isinstance(content, bytes):
                target.write_bytes(content)
            else:
                target.write_text(content, encoding="utf-8")
        for name, model in (models or {}).items():
            (scratch / "models").mkdir(exist_ok=True)
            save_model(model, scratch / "models" / f"{name}.json")
        written = []
        for path in sorted(scratch.rglob("*")):
            if path.is_file():
                dest = out / path.relative_to(scratch)
                dest.parent.mkdir(parents=True, exist_ok=True)
                os.replace(path, dest)
                written.append(dest)
        return written
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def emit_report(report: RunReport, out_dir, save_models: bool = True) -> list[Path]:
    return write_files(report_files(report), out_dir, report.models if save_models else None)


def write_timings(report: RunReport, path) -> None:
    Path(path).write_text(json.dumps(report.timings, indent=1, sort_keys=True) + "\n",
                          encoding="utf-8")


def manifest(report: RunReport) -> str:
    """What ``evaluate`` needs to score the saved models again."""
    return json.dumps({"features": list(report.selected), "classifiers": list(report.models),
                       "threshold": report.threshold}, indent=1, sort_keys=True) + "\n"


def evaluate_saved(cfg: PipelineConfig, model_dir) -> RunReport:
    """Re-derive the held-out split from ``cfg`` and score saved models on it."""
    report = RunReport(threshold=cfg.threshold)
    stages = _Stages(report)
    model_dir = Path(model_dir)
    try:
        info = json.loads((model_dir / "manifest.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise StageError("evaluate", ChdError(f"no usable manifest in {model_dir}: {exc}")) from exc
    raw = stages("load", _load, cfg)
    data = stages("clean", dc.clean, raw, cfg.clean_policy)
    split = stages("split", dc.stratified_split, data, cfg.ratio, cfg.seed)
    test = split.test.select(info["features"])
    report.selected = list(info["features"])
    report.models = {n: stages("evaluate", load_model, model_dir / "models" / f"{n}.json")
                     for n in info["classifiers"]}
    report.threshold = info["threshold"]
    report.rows = stages("evaluate", evaluate_models, report.models, test, report.threshold)
    report.n_train, report.n_test = len(split.train), len(split.test)
    return report


# ----------------------------------------------------------------------------
# imaging demonstration


def synthetic_image(size: int = 32, seed: int = 0) -> im.Volume:
    """8-bit BGR image: a few Gaussian blobs per channel plus mild noise."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size, 3))
    for c in range(3):
        for _ in range(3):
            cy, cx = rng.uniform(0, size, 2)
            width = rng.uniform(size / 8, size / 3)
            img[..., c] += rng.uniform(60, 160) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
    img += rng.normal(0, 4, img.shape)
    return im.Volume(np.clip(np.round(img), 0, 255), "BGR")


def synthetic_volume(shape=(8, 16, 16), seed: int = 0) -> im.Volume:
    """Noisy 3-D scan with one bright ellipsoid, for the segmentation mask."""
    rng = np.random.default_rng(seed)
    d, h, w = shape
    zz, yy, xx = np.mgrid[0:d, 0:h, 0:w].astype(np.float64)
    blob = ((zz - d / 2) / (d / 3)) ** 2 + ((yy - h / 2) / (h / 3)) ** 2 + ((xx - w / 2) / (w / 3)) ** 2
    vol = (blob <= 1).astype(np.float64) + rng.normal(0, 0.2, shape)
    return im.Volume(vol[..., None])


def demo_imaging(cfg: ImagingConfig, out_dir=None) -> dict:
    """Green channel, sparse decomposition, frozen conv features and fusion on
    synthetic data.  Returns the computed pieces and the printable lines."""
    image = synthetic_image(cfg.size, cfg.seed)
    green = im.extract_channel(image, "green")
    dictionary = im.dct_dictionary(cfg.patch, 2 * cfg.patch)
    csid = im.csid_decompose(green, dictionary, cfg.k, cfg.tau, (cfg.patch, cfg.patch))
    exact = bool(np.array_equal(csid.sparse + csid.residual, green.plane))

    stack = im.random_stack(1, cfg.widths, kernel=3, seed=cfg.seed, depth_kernel=1)
    parts = [
        im.transfer_features(green, stack, cfg.cut_index, "green"),
        im.transfer_features(im.Volume(csid.sparse), stack, cfg.cut_index, "sparse"),
        im.transfer_features(im.Volume(csid.residual), stack, cfg.cut_index, "residual"),
    ]
    fused = im.fuse_concat(parts)

    scan = synthetic_volume(seed=cfg.seed)
    smooth = im.ConvLayerSpec(np.full((1, 3, 3, 3, 1), 1.0 / 27.0), [0.0], "identity")
    response = im.conv3d_forward(scan, smooth)
    mask = im.threshold_mask(response, cfg.mask_level)

    worst = 0.0
    for layer, vol in ((smooth, scan), (stack[0], green)):
        fast = im.conv3d_forward(vol, layer).data
        slow = im.conv3d_bruteforce(vol, layer)
        scale = np.maximum(np.abs(slow), 1e-300)
        worst = max(worst, float(np.max(np.abs(fast - slow) / scale, where=slow != 0, initial=0.0)))

    lines = [
        f"green plane: {green.plane.shape[0]}x{green.plane.shape[1]}, channel index 1 of {image.channel_order}",
        f"sparse coding: {len(csid.codes)} patches, k={cfg.k}, tau={cfg.tau}, "
        f"mean nonzeros {np.mean([len(c.indices) for c in csid.codes]):.2f}",
        "sparse + residual == input: " + ("exact" if exact else "NOT exact"),
        f"fused feature vector: {len(fused)} values from {[s for s, _, _ in fused.segments]}",
        f"segmentation mask: {int(mask.data.sum())} of {mask.data.size} voxels",
        f"conv oracle: max rel err {worst:.3e} ({'ok' if worst <= 1e-9 else 'FAIL'})",
    ]
    result = {"image": image, "green": green, "csid": csid, "exact": exact, "fused": fused,
              "mask": mask, "oracle_max_rel_err": worst, "lines": lines}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        im.write_volume(green, out / "green.vol")
        im.write_volume(im.Volume(csid.sparse), out / "sparse.vol")
        im.write_volume(im.Volume(csid.residual), out / "residual.vol")
        im.write_volume(mask, out / "mask.vol")
        (out / "fused_features.txt").write_text(
            "".join(f"{src} {float(v)!r}\n" for src, a, b in fused.segments for v in fused.values[a:b]),
            encoding="utf-8")
        (out / "imaging_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return result
