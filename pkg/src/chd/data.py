"""Tabular clinical data: schema, CSV ingestion, cleaning, splitting and EDA.

A :class:`Dataset` keeps every feature in one float matrix.  Numeric features
hold their values, categorical features hold the integer code of their level
(index into :attr:`FeatureSpec.levels`), and missing cells are ``NaN``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import CleaningError, ParameterError, ParseError, SchemaError, SplitError

NUMERIC = "numeric"
CATEGORICAL = "categorical"
MISSING_MARKERS = ("?", "")


@dataclass(frozen=True)
class FeatureSpec:
    """Declaration of one input column.

    ``minimum``/``maximum`` are inclusive bounds unless ``exclusive_minimum``
    is set.  ``levels`` lists the accepted CSV spellings of a categorical.
    """

    name: str
    kind: str = NUMERIC
    levels: tuple[str, ...] = ()
    minimum: float | None = None
    maximum: float | None = None
    exclusive_minimum: bool = False

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ParameterError(f"unknown feature kind {self.kind!r}")
        if self.kind == CATEGORICAL and not self.levels:
            raise ParameterError(f"categorical feature {self.name!r} needs levels")
        if len(set(self.levels)) != len(self.levels):
            raise ParameterError(f"duplicate levels for {self.name!r}")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def check(self, value: float) -> bool:
        if self.is_categorical:
            return 0 <= value < len(self.levels) and float(value).is_integer()
        if self.minimum is not None:
            if value < self.minimum or (self.exclusive_minimum and value == self.minimum):
                return False
        if self.maximum is not None and value > self.maximum:
            return False
        return True


@dataclass(frozen=True)
class Schema:
    features: tuple[FeatureSpec, ...]
    label: str = "num"

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        if self.label in names:
            raise SchemaError(f"label column {self.label!r} clashes with a feature")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def kinds(self) -> dict[str, str]:
        return {f.name: f.kind for f in self.features}

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"no feature named {name!r}") from None

    def subset(self, names: Sequence[str]) -> "Schema":
        return Schema(tuple(self.features[self.index(n)] for n in names), self.label)


CHEST_PAIN_LEVELS = ("typical_angina", "atypical_angina", "non_anginal", "asymptomatic")

HEART_SCHEMA = Schema(
    (
        FeatureSpec("age", minimum=1, maximum=130),
        FeatureSpec("sex", CATEGORICAL, ("0", "1")),
        FeatureSpec("chest_pain", CATEGORICAL, CHEST_PAIN_LEVELS),
        FeatureSpec("resting_bp", minimum=0, exclusive_minimum=True),
        FeatureSpec("cholesterol", minimum=0, exclusive_minimum=True),
        FeatureSpec("fasting_blood_sugar", CATEGORICAL, ("0", "1")),
        FeatureSpec("resting_ecg", CATEGORICAL, ("0", "1", "2")),
        FeatureSpec("max_heart_rate", minimum=0, exclusive_minimum=True),
        FeatureSpec("exercise_angina", CATEGORICAL, ("0", "1")),
        FeatureSpec("st_depression", minimum=0),
        FeatureSpec("st_slope", CATEGORICAL, ("1", "2", "3")),
        FeatureSpec("major_vessels", minimum=0, maximum=4),
        FeatureSpec("thal", CATEGORICAL, ("normal", "fixed_defect", "reversible_defect")),
    ),
    label="num",
)
"""The 13-feature heart schema; ``num`` > 0 is read as disease present."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of records with binary labels."""

    schema: Schema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            X = X.reshape(len(self.y), len(self.schema.features))
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if X.shape != (len(y), len(self.schema.features)):
            raise SchemaError(
                f"matrix shape {X.shape} does not match {len(y)} labels x "
                f"{len(self.schema.features)} features"
            )
        if y.size and not np.isin(y, (0, 1)).all():
            raise SchemaError("labels must be 0 or 1")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))

    @classmethod
    def from_arrays(cls, X, y, names=None, kinds=None, label="label") -> "Dataset":
        """Wrap plain arrays; categorical columns must already hold codes 0..L-1."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        p = X.shape[1]
        names = list(names) if names is not None else [f"x{j}" for j in range(p)]
        kinds = kinds or {}
        feats = []
        for j, name in enumerate(names):
            kind = kinds.get(name, NUMERIC)
            if kind == CATEGORICAL:
                col = X[:, j][~np.isnan(X[:, j])]
                n_levels = int(col.max()) + 1 if col.size else 1
                feats.append(FeatureSpec(name, CATEGORICAL, tuple(str(i) for i in range(n_levels))))
            else:
                feats.append(FeatureSpec(name))
        return cls(Schema(tuple(feats), label), X, y)

    def __len__(self) -> int:
        return len(self.y)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X, equal_nan=True)
            and np.array_equal(self.y, other.y)
        )

    __hash__ = None

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.schema.names

    @property
    def feature_kinds(self) -> dict[str, str]:
        return self.schema.kinds

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([f.is_categorical for f in self.schema.features], dtype=bool)

    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.X)

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.schema, self.X[rows], self.y[rows])

    def select(self, names: Sequence[str]) -> "Dataset":
        """Keep only the named feature columns, in the given order."""
        cols = [self.schema.index(n) for n in names]
        return Dataset(self.schema.subset(names), self.X[:, cols], self.y)

    def record(self, i: int) -> dict:
        """Row ``i`` as ``{name: value}`` with decoded levels and ``None`` for gaps."""
        out = {}
        for j, spec in enumerate(self.schema.features):
            v = self.X[i, j]
            if math.isnan(v):
                out[spec.name] = None
            elif spec.is_categorical:
                out[spec.name] = spec.levels[int(v)]
            else:
                out[spec.name] = float(v)
        out["label"] = int(self.y[i])
        return out

    def records(self) -> Iterator[dict]:
        for i in range(len(self)):
            yield self.record(i)


# ----------------------------------------------------------------------------
# CSV


def _parse_cell(text: str, spec: FeatureSpec, row: int) -> float:
    text = text.strip()
    if text in MISSING_MARKERS:
        return math.nan
    if spec.is_categorical:
        try:
            return float(spec.levels.index(text))
        except ValueError:
            raise SchemaError(
                f"row {row}: unknown value {text!r} for categorical {spec.name!r}"
            ) from None
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric value {text!r} in column {spec.name!r}", row) from None
    if not math.isfinite(value) or not spec.check(value):
        raise SchemaError(f"row {row}: value {value} out of range for {spec.name!r}")
    return value


def _parse_label(text: str, row: int) -> int:
    text = text.strip()
    if text in MISSING_MARKERS:
        raise ParseError("missing label", row)
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric label {text!r}", row) from None
    if not math.isfinite(value) or value < 0:
        raise SchemaError(f"row {row}: invalid label {text!r}")
    return int(value > 0)


def read_csv(stream, schema: Schema = HEART_SCHEMA) -> Dataset:
    """Parse CSV text from an open stream. Row numbers count the header as row 1."""
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("file has no header row") from None
    expected = set(schema.names) | {schema.label}
    if set(header) != expected or len(header) != len(expected):
        missing = sorted(expected - set(header))
        extra = sorted(set(header) - expected)
        raise SchemaError(f"header mismatch: missing {missing}, unexpected {extra}")
    positions = [header.index(n) for n in schema.names]
    label_pos = header.index(schema.label)

    rows, labels = [], []
    for row_no, cells in enumerate(reader, start=2):
        if not cells:
            continue
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(cells)}", row_no)
        rows.append(
            [_parse_cell(cells[p], spec, row_no) for p, spec in zip(positions, schema.features)]
        )
        labels.append(_parse_label(cells[label_pos], row_no))
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(schema.features))
    return Dataset(schema, X, np.array(labels, dtype=np.int64))


def load_csv(path, schema: Schema = HEART_SCHEMA) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_csv(fh, schema)


def _format_number(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def dumps_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(dataset.feature_names) + [dataset.schema.label])
    for row, label in zip(dataset.X, dataset.y):
        cells = []
        for v, spec in zip(row, dataset.schema.features):
            if math.isnan(v):
                cells.append("?")
            elif spec.is_categorical:
                cells.append(spec.levels[int(v)])
            else:
                cells.append(_format_number(v))
        writer.writerow(cells + [str(int(label))])
    return buf.getvalue()


def write_csv(dataset: Dataset, path) -> None:
    Path(path).write_text(dumps_csv(dataset), encoding="utf-8")


# ----------------------------------------------------------------------------
# Cleaning


def _column_mode(col: np.ndarray) -> float:
    values, counts = np.unique(col, return_counts=True)
    return float(values[np.argmax(counts)])  # ties -> smallest code


def clean(dataset: Dataset, policy: str = "median_mode") -> Dataset:
    """Fill or drop missing cells, then remove exact duplicate records.

    ``median_mode`` fills numeric gaps with the median of the observed values
    and categorical gaps with the most frequent level (ties go to the lowest
    code).  ``drop_row`` discards every record that has a gap.  Deduplication
    keeps the first occurrence.
    """
    if policy not in ("median_mode", "drop_row"):
        raise ParameterError(f"unknown imputation policy {policy!r}")
    X = np.array(dataset.X, copy=True)
    y = dataset.y
    if len(dataset):
        missing = np.isnan(X)
        empty = missing.all(axis=0)
        if empty.any():
            names = [dataset.feature_names[j] for j in np.flatnonzero(empty)]
            raise CleaningError(f"column(s) entirely missing: {names}")
        if policy == "drop_row":
            keep = ~missing.any(axis=1)
            X, y = X[keep], y[keep]
        else:
            for j, spec in enumerate(dataset.schema.features):
                gaps = missing[:, j]
                if gaps.any():
                    observed = X[~gaps, j]
                    fill = _column_mode(observed) if spec.is_categorical else float(np.median(observed))
                    X[gaps, j] = fill

    if len(y):
        rows = np.column_stack([X, y.astype(np.float64)])
        _, first = np.unique(rows, axis=0, return_index=True)
        keep = np.sort(first)
        X, y = X[keep], y[keep]
    return Dataset(dataset.schema, X, y)


# ----------------------------------------------------------------------------
# Splitting


@dataclass(frozen=True)
class TrainTestSplit:
    train: Dataset
    test: Dataset
    ratio: float
    seed: int
    train_index: np.ndarray = field(repr=False)
    test_index: np.ndarray = field(repr=False)


def stratified_split(dataset: Dataset, ratio: float = 0.8, seed: int = 0) -> TrainTestSplit:
    """Per-class seeded shuffle; ``floor(ratio * class_count)`` of each class trains.

    Classes are visited in ascending label order from a single generator, and
    both index sets are returned in ascending record order.
    """
    if not 0 < ratio < 1:
        raise ParameterError(f"ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in (0, 1):
        members = np.flatnonzero(dataset.y == label)
        if len(members) < 2:
            raise SplitError(f"class {label} has {len(members)} record(s); need at least 2")
        members = rng.permutation(members)
        n_train = math.floor(ratio * len(members))
        train_idx.append(members[:n_train])
        test_idx.append(members[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return TrainTestSplit(
        dataset.take(train_idx), dataset.take(test_idx), ratio, seed, train_idx, test_idx
    )


# ----------------------------------------------------------------------------
# Exploratory statistics


@dataclass(frozen=True)
class EdaReport:
    n_records: int
    class_counts: dict[int, int]
    class_proportions: dict[int, float]
    sex_by_label: np.ndarray | None = None
    age_scatter: tuple[tuple[float, int], ...] = ()
    chest_pain_by_label: np.ndarray | None = None
    chest_pain_levels: tuple[str, ...] = CHEST_PAIN_LEVELS

    def to_text(self) -> str:
        lines = ["Exploratory data analysis", f"records: {self.n_records}", ""]
        lines.append("Disease status")
        for label, name in ((1, "present"), (0, "absent")):
            lines.append(
                f"  {name:<8} {self.class_counts[label]:>6}  "
                f"{format_percent(self.class_proportions[label], 1)}%"
            )
        if self.sex_by_label is not None:
            lines += ["", "Sex by label (rows: sex, columns: label 0 / 1)"]
            for sex, name in enumerate(("female", "male")):
                a, b = self.sex_by_label[sex]
                lines.append(f"  {name:<8} {a:>6} {b:>6}")
        if self.chest_pain_by_label is not None:
            lines += ["", "Chest pain type by label (columns: label 0 / 1)"]
            for level, (a, b) in zip(self.chest_pain_levels, self.chest_pain_by_label):
                lines.append(f"  {level:<16} {a:>6} {b:>6}")
        if self.age_scatter:
            ages = [a for a, _ in self.age_scatter]
            lines += ["", f"Age range: {_format_number(min(ages))} to {_format_number(max(ages))}"]
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        """One ``name=value`` pair per line for plot tooling."""
        items = [("n_records", self.n_records)]
        for label in (0, 1):
            items.append((f"class_count_{label}", self.class_counts[label]))
        for label in (0, 1):
            items.append((f"class_proportion_{label}", repr(self.class_proportions[label])))
        if self.sex_by_label is not None:
            for sex in (0, 1):
                for label in (0, 1):
                    items.append((f"sex_{sex}_label_{label}", int(self.sex_by_label[sex, label])))
        if self.chest_pain_by_label is not None:
            for i, level in enumerate(self.chest_pain_levels):
                for label in (0, 1):
                    items.append(
                        (f"chest_pain_{level}_label_{label}", int(self.chest_pain_by_label[i, label]))
                    )
        return "".join(f"{k}={v}\n" for k, v in items)


def format_percent(fraction: float, digits: int = 2) -> str:
    return f"{100.0 * fraction:.{digits}f}"


def _cross_table(codes: np.ndarray, y: np.ndarray, n_levels: int) -> np.ndarray:
    ok = ~np.isnan(codes)
    table = np.zeros((n_levels, 2), dtype=np.int64)
    np.add.at(table, (codes[ok].astype(np.int64), y[ok]), 1)
    return table


def eda_report(dataset: Dataset) -> EdaReport:
    """Exact counts behind the class-balance, sex, age and chest-pain plots.

    Tables are built only for columns present in the schema under their
    canonical names (``sex``, ``age``, ``chest_pain``).
    """
    n = len(dataset)
    if n == 0:
        raise ParameterError("EDA needs a non-empty dataset")
    counts = {label: int(np.sum(dataset.y == label)) for label in (0, 1)}
    proportions = {label: counts[label] / n for label in (0, 1)}
    names = dataset.feature_names

    sex = chest = None
    scatter: tuple = ()
    levels = CHEST_PAIN_LEVELS
    if "sex" in names:
        sex = _cross_table(dataset.X[:, names.index("sex")], dataset.y, 2)
    if "chest_pain" in names:
        spec = dataset.schema.features[names.index("chest_pain")]
        levels = spec.levels
        chest = _cross_table(dataset.X[:, names.index("chest_pain")], dataset.y, len(levels))
    if "age" in names:
        ages = dataset.X[:, names.index("age")]
        scatter = tuple(
            (float(a), int(label)) for a, label in zip(ages, dataset.y) if not math.isnan(a)
        )
    return EdaReport(n, counts, proportions, sex, scatter, chest, levels)


# ----------------------------------------------------------------------------
# Bundled and synthetic fixtures

HEART_FIXTURE = "heart500.csv"


def load_heart_fixture() -> Dataset:
    """The bundled 500-record synthetic heart table (127 positive)."""
    text = resources.files("chd.fixtures").joinpath(HEART_FIXTURE).read_text(encoding="utf-8")
    return read_csv(io.StringIO(text), HEART_SCHEMA)


def make_heart_fixture(n: int = 500, n_positive: int = 127, seed: int = 2023,
                       n_missing: int = 6) -> Dataset:
    """Generate a synthetic heart table with an exact class balance.

    Feature distributions shift with the label so that classifiers have
    something to learn; a few cells are blanked to exercise cleaning.
    """
    if not 0 < n_positive < n:
        raise ParameterError("need at least one record of each class")
    rng = np.random.default_rng(seed)
    y = np.zeros(n, dtype=np.int64)
    y[rng.choice(n, size=n_positive, replace=False)] = 1
    pos = y == 1

    def mix(p_neg, p_pos):
        p = np.where(pos[:, None], np.asarray(p_pos)[None, :], np.asarray(p_neg)[None, :])
        u = rng.random(n)[:, None]
        return (u > np.cumsum(p, axis=1)).sum(axis=1).astype(np.float64)

    age = np.clip(np.round(rng.normal(np.where(pos, 57, 51), 8.5)), 29, 80)
    sex = mix([0.42, 0.58], [0.18, 0.82])
    chest = mix([0.10, 0.27, 0.38, 0.25], [0.05, 0.10, 0.16, 0.69])
    bp = np.round(rng.normal(np.where(pos, 136, 129), 17)).clip(90, 200)
    chol = np.round(rng.normal(np.where(pos, 252, 238), 48)).clip(120, 560)
    fbs = mix([0.86, 0.14], [0.82, 0.18])
    ecg = mix([0.55, 0.02, 0.43], [0.42, 0.03, 0.55])
    hr = np.round(rng.normal(np.where(pos, 138, 158), 20)).clip(70, 202)
    ex_angina = mix([0.85, 0.15], [0.45, 0.55])
    oldpeak = np.round(np.abs(rng.normal(np.where(pos, 1.6, 0.6), 1.0)), 1)
    slope = mix([0.62, 0.32, 0.06], [0.25, 0.65, 0.10])
    vessels = mix([0.78, 0.13, 0.06, 0.03, 0.0], [0.30, 0.32, 0.22, 0.14, 0.02])
    thal = mix([0.79, 0.04, 0.17], [0.28, 0.09, 0.63])
    X = np.column_stack(
        [age, sex, chest, bp, chol, fbs, ecg, hr, ex_angina, oldpeak, slope, vessels, thal]
    )
    if n_missing:
        cells = rng.choice(n * X.shape[1], size=n_missing, replace=False)
        X.flat[cells] = np.nan
    return Dataset(HEART_SCHEMA, X, y)


def make_informative_noise(n: int = 200, n_noise: int = 9, seed: int = 0,
                           gap: float = 0.5) -> Dataset:
    """Balanced binary data: feature 0 separates the classes, the rest are noise.

    The informative column is ``label + gap * U(0,1)`` shifted so the two
    classes never overlap; noise columns are i.i.d. uniform.
    """
    rng = np.random.default_rng(seed)
    y = np.zeros(n, dtype=np.int64)
    y[rng.permutation(n)[: n // 2]] = 1
    informative = y + gap * rng.random(n)
    noise = rng.random((n, n_noise))
    names = ["informative"] + [f"noise{j}" for j in range(1, n_noise + 1)]
    return Dataset.from_arrays(np.column_stack([informative, noise]), y, names)
