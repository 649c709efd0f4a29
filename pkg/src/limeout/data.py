"""Tabular data handling: CSV ingestion, label encoding, splitting, SMOTE,
per-feature statistics and feature association."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

CATEGORICAL = "categorical"
NUMERICAL = "numerical"
MISSING = "?"


class ParseError(ValueError):
    pass


class SchemaError(ValueError):
    pass


class BalanceError(ValueError):
    pass


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered features, the target column and categorical encodings.

    ``encodings[name]`` lists the raw values of a categorical feature in code
    order, so ``encodings[name][code]`` decodes and ``index`` encodes.
    ``target_values`` holds the raw label strings for classes 0 and 1.
    """

    features: tuple[Feature, ...]
    target: str
    encodings: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    target_values: tuple[str, str] = ("0", "1")

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names")
        if self.target in names:
            raise SchemaError(f"target {self.target!r} listed among features")
        for f in self.features:
            if f.kind not in (CATEGORICAL, NUMERICAL):
                raise SchemaError(f"feature {f.name!r}: unknown kind {f.kind!r}")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(name)

    def kind(self, name: str) -> str:
        return self.features[self.index(name)].kind

    def is_categorical(self) -> np.ndarray:
        return np.array([f.kind == CATEGORICAL for f in self.features])

    def cardinality(self, name: str) -> int:
        return len(self.encodings.get(name, ()))

    def encode(self, name: str, value: str) -> int:
        return self.encodings[name].index(value)

    def decode(self, name: str, code: int) -> str:
        return self.encodings[name][int(code)]

    def without(self, dropped: Iterable[str]) -> "FeatureSchema":
        dropped = set(dropped)
        unknown = dropped - set(self.names)
        if unknown:
            raise KeyError(f"unknown features: {sorted(unknown)}")
        return replace(
            self,
            features=tuple(f for f in self.features if f.name not in dropped),
            encodings={k: v for k, v in self.encodings.items() if k not in dropped},
        )

    def to_dict(self) -> dict:
        return {
            "features": [[f.name, f.kind] for f in self.features],
            "target": self.target,
            "target_values": list(self.target_values),
            "encodings": {k: list(v) for k, v in self.encodings.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSchema":
        return cls(
            features=tuple(Feature(n, k) for n, k in d["features"]),
            target=d["target"],
            encodings={k: tuple(v) for k, v in d["encodings"].items()},
            target_values=tuple(d["target_values"]),
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Encoded rows (categorical codes stored as floats) plus 0/1 labels."""

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        # C order keeps column reductions bit-identical across subsets and drops
        X = np.ascontiguousarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != len(self.schema.features):
            raise SchemaError(
                f"rows must have {len(self.schema.features)} entries, got shape {X.shape}"
            )
        if y.shape != (X.shape[0],):
            raise SchemaError("label count does not match row count")
        if not np.isin(y, (0, 1)).all():
            raise SchemaError("labels must be 0 or 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def feature_names(self) -> list[str]:
        return self.schema.names

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.schema.index(name)]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.schema, self.X[rows], self.y[rows])

    def drop(self, dropped: Iterable[str]) -> "Dataset":
        dropped = set(dropped)
        keep = [i for i, n in enumerate(self.schema.names) if n not in dropped]
        return Dataset(self.schema.without(dropped), self.X[:, keep], self.y)

    def concat(self, other: "Dataset") -> "Dataset":
        if other.schema != self.schema:
            raise SchemaError("cannot concatenate datasets with different schemas")
        return Dataset(self.schema, np.vstack([self.X, other.X]),
                       np.concatenate([self.y, other.y]))

    def class_counts(self) -> tuple[int, int]:
        ones = int(self.y.sum())
        return len(self) - ones, ones

    def decode(self) -> list[list[str]]:
        """Raw strings for every row, target last; inverse of :func:`load_csv`."""
        out = []
        for row, label in zip(self.X, self.y):
            values = []
            for f, v in zip(self.schema.features, row):
                if f.kind == CATEGORICAL:
                    values.append(self.schema.decode(f.name, v))
                else:
                    values.append(_format_number(v))
            values.append(self.schema.target_values[label])
            out.append(values)
        return out


def _format_number(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def load_schema_hint(path) -> dict:
    """Read a JSON hint: ``{"columns": {name: kind|"target"}, "positive": label}``."""
    with open(path) as fh:
        hint = json.load(fh)
    if "columns" not in hint:
        raise SchemaError(f"{path}: schema hint needs a 'columns' mapping")
    kinds = set(hint["columns"].values())
    if not kinds <= {CATEGORICAL, NUMERICAL, "target"}:
        raise SchemaError(f"{path}: unknown column kinds {sorted(kinds)}")
    if list(hint["columns"].values()).count("target") != 1:
        raise SchemaError(f"{path}: exactly one column must be the target")
    return hint


def load_csv(path, schema_hint=None) -> Dataset:
    """Load a headered CSV into an encoded :class:`Dataset`.

    ``schema_hint`` is either a hint mapping (see :func:`load_schema_hint`),
    a path to one, or a :class:`FeatureSchema` whose encodings are reused and
    extended. Without a hint, the last column is the target and a column is
    numerical when every value parses as a float. Rows containing the missing
    marker ``?`` are dropped.
    """
    path = Path(path)
    if isinstance(schema_hint, (str, Path)):
        schema_hint = load_schema_hint(schema_hint)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file, header row expected") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            row = [v.strip() for v in row]
            if MISSING in row:
                continue
            rows.append((lineno, row))

    kinds, target, positive, encodings = _resolve_columns(header, rows, schema_hint)
    feature_cols = [i for i, h in enumerate(header) if h != target]
    t_col = header.index(target)

    X = np.empty((len(rows), len(feature_cols)))
    enc = {h: list(encodings.get(h, ())) for h in header if kinds.get(h) == CATEGORICAL}
    lookup = {h: {v: c for c, v in enumerate(vals)} for h, vals in enc.items()}
    for r, (lineno, row) in enumerate(rows):
        for j, c in enumerate(feature_cols):
            name, value = header[c], row[c]
            if kinds[name] == NUMERICAL:
                try:
                    X[r, j] = float(value)
                except ValueError:
                    raise ParseError(
                        f"{path}: line {lineno}: column {name!r}: "
                        f"cannot parse {value!r} as a number"
                    ) from None
            else:
                code = lookup[name].get(value)
                if code is None:
                    code = lookup[name][value] = len(enc[name])
                    enc[name].append(value)
                X[r, j] = code

    labels = [row[t_col] for _, row in rows]
    target_values = _target_values(labels, positive, target)
    y = np.array([target_values.index(v) for v in labels], dtype=np.int64)

    schema = FeatureSchema(
        features=tuple(Feature(header[c], kinds[header[c]]) for c in feature_cols),
        target=target,
        encodings={h: tuple(v) for h, v in enc.items()},
        target_values=target_values,
    )
    return Dataset(schema, X, y)


def _resolve_columns(header, rows, hint):
    if isinstance(hint, FeatureSchema):
        kinds = {f.name: f.kind for f in hint.features}
        target, positive = hint.target, hint.target_values[1]
        encodings = dict(hint.encodings)
    elif hint is not None:
        cols = hint["columns"]
        target = next(n for n, k in cols.items() if k == "target")
        kinds = {n: k for n, k in cols.items() if k != "target"}
        positive = hint.get("positive")
        encodings = {}
    else:
        target, positive, encodings = header[-1], None, {}
        kinds = {}
        for c, name in enumerate(header[:-1]):
            try:
                for _, row in rows:
                    float(row[c])
                kinds[name] = NUMERICAL
            except ValueError:
                kinds[name] = CATEGORICAL

    missing = [h for h in list(kinds) + [target] if h not in header]
    if missing:
        raise SchemaError(f"columns missing from CSV header: {missing}")
    extra = [h for h in header if h not in kinds and h != target]
    if extra:
        raise SchemaError(f"CSV columns not covered by schema: {extra}")
    return kinds, target, positive, encodings


def _target_values(labels, positive, target) -> tuple[str, str]:
    distinct = sorted(set(labels))
    if len(distinct) > 2:
        raise SchemaError(f"target {target!r} is not binary: {distinct[:5]}")
    if positive is not None:
        if positive not in distinct and len(distinct) == 2:
            raise SchemaError(f"positive label {positive!r} absent from target {target!r}")
        negatives = [v for v in distinct if v != positive]
        return (negatives[0] if negatives else "0", positive)
    if set(distinct) <= {"0", "1"}:
        return ("0", "1")
    if len(distinct) == 1:
        return (distinct[0], "")
    return (distinct[0], distinct[1])


def train_test_split(d: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded row partition with ``round(test_fraction * N)`` test rows.

    Both parts keep the original row order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(d)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    n_test = int(np.floor(test_fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return d.subset(train_idx), d.subset(test_idx)


def smote_oversample(train: Dataset, k_neighbors: int = 5, seed: int = 0) -> Dataset:
    """Balance classes by SMOTE interpolation within the minority class.

    Neighbours use Euclidean distance over std-scaled numerical features plus
    one unit of squared distance per categorical mismatch. Synthetic rows
    interpolate numerical values between a seed row and one of its k nearest
    minority neighbours and copy the seed row's categorical codes. Original
    rows come first, unchanged; synthetic rows are appended.
    """
    n0, n1 = train.class_counts()
    if n0 == 0 or n1 == 0:
        raise BalanceError("SMOTE needs both classes present")
    minority = 0 if n0 < n1 else 1
    n_min, n_new = min(n0, n1), abs(n0 - n1)
    if n_new == 0:
        return train
    if k_neighbors < 1 or n_min <= k_neighbors:
        raise ValueError(
            f"minority class has {n_min} rows; need more than k_neighbors={k_neighbors}"
        )

    X_min = train.X[train.y == minority]
    cat = train.schema.is_categorical()
    space = _neighbour_space(X_min, cat, train.schema)
    _, nbrs = cKDTree(space).query(space, k=k_neighbors + 1)
    # column 0 is normally the point itself; drop self wherever it appears
    neighbours = np.empty((n_min, k_neighbors), dtype=np.int64)
    for i, row in enumerate(nbrs):
        others = row[row != i]
        neighbours[i] = others[:k_neighbors]

    rng = np.random.default_rng(seed)
    base = rng.integers(0, n_min, size=n_new)
    pick = neighbours[base, rng.integers(0, k_neighbors, size=n_new)]
    gap = rng.random(n_new)[:, None]
    synth = X_min[base].copy()
    num = ~cat
    synth[:, num] = X_min[base][:, num] + gap * (X_min[pick][:, num] - X_min[base][:, num])

    X = np.vstack([train.X, synth])
    y = np.concatenate([train.y, np.full(n_new, minority)])
    return Dataset(train.schema, X, y)


def _neighbour_space(X, cat, schema):
    parts = []
    num = X[:, ~cat]
    std = num.std(axis=0)
    std[std == 0] = 1.0
    parts.append(num / std)
    for j in np.flatnonzero(cat):
        card = max(schema.cardinality(schema.features[j].name), int(X[:, j].max()) + 1)
        onehot = np.zeros((X.shape[0], card))
        onehot[np.arange(X.shape[0]), X[:, j].astype(int)] = np.sqrt(0.5)
        parts.append(onehot)
    return np.hstack(parts)


@dataclass(frozen=True)
class FeatureStats:
    """Training-set summaries used for discretisation and sampling.

    Numerical features carry mean, std (ddof=0), min, max and the raw
    ``p - 1`` quantile cut points; categorical features carry the empirical
    frequency of every code in ``[0, cardinality)``.
    """

    schema: FeatureSchema
    p_quantiles: int
    mean: Mapping[str, float]
    std: Mapping[str, float]
    minimum: Mapping[str, float]
    maximum: Mapping[str, float]
    boundaries: Mapping[str, tuple[float, ...]]
    frequencies: Mapping[str, tuple[float, ...]]
    degenerate: frozenset = frozenset()


def compute_stats(train: Dataset, p_quantiles: int = 4) -> FeatureStats:
    if len(train) == 0:
        raise ValueError("cannot compute statistics of an empty dataset")
    if p_quantiles < 2:
        raise ValueError("p_quantiles must be at least 2")
    mean, std, lo, hi, bounds, freqs = {}, {}, {}, {}, {}, {}
    degenerate = set()
    probs = np.arange(1, p_quantiles) / p_quantiles
    for j, f in enumerate(train.schema.features):
        col = train.X[:, j]
        if f.kind == NUMERICAL:
            mean[f.name] = float(col.mean())
            std[f.name] = float(col.std())
            lo[f.name], hi[f.name] = float(col.min()), float(col.max())
            if lo[f.name] == hi[f.name]:
                degenerate.add(f.name)
                bounds[f.name] = (lo[f.name],) * (p_quantiles - 1)
            else:
                bounds[f.name] = tuple(float(q) for q in np.quantile(col, probs))
        else:
            card = max(train.schema.cardinality(f.name), int(col.max()) + 1)
            counts = np.bincount(col.astype(int), minlength=card)
            freqs[f.name] = tuple(float(c) for c in counts / counts.sum())
            if np.count_nonzero(counts) == 1:
                degenerate.add(f.name)
    return FeatureStats(train.schema, p_quantiles, mean, std, lo, hi, bounds, freqs,
                        frozenset(degenerate))


def association(a: np.ndarray, b: np.ndarray, a_cat: bool, b_cat: bool) -> float:
    """|Pearson r| for two numerical columns, Cramer's V otherwise.

    Numerical columns entering Cramer's V are binned at their quartiles.
    """
    if not a_cat and not b_cat:
        if a.std() == 0 or b.std() == 0:
            return 0.0
        return float(abs(np.corrcoef(a, b)[0, 1]))
    return cramers_v(_as_levels(a, a_cat), _as_levels(b, b_cat))


def _as_levels(col, is_cat):
    if is_cat:
        return col.astype(int)
    edges = np.unique(np.quantile(col, [0.25, 0.5, 0.75]))
    return np.searchsorted(edges, col, side="left")


def cramers_v(a: np.ndarray, b: np.ndarray) -> float:
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    r, c = ai.max() + 1, bi.max() + 1
    if min(r, c) < 2:
        return 0.0
    table = np.zeros((r, c))
    np.add.at(table, (ai, bi), 1)
    n = table.sum()
    expected = table.sum(1, keepdims=True) * table.sum(0, keepdims=True) / n
    chi2 = ((table - expected) ** 2 / expected).sum()
    return float(np.sqrt(chi2 / (n * (min(r, c) - 1))))


def correlated_features(d: Dataset, targets: Iterable[str], threshold: float = 0.85,
                        tol: float = 1e-12) -> set[str]:
    """Non-target features whose association with some target reaches ``threshold``."""
    targets = set(targets)
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    unknown = targets - set(d.feature_names)
    if unknown:
        raise KeyError(f"unknown features: {sorted(unknown)}")
    cat = d.schema.is_categorical()
    found = set()
    for t in sorted(targets, key=d.schema.index):
        ti = d.schema.index(t)
        for j, name in enumerate(d.feature_names):
            if name in targets or name in found:
                continue
            if association(d.X[:, ti], d.X[:, j], cat[ti], cat[j]) >= threshold - tol:
                found.add(name)
    return found


def dataset_from_arrays(X, y, names: Sequence[str], kinds: Sequence[str] | None = None,
                        target: str = "label") -> Dataset:
    """Build a Dataset from in-memory arrays; categorical codes become their own labels."""
    X = np.asarray(X, dtype=float)
    kinds = list(kinds) if kinds is not None else [NUMERICAL] * X.shape[1]
    encodings = {}
    for j, (n, k) in enumerate(zip(names, kinds)):
        if k == CATEGORICAL:
            card = int(X[:, j].max()) + 1 if len(X) else 0
            encodings[n] = tuple(str(c) for c in range(card))
    schema = FeatureSchema(tuple(Feature(n, k) for n, k in zip(names, kinds)), target,
                           encodings)
    return Dataset(schema, X, y)
