"""Probabilistic binary classifiers: logistic regression, random forest,
feature-dropout wrappers and the probability-averaging ensemble.

Every model maps encoded rows (columns = ``input_features``) to the
probability of class 1 and classifies at ``decision_threshold``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from typing import ClassVar, Sequence

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from sklearn.ensemble import RandomForestClassifier

from .data import CATEGORICAL, Dataset


@dataclass(frozen=True, eq=False)
class TrainedModel:
    input_features: tuple[str, ...]
    active_features: tuple[str, ...]
    decision_threshold: float = 0.5
    seed: int = 0

    kind: ClassVar[str] = "base"

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_proba(X) >= self.decision_threshold).astype(np.int64)

    def _check_width(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.input_features):
            raise ValueError(
                f"{self.kind} model expects {len(self.input_features)} columns, got {X.shape[1]}"
            )
        return X


# ---------------------------------------------------------------- logistic


@dataclass(frozen=True)
class LogisticHyper:
    learning_rate: float = 1.0
    epochs: int = 1500
    l2: float = 1e-4
    tol: float = 1e-6


@dataclass(frozen=True, eq=False)
class LogisticModel(TrainedModel):
    """Weights act on standardised numerical columns and one-hot categoricals."""

    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    intercept: float = 0.0
    center: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scale: np.ndarray = field(default_factory=lambda: np.ones(0))
    cardinalities: tuple[int, ...] = ()  # 0 marks a numerical column
    converged: bool = False
    epochs_run: int = 0

    kind: ClassVar[str] = "logistic"

    def design(self, X: np.ndarray) -> np.ndarray:
        return expand(self._check_width(X), self.center, self.scale, self.cardinalities)

    def predict_proba(self, X):
        return _sigmoid(self.design(X) @ self.weights + self.intercept)


def expand(X, center, scale, cardinalities, sparse=False):
    """Standardise numerical columns and one-hot expand categorical codes.

    Codes outside ``[0, cardinality)`` map to an all-zero block. With
    ``sparse=True`` the result is a CSR matrix.
    """
    n = X.shape[0]
    width = sum(c if c else 1 for c in cardinalities)
    rows, cols, vals = [], [], []
    pos = 0
    idx = np.arange(n)
    for j, card in enumerate(cardinalities):
        if card == 0:
            rows.append(idx)
            cols.append(np.full(n, pos))
            vals.append((X[:, j] - center[j]) / scale[j])
            pos += 1
        else:
            codes = X[:, j].astype(np.int64)
            ok = (codes >= 0) & (codes < card)
            rows.append(idx[ok])
            cols.append(pos + codes[ok])
            vals.append(np.ones(int(ok.sum())))
            pos += card
    if sparse:
        return csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, width),
        )
    out = np.zeros((n, width))
    for r, c, v in zip(rows, cols, vals):
        out[r, c] = v
    return out


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def log_loss_and_grad(w, b, Z, y, l2):
    """Mean log-loss plus ``l2/2 * |w|^2`` and its gradient in (w, b)."""
    z = Z @ w + b
    # log(1 + e^z) - y z, computed stably
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * w @ w
    r = _sigmoid(z) - y
    return loss, Z.T @ r / len(y) + l2 * w, r.mean()


def train_logistic(train: Dataset, hyper: LogisticHyper = LogisticHyper(),
                   seed: int = 0) -> LogisticModel:
    """Full-batch gradient descent from zero weights.

    The run is deterministic; ``seed`` is recorded for provenance only.
    ``converged`` reports whether the gradient norm fell below ``hyper.tol``.
    """
    counts = np.bincount(train.y, minlength=2)
    if counts.min() < 2:
        warnings.warn("training set has fewer than 2 rows of some class")
    schema = train.schema
    cards = tuple(
        max(schema.cardinality(f.name), int(train.X[:, j].max()) + 1 if len(train) else 0)
        if f.kind == CATEGORICAL else 0
        for j, f in enumerate(schema.features)
    )
    center = np.where(np.array(cards) == 0, train.X.mean(axis=0), 0.0)
    scale = np.where(np.array(cards) == 0, train.X.std(axis=0), 1.0)
    scale[scale == 0] = 1.0

    Z = expand(train.X, center, scale, cards, sparse=True)
    y = train.y.astype(float)
    w = np.zeros(Z.shape[1])
    b = 0.0
    converged = False
    epoch = 0
    for epoch in range(1, hyper.epochs + 1):
        _, gw, gb = log_loss_and_grad(w, b, Z, y, hyper.l2)
        if np.sqrt(gw @ gw + gb * gb) < hyper.tol:
            converged = True
            epoch -= 1
            break
        w = w - hyper.learning_rate * gw
        b = b - hyper.learning_rate * gb
    names = tuple(schema.names)
    return LogisticModel(
        input_features=names, active_features=names, seed=seed,
        weights=w, intercept=float(b), center=center, scale=scale,
        cardinalities=cards, converged=converged, epochs_run=epoch,
    )


# ---------------------------------------------------------------- forest


@dataclass(frozen=True)
class ForestHyper:
    n_trees: int = 100
    max_depth: int | None = 16
    min_leaf: int = 1
    feature_subsample: str | float | None = "sqrt"
    bootstrap: bool = True


@dataclass(frozen=True, eq=False)
class ForestModel(TrainedModel):
    """Flattened trees; node arrays are concatenated and ``roots`` holds offsets.

    Leaves have ``left == -1``. Rows go left when ``float32(x) <= threshold``.
    """

    left: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    right: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    feature: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    threshold: np.ndarray = field(default_factory=lambda: np.zeros(0))
    leaf_class: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    roots: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    kind: ClassVar[str] = "forest"

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    def predict_proba(self, X):
        X = self._check_width(X)
        X32 = np.ascontiguousarray(X, dtype=np.float32)
        return _vote_fraction(X32, self.left, self.right, self.feature,
                              self.threshold, self.leaf_class, self.roots)


@njit(cache=True)
def _vote_fraction(X, left, right, feature, threshold, leaf_class, roots):
    # tree-major so one tree's nodes stay cache-resident across all rows
    n = X.shape[0]
    n_trees = roots.shape[0]
    votes = np.zeros(n, dtype=np.int64)
    for t in range(n_trees):
        root = roots[t]
        for i in range(n):
            node = root
            while left[node] != -1:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            votes[i] += leaf_class[node]
    return votes / n_trees


def train_forest(train: Dataset, hyper: ForestHyper = ForestHyper(), seed: int = 0) -> ForestModel:
    """Bagged Gini trees; probability is the fraction of trees voting class 1.

    Categorical codes are split on as ordinal values.
    """
    names = tuple(train.schema.names)
    rng = np.random.default_rng(seed)
    if hyper.max_depth == 0:
        # single-leaf trees voting the majority class of their bootstrap sample
        n = len(train)
        leaf = []
        for _ in range(hyper.n_trees):
            rows = rng.integers(0, n, n) if hyper.bootstrap else np.arange(n)
            leaf.append(int(train.y[rows].mean() > 0.5))
        k = hyper.n_trees
        return ForestModel(
            input_features=names, active_features=names, seed=seed,
            left=np.full(k, -1, np.int32), right=np.full(k, -1, np.int32),
            feature=np.zeros(k, np.int32), threshold=np.zeros(k),
            leaf_class=np.array(leaf, np.int32), roots=np.arange(k, dtype=np.int32),
        )

    rf = RandomForestClassifier(
        n_estimators=hyper.n_trees,
        criterion="gini",
        max_depth=hyper.max_depth,
        min_samples_leaf=hyper.min_leaf,
        max_features=hyper.feature_subsample,
        bootstrap=hyper.bootstrap,
        random_state=int(rng.integers(0, 2**31 - 1)),
        n_jobs=1,
    )
    rf.fit(train.X, train.y)
    lefts, rights, feats, thrs, leaves, roots = [], [], [], [], [], []
    offset = 0
    for est in rf.estimators_:
        t = est.tree_
        is_leaf = t.children_left == -1
        lefts.append(np.where(is_leaf, -1, t.children_left + offset))
        rights.append(np.where(is_leaf, -1, t.children_right + offset))
        feats.append(np.where(is_leaf, 0, t.feature))
        thrs.append(np.where(is_leaf, 0.0, t.threshold))
        # estimator classes are positions into rf.classes_
        cls = rf.classes_[np.argmax(t.value[:, 0, :], axis=1)]
        leaves.append(cls)
        roots.append(offset)
        offset += t.node_count
    return ForestModel(
        input_features=names, active_features=names, seed=seed,
        left=np.concatenate(lefts).astype(np.int32),
        right=np.concatenate(rights).astype(np.int32),
        feature=np.concatenate(feats).astype(np.int32),
        threshold=np.concatenate(thrs).astype(np.float64),
        leaf_class=np.concatenate(leaves).astype(np.int32),
        roots=np.array(roots, np.int32),
    )


# ---------------------------------------------------------------- composition


@dataclass(frozen=True, eq=False)
class DropoutModel(TrainedModel):
    """Accepts full-width rows and hides ``dropped`` columns from ``inner``."""

    inner: TrainedModel | None = None
    dropped: tuple[str, ...] = ()

    kind: ClassVar[str] = "dropout"

    @property
    def keep_index(self) -> np.ndarray:
        return np.array([self.input_features.index(n) for n in self.inner.input_features],
                        dtype=np.int64)

    def predict_proba(self, X):
        X = self._check_width(X)
        return self.inner.predict_proba(X[:, self.keep_index])


@dataclass(frozen=True, eq=False)
class EnsembleModel(TrainedModel):
    members: tuple[TrainedModel, ...] = ()

    kind: ClassVar[str] = "ensemble"

    def predict_proba(self, X):
        X = self._check_width(X)
        total = np.zeros(X.shape[0])
        for m in self.members:
            total += m.predict_proba(X)
        return total / len(self.members)


def ensemble_average(members: Sequence[TrainedModel]) -> EnsembleModel:
    """Average member probabilities.

    The decision threshold is the mean of the member thresholds, i.e. the
    ensemble classifies by the sign of the averaged member margins
    ``p_k - t_k``. Untuned members (threshold 0.5) give the plain 0.5 rule.
    """
    members = tuple(members)
    if not members:
        raise ValueError("an ensemble needs at least one member")
    inputs = members[0].input_features
    if any(m.input_features != inputs for m in members):
        raise ValueError("ensemble members must accept the same input columns")
    used = set().union(*(m.active_features for m in members))
    active = tuple(n for n in inputs if n in used)
    threshold = float(np.mean([m.decision_threshold for m in members]))
    return EnsembleModel(input_features=inputs, active_features=active,
                         decision_threshold=threshold, members=members)


@dataclass(frozen=True)
class Recipe:
    """How to train a model: ``kind`` is "logistic" or "forest".

    ``tune`` tunes the decision threshold after fitting (on the validation
    set passed to :meth:`fit`, else on the training set); on by default.
    """

    kind: str = "logistic"
    params: dict = field(default_factory=dict)
    tune: bool = True

    def __post_init__(self):
        if self.kind not in ("logistic", "forest"):
            raise ValueError(f"unknown model recipe {self.kind!r}")
        hyper_cls = LogisticHyper if self.kind == "logistic" else ForestHyper
        unknown = set(self.params) - set(hyper_cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown {self.kind} parameters: {sorted(unknown)}")

    @property
    def tunes_threshold(self) -> bool:
        return bool(self.tune)

    def fit(self, train: Dataset, seed: int, val: Dataset | None = None) -> TrainedModel:
        if self.kind == "logistic":
            model = train_logistic(train, LogisticHyper(**self.params), seed)
        else:
            model = train_forest(train, ForestHyper(**self.params), seed)
        if self.tunes_threshold:
            model = tune_threshold(model, train if val is None else val)
        return model

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "tune": self.tunes_threshold}


def drop_features(recipe: Recipe, train: Dataset, dropped, seed: int,
                  val: Dataset | None = None) -> DropoutModel:
    """Retrain ``recipe`` without ``dropped``; the wrapper still takes full rows."""
    dropped = set(dropped)
    names = train.feature_names
    unknown = dropped - set(names)
    if unknown:
        raise ValueError(f"unknown features to drop: {sorted(unknown)}")
    if len(dropped) >= len(names):
        raise ValueError("cannot drop every feature")
    inner = recipe.fit(train.drop(dropped), seed, None if val is None else val.drop(dropped))
    return DropoutModel(
        input_features=tuple(names), active_features=inner.active_features,
        decision_threshold=inner.decision_threshold, seed=seed, inner=inner,
        dropped=tuple(n for n in names if n in dropped),
    )


# ---------------------------------------------------------------- evaluation


def tune_threshold(m: TrainedModel, val: Dataset) -> TrainedModel:
    """Pick the threshold maximising F1 on ``val``.

    Candidates are the distinct predicted probabilities plus 0.5; a row is
    positive when its probability is >= the threshold. Ties go to the
    candidate nearest 0.5 (the lower one if equidistant).
    """
    if len(np.unique(val.y)) < 2:
        warnings.warn("threshold tuning needs both classes; keeping 0.5")
        return replace(m, decision_threshold=0.5)
    p = m.predict_proba(val.X)
    t, _ = best_f1_threshold(p, val.y)
    return replace(m, decision_threshold=t)


def best_f1_threshold(p: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    cands = np.unique(np.append(p, 0.5))
    pos = np.sort(p[y == 1])
    neg = np.sort(p[y == 0])
    tp = len(pos) - np.searchsorted(pos, cands, side="left")
    fp = len(neg) - np.searchsorted(neg, cands, side="left")
    fn = len(pos) - tp
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    best = f1.max()
    tied = cands[f1 == best]
    dist = np.abs(tied - 0.5)
    return float(tied[np.flatnonzero(dist == dist.min())[0]]), float(best)


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.n

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "accuracy": self.accuracy, "f1": self.f1}


def evaluate(m: TrainedModel, test: Dataset) -> EvalReport:
    if len(test) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = m.predict(test.X)
    y = test.y
    return EvalReport(
        tp=int(((pred == 1) & (y == 1)).sum()), fp=int(((pred == 1) & (y == 0)).sum()),
        tn=int(((pred == 0) & (y == 0)).sum()), fn=int(((pred == 0) & (y == 1)).sum()),
    )


# ---------------------------------------------------------------- persistence

_ARRAYS = {
    "logistic": ("weights", "center", "scale"),
    "forest": ("left", "right", "feature", "threshold", "leaf_class", "roots"),
}
_INT_ARRAYS = {"left", "right", "feature", "leaf_class", "roots"}
_NODE_INT = np.int32


def model_to_dict(m: TrainedModel) -> dict:
    d = {
        "kind": m.kind,
        "input_features": list(m.input_features),
        "active_features": list(m.active_features),
        "decision_threshold": m.decision_threshold,
        "seed": m.seed,
    }
    if isinstance(m, LogisticModel):
        d.update(intercept=m.intercept, cardinalities=list(m.cardinalities),
                 converged=m.converged, epochs_run=m.epochs_run)
    elif isinstance(m, DropoutModel):
        d.update(dropped=list(m.dropped), inner=model_to_dict(m.inner))
    elif isinstance(m, EnsembleModel):
        d["members"] = [model_to_dict(x) for x in m.members]
    for name in _ARRAYS.get(m.kind, ()):
        d[name] = getattr(m, name).tolist()
    return d


def model_from_dict(d: dict) -> TrainedModel:
    common = dict(
        input_features=tuple(d["input_features"]),
        active_features=tuple(d["active_features"]),
        decision_threshold=d["decision_threshold"],
        seed=d["seed"],
    )
    arrays = {
        name: np.array(d[name], dtype=_NODE_INT if name in _INT_ARRAYS else np.float64)
        for name in _ARRAYS.get(d["kind"], ())
    }
    if d["kind"] == "logistic":
        return LogisticModel(**common, **arrays, intercept=d["intercept"],
                             cardinalities=tuple(d["cardinalities"]),
                             converged=d["converged"], epochs_run=d["epochs_run"])
    if d["kind"] == "forest":
        return ForestModel(**common, **arrays)
    if d["kind"] == "dropout":
        return DropoutModel(**common, inner=model_from_dict(d["inner"]),
                            dropped=tuple(d["dropped"]))
    if d["kind"] == "ensemble":
        return EnsembleModel(**common, members=tuple(model_from_dict(x) for x in d["members"]))
    raise ValueError(f"unknown model kind {d['kind']!r}")


def save_model(m: TrainedModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(m), fh)


def load_model(path) -> TrainedModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
