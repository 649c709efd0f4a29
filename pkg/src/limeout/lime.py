"""Local surrogate explanations for tabular models.

A neighbourhood around an instance is sampled in a discretised space
(quantile bins for numerical features, codes for categorical ones), mapped
back to model inputs, weighted with an exponential kernel on the binary
"matches the instance" representation, and fitted with a weighted ridge
regression whose coefficients are the feature contributions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import truncnorm

from .data import NUMERICAL, FeatureStats


def kernel_weight(distance, sigma: float):
    """``exp(-distance**2 / sigma**2)``."""
    if not sigma > 0:
        raise ValueError(f"kernel width must be positive, got {sigma}")
    return np.exp(-np.square(distance) / sigma**2)


def default_sigma(n_columns: int) -> float:
    return 0.75 * n_columns


class Discretizer:
    """Maps numerical values to quantile bins.

    Duplicate cut points are merged and cut points at or above the training
    maximum are discarded, so every bin holds training data. Bin ``j`` covers
    ``(cut[j-1], cut[j]]``; the first bin starts at the training minimum and
    the last ends at the training maximum.
    """

    def __init__(self, stats: FeatureStats):
        self.stats = stats
        self.schema = stats.schema
        self.cuts = {}
        for f in self.schema.features:
            if f.kind == NUMERICAL:
                cuts = np.unique(stats.boundaries[f.name])
                self.cuts[f.name] = cuts[cuts < stats.maximum[f.name]]

    @property
    def p(self) -> int:
        return self.stats.p_quantiles

    def n_bins(self, name: str) -> int:
        return len(self.cuts[name]) + 1

    def bin_of(self, name: str, values) -> np.ndarray:
        return np.searchsorted(self.cuts[name], values, side="left")

    def bin_edges(self, name: str, b: int) -> tuple[float, float]:
        cuts = self.cuts[name]
        lo = self.stats.minimum[name] if b == 0 else cuts[b - 1]
        hi = self.stats.maximum[name] if b == len(cuts) else cuts[b]
        return float(lo), float(hi)

    def discretize(self, X: np.ndarray) -> np.ndarray:
        """Bin index per numerical column, the code itself per categorical one."""
        X = np.atleast_2d(X)
        out = np.empty(X.shape, dtype=np.int64)
        for j, f in enumerate(self.schema.features):
            if f.kind == NUMERICAL:
                out[:, j] = self.bin_of(f.name, X[:, j])
            else:
                out[:, j] = X[:, j].astype(np.int64)
        return out


def truncated_normal(rng, mean, std, lo, hi):
    """One draw per entry of ``lo``/``hi`` from N(mean, std) restricted to [lo, hi].

    Inverse-CDF sampling, reflected so the interval sits in the lower tail
    where ``ndtr`` keeps precision.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    u = rng.random(lo.shape)
    if std == 0:
        return np.clip(np.full(lo.shape, mean), lo, hi)
    a, b = (lo - mean) / std, (hi - mean) / std
    flip = a > 0
    a, b = np.where(flip, -b, a), np.where(flip, -a, b)
    ca, cb = ndtr(a), ndtr(b)
    z = ndtri(ca + u * (cb - ca))
    tiny = ((cb - ca) < 1e-12) & (hi > lo)
    if tiny.any():
        z[tiny] = truncnorm.ppf(u[tiny], a[tiny], b[tiny])
    z = mean + std * np.where(flip, -z, z)
    # intervals too narrow for either route carry a flat density
    z = np.where(np.isfinite(z), z, lo + u * (hi - lo))
    return np.where(hi > lo, np.clip(z, lo, hi), lo)


class NeighborhoodSample(NamedTuple):
    z_continuous: np.ndarray
    z_binary: np.ndarray
    weight: float


@dataclass(frozen=True, eq=False)
class Neighborhood:
    """Samples stored column-wise; row 0 is the explained instance."""

    z_continuous: np.ndarray
    z_binary: np.ndarray
    weights: np.ndarray
    features: tuple[str, ...]
    sigma: float

    def __len__(self):
        return len(self.weights)

    def __getitem__(self, i) -> NeighborhoodSample:
        return NeighborhoodSample(self.z_continuous[i], self.z_binary[i], float(self.weights[i]))


def sample_neighborhood(x, disc: Discretizer, n_samples: int, seed: int,
                        features: Sequence[str] | None = None,
                        sigma: float | None = None) -> Neighborhood:
    """Perturb ``x`` feature by feature.

    Numerical features: a bin drawn uniformly, then a value inside it from the
    feature's normal distribution truncated to the bin. Categorical features:
    a code drawn from the training frequencies. Degenerate features stay at
    ``x``. The binary representation (over ``features``, default all) marks
    where a sample's bin or code equals that of ``x``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    schema = disc.schema
    x = np.asarray(x, dtype=float)
    d = len(schema.features)
    features = tuple(schema.names if features is None else features)
    rng = np.random.default_rng(seed)
    stats = disc.stats

    Z = np.tile(x, (n_samples, 1))
    match = np.ones((n_samples, d), dtype=bool)
    m = n_samples - 1
    for j, f in enumerate(schema.features):
        if f.name in stats.degenerate or m == 0:
            continue
        if f.kind == NUMERICAL:
            nb = disc.n_bins(f.name)
            bins = rng.integers(0, nb, size=m)
            edges = np.array([disc.bin_edges(f.name, b) for b in range(nb)])
            lo, hi = edges[bins, 0], edges[bins, 1]
            # bins after the first exclude their lower edge
            lo = np.where(bins > 0, np.nextafter(lo, np.inf), lo)
            Z[1:, j] = truncated_normal(rng, stats.mean[f.name], stats.std[f.name], lo, hi)
            match[1:, j] = bins == disc.bin_of(f.name, x[j])
        else:
            freq = np.asarray(stats.frequencies[f.name])
            codes = rng.choice(len(freq), size=m, p=freq)
            Z[1:, j] = codes
            match[1:, j] = codes == int(x[j])

    cols = [schema.index(n) for n in features]
    Zb = match[:, cols].astype(float)
    sigma = default_sigma(len(features)) if sigma is None else sigma
    mismatches = len(features) - Zb.sum(axis=1)
    weights = kernel_weight(np.sqrt(mismatches), sigma)
    return Neighborhood(Z, Zb, weights, features, float(sigma))


class RidgeFit(NamedTuple):
    coef: np.ndarray
    intercept: float
    rank_deficient: bool


def weighted_ridge(Z, y, w, lam: float) -> RidgeFit:
    """Minimise ``sum w_i (Z_i c + b - y_i)^2 + lam |c|^2`` with ``b`` unpenalised.

    Solved on weighted-centred data; with ``lam == 0`` the minimum-norm
    least-squares solution is returned and rank deficiency flagged.
    """
    if lam < 0:
        raise ValueError("ridge strength must be non-negative")
    Z, y, w = np.asarray(Z, float), np.asarray(y, float), np.asarray(w, float)
    sw = w / w.sum()
    zbar, ybar = sw @ Z, sw @ y
    Zc, yc = Z - zbar, y - ybar
    d = Z.shape[1]
    deficient = False
    if lam > 0:
        A = Zc.T @ (w[:, None] * Zc) + lam * np.eye(d)
        coef = np.linalg.solve(A, Zc.T @ (w * yc))
    else:
        root = np.sqrt(w)
        coef, _, rank, _ = np.linalg.lstsq(root[:, None] * Zc, root * yc, rcond=None)
        deficient = rank < d
    return RidgeFit(coef, float(ybar - zbar @ coef), bool(deficient))


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 5000
    sigma: float | None = None  # None: 0.75 * number of explained features
    ridge_lambda: float = 1.0
    seed: int = 0

    def to_dict(self) -> dict:
        return {"n_samples": self.n_samples, "sigma": self.sigma,
                "ridge_lambda": self.ridge_lambda, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class LocalExplanation:
    instance: np.ndarray
    features: tuple[str, ...]
    coefficients: np.ndarray
    intercept: float
    predicted_class_probability: float
    surrogate_fit_error: float
    rank_deficient: bool = False
    config: dict = field(default_factory=dict)

    @property
    def contributions(self) -> list[tuple[str, float]]:
        """(feature, coefficient) by decreasing magnitude, ties in feature order."""
        order = sorted(range(len(self.features)),
                       key=lambda i: (-abs(self.coefficients[i]), i))
        return [(self.features[i], float(self.coefficients[i])) for i in order]

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.features.index(name)])

    def to_dict(self) -> dict:
        return {
            "instance": [float(v) for v in self.instance],
            "predicted_class_probability": float(self.predicted_class_probability),
            "intercept": float(self.intercept),
            "surrogate_fit_error": float(self.surrogate_fit_error),
            "rank_deficient": self.rank_deficient,
            "contributions": [[n, c] for n, c in self.contributions],
            "config": dict(self.config),
        }

    def to_text(self) -> str:
        width = max([len(n) for n in self.features] + [7])
        lines = [
            f"P(class 1) = {self.predicted_class_probability:.6f}",
            f"intercept  = {self.intercept:.6f}",
            f"fit error  = {self.surrogate_fit_error:.6g}",
            "",
            f"{'feature':<{width}}  contribution",
        ]
        lines += [f"{n:<{width}}  {c:+.6f}" for n, c in self.contributions]
        cfg = ", ".join(f"{k}={v}" for k, v in self.config.items())
        lines += ["", f"config: {cfg}"]
        return "\n".join(lines) + "\n"


def fit_surrogate(samples: Neighborhood, targets, ridge_lambda: float = 1.0) -> LocalExplanation:
    targets = np.asarray(targets, dtype=float)
    fit = weighted_ridge(samples.z_binary, targets, samples.weights, ridge_lambda)
    pred = samples.z_binary @ fit.coef + fit.intercept
    err = float(samples.weights @ (pred - targets) ** 2 / samples.weights.sum())
    return LocalExplanation(
        instance=samples.z_continuous[0].copy(),
        features=samples.features,
        coefficients=fit.coef,
        intercept=fit.intercept,
        predicted_class_probability=float(targets[0]),
        surrogate_fit_error=err,
        rank_deficient=fit.rank_deficient,
    )


def explain_instance(model, x, disc: Discretizer, cfg: LimeConfig = LimeConfig(),
                     features: Sequence[str] | None = None) -> LocalExplanation:
    """Explain ``model``'s class-1 probability at ``x``.

    ``features`` defaults to the model's active features, so features a
    dropout wrapper never sees get no coefficient.
    """
    features = tuple(model.active_features if features is None else features)
    nb = sample_neighborhood(x, disc, cfg.n_samples, cfg.seed, features, cfg.sigma)
    targets = model.predict_proba(nb.z_continuous)
    exp = fit_surrogate(nb, targets, cfg.ridge_lambda)
    config = cfg.to_dict()
    config["sigma"] = nb.sigma
    return LocalExplanation(**{**exp.__dict__, "config": config})
