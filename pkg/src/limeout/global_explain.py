"""Global explanations: pick a diverse set of instances, sum their local
explanations per feature, rank features, and judge process fairness."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset
from .lime import Discretizer, LimeConfig, explain_instance
from .seeding import derive_seed

FAIR = "fair"
UNFAIR = "unfair"
SINGLE_SENSITIVE = "single-sensitive"


def submodular_pick(W, budget: int) -> list[int]:
    """Greedy weighted-coverage pick over an instances x features matrix.

    Feature ``j`` has importance ``sqrt(sum_i |W_ij|)`` and is covered once a
    picked row has ``|W_ij| > 0``. Each step adds the row with the largest gain
    in covered importance, lowest index on ties. Once everything is covered,
    remaining picks have zero gain and so follow index order until ``budget``
    rows are chosen.
    """
    W = np.abs(np.asarray(W, dtype=float))
    if budget < 1:
        raise ValueError("budget must be at least 1")
    n = W.shape[0]
    importance = np.sqrt(W.sum(axis=0))
    nonzero = W > 0
    covered = np.zeros(W.shape[1], dtype=bool)
    available = np.ones(n, dtype=bool)
    picked = []
    for _ in range(min(budget, n)):
        gains = nonzero[:, ~covered] @ importance[~covered]
        gains[~available] = -np.inf
        i = int(np.argmax(gains))
        picked.append(i)
        available[i] = False
        covered |= nonzero[i]
    return picked


@dataclass(frozen=True)
class GlobalConfig:
    candidates: int = 1000
    budget: int = 50
    pick: str = "submodular"  # or "random"
    aggregate: str = "signed"  # or "abs"
    lime: LimeConfig = LimeConfig()

    def __post_init__(self):
        if self.pick not in ("submodular", "random"):
            raise ValueError(f"unknown pick method {self.pick!r}")
        if self.aggregate not in ("signed", "abs"):
            raise ValueError(f"unknown aggregation {self.aggregate!r}")
        if self.candidates < 1 or self.budget < 1:
            raise ValueError("candidates and budget must be at least 1")

    def to_dict(self) -> dict:
        return {"candidates": self.candidates, "budget": self.budget, "pick": self.pick,
                "aggregate": self.aggregate, "lime": self.lime.to_dict()}


@dataclass(frozen=True, eq=False)
class GlobalExplanation:
    features: tuple[str, ...]
    contributions: np.ndarray
    picked_instances: tuple[int, ...]
    config: dict = field(default_factory=dict)

    @property
    def ranking(self) -> list[str]:
        order = sorted(range(len(self.features)),
                       key=lambda i: (-abs(self.contributions[i]), i))
        return [self.features[i] for i in order]

    def top(self, k: int) -> list[str]:
        return self.ranking[:k]

    def rank_of(self, name: str) -> int | None:
        """1-based rank, or None for a feature the model does not use."""
        ranking = self.ranking
        return ranking.index(name) + 1 if name in ranking else None

    def contribution(self, name: str) -> float:
        return float(self.contributions[self.features.index(name)])

    def table(self, k: int | None = None) -> list[tuple[str, float]]:
        return [(n, self.contribution(n)) for n in self.ranking[:k]]

    def to_dict(self) -> dict:
        return {
            "features": list(self.features),
            "contributions": [float(c) for c in self.contributions],
            "ranking": self.ranking,
            "picked_instances": [int(i) for i in self.picked_instances],
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GlobalExplanation":
        return cls(tuple(d["features"]), np.array(d["contributions"], dtype=float),
                   tuple(d["picked_instances"]), d.get("config", {}))


def aggregate(explanations: Sequence, features: Sequence[str], how: str = "signed") -> np.ndarray:
    total = np.zeros(len(features))
    for exp in explanations:
        coef = np.array([exp.coefficient(n) for n in features])
        total += coef if how == "signed" else np.abs(coef)
    return total


def lime_global(model, data: Dataset, disc: Discretizer, cfg: GlobalConfig = GlobalConfig(),
                seed: int = 0) -> GlobalExplanation:
    """Explain candidate rows of ``data``, pick a subset and aggregate.

    Candidates are all rows, or a seeded sample of ``cfg.candidates`` rows.
    Row ``r`` is explained with LIME seed ``derive_seed(cfg.lime.seed, r)``,
    so the same row gets the same neighbourhood under every model.
    """
    if len(data) == 0:
        raise ValueError("cannot explain an empty dataset")
    n = len(data)
    if n <= cfg.candidates:
        candidates = np.arange(n)
    else:
        rng = np.random.default_rng(derive_seed(seed, "candidates"))
        candidates = np.sort(rng.choice(n, size=cfg.candidates, replace=False))

    features = tuple(model.active_features)
    explanations = []
    for r in candidates:
        lime_cfg = replace(cfg.lime, seed=derive_seed(cfg.lime.seed, int(r)))
        explanations.append(explain_instance(model, data.X[r], disc, lime_cfg, features))

    if cfg.pick == "submodular":
        W = np.array([e.coefficients for e in explanations])
        picks = submodular_pick(W, cfg.budget)
    else:
        rng = np.random.default_rng(derive_seed(seed, "random-pick"))
        picks = sorted(rng.choice(len(candidates), size=min(cfg.budget, len(candidates)),
                                  replace=False).tolist())
    contributions = aggregate([explanations[i] for i in picks], features, cfg.aggregate)
    config = {**cfg.to_dict(), "seed": seed}
    return GlobalExplanation(features, contributions,
                             tuple(int(candidates[i]) for i in picks), config)


@dataclass(frozen=True)
class FairnessVerdict:
    sensitive_in_top_k: tuple[str, ...]
    k: int
    verdict: str

    def to_dict(self) -> dict:
        return {"sensitive_in_top_k": list(self.sensitive_in_top_k), "k": self.k,
                "verdict": self.verdict}


def assess_fairness(g: GlobalExplanation, sensitive: Iterable[str], k: int = 10) -> FairnessVerdict:
    """Unfair with two or more sensitive features in the top ``k``, single-sensitive
    with exactly one, fair with none."""
    if k < 1:
        raise ValueError("k must be at least 1")
    sensitive = set(sensitive)
    hits = tuple(n for n in g.top(k) if n in sensitive)
    verdict = UNFAIR if len(hits) >= 2 else SINGLE_SENSITIVE if hits else FAIR
    return FairnessVerdict(hits, k, verdict)
