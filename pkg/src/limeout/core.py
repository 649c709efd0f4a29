"""The LimeOut procedure: explain a model globally, flag it when sensitive
features rank in its top k, rebuild it as an average of feature-dropout
classifiers, and compare the two.

Every random choice derives from ``LimeOutConfig.seed`` through
:func:`limeout.seeding.derive_seed` with these labels:

``"split"``       train/test split made by :func:`audit_dataset`
``"validation"``  threshold-tuning fold carved from the training split
``"smote"``       oversampling of the remaining training rows
``"model"``       baseline training
``"pool", k``     pool member k (0-based)
``"lime"``        local-explanation neighbourhoods
``"global"``      candidate subsampling / random pick
``"resplit", r``  master seed of significance run r, which reuses the
                  labels above for its own split
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.special import stdtr

from .data import (Dataset, compute_stats, correlated_features, smote_oversample,
                   train_test_split)
from .global_explain import (SINGLE_SENSITIVE, UNFAIR, FairnessVerdict, GlobalConfig,
                             GlobalExplanation, assess_fairness, lime_global)
from .lime import Discretizer
from .models import (EvalReport, Recipe, TrainedModel, drop_features, ensemble_average,
                     evaluate)
from .seeding import derive_seed

SCHEMA_VERSION = 1


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class LimeOutConfig:
    sensitive: tuple[str, ...]
    k: int = 10
    correlation_threshold: float = 0.85
    explain: GlobalConfig = GlobalConfig()
    seed: int = 0
    runs: int = 10
    test_fraction: float = 0.2
    validation_fraction: float = 0.1  # 0 tunes thresholds on the balanced training set
    smote_k: int = 5
    p_quantiles: int = 4
    force_repair: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sensitive", tuple(self.sensitive))
        if not self.sensitive:
            raise ConfigurationError("sensitive: at least one sensitive feature is required")
        if self.k < 1:
            raise ConfigurationError("k: must be at least 1")
        if not 0.0 <= self.correlation_threshold <= 1.0:
            raise ConfigurationError("correlation_threshold: must lie in [0, 1]")
        if self.runs < 0 or self.runs == 1:
            raise ConfigurationError("runs: use 0 (no significance test) or at least 2")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigurationError("validation_fraction: must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "sensitive": list(self.sensitive), "k": self.k,
            "correlation_threshold": self.correlation_threshold,
            "explain": self.explain.to_dict(), "seed": self.seed, "runs": self.runs,
            "test_fraction": self.test_fraction,
            "validation_fraction": self.validation_fraction, "smote_k": self.smote_k,
            "p_quantiles": self.p_quantiles, "force_repair": self.force_repair,
        }


@dataclass(frozen=True)
class Significance:
    statistic: float
    p_value: float
    runs: int
    degenerate: bool = False
    baseline_accuracy: tuple[float, ...] = ()
    ensemble_accuracy: tuple[float, ...] = ()
    member_accuracy: tuple[tuple[float, ...], ...] = ()

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic, "p_value": self.p_value, "runs": self.runs,
            "degenerate": self.degenerate,
            "baseline_accuracy": list(self.baseline_accuracy),
            "ensemble_accuracy": list(self.ensemble_accuracy),
            "member_accuracy": [list(r) for r in self.member_accuracy],
        }


def significance_test(acc_a: Sequence[float], acc_b: Sequence[float]) -> Significance:
    """Paired two-sided t-test on ``acc_a - acc_b`` with n - 1 degrees of freedom.

    Zero-variance differences give t = 0, p = 1 when their mean is zero, and
    an infinite statistic with p = 0 (flagged degenerate) otherwise.
    """
    a = np.asarray(acc_a, dtype=float)
    b = np.asarray(acc_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be equal-length vectors")
    n = len(a)
    if n < 2:
        raise ValueError("a paired t-test needs at least 2 pairs")
    diff = a - b
    mean = diff.mean()
    sd = diff.std(ddof=1)
    common = dict(runs=n, baseline_accuracy=tuple(a), ensemble_accuracy=tuple(b))
    if sd == 0:
        if mean == 0:
            return Significance(0.0, 1.0, **common)
        return Significance(float(np.copysign(np.inf, mean)), 0.0, degenerate=True, **common)
    t = mean / (sd / np.sqrt(n))
    p = 2.0 * stdtr(n - 1, -abs(t))
    return Significance(float(t), float(min(p, 1.0)), **common)


def build_dropout_pool(recipe: Recipe, train: Dataset, flagged: Sequence[str],
                       corr: Mapping[str, Sequence[str]], seed: int,
                       val: Dataset | None = None, n_jobs: int = 1) -> list[TrainedModel]:
    """One model per flagged feature (dropping it and its companions) plus one
    dropping every flagged feature and every companion."""
    if not flagged:
        raise ConfigurationError("flagged: the pool needs at least one flagged feature")
    drops = [tuple(sorted({f, *corr.get(f, ())}, key=train.schema.index)) for f in flagged]
    everything = set().union(*map(set, drops))
    drops.append(tuple(sorted(everything, key=train.schema.index)))
    if len(everything) >= len(train.feature_names):
        raise ConfigurationError("flagged: dropping these features would remove every feature")
    seeds = [derive_seed(seed, "pool", k) for k in range(len(drops))]
    return Parallel(n_jobs=n_jobs)(
        delayed(drop_features)(recipe, train, d, s, val) for d, s in zip(drops, seeds)
    )


def prepare_training(train: Dataset, cfg: LimeOutConfig, seed: int):
    """Carve the tuning fold (if any) and SMOTE-balance the rest."""
    val = None
    fit = train
    if cfg.validation_fraction > 0:
        fit, val = train_test_split(train, cfg.validation_fraction,
                                    derive_seed(seed, "validation"))
    balanced = smote_oversample(fit, cfg.smote_k, derive_seed(seed, "smote"))
    return balanced, val


@dataclass(frozen=True, eq=False)
class AuditReport:
    dataset: dict
    recipe: dict
    config: dict
    baseline_eval: EvalReport
    global_before: GlobalExplanation
    verdict_before: FairnessVerdict
    global_after: GlobalExplanation
    verdict_after: FairnessVerdict
    action: str  # "none" or "ensemble"
    flagged: tuple[str, ...] = ()
    companions: dict = field(default_factory=dict)
    pool: tuple[tuple[tuple[str, ...], EvalReport], ...] = ()
    ensemble_eval: EvalReport | None = None
    significance: Significance | None = None
    baseline: TrainedModel | None = None
    final_model: TrainedModel | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "dataset": self.dataset,
            "recipe": self.recipe,
            "config": self.config,
            "baseline_eval": self.baseline_eval.to_dict(),
            "verdict_before": self.verdict_before.to_dict(),
            "global_before": self.global_before.to_dict(),
            "action": self.action,
            "flagged": list(self.flagged),
            "companions": {k: list(v) for k, v in self.companions.items()},
            "pool": [{"dropped": list(d), "eval": e.to_dict()} for d, e in self.pool],
            "ensemble_eval": None if self.ensemble_eval is None else self.ensemble_eval.to_dict(),
            "verdict_after": self.verdict_after.to_dict(),
            "global_after": self.global_after.to_dict(),
            "significance": None if self.significance is None else self.significance.to_dict(),
        }


def run_limeout(recipe: Recipe, train: Dataset, test: Dataset, cfg: LimeOutConfig) -> AuditReport:
    """Audit ``recipe`` trained on ``train`` (raw, unbalanced) and repair it if unfair.

    ``test`` is only used for evaluation and explanation.
    """
    if train.schema != test.schema:
        raise ConfigurationError("train and test schemas differ")
    unknown = set(cfg.sensitive) - set(train.feature_names)
    if unknown:
        raise ConfigurationError(f"sensitive: unknown features {sorted(unknown)}")

    seed = cfg.seed
    explain_cfg = replace(cfg.explain, lime=replace(cfg.explain.lime,
                                                    seed=derive_seed(seed, "lime")))
    global_seed = derive_seed(seed, "global")
    balanced, val = prepare_training(train, cfg, seed)
    baseline = recipe.fit(balanced, derive_seed(seed, "model"), val)
    baseline_eval = evaluate(baseline, test)
    disc = Discretizer(compute_stats(train, cfg.p_quantiles))
    global_before = lime_global(baseline, test, disc, explain_cfg, global_seed)
    verdict = assess_fairness(global_before, cfg.sensitive, cfg.k)

    common = dict(
        dataset={"features": train.schema.to_dict()["features"], "target": train.schema.target,
                 "n_train": len(train), "n_test": len(test)},
        recipe=recipe.to_dict(),
        config=cfg.to_dict(),
        baseline_eval=baseline_eval,
        global_before=global_before,
        verdict_before=verdict,
        baseline=baseline,
    )
    act = verdict.verdict == UNFAIR or (verdict.verdict == SINGLE_SENSITIVE and cfg.force_repair)
    if not act:
        return AuditReport(**common, global_after=global_before, verdict_after=verdict,
                           action="none", final_model=baseline)

    flagged = verdict.sensitive_in_top_k
    companions = {
        f: tuple(sorted(correlated_features(train, {f}, cfg.correlation_threshold),
                        key=train.schema.index))
        for f in flagged
    }
    pool = build_dropout_pool(recipe, balanced, flagged, companions, seed, val, cfg.n_jobs)
    ensemble = ensemble_average(pool)
    global_after = lime_global(ensemble, test, disc, explain_cfg, global_seed)

    significance = None
    if cfg.runs >= 2:
        full = train.concat(test)
        rows = Parallel(n_jobs=cfg.n_jobs)(
            delayed(_resplit_run)(recipe, full, flagged, companions, cfg,
                                  derive_seed(seed, "resplit", r))
            for r in range(cfg.runs)
        )
        base_acc, ens_acc, member_acc = zip(*rows)
        significance = replace(significance_test(base_acc, ens_acc),
                               member_accuracy=tuple(member_acc))

    return AuditReport(
        **common,
        global_after=global_after,
        verdict_after=assess_fairness(global_after, cfg.sensitive, cfg.k),
        action="ensemble",
        flagged=flagged,
        companions=companions,
        pool=tuple((m.dropped, evaluate(m, test)) for m in pool),
        ensemble_eval=evaluate(ensemble, test),
        significance=significance,
        final_model=ensemble,
    )


def audit_dataset(recipe: Recipe, data: Dataset, cfg: LimeOutConfig) -> AuditReport:
    """Split ``data`` with the configured test fraction and run the audit."""
    train, test = train_test_split(data, cfg.test_fraction, derive_seed(cfg.seed, "split"))
    return run_limeout(recipe, train, test, cfg)


def _resplit_run(recipe, full, flagged, companions, cfg, seed):
    train, test = train_test_split(full, cfg.test_fraction, seed)
    balanced, val = prepare_training(train, cfg, seed)
    baseline = recipe.fit(balanced, derive_seed(seed, "model"), val)
    pool = build_dropout_pool(recipe, balanced, flagged, companions, seed, val)
    ensemble = ensemble_average(pool)
    return (evaluate(baseline, test).accuracy, evaluate(ensemble, test).accuracy,
            tuple(evaluate(m, test).accuracy for m in pool))
