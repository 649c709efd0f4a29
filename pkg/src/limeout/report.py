"""Rendering and comparison of audit reports.

Reports are exchanged as the dictionaries produced by
:meth:`limeout.core.AuditReport.to_dict`; the JSON export is canonical
(sorted keys, fixed indentation) so identical audits give identical bytes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import SCHEMA_VERSION

STAGES = ("before", "after")


class CompareError(ValueError):
    pass


def to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=True) + "\n"


def load_report(path) -> dict:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise CompareError(f"{path}: not a JSON report ({e})") from None
    if not isinstance(d, dict) or "schema_version" not in d:
        raise CompareError(f"{path}: missing schema_version")
    if d["schema_version"] != SCHEMA_VERSION:
        raise CompareError(f"{path}: schema_version {d['schema_version']} "
                           f"is not {SCHEMA_VERSION}")
    return d


def _top(g: dict, k: int) -> list[tuple[str, float]]:
    c = dict(zip(g["features"], g["contributions"]))
    return [(n, c[n]) for n in g["ranking"][:k]]


def _side_by_side(left, right, titles, sensitive) -> list[str]:
    def cell(row):
        if row is None:
            return "", ""
        n, c = row
        return (n.upper() if n in sensitive else n), f"{c:+.6f}"

    rows = [(cell(a), cell(b)) for a, b in
            zip(left + [None] * (len(right) - len(left)), right + [None] * (len(left) - len(right)))]
    wn = max([len(r[i][0]) for r in rows for i in (0, 1)] + [len("feature")])
    wc = max([len(r[i][1]) for r in rows for i in (0, 1)] + [len("contribution")])
    sep = "    "
    out = [f"{titles[0]:<{wn + 2 + wc}}{sep}{titles[1]}",
           f"{'feature':<{wn}}  {'contribution':>{wc}}{sep}{'feature':<{wn}}  {'contribution':>{wc}}",
           f"{'-' * (wn + 2 + wc)}{sep}{'-' * (wn + 2 + wc)}"]
    for (an, ac), (bn, bc) in rows:
        out.append(f"{an:<{wn}}  {ac:>{wc}}{sep}{bn:<{wn}}  {bc:>{wc}}".rstrip())
    return out


def _eval_line(e: dict) -> str:
    return (f"accuracy {e['accuracy']:.4f}  f1 {e['f1']:.4f}  "
            f"(tp {e['tp']}, fp {e['fp']}, tn {e['tn']}, fn {e['fn']})")


def format_report(report: dict) -> str:
    """Human-readable rendering; sensitive features are upper-cased in tables."""
    cfg = report["config"]
    k = cfg["k"]
    sensitive = set(cfg["sensitive"])
    vb, va = report["verdict_before"], report["verdict_after"]
    lines = [
        "LimeOut audit",
        f"recipe      {report['recipe']['kind']}",
        f"rows        train {report['dataset']['n_train']}, test {report['dataset']['n_test']}",
        f"sensitive   {', '.join(cfg['sensitive'])}",
        f"seed        {cfg['seed']}",
        "",
        f"baseline    {_eval_line(report['baseline_eval'])}",
        f"verdict     {vb['verdict']} (sensitive in top {k}: "
        f"{', '.join(vb['sensitive_in_top_k']) or 'none'})",
        f"action      {report['action']}",
    ]
    if report["action"] == "none":
        lines += ["", *_side_by_side(_top(report["global_before"], k), [],
                                     (f"top {k}, baseline", ""), sensitive)]
        return "\n".join(lines) + "\n"

    lines += ["", *_side_by_side(_top(report["global_before"], k), _top(report["global_after"], k),
                                 (f"top {k}, baseline", f"top {k}, ensemble"), sensitive)]
    lines += ["", f"verdict after  {va['verdict']} (sensitive in top {k}: "
                  f"{', '.join(va['sensitive_in_top_k']) or 'none'})"]
    comp = report["companions"]
    if any(comp.values()):
        lines += ["", "correlated companions"]
        lines += [f"  {f}: {', '.join(c) or '-'}" for f, c in comp.items()]

    labels = [f"M{i + 1}" for i in range(len(report["pool"]))]
    drops = ["drop " + ", ".join(m["dropped"]) for m in report["pool"]]
    w = max(len(d) for d in drops + ["ensemble (mean probability)"])
    lines += ["", "pool", f"{'':<4}{'model':<{w}}  {'accuracy':>8}  {'f1':>6}"]
    for lab, d, m in zip(labels, drops, report["pool"]):
        lines.append(f"{lab:<4}{d:<{w}}  {m['eval']['accuracy']:>8.4f}  {m['eval']['f1']:>6.4f}")
    e = report["ensemble_eval"]
    lines.append(f"{'':<4}{'ensemble (mean probability)':<{w}}  {e['accuracy']:>8.4f}  {e['f1']:>6.4f}")
    b = report["baseline_eval"]
    lines.append(f"{'':<4}{'baseline':<{w}}  {b['accuracy']:>8.4f}  {b['f1']:>6.4f}")

    s = report["significance"]
    if s is not None:
        base, ens = s["baseline_accuracy"], s["ensemble_accuracy"]
        lines += ["", f"significance (paired t-test, baseline - ensemble, {s['runs']} re-splits)",
                  f"  t = {s['statistic']:.6f}  p = {s['p_value']:.6g}"
                  + ("  [degenerate: zero-variance differences]" if s["degenerate"] else ""),
                  f"  mean accuracy baseline {sum(base) / len(base):.4f}, "
                  f"ensemble {sum(ens) / len(ens):.4f}"]
    return "\n".join(lines) + "\n"


@dataclass
class FeatureChange:
    feature: str
    rank_a: int | None
    rank_b: int | None
    contribution_a: float | None
    contribution_b: float | None
    sensitive: bool

    @property
    def moved(self) -> bool:
        return self.rank_a != self.rank_b


@dataclass
class Comparison:
    stage_a: str
    stage_b: str
    k: int
    accuracy_a: float
    accuracy_b: float
    changes: list[FeatureChange] = field(default_factory=list)

    @property
    def accuracy_delta(self) -> float:
        return self.accuracy_b - self.accuracy_a

    @property
    def is_empty(self) -> bool:
        return not self.changes and self.accuracy_delta == 0

    def to_dict(self) -> dict:
        return {
            "stage_a": self.stage_a, "stage_b": self.stage_b, "k": self.k,
            "accuracy_a": self.accuracy_a, "accuracy_b": self.accuracy_b,
            "accuracy_delta": self.accuracy_delta,
            "changes": [c.__dict__ for c in self.changes],
        }


def _stage(report: dict, stage: str):
    if stage not in STAGES:
        raise CompareError(f"stage must be one of {STAGES}, got {stage!r}")
    if stage == "before" or report["action"] == "none":
        return report["global_before"], report["baseline_eval"]["accuracy"]
    return report["global_after"], report["ensemble_eval"]["accuracy"]


def compare_reports(a: dict, b: dict, stage_a: str = "before", stage_b: str = "before",
                    k: int | None = None) -> Comparison:
    """Ranking and accuracy differences between two reports (or two stages of one).

    A feature is listed when its rank or contribution differs and it sits in
    the top ``k`` of either side.
    """
    if a["dataset"]["features"] != b["dataset"]["features"] or \
            a["dataset"]["target"] != b["dataset"]["target"]:
        raise CompareError("reports describe different dataset schemas")
    k = k or a["config"]["k"]
    ga, acc_a = _stage(a, stage_a)
    gb, acc_b = _stage(b, stage_b)
    ca = dict(zip(ga["features"], ga["contributions"]))
    cb = dict(zip(gb["features"], gb["contributions"]))
    rank_a = {n: i + 1 for i, n in enumerate(ga["ranking"])}
    rank_b = {n: i + 1 for i, n in enumerate(gb["ranking"])}
    sensitive = set(a["config"]["sensitive"]) | set(b["config"]["sensitive"])
    shown = set(ga["ranking"][:k]) | set(gb["ranking"][:k])
    changes = []
    for n, _ in a["dataset"]["features"]:
        if n not in shown:
            continue
        ch = FeatureChange(n, rank_a.get(n), rank_b.get(n), ca.get(n), cb.get(n), n in sensitive)
        if ch.moved or ch.contribution_a != ch.contribution_b:
            changes.append(ch)
    changes.sort(key=lambda c: (min(r for r in (c.rank_a, c.rank_b) if r is not None), c.feature))
    return Comparison(stage_a, stage_b, k, acc_a, acc_b, changes)


def format_comparison(c: Comparison) -> str:
    lines = [f"comparing A[{c.stage_a}] with B[{c.stage_b}], top {c.k}",
             f"accuracy  A {c.accuracy_a:.4f}  B {c.accuracy_b:.4f}  delta {c.accuracy_delta:+.4f}"]
    if c.is_empty:
        return "\n".join(lines + ["no differences"]) + "\n"

    def rank(r):
        return "-" if r is None else (str(r) if r <= c.k else f"{r}*")

    def num(v):
        return "-" if v is None else f"{v:+.6f}"

    w = max(len(ch.feature) for ch in c.changes) + 2
    lines += ["", f"{'feature':<{w}}{'rank A':>7}{'rank B':>7}  {'contrib A':>11}  {'contrib B':>11}"]
    for ch in c.changes:
        mark = " !" if ch.sensitive and ch.moved else ""
        name = ch.feature.upper() if ch.sensitive else ch.feature
        lines.append(f"{name:<{w}}{rank(ch.rank_a):>7}{rank(ch.rank_b):>7}  "
                     f"{num(ch.contribution_a):>11}  {num(ch.contribution_b):>11}{mark}")
    lines += ["", "* outside the top k; - not used by the model; ! sensitive feature changed rank"]
    left = [ch.feature for ch in c.changes if ch.sensitive and ch.rank_a is not None
            and ch.rank_a <= c.k and (ch.rank_b is None or ch.rank_b > c.k)]
    if left:
        lines.append(f"sensitive features leaving the top {c.k}: {', '.join(left)}")
    return "\n".join(lines) + "\n"
