"""Evolutionary-trajectory statistics: top-half splits, one-way ANOVA,
Kendall rank correlation with tie correction, and Holm step-down multiple
testing correction.

The F and Kendall test statistics are computed here from first principles;
only the reference distributions (F via the regularized incomplete beta, the
standard normal for Kendall's z) come from scipy.stats.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.stats import f as f_dist
from scipy.stats import norm


class StatsError(ValueError):
    pass


class TooFew(StatsError):
    pass


class DegenerateVariance(StatsError):
    pass


class AllTied(StatsError):
    pass


@dataclass
class GenerationSample:
    generation: int
    fitnesses: list[float]

    def __post_init__(self):
        # Empty is allowed only as the degenerate result of a strict top-half
        # split over an all-tied sample.
        if self.generation < 1:
            raise StatsError("generation must be >= 1")

    @property
    def degenerate(self) -> bool:
        return not self.fitnesses


def top_half(sample: GenerationSample) -> GenerationSample:
    """Values strictly greater than the sample median. With heavy ties this
    can retain fewer than half the values, or none (degenerate)."""
    if len(sample.fitnesses) < 2:
        raise TooFew("need at least 2 values")
    med = float(np.median(sample.fitnesses))
    return GenerationSample(sample.generation,
                            [v for v in sample.fitnesses if v > med])


def anova_oneway(groups: list[GenerationSample]) -> tuple[float, float]:
    """One-way fixed-effects ANOVA: (F, p)."""
    if len(groups) < 2:
        raise StatsError("need at least 2 groups")
    data = [np.asarray(g.fitnesses, dtype=float) for g in groups]
    if any(len(d) < 2 for d in data):
        raise StatsError("each group needs at least 2 values")
    n_total = sum(len(d) for d in data)
    grand = sum(d.sum() for d in data) / n_total
    ss_between = sum(len(d) * (d.mean() - grand) ** 2 for d in data)
    ss_within = sum(((d - d.mean()) ** 2).sum() for d in data)
    df_between = len(data) - 1
    df_within = n_total - len(data)
    if ss_within == 0.0:
        if ss_between == 0.0:
            return 0.0, 1.0
        raise DegenerateVariance("zero within-group variance (F = inf)")
    F = (ss_between / df_between) / (ss_within / df_within)
    p = float(f_dist.sf(F, df_between, df_within))
    return float(F), p


def kendall_tau(x, y) -> tuple[float, float, float]:
    """Kendall's tau-b with tie correction: (tau, z, two-sided p).

    z uses the normal approximation with the tie-corrected variance of C - D.
    """
    x = list(map(float, x))
    y = list(map(float, y))
    n = len(x)
    if n != len(y) or n < 2:
        raise StatsError("x and y must have equal length >= 2")
    if len(set(x)) == 1 or len(set(y)) == 1:
        raise AllTied("a variable is constant; tau undefined")
    s = 0  # C - D
    for i in range(n):
        for j in range(i + 1, n):
            a = (x[i] > x[j]) - (x[i] < x[j])
            b = (y[i] > y[j]) - (y[i] < y[j])
            s += a * b
    n0 = n * (n - 1) // 2
    tx = Counter(x).values()
    ty = Counter(y).values()
    n1 = sum(t * (t - 1) // 2 for t in tx)
    n2 = sum(u * (u - 1) // 2 for u in ty)
    tau = s / math.sqrt((n0 - n1) * (n0 - n2))

    v0 = n * (n - 1) * (2 * n + 5)
    vt = sum(t * (t - 1) * (2 * t + 5) for t in tx)
    vu = sum(u * (u - 1) * (2 * u + 5) for u in ty)
    v1 = (sum(t * (t - 1) for t in tx) * sum(u * (u - 1) for u in ty)
          / (2.0 * n * (n - 1)))
    v2 = (sum(t * (t - 1) * (t - 2) for t in tx)
          * sum(u * (u - 1) * (u - 2) for u in ty)
          / (9.0 * n * (n - 1) * (n - 2))) if n > 2 else 0.0
    var = (v0 - vt - vu) / 18.0 + v1 + v2
    z = s / math.sqrt(var) if var > 0 else math.inf * np.sign(s)
    p = float(2.0 * norm.sf(abs(z))) if math.isfinite(z) else 0.0
    return float(tau), float(z), p


def holm_bonferroni(pvals, alpha: float = 0.05) -> list[bool]:
    """Step-down Holm correction; True marks a rejected null."""
    p = list(map(float, pvals))
    if any(not 0.0 <= v <= 1.0 for v in p):
        raise StatsError("p-values must lie in [0, 1]")
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    reject = [False] * m
    for k, idx in enumerate(order):
        if p[idx] < alpha / (m - k):
            reject[idx] = True
        else:
            break  # step-down stops at the first acceptance
    return reject


# ---------------------------------------------------------------------------
# Trajectory report

def _amalgamated_generations(histories) -> list[GenerationSample]:
    """Pool the per-generation fitness values of all supplied runs."""
    pooled: dict[int, list[float]] = {}
    for hist in histories:
        for g, gen in enumerate(hist.generations, start=1):
            pooled.setdefault(g, []).extend(ind.fitness for ind in gen)
    return [GenerationSample(g, pooled[g]) for g in sorted(pooled)]


def _top_half_or_none(sample: GenerationSample):
    kept = top_half(sample)
    return None if kept.degenerate else kept


def _anova_entry(a, b) -> dict:
    try:
        F, p = anova_oneway([a, b])
        return {"F": F, "p": p, "degenerate": False}
    except (StatsError, TypeError):
        return {"F": None, "p": None, "degenerate": True}


def trajectory_report(histories, alpha: float = 0.05) -> dict:
    """The four trajectory analyses plus per-generation percentile bands.

    histories: one or more GAHistory objects (repeats are amalgamated).
    """
    gens = _amalgamated_generations(histories)
    first, last = gens[0], gens[-1]
    mid = gens[len(gens) // 2] if len(gens) > 2 else gens[0]

    th_first, th_mid, th_last = map(_top_half_or_none, (first, mid, last))
    report = {
        "first_vs_last_tophalf": (_anova_entry(th_first, th_last)
                                  if th_first and th_last
                                  else {"F": None, "p": None, "degenerate": True}),
        "mid_vs_last_tophalf": (_anova_entry(th_mid, th_last)
                                if th_mid and th_last
                                else {"F": None, "p": None, "degenerate": True}),
        "mid_generation": mid.generation,
    }

    # All generations as a categorical factor.
    try:
        F, p = anova_oneway(gens)
        report["all_generations"] = {"F": F, "p": p, "degenerate": False}
    except DegenerateVariance:
        report["all_generations"] = {"F": None, "p": None, "degenerate": True}

    # Kendall: fitness against generation, every individual a data point.
    xs = [g.generation for g in gens for _ in g.fitnesses]
    ys = [v for g in gens for v in g.fitnesses]
    try:
        tau, z, p = kendall_tau(xs, ys)
        report["fitness_vs_generation"] = {"tau": tau, "z": z, "p": p, "degenerate": False}
    except AllTied:
        report["fitness_vs_generation"] = {"tau": None, "z": None, "p": None,
                                           "degenerate": True}

    # Holm across the two planned top-half comparisons.
    anova_ps = [report["first_vs_last_tophalf"], report["mid_vs_last_tophalf"]]
    testable = [e for e in anova_ps if not e["degenerate"]]
    if testable:
        rejects = holm_bonferroni([e["p"] for e in testable], alpha)
        for entry, rej in zip(testable, rejects):
            entry["holm_reject"] = rej

    report["percentile_bands"] = [
        {"generation": g.generation,
         "median": float(np.median(g.fitnesses)),
         "p25": float(np.percentile(g.fitnesses, 25)),
         "p75": float(np.percentile(g.fitnesses, 75)),
         "p10": float(np.percentile(g.fitnesses, 10)),
         "p90": float(np.percentile(g.fitnesses, 90))}
        for g in gens
    ]
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def bands_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["generation", "median", "p25", "p75", "p10", "p90"])
    for band in report["percentile_bands"]:
        w.writerow([band["generation"], *(repr(band[k]) for k in
                                          ("median", "p25", "p75", "p10", "p90"))])
    return buf.getvalue()
