"""Nonparametric comparison of configurations over result tables.

Friedman with the Iman-Davenport F correction, Kruskal-Wallis, Wilcoxon
signed-rank and the Holm step-down adjustment.
"""

from __future__ import annotations

import csv
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats as sps

ALPHA = 0.05
EXACT_WILCOXON_MAX_N = 25


class StatsError(ValueError):
    pass


@dataclass
class TestResult:
    statistic: float
    p_value: float
    ranks: Optional[Dict[str, float]] = None
    adjusted_p: Optional[float] = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"statistic": self.statistic, "p_value": self.p_value}
        if self.ranks is not None:
            out["ranks"] = self.ranks
        if self.adjusted_p is not None:
            out["adjusted_p"] = self.adjusted_p
        out.update(self.details)
        return out


@dataclass
class ResultTable:
    """Blocks (dataset x fold) in rows, configurations in columns."""

    values: np.ndarray
    columns: List[str]
    rows: List[str]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape != (len(self.rows), len(self.columns)):
            raise StatsError("values must be a rows x columns matrix")

    @classmethod
    def from_flat_csv(cls, path, metric: str = "gmean",
                      exclude: Sequence[str] = ()) -> "ResultTable":
        cells: Dict[tuple, Dict[str, float]] = defaultdict(dict)
        configs: List[str] = []
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                if metric not in rec:
                    raise StatsError(f"metric column {metric!r} not in {path}")
                cfg = rec["config"]
                if cfg in exclude:
                    continue
                if cfg not in configs:
                    configs.append(cfg)
                cells[(rec.get("dataset", ""), rec["fold"])][cfg] = float(rec[metric])
        blocks = sorted(cells)
        vals = np.full((len(blocks), len(configs)), np.nan)
        for i, b in enumerate(blocks):
            for j, c in enumerate(configs):
                vals[i, j] = cells[b].get(c, np.nan)
        return cls(vals, configs, [f"{b[0]}:{b[1]}" for b in blocks])

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def drop(self, name: str) -> "ResultTable":
        keep = [j for j, c in enumerate(self.columns) if c != name]
        return ResultTable(self.values[:, keep], [self.columns[j] for j in keep], list(self.rows))


def midranks(values) -> np.ndarray:
    """Ascending ranks starting at 1; ties get the average rank."""
    return sps.rankdata(np.asarray(values, dtype=np.float64), method="average")


def friedman_iman_davenport(t: ResultTable) -> TestResult:
    """Friedman test on within-row ranks plus the Iman-Davenport F statistic.

    Larger values get larger ranks, so the best column has mean rank near k.
    """
    X = t.values
    N, k = X.shape
    if k < 2:
        raise StatsError("k >= 2 required")
    if N < 2:
        raise StatsError("N >= 2 rows required")
    if np.isnan(X).any():
        raise StatsError("table is incomplete")
    R = np.vstack([midranks(row) for row in X]).mean(axis=0)
    chi2 = 12.0 * N / (k * (k + 1)) * (np.sum(R ** 2) - k * (k + 1) ** 2 / 4.0)
    ranks = {c: float(r) for c, r in zip(t.columns, R)}
    if chi2 <= 1e-12:
        return TestResult(0.0, 1.0, ranks, details={"chi2": 0.0, "chi2_p": 1.0, "N": N, "k": k})
    chi2_p = float(sps.chi2.sf(chi2, k - 1))
    denom = N * (k - 1) - chi2
    if denom <= 1e-12:
        F, p = math.inf, 0.0
    else:
        F = (N - 1) * chi2 / denom
        p = float(sps.f.sf(F, k - 1, (k - 1) * (N - 1)))
    return TestResult(float(F), p, ranks,
                      details={"chi2": float(chi2), "chi2_p": chi2_p, "N": N, "k": k})


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> TestResult:
    """H statistic with tie correction; p from chi-square with g-1 dof."""
    if len(groups) < 2:
        raise StatsError("at least two groups required")
    sizes = [len(g) for g in groups]
    if min(sizes) == 0:
        raise StatsError("empty group")
    pooled = np.concatenate([np.asarray(g, dtype=np.float64) for g in groups])
    n = len(pooled)
    r = midranks(pooled)
    _, ties = np.unique(pooled, return_counts=True)
    correction = 1.0 - np.sum(ties ** 3 - ties) / (n ** 3 - n)
    if correction <= 0:
        return TestResult(0.0, 1.0)
    bounds = np.cumsum([0, *sizes])
    s = sum(r[bounds[i]:bounds[i + 1]].sum() ** 2 / sizes[i] for i in range(len(groups)))
    H = (12.0 / (n * (n + 1)) * s - 3 * (n + 1)) / correction
    H = max(H, 0.0)
    return TestResult(float(H), float(sps.chi2.sf(H, len(groups) - 1)))


def _exact_signed_rank_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """counts[s] = number of sign patterns whose doubled positive-rank sum is s."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(x, y, alternative: str = "two-sided") -> TestResult:
    """Signed-rank test on ``x - y``; zero differences are dropped.

    The statistic is W+, the rank sum of positive differences. ``greater``
    tests x > y. Exact null distribution up to 25 pairs, normal
    approximation with continuity and tie corrections beyond.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise StatsError("x and y must be paired vectors of equal length")
    if alternative not in ("two-sided", "greater", "less"):
        raise StatsError(f"unknown alternative {alternative!r}")
    d = x - y
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise StatsError("no non-zero differences")
    if n < 5:
        raise StatsError(f"too few non-zero differences ({n} < 5)")
    r = midranks(np.abs(d))
    w_plus = float(r[d > 0].sum())
    details = {"n": n, "method": "exact" if n <= EXACT_WILCOXON_MAX_N else "normal"}
    if n <= EXACT_WILCOXON_MAX_N:
        r2 = np.rint(2 * r).astype(np.int64)
        counts = _exact_signed_rank_counts(r2)
        probs = counts / counts.sum()
        w2 = int(round(2 * w_plus))
        p_ge = float(probs[w2:].sum())
        p_le = float(probs[: w2 + 1].sum())
    else:
        mean = n * (n + 1) / 4.0
        _, ties = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(ties ** 3 - ties) / 48.0
        sd = math.sqrt(var)
        p_ge = float(sps.norm.sf((w_plus - mean - 0.5) / sd))
        p_le = float(sps.norm.cdf((w_plus - mean + 0.5) / sd))
    if alternative == "greater":
        p = p_ge
    elif alternative == "less":
        p = p_le
    else:
        p = min(1.0, 2 * min(p_ge, p_le))
    return TestResult(w_plus, min(1.0, p), details=details)


def holm_adjust(p_values: Sequence[float]) -> List[float]:
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        return []
    if ((p < 0) | (p > 1)).any():
        raise StatsError("p-values must lie in [0, 1]")
    m = len(p)
    order = np.argsort(p, kind="stable")
    adj = np.empty(m)
    running = 0.0
    for j, i in enumerate(order):
        running = max(running, min(1.0, (m - j) * p[i]))
        adj[i] = running
    return adj.tolist()


def compare_to_reference(t: ResultTable, reference: str = "baseline",
                         alpha: float = ALPHA) -> dict:
    """Each configuration against the reference column.

    Kruskal-Wallis between the two samples, then a one-sided Wilcoxon
    ("better than reference") with Holm-adjusted p-values.
    """
    if reference not in t.columns:
        raise StatsError(f"reference column {reference!r} missing")
    ref = t.column(reference)
    others = [c for c in t.columns if c != reference]
    out: Dict[str, dict] = {}
    raw = []
    for c in others:
        col = t.column(c)
        kw = kruskal_wallis([col, ref])
        try:
            w = wilcoxon_signed_rank(col, ref, alternative="greater")
            wp = w.p_value
            wstat = w.statistic
        except StatsError as exc:
            wp, wstat = 1.0, None
            out.setdefault(c, {})["wilcoxon_error"] = str(exc)
        raw.append(wp)
        out.setdefault(c, {}).update({
            "mean": float(np.mean(col)), "reference_mean": float(np.mean(ref)),
            "kruskal_h": kw.statistic, "kruskal_p": kw.p_value,
            "wilcoxon_w": wstat, "wilcoxon_p": wp,
        })
    for c, adj in zip(others, holm_adjust(raw)):
        out[c]["wilcoxon_p_holm"] = adj
        out[c]["significant"] = bool(adj < alpha)
    return out


def pairwise_wilcoxon(t: ResultTable, adjust: bool = False, alpha: float = ALPHA) -> List[dict]:
    pairs = list(itertools.combinations(t.columns, 2))
    rows, raw = [], []
    for a, b in pairs:
        try:
            res = wilcoxon_signed_rank(t.column(a), t.column(b))
            rows.append({"a": a, "b": b, "statistic": res.statistic, "p_value": res.p_value})
        except StatsError as exc:
            rows.append({"a": a, "b": b, "statistic": None, "p_value": 1.0, "error": str(exc)})
        raw.append(rows[-1]["p_value"])
    final = holm_adjust(raw) if adjust else raw
    for row, p in zip(rows, final):
        if adjust:
            row["adjusted_p"] = p
        row["significant"] = bool(p < alpha)
    return rows


def report(t: ResultTable, reference: Optional[str] = "baseline", alpha: float = ALPHA) -> dict:
    """Friedman over the non-reference columns plus the reference comparison."""
    has_ref = reference is not None and reference in t.columns
    configs = t.drop(reference) if has_ref else t
    if len(configs.columns) < 2:
        configs = t
    fr = friedman_iman_davenport(configs)
    out = {
        "metric_blocks": len(t.rows),
        "friedman": {**fr.to_dict(), "significant": bool(fr.p_value < alpha)},
        "pairwise_wilcoxon": pairwise_wilcoxon(configs),
    }
    if has_ref:
        out["reference"] = reference
        out["vs_reference"] = compare_to_reference(t, reference, alpha)
    return out
