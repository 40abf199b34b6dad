"""Wall-clock scalability sweeps over worker counts and data fractions."""

from __future__ import annotations

import csv
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import List, Sequence

import numpy as np

from .data import Dataset, stratified_subsample
from .lsh import bucketize
from .pipeline import SelectionConfig, prepare
from .sampling import run_selection

log = logging.getLogger(__name__)

CSV_FIELDS = ("workers", "fraction", "family", "method", "n_ands", "seconds", "checksum",
              "n_rows", "n_buckets", "max_bucket")


class DeterminismError(RuntimeError):
    """Selection output changed with the worker count."""


@dataclass(frozen=True)
class BenchPlan:
    worker_counts: tuple = (1, 2, 4, 6, 8, 12, 16)
    fractions: tuple = (0.2, 0.4, 0.6, 0.8, 1.0)
    repetitions: int = 3
    seed: int = 0
    n_folds: int = 5

    def __post_init__(self) -> None:
        if self.repetitions < 3:
            raise ValueError("repetitions must be >= 3 for stable medians")
        if not self.worker_counts or min(self.worker_counts) < 1:
            raise ValueError("worker counts must be >= 1")
        if any(not 0 < f <= 1 for f in self.fractions):
            raise ValueError("fractions must lie in (0, 1]")


@dataclass
class BenchRecord:
    config_id: str
    family: str
    method: str
    n_ands: int
    workers: int
    fraction: float
    n_rows: int
    seconds: float
    checksum: str
    n_buckets: int = 0
    max_bucket: int = 0
    # bucket counts per power-of-two size bin: [1], [2,3], [4,7], ...
    bucket_size_hist: List[int] = field(default_factory=list)

    def csv_row(self) -> dict:
        row = asdict(self)
        return {k: row[k] for k in CSV_FIELDS}


def _size_hist(sizes: np.ndarray) -> List[int]:
    if len(sizes) == 0:
        return []
    bins = np.floor(np.log2(sizes)).astype(int)
    return np.bincount(bins).tolist()


def time_selection(d: Dataset, cfg: SelectionConfig, workers: int, repetitions: int):
    """Median wall-clock of the full pipeline after one warm-up run."""
    def once():
        work = prepare(d, cfg.standardize)
        buckets = bucketize(work, cfg.hash_config, workers=workers)
        rep = run_selection(work, buckets, cfg.sampler_config, workers=workers)
        return rep, buckets.sizes()

    ref, sizes = once()
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        rep, _ = once()
        times.append(time.perf_counter() - t0)
        if rep.checksum() != ref.checksum():
            raise DeterminismError(f"{cfg.config_id}: repeated run changed the selection")
    return statistics.median(times), ref, sizes


def _record(cfg: SelectionConfig, workers: int, fraction: float, n_rows: int,
            seconds: float, report, sizes) -> BenchRecord:
    return BenchRecord(cfg.config_id, cfg.family.value, cfg.method.value, cfg.n_ands, workers,
                       fraction, n_rows, seconds, report.checksum(), len(sizes),
                       int(sizes.max()) if len(sizes) else 0, _size_hist(sizes))


def bench_horizontal(d: Dataset, cfgs: Sequence[SelectionConfig], plan: BenchPlan) -> List[BenchRecord]:
    """Fixed data, varying worker count. Checksums must agree across workers."""
    out = []
    for cfg in cfgs:
        checksum = None
        for w in plan.worker_counts:
            secs, rep, sizes = time_selection(d, cfg, w, plan.repetitions)
            if checksum is None:
                checksum = rep.checksum()
            elif rep.checksum() != checksum:
                raise DeterminismError(f"{cfg.config_id}: checksum differs at {w} workers")
            out.append(_record(cfg, w, 1.0, d.n_rows, secs, rep, sizes))
            log.info("horizontal %s workers=%d %.4fs", cfg.config_id, w, secs)
    return out


def bench_vertical(d: Dataset, cfgs: Sequence[SelectionConfig], plan: BenchPlan,
                   workers: int | None = None) -> List[BenchRecord]:
    """Fixed worker count, stratified subsamples of growing size."""
    workers = max(plan.worker_counts) if workers is None else workers
    out = []
    for frac in plan.fractions:
        idx = stratified_subsample(d, frac, plan.seed)
        sub = d.subset(idx)
        if sub.class_counts()[d.minority_class] < plan.n_folds:
            log.warning("fraction %.2f leaves fewer than %d minority rows; skipped", frac, plan.n_folds)
            continue
        for cfg in cfgs:
            secs, rep, sizes = time_selection(sub, cfg, workers, plan.repetitions)
            out.append(_record(cfg, workers, frac, sub.n_rows, secs, rep, sizes))
            log.info("vertical %s fraction=%.2f %.4fs", cfg.config_id, frac, secs)
    return out


def linear_r2(x: Sequence[float], y: Sequence[float]) -> float:
    """Coefficient of determination of an ordinary least-squares line."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return 1.0 - float(np.sum(resid ** 2) / ss_tot) if ss_tot > 0 else 1.0


def speedups(records: Sequence[BenchRecord]) -> dict:
    """Per-config speedup of each worker count relative to the smallest."""
    by_cfg: dict = {}
    for r in records:
        by_cfg.setdefault(r.config_id, []).append(r)
    out = {}
    for cid, recs in by_cfg.items():
        recs = sorted(recs, key=lambda r: r.workers)
        base = recs[0].seconds
        out[cid] = {r.workers: base / r.seconds for r in recs}
    return out


def write_csv(records: Sequence[BenchRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in records:
            w.writerow(r.csv_row())
