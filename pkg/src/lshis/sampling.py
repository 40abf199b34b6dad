"""Per-bucket instance selection for imbalanced binary data.

All three samplers share one rule: an instance of the (global) minority
class is never dropped.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .data import Dataset
from .lsh import BucketKey, BucketMap

BOUNDARY_SIGMA_MIN = 0.001


class Method(str, enum.Enum):
    ENTROPY = "entropy"
    DROP3_ONE = "drop3-one"
    DROP3_BOUNDARIES = "drop3-boundaries"

    @classmethod
    def parse(cls, value: "str | Method") -> "Method":
        if isinstance(value, Method):
            return value
        v = value.strip().lower().replace("_", "-")
        for m in cls:
            if m.value == v:
                return m
        raise ValueError(f"unknown sampling method {value!r}")


@dataclass(frozen=True)
class SamplerConfig:
    method: Method = Method.ENTROPY
    k_neighbors: int = 3
    seed: int = 0
    # keep d >= mean(d) - sigma instead of the two-sided band
    boundaries_prose: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method.parse(self.method))
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")

    @property
    def mode(self) -> str | None:
        return {Method.DROP3_ONE: "one", Method.DROP3_BOUNDARIES: "boundaries"}.get(self.method)


@dataclass
class BucketStats:
    size: int
    kept: int
    entropy: float


@dataclass
class SelectionReport:
    selected: np.ndarray
    n_rows: int
    retention_fraction: float
    ir_before: float
    ir_after: float
    class_counts_before: dict
    class_counts_after: dict
    buckets: List[BucketStats] = field(default_factory=list)

    def checksum(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.selected, dtype="<i8").tobytes()).hexdigest()

    def to_dict(self, include_buckets: bool = True) -> dict:
        out = {
            "n_rows": self.n_rows,
            "n_selected": int(len(self.selected)),
            "retention_fraction": self.retention_fraction,
            "ir_before": self.ir_before,
            "ir_after": self.ir_after,
            "class_counts_before": self.class_counts_before,
            "class_counts_after": self.class_counts_after,
            "n_buckets": len(self.buckets),
            "checksum": self.checksum(),
            "selected": self.selected.tolist(),
        }
        if include_buckets:
            out["buckets"] = [[b.size, b.kept, b.entropy] for b in self.buckets]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def write_indices_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("index\n")
            fh.writelines(f"{i}\n" for i in self.selected)


def read_indices_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "index":
            raise ValueError(f"{path}: expected header 'index'")
        return np.array([int(line) for line in fh if line.strip()], dtype=np.int64)


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def bucket_entropy(labels_in_bucket, global_minority: int) -> float:
    """Binary Shannon entropy (base 2) of the bucket's class proportions."""
    labels = np.asarray(labels_in_bucket)
    n = labels.size
    if n == 0:
        raise ValueError("empty bucket")
    p = np.count_nonzero(labels == global_minority) / n
    if p == 0.0 or p == 1.0:
        return 0.0
    return float(-p * math.log2(p) - (1 - p) * math.log2(1 - p))


def bucket_rng(seed: int, key: BucketKey) -> np.random.Generator:
    """Random stream for one bucket, independent of processing order."""
    h = hashlib.blake2b(digest_size=16)
    h.update(int(seed % 2**64).to_bytes(8, "little"))
    h.update(np.asarray(key, dtype="<i8").tobytes())
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


def entropy_sample(indices, labels, global_minority: int, rng: np.random.Generator) -> np.ndarray:
    """Keep all minority rows plus an entropy-sized share of the majority.

    ``indices`` and ``labels`` are aligned; the result is a sorted subset of
    ``indices``.
    """
    indices = np.asarray(indices, dtype=np.int64)
    labels = np.asarray(labels)
    is_min = labels == global_minority
    minority = indices[is_min]
    majority = indices[~is_min]
    if len(majority) == 0:
        return np.sort(minority)
    if len(minority) == 0:
        return indices[[rng.integers(len(indices))]]
    H = bucket_entropy(labels, global_minority)
    n_keep = min(len(majority), max(1, round_half_away(H * len(majority))))
    if n_keep == len(majority):
        picked = majority
    else:
        picked = rng.choice(majority, size=n_keep, replace=False)
    return np.sort(np.concatenate([minority, picked]))


def _sqdist(X: np.ndarray, i: int) -> np.ndarray:
    diff = X - X[i]
    return np.einsum("ij,ij->i", diff, diff)


def _vote(neigh: Sequence[int], y: np.ndarray, minority: int) -> int:
    n_min = sum(1 for j in neigh if y[j] == minority)
    return minority if 2 * n_min >= len(neigh) else 1 - minority


_ORDER_CACHE_MAX = 4096


def drop3_mixed(X: np.ndarray, y: np.ndarray, minority: int, k: int) -> np.ndarray:
    """Modified DROP3 on one mixed bucket; returns a boolean keep mask.

    Local index order stands in for the global row order when breaking
    distance ties. Removed instances keep a maintained neighbour list and
    stay in associate lists.
    """
    n = len(X)
    cache = n <= _ORDER_CACHE_MAX
    enemy = np.empty(n)
    orders: list[np.ndarray] = []
    neighbors: list[list[int]] = []
    associates: list[set[int]] = [set() for _ in range(n)]
    for i in range(n):
        d = _sqdist(X, i)
        enemy[i] = d[y != y[i]].min()
        d[i] = np.inf
        ranked = np.argsort(d, kind="stable")[: n - 1]
        if cache:
            orders.append(ranked.astype(np.int32))
        neighbors.append([int(j) for j in ranked[: k + 1]])
        for j in neighbors[i]:
            associates[j].add(i)
    # a neighbour list is always the first alive entries of the row's order
    pointer = [len(lst) for lst in neighbors]

    alive = np.ones(n, dtype=bool)

    def next_neighbor(a: int) -> int | None:
        if cache:
            row = orders[a]
            p = pointer[a]
            while p < n - 1:
                c = int(row[p])
                p += 1
                if alive[c]:
                    pointer[a] = p
                    return c
            pointer[a] = p
            return None
        cand = alive.copy()
        cand[a] = False
        cand[neighbors[a]] = False
        if not cand.any():
            return None
        return int(np.argmin(np.where(cand, _sqdist(X, a), np.inf)))

    order = sorted(range(n), key=lambda i: (-enemy[i], i))
    for s in order:
        if y[s] == minority:
            continue
        assoc = sorted(associates[s])
        with_s = without_s = 0
        for a in assoc:
            lst = neighbors[a]
            with_s += _vote(lst[:k], y, minority) == y[a]
            without_s += _vote([j for j in lst if j != s][:k], y, minority) == y[a]
        if without_s < with_s:
            continue
        alive[s] = False
        for a in assoc:
            neighbors[a].remove(s)
            j = next_neighbor(a)
            if j is not None:
                neighbors[a].append(j)
                associates[j].add(a)
        associates[s] = set()
    return alive


def boundaries_keep(X: np.ndarray, prose: bool = False) -> np.ndarray:
    """Keep mask for a single-class majority bucket in boundaries mode."""
    centroid = X.mean(axis=0)
    d = np.sqrt(np.einsum("ij,ij->i", X - centroid, X - centroid))
    sigma = d.std()
    if sigma > BOUNDARY_SIGMA_MIN:
        mean = d.mean()
        keep = d >= mean - sigma
        if not prose:
            keep &= d <= mean + sigma
        if keep.any():
            return keep
    keep = np.zeros(len(X), dtype=bool)
    keep[int(np.argmin(d))] = True
    return keep


def drop3_sample(indices, features, labels, cfg: SamplerConfig, global_minority: int,
                 rng: np.random.Generator) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    n_min = int(np.count_nonzero(y == global_minority))
    if n_min == len(y):
        return np.sort(indices)
    if n_min == 0:
        if cfg.mode == "boundaries":
            return np.sort(indices[boundaries_keep(X, cfg.boundaries_prose)])
        return indices[[rng.integers(len(indices))]]
    return np.sort(indices[drop3_mixed(X, y, global_minority, cfg.k_neighbors)])


def sample_bucket(d: Dataset, key: BucketKey, idx: np.ndarray, cfg: SamplerConfig):
    rng = bucket_rng(cfg.seed, key)
    labels = d.labels[idx]
    if cfg.method is Method.ENTROPY:
        kept = entropy_sample(idx, labels, d.minority_class, rng)
    else:
        kept = drop3_sample(idx, d.features[idx], labels, cfg, d.minority_class, rng)
    return kept, BucketStats(len(idx), len(kept), bucket_entropy(labels, d.minority_class))


def run_selection(d: Dataset, buckets: BucketMap, cfg: SamplerConfig, workers: int = 1) -> SelectionReport:
    """Apply the configured sampler to every bucket and merge the results."""
    items = list(buckets.items())
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda kv: sample_bucket(d, kv[0], kv[1], cfg), items))
    else:
        results = [sample_bucket(d, key, idx, cfg) for key, idx in items]
    selected = np.sort(np.concatenate([r[0] for r in results])) if results else np.empty(0, np.int64)
    before = d.class_counts()
    kept_labels = np.bincount(d.labels[selected], minlength=2)
    after = {0: int(kept_labels[0]), 1: int(kept_labels[1])}
    n_min_after = after[d.minority_class]
    ir_after = after[d.majority_class] / n_min_after if n_min_after else math.inf
    names = d.class_names
    return SelectionReport(
        selected=selected,
        n_rows=d.n_rows,
        retention_fraction=len(selected) / d.n_rows,
        ir_before=d.ir,
        ir_after=ir_after,
        class_counts_before={names[c]: n for c, n in before.items()},
        class_counts_after={names[c]: n for c, n in after.items()},
        buckets=[r[1] for r in results],
    )
