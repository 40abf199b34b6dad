"""Locality-sensitive hash families used as a one-shot partitioner.

Three families are supported:

* ``RHF``: random hyperplanes, one bit per function (sign of ``v . x``).
* ``DPF``: p-stable projections binned as ``floor((a . x + b) / r)``.
* ``RHF_DPF``: both of the above over the same random vectors, the RHF
  bits followed by the DPF integers.

A bucket is the set of rows sharing the whole signature (AND construction).
"""

from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterator, Tuple

import numpy as np

from .data import Dataset

BucketKey = Tuple[int, ...]


class Family(str, enum.Enum):
    RHF = "rhf"
    DPF = "dpf"
    RHF_DPF = "rhf-dpf"

    @classmethod
    def parse(cls, value: "str | Family") -> "Family":
        if isinstance(value, Family):
            return value
        v = value.strip().lower().replace("_", "-").replace("+", "-")
        for fam in cls:
            if fam.value == v:
                return fam
        raise ValueError(f"unknown hash family {value!r}")


@dataclass(frozen=True)
class HashFamilyConfig:
    family: Family = Family.RHF
    n_ands: int = 4
    bin_width: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.n_ands < 1:
            raise ValueError("n_ands must be >= 1")
        if not self.bin_width > 0:
            raise ValueError("bin_width must be > 0")

    @property
    def signature_length(self) -> int:
        return 2 * self.n_ands if self.family is Family.RHF_DPF else self.n_ands


@dataclass(frozen=True)
class HasherState:
    config: HashFamilyConfig
    random_vectors: np.ndarray  # (n_ands, n_features)
    offsets: np.ndarray  # (n_ands,), in [0, 1)

    @property
    def n_features(self) -> int:
        return self.random_vectors.shape[1]

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_features:
            raise ValueError(
                f"dimension mismatch: hasher built for {self.n_features} features, got {X.shape[-1]}"
            )
        return X

    def rhf_codes(self, X: np.ndarray) -> np.ndarray:
        proj = self._check(X) @ self.random_vectors.T
        return (proj >= 0).astype(np.int64)

    def dpf_codes(self, X: np.ndarray, r: float | None = None) -> np.ndarray:
        r = self.config.bin_width if r is None else r
        if not r > 0:
            raise ValueError("bin width must be > 0")
        proj = self._check(X) @ self.random_vectors.T
        return np.floor((proj + self.offsets) / r).astype(np.int64)

    def codes(self, X: np.ndarray) -> np.ndarray:
        """Signature matrix for a batch of rows (one row per input)."""
        fam = self.config.family
        if fam is Family.RHF:
            return self.rhf_codes(X)
        if fam is Family.DPF:
            return self.dpf_codes(X)
        X = self._check(X)
        proj = X @ self.random_vectors.T
        bits = (proj >= 0).astype(np.int64)
        bins = np.floor((proj + self.offsets) / self.config.bin_width).astype(np.int64)
        return np.concatenate([bits, bins], axis=-1)

    def prefix(self, k: int) -> "HasherState":
        """Hasher made of the first ``k`` functions only."""
        if not 1 <= k <= self.config.n_ands:
            raise ValueError("prefix length out of range")
        cfg = HashFamilyConfig(self.config.family, k, self.config.bin_width, self.config.seed)
        return HasherState(cfg, self.random_vectors[:k], self.offsets[:k])


def build_hasher(cfg: HashFamilyConfig, n_features: int) -> HasherState:
    """Draw hash functions from ``cfg.seed``.

    Vectors and offsets come from two independent Philox streams, so the
    first ``k`` functions are the same whatever ``n_ands`` is.
    """
    if n_features < 1:
        raise ValueError("n_features must be >= 1")
    vec_ss, off_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    vectors = np.random.Generator(np.random.Philox(vec_ss)).standard_normal((cfg.n_ands, n_features))
    offsets = np.random.Generator(np.random.Philox(off_ss)).random(cfg.n_ands)
    vectors.setflags(write=False)
    offsets.setflags(write=False)
    return HasherState(cfg, vectors, offsets)


def hash_rhf(h: HasherState, x) -> BucketKey:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return tuple(int(v) for v in h.rhf_codes(x))


def hash_dpf(h: HasherState, x, r: float | None = None) -> BucketKey:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return tuple(int(v) for v in h.dpf_codes(x, r))


def hash_combined(h: HasherState, x, r: float | None = None) -> BucketKey:
    return hash_rhf(h, x) + hash_dpf(h, x, r)


class BucketMap:
    """Partition of row indices keyed by signature, iterated in key order."""

    def __init__(self, buckets: Dict[BucketKey, np.ndarray], n_rows: int):
        self._buckets = {k: buckets[k] for k in sorted(buckets)}
        self.n_rows = n_rows

    def __len__(self) -> int:
        return len(self._buckets)

    def __iter__(self) -> Iterator[BucketKey]:
        return iter(self._buckets)

    def __getitem__(self, key: BucketKey) -> np.ndarray:
        return self._buckets[key]

    def items(self):
        return self._buckets.items()

    def keys(self):
        return self._buckets.keys()

    def sizes(self) -> np.ndarray:
        return np.array([len(v) for v in self._buckets.values()], dtype=np.int64)

    def to_json(self, labels: np.ndarray | None = None) -> str:
        out = []
        for key, idx in self._buckets.items():
            rec = {"signature": list(key), "size": int(len(idx))}
            if labels is not None:
                counts = np.bincount(labels[idx], minlength=2)
                rec["class_counts"] = {"0": int(counts[0]), "1": int(counts[1])}
            out.append(rec)
        return json.dumps(out)


def _group(codes: np.ndarray) -> Dict[BucketKey, np.ndarray]:
    uniq, inverse = np.unique(codes, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.flatnonzero(np.diff(inverse[order])) + 1
    groups = np.split(order, bounds)
    return {tuple(int(v) for v in uniq[i]): g for i, g in enumerate(groups)}


def signatures(d: Dataset, h: HasherState, workers: int = 1, chunk: int = 65536) -> np.ndarray:
    X = d.features
    if workers <= 1 or len(X) <= chunk:
        return h.codes(X)
    starts = range(0, len(X), chunk)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda s: h.codes(X[s:s + chunk]), starts))
    return np.concatenate(parts, axis=0)


def bucketize(d: Dataset, cfg: HashFamilyConfig, workers: int = 1,
              hasher: HasherState | None = None) -> BucketMap:
    """Group the rows of ``d`` by their full signature."""
    h = hasher if hasher is not None else build_hasher(cfg, d.n_features)
    codes = signatures(d, h, workers)
    return BucketMap(_group(codes), d.n_rows)
