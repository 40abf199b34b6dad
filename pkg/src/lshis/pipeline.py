"""Bucketize-then-sample pipeline."""

from __future__ import annotations

from dataclasses import dataclass

from .data import Dataset, apply_standardizer, fit_standardizer
from .lsh import Family, HashFamilyConfig, bucketize
from .sampling import Method, SamplerConfig, SelectionReport, run_selection


@dataclass(frozen=True)
class SelectionConfig:
    family: Family = Family.RHF
    method: Method = Method.DROP3_ONE
    n_ands: int = 4
    bin_width: float = 1.0
    k_neighbors: int = 3
    seed: int = 0
    standardize: bool = True
    boundaries_prose: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "method", Method.parse(self.method))

    @property
    def hash_config(self) -> HashFamilyConfig:
        return HashFamilyConfig(self.family, self.n_ands, self.bin_width, self.seed)

    @property
    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(self.method, self.k_neighbors, self.seed, self.boundaries_prose)

    @property
    def config_id(self) -> str:
        cid = f"{self.family.value}+{self.method.value}+{self.n_ands}"
        if self.family is not Family.RHF and self.bin_width != 1.0:
            cid += f"+r{self.bin_width:g}"
        return cid


def prepare(d: Dataset, standardize: bool = True) -> Dataset:
    if not standardize or d.n_rows < 2:
        return d
    return apply_standardizer(fit_standardizer(d), d)


def select_instances(d: Dataset, cfg: SelectionConfig, workers: int = 1) -> SelectionReport:
    """Standardize ``d`` (if enabled), hash it into buckets and sample each bucket.

    The indices in the report refer to rows of ``d``.
    """
    work = prepare(d, cfg.standardize)
    buckets = bucketize(work, cfg.hash_config, workers=workers)
    return run_selection(work, buckets, cfg.sampler_config, workers=workers)
