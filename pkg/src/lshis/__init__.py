"""LSH bucketing plus imbalance-aware instance selection."""

from .data import Dataset, load_csv, load_pageblocks, make_half_circles, make_inner_circles, plan_folds
from .eval import ModelGrid, run_cv
from .lsh import Family, HashFamilyConfig, bucketize, build_hasher
from .pipeline import SelectionConfig, select_instances
from .sampling import Method, SamplerConfig, SelectionReport, run_selection

__all__ = [
    "Dataset", "Family", "HashFamilyConfig", "Method", "ModelGrid", "SamplerConfig",
    "SelectionConfig", "SelectionReport", "bucketize", "build_hasher", "load_csv",
    "load_pageblocks", "make_half_circles", "make_inner_circles", "plan_folds", "run_cv",
    "run_selection", "select_instances",
]
__version__ = "0.1.0"
