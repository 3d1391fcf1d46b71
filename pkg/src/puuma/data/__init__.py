from .augment import AugmentConfig, augment
from .categories import CATEGORY_NAMES, PretermCategory, categorize, is_preterm
from .dataset_io import load_dataset, load_split, read_case, read_splits, write_case, write_dataset
from .patches import (NoValidPatchError, mask_counts, overlap_fraction, resize, sample_patch,
                      sliding_window_origins, valid_origins)
from .phantom import Case, PhantomSpec, category_counts, generate_cohort, generate_phantom
from .relaxometry import decay_signals, fit_t2star
from .splits import BalancedSampler, StratificationError, allocate, stratified_split

balanced_sampler = BalancedSampler

__all__ = [
    "AugmentConfig", "BalancedSampler", "CATEGORY_NAMES", "Case", "NoValidPatchError", "PhantomSpec",
    "PretermCategory", "StratificationError", "allocate", "augment", "balanced_sampler", "categorize",
    "category_counts", "decay_signals", "fit_t2star", "generate_cohort", "generate_phantom",
    "is_preterm", "load_dataset", "load_split", "mask_counts", "overlap_fraction", "read_case",
    "read_splits", "resize", "sample_patch", "sliding_window_origins", "stratified_split",
    "valid_origins", "write_case", "write_dataset",
]
