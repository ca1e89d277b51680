"""Dataset loading, synthetic fixtures and batching."""

from .batching import BatchPlan, batch_indices, batches
from .idx import Dataset, load_idx, read_idx_array, save_idx, write_idx
from .synthetic import synth_appendix_uniform_pair, synth_gaussian_pair

__all__ = [
    "BatchPlan",
    "Dataset",
    "batch_indices",
    "batches",
    "load_idx",
    "read_idx_array",
    "save_idx",
    "synth_appendix_uniform_pair",
    "synth_gaussian_pair",
    "write_idx",
]
