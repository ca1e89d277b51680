"""Exact earth mover's distance oracles and moment bounds."""

from .bounds import (
    bound_sandwich,
    f_pc_eval,
    lipschitz_violations,
    lower_bound_p2_noise,
    lower_bound_thm2,
    thm1_terms,
    unbounded_example_lower,
    unitized_upper_bound,
    upper_bound_noisy,
    upper_bound_thm1,
)
from .models import BoundReport, LipschitzProbe, MomentVector, NoiseVector, SampleSet
from .oracles import em_exact_1d, em_exact_assignment
from .sample_io import read_sample_set, write_sample_set

__all__ = [
    "BoundReport",
    "LipschitzProbe",
    "MomentVector",
    "NoiseVector",
    "SampleSet",
    "bound_sandwich",
    "em_exact_1d",
    "em_exact_assignment",
    "f_pc_eval",
    "lipschitz_violations",
    "lower_bound_p2_noise",
    "lower_bound_thm2",
    "read_sample_set",
    "thm1_terms",
    "unbounded_example_lower",
    "unitized_upper_bound",
    "upper_bound_noisy",
    "upper_bound_thm1",
    "write_sample_set",
]
