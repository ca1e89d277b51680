"""Seeded per-epoch shuffling and mini-batching."""

from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from ..core.error_handling import ContractError
from .idx import Dataset


@dataclass(frozen=True)
class BatchPlan:
    seed: int
    batch_size: int
    drop_last: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be positive, got {self.batch_size}")


def batch_indices(count: int, plan: BatchPlan, epoch: int) -> list[np.ndarray]:
    """Index arrays of one epoch; the permutation is seeded with seed XOR epoch."""
    if plan.batch_size > count:
        raise ContractError(
            f"batch_size {plan.batch_size} exceeds dataset size {count}",
            {"batch_size": plan.batch_size, "count": count},
        )
    order = np.random.default_rng(plan.seed ^ epoch).permutation(count)
    stop = count - count % plan.batch_size if plan.drop_last else count
    return [order[start : start + plan.batch_size] for start in range(0, stop, plan.batch_size)]


def batches(
    dataset: Dataset, plan: BatchPlan, epoch: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """(images, labels) batches of one epoch."""
    for idx in batch_indices(len(dataset), plan, epoch):
        yield dataset.images[idx], dataset.labels[idx]
