"""Category-balanced batch construction.

A batch drawn with spec (N, M) holds N distinct categories times M
instances, and every instance contributes both of its modality views,
so one batch feeds 2*N*M views forward. Instances are drawn without
replacement within a batch when a category has at least M candidates,
with replacement otherwise. An epoch is a fixed-length plan of
ceil(total / (N*M)) batches whose category choices reshuffle every
epoch; all draws derive from (seed, epoch), so plans are reproducible
and never depend on call order.
"""

from dataclasses import dataclass

import numpy as np

from costream.errors import ContractError

_SEED_SAMPLER = 23


@dataclass
class BatchSpec:
    n_categories: int
    m_instances: int

    @property
    def instances_per_batch(self) -> int:
        return self.n_categories * self.m_instances

    @property
    def views_per_batch(self) -> int:
        return 2 * self.instances_per_batch


@dataclass
class Batch:
    """Instance indices into the dataset plus their labels, one row per instance."""

    indices: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


def _category_index(labels: np.ndarray) -> dict[int, np.ndarray]:
    return {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}


def next_batch(labels: np.ndarray, spec: BatchSpec, rng: np.random.Generator) -> Batch:
    """Draw one balanced batch from the label array."""
    labels = np.asarray(labels, dtype=np.int64)
    by_cat = _category_index(labels)
    if spec.n_categories < 2:
        raise ContractError(f"batches need at least 2 categories, spec asks {spec.n_categories}")
    if spec.m_instances < 2:
        raise ContractError(f"batches need at least 2 instances per category, spec asks {spec.m_instances}")
    if len(by_cat) < spec.n_categories:
        raise ContractError(
            f"dataset has {len(by_cat)} categories, batch spec needs {spec.n_categories}")

    cats = rng.choice(sorted(by_cat), size=spec.n_categories, replace=False)
    picked = []
    for c in cats:
        pool = by_cat[int(c)]
        replace = pool.size < spec.m_instances
        picked.append(rng.choice(pool, size=spec.m_instances, replace=replace))
    indices = np.concatenate(picked)
    return Batch(indices=indices, labels=labels[indices])


def epoch_plan(labels: np.ndarray, spec: BatchSpec, seed: int, epoch: int) -> list[Batch]:
    """All batches of one epoch; identical for identical (seed, epoch)."""
    labels = np.asarray(labels, dtype=np.int64)
    total = labels.size
    per_batch = spec.instances_per_batch
    n_batches = -(-total // per_batch)
    rng = np.random.default_rng([seed, _SEED_SAMPLER, epoch])
    return [next_batch(labels, spec, rng) for _ in range(n_batches)]
