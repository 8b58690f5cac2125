"""Shared helpers: small datasets and fast training configurations."""

from costream import synthdata
from costream.config import TrainConfig


def small_dataset(seed=0, n=4, per_class=6, length=12, d_in=8, sigma=0.5):
    """A dataset small enough for per-test training loops."""
    return synthdata.generate(n, per_class, length, d_in, seed, sigma=sigma)


def fast_config(**overrides):
    """Low-width config so fit() finishes in well under a second."""
    base = dict(
        seed=0,
        feature_dim=8,
        hidden_dim=8,
        n_categories=2,
        m_instances=2,
        k_segments=2,
        snippet=3,
        max_epochs=4,
        early_stop=False,
        val_fraction=0.25,
    )
    base.update(overrides)
    return TrainConfig(**base)
