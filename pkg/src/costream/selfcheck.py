"""A small randomized objective for end-to-end gradient verification.

Builds a tiny model and batch, randomizes every parameter (including
the connection output maps, which start at zero in real training and
would otherwise hide the cross-stream path), and exposes the full
training objective as a closure suitable for ``grad_check``. Also
reports kink margins: the smallest distance of any relu input, hinge
argument, or mining decision from its switch point. Points with tiny
margins are legitimate finite-difference failures, not gradient bugs,
so callers should redraw the point seed until margins clear the
finite-difference step by a wide factor.
"""

from dataclasses import dataclass

import numpy as np

from costream.config import TrainConfig
from costream.errors import ConfigError
from costream.extractor import preactivation_margin
from costream.losses import cross_entropy, discrim_embed, total_loss, triplet_inter
from costream.model import Model, build_model, forward_views
from costream.tensor import Tensor, concat

TINY_CONFIG = dict(feature_dim=8, hidden_dim=6, embed_dim=4, proj_dim=8,
                   n_categories=3, m_instances=2, aggregation="avg")


@dataclass
class ObjectiveFixture:
    model: Model
    frames_f: np.ndarray
    frames_o: np.ndarray
    labels: np.ndarray

    def params(self) -> dict[str, Tensor]:
        return self.model.parameters()

    def objective(self) -> Tensor:
        cfg = self.model.config
        result = forward_views(self.model, self.frames_f, self.frames_o)
        l1 = triplet_inter(result.emb_f, result.emb_o, self.labels, cfg.alpha1,
                           positive_mode=cfg.positive_mode) if cfg.ranking_enabled else None
        l2 = discrim_embed(result.emb_f, result.emb_o, self.labels,
                           cfg.alpha2, cfg.alpha3) if cfg.ranking_enabled else None
        logits = concat([result.logits_f, result.logits_o], axis=0)
        l3 = cross_entropy(logits, np.concatenate([self.labels, self.labels]))
        lam1 = cfg.lambda1 if cfg.ranking_enabled else 0.0
        lam2 = cfg.lambda2 if cfg.ranking_enabled else 0.0
        total, _ = total_loss(l1, l2, l3, lam1, lam2)
        return total

    def kink_margins(self) -> dict[str, float]:
        """Distance of every non-smooth decision from flipping."""
        cfg = self.model.config
        b, t, d_in = self.frames_f.shape
        flat_f = self.frames_f.reshape(b * t, d_in)
        flat_o = self.frames_o.reshape(b * t, d_in)
        margins = {
            "relu_f": preactivation_margin(self.model.extractor_f, flat_f),
            "relu_o": preactivation_margin(self.model.extractor_o, flat_o),
        }
        result = forward_views(self.model, self.frames_f, self.frames_o)
        if cfg.ranking_enabled:
            _, t_details = triplet_inter(result.emb_f, result.emb_o, self.labels,
                                         cfg.alpha1, positive_mode=cfg.positive_mode,
                                         return_details=True)
            _, d_details = discrim_embed(result.emb_f, result.emb_o, self.labels,
                                         cfg.alpha2, cfg.alpha3, return_details=True)
            margins["hinge_ranking"] = t_details.min_abs_hinge_arg
            margins["mining_gap"] = t_details.min_mining_gap
            margins["hinge_structure"] = d_details.min_abs_hinge_arg
        return margins

    def min_margin(self) -> float:
        return min(self.kink_margins().values())


def make_fixture(config: TrainConfig | None = None, point_seed: int = 0,
                 n_classes: int = 3, per_class: int = 2, t: int = 4,
                 d_in: int = 5) -> ObjectiveFixture:
    """Tiny randomized model and batch; identical inputs give identical fixtures."""
    if config is None:
        config = TrainConfig(**TINY_CONFIG)
    if config.aggregation == "max":
        raise ConfigError("the gradient fixture avoids max aggregation (adds its own kinks)")
    rng = np.random.default_rng([point_seed, 101])
    model = build_model(config, n_classes, d_in,
                        sequence_length=t if config.aggregation == "concat" else None)
    for p in model.parameters().values():
        p.data = rng.normal(scale=0.6, size=p.shape)
    labels = np.repeat(np.arange(n_classes), per_class)
    frames_f = rng.normal(size=(labels.size, t, d_in)) + labels[:, None, None] * 0.5
    frames_o = rng.normal(size=(labels.size, t, d_in)) - labels[:, None, None] * 0.5
    return ObjectiveFixture(model=model, frames_f=frames_f, frames_o=frames_o, labels=labels)


def well_conditioned_fixture(config: TrainConfig | None = None, start_seed: int = 0,
                             min_margin: float = 1e-3, attempts: int = 50,
                             **kwargs) -> tuple[ObjectiveFixture, int]:
    """First fixture from start_seed onward whose kink margins clear min_margin."""
    for offset in range(attempts):
        seed = start_seed + offset
        fixture = make_fixture(config, point_seed=seed, **kwargs)
        if fixture.min_margin() > min_margin:
            return fixture, seed
    raise ConfigError(
        f"no fixture with kink margins above {min_margin} within {attempts} seeds")
