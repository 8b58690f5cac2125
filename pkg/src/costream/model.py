"""The full two-stream model and its batched forward pass.

Build parameters once from a config and a category count; the forward
pass takes a stack of paired observation blocks, runs both extractor
MLPs over all rows at once, couples each instance's feature blocks
through the connection block (or passes them through untouched when the
block is toggled off), aggregates, and projects both streams through
the shared head. Outputs are instance-aligned embedding and logit
matrices for each modality.
"""

from dataclasses import dataclass

import numpy as np

from costream.config import TrainConfig
from costream.connection import (ConnectionParams, connect, connect_disabled,
                                 init_connection_params)
from costream.errors import ConfigError, ContractError
from costream.extractor import ExtractorParams, extract, init_extractor_params
from costream.shared import (SharedParams, aggregate, aggregated_width,
                             init_shared_params, project_and_classify)
from costream.tensor import Tensor, concat, constant, reshape, take

_SEED_INIT = 7


@dataclass
class Model:
    config: TrainConfig
    n_classes: int
    extractor_f: ExtractorParams
    extractor_o: ExtractorParams
    connection: ConnectionParams
    shared: SharedParams

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        out.update(self.extractor_f.named())
        out.update(self.extractor_o.named())
        out.update(self.connection.named())
        out.update(self.shared.named())
        return out

    def zero_grads(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()


@dataclass
class ForwardResult:
    """Instance-aligned outputs of one batched forward pass."""

    emb_f: Tensor
    emb_o: Tensor
    logits_f: Tensor
    logits_o: Tensor


def build_model(config: TrainConfig, n_classes: int, d_in: int,
                sequence_length: int | None = None) -> Model:
    """Initialize all parameters deterministically from config.seed.

    ``sequence_length`` is the block length T the model will see; concat
    aggregation bakes it into the head width, so it is required there
    and must match every later forward. T-invariant aggregations ignore
    it.
    """
    d = config.feature_dim
    if config.aggregation == "concat":
        if sequence_length is None:
            raise ConfigError("concat aggregation needs a fixed sequence length at build time")
        agg_width = aggregated_width("concat", sequence_length, d)
    else:
        agg_width = d
    rng = np.random.default_rng([config.seed, _SEED_INIT])
    return Model(
        config=config,
        n_classes=n_classes,
        extractor_f=init_extractor_params(rng, "f", d_in, config.hidden_dim, d),
        extractor_o=init_extractor_params(rng, "o", d_in, config.hidden_dim, d),
        connection=init_connection_params(rng, d, config.effective_embed_dim),
        shared=init_shared_params(rng, agg_width, config.effective_proj_dim, n_classes,
                                  share_classifier=config.share_classifier),
    )


def forward_views(model: Model, frames_f: np.ndarray, frames_o: np.ndarray) -> ForwardResult:
    """Run B paired views through the model.

    ``frames_f`` and ``frames_o`` are (B, T, D_in) stacks; rows of the
    returned matrices align with the leading axis.
    """
    if frames_f.shape != frames_o.shape or frames_f.ndim != 3:
        raise ContractError(
            f"need matching (B, T, D_in) stacks, got {frames_f.shape} and {frames_o.shape}")
    b, t, d_in = frames_f.shape
    cfg = model.config

    flat_f = constant(frames_f.reshape(b * t, d_in))
    flat_o = constant(frames_o.reshape(b * t, d_in))
    feats_f = extract(model.extractor_f, flat_f)
    feats_o = extract(model.extractor_o, flat_o)

    agg_f_rows = []
    agg_o_rows = []
    for i in range(b):
        rows = slice(i * t, (i + 1) * t)
        xf = take(feats_f, rows)
        xo = take(feats_o, rows)
        if cfg.connection_enabled:
            xf, xo = connect(xf, xo, model.connection, variant=cfg.connection_variant)
        else:
            xf, xo = connect_disabled(xf, xo)
        vf = aggregate(xf, cfg.aggregation)
        vo = aggregate(xo, cfg.aggregation)
        agg_f_rows.append(reshape(vf, (1, vf.shape[0])))
        agg_o_rows.append(reshape(vo, (1, vo.shape[0])))

    z_f = concat(agg_f_rows, axis=0)
    z_o = concat(agg_o_rows, axis=0)
    emb_f, logits_f = project_and_classify(z_f, model.shared, modality="f")
    emb_o, logits_o = project_and_classify(z_o, model.shared, modality="o")
    return ForwardResult(emb_f=emb_f, emb_o=emb_o, logits_f=logits_f, logits_o=logits_o)
