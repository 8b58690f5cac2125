"""Aggregation over positions and the shared projection/classifier head.

Aggregation turns a T x D feature block into one vector: the mean or
elementwise max over positions, the elementwise product folded across
positions, or flat concatenation (which fixes the downstream width to
T*D, so models built with concat pin T at build time). Both modality
streams then pass through the same projection and, by default, the same
classifier, which is what lets their embeddings and scores live in one
space. Score fusion is a convex combination of the two probability
vectors.
"""

from dataclasses import dataclass

import numpy as np

from costream.errors import ConfigError, ContractError, DimensionError
from costream.tensor import (Tensor, add_rowvec, matmul, mul, reduce_max, reduce_mean,
                             reshape, take)

AGGREGATIONS = ("avg", "max", "mul", "concat")


@dataclass
class SharedParams:
    """Projection plus classifier; per-modality heads only when unshared."""

    w_proj: Tensor
    b_proj: Tensor
    w_cls: Tensor
    b_cls: Tensor
    w_cls_o: Tensor | None = None
    b_cls_o: Tensor | None = None

    @property
    def share_classifier(self) -> bool:
        return self.w_cls_o is None

    def named(self) -> dict[str, Tensor]:
        out = {"shared.w_proj": self.w_proj, "shared.b_proj": self.b_proj,
               "shared.w_cls": self.w_cls, "shared.b_cls": self.b_cls}
        if self.w_cls_o is not None:
            out["shared.w_cls_o"] = self.w_cls_o
            out["shared.b_cls_o"] = self.b_cls_o
        return out


def init_shared_params(rng: np.random.Generator, agg_width: int, proj_dim: int,
                       n_classes: int, share_classifier: bool = True) -> SharedParams:
    def weight(fan_in, shape):
        return Tensor(rng.normal(scale=1.0 / np.sqrt(fan_in), size=shape), requires_grad=True)

    params = SharedParams(
        w_proj=weight(agg_width, (agg_width, proj_dim)),
        b_proj=Tensor(np.zeros(proj_dim), requires_grad=True),
        w_cls=weight(proj_dim, (proj_dim, n_classes)),
        b_cls=Tensor(np.zeros(n_classes), requires_grad=True),
    )
    if not share_classifier:
        params.w_cls_o = weight(proj_dim, (proj_dim, n_classes))
        params.b_cls_o = Tensor(np.zeros(n_classes), requires_grad=True)
    return params


def aggregate(x: Tensor, kind: str) -> Tensor:
    """Collapse a T x D block to a vector according to `kind`."""
    if x.ndim != 2:
        raise DimensionError(f"aggregate needs a 2-d block, got shape {x.shape}")
    if kind == "avg":
        return reduce_mean(x, axis=0)
    if kind == "max":
        return reduce_max(x, axis=0)
    if kind == "mul":
        out = take(x, 0)
        for t in range(1, x.shape[0]):
            out = mul(out, take(x, t))
        return out
    if kind == "concat":
        return reshape(x, (x.size,))
    raise ConfigError(f"aggregation must be one of {AGGREGATIONS}, got {kind!r}")


def aggregated_width(kind: str, t: int, d: int) -> int:
    """Vector width `aggregate` produces for a T x D block."""
    if kind == "concat":
        return t * d
    if kind in AGGREGATIONS:
        return d
    raise ConfigError(f"aggregation must be one of {AGGREGATIONS}, got {kind!r}")


def project_and_classify(z: Tensor, params: SharedParams,
                         modality: str = "f") -> tuple[Tensor, Tensor]:
    """Project aggregated features and score them; accepts one vector or a batch.

    Returns (embedding, logits) with the same leading shape as z. The
    motion stream uses its own head only when the classifier is unshared.
    """
    single = z.ndim == 1
    if single:
        z = reshape(z, (1, z.shape[0]))
    if z.ndim != 2 or z.shape[1] != params.w_proj.shape[0]:
        raise DimensionError(
            f"projection expects width {params.w_proj.shape[0]}, got shape {z.shape}")
    emb = add_rowvec(matmul(z, params.w_proj), params.b_proj)
    if modality == "o" and params.w_cls_o is not None:
        logits = add_rowvec(matmul(emb, params.w_cls_o), params.b_cls_o)
    else:
        logits = add_rowvec(matmul(emb, params.w_cls), params.b_cls)
    if single:
        emb = reshape(emb, (emb.shape[1],))
        logits = reshape(logits, (logits.shape[1],))
    return emb, logits


def fuse_scores(p_f: np.ndarray, p_o: np.ndarray, weight: float = 0.5) -> np.ndarray:
    """Convex combination weight*p_f + (1-weight)*p_o of two score simplices."""
    p_f = np.asarray(p_f, dtype=np.float64)
    p_o = np.asarray(p_o, dtype=np.float64)
    if p_f.shape != p_o.shape:
        raise ContractError(f"score shapes differ: {p_f.shape} vs {p_o.shape}")
    if not 0.0 <= weight <= 1.0:
        raise ContractError(f"fusion weight must lie in [0, 1], got {weight}")
    for name, p in (("appearance", p_f), ("motion", p_o)):
        if (p < -1e-9).any():
            raise ContractError(f"{name} scores have negative entries")
        sums = p.sum(axis=-1)
        if not np.allclose(sums, 1.0, atol=1e-9):
            raise ContractError(f"{name} scores do not sum to 1 (got sums {sums})")
    return weight * p_f + (1.0 - weight) * p_o
