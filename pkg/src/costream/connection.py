"""The cross-stream connection block.

Positions of one stream attend over positions of the other. Both
feature blocks are embedded (phi for the appearance side, kappa for the
motion side) and the pairwise similarity is the exponential of the
embedded dot product. Exponentials are only realized inside a
normalization: the appearance side uses a row softmax of the log
similarities, the motion side reuses the transposed attention matrix
with rows renormalized to sum to one (not a softmax of the transposed
logits; the two differ because each column of A carries its own row
normalizer). Each stream then adds a linear map of what it attended to:

    xf' = xf + A  xo Wf      A = row_softmax(phi(xf) kappa(xo)^T)
    xo' = xo + B  xf Wo      B = row_normalize(A^T)

Wf and Wo start at zero, so an untrained block is exactly the identity
and training opens the cross-stream path gradually. A `scalar` variant
collapses the similarity mass to one gate y = mean(exp(logS - max)) and
adds (x W) * y instead; it exists for comparison runs only.
"""

from dataclasses import dataclass

import numpy as np

from costream.errors import ConfigError, ContractError
from costream.tensor import (Tensor, add, constant, exp, matmul, mul, reduce_mean,
                             reshape, row_normalize, row_softmax, shift, transpose)

VARIANTS = ("softmax", "scalar")


@dataclass
class ConnectionParams:
    w_phi: Tensor
    w_kappa: Tensor
    w_out_f: Tensor
    w_out_o: Tensor

    def named(self) -> dict[str, Tensor]:
        return {"connection.w_phi": self.w_phi, "connection.w_kappa": self.w_kappa,
                "connection.w_out_f": self.w_out_f, "connection.w_out_o": self.w_out_o}


def init_connection_params(rng: np.random.Generator, d: int, embed_dim: int) -> ConnectionParams:
    """Embeddings start small and random; output maps start at zero (identity block)."""
    return ConnectionParams(
        w_phi=Tensor(rng.uniform(-0.05, 0.05, size=(d, embed_dim)), requires_grad=True),
        w_kappa=Tensor(rng.uniform(-0.05, 0.05, size=(d, embed_dim)), requires_grad=True),
        w_out_f=Tensor(np.zeros((d, d)), requires_grad=True),
        w_out_o=Tensor(np.zeros((d, d)), requires_grad=True),
    )


def _check_blocks(xf: Tensor, xo: Tensor, params: ConnectionParams | None = None) -> None:
    if xf.ndim != 2 or xo.ndim != 2:
        raise ContractError(f"connection needs 2-d feature blocks, got {xf.shape} and {xo.shape}")
    if xf.shape != xo.shape:
        raise ContractError(f"streams must share T x D shape, got {xf.shape} and {xo.shape}")
    if params is not None and params.w_phi.shape[0] != xf.shape[1]:
        raise ContractError(
            f"feature width {xf.shape[1]} does not match block width {params.w_phi.shape[0]}")


def log_similarity(xf: Tensor, xo: Tensor, params: ConnectionParams) -> Tensor:
    """T x T dot products of the embedded positions: log of the similarity."""
    _check_blocks(xf, xo, params)
    return matmul(matmul(xf, params.w_phi), transpose(matmul(xo, params.w_kappa)))


def similarity(xf: Tensor, xo: Tensor, params: ConnectionParams) -> Tensor:
    """Exponentiated similarities, for inspection; the block itself never forms these."""
    return exp(log_similarity(xf, xo, params))


def connect(xf: Tensor, xo: Tensor, params: ConnectionParams,
            variant: str = "softmax") -> tuple[Tensor, Tensor]:
    """Couple the two feature blocks; returns (xf', xo') of unchanged shapes."""
    if variant not in VARIANTS:
        raise ConfigError(f"connection variant must be one of {VARIANTS}, got {variant!r}")
    log_s = log_similarity(xf, xo, params)
    if variant == "scalar":
        peak = float(log_s.data.max())
        y = reduce_mean(exp(shift(log_s, -peak)))
        t, d = xf.shape
        ones_col = constant(np.ones((t, 1)))
        ones_row = constant(np.ones((1, d)))
        gate = matmul(matmul(ones_col, reshape(y, (1, 1))), ones_row)
        xf2 = add(xf, mul(matmul(xf, params.w_out_f), gate))
        xo2 = add(xo, mul(matmul(xo, params.w_out_o), gate))
        return xf2, xo2
    attn_f = row_softmax(log_s)
    attn_o = row_normalize(transpose(attn_f))
    xf2 = add(xf, matmul(matmul(attn_f, xo), params.w_out_f))
    xo2 = add(xo, matmul(matmul(attn_o, xf), params.w_out_o))
    return xf2, xo2


def connect_disabled(xf: Tensor, xo: Tensor) -> tuple[Tensor, Tensor]:
    """Identity passthrough used when the block is toggled off."""
    _check_blocks(xf, xo)
    return xf, xo
