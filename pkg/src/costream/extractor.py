"""Per-modality feature extraction and segment subsampling.

Each modality stream owns a two-layer position-wise MLP: rows of the
L' x D_in input are mapped independently through relu(x W1 + b1) W2 + b2,
so permuting input rows permutes output rows. Training subsamples the
sequence first: the L positions are split into k near-equal contiguous
spans and one snippet of consecutive rows is drawn uniformly from each
span, giving k * snippet rows in order.
"""

from dataclasses import dataclass

import numpy as np

from costream.errors import ConfigError, ContractError
from costream.tensor import Tensor, add_rowvec, constant, matmul, relu


@dataclass
class ExtractorParams:
    """Weights of one stream's MLP; `modality` is a display tag only."""

    modality: str
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def named(self) -> dict[str, Tensor]:
        tag = f"extractor_{self.modality}"
        return {f"{tag}.w1": self.w1, f"{tag}.b1": self.b1,
                f"{tag}.w2": self.w2, f"{tag}.b2": self.b2}


def init_extractor_params(rng: np.random.Generator, modality: str,
                          d_in: int, hidden: int, d_out: int) -> ExtractorParams:
    def weight(fan_in, shape):
        return Tensor(rng.normal(scale=1.0 / np.sqrt(fan_in), size=shape), requires_grad=True)

    return ExtractorParams(
        modality=modality,
        w1=weight(d_in, (d_in, hidden)),
        b1=Tensor(np.zeros(hidden), requires_grad=True),
        w2=weight(hidden, (hidden, d_out)),
        b2=Tensor(np.zeros(d_out), requires_grad=True),
    )


def extract(params: ExtractorParams, frames) -> Tensor:
    """Map an L' x D_in observation block to L' x D features."""
    x = frames if isinstance(frames, Tensor) else constant(frames)
    if x.ndim != 2 or x.shape[1] != params.w1.shape[0]:
        raise ContractError(
            f"extract needs rows of width {params.w1.shape[0]}, got shape {x.shape}")
    h = relu(add_rowvec(matmul(x, params.w1), params.b1))
    return add_rowvec(matmul(h, params.w2), params.b2)


def preactivation_margin(params: ExtractorParams, frames: np.ndarray) -> float:
    """Smallest |pre-relu value|; near-zero means the point sits on a kink."""
    pre = frames @ params.w1.data + params.b1.data[None, :]
    return float(np.abs(pre).min())


def segment_spans(L: int, k_segments: int) -> list[tuple[int, int]]:
    """Near-equal contiguous [start, end) spans; earlier spans absorb the remainder."""
    base, rem = divmod(L, k_segments)
    spans = []
    start = 0
    for s in range(k_segments):
        length = base + (1 if s < rem else 0)
        spans.append((start, start + length))
        start += length
    return spans


def sample_segments(frames: np.ndarray, k_segments: int, snippet: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Draw one snippet of consecutive rows from each span, concatenated in order.

    Requires L >= k_segments * snippet. With L == k_segments * snippet
    every span is exactly one snippet long and the result is the whole
    sequence. Output length is always k_segments * snippet.
    """
    L = frames.shape[0]
    if k_segments < 1 or snippet < 1:
        raise ConfigError(f"k_segments and snippet must be positive, got {k_segments}, {snippet}")
    if L < k_segments * snippet:
        raise ConfigError(
            f"sequence length {L} shorter than k_segments*snippet = {k_segments * snippet}")
    picked = []
    for start, end in segment_spans(L, k_segments):
        slack = (end - start) - snippet
        offset = int(rng.integers(0, slack + 1))
        picked.append(frames[start + offset:start + offset + snippet])
    return np.concatenate(picked, axis=0)
