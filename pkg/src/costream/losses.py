"""Training objectives on projected embeddings and logits.

Three pieces, combined as total = lambda1*ranking + lambda2*structure +
cross_entropy:

* ``triplet_inter``: cross-modality ranking with batch-hard mining. One
  modality anchors, the other supplies positives and negatives; both
  directions contribute. Mining is done on current values and treated
  as locally constant, so the result is differentiable away from
  arg-switch points; every hinge uses relu (zero subgradient at zero).
* ``discrim_embed``: per-batch category centers; samples are pulled
  inside a radius around their center, centers are pushed apart, per
  modality, each term normalized by its own count.
* ``cross_entropy``: mean negative log softmax score of the true label,
  computed against a detached per-row max, which leaves the gradient
  exact while preventing overflow (the gradient of log-sum-exp is the
  softmax regardless of any constant shift).

The mining and hinge internals (chosen indices, hinge arguments, how
far mining is from switching) are exposed through the details objects
so callers can verify mining independently and steer clear of kinks
when finite-difference checking.
"""

from dataclasses import dataclass, field

import numpy as np

from costream import kernels
from costream.errors import ContractError
from costream.tensor import (Tensor, add, concat, constant, exp, log, mul, reduce_mean,
                             reduce_sum, relu, reshape, scale, shift, sub, take,
                             take_per_row)

POSITIVE_MODES = ("hard", "same_instance")


@dataclass
class TripletDetails:
    """Mining outcome per direction plus kink diagnostics."""

    pos_index: dict[str, np.ndarray] = field(default_factory=dict)
    neg_index: dict[str, np.ndarray] = field(default_factory=dict)
    hinge_args: np.ndarray | None = None
    min_abs_hinge_arg: float = np.inf
    min_mining_gap: float = np.inf


@dataclass
class DiscrimDetails:
    hinge_args: np.ndarray | None = None
    min_abs_hinge_arg: float = np.inf


def _rowwise_sqdist(a: Tensor, b: Tensor) -> Tensor:
    d = sub(a, b)
    return reduce_sum(mul(d, d), axis=1)


def _check_embeddings(z_f: Tensor, z_o: Tensor, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if z_f.ndim != 2 or z_o.ndim != 2 or z_f.shape != z_o.shape:
        raise ContractError(
            f"embedding blocks must share B x D shape, got {z_f.shape} and {z_o.shape}")
    if labels.shape != (z_f.shape[0],):
        raise ContractError(
            f"need one label per instance, got {labels.shape} for {z_f.shape[0]} rows")
    return labels


def _runner_up_gap(row: np.ndarray, mask: np.ndarray, chosen: int) -> float:
    """Distance between the selected extreme and the nearest other candidate."""
    others = row[mask].copy()
    if others.size <= 1:
        return np.inf
    chosen_value = row[chosen]
    others = np.delete(others, np.argmin(np.abs(others - chosen_value)))
    return float(np.abs(others - chosen_value).min())


def triplet_inter(z_f: Tensor, z_o: Tensor, labels, alpha: float,
                  positive_mode: str = "hard",
                  return_details: bool = False):
    """Cross-modality triplet loss, mean hinge over all 2B anchors.

    For each appearance anchor the positive is the hardest (farthest)
    same-category motion embedding and the negative the closest
    other-category motion embedding; symmetrically with motion anchors
    over appearance embeddings. ``same_instance`` mode instead takes the
    anchor's own paired view as positive (rows are instance-aligned).
    """
    labels = _check_embeddings(z_f, z_o, labels)
    if positive_mode not in POSITIVE_MODES:
        raise ContractError(f"positive_mode must be one of {POSITIVE_MODES}, got {positive_mode!r}")
    if np.unique(labels).size < 2:
        raise ContractError("triplet mining needs at least two categories in the batch")

    same = labels[:, None] == labels[None, :]
    details = TripletDetails()
    hinge_blocks = []
    all_args = []

    for name, anchors, others in (("f", z_f, z_o), ("o", z_o, z_f)):
        dist = kernels.pairwise_sqdist(anchors.data, others.data)
        if positive_mode == "hard":
            masked_pos = np.where(same, dist, -np.inf)
            pos_idx = np.argmax(masked_pos, axis=1)
        else:
            pos_idx = np.arange(labels.size)
        masked_neg = np.where(same, np.inf, dist)
        neg_idx = np.argmin(masked_neg, axis=1)
        details.pos_index[name] = pos_idx
        details.neg_index[name] = neg_idx

        d_ap = _rowwise_sqdist(anchors, take(others, pos_idx))
        d_an = _rowwise_sqdist(anchors, take(others, neg_idx))
        args = shift(sub(d_ap, d_an), alpha)
        hinge_blocks.append(relu(args))
        all_args.append(args.data)

        if return_details:
            for i in range(labels.size):
                if positive_mode == "hard":
                    gap = _runner_up_gap(dist[i], same[i], pos_idx[i])
                    details.min_mining_gap = min(details.min_mining_gap, gap)
                gap = _runner_up_gap(dist[i], ~same[i], neg_idx[i])
                details.min_mining_gap = min(details.min_mining_gap, gap)

    loss = reduce_mean(concat(hinge_blocks, axis=0))
    if return_details:
        details.hinge_args = np.concatenate(all_args)
        details.min_abs_hinge_arg = float(np.abs(details.hinge_args).min())
        return loss, details
    return loss


def discrim_embed(z_f: Tensor, z_o: Tensor, labels, alpha_compact: float,
                  alpha_separate: float, labels_o=None,
                  return_details: bool = False):
    """Center-based structure loss, summed over modalities.

    Per modality: hinge distances of samples to their own per-batch
    category center (beyond ``alpha_compact``), averaged over samples,
    plus hinge shortfalls of center-to-center distances (below
    ``alpha_separate``), averaged over unordered category pairs. A batch
    with one category has no pairs and contributes zero separation.
    """
    labels_f = _check_embeddings(z_f, z_o, labels)
    labels_o = labels_f if labels_o is None else np.asarray(labels_o, dtype=np.int64)
    if labels_o.shape != (z_o.shape[0],):
        raise ContractError("motion labels must match the motion embedding count")
    if set(np.unique(labels_f)) != set(np.unique(labels_o)):
        raise ContractError("a category is missing from one modality")

    details = DiscrimDetails()
    total = None
    all_args = []
    for z, lab in ((z_f, labels_f), (z_o, labels_o)):
        cats, inverse = np.unique(lab, return_inverse=True)
        center_rows = [reshape(reduce_mean(take(z, np.flatnonzero(lab == c)), axis=0),
                               (1, z.shape[1]))
                       for c in cats]
        centers = concat(center_rows, axis=0)

        compact_args = shift(_rowwise_sqdist(z, take(centers, inverse)), -alpha_compact)
        value = reduce_mean(relu(compact_args))
        all_args.append(compact_args.data)

        if cats.size >= 2:
            left, right = map(np.asarray, zip(*[(i, j) for i in range(cats.size)
                                                for j in range(i + 1, cats.size)]))
            sep_args = scale(shift(_rowwise_sqdist(take(centers, left), take(centers, right)),
                                   -alpha_separate), -1.0)
            value = add(value, reduce_mean(relu(sep_args)))
            all_args.append(sep_args.data)

        total = value if total is None else add(total, value)

    if return_details:
        details.hinge_args = np.concatenate(all_args)
        details.min_abs_hinge_arg = float(np.abs(details.hinge_args).min())
        return total, details
    return total


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood under row softmax, overflow-safe."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ContractError(f"cross_entropy needs a 2-d logit block, got {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise ContractError(
            f"need one label per row, got {labels.shape} for {logits.shape[0]} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ContractError(f"labels out of range for {logits.shape[1]} categories")

    peak = logits.data.max(axis=1)  # detached shift; the LSE gradient is unchanged
    shifted = sub(logits, constant(np.broadcast_to(peak[:, None], logits.shape)))
    lse = add(log(reduce_sum(exp(shifted), axis=1)), constant(peak))
    return reduce_mean(sub(lse, take_per_row(logits, labels)))


@dataclass
class LossBreakdown:
    """Per-term values of one step's objective, for logging."""

    l1: float
    l2: float
    l3: float
    total: float
    lambda1: float
    lambda2: float


def total_loss(l1: Tensor | None, l2: Tensor | None, l3: Tensor,
               lambda1: float, lambda2: float) -> tuple[Tensor, LossBreakdown]:
    """Weighted sum lambda1*l1 + lambda2*l2 + l3; None terms count as zero."""
    total = l3
    if l1 is not None and lambda1 != 0.0:
        total = add(total, scale(l1, lambda1))
    if l2 is not None and lambda2 != 0.0:
        total = add(total, scale(l2, lambda2))
    breakdown = LossBreakdown(
        l1=0.0 if l1 is None else float(l1.data),
        l2=0.0 if l2 is None else float(l2.data),
        l3=float(l3.data),
        total=float(total.data),
        lambda1=lambda1,
        lambda2=lambda2,
    )
    return total, breakdown
