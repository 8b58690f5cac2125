"""The optimization loop, checkpointing, and the metrics log.

One step: draw a balanced batch, subsample aligned segments per
instance, forward both streams through the coupled model, build the
weighted objective on the projected embeddings and stacked logits, run
backward once, and apply SGD with momentum and weight decay (decay on
weights, not biases). The cross-stream coupling means appearance
parameters receive gradient through the motion head and vice versa;
backward handles that through the shared graph, nothing is trained
separately.

Epochs are scheduled deterministically from (seed, epoch): sampler
plans, segment offsets and the validation split never depend on call
order, which is what makes checkpoint resume bit-identical. Validation
runs after every epoch on the held-out split; early stopping watches
fused accuracy with a patience window and the best-epoch parameters are
what ``fit`` hands back.

Checkpoint files are binary, little-endian, documented in README.md:
a 12-byte header (magic 0x43534B31, format version, JSON length), a
JSON metadata block (config, dims, epoch counters), then three tensor
blocks (current parameters, velocities, optional best parameters), each
a count followed by name/shape/float64 records, then the metric rows.
"""

import csv
import io
import json
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from costream.config import TrainConfig
from costream.errors import ConfigError, ContractError, IntegrityError, NonFiniteError, ParseError
from costream.extractor import sample_segments
from costream.losses import (LossBreakdown, cross_entropy, discrim_embed, total_loss,
                             triplet_inter)
from costream.model import Model, build_model, forward_views
from costream.sampler import Batch, BatchSpec, epoch_plan
from costream.synthdata import Dataset, Instance
from costream.tensor import backward, concat, first_non_finite

CKPT_MAGIC = 0x43534B31
CKPT_VERSION = 1
METRIC_FIELDS = ("epoch", "l1", "l2", "l3", "total", "acc_f", "acc_o", "acc_fused", "lr")

_SEED_SPLIT = 31
_SEED_SEGMENTS = 47


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Step schedule: lr0 up to the decay epoch, lr0*factor from then on."""
    if epoch < 0:
        raise ContractError(f"epoch must be nonnegative, got {epoch}")
    if epoch < config.lr_decay_epoch:
        return config.lr0
    return config.lr0 * config.lr_decay_factor


def split_dataset(dataset: Dataset, val_fraction: float, seed: int
                  ) -> tuple[list[Instance], list[Instance]]:
    """Deterministic stratified split; ~val_fraction of each category held out."""
    rng = np.random.default_rng([seed, _SEED_SPLIT])
    labels = dataset.labels
    train: list[Instance] = []
    val: list[Instance] = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(members.size)]
        n_val = int(round(val_fraction * members.size))
        for pos, idx in enumerate(members):
            (val if pos < n_val else train).append(dataset.instances[int(idx)])
    return train, val


def _segment_views(instances: list[Instance], batch: Batch, config: TrainConfig,
                   epoch: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack per-instance aligned segment draws into (B, T, D_in) blocks."""
    picks_f, picks_o = [], []
    for idx in batch.indices:
        inst = instances[int(idx)]
        seed_key = [config.seed, _SEED_SEGMENTS, epoch, inst.id]
        rng_f = np.random.default_rng(seed_key)
        rng_o = np.random.default_rng(seed_key)  # same stream: offsets stay aligned
        picks_f.append(sample_segments(inst.frames_f, config.k_segments, config.snippet, rng_f))
        picks_o.append(sample_segments(inst.frames_o, config.k_segments, config.snippet, rng_o))
    return np.stack(picks_f), np.stack(picks_o)


def sgd_step(params: dict, velocities: dict[str, np.ndarray], lr: float,
             momentum: float, weight_decay: float) -> None:
    """v <- momentum*v - lr*(grad + wd*p); p <- p + v. Biases skip decay."""
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros(p.shape)
        is_bias = name.rsplit(".", 1)[-1].startswith("b")
        wd = 0.0 if is_bias else weight_decay
        v = velocities[name]
        v *= momentum
        v -= lr * (g + wd * p.data)
        p.data += v


def train_step(model: Model, velocities: dict[str, np.ndarray],
               frames_f: np.ndarray, frames_o: np.ndarray, labels: np.ndarray,
               lr: float) -> LossBreakdown:
    """One optimization step on a prepared batch of views."""
    cfg = model.config
    result = forward_views(model, frames_f, frames_o)

    l1 = l2 = None
    if cfg.ranking_enabled:
        if cfg.lambda1 != 0.0:
            l1 = triplet_inter(result.emb_f, result.emb_o, labels, cfg.alpha1,
                               positive_mode=cfg.positive_mode)
        if cfg.lambda2 != 0.0:
            l2 = discrim_embed(result.emb_f, result.emb_o, labels, cfg.alpha2, cfg.alpha3)
    logits = concat([result.logits_f, result.logits_o], axis=0)
    l3 = cross_entropy(logits, np.concatenate([labels, labels]))
    total, breakdown = total_loss(l1, l2, l3, cfg.lambda1 if cfg.ranking_enabled else 0.0,
                                  cfg.lambda2 if cfg.ranking_enabled else 0.0)

    if not np.isfinite(breakdown.total):
        culprit = first_non_finite(total)
        where = culprit.op if culprit is not None and culprit.op else "input"
        raise NonFiniteError(f"non-finite loss {breakdown.total}; first bad tensor from op '{where}'")

    model.zero_grads()
    backward(total)
    sgd_step(model.parameters(), velocities, lr, cfg.momentum, cfg.weight_decay)
    return breakdown


@dataclass
class FitResult:
    model: Model
    metrics: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_acc_fused: float = 0.0
    best_metrics: dict | None = None
    stopped_early: bool = False


def _evaluate_split(model: Model, instances: list[Instance]) -> tuple[float, float, float]:
    from costream.evaluation import evaluate  # late import; evaluation builds on trainer types

    report = evaluate(model, instances, fusion_weight=model.config.fusion_weight)
    return report.acc_f, report.acc_o, report.acc_fused


def fit(dataset: Dataset, config: TrainConfig, out_dir=None,
        resume_from=None) -> FitResult:
    """Train to max_epochs or early stop; returns the best-epoch model.

    When ``out_dir`` is given, writes ``metrics.csv`` and
    ``checkpoint.bin`` there. ``resume_from`` restores parameters,
    velocities, epoch counter and the metric log from a checkpoint and
    continues as if the run had never stopped.
    """
    if config.aggregation == "concat" and dataset.L != config.k_segments * config.snippet:
        raise ConfigError(
            "concat aggregation fixes the head width at k_segments*snippet rows, so the "
            f"dataset length must equal {config.k_segments * config.snippet}, got {dataset.L}")
    if dataset.L < config.k_segments * config.snippet:
        raise ConfigError(
            f"dataset length {dataset.L} is shorter than k_segments*snippet "
            f"= {config.k_segments * config.snippet}")

    train_insts, val_insts = split_dataset(dataset, config.val_fraction, config.seed)
    eval_insts = val_insts if val_insts else train_insts
    train_labels = np.array([inst.label for inst in train_insts], dtype=np.int64)
    spec = BatchSpec(config.n_categories, config.m_instances)
    seq_len = config.k_segments * config.snippet

    start_epoch = 0
    metrics: list[dict] = []
    best_epoch, best_acc = -1, -np.inf
    best_params: dict[str, np.ndarray] | None = None

    model = build_model(config, dataset.n, dataset.D_in, sequence_length=seq_len)
    velocities = {name: np.zeros(p.shape) for name, p in model.parameters().items()}

    if resume_from is not None:
        state = load_checkpoint(resume_from)
        if state.n_classes != dataset.n or state.d_in != dataset.D_in:
            raise IntegrityError(
                f"checkpoint was trained on {state.n_classes} classes x {state.d_in} dims, "
                f"dataset has {dataset.n} x {dataset.D_in}")
        _assign(model.parameters(), state.params)
        velocities = {k: v.copy() for k, v in state.velocities.items()}
        start_epoch = state.epoch_next
        metrics = list(state.metrics)
        best_epoch = state.best_epoch
        best_acc = state.best_acc_fused if state.best_epoch >= 0 else -np.inf
        best_params = state.best_params

    stall = 0
    if best_epoch >= 0:
        stall = (start_epoch - 1) - best_epoch
    stopped_early = False
    for epoch in range(start_epoch, config.max_epochs):
        lr = lr_at(epoch, config)
        sums = np.zeros(4)
        plan = epoch_plan(train_labels, spec, config.seed, epoch)
        for batch in plan:
            frames_f, frames_o = _segment_views(train_insts, batch, config, epoch)
            breakdown = train_step(model, velocities, frames_f, frames_o, batch.labels, lr)
            sums += (breakdown.l1, breakdown.l2, breakdown.l3, breakdown.total)
        means = sums / len(plan)

        acc_f, acc_o, acc_fused = _evaluate_split(model, eval_insts)
        row = {"epoch": epoch, "l1": means[0], "l2": means[1], "l3": means[2],
               "total": means[3], "acc_f": acc_f, "acc_o": acc_o,
               "acc_fused": acc_fused, "lr": lr}
        metrics.append(row)

        if acc_fused > best_acc:
            best_acc = acc_fused
            best_epoch = epoch
            best_params = {k: p.data.copy() for k, p in model.parameters().items()}
            stall = 0
        else:
            stall += 1
        if config.early_stop and stall >= config.early_stop_patience:
            stopped_early = True
            break

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out / "metrics.csv", metrics)
        save_checkpoint(out / "checkpoint.bin", model, velocities,
                        epoch_next=metrics[-1]["epoch"] + 1 if metrics else start_epoch,
                        metrics=metrics, best_epoch=best_epoch,
                        best_acc_fused=0.0 if best_epoch < 0 else best_acc,
                        best_params=best_params)

    if best_params is not None:
        _assign(model.parameters(), best_params)
    best_metrics = next((m for m in metrics if m["epoch"] == best_epoch), None)
    return FitResult(model=model, metrics=metrics, best_epoch=best_epoch,
                     best_acc_fused=0.0 if best_epoch < 0 else best_acc,
                     best_metrics=best_metrics, stopped_early=stopped_early)


def _assign(params: dict, values: dict[str, np.ndarray]) -> None:
    if set(params) != set(values):
        raise IntegrityError(
            f"parameter names differ: {sorted(set(params) ^ set(values))}")
    for name, p in params.items():
        if p.shape != values[name].shape:
            raise IntegrityError(
                f"parameter '{name}' has shape {p.shape}, stored value {values[name].shape}")
        p.data = np.ascontiguousarray(values[name], dtype=np.float64).copy()


# ------------------------------------------------------------- metrics CSV


def write_metrics_csv(path, metrics: list[dict]) -> None:
    """Write the per-epoch log; floats use shortest round-trip form."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_FIELDS)
        for row in metrics:
            writer.writerow([row["epoch"]] + [repr(float(row[k])) for k in METRIC_FIELDS[1:]])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(METRIC_FIELDS):
            raise IntegrityError(f"metrics header {reader.fieldnames} != {list(METRIC_FIELDS)}")
        out = []
        for row in reader:
            parsed = {"epoch": int(row["epoch"])}
            parsed.update({k: float(row[k]) for k in METRIC_FIELDS[1:]})
            out.append(parsed)
        return out


# -------------------------------------------------------------- checkpoints


@dataclass
class CheckpointState:
    config: TrainConfig
    n_classes: int
    d_in: int
    sequence_length: int
    epoch_next: int
    best_epoch: int
    best_acc_fused: float
    params: dict[str, np.ndarray]
    velocities: dict[str, np.ndarray]
    best_params: dict[str, np.ndarray] | None
    metrics: list[dict]


def _pack_tensors(buf: io.BytesIO, tensors: dict[str, np.ndarray]) -> None:
    buf.write(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(value, dtype="<f8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())


class _Reader:
    def __init__(self, raw: bytes, name: str):
        self.raw = raw
        self.pos = 0
        self.name = name

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.raw):
            raise ParseError(f"{self.name}: truncated, wanted {count} bytes", offset=self.pos)
        chunk = self.raw[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def _unpack_tensors(r: _Reader) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    count = r.u32()
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim)) if ndim else ()
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape)
        out[name] = np.ascontiguousarray(data)
    return out


def save_checkpoint(path, model: Model, velocities: dict[str, np.ndarray], *,
                    epoch_next: int, metrics: list[dict], best_epoch: int,
                    best_acc_fused: float,
                    best_params: dict[str, np.ndarray] | None) -> None:
    cfg = model.config
    meta = {
        "config": _config_to_dict(cfg),
        "n_classes": model.n_classes,
        "d_in": int(model.extractor_f.w1.shape[0]),
        "sequence_length": cfg.k_segments * cfg.snippet,
        "epoch_next": int(epoch_next),
        "best_epoch": int(best_epoch),
        "best_acc_fused": float(best_acc_fused),
    }
    meta_raw = json.dumps(meta).encode("utf-8")
    buf = io.BytesIO()
    buf.write(struct.pack("<III", CKPT_MAGIC, CKPT_VERSION, len(meta_raw)))
    buf.write(meta_raw)
    _pack_tensors(buf, {k: p.data for k, p in model.parameters().items()})
    _pack_tensors(buf, velocities)
    buf.write(struct.pack("<I", 1 if best_params is not None else 0))
    if best_params is not None:
        _pack_tensors(buf, best_params)
    buf.write(struct.pack("<I", len(metrics)))
    for row in metrics:
        buf.write(struct.pack("<I", int(row["epoch"])))
        buf.write(struct.pack("<8d", *(float(row[k]) for k in METRIC_FIELDS[1:])))
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> CheckpointState:
    raw = Path(path).read_bytes()
    r = _Reader(raw, Path(path).name)
    magic, version, meta_len = struct.unpack("<III", r.take(12))
    if magic != CKPT_MAGIC:
        raise ParseError(f"{r.name}: bad magic 0x{magic:08x}, expected 0x{CKPT_MAGIC:08x}",
                         offset=0)
    if version != CKPT_VERSION:
        raise IntegrityError(f"{r.name}: unsupported checkpoint version {version}")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{r.name}: metadata is not valid JSON: {exc.msg}",
                         offset=12 + exc.pos) from exc

    params = _unpack_tensors(r)
    velocities = _unpack_tensors(r)
    best_params = _unpack_tensors(r) if r.u32() else None
    if set(params) != set(velocities):
        raise IntegrityError(f"{r.name}: velocity names do not match parameter names")

    n_rows = r.u32()
    metrics = []
    for _ in range(n_rows):
        epoch = r.u32()
        values = struct.unpack("<8d", r.take(64))
        row = {"epoch": epoch}
        row.update(dict(zip(METRIC_FIELDS[1:], values)))
        metrics.append(row)
    if r.pos != len(raw):
        raise IntegrityError(f"{r.name}: {len(raw) - r.pos} trailing bytes")

    return CheckpointState(
        config=TrainConfig(**meta["config"]),
        n_classes=int(meta["n_classes"]),
        d_in=int(meta["d_in"]),
        sequence_length=int(meta["sequence_length"]),
        epoch_next=int(meta["epoch_next"]),
        best_epoch=int(meta["best_epoch"]),
        best_acc_fused=float(meta["best_acc_fused"]),
        params=params,
        velocities=velocities,
        best_params=best_params,
        metrics=metrics,
    )


def _config_to_dict(config: TrainConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in fields(config)}
