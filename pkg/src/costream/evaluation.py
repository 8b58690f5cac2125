"""Evaluation reports, the component ablation grid, and aggregation sweeps.

Evaluation always runs the full sequences (no segment subsampling),
scores both streams, fuses the softmax score vectors, and takes the
argmax with ties resolved to the lowest index. Reports carry per-stream
and fused accuracies, per-category accuracy and the fused confusion
matrix, and serialize to JSON.

The ablation grid trains the four component combinations (connection
block and ranking losses independently toggled) across seeds and
reports per-run rows plus mean/stdev summaries; the aggregation sweep
does the same across aggregation kinds. Both write plain CSV.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from costream import kernels
from costream.config import TrainConfig
from costream.errors import ContractError
from costream.model import Model, forward_views
from costream.shared import AGGREGATIONS, fuse_scores
from costream.synthdata import Instance

GRID_VARIANTS = (
    ("baseline", False, False),
    ("connection_only", True, False),
    ("losses_only", False, True),
    ("full", True, True),
)
GRID_FIELDS = ("variant", "seed", "acc_f", "acc_o", "acc_fused")


@dataclass
class EvalReport:
    n_instances: int
    n_classes: int
    acc_f: float
    acc_o: float
    acc_fused: float
    per_class_acc: list[float]
    confusion: list[list[int]]
    fusion_weight: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())


def scores_for_instances(model: Model, instances: list[Instance]
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Softmax scores of both streams over full sequences, instance order kept."""
    if not instances:
        raise ContractError("evaluation needs at least one instance")
    frames_f = np.stack([inst.frames_f for inst in instances])
    frames_o = np.stack([inst.frames_o for inst in instances])
    labels = np.array([inst.label for inst in instances], dtype=np.int64)
    result = forward_views(model, frames_f, frames_o)
    p_f = kernels.row_softmax(result.logits_f.data)
    p_o = kernels.row_softmax(result.logits_o.data)
    return p_f, p_o, labels


def report_from_scores(p_f: np.ndarray, p_o: np.ndarray, labels: np.ndarray,
                       n_classes: int, fusion_weight: float = 0.5) -> EvalReport:
    """Accuracies and fused confusion from per-instance score vectors."""
    fused = fuse_scores(p_f, p_o, weight=fusion_weight)
    pred_f = np.argmax(p_f, axis=1)
    pred_o = np.argmax(p_o, axis=1)
    pred_fused = np.argmax(fused, axis=1)

    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for truth, pred in zip(labels, pred_fused):
        confusion[truth, pred] += 1
    per_class = []
    for c in range(n_classes):
        members = labels == c
        per_class.append(float((pred_fused[members] == c).mean()) if members.any() else 0.0)

    return EvalReport(
        n_instances=int(labels.size),
        n_classes=n_classes,
        acc_f=float((pred_f == labels).mean()),
        acc_o=float((pred_o == labels).mean()),
        acc_fused=float((pred_fused == labels).mean()),
        per_class_acc=per_class,
        confusion=confusion.tolist(),
        fusion_weight=fusion_weight,
    )


def evaluate(model: Model, instances: list[Instance], fusion_weight: float = 0.5) -> EvalReport:
    """Full-sequence evaluation of a model over a list of instances."""
    p_f, p_o, labels = scores_for_instances(model, instances)
    return report_from_scores(p_f, p_o, labels, model.n_classes, fusion_weight)


# ------------------------------------------------------------------ grids


@dataclass
class GridRow:
    variant: str
    seed: int
    acc_f: float
    acc_o: float
    acc_fused: float


@dataclass
class GridResult:
    rows: list[GridRow] = field(default_factory=list)

    def summary(self) -> dict[str, dict[str, tuple[float, float]]]:
        """variant -> metric -> (mean, stdev) across seeds."""
        out: dict[str, dict[str, tuple[float, float]]] = {}
        for variant in {r.variant for r in self.rows}:
            rows = [r for r in self.rows if r.variant == variant]
            out[variant] = {
                metric: (float(np.mean([getattr(r, metric) for r in rows])),
                         float(np.std([getattr(r, metric) for r in rows])))
                for metric in ("acc_f", "acc_o", "acc_fused")
            }
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(GRID_FIELDS)
            for r in self.rows:
                writer.writerow([r.variant, r.seed, repr(r.acc_f), repr(r.acc_o),
                                 repr(r.acc_fused)])

    def summary_lines(self) -> list[str]:
        lines = []
        for variant, metrics in sorted(self.summary().items()):
            mean, std = metrics["acc_fused"]
            mf, _ = metrics["acc_f"]
            mo, _ = metrics["acc_o"]
            lines.append(f"{variant:16s} acc_f {mf:.3f}  acc_o {mo:.3f}  "
                         f"acc_fused {mean:.3f} +/- {std:.3f}")
        return lines


def _run_configs(dataset, named_configs: list[tuple[str, TrainConfig]]) -> GridResult:
    from costream.trainer import fit

    result = GridResult()
    for name, config in named_configs:
        outcome = fit(dataset, config)
        best = outcome.best_metrics
        if best is None:
            raise ContractError(f"run '{name}' produced no epochs")
        result.rows.append(GridRow(
            variant=name, seed=config.seed,
            acc_f=best["acc_f"], acc_o=best["acc_o"], acc_fused=best["acc_fused"],
        ))
    return result


def ablation_grid(dataset, base_config: TrainConfig, seeds=(0, 1, 2)) -> GridResult:
    """Train every component combination per seed; rows in grid order."""
    runs = []
    for variant, with_connection, with_ranking in GRID_VARIANTS:
        for seed in seeds:
            runs.append((variant, base_config.replaced(
                seed=int(seed),
                connection_enabled=with_connection,
                ranking_enabled=with_ranking,
            )))
    return _run_configs(dataset, runs)


def aggregation_comparison(dataset, base_config: TrainConfig,
                           kinds=AGGREGATIONS, seeds=(0,)) -> GridResult:
    """Train one model per aggregation kind per seed."""
    runs = []
    for kind in kinds:
        for seed in seeds:
            runs.append((kind, base_config.replaced(seed=int(seed), aggregation=kind)))
    return _run_configs(dataset, runs)
