"""Command-line entry points.

Subcommands: ``gen-data`` writes a synthetic dataset, ``train`` runs the
optimization loop from a JSON config, ``eval`` scores a checkpoint,
``gradcheck`` verifies analytic gradients of the full objective against
finite differences, and ``ablate`` trains the component grid or the
aggregation sweep. Exit codes: 0 success, 1 a check or acceptance
failure, 2 usage or configuration errors.
"""

import argparse
import sys
from pathlib import Path

from costream import __version__
from costream.config import RunSpec, TrainConfig, load_config
from costream.errors import CostreamError, GradCheckError
from costream.gradcheck import grad_check
from costream.selfcheck import make_fixture
from costream.synthdata import DEFAULT_SIGMA, generate, load, save

USAGE_EXIT = 2
CHECK_EXIT = 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="costream",
                                     description="paired-modality stream trainer")
    parser.add_argument("--version", action="version", version=f"costream {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="write a synthetic paired-modality dataset")
    gen.add_argument("--classes", type=int, default=8, help="category count (even, >= 4)")
    gen.add_argument("--per-class", type=int, default=40, help="instances per category")
    gen.add_argument("--positions", type=int, default=30, help="rows per modality (L)")
    gen.add_argument("--dim", type=int, default=12, help="observation width (D_in)")
    gen.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="latent noise scale")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output directory")

    train = sub.add_parser("train", help="train from a JSON config")
    train.add_argument("config", help="path to the JSON config file")
    train.add_argument("--dataset", help="dataset directory (overrides config)")
    train.add_argument("--out", help="output directory (overrides config)")
    train.add_argument("--resume", help="checkpoint to continue from")

    ev = sub.add_parser("eval", help="score a trained checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True, help="dataset directory or manifest path")
    ev.add_argument("--split", choices=("val", "train", "all"), default="val")
    ev.add_argument("--out", help="write the JSON report here instead of stdout")

    gc = sub.add_parser("gradcheck", help="finite-difference check of the full objective")
    gc.add_argument("config", nargs="?", help="optional JSON config for the model settings")
    gc.add_argument("--seed", type=int, default=0, help="parameter point seed")
    gc.add_argument("--eps", type=float, default=1e-5)
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.add_argument("--inject-fault", action="store_true",
                    help="flip one analytic gradient's sign; the check must fail")

    ab = sub.add_parser("ablate", help="train the component grid or aggregation sweep")
    ab.add_argument("config", help="path to the JSON config file")
    ab.add_argument("--dataset", help="dataset directory (overrides config)")
    ab.add_argument("--out", help="output directory (overrides config)")
    ab.add_argument("--seeds", default="0,1,2", help="comma-separated seed list")
    ab.add_argument("--mode", choices=("components", "aggregations"), default="components")

    return parser


def cmd_gen_data(args) -> int:
    dataset = generate(args.classes, args.per_class, args.positions, args.dim,
                       args.seed, sigma=args.sigma)
    manifest = save(dataset, args.out)
    print(f"wrote {len(dataset.instances)} instances "
          f"({dataset.n} categories x {dataset.per_class}) to {manifest}")
    print(f"confusable pairs: {dataset.confusable_pairs}")
    return 0


def _resolve_run(spec: RunSpec, args) -> tuple[TrainConfig, str, str | None]:
    dataset_path = args.dataset or spec.dataset
    if not dataset_path:
        raise CostreamError("no dataset given: set config.dataset or pass --dataset")
    out_dir = getattr(args, "out", None) or spec.out_dir
    return spec.config, dataset_path, out_dir


def cmd_train(args) -> int:
    from costream.trainer import fit

    spec = load_config(args.config)
    config, dataset_path, out_dir = _resolve_run(spec, args)
    if out_dir is None:
        raise CostreamError("no output directory: set config.out_dir or pass --out")
    dataset = load(dataset_path)
    result = fit(dataset, config, out_dir=out_dir, resume_from=args.resume)
    last = result.metrics[-1]
    print(f"trained {len(result.metrics)} epochs"
          + (" (stopped early)" if result.stopped_early else ""))
    print(f"best epoch {result.best_epoch}: fused accuracy {result.best_acc_fused:.4f}")
    print(f"last epoch {last['epoch']}: total loss {last['total']:.4f}, "
          f"acc_f {last['acc_f']:.4f}, acc_o {last['acc_o']:.4f}, "
          f"acc_fused {last['acc_fused']:.4f}")
    print(f"metrics: {Path(out_dir) / 'metrics.csv'}")
    print(f"checkpoint: {Path(out_dir) / 'checkpoint.bin'}")
    return 0


def cmd_eval(args) -> int:
    from costream.evaluation import evaluate
    from costream.model import build_model
    from costream.trainer import _assign, load_checkpoint, split_dataset

    state = load_checkpoint(args.checkpoint)
    dataset = load(args.data)
    model = build_model(state.config, state.n_classes, state.d_in,
                        sequence_length=state.sequence_length)
    _assign(model.parameters(), state.best_params or state.params)

    if args.split == "all":
        instances = dataset.instances
    else:
        train_insts, val_insts = split_dataset(dataset, state.config.val_fraction,
                                               state.config.seed)
        instances = val_insts if args.split == "val" else train_insts
    report = evaluate(model, instances, fusion_weight=state.config.fusion_weight)
    if args.out:
        report.save(args.out)
        print(f"report written to {args.out}")
    print(f"{args.split} split, {report.n_instances} instances: "
          f"acc_f {report.acc_f:.4f}, acc_o {report.acc_o:.4f}, "
          f"acc_fused {report.acc_fused:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    config = load_config(args.config).config if args.config else None
    fixture = make_fixture(config, point_seed=args.seed)
    params = fixture.params()
    fault = next(iter(params)) if args.inject_fault else None
    report = grad_check(fixture.objective, params, eps=args.eps, tol=args.tol,
                        negate_param=fault)
    for line in report.lines():
        print(line)
    margins = fixture.kink_margins()
    closest = min(margins, key=margins.get)
    print(f"closest kink: {closest} at {margins[closest]:.3e} "
          "(failures near 0 indicate a finite-difference artifact, not a gradient bug)")
    return 0 if report.passed else CHECK_EXIT


def cmd_ablate(args) -> int:
    from costream.evaluation import ablation_grid, aggregation_comparison

    spec = load_config(args.config)
    config, dataset_path, out_dir = _resolve_run(spec, args)
    try:
        seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    except ValueError:
        raise CostreamError(f"--seeds must be comma-separated integers, got {args.seeds!r}")
    if not seeds:
        raise CostreamError("--seeds must name at least one seed")
    dataset = load(dataset_path)

    if args.mode == "components":
        result = ablation_grid(dataset, config, seeds=seeds)
        csv_name = "ablation.csv"
    else:
        result = aggregation_comparison(dataset, config, seeds=seeds)
        csv_name = "aggregation.csv"
    for line in result.summary_lines():
        print(line)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.write_csv(out / csv_name)
        print(f"rows written to {out / csv_name}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "eval": cmd_eval,
        "gradcheck": cmd_gradcheck,
        "ablate": cmd_ablate,
    }
    try:
        return handlers[args.command](args)
    except GradCheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CHECK_EXIT
    except CostreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
