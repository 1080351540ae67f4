"""Command-line entry point.

Subcommands: gen-data, train, eval, sample, bench, report, diagnose. All
errors surface as `error: <message>` on stderr with a nonzero exit code;
argparse handles usage errors itself.
"""

import argparse
import json
import sys
from pathlib import Path

from .bench import (
    DESK_PROFILE, PAPER_PROFILE, ExperimentConfig, append_metrics_csv, diagnose,
    normalize_report, run_benchmark, run_single, write_report,
)
from .flowfield import ModelKind, integrate, load_model, save_model
from .fmtrain import TrainConfig, eval_loss
from .gmmdata import Dataset, GmmSpec, load_dataset, sample_dataset, save_dataset
from .rng import Prng


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _model_list(text: str) -> list[ModelKind]:
    return [ModelKind.parse(part) for part in text.split(",") if part]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaugeflow",
                                     description="Gauge-corrected flow models on Gaussian-mixture benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate train/test mixture datasets")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--components", type=int, required=True)
    p.add_argument("--train-count", type=int, required=True)
    p.add_argument("--test-count", type=int, required=True)
    p.add_argument("--spread", type=float, default=25.0)
    p.add_argument("--cov-scale", type=float, default=0.5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train one model on a dataset file")
    p.add_argument("--model", type=ModelKind.parse, required=True,
                   help="plain-baseline|plain-matched|gauge-theta|gauge-nu")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--ckpt", help="checkpoint output path")
    p.add_argument("--metrics", help="append per-epoch rows to this CSV")

    p = sub.add_parser("eval", help="fresh-draw CFM loss of a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--draws", type=int, default=1)

    p = sub.add_parser("sample", help="integrate base draws through a trained model")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--integrator", choices=["euler", "rk4"], default="rk4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output file (dataset binary format)")

    p = sub.add_parser("bench", help="run the benchmark sweep")
    p.add_argument("--dims", type=_int_list, default=[3, 4, 8, 16, 32])
    p.add_argument("--models", type=_model_list,
                   default=[ModelKind.GAUGE_THETA, ModelKind.GAUGE_NU,
                            ModelKind.PLAIN_BASELINE, ModelKind.PLAIN_MATCHED])
    p.add_argument("--seeds", type=_int_list, default=[1, 2, 3])
    p.add_argument("--profile", choices=["desk", "paper"], default="desk")
    p.add_argument("--out", default="metrics.csv")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--components", type=int, help="override the profile component count")
    p.add_argument("--train-count", type=int, help="override the profile train size")
    p.add_argument("--test-count", type=int, help="override the profile test size")
    p.add_argument("--data-seed", type=int, default=20_000)
    p.add_argument("--data-dir", default="data")
    p.add_argument("--ckpt-dir", help="also save one checkpoint per run")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--wall-clock", action="store_true",
                   help="record real wall times (makes the CSV nonreproducible)")

    p = sub.add_parser("report", help="normalized per-dimension report from a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--baseline", default="gauge-theta")
    p.add_argument("--out", required=True)

    p = sub.add_parser("diagnose", help="structural checks on a gauge checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--probes", type=int, default=8)
    p.add_argument("--t", type=float, default=0.5, dest="t_probe")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_gen_data(args) -> int:
    spec = GmmSpec(n_dim=args.dim, k=args.components, spread=args.spread,
                   cov_scale=args.cov_scale)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # test split consumes the seed right after the train split
    train_ds = sample_dataset(spec, args.train_count, args.seed, "train")
    test_ds = sample_dataset(spec, args.test_count, args.seed + 1, "test")
    save_dataset(train_ds, out / "train.gfmd")
    save_dataset(test_ds, out / "test.gfmd")
    print(out / "train.gfmd")
    print(out / "test.gfmd")
    return 0


def _cmd_train(args) -> int:
    train_ds = load_dataset(args.data)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                      learning_rate=args.lr, seed=args.seed)
    model, records = run_single(args.model, train_ds, None, args.seed, cfg)
    if args.ckpt:
        save_model(model, args.ckpt, args.seed)
    if args.metrics:
        append_metrics_csv(records, args.metrics)
    print(json.dumps({"model": args.model.value, "n_dim": train_ds.n_dim,
                      "final_train_loss": records[-1].loss}))
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.ckpt)
    ds = load_dataset(args.data)
    loss = eval_loss(model, ds, args.seed, args.draws)
    print(json.dumps({"loss": loss, "count": ds.count, "draws": args.draws}))
    return 0


def _cmd_sample(args) -> int:
    model = load_model(args.ckpt)
    x0 = Prng(args.seed).normals(args.count * model.n_dim).reshape(args.count, model.n_dim)
    traj = integrate(model, x0, args.steps, args.integrator)
    save_dataset(Dataset(model.n_dim, traj[-1]), args.out)
    print(args.out)
    return 0


def _cmd_bench(args) -> int:
    profile = DESK_PROFILE if args.profile == "desk" else PAPER_PROFILE
    cfg = ExperimentConfig(
        dims=args.dims,
        models=args.models,
        seeds=args.seeds,
        components=args.components if args.components is not None else profile["components"],
        train_count=args.train_count if args.train_count is not None else profile["train_count"],
        test_count=args.test_count if args.test_count is not None else profile["test_count"],
        train=TrainConfig(epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr),
        data_seed=args.data_seed,
        out_csv=args.out,
        data_dir=args.data_dir,
        wall_clock=args.wall_clock,
        workers=args.workers,
        checkpoint_dir=args.ckpt_dir,
    )
    path, failures = run_benchmark(cfg)
    print(path)
    if failures:
        for name, err in failures:
            print(f"error: run {name} failed: {err}", file=sys.stderr)
        return 1
    return 0


def _cmd_report(args) -> int:
    report = normalize_report(args.metrics, args.baseline)
    write_report(report, args.out)
    print(args.out)
    return 0


def _cmd_diagnose(args) -> int:
    result = diagnose(args.ckpt, n_probes=args.probes, t_probe=args.t_probe, seed=args.seed)
    with open(args.out, "w") as f:
        json.dump(result, f, indent=2, sort_keys=True)
        f.write("\n")
    print(args.out)
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sample": _cmd_sample,
    "bench": _cmd_bench,
    "report": _cmd_report,
    "diagnose": _cmd_diagnose,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
