"""Benchmark orchestration: sweeps, the metrics CSV, reports, diagnostics.

One benchmark run = (dimension, model kind, seed). Each run generates or
loads the per-dimension datasets, trains, and evaluates on the held-out
split after every epoch. Rows land in a CSV with the fixed header

    model,n_dim,seed,epoch,split,loss,params,wall_ms

canonicalized by sorting on (n_dim, model, seed, epoch, split) so that
parallel execution and reruns produce identical bytes. Wall times are
recorded as 0 unless wall-clock capture is switched on, keeping the
canonical CSV reproducible; opting in trades that away.

Seed derivation, fixed so independent streams never collide:
  model init   1_000_000 * seed + 1   (sub-networks consume +1 each)
  train stream 1_000_000 * seed + 2
  eval stream  1_000_000 * seed + 1000 + epoch
  datasets     data_seed + 2 * n_dim (train) / + 2 * n_dim + 1 (test)
"""

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .flowfield import (
    ModelKind, build_model, gauge_layer_dims, load_model, mlp_dims_param_count,
    param_count, plain_baseline_dims, plain_matched_dims, save_model,
    velocity_with_cache,
)
from .fmtrain import TrainConfig, eval_loss, train
from .gmmdata import Dataset, GmmSpec, load_dataset, sample_dataset, save_dataset
from .nn import mlp_forward
from .songauge import field_strength_at
from .rng import Prng

CSV_FIELDS = ["model", "n_dim", "seed", "epoch", "split", "loss", "params", "wall_ms"]


class ReportError(ValueError):
    """Metrics CSV cannot back the requested report."""


@dataclass
class MetricsRecord:
    model: str
    n_dim: int
    seed: int
    epoch: int
    split: str
    loss: float
    params: int
    wall_ms: int

    def __post_init__(self):
        if not np.isfinite(self.loss):
            raise ValueError(f"loss must be finite, got {self.loss}")
        if self.params <= 0:
            raise ValueError(f"params must be positive, got {self.params}")

    def row(self) -> list[str]:
        return [self.model, str(self.n_dim), str(self.seed), str(self.epoch),
                self.split, repr(self.loss), str(self.params), str(self.wall_ms)]


@dataclass
class ExperimentConfig:
    dims: list[int]
    models: list[ModelKind]
    seeds: list[int]
    components: int = 300
    train_count: int = 5000
    test_count: int = 2000
    spread: float = 25.0
    cov_scale: float = 0.5
    train: TrainConfig = field(default_factory=TrainConfig)
    data_seed: int = 20_000
    eval_draws: int = 1
    out_csv: str = "metrics.csv"
    data_dir: str = "data"
    wall_clock: bool = False
    workers: int = 1
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if not self.dims:
            raise ValueError("config needs at least one dimension")
        if any(not 2 <= n <= 64 for n in self.dims):
            raise ValueError(f"dims must lie in [2, 64], got {self.dims}")
        if not self.models:
            raise ValueError("config needs at least one model kind")
        if not self.seeds:
            raise ValueError("config needs at least one seed")
        self.models = [ModelKind(m) for m in self.models]


DESK_PROFILE = dict(components=300, train_count=5000, test_count=2000)
PAPER_PROFILE = dict(components=3000, train_count=15000, test_count=5000)


def dataset_paths(cfg: ExperimentConfig, n_dim: int) -> tuple[Path, Path]:
    base = Path(cfg.data_dir)
    tag = f"n{n_dim}_k{cfg.components}_s{cfg.data_seed}"
    return base / f"train_{tag}.gfmd", base / f"test_{tag}.gfmd"


def ensure_datasets(cfg: ExperimentConfig, n_dim: int) -> tuple[Dataset, Dataset]:
    """Generate the per-dimension splits once; later calls load the files."""
    spec = GmmSpec(n_dim=n_dim, k=cfg.components, spread=cfg.spread, cov_scale=cfg.cov_scale)
    train_path, test_path = dataset_paths(cfg, n_dim)
    train_path.parent.mkdir(parents=True, exist_ok=True)
    if not train_path.exists():
        save_dataset(sample_dataset(spec, cfg.train_count, cfg.data_seed + 2 * n_dim, "train"), train_path)
    if not test_path.exists():
        save_dataset(sample_dataset(spec, cfg.test_count, cfg.data_seed + 2 * n_dim + 1, "test"), test_path)
    return load_dataset(train_path), load_dataset(test_path)


def run_single(kind: ModelKind, train_ds: Dataset, test_ds: Dataset | None,
               seed: int, train_cfg: TrainConfig, eval_draws: int = 1,
               wall_clock: bool = False):
    """Train one model and collect its per-epoch metric rows.

    Returns (model, records). Per epoch there is one train row (running
    mean over the epoch's batches) and, when a test split is given, one
    test row (fresh-draw CFM loss).
    """
    base = 1_000_000 * seed
    model = build_model(kind, train_ds.n_dim, base + 1)
    n_params = param_count(model)
    records: list[MetricsRecord] = []
    clock = time.monotonic
    epoch_start = [clock()]

    def on_epoch(epoch, m, train_loss):
        test_loss = None
        if test_ds is not None:
            test_loss = eval_loss(m, test_ds, base + 1000 + epoch, eval_draws,
                                  t_clamp=train_cfg.t_clamp)
        ms = int((clock() - epoch_start[0]) * 1000) if wall_clock else 0
        records.append(MetricsRecord(kind.value, train_ds.n_dim, seed, epoch,
                                     "train", train_loss, n_params, ms))
        if test_loss is not None:
            records.append(MetricsRecord(kind.value, train_ds.n_dim, seed, epoch,
                                         "test", test_loss, n_params, ms))
        epoch_start[0] = clock()

    cfg = replace(train_cfg, seed=base + 2)
    train(model, train_ds, cfg, epoch_callback=on_epoch)
    return model, records


def _run_task(args):
    cfg, n_dim, kind, seed = args
    train_ds, test_ds = ensure_datasets(cfg, n_dim)
    model, records = run_single(kind, train_ds, test_ds, seed, cfg.train,
                                cfg.eval_draws, cfg.wall_clock)
    if cfg.checkpoint_dir is not None:
        ckpt_dir = Path(cfg.checkpoint_dir)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        save_model(model, ckpt_dir / f"{kind.value}_n{n_dim}_seed{seed}.json", seed)
    return records


def write_metrics_csv(records: list[MetricsRecord], path) -> None:
    records = sorted(records, key=lambda r: (r.n_dim, r.model, r.seed, r.epoch, r.split))
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for rec in records:
            writer.writerow(rec.row())


def append_metrics_csv(records: list[MetricsRecord], path) -> None:
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        if fresh:
            writer.writerow(CSV_FIELDS)
        for rec in records:
            writer.writerow(rec.row())


def run_benchmark(cfg: ExperimentConfig) -> tuple[Path, list[tuple[str, str]]]:
    """Execute the sweep; returns (csv path, failures as (task, error) pairs).

    Tasks are independent; failures are collected, not fatal. The CSV is
    written once at the end in canonical order.
    """
    # materialize datasets up front so parallel tasks only ever read
    for n_dim in sorted(set(cfg.dims)):
        ensure_datasets(cfg, n_dim)
    tasks = [(cfg, n, kind, seed)
             for n in cfg.dims for kind in cfg.models for seed in cfg.seeds]
    all_records: list[MetricsRecord] = []
    failures: list[tuple[str, str]] = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [(task, pool.submit(_run_task, task)) for task in tasks]
            for task, fut in futures:
                try:
                    all_records.extend(fut.result())
                except Exception as e:  # noqa: BLE001 - harness keeps going
                    failures.append((_task_name(task), str(e)))
    else:
        for task in tasks:
            try:
                all_records.extend(_run_task(task))
            except Exception as e:  # noqa: BLE001 - harness keeps going
                failures.append((_task_name(task), str(e)))
    out = Path(cfg.out_csv)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(all_records, out)
    return out, failures


def _task_name(task) -> str:
    _, n_dim, kind, seed = task
    return f"{getattr(kind, 'value', kind)}/N={n_dim}/seed={seed}"


# -- reporting ----------------------------------------------------------------


def expected_param_count(model_name: str, n_dim: int) -> int:
    """Independent closed-form count from the layer-dimension tables."""
    kind = ModelKind.parse(model_name)
    if kind.is_gauge:
        return sum(mlp_dims_param_count(d) for d in gauge_layer_dims(n_dim).values())
    if kind is ModelKind.PLAIN_BASELINE:
        return mlp_dims_param_count(plain_baseline_dims(n_dim))
    return mlp_dims_param_count(plain_matched_dims(n_dim))


def load_metrics_csv(path) -> list[MetricsRecord]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ReportError(f"metrics file {path} is empty") from None
        if header != CSV_FIELDS:
            raise ReportError(f"unexpected CSV header {header}, want {CSV_FIELDS}")
        records = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(CSV_FIELDS):
                raise ReportError(f"line {line}: expected {len(CSV_FIELDS)} fields, got {len(row)}")
            try:
                records.append(MetricsRecord(row[0], int(row[1]), int(row[2]), int(row[3]),
                                             row[4], float(row[5]), int(row[6]), int(row[7])))
            except ValueError as e:
                raise ReportError(f"line {line}: {e}") from e
    return records


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2 == 1:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def normalize_report(csv_path, baseline: str = "gauge-theta") -> dict:
    """Final-epoch losses per (split, N, model), median over seeds, divided
    by the baseline model's value. The params column is cross-checked
    against the closed-form counts."""
    records = load_metrics_csv(csv_path)
    if not records:
        raise ReportError(f"metrics file {csv_path} has no data rows")

    final: dict[tuple, float] = {}
    last_epoch: dict[tuple, int] = {}
    for r in records:
        key = (r.split, r.n_dim, r.model, r.seed)
        if r.epoch >= last_epoch.get(key, -1):
            last_epoch[key] = r.epoch
            final[key] = r.loss

    params: dict[tuple, int] = {}
    for r in records:
        expected = expected_param_count(r.model, r.n_dim)
        if r.params != expected:
            raise ReportError(f"params column for {r.model} at N={r.n_dim} is {r.params}, "
                              f"closed-form count says {expected}")
        params[(r.model, r.n_dim)] = r.params

    dims = sorted({r.n_dim for r in records})
    models = sorted({r.model for r in records})
    splits = sorted({r.split for r in records})
    normalized: dict[str, dict] = {}
    for split in splits:
        per_model: dict[str, dict] = {}
        medians: dict[tuple, float] = {}
        for model in models:
            for n in dims:
                losses = [v for (s, nd, m, _), v in final.items()
                          if s == split and nd == n and m == model]
                if losses:
                    medians[(model, n)] = _median(losses)
        for n in dims:
            if (baseline, n) not in medians:
                raise ReportError(f"baseline {baseline!r} has no {split} rows for N={n}")
        for model in models:
            series = {}
            for n in dims:
                if (model, n) in medians:
                    series[str(n)] = medians[(model, n)] / medians[(baseline, n)]
            if series:
                per_model[model] = series
        normalized[split] = per_model

    return {
        "baseline": baseline,
        "dims": dims,
        "normalized_loss": normalized,
        "params": {model: {str(n): params[(model, n)] for n in dims if (model, n) in params}
                   for model in models},
    }


def write_report(report: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")


# -- diagnostics ----------------------------------------------------------------


def diagnose(ckpt_path, n_probes: int = 8, t_probe: float = 0.5,
             fd_step: float = 1e-4, seed: int = 0) -> dict:
    """Structural health checks on a gauge checkpoint.

    Probes are standard-normal points; reported quantities: skewness
    residual of decoded gauge values (exactly zero by construction),
    orthogonality of the gauge correction against the fiber field, field
    strength norms at the probes, and the alpha(t) curve.
    """
    model = load_model(ckpt_path)
    if not model.variant.is_gauge:
        raise ValueError(f"diagnostics need a gauge checkpoint, got {model.variant.value}")
    n = model.n_dim
    rng = Prng(seed)
    probes = rng.normals(n_probes * n).reshape(n_probes, n)

    v, cache = velocity_with_cache(model, probes, t_probe)
    corr = v - cache.v_theta
    vn = cache.v_nu
    denom = (np.linalg.norm(vn, axis=1) * np.linalg.norm(corr, axis=1)) + 1e-30
    ortho = np.abs((vn * corr).sum(axis=1)) / denom

    skew_resid = float(np.abs(cache.contracted + np.swapaxes(cache.contracted, -1, -2)).max())

    def a_field(x):
        raw, _ = mlp_forward(model.a_net, np.append(x, t_probe))
        return model.basis.from_coefficients(raw.reshape(n, model.basis.dim_g))

    fs_norms = []
    for x in probes[: min(n_probes, 4)]:  # curvature probes are O(n^2) evaluations
        f = field_strength_at(a_field, x, h=fd_step)
        fs_norms.append(float(np.sqrt((f * f).sum())))

    alpha_ts = [0.0, 0.25, 0.5, 0.75, 1.0]
    alpha_vals = [float(mlp_forward(model.alpha_net, np.array([t]))[0][0]) for t in alpha_ts]

    return {
        "model_kind": model.variant.value,
        "n_dim": n,
        "t_probe": t_probe,
        "skewness_residual_max": skew_resid,
        "orthogonality_residual_max": float(ortho.max()),
        "field_strength_frobenius": fs_norms,
        "alpha_curve": {"t": alpha_ts, "alpha": alpha_vals},
    }
