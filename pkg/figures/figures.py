#!/usr/bin/env python3
"""Comparison figures from a benchmark metrics CSV.

Reads the canonical metrics CSV (header
model,n_dim,seed,epoch,split,loss,params,wall_ms) and renders three
figures: normalized train loss vs N, normalized test loss vs N, and
parameter count vs N. Normalization matches the report tool exactly:
final-epoch loss per (model, N, seed, split), median over seeds, divided by
the baseline model's median for that (N, split).

This script is a pure view over the CSV: it never recomputes losses, and
next to every image it writes a small JSON "data layer" holding exactly the
plotted numbers, so the figures can be cross-checked against report.json
bit for bit. Output is deterministic: fixed styles, no timestamps.

Usage:
    python figures.py --metrics metrics.csv --baseline gauge-theta --out figs/ --format svg
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "figures"
import matplotlib.pyplot as plt

CSV_FIELDS = ["model", "n_dim", "seed", "epoch", "split", "loss", "params", "wall_ms"]

LINE_STYLES = {
    "gauge-theta": dict(color="#1b6ca8", marker="o"),
    "gauge-nu": dict(color="#53a548", marker="s"),
    "plain-baseline": dict(color="#c1403d", marker="^"),
    "plain-matched": dict(color="#8a5ec8", marker="v"),
}


class MetricsError(ValueError):
    """The CSV cannot back the requested figures."""


def load_metrics(path):
    """Parse and validate the metrics CSV into a list of row dicts."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise MetricsError(f"metrics file {path} is empty") from None
        if header != CSV_FIELDS:
            missing = [c for c in CSV_FIELDS if c not in header]
            raise MetricsError(f"unexpected CSV header {header}"
                               + (f" (missing columns: {missing})" if missing else ""))
        rows = []
        for line, raw in enumerate(reader, start=2):
            if len(raw) != len(CSV_FIELDS):
                raise MetricsError(f"line {line}: expected {len(CSV_FIELDS)} fields, got {len(raw)}")
            try:
                rows.append({
                    "model": raw[0],
                    "n_dim": int(raw[1]),
                    "seed": int(raw[2]),
                    "epoch": int(raw[3]),
                    "split": raw[4],
                    "loss": float(raw[5]),
                    "params": int(raw[6]),
                })
            except ValueError as e:
                raise MetricsError(f"line {line}: non-numeric field ({e})") from e
    if not rows:
        raise MetricsError(f"metrics file {path} has a header but no data rows")
    return rows


def _median(values):
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2 == 1:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def normalized_series(rows, split, baseline):
    """Per-model normalized final-epoch loss curves over N.

    Returns (dims, {model: [ratio per dim or None]}).
    """
    final = {}
    last_epoch = {}
    for r in rows:
        if r["split"] != split:
            continue
        key = (r["n_dim"], r["model"], r["seed"])
        if r["epoch"] >= last_epoch.get(key, -1):
            last_epoch[key] = r["epoch"]
            final[key] = r["loss"]
    dims = sorted({n for n, _, _ in final})
    models = sorted({m for _, m, _ in final})
    medians = {}
    for n, m, _ in final:
        if (n, m) not in medians:
            losses = [v for (nn, mm, _), v in final.items() if nn == n and mm == m]
            medians[(n, m)] = _median(losses)
    for n in dims:
        if (n, baseline) not in medians:
            raise MetricsError(f"baseline {baseline!r} has no {split} rows for N={n}")
    series = {}
    for m in models:
        series[m] = [medians[(n, m)] / medians[(n, baseline)] if (n, m) in medians else None
                     for n in dims]
    return dims, series


def param_series(rows):
    """Per-model parameter counts over N; counts must agree across rows."""
    counts = {}
    for r in rows:
        key = (r["n_dim"], r["model"])
        if key in counts and counts[key] != r["params"]:
            raise MetricsError(f"inconsistent params for {r['model']} at N={r['n_dim']}: "
                               f"{counts[key]} vs {r['params']}")
        counts[key] = r["params"]
    dims = sorted({n for n, _ in counts})
    models = sorted({m for _, m in counts})
    series = {m: [counts.get((n, m)) for n in dims] for m in models}
    return dims, series


def _style(model):
    return LINE_STYLES.get(model, dict(marker="."))


def _save(fig, path, image_format):
    if image_format == "svg":
        fig.savefig(path, format="svg", metadata={"Date": None})
    else:
        fig.savefig(path, format="png", dpi=120)
    plt.close(fig)


def _write_data_layer(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def plot_normalized_losses(rows, split, baseline, out_dir, image_format):
    """One line per model: x = N, y = final-epoch median loss ratio."""
    dims, series = normalized_series(rows, split, baseline)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for model in sorted(series):
        ys = series[model]
        ax.plot([n for n, y in zip(dims, ys) if y is not None],
                [y for y in ys if y is not None],
                label=model, **_style(model))
    ax.set_xlabel("dimension N")
    ax.set_ylabel(f"normalized {split} loss (lower is better)")
    ax.set_title(f"{split.capitalize()} loss relative to {baseline}")
    ax.legend()
    ax.grid(True, alpha=0.3)
    stem = f"{split}_loss"
    image = Path(out_dir) / f"{stem}.{image_format}"
    _save(fig, image, image_format)
    _write_data_layer(Path(out_dir) / f"{stem}.json",
                      {"x": dims, "series": series, "baseline": baseline, "split": split})
    return image


def plot_param_counts(rows, out_dir, image_format):
    """Per-model parameter count vs N; the gauge variants coincide."""
    dims, series = param_series(rows)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for model in sorted(series):
        ys = series[model]
        ax.plot([n for n, y in zip(dims, ys) if y is not None],
                [y for y in ys if y is not None],
                label=model, **_style(model))
    ax.set_xlabel("dimension N")
    ax.set_ylabel("parameter count")
    ax.set_title("Model size")
    ax.legend()
    ax.grid(True, alpha=0.3)
    image = Path(out_dir) / f"num_params.{image_format}"
    _save(fig, image, image_format)
    _write_data_layer(Path(out_dir) / "num_params.json", {"x": dims, "series": series})
    return image


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--metrics", required=True)
    parser.add_argument("--baseline", default="gauge-theta")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--format", choices=["svg", "png"], default="svg")
    args = parser.parse_args(argv)
    try:
        rows = load_metrics(args.metrics)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = [
            plot_normalized_losses(rows, "train", args.baseline, out_dir, args.format),
            plot_normalized_losses(rows, "test", args.baseline, out_dir, args.format),
            plot_param_counts(rows, out_dir, args.format),
        ]
    except (MetricsError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
