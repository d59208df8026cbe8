"""Render publication-style figures from deepwifi CSV outputs.

This package is read-only over the simulator's delimited files: every
figure is regenerated from CSV alone, so deleting images and rendering
again yields byte-identical files.  The expected inputs are the
versioned CSVs the simulator CLI writes (first line is a schema stamp
like ``# deepwifi-csv v1 sweep``).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

__version__ = "0.1.0"

SCHEMA_VERSION = 1

# columns each figure kind needs from its input CSV
REQUIRED = {
    "throughput_vs_pj": ("policy", "p_j", "cumulative_mbps"),
    "throughput_vs_sinr": ("policy", "post_jam_sinr_db", "cumulative_mbps"),
    "per_user_bars": ("user", "avg_mbps"),
    "power_histogram": ("power_w",),
    "adaptive_compare": ("policy", "jammer_kind", "p_j", "cumulative_mbps"),
    "training_curves": ("model", "epoch", "metric", "value"),
}

KINDS = tuple(REQUIRED)

_SAVE_OPTS = dict(dpi=120, metadata={"Software": None})


class SchemaError(ValueError):
    """The CSV does not match the declared schema."""


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    inputs: tuple
    output: str
    xlabel: str = None
    ylabel: str = None
    title: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise SchemaError("a plot needs at least one input CSV")


def read_table(path):
    """Load one stamped CSV, checking version and non-emptiness."""
    with open(path) as fh:
        stamp = fh.readline().strip()
    parts = stamp.split()
    if len(parts) < 2 or parts[0] != "#" or parts[1] != "deepwifi-csv":
        raise SchemaError(f"{path}: missing deepwifi-csv stamp")
    version = parts[2] if len(parts) > 2 else ""
    if version != f"v{SCHEMA_VERSION}":
        raise SchemaError(
            f"{path}: schema {version or '?'} unsupported, "
            f"expected v{SCHEMA_VERSION}")
    df = pd.read_csv(path, skiprows=1)
    if df.empty:
        raise SchemaError(f"{path}: no data rows")
    return df


def _load(spec):
    frames = []
    for path in spec.inputs:
        df = read_table(path)
        missing = [c for c in REQUIRED[spec.kind] if c not in df.columns]
        if missing:
            raise SchemaError(
                f"{path}: columns {missing} required for {spec.kind}")
        frames.append(df)
    return pd.concat(frames, ignore_index=True)


def _finish(ax, spec, default_x, default_y):
    ax.set_xlabel(spec.xlabel or default_x)
    ax.set_ylabel(spec.ylabel or default_y)
    if spec.title:
        ax.set_title(spec.title)


def build_figure(spec):
    """The figure for a spec, without writing it anywhere."""
    df = _load(spec)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))

    if spec.kind in ("throughput_vs_pj", "throughput_vs_sinr"):
        x = "p_j" if spec.kind == "throughput_vs_pj" else "post_jam_sinr_db"
        for policy in sorted(df["policy"].unique()):
            mean = (df[df["policy"] == policy]
                    .groupby(x)["cumulative_mbps"].mean())
            ax.plot(mean.index, mean.values, marker="o", markersize=3,
                    label=policy)
        ax.legend()
        label = ("jamming probability" if x == "p_j"
                 else "post-jam SINR (dB)")
        _finish(ax, spec, label, "throughput (Mb/s)")

    elif spec.kind == "per_user_bars":
        users = df.sort_values("user")
        ax.bar([str(u) for u in users["user"]], users["avg_mbps"])
        _finish(ax, spec, "user", "throughput (Mb/s)")

    elif spec.kind == "power_histogram":
        ax.hist(df["power_w"], bins=40)
        _finish(ax, spec, "transmit power (W)", "transmissions")

    elif spec.kind == "adaptive_compare":
        sub = df[df["policy"] == "deepwifi"]
        if sub.empty:
            raise SchemaError("adaptive comparison needs deepwifi rows")
        for kind in sorted(sub["jammer_kind"].unique()):
            mean = (sub[sub["jammer_kind"] == kind]
                    .groupby("p_j")["cumulative_mbps"].mean())
            ax.plot(mean.index, mean.values, marker="o", markersize=3,
                    label=kind)
        ax.legend()
        _finish(ax, spec, "jamming probability", "throughput (Mb/s)")

    elif spec.kind == "training_curves":
        for (model, metric), group in df.groupby(["model", "metric"]):
            ax.plot(group["epoch"], group["value"],
                    label=f"{model} {metric}")
        ax.set_yscale("log")
        ax.legend()
        _finish(ax, spec, "epoch", "metric value")

    fig.tight_layout()
    return fig


def render(spec):
    """Render one figure to spec.output; returns the written path."""
    fig = build_figure(spec)
    try:
        fig.savefig(spec.output, **_SAVE_OPTS)
    finally:
        plt.close(fig)
    return spec.output


# standard file layout the simulator CLI writes
DEFAULT_FIGURES = (
    ("throughput_vs_pj", ("sweep.csv",), "fig_throughput_vs_pj.png"),
    ("throughput_vs_sinr", ("sinr_sweep.csv",), "fig_throughput_vs_sinr.png"),
    ("per_user_bars", ("run_users.csv",), "fig_per_user.png"),
    ("power_histogram", ("run_power.csv",), "fig_power_histogram.png"),
    ("adaptive_compare", ("static_sweep.csv", "adaptive_sweep.csv"),
     "fig_adaptive_compare.png"),
    ("training_curves", ("train_metrics.csv",), "fig_training_curves.png"),
)


def render_directory(directory, out_directory=None):
    """Render every standard figure whose inputs exist; returns paths."""
    out_directory = out_directory or directory
    os.makedirs(out_directory, exist_ok=True)
    written = []
    for kind, names, image in DEFAULT_FIGURES:
        paths = [os.path.join(directory, n) for n in names]
        if not all(os.path.exists(p) for p in paths):
            continue
        spec = PlotSpec(kind=kind, inputs=tuple(paths),
                        output=os.path.join(out_directory, image))
        written.append(render(spec))
    return written


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="deepwifi-plots",
        description="render figures from deepwifi CSV outputs")
    parser.add_argument("directory", help="directory holding the CSVs")
    parser.add_argument("--out", default=None,
                        help="image output directory (default: same)")
    args = parser.parse_args(argv)
    try:
        written = render_directory(args.directory, args.out)
    except SchemaError as exc:
        print(f"error: {exc}")
        return 1
    if not written:
        print(f"error: no renderable CSVs in {args.directory}")
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
