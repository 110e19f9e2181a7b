"""Post-run reporting: summary text and SVG figures for a run directory.

The report path is the only part of the package that touches matplotlib
(imported lazily, Agg backend), rendering static SVG files next to the
run's CSV data: the data-misfit series, the cumulative acceptance count
with its fitted slope, the field-error series when the truth is known, and
a heatmap of the reconstructed conductivity (side by side with the target
when one exists).

Reporting refuses to run if any file listed in the manifest is missing.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

from .grid import read_field_csv
from .manifest import RunManifest, missing_files, read_manifest
from .metrics import gamma_slope


class ReportError(RuntimeError):
    """Run directory is incomplete or inconsistent."""


def _parse_float(tok: str) -> float:
    return float(tok) if tok != "" else math.nan


def load_metrics(path) -> dict[str, np.ndarray]:
    """Columns of a metrics.csv as arrays; empty cells become NaN."""
    cols: dict[str, list] = {}
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for name in header:
            cols[name] = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ReportError(f"{path}: ragged row {row!r}")
            for name, tok in zip(header, row):
                cols[name].append(tok)
    out: dict[str, np.ndarray] = {}
    for name, toks in cols.items():
        if name in ("iter", "accepted", "gamma", "iteration"):
            out[name] = np.asarray([int(t) for t in toks], dtype=np.int64)
        else:
            out[name] = np.asarray([_parse_float(t) for t in toks],
                                   dtype=float)
    return out


def _setup_matplotlib(salt: str):
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt
    # stable element ids make rerendered SVGs reproducible
    plt.rcParams["svg.hashsalt"] = salt or "heatmc"
    plt.rcParams["figure.figsize"] = (6.0, 4.0)
    return plt


def render_run_report(run_dir, out_dir=None) -> list[str]:
    """Write summary.txt and SVG figures for one completed chain directory.

    Returns the list of written file paths.
    """
    run_dir = os.fspath(run_dir)
    manifest = read_manifest(run_dir)
    if manifest.chain_dirs:
        raise ReportError(
            f"{run_dir} is a multi-chain root; report its chain "
            f"subdirectories")
    missing = missing_files(run_dir, manifest)
    if missing:
        raise ReportError(
            f"{run_dir}: manifest lists missing files: {', '.join(missing)}")
    if manifest.status != "complete":
        raise ReportError(f"{run_dir}: run status is {manifest.status!r}, "
                          f"refusing to report")

    out_dir = run_dir if out_dir is None else os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    plt = _setup_matplotlib(manifest.config_hash)
    written: list[str] = []

    cols = load_metrics(os.path.join(run_dir, "metrics.csv"))
    iters = cols["iter"]
    slope = gamma_slope(iters, cols["gamma"]) if iters.size >= 2 else None

    # delta series
    fig, ax = plt.subplots()
    ax.plot(iters, cols["delta"], lw=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("data misfit (unweighted)")
    if np.all(cols["delta"] > 0):
        ax.set_yscale("log")
    ax.set_title("data misfit of the chain state")
    fig.tight_layout()
    p = os.path.join(out_dir, "delta.svg")
    fig.savefig(p)
    plt.close(fig)
    written.append(p)

    # cumulative acceptance count with fitted slope
    fig, ax = plt.subplots()
    ax.plot(iters, cols["gamma"], lw=0.8, label="accepted (cumulative)")
    if slope is not None:
        fit = np.polyfit(iters.astype(float), cols["gamma"].astype(float), 1)
        ax.plot(iters, np.polyval(fit, iters), "--", lw=0.8,
                label=f"fit, slope {slope:.3f}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("acceptance count")
    ax.set_title("cumulative acceptances")
    ax.legend()
    fig.tight_layout()
    p = os.path.join(out_dir, "gamma.svg")
    fig.savefig(p)
    plt.close(fig)
    written.append(p)

    # field error series, only when the truth was known
    if np.any(np.isfinite(cols["beta"])):
        fig, ax = plt.subplots()
        ax.plot(iters, cols["beta"], lw=0.8)
        ax.set_xlabel("iteration")
        ax.set_ylabel("squared field error")
        ax.set_title("error against the known target")
        fig.tight_layout()
        p = os.path.join(out_dir, "beta.svg")
        fig.savefig(p)
        plt.close(fig)
        written.append(p)

    # reconstruction heatmap (and target, when present)
    recon = read_field_csv(os.path.join(run_dir, "reconstruction.csv"))
    target_path = os.path.join(run_dir, "target.csv")
    target = read_field_csv(target_path) if os.path.exists(target_path) \
        else None
    ncols = 1 if target is None else 2
    fig, axes = plt.subplots(1, ncols, figsize=(5.0 * ncols, 4.2),
                             squeeze=False)
    vmin = min(recon.min(), target.min() if target is not None else recon.min())
    vmax = max(recon.max(), target.max() if target is not None else recon.max())
    im = axes[0][0].imshow(recon, origin="lower", vmin=vmin, vmax=vmax)
    axes[0][0].set_title("reconstruction")
    if target is not None:
        axes[0][1].imshow(target, origin="lower", vmin=vmin, vmax=vmax)
        axes[0][1].set_title("target")
    fig.colorbar(im, ax=[a for row in axes for a in row], shrink=0.85)
    p = os.path.join(out_dir, "field.svg")
    fig.savefig(p)
    plt.close(fig)
    written.append(p)

    lines = [
        f"run directory:    {os.path.abspath(run_dir)}",
        f"status:           {manifest.status}",
        f"config hash:      {manifest.config_hash}",
        f"seed:             {manifest.seed} (from {manifest.seed_source})",
        f"acceptance rule:  {manifest.acceptance_rule}",
        f"scheme:           {manifest.scheme}",
        f"iterations:       {manifest.iterations}",
        f"acceptance rate:  {_opt(manifest.acceptance_rate)}",
        f"fitted gamma slope: {_opt(slope)}",
        f"final delta:      {_opt(manifest.final_delta)}",
        f"final beta:       {_opt(manifest.final_beta)}",
        f"infeasible moves: {manifest.infeasible_count}",
        f"solver failures:  {manifest.solve_failures}",
    ]
    p = os.path.join(out_dir, "summary.txt")
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    written.append(p)
    return written


def _opt(v) -> str:
    return "n/a" if v is None else f"{v:.6g}"


def render_report(run_dir, out_dir=None) -> list[str]:
    """Report a run directory; handles both single- and multi-chain roots."""
    run_dir = os.fspath(run_dir)
    manifest = read_manifest(run_dir)
    if not manifest.chain_dirs:
        return render_run_report(run_dir, out_dir)

    if manifest.status != "complete":
        raise ReportError(f"{run_dir}: run status is {manifest.status!r}, "
                          f"refusing to report")
    written: list[str] = []
    summaries = []
    for sub in manifest.chain_dirs:
        sub_dir = os.path.join(run_dir, sub)
        sub_out = None if out_dir is None else os.path.join(
            os.fspath(out_dir), sub)
        written.extend(render_run_report(sub_dir, sub_out))
        summaries.append((sub, read_manifest(sub_dir)))

    lines = [f"multi-chain run:  {os.path.abspath(run_dir)}",
             f"config hash:      {manifest.config_hash}",
             f"chains:           {manifest.chains}",
             f"root seed:        {manifest.seed} (from "
             f"{manifest.seed_source})", ""]
    for sub, m in summaries:
        lines.append(
            f"{sub}: rate={_opt(m.acceptance_rate)} "
            f"delta={_opt(m.final_delta)} beta={_opt(m.final_beta)}")
    root_out = run_dir if out_dir is None else os.fspath(out_dir)
    os.makedirs(root_out, exist_ok=True)
    p = os.path.join(root_out, "summary.txt")
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    written.append(p)
    return written
