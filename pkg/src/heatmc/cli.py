"""Command-line interface.

Subcommands: ``phantom`` (write a synthetic target field), ``forward``
(solve the forward problem for a stored field), ``invert`` (run one or
more sampling chains from a JSON config), and ``report`` (summary text and
SVG figures for a finished run).  Exit codes: 0 on success, 1 on runtime
failure, 2 on usage or configuration errors.
"""

from __future__ import annotations

import sys

import click

from .config import (PHANTOM_PARAM_KEYS, ConfigError, build, load_config,
                     parse_json, resolve)
from .grid import read_field_csv, write_field_csv, write_vector_csv
from .harness import apply_seed_env, run_inversion
from .phantoms import make_phantom


@click.group()
@click.version_option(package_name="heatmc")
def main():
    """Conductivity-field reconstruction from boundary temperatures."""


@main.command()
@click.option("--kind", type=click.Choice(sorted(PHANTOM_PARAM_KEYS)),
              default="gaussian_well", show_default=True)
@click.option("--n", type=int, default=20, show_default=True,
              help="node rows")
@click.option("--m", type=int, default=20, show_default=True,
              help="node columns")
@click.option("--param", "params", type=(str, float), multiple=True,
              metavar="NAME VALUE",
              help="phantom parameter override; repeatable")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def phantom(kind, n, m, params, out):
    """Write a synthetic conductivity field as CSV."""
    allowed = PHANTOM_PARAM_KEYS[kind]
    kwargs = {}
    for name, value in params:
        if name not in allowed:
            raise click.UsageError(
                f"unknown parameter {name!r} for kind {kind!r}; "
                f"expected one of {list(allowed)}")
        kwargs[name] = value
    try:
        field = make_phantom(kind, n, m, **kwargs)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    write_field_csv(out, field)
    click.echo(f"wrote {kind} field ({n}x{m}) to {out}")


@main.command()
@click.option("--field", "field_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="conductivity field CSV")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="run configuration JSON (grid section is used)")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="boundary temperature CSV to write")
def forward(field_path, config_path, out):
    """Solve the forward problem and write the boundary temperatures."""
    from .forward import solve_forward
    from .grid import boundary_trace
    try:
        rc = load_config(config_path)
        k = read_field_csv(field_path)
        if k.shape != rc.grid.shape:
            raise ConfigError(
                f"field shape {k.shape} does not match configured grid "
                f"{rc.grid.shape}")
        u = solve_forward(k, rc.grid)
    except (ConfigError, ValueError) as exc:
        raise click.UsageError(str(exc))
    write_vector_csv(out, boundary_trace(u))
    click.echo(f"wrote boundary temperatures to {out}")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="run configuration JSON")
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False),
              help="run directory to create")
@click.option("--chains", type=int, default=1, show_default=True,
              help="number of independent seeded chains")
def invert(config_path, out_dir, chains):
    """Run the sampling inversion described by a configuration file."""
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            resolved = resolve(parse_json(fh.read()))
        resolved, seed_source = apply_seed_env(resolved)
        build(resolved)  # surface config errors before any output
        if chains < 1:
            raise ConfigError("--chains must be at least 1")
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    try:
        run_inversion(resolved, out_dir, chains=chains,
                      seed_source=seed_source)
    except KeyboardInterrupt:
        raise click.ClickException("interrupted; partial outputs flagged "
                                   "in the manifest")
    except OSError as exc:
        raise click.ClickException(f"run failed: {exc}")
    click.echo(f"run complete: {out_dir}")


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              default=None, help="write report files here instead of into "
                                 "the run directory")
def report(run_dir, out_dir):
    """Render summary text and SVG figures for a completed run."""
    from .report import ReportError, render_report
    try:
        written = render_report(run_dir, out_dir)
    except (ReportError, OSError, ValueError) as exc:
        raise click.ClickException(str(exc))
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
