"""Inversion run orchestration shared by the command line and tests.

A run directory is laid out as::

    run/
      config.resolved.json   fully resolved configuration (hash input)
      data.csv               observed vector driving the misfit
      target.csv             synthetic-truth field (phantom runs only)
      k_init.csv             start field (file-initialized runs only)
      trace.csv              per-iteration acceptance trace (strided)
      metrics.csv            diagnostics series (strided)
      reconstruction.csv     final conductivity field
      checkpoints/           periodic + final chain checkpoints
      manifest.json          status, hash, seed, file list, summaries

With ``chains > 1`` each chain runs in its own subprocess and writes the
same layout under ``chain_00/ ... chain_{N-1}/``; chain ``i`` draws from
the generator seeded with ``SeedSequence(seed, spawn_key=(i,))``, which is
the documented jump-ahead giving independent streams from one root seed.
"""

from __future__ import annotations

import datetime
import json
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import chain as chain_mod
from .chain import ChainConfig, RunSummary, expected_data_length, observation
from .config import ConfigError, RunConfig, build, config_hash
from .forward import solve_forward
from .grid import (GridSpec, read_field_csv, read_vector_csv,
                   write_field_csv, write_vector_csv)
from .manifest import RunManifest, write_manifest

SEED_ENV_VAR = "HEATMC_SEED"


def _utcnow() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def apply_seed_env(resolved: dict,
                   env: dict | None = None) -> tuple[dict, str]:
    """Override chain.seed from the environment when the variable is set.

    Returns the (possibly updated) resolved dictionary and the seed source
    tag ('config' or 'env').
    """
    env = os.environ if env is None else env
    raw = env.get(SEED_ENV_VAR)
    if raw is None:
        return resolved, "config"
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(
            f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None
    resolved = json.loads(json.dumps(resolved))  # deep copy
    resolved["chain"]["seed"] = seed
    return resolved, "env"


def prepare_inputs(rc: RunConfig):
    """Observed vector, optional truth field, optional start field.

    Synthetic runs build the phantom and solve the forward problem for it;
    measured runs read the data file (relative paths resolve against the
    caller's working directory).
    """
    grid = rc.grid
    k_correct = None
    if rc.phantom is not None:
        k_correct = rc.phantom.build(grid.n, grid.m)
        u = solve_forward(k_correct, grid)
        d_obs = observation(u, rc.chain.misfit_domain)
    else:
        d_obs = read_vector_csv(rc.data_path)
        want = expected_data_length(grid, rc.chain.misfit_domain)
        if d_obs.size != want:
            raise ConfigError(
                f"data.path: vector has length {d_obs.size}, expected "
                f"{want} for misfit domain {rc.chain.misfit_domain!r} on "
                f"a {grid.n}x{grid.m} grid")
    k0 = None
    if rc.init_file is not None:
        k0 = read_field_csv(rc.init_file)
        if k0.shape != grid.shape:
            raise ConfigError(
                f"init.file: field shape {k0.shape} does not match grid "
                f"{grid.shape}")
    return d_obs, k_correct, k0


def _chain_files(rc: RunConfig, k_correct, k0) -> list[str]:
    files = ["config.resolved.json", "data.csv", "trace.csv", "metrics.csv",
             "reconstruction.csv", "checkpoints/ckpt_final.json"]
    if k_correct is not None:
        files.insert(2, "target.csv")
    if k0 is not None:
        files.insert(2, "k_init.csv")
    return files


def run_one_chain(rc: RunConfig, out_dir: str | os.PathLike,
                  seed_source: str = "config",
                  chain_index: int | None = None,
                  chains: int = 1) -> RunSummary:
    """Execute a single chain into ``out_dir`` and write its manifest."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    d_obs, k_correct, k0 = prepare_inputs(rc)

    rng = None
    if chain_index is not None:
        seq = np.random.SeedSequence(rc.chain.seed, spawn_key=(chain_index,))
        rng = np.random.default_rng(seq)

    manifest = RunManifest(
        config_hash=rc.config_hash,
        seed=rc.chain.seed,
        seed_source=seed_source,
        chain_index=chain_index,
        chains=chains,
        scheme=rc.chain.normalizer.scheme,
        acceptance_rule=rc.chain.acceptance_rule,
        iterations=rc.chain.iterations,
        status="running",
        created_utc=_utcnow(),
        files=_chain_files(rc, k_correct, k0),
    )

    with open(os.path.join(out_dir, "config.resolved.json"), "w",
              encoding="utf-8", newline="\n") as fh:
        json.dump(rc.resolved, fh, indent=1, sort_keys=True)
        fh.write("\n")
    write_vector_csv(os.path.join(out_dir, "data.csv"), d_obs)
    if k_correct is not None:
        write_field_csv(os.path.join(out_dir, "target.csv"), k_correct)
    if k0 is not None:
        write_field_csv(os.path.join(out_dir, "k_init.csv"), k0)
    write_manifest(out_dir, manifest)

    try:
        summary = chain_mod.run(
            rc.chain, rc.grid, d_obs, k0=k0, k_correct=k_correct, rng=rng,
            run_dir=out_dir, config_hash=rc.config_hash)
    except BaseException:
        manifest.status = "aborted"
        manifest.finished_utc = _utcnow()
        manifest.files = [f for f in manifest.files if
                          os.path.exists(os.path.join(out_dir, f))]
        write_manifest(out_dir, manifest)
        raise

    # final state lives in the last checkpoint; also dump the plain field
    st = chain_mod.load_checkpoint(
        os.path.join(out_dir, "checkpoints", "ckpt_final.json"),
        rc.chain, rc.grid, config_hash=rc.config_hash)
    write_field_csv(os.path.join(out_dir, "reconstruction.csv"),
                    st.k_current)

    manifest.status = "complete"
    manifest.finished_utc = _utcnow()
    manifest.acceptance_rate = summary.acceptance_rate
    manifest.final_delta = summary.final_delta
    manifest.final_beta = summary.final_beta
    manifest.infeasible_count = summary.infeasible_count
    manifest.solve_failures = summary.solve_failures
    manifest.wall_time_s = summary.wall_time_s
    write_manifest(out_dir, manifest)
    return summary


def _chain_worker(args) -> dict:
    resolved, out_dir, seed_source, index, chains = args
    rc = build(resolved)
    summary = run_one_chain(rc, out_dir, seed_source=seed_source,
                            chain_index=index, chains=chains)
    return {"index": index, "acceptance_rate": summary.acceptance_rate,
            "final_delta": summary.final_delta,
            "final_beta": summary.final_beta}


def run_inversion(resolved: dict, out_dir: str | os.PathLike,
                  chains: int = 1, seed_source: str = "config") -> None:
    """Run one or several independent chains into ``out_dir``."""
    if chains < 1:
        raise ConfigError("chains must be at least 1")
    out_dir = os.fspath(out_dir)
    rc = build(resolved)
    if chains == 1:
        run_one_chain(rc, out_dir, seed_source=seed_source)
        return

    os.makedirs(out_dir, exist_ok=True)
    dirs = [f"chain_{i:02d}" for i in range(chains)]
    root = RunManifest(
        config_hash=rc.config_hash,
        seed=rc.chain.seed,
        seed_source=seed_source,
        chains=chains,
        scheme=rc.chain.normalizer.scheme,
        acceptance_rule=rc.chain.acceptance_rule,
        iterations=rc.chain.iterations,
        status="running",
        created_utc=_utcnow(),
        chain_dirs=dirs,
    )
    write_manifest(out_dir, root)
    jobs = [(rc.resolved, os.path.join(out_dir, d), seed_source, i, chains)
            for i, d in enumerate(dirs)]
    try:
        with ProcessPoolExecutor(max_workers=min(chains, os.cpu_count() or 1)
                                 ) as pool:
            list(pool.map(_chain_worker, jobs))
    except BaseException:
        root.status = "aborted"
        root.finished_utc = _utcnow()
        write_manifest(out_dir, root)
        raise
    root.status = "complete"
    root.finished_utc = _utcnow()
    write_manifest(out_dir, root)
