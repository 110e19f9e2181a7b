"""Metropolis-Hastings chain over conductivity fields.

One step proposes a block move, solves the forward problem for the
candidate, evaluates the configured acceptance rule, draws the comparison
uniform (from the restricted interval when enabled), and commits or
discards the candidate.  Every evaluated step emits a trace record; the
draw order (anchor row, anchor column, offset, comparison uniform) is
fixed, so a chain is a pure function of its configuration and seed.

Infeasible candidates (block pushed to the conductivity floor) and direct
solver failures are rejected without drawing the comparison uniform and
recorded with alpha = 0 and empty difference terms.

Checkpoints serialize the full chain state (field, cached observables,
normalizer memory, generator state) as JSON with round-trip-exact floats;
restoring one reproduces the continuation of the original run bit for bit
under the Markov schemes, and under z1 as well since the running maxima
are part of the state.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import __version__
from .acceptance import (DiffTerms, Sensitivities, alpha_baseline, alpha_dual,
                         alpha_normalized, diff_terms, misfit)
from .forward import ForwardSolver
from .grid import GridSpec, boundary_trace, validate_conductivity
from .metrics import MetricsRow, beta_at, delta_at
from .normalizers import (NormalizerConfig, NormalizerState, note_alpha,
                          restricted_bounds, update, z_terms)
from .priors import PriorValues, prior_values
from .proposal import ProposalConfig, propose

RULES = ("baseline", "dual", "normalized")
MISFIT_DOMAINS = ("boundary", "full")

CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 10_000
    seed: int = 0
    k_init: float = 1.0
    record_stride: int = 1
    checkpoint_stride: int = 0  # 0: only the final checkpoint
    acceptance_rule: str = "normalized"
    misfit_domain: str = "boundary"
    sensitivities: Sensitivities = field(default_factory=Sensitivities)
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    normalizer: NormalizerConfig = field(default_factory=NormalizerConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")
        if self.checkpoint_stride < 0:
            raise ValueError("checkpoint_stride must be nonnegative")
        if self.acceptance_rule not in RULES:
            raise ValueError(f"unknown acceptance rule "
                             f"{self.acceptance_rule!r}; expected {RULES}")
        if self.misfit_domain not in MISFIT_DOMAINS:
            raise ValueError(f"unknown misfit domain "
                             f"{self.misfit_domain!r}; "
                             f"expected {MISFIT_DOMAINS}")


class TraceRecord(NamedTuple):
    iteration: int
    alpha: float
    accepted: bool
    d1: float
    d2: float
    d3: float
    z0: float
    anchor_i: int
    anchor_j: int
    omega: float


@dataclass
class RunSummary:
    iterations: int
    accept_count: int
    acceptance_rate: float
    infeasible_count: int
    solve_failures: int
    final_delta: float
    final_beta: float | None
    wall_time_s: float


@dataclass
class ChainState:
    k_current: np.ndarray
    d_current: np.ndarray
    prior_current: "PriorValues"
    normalizer: NormalizerState
    iteration: int
    accept_count: int
    infeasible_count: int
    solve_failures: int
    rng: np.random.Generator
    solver: ForwardSolver


def observation(u: np.ndarray, domain: str) -> np.ndarray:
    """Observed vector extracted from a temperature field."""
    if domain == "boundary":
        return boundary_trace(u)
    return np.asarray(u, dtype=float).ravel()


def expected_data_length(spec: GridSpec, domain: str) -> int:
    if domain == "boundary":
        return 2 * (spec.n + spec.m) - 4
    return spec.n * spec.m


def init(cfg: ChainConfig, spec: GridSpec, d_obs: np.ndarray,
         k0: np.ndarray | None = None,
         rng: np.random.Generator | None = None) -> ChainState:
    """Fresh chain state; solves the forward problem for the start field.

    ``k0`` overrides the constant ``cfg.k_init`` start (used for
    file-initialized runs); ``rng`` overrides the seed-derived generator
    (used for spawned parallel chains).
    """
    d_obs = np.asarray(d_obs, dtype=float)
    want = expected_data_length(spec, cfg.misfit_domain)
    if d_obs.shape != (want,):
        raise ValueError(
            f"data vector has length {d_obs.size}, expected {want} for "
            f"misfit domain {cfg.misfit_domain!r} on {spec.n}x{spec.m}"
        )
    if k0 is None:
        k0 = np.full(spec.shape, float(cfg.k_init))
    k0 = validate_conductivity(np.array(k0, dtype=float, copy=True), spec,
                               k_min=cfg.proposal.k_min)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    solver = ForwardSolver(spec)
    u0 = solver.solve(k0)
    return ChainState(
        k_current=k0,
        d_current=observation(u0, cfg.misfit_domain),
        prior_current=prior_values(k0, spec.hx, spec.hy),
        normalizer=NormalizerState(),
        iteration=0,
        accept_count=0,
        infeasible_count=0,
        solve_failures=0,
        rng=rng,
        solver=solver,
    )


_NAN = float("nan")


def step(state: ChainState, cfg: ChainConfig, spec: GridSpec,
         d_obs: np.ndarray) -> TraceRecord:
    """Advance the chain one iteration and return its trace record."""
    it = state.iteration
    prop = propose(state.k_current, state.rng, cfg.proposal)
    ai, aj = prop.anchor
    if not prop.feasible:
        state.infeasible_count += 1
        state.iteration += 1
        return TraceRecord(it, 0.0, False, _NAN, _NAN, _NAN, _NAN,
                           ai, aj, prop.omega)
    try:
        u_cand = state.solver.solve(prop.field)
        if not np.all(np.isfinite(u_cand)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError:
        state.solve_failures += 1
        state.iteration += 1
        return TraceRecord(it, 0.0, False, _NAN, _NAN, _NAN, _NAN,
                           ai, aj, prop.omega)

    s = cfg.sensitivities
    ncfg = cfg.normalizer
    d_cand = observation(u_cand, cfg.misfit_domain)
    f_curr = misfit(d_obs, state.d_current, s.sigma)
    f_cand = misfit(d_obs, d_cand, s.sigma)
    p_cand = prior_values(prop.field, spec.hx, spec.hy)
    t = diff_terms(f_cand, f_curr, p_cand, state.prior_current)

    z0 = _NAN
    alpha_h = None
    if cfg.acceptance_rule == "baseline":
        alpha = alpha_baseline(t)
    elif cfg.acceptance_rule == "dual":
        alpha = alpha_dual(t, s)
    else:
        z = z_terms(state.normalizer, t, ncfg)
        alpha, alpha_h, z0 = alpha_normalized(t, z, s, ncfg.cutoff)

    if ncfg.restricted_interval:
        lo, hi = restricted_bounds(state.normalizer, ncfg)
    else:
        lo, hi = 0.0, 1.0
    u_draw = float(state.rng.uniform(lo, hi))
    accepted = alpha > u_draw

    if accepted:
        state.k_current = prop.field
        state.d_current = d_cand
        state.prior_current = p_cand
        state.accept_count += 1
    if alpha_h is not None:
        update(state.normalizer, alpha_h, t, accepted, ncfg, alpha=alpha)
    else:
        note_alpha(state.normalizer, alpha)
    state.iteration += 1
    return TraceRecord(it, alpha, accepted, t.d1, t.d2, t.d3, z0,
                       ai, aj, prop.omega)


# ---------------------------------------------------------------- run loop

TRACE_HEADER = "iteration,alpha,accepted,d1,d2,d3,z0,anchor_i,anchor_j,omega"
METRICS_HEADER = "iter,alpha,accepted,D1,D2,D3,z0,delta,beta,gamma"


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def format_trace_row(r: TraceRecord) -> str:
    return (f"{r.iteration},{_fmt(r.alpha)},{int(r.accepted)},"
            f"{_fmt(r.d1)},{_fmt(r.d2)},{_fmt(r.d3)},{_fmt(r.z0)},"
            f"{r.anchor_i},{r.anchor_j},{_fmt(r.omega)}")


def format_metrics_row(r: MetricsRow) -> str:
    return (f"{r.iteration},{_fmt(r.alpha)},{int(r.accepted)},"
            f"{_fmt(r.d1)},{_fmt(r.d2)},{_fmt(r.d3)},{_fmt(r.z0)},"
            f"{_fmt(r.delta)},{_fmt(r.beta)},{r.gamma}")


def run(cfg: ChainConfig, spec: GridSpec, d_obs: np.ndarray, *,
        k0: np.ndarray | None = None,
        k_correct: np.ndarray | None = None,
        rng: np.random.Generator | None = None,
        run_dir: str | os.PathLike | None = None,
        config_hash: str = "",
        trace_sink: Callable[[TraceRecord], None] | None = None,
        metrics_sink: Callable[[MetricsRow], None] | None = None,
        state: ChainState | None = None) -> RunSummary:
    """Drive a chain for ``cfg.iterations`` total iterations.

    When ``run_dir`` is given, trace.csv, metrics.csv and checkpoints are
    written there (appending if ``state`` resumes a previous run).  A
    record is kept every ``record_stride`` iterations and always for the
    final one.  Passing ``state`` (e.g. from :func:`load_checkpoint`)
    continues from its iteration counter.
    """
    d_obs = np.asarray(d_obs, dtype=float)
    if state is None:
        state = init(cfg, spec, d_obs, k0=k0, rng=rng)
    resume = state.iteration > 0

    trace_fh = metrics_fh = None
    ckpt_dir = None
    t0 = time.perf_counter()
    try:
        if run_dir is not None:
            run_dir = os.fspath(run_dir)
            os.makedirs(run_dir, exist_ok=True)
            mode = "a" if resume else "w"
            trace_fh = open(os.path.join(run_dir, "trace.csv"), mode,
                            encoding="utf-8", newline="\n")
            metrics_fh = open(os.path.join(run_dir, "metrics.csv"), mode,
                              encoding="utf-8", newline="\n")
            if not resume:
                trace_fh.write(TRACE_HEADER + "\n")
                metrics_fh.write(METRICS_HEADER + "\n")
            ckpt_dir = os.path.join(run_dir, "checkpoints")
            os.makedirs(ckpt_dir, exist_ok=True)

        last = cfg.iterations - 1
        while state.iteration < cfg.iterations:
            rec = step(state, cfg, spec, d_obs)
            it = rec.iteration
            if it % cfg.record_stride == 0 or it == last:
                beta = (beta_at(k_correct, state.k_current)
                        if k_correct is not None else None)
                mrow = MetricsRow(it, rec.alpha, rec.accepted, rec.d1,
                                  rec.d2, rec.d3, rec.z0,
                                  delta_at(d_obs, state.d_current), beta,
                                  state.accept_count)
                if trace_fh is not None:
                    trace_fh.write(format_trace_row(rec) + "\n")
                    metrics_fh.write(format_metrics_row(mrow) + "\n")
                if trace_sink is not None:
                    trace_sink(rec)
                if metrics_sink is not None:
                    metrics_sink(mrow)
            if (ckpt_dir is not None and cfg.checkpoint_stride
                    and state.iteration % cfg.checkpoint_stride == 0
                    and state.iteration < cfg.iterations):
                save_checkpoint(
                    os.path.join(ckpt_dir,
                                 f"ckpt_{state.iteration:09d}.json"),
                    state, config_hash)
        if ckpt_dir is not None:
            save_checkpoint(os.path.join(ckpt_dir, "ckpt_final.json"),
                            state, config_hash)
    finally:
        for fh in (trace_fh, metrics_fh):
            if fh is not None:
                fh.close()

    wall = time.perf_counter() - t0
    return RunSummary(
        iterations=state.iteration,
        accept_count=state.accept_count,
        acceptance_rate=state.accept_count / max(state.iteration, 1),
        infeasible_count=state.infeasible_count,
        solve_failures=state.solve_failures,
        final_delta=delta_at(d_obs, state.d_current),
        final_beta=(beta_at(k_correct, state.k_current)
                    if k_correct is not None else None),
        wall_time_s=wall,
    )


# ------------------------------------------------------------- checkpoints

def save_checkpoint(path: str | os.PathLike, state: ChainState,
                    config_hash: str = "") -> None:
    """Atomically write the full chain state as JSON."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "code_version": __version__,
        "config_hash": config_hash,
        "iteration": state.iteration,
        "accept_count": state.accept_count,
        "infeasible_count": state.infeasible_count,
        "solve_failures": state.solve_failures,
        "k_current": state.k_current.tolist(),
        "d_current": state.d_current.tolist(),
        "prior_current": {"roughness": state.prior_current.roughness,
                          "mixed": state.prior_current.mixed},
        "normalizer": state.normalizer.to_dict(),
        "rng_state": state.rng.bit_generator.state,
    }
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike, cfg: ChainConfig,
                    spec: GridSpec, config_hash: str = "",
                    check_hash: bool = True) -> ChainState:
    """Rebuild a chain state from a checkpoint file.

    The stored observables are trusted as-is (no re-solve), so the
    continuation reproduces the original run exactly.
    """
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format "
                         f"{payload.get('format')!r}")
    if check_hash and config_hash and payload.get("config_hash"):
        if payload["config_hash"] != config_hash:
            raise ValueError(
                f"{path}: checkpoint was written for config "
                f"{payload['config_hash'][:12]}, not {config_hash[:12]}"
            )
    k = np.asarray(payload["k_current"], dtype=float)
    validate_conductivity(k, spec, k_min=cfg.proposal.k_min)
    rng = np.random.default_rng()
    rng.bit_generator.state = payload["rng_state"]
    return ChainState(
        k_current=k,
        d_current=np.asarray(payload["d_current"], dtype=float),
        prior_current=PriorValues(payload["prior_current"]["roughness"],
                                  payload["prior_current"]["mixed"]),
        normalizer=NormalizerState.from_dict(payload["normalizer"]),
        iteration=int(payload["iteration"]),
        accept_count=int(payload["accept_count"]),
        infeasible_count=int(payload["infeasible_count"]),
        solve_failures=int(payload["solve_failures"]),
        rng=rng,
        solver=ForwardSolver(spec),
    )
