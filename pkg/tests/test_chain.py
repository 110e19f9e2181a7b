"""Chain mechanics: draw protocol, bookkeeping, checkpoints, determinism."""

import dataclasses
import json
import os

import numpy as np
import pytest

from heatmc import chain
from heatmc.acceptance import Sensitivities
from heatmc.chain import (ChainConfig, TraceRecord, format_trace_row, init,
                          load_checkpoint, run, save_checkpoint, step)
from heatmc.forward import ForwardSolver
from heatmc.grid import GridSpec, boundary_trace
from heatmc.normalizers import NormalizerConfig
from heatmc.phantoms import gaussian_well, tilted_plane
from heatmc.priors import prior_values
from heatmc.proposal import ProposalConfig


def _observed(spec: GridSpec, k_true: np.ndarray,
              noise: float = 0.0, seed: int = 99) -> np.ndarray:
    u = ForwardSolver(spec).solve(k_true)
    d = boundary_trace(u)
    if noise:
        d = d + noise * np.random.default_rng(seed).standard_normal(d.size)
    return d


@pytest.fixture(scope="module")
def small_problem():
    spec = GridSpec(n=8, m=8)
    k_true = gaussian_well(8, 8, depth=0.3)
    return spec, k_true, _observed(spec, k_true, noise=0.05)


class TestConfigValidation:
    @pytest.mark.parametrize("kwargs", [
        {"iterations": 0}, {"record_stride": 0}, {"checkpoint_stride": -1},
        {"acceptance_rule": "metropolis"}, {"misfit_domain": "edge"},
    ])
    def test_rejected(self, kwargs):
        with pytest.raises(ValueError):
            ChainConfig(**kwargs)

    def test_defaults(self):
        cfg = ChainConfig()
        assert cfg.acceptance_rule == "normalized"
        assert cfg.misfit_domain == "boundary"
        assert cfg.normalizer.scheme == "z2"


class TestInit:
    def test_data_length_checked(self, small_problem):
        spec, _, d_obs = small_problem
        with pytest.raises(ValueError, match="length"):
            init(ChainConfig(), spec, d_obs[:-1])

    def test_constant_start(self, small_problem):
        spec, _, d_obs = small_problem
        state = init(ChainConfig(k_init=1.25), spec, d_obs)
        assert np.all(state.k_current == 1.25)
        assert state.iteration == 0 and state.accept_count == 0
        # cached observables belong to the start field
        u0 = ForwardSolver(spec).solve(state.k_current)
        assert np.array_equal(state.d_current, boundary_trace(u0))

    def test_explicit_start_field(self, small_problem):
        spec, _, d_obs = small_problem
        k0 = tilted_plane(8, 8, gx=0.2, gy=0.1)
        state = init(ChainConfig(k_init=5.0), spec, d_obs, k0=k0)
        assert np.array_equal(state.k_current, k0)
        # the chain owns a copy: mutating the input must not leak in
        k0[0, 0] = 99.0
        assert state.k_current[0, 0] != 99.0

    def test_start_field_validated(self, small_problem):
        spec, _, d_obs = small_problem
        with pytest.raises(ValueError):
            init(ChainConfig(), spec, d_obs, k0=np.zeros((8, 8)))

    def test_full_field_domain_length(self, small_problem):
        spec, k_true, _ = small_problem
        u = ForwardSolver(spec).solve(k_true)
        cfg = ChainConfig(misfit_domain="full")
        state = init(cfg, spec, u.ravel())
        assert state.d_current.size == 64


class TestDrawProtocol:
    def test_mirror_rng_stays_in_lockstep(self, small_problem):
        """Anchor row, anchor column, offset, then one comparison uniform
        for evaluated candidates and nothing more."""
        spec, _, d_obs = small_problem
        cfg = ChainConfig(seed=7)
        state = init(cfg, spec, d_obs)
        mirror = np.random.default_rng(7)
        for _ in range(60):
            k_before = state.k_current.copy()
            rec = step(state, cfg, spec, d_obs)
            ai = int(mirror.integers(0, spec.n - 1))
            aj = int(mirror.integers(0, spec.m - 1))
            om = float(mirror.uniform(-cfg.proposal.omega_max,
                                      cfg.proposal.omega_max))
            assert (rec.anchor_i, rec.anchor_j, rec.omega) == (ai, aj, om)
            feasible = bool(np.all(
                k_before[ai:ai + 2, aj:aj + 2] + om > cfg.proposal.k_min))
            if feasible:
                mirror.uniform(0.0, 1.0)
            assert state.rng.bit_generator.state == \
                mirror.bit_generator.state

    def test_infeasible_skips_comparison_draw(self, small_problem):
        """Near the floor roughly half the moves are infeasible; those must
        consume exactly the three proposal draws."""
        spec, _, d_obs = small_problem
        cfg = ChainConfig(seed=3, k_init=2e-6)
        state = init(cfg, spec, d_obs)
        mirror = np.random.default_rng(3)
        n_inf = 0
        for _ in range(40):
            k_before = state.k_current.copy()
            rec = step(state, cfg, spec, d_obs)
            ai = int(mirror.integers(0, spec.n - 1))
            aj = int(mirror.integers(0, spec.m - 1))
            om = float(mirror.uniform(-cfg.proposal.omega_max,
                                      cfg.proposal.omega_max))
            feasible = bool(np.all(
                k_before[ai:ai + 2, aj:aj + 2] + om > cfg.proposal.k_min))
            if feasible:
                mirror.uniform(0.0, 1.0)
            else:
                n_inf += 1
                assert rec.alpha == 0.0 and not rec.accepted
                assert np.isnan(rec.d1)
            assert state.rng.bit_generator.state == \
                mirror.bit_generator.state
        assert 0 < n_inf < 40
        assert state.infeasible_count == n_inf

    def test_restricted_interval_draw_window(self, small_problem):
        """With the restricted interval on, the comparison uniform comes
        from the running alpha extrema widened by zeta."""
        from heatmc.normalizers import restricted_bounds
        spec, _, d_obs = small_problem
        cfg = ChainConfig(seed=5, normalizer=NormalizerConfig(scheme="z1"))
        assert cfg.normalizer.restricted_interval
        state = init(cfg, spec, d_obs)
        mirror = np.random.default_rng(5)
        for _ in range(50):
            k_before = state.k_current.copy()
            bounds = restricted_bounds(state.normalizer, cfg.normalizer)
            rec = step(state, cfg, spec, d_obs)
            ai = int(mirror.integers(0, spec.n - 1))
            aj = int(mirror.integers(0, spec.m - 1))
            om = float(mirror.uniform(-cfg.proposal.omega_max,
                                      cfg.proposal.omega_max))
            feasible = bool(np.all(
                k_before[ai:ai + 2, aj:aj + 2] + om > cfg.proposal.k_min))
            if feasible:
                u_draw = float(mirror.uniform(*bounds))
                assert rec.accepted == (rec.alpha > u_draw)
            assert state.rng.bit_generator.state == \
                mirror.bit_generator.state


class TestBookkeeping:
    def test_accept_and_reject_updates(self, small_problem):
        spec, _, d_obs = small_problem
        cfg = ChainConfig(seed=11)
        state = init(cfg, spec, d_obs)
        seen_accept = seen_reject = False
        for _ in range(80):
            k_before = state.k_current.copy()
            d_before = state.d_current.copy()
            count_before = state.accept_count
            rec = step(state, cfg, spec, d_obs)
            if rec.accepted:
                seen_accept = True
                assert state.accept_count == count_before + 1
                diff = state.k_current - k_before
                moved = np.nonzero(diff)
                assert len(moved[0]) == 4
                assert np.allclose(diff[moved], rec.omega, rtol=0, atol=1e-15)
            else:
                seen_reject = True
                assert state.accept_count == count_before
                assert np.array_equal(state.k_current, k_before)
                assert np.array_equal(state.d_current, d_before)
        assert seen_accept and seen_reject

    def test_cached_observables_track_current_field(self, small_problem):
        """d_current and the prior cache always describe k_current."""
        spec, _, d_obs = small_problem
        cfg = ChainConfig(seed=2)
        state = init(cfg, spec, d_obs)
        for _ in range(40):
            step(state, cfg, spec, d_obs)
        u = ForwardSolver(spec).solve(state.k_current)
        assert np.array_equal(state.d_current, boundary_trace(u))
        p = prior_values(state.k_current, spec.hx, spec.hy)
        assert state.prior_current == p

    def test_iteration_counter_always_advances(self, small_problem):
        spec, _, d_obs = small_problem
        cfg = ChainConfig(seed=3, k_init=2e-6)  # mix of infeasible moves
        state = init(cfg, spec, d_obs)
        for want in range(25):
            rec = step(state, cfg, spec, d_obs)
            assert rec.iteration == want
            assert state.iteration == want + 1


class TestDeterminism:
    def test_identical_runs_bitwise(self, small_problem):
        spec, k_true, d_obs = small_problem

        def collect():
            rows = []
            cfg = ChainConfig(iterations=150, seed=42)
            run(cfg, spec, d_obs, k_correct=k_true,
                trace_sink=lambda r: rows.append(format_trace_row(r)))
            return rows

        a, b = collect(), collect()
        assert a == b
        assert len(a) == 150

    def test_seed_changes_the_run(self, small_problem):
        spec, _, d_obs = small_problem
        rows = {}
        for seed in (0, 1):
            acc = []
            run(ChainConfig(iterations=50, seed=seed), spec, d_obs,
                trace_sink=lambda r: acc.append(format_trace_row(r)))
            rows[seed] = acc
        assert rows[0] != rows[1]


def _drive(cfg, spec, d_obs, state, count):
    return [format_trace_row(step(state, cfg, spec, d_obs))
            for _ in range(count)]


SPLIT_CASES = [
    ("baseline", "z2"),
    ("dual", "z2"),
    ("normalized", "none"),
    ("normalized", "z1"),
    ("normalized", "z2"),
    ("normalized", "hybrid"),
]


class TestCheckpoints:
    @pytest.mark.parametrize("rule,scheme", SPLIT_CASES)
    def test_split_run_is_bitwise_identical(self, tmp_path, small_problem,
                                            rule, scheme):
        """60 iterations, checkpoint, 60 more == 120 straight through."""
        spec, _, d_obs = small_problem
        cfg = ChainConfig(seed=17, acceptance_rule=rule,
                          normalizer=NormalizerConfig(scheme=scheme))

        full_state = init(cfg, spec, d_obs)
        full_rows = _drive(cfg, spec, d_obs, full_state, 120)

        state = init(cfg, spec, d_obs)
        head = _drive(cfg, spec, d_obs, state, 60)
        path = tmp_path / f"ckpt_{rule}_{scheme}.json"
        save_checkpoint(path, state, config_hash="deadbeef")
        resumed = load_checkpoint(path, cfg, spec, config_hash="deadbeef")
        assert resumed.iteration == 60
        tail = _drive(cfg, spec, d_obs, resumed, 60)

        assert head == full_rows[:60]
        assert tail == full_rows[60:]
        assert np.array_equal(resumed.k_current, full_state.k_current)
        assert resumed.accept_count == full_state.accept_count
        assert resumed.normalizer == full_state.normalizer

    def test_config_hash_guard(self, tmp_path, small_problem):
        spec, _, d_obs = small_problem
        cfg = ChainConfig(seed=1)
        state = init(cfg, spec, d_obs)
        _drive(cfg, spec, d_obs, state, 5)
        path = tmp_path / "c.json"
        save_checkpoint(path, state, config_hash="aaaa1111")
        with pytest.raises(ValueError, match="written for config"):
            load_checkpoint(path, cfg, spec, config_hash="bbbb2222")
        # explicit opt-out loads anyway
        again = load_checkpoint(path, cfg, spec, config_hash="bbbb2222",
                                check_hash=False)
        assert again.iteration == 5

    def test_format_field_guard(self, tmp_path, small_problem):
        spec, _, d_obs = small_problem
        cfg = ChainConfig(seed=1)
        state = init(cfg, spec, d_obs)
        path = tmp_path / "c.json"
        save_checkpoint(path, state)
        payload = json.loads(path.read_text())
        payload["format"] = 999
        path.write_text(json.dumps(payload))
        with pytest.raises(ValueError, match="unsupported checkpoint"):
            load_checkpoint(path, cfg, spec)

    def test_z1_continuation_depends_on_running_maxima(self, tmp_path,
                                                       small_problem):
        """The non-Markov memory is load-bearing: perturbing the stored
        running maximum changes the z1 continuation."""
        spec, _, d_obs = small_problem
        cfg = ChainConfig(seed=23,
                          normalizer=NormalizerConfig(scheme="z1"))
        state = init(cfg, spec, d_obs)
        _drive(cfg, spec, d_obs, state, 40)
        path = tmp_path / "z1.json"
        save_checkpoint(path, state)

        clean = _drive(cfg, spec, d_obs,
                       load_checkpoint(path, cfg, spec), 40)
        payload = json.loads(path.read_text())
        payload["normalizer"]["alpha_h_max"] *= 10.0
        tampered_path = tmp_path / "z1_tampered.json"
        tampered_path.write_text(json.dumps(payload))
        tampered = _drive(cfg, spec, d_obs,
                          load_checkpoint(tampered_path, cfg, spec), 40)
        assert clean != tampered

    def test_markov_schemes_ignore_the_maxima_slots(self, tmp_path,
                                                    small_problem):
        """z2 and hybrid continuations read only the previous-iteration and
        last-accepted slots, so the maxima can be perturbed freely."""
        spec, _, d_obs = small_problem
        for scheme in ("z2", "hybrid"):
            cfg = ChainConfig(seed=23,
                              normalizer=NormalizerConfig(scheme=scheme))
            state = init(cfg, spec, d_obs)
            _drive(cfg, spec, d_obs, state, 40)
            path = tmp_path / f"{scheme}.json"
            save_checkpoint(path, state)

            clean = _drive(cfg, spec, d_obs,
                           load_checkpoint(path, cfg, spec), 40)
            payload = json.loads(path.read_text())
            payload["normalizer"]["alpha_h_max"] *= 10.0
            payload["normalizer"]["d_max"] = [
                v * 10.0 for v in payload["normalizer"]["d_max"]]
            tampered_path = tmp_path / f"{scheme}_tampered.json"
            tampered_path.write_text(json.dumps(payload))
            tampered = _drive(cfg, spec, d_obs,
                              load_checkpoint(tampered_path, cfg, spec), 40)
            assert clean == tampered


class TestRunLoop:
    def test_record_stride_and_last_iteration(self, small_problem):
        spec, _, d_obs = small_problem
        rows = []
        run(ChainConfig(iterations=30, seed=1, record_stride=7), spec, d_obs,
            trace_sink=lambda r: rows.append(r.iteration))
        assert rows == [0, 7, 14, 21, 28, 29]

    def test_checkpoint_stride_files(self, tmp_path, small_problem):
        spec, _, d_obs = small_problem
        run(ChainConfig(iterations=25, seed=1, checkpoint_stride=10),
            spec, d_obs, run_dir=tmp_path)
        names = sorted(os.listdir(tmp_path / "checkpoints"))
        assert names == ["ckpt_000000010.json", "ckpt_000000020.json",
                         "ckpt_final.json"]
        final = json.loads((tmp_path / "checkpoints"
                            / "ckpt_final.json").read_text())
        assert final["iteration"] == 25

    def test_run_writes_trace_and_metrics(self, tmp_path, small_problem):
        spec, k_true, d_obs = small_problem
        summary = run(ChainConfig(iterations=40, seed=4), spec, d_obs,
                      k_correct=k_true, run_dir=tmp_path)
        trace_lines = (tmp_path / "trace.csv").read_text().splitlines()
        metric_lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert trace_lines[0] == chain.TRACE_HEADER
        assert metric_lines[0] == chain.METRICS_HEADER
        assert len(trace_lines) == len(metric_lines) == 41
        assert summary.iterations == 40
        assert 0.0 <= summary.acceptance_rate <= 1.0
        assert np.isfinite(summary.final_delta)
        assert summary.final_beta is not None
        # gamma column is the cumulative acceptance count
        last_gamma = int(metric_lines[-1].split(",")[-1])
        assert last_gamma == summary.accept_count

    def test_interrupt_and_resume_matches_straight_run(self, tmp_path,
                                                       small_problem):
        spec, _, d_obs = small_problem
        cfg = ChainConfig(iterations=100, seed=31, checkpoint_stride=20)

        full = []
        run(dataclasses.replace(cfg, checkpoint_stride=0), spec, d_obs,
            trace_sink=lambda r: full.append(format_trace_row(r)))

        got = []

        def bomb(rec: TraceRecord):
            if rec.iteration == 47:
                raise KeyboardInterrupt
            got.append(format_trace_row(rec))

        with pytest.raises(KeyboardInterrupt):
            run(cfg, spec, d_obs, run_dir=tmp_path, trace_sink=bomb)
        assert got == full[:47]

        state = load_checkpoint(tmp_path / "checkpoints"
                                / "ckpt_000000040.json", cfg, spec)
        assert state.iteration == 40
        tail = []
        run(cfg, spec, d_obs, state=state,
            trace_sink=lambda r: tail.append(format_trace_row(r)))
        assert tail == full[40:]

    def test_single_iteration_run(self, small_problem):
        spec, _, d_obs = small_problem
        rows = []
        summary = run(ChainConfig(iterations=1, seed=0), spec, d_obs,
                      trace_sink=lambda r: rows.append(r))
        assert summary.iterations == 1
        assert len(rows) == 1 and rows[0].iteration == 0

    def test_smoke_run_finishes_quickly(self, small_problem):
        spec10 = GridSpec(n=10, m=10)
        k_true = gaussian_well(10, 10, depth=0.4)
        d_obs = _observed(spec10, k_true, noise=0.05)
        summary = run(ChainConfig(iterations=2000, seed=0), spec10, d_obs,
                      k_correct=k_true)
        assert summary.iterations == 2000
        assert 0.0 < summary.acceptance_rate < 1.0
        assert summary.wall_time_s < 60.0
