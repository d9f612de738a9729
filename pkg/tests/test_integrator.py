import math

import numpy as np
import pytest

from nematic2d import spectral as sp
from nematic2d.forcing import ForcingSpec, ForcingTerm, constant_g
from nematic2d.integrator import (
    NumericalAbort,
    PicardConfig,
    State,
    StepperConfig,
    advisory_dt,
    make_state,
    picard_solve,
    run,
    sphere_drift_probe,
    step,
)
from nematic2d.potential import PotentialSpec
from nematic2d.scenarios import build
from nematic2d.spectral import TorusGrid


def tg_state(grid, amp=1.0):
    return build("taylor_green", grid, {"amp": amp}).state


def sup_l2(grid, a, b):
    return max(
        math.hypot(sp.l2_norm(grid, x.v - y.v), sp.l2_norm(grid, x.d - y.d)) for x, y in zip(a, b)
    )


class TestState:
    def test_make_state_projects_and_normalizes(self):
        g = TorusGrid(16)
        rng = np.random.default_rng(0)
        s = make_state(g, rng.standard_normal((2, 16, 16)), 1 + rng.random((3, 16, 16)))
        s.check()

    def test_check_rejects_off_sphere(self):
        g = TorusGrid(16)
        s = make_state(g, None, np.array([0, 0, 2.0]), normalize=False)
        with pytest.raises(ValueError, match="sphere"):
            s.check()

    def test_check_rejects_divergence(self):
        g = TorusGrid(16)
        X, _ = g.coords()
        s = State(g, np.stack([np.sin(X), 0 * X]), make_state(g, None, np.array([0, 0, 1.0])).d)
        with pytest.raises(ValueError, match="divergence"):
            s.check()


class TestConfig:
    @pytest.mark.parametrize("kw", [{"dt": 0.0}, {"dt": -1e-3}, {"scheme": "RK4"}, {"constraint_mode": "x"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            StepperConfig(**kw)

    def test_advisory_bound_logged(self, caplog):
        g = TorusGrid(16)
        run(tg_state(g, 50.0), 0.01, StepperConfig(dt=0.01), snapshot_every=10)
        assert "advisory" in caplog.text
        assert advisory_dt(tg_state(g, 50.0), StepperConfig()) < 0.01


class TestStep:
    def test_zero_state_stays_zero(self):
        g = TorusGrid(16)
        s = make_state(g, None, np.array([0, 0, 1.0]))
        out = step(s, StepperConfig())
        assert np.all(out.v == 0) and np.array_equal(out.d, s.d)
        assert out.t == pytest.approx(1e-3)

    def test_taylor_green_decay_short(self):
        g = TorusGrid(32)
        s = run(tg_state(g), 0.1, StepperConfig(dt=1e-3), snapshot_every=1000).final
        assert sp.l2_norm(g, s.v) / sp.l2_norm(g, tg_state(g).v) == pytest.approx(math.exp(-0.2), rel=1e-10)

    def test_invariants_after_steps(self):
        g = TorusGrid(32)
        s = build("random_smooth", g, {"amp_v": 0.5, "amp_d": 0.5}, seed=4).state
        for _ in range(5):
            s = step(s, StepperConfig(), pot=PotentialSpec.magnetic((0, 0, 1)))
        s.check()

    def test_precession(self):
        g = TorusGrid(8)
        gamma, T = 2.0, 0.5
        s = make_state(g, None, np.array([1.0, 0, 0]))
        out = run(s, T, StepperConfig(dt=1e-3), constant_g((0, 0, gamma)), snapshot_every=10**6).final
        # d' = d x g rotates (1, 0, 0) by -gamma t about e3
        expected = [math.cos(gamma * T), -math.sin(gamma * T), 0]
        assert np.allclose(out.d[:, 0, 0], expected, atol=1e-7)

    def test_euler_is_first_order(self):
        g = TorusGrid(8)
        pot = PotentialSpec.magnetic((0, 0, 1))
        s0 = build("uniform_director_ode", g, {"c0": 0.1}).state
        c_exact = 0.1 * math.e / math.sqrt(1 - 0.01 + 0.01 * math.e**2)
        errs = []
        for dt in (1e-2, 5e-3):
            out = run(s0, 1.0, StepperConfig(dt=dt, scheme="IF-Euler"), pot=pot, snapshot_every=10**6).final
            errs.append(abs(out.d[2, 0, 0] - c_exact))
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.15)

    def test_forcing_mean_is_removed(self):
        g = TorusGrid(16)
        forcing = ForcingSpec(f_terms=(ForcingTerm("mode", (1.0, 0.0)), ForcingTerm("mode", (0.0, 1.0), kx=1)))
        s = run(make_state(g, None, np.array([0, 0, 1.0])), 0.05, StepperConfig(), forcing, snapshot_every=100).final
        assert np.max(np.abs(s.velocity_mean())) < 1e-14
        assert sp.l2_norm(g, s.v) > 0

    def test_abort_on_blowup(self):
        g = TorusGrid(16)
        with pytest.raises(NumericalAbort) as info:
            run(tg_state(g, 1e200), 0.01, StepperConfig(dt=1e-3))
        assert "t" in info.value.diagnostics
        assert info.value.trajectory.status == "aborted"


class TestRun:
    def test_zero_horizon(self):
        g = TorusGrid(16)
        s0 = tg_state(g)
        traj = run(s0, 0.0, StepperConfig())
        assert len(traj.states) == 1 and traj.states[0] is s0

    def test_snapshot_cadence(self):
        g = TorusGrid(16)
        seen = []
        traj = run(tg_state(g), 0.01, StepperConfig(), snapshot_every=4, snapshot_writer=lambda s, k: seen.append(k))
        assert seen == [0, 4, 8, 10]
        assert np.allclose(traj.times, [0, 0.004, 0.008, 0.01])

    def test_monitor_halt_and_replace(self):
        g = TorusGrid(16)
        calls = []

        def halt(s, k):
            calls.append(k)
            return k == 3

        traj = run(tg_state(g), 0.01, StepperConfig(), monitors=[halt])
        assert traj.status == "halted" and traj.steps == 3 and calls == [0, 1, 2, 3]

        class Every:
            every = 5

            def __init__(self):
                self.k = []

            def __call__(self, s, k):
                self.k.append(k)
                return State(s.grid, 0 * s.v, s.d, s.t) if k == 5 else None

        hook = Every()
        traj = run(tg_state(g), 0.012, StepperConfig(), monitors=[hook])
        assert hook.k == [0, 5, 10, 12]
        assert np.all(traj.final.v == 0)

    def test_renormalize_keeps_constraint(self):
        g = TorusGrid(32)
        traj = run(build("equator_harmonic", g).state, 0.05, StepperConfig(), snapshot_every=1)
        assert max(s.sphere_drift() for s in traj.states) <= 1e-12


class TestDriftProbe:
    def test_constant_director(self):
        g = TorusGrid(8)
        rows = sphere_drift_probe(make_state(g, None, np.array([0, 0, 1.0])), 0.01, [1e-3, 5e-4])
        assert all(r.drift == 0 for r in rows)

    def test_second_order(self):
        g = TorusGrid(16)
        rows = sphere_drift_probe(build("equator_harmonic", g).state, 0.1, [1e-2, 5e-3])
        assert 0.15 <= rows[1].ratio <= 0.35
        assert rows[1].order == pytest.approx(2.0, abs=0.3)

    def test_renormalize_mode(self):
        g = TorusGrid(16)
        s0 = build("random_smooth", g, seed=1).state
        rows = sphere_drift_probe(s0, 0.02, [2e-3], StepperConfig(constraint_mode="renormalize"))
        assert rows[0].drift <= 1e-12


class TestPicard:
    def test_zero_data_one_iteration(self):
        g = TorusGrid(16)
        res = picard_solve(make_state(g, None, np.array([0, 0, 1.0])), PicardConfig(T0=0.05))
        assert res.converged and res.iterations == 1

    def test_small_data_matches_stepper(self):
        g = TorusGrid(16)
        s0 = tg_state(g, 0.1)
        cfg = PicardConfig(T0=0.05, dt=1e-3)
        res = picard_solve(s0, cfg)
        assert res.converged
        assert max(res.contraction_factors) < 0.5
        ref = run(s0, cfg.T0, StepperConfig(dt=cfg.dt), snapshot_every=1).states
        assert sup_l2(g, res.trajectory, ref) < 1e-4

    def test_taylor_green_is_a_fixed_point_at_any_amplitude(self):
        # the projected self-advection of a Taylor-Green vortex vanishes
        g = TorusGrid(16)
        res = picard_solve(tg_state(g, 50.0), PicardConfig(T0=1.0, dt=1e-2))
        assert res.converged and res.iterations == 2

    def test_large_data_diverges(self):
        g = TorusGrid(16)
        s0 = build("random_smooth", g, {"amp_v": 50.0, "amp_d": 1.0}, seed=0).state
        res = picard_solve(s0, PicardConfig(T0=1.0, dt=1e-2, max_iters=15))
        assert not res.converged
        assert max(res.contraction_factors) > 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PicardConfig(T0=0)
