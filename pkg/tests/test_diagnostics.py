import csv
import math

import numpy as np
import pytest

from nematic2d import diagnostics as dg
from nematic2d import spectral as sp
from nematic2d.forcing import ForcingSpec, ForcingTerm
from nematic2d.integrator import StepperConfig, make_state, run
from nematic2d.potential import PotentialSpec
from nematic2d.scenarios import build
from nematic2d.spectral import TorusGrid

E1, E3 = np.array([1.0, 0, 0]), np.array([0, 0, 1.0])


def frozen(grid, d, times, v=None):
    return [make_state(grid, v, d, t) for t in times]


class TestPressure:
    def test_rest_state(self):
        g = TorusGrid(16)
        rec = dg.recover_pressure(make_state(g, None, E3))
        assert np.all(rec.p_tilde == 0)

    @pytest.mark.parametrize("t", [0.0, 0.3])
    def test_taylor_green_cos_variant(self, t):
        g = TorusGrid(32)
        s = build("taylor_green", g, {"variant": "cos"}).state
        s = make_state(g, s.v * math.exp(-2 * t), E3, t)
        X, Y = g.coords()
        exact = -0.25 * (np.cos(2 * X) + np.cos(2 * Y)) * math.exp(-4 * t)
        rec = dg.recover_pressure(s)
        assert sp.l2_norm(g, rec.p_tilde - exact) < 1e-12

    def test_taylor_green_sin_variant_has_opposite_sign(self):
        g = TorusGrid(32)
        X, Y = g.coords()
        rec = dg.recover_pressure(build("taylor_green", g, {"variant": "sin"}).state)
        assert sp.l2_norm(g, rec.p_tilde - 0.25 * (np.cos(2 * X) + np.cos(2 * Y))) < 1e-12

    def test_consistency_random_state(self):
        g = TorusGrid(32)
        s = build("random_smooth", g, {"amp_v": 1.0, "amp_d": 0.5}, seed=9).state
        forcing = ForcingSpec(f_terms=(ForcingTerm("mode", (0.3, -0.2), kx=1, ky=2),))
        assert dg.pressure_consistency(s, forcing) < 1e-10

    def test_modified_pressure_shift(self):
        g = TorusGrid(32)
        s = build("equator_harmonic", g).state
        rec = dg.recover_pressure(s)
        # |grad d|^2 = 1 is constant, so p and p~ coincide after mean removal
        assert np.max(np.abs(rec.p - rec.p_tilde)) < 1e-12

    def test_series_and_csv(self, tmp_path):
        g = TorusGrid(16)
        states = run(build("taylor_green", g).state, 0.02, StepperConfig(), snapshot_every=5).states
        recs = dg.pressure_series(states)
        assert recs[0].cum_p_tilde_L43 == 0 and recs[-1].cum_p_tilde_L43 > 0
        dg.write_pressure_csv(tmp_path / "p.csv", recs)
        rows = list(csv.reader(open(tmp_path / "p.csv")))
        assert rows[0][0] == "t" and len(rows) == len(states) + 1


class TestZVerify:
    def test_renormalized_trajectory(self):
        g = TorusGrid(32)
        s0 = build("random_smooth", g, {"amp_v": 0.5, "amp_d": 0.5}, seed=1).state
        states = run(s0, 0.1, StepperConfig(dt=1e-3), snapshot_every=10).states
        z = dg.z_verify(states, 1e-3)
        assert z.sup_l2 <= 1e-8 and z.passed

    def test_heat_mode(self):
        g = TorusGrid(16)
        X, _ = g.coords()
        delta, T = 0.1, 0.5
        z = dg.z_verify(frozen(g, E3, [0.0, T]), 1e-3, z0=delta * np.sin(X))
        assert np.max(np.abs(z.z_final - delta * math.exp(-T) * np.sin(X))) < 1e-6

    def test_constant_reaction(self):
        g = TorusGrid(16)
        delta, T = 0.1, 0.5
        pot = PotentialSpec.magnetic(E3)
        z = dg.z_verify(frozen(g, E3, [0.0, T]), 1e-3, pot, z0=np.full((16, 16), delta))
        assert np.max(np.abs(z.z_final - delta * math.exp(2 * T))) < 1e-6

    def test_derived_sign_tracks_the_dynamics(self):
        g = TorusGrid(8)
        pot = PotentialSpec.magnetic(E3)
        d0 = 1.05 * np.array([math.sqrt(0.75), 0, 0.5])
        s0 = make_state(g, None, d0, normalize=False)
        states = run(s0, 0.3, StepperConfig(dt=1e-3, constraint_mode="track-drift"), pot=pot, snapshot_every=5).states
        actual = np.sum(states[-1].d ** 2, axis=0) - 1
        derived = dg.z_verify(states, 1e-3, pot, alpha_sign=1)
        published = dg.z_verify(states, 1e-3, pot)
        assert np.max(np.abs(derived.z_final - actual)) < 1e-5
        assert np.max(np.abs(published.z_final - actual)) > 1e-2

    def test_linearity(self):
        g = TorusGrid(16)
        s0 = build("random_smooth", g, {"amp_v": 0.5}, seed=3).state
        states = run(s0, 0.05, StepperConfig(), snapshot_every=10).states
        z0 = sp.random_bandlimited(g, np.random.default_rng(0), 1, 3)
        a = dg.z_verify(states, 1e-3, z0=z0)
        b = dg.z_verify(states, 1e-3, z0=2 * z0)
        assert np.max(np.abs(b.z_final - 2 * a.z_final)) < 1e-12

    def test_gronwall_report(self, tmp_path):
        g = TorusGrid(16)
        X, _ = g.coords()
        z = dg.z_verify(frozen(g, E3, [0.0, 0.2]), 1e-2, z0=1e-3 * np.sin(X))
        assert np.all(z.z_l2 <= z.gronwall_c1 * (1 + 1e-12))
        assert z.c_fit < 0  # pure decay
        dg.write_zcheck_csv(tmp_path / "z.csv", z)
        assert open(tmp_path / "z.csv").readline().strip() == "t,z_L2,gronwall_c1,G"

    def test_needs_two_snapshots(self):
        g = TorusGrid(16)
        with pytest.raises(ValueError):
            dg.z_verify(frozen(g, E3, [0.0]), 1e-3)


class TestSmallData:
    def test_zero_data(self):
        g = TorusGrid(16)
        rec = dg.smalldata_monitor(frozen(g, E3, [0.0, 0.1]), pot=PotentialSpec.quadratic(E3), smallness=1.0)
        assert rec.bold_E0 == 0 and rec.passed
        assert np.all(rec.high_norm == 0)

    def test_small_taylor_green_decays(self):
        g = TorusGrid(32)
        s0 = build("taylor_green", g, {"amp": 0.1}).state
        d = s0.d + 0.05 * sp.random_bandlimited(g, np.random.default_rng(4), 3, 2)
        s0 = make_state(g, s0.v, d)
        pot = PotentialSpec.quadratic(E3)
        states = run(s0, 0.5, StepperConfig(dt=1e-3), pot=pot, snapshot_every=25).states
        rec = dg.smalldata_monitor(states, pot=pot)
        assert rec.passed and rec.energy_checked
        high = rec.high_norm[2:]
        assert np.all(np.diff(high) <= 0)

    def test_detector_contradiction_flagged(self):
        g = TorusGrid(16)
        rec = dg.smalldata_monitor(frozen(g, E3, [0.0, 0.1]), smallness=1.0, detector_fired=True)
        assert not rec.detector_ok and not rec.passed

    def test_large_data_reports_without_asserting(self, tmp_path):
        g = TorusGrid(16)
        s0 = build("random_smooth", g, {"amp_v": 5.0, "amp_d": 1.0}, seed=2).state
        states = run(s0, 0.02, StepperConfig(dt=5e-4), snapshot_every=10).states
        rec = dg.smalldata_monitor(states)
        assert not rec.energy_checked and rec.notes
        dg.write_smalldata_csv(tmp_path / "s.csv", rec)
        assert len(open(tmp_path / "s.csv").readlines()) == len(states) + 1
