import numpy as np
import pytest

from nematic2d.forcing import ForcingError, ForcingSpec, ForcingTerm, constant_g
from nematic2d.spectral import TorusGrid


@pytest.fixture
def grid():
    return TorusGrid(16)


class TestTerms:
    def test_mode_profile(self, grid):
        term = ForcingTerm("mode", (2.0, 0.0), kx=1, ky=2, phase=0.3, time_poly=(1.0, -1.0))
        X, Y = grid.coords()
        out = term.evaluate(0.25, grid)
        assert np.allclose(out[0], 0.75 * 2.0 * np.cos(X + 2 * Y + 0.3))
        assert np.all(out[1] == 0)

    def test_pulse_window(self):
        term = ForcingTerm("pulse", (1.0, 0.0), t_on=1.0, t_off=2.0)
        assert term.time_factor(0.5) == 0
        assert term.time_factor(1.5) == pytest.approx(1.0)
        assert term.time_factor(2.5) == 0

    def test_bad_pulse(self):
        with pytest.raises(ValueError):
            ForcingTerm("pulse", (1.0, 0.0), t_on=1.0, t_off=1.0)

    def test_profile_is_read_only(self, grid):
        prof = ForcingTerm("mode", (1.0, 1.0)).profile(grid)
        with pytest.raises(ValueError):
            prof[0, 0, 0] = 5.0


class TestSpec:
    def test_zero(self, grid):
        spec = ForcingSpec()
        assert not spec.has_f and not spec.has_g
        assert np.all(spec.f(0.0, grid) == 0)

    def test_constant_g(self, grid):
        g = constant_g((0, 0, 2)).g(1.0, grid)
        assert np.all(g[2] == 2) and np.all(g[:2] == 0)

    def test_mean(self, grid):
        spec = ForcingSpec(f_terms=(ForcingTerm("mode", (1.0, 0.5)), ForcingTerm("mode", (3.0, 0.0), kx=1)))
        assert np.allclose(spec.f_mean(0.0, grid), [1.0, 0.5])

    def test_component_count(self):
        with pytest.raises(ValueError):
            ForcingSpec(g_terms=(ForcingTerm("mode", (1.0, 0.0)),))

    def test_non_finite_evaluation(self, grid):
        spec = ForcingSpec(f_terms=(ForcingTerm("mode", (1e308, 0.0), time_poly=(0.0, 1e308)),))
        with pytest.raises(ForcingError, match="not finite"):
            with np.errstate(over="ignore", invalid="ignore"):
                spec.f(10.0, grid)

    def test_round_trip(self):
        spec = ForcingSpec(
            f_terms=(ForcingTerm("pulse", (1.0, 0.0), kx=2, t_on=0.1, t_off=0.4),),
            g_terms=(ForcingTerm("mode", (0.0, 0.0, 1.0), ky=1, time_poly=(0.5, 2.0)),),
        )
        assert ForcingSpec.from_dict(spec.to_dict()) == spec

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown forcing term keys"):
            ForcingSpec.from_dict({"f": [{"kind": "mode", "amp": [1, 0], "freq": 3}]})
