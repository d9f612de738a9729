"""Library of initial states used by the CLI and the tests."""

from __future__ import annotations

import inspect
from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .forcing import ForcingSpec, ForcingTerm, ZERO
from .integrator import State, make_state


@dataclass
class Scenario:
    state: State
    forcing: ForcingSpec = ZERO


def _unit(vec) -> np.ndarray:
    vec = np.asarray(vec, float)
    nrm = np.linalg.norm(vec)
    if vec.shape != (3,) or not nrm > 0:
        raise ValueError("expected a nonzero 3-vector")
    return vec / nrm


def taylor_green(grid: sp.TorusGrid, rng, amp: float = 1.0, variant: str = "sin", d=(0.0, 0.0, 1.0)) -> Scenario:
    """v = amp (sin x cos y, -cos x sin y) (``variant="sin"``) or its quarter-period
    shift amp (cos x sin y, -sin x cos y) (``variant="cos"``); d constant.

    Wavenumbers are scaled by 2 pi / L.
    """
    X, Y = grid.coords()
    k = 2 * np.pi / grid.L
    if variant == "sin":
        v = amp * np.stack([np.sin(k * X) * np.cos(k * Y), -np.cos(k * X) * np.sin(k * Y)])
    elif variant == "cos":
        v = amp * np.stack([np.cos(k * X) * np.sin(k * Y), -np.sin(k * X) * np.cos(k * Y)])
    else:
        raise ValueError(f"unknown Taylor-Green variant {variant!r}; expected 'sin' or 'cos'")
    return Scenario(make_state(grid, v, _unit(d)))


def uniform_director_ode(
    grid: sp.TorusGrid, rng, c0: float = 0.1, axis=(0.0, 0.0, 1.0), azimuth: float = 0.0
) -> Scenario:
    """v = 0 and a spatially uniform d with d . axis_hat = c0."""
    if not -1 <= c0 <= 1:
        raise ValueError("c0 must lie in [-1, 1]")
    a = _unit(axis)
    # orthonormal pair perpendicular to the axis
    helper = np.array([1.0, 0, 0]) if abs(a[0]) < 0.9 else np.array([0, 1.0, 0])
    e1 = helper - (helper @ a) * a
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    perp = np.cos(azimuth) * e1 + np.sin(azimuth) * e2
    d = c0 * a + np.sqrt(1 - c0**2) * perp
    return Scenario(make_state(grid, None, d))


def equator_harmonic(grid: sp.TorusGrid, rng, k: int = 1) -> Scenario:
    """d = (cos kx, sin kx, 0), v = 0: a harmonic map into the equator."""
    X, _ = grid.coords()
    kx = 2 * np.pi * k / grid.L
    d = np.stack([np.cos(kx * X), np.sin(kx * X), np.zeros_like(X)])
    return Scenario(make_state(grid, None, d))


def director_bubble(
    grid: sp.TorusGrid, rng, scale: float = 0.1, center=None, r_inner: float = 1.0, r_outer: float = 2.0
) -> Scenario:
    """Degree-one bubble of width ``scale`` smoothly glued to the constant -e3.

    The polar angle is 2 arctan(r / scale) inside r_inner and blends to pi
    between r_inner and r_outer.
    """
    if not (scale > 0 and 0 < r_inner < r_outer < grid.L / 2):
        raise ValueError("director_bubble needs scale > 0 and 0 < r_inner < r_outer < L/2")
    cx, cy = center if center is not None else (grid.L / 2, grid.L / 2)
    X, Y = grid.coords()
    dx = (X - cx + grid.L / 2) % grid.L - grid.L / 2
    dy = (Y - cy + grid.L / 2) % grid.L - grid.L / 2
    r = np.hypot(dx, dy)
    s = np.clip((r - r_inner) / (r_outer - r_inner), 0.0, 1.0)
    blend = s * s * s * (10 - 15 * s + 6 * s * s)  # C2 smoothstep
    theta = (1 - blend) * 2 * np.arctan(r / scale) + blend * np.pi
    phi = np.arctan2(dy, dx)
    d = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    return Scenario(make_state(grid, None, d))


def forced_rotation(grid: sp.TorusGrid, rng, g=(0.0, 0.0, 1.0), d=(1.0, 0.0, 0.0)) -> Scenario:
    """Uniform d driven by a constant field g: d' = d x g, a precession about g."""
    g = tuple(float(x) for x in g)
    if len(g) != 3:
        raise ValueError("g must be a 3-vector")
    return Scenario(make_state(grid, None, _unit(d)), ForcingSpec(g_terms=(ForcingTerm("mode", g),)))


def random_smooth(
    grid: sp.TorusGrid, rng, amp_v: float = 0.1, amp_d: float = 0.3, kmax: int = 3, d_base=(0.0, 0.0, 1.0)
) -> Scenario:
    """Seeded band-limited state: divergence-free v, d a normalized perturbation of d_base."""
    v = amp_v * sp.random_bandlimited(grid, rng, 2, kmax)
    dp = amp_d * sp.random_bandlimited(grid, rng, 3, kmax)
    d = _unit(d_base)[:, None, None] + dp
    return Scenario(make_state(grid, v, d))


def zero(grid: sp.TorusGrid, rng, d=(0.0, 0.0, 1.0)) -> Scenario:
    """v = 0, d constant."""
    return Scenario(make_state(grid, None, _unit(d)))


SCENARIOS = {
    f.__name__: f
    for f in (taylor_green, uniform_director_ode, equator_harmonic, director_bubble, forced_rotation, random_smooth, zero)
}


def scenario_params(name: str) -> dict:
    """Default parameters of a scenario."""
    sig = inspect.signature(SCENARIOS[name])
    return {k: p.default for k, p in list(sig.parameters.items())[2:]}


def build(name: str, grid: sp.TorusGrid, params: dict | None = None, seed: int = 0) -> Scenario:
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; available: {', '.join(sorted(SCENARIOS))}")
    params = dict(params or {})
    extra = set(params) - set(scenario_params(name))
    if extra:
        raise ValueError(f"unknown parameters for scenario {name!r}: {sorted(extra)}")
    return SCENARIOS[name](grid, np.random.default_rng(seed), **params)
