"""Energy bookkeeping: global budget, local energy on balls, concentration detector.

Global energy of a state (v, d):

    E = 1/2 |v|^2 + 1/2 |grad d|^2 + int phi(d)

Along smooth solutions

    dE/dt = -|grad v|^2 - |R(d)|^2 + <f, v> + <d x g, R(d)>

and by Young's inequality

    E(t) + 1/2 int_s^t (|grad v|^2 + |R|^2) <= E(s) + Psi(s, t),
    Psi(s, t) = 1/2 int_s^t (|f|_{H^-1}^2 + |g|^2).

Local energy at radius R uses balls of radius ``radius_multiplier * R``
(default 2):

    E_R = sup_x 1/2 int_{B(x, 2R)} (|v|^2 + |grad d|^2 + 2 phi(d)).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import simpson, trapezoid

from . import spectral as sp
from .forcing import ZERO, ForcingSpec
from .integrator import State
from .potential import PotentialSpec
from .rhs import tension

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "t", "E", "kinetic", "elastic", "anisotropic", "diss_v", "diss_R", "work_f", "work_g",
    "residual_eq", "slack_ineq", "Psi", "Xi", "ER_sup", "ER_argmax_x", "ER_argmax_y", "detector_fired",
)  # fmt: skip

POLICIES = ("halt", "log", "restart-renormalized")
TIE_RTOL = 1e-12


def _cross(a, b):
    return np.stack(
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    )


# -- global energy ----------------------------------------------------------


@dataclass
class EnergyReport:
    t: float
    E_global: float
    kinetic: float
    elastic: float
    anisotropic: float
    dissipation_v: float
    dissipation_R: float
    work_f: float
    work_g: float
    psi_rate: float  # 1/2 (|f|_{H^-1}^2 + |g|^2) at t
    xi_rate: float  # 1/2 (|f|^2 + |g|_{H^1}^2) at t
    budget_residual: float = 0.0
    Psi_cum: float = 0.0
    Xi_cum: float = 0.0

    @property
    def dissipation(self) -> float:
        return self.dissipation_v + self.dissipation_R

    @property
    def work(self) -> float:
        return self.work_f + self.work_g


def global_energy(
    s: State, pot: PotentialSpec = PotentialSpec(), forcing: ForcingSpec = ZERO
) -> EnergyReport:
    """Instantaneous energy, dissipation and forcing work of a state."""
    grid = s.grid
    kinetic = 0.5 * sp.l2_norm(grid, s.v) ** 2
    elastic = 0.5 * sp.h1_seminorm(grid, s.d) ** 2
    anisotropic = sp.integrate(grid, pot.phi(s.d)) if pot.family != "none" else 0.0
    diss_v = sp.h1_seminorm(grid, s.v) ** 2
    R = tension(grid, s.d, pot, dealias=False)
    diss_R = sp.l2_norm(grid, R) ** 2

    work_f = work_g = 0.0
    psi_rate = xi_rate = 0.0
    if forcing.has_f:
        f = forcing.f(s.t, grid)
        work_f = sp.inner(grid, f, s.v)
        psi_rate += 0.5 * sp.hminus1_norm(grid, f) ** 2
        xi_rate += 0.5 * sp.l2_norm(grid, f) ** 2
    if forcing.has_g:
        g = forcing.g(s.t, grid)
        work_g = sp.inner(grid, _cross(s.d, g), R)
        psi_rate += 0.5 * sp.l2_norm(grid, g) ** 2
        xi_rate += 0.5 * sp.sobolev_norm(grid, g, 1) ** 2
    return EnergyReport(
        t=s.t,
        E_global=kinetic + elastic + anisotropic,
        kinetic=kinetic,
        elastic=elastic,
        anisotropic=anisotropic,
        dissipation_v=diss_v,
        dissipation_R=diss_R,
        work_f=work_f,
        work_g=work_g,
        psi_rate=psi_rate,
        xi_rate=xi_rate,
    )


@dataclass
class BudgetResult:
    """Per-row equality residual (per unit time) and cumulative inequality slack."""

    t: np.ndarray
    residual_eq: np.ndarray
    slack_ineq: np.ndarray
    Psi: np.ndarray
    Xi: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual_eq))) if self.residual_eq.size else 0.0

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slack_ineq)) if self.slack_ineq.size else 0.0

    @property
    def violated(self) -> bool:
        return self.min_slack < -10 * self.max_residual * max(float(self.t[-1] - self.t[0]), 1.0) - 1e-12


class BudgetAccumulator:
    """Running trapezoid accumulation of the budget over consecutive reports."""

    def __init__(self):
        self.prev: EnergyReport | None = None
        self.E0 = 0.0
        self.Psi = self.Xi = self.diss_int = 0.0

    def push(self, r: EnergyReport) -> tuple[float, float]:
        """Fold in a report; returns (residual_eq, slack_ineq) and fills r's cumulative fields."""
        residual = 0.0
        if self.prev is None:
            self.E0 = r.E_global
        else:
            p = self.prev
            h = r.t - p.t
            if h <= 0:
                raise ValueError(f"reports must have increasing times ({p.t} -> {r.t})")
            diss = 0.5 * h * (p.dissipation + r.dissipation)
            work = 0.5 * h * (p.work + r.work)
            residual = (r.E_global - p.E_global + diss - work) / h
            self.diss_int += diss
            self.Psi += 0.5 * h * (p.psi_rate + r.psi_rate)
            self.Xi += 0.5 * h * (p.xi_rate + r.xi_rate)
        r.budget_residual, r.Psi_cum, r.Xi_cum = residual, self.Psi, self.Xi
        self.prev = r
        slack = self.E0 + self.Psi - r.E_global - 0.5 * self.diss_int
        return residual, slack


def budget_residual(reports: Sequence[EnergyReport]) -> BudgetResult:
    """Equality residual per row and inequality slack from time 0 of the sequence."""
    acc = BudgetAccumulator()
    res, slack = [], []
    for r in reports:
        a, b = acc.push(r)
        res.append(a)
        slack.append(b)
    return BudgetResult(
        t=np.array([r.t for r in reports]),
        residual_eq=np.array(res[1:]),
        slack_ineq=np.array(slack),
        Psi=np.array([r.Psi_cum for r in reports]),
        Xi=np.array([r.Xi_cum for r in reports]),
    )


# -- balls and local energy -------------------------------------------------


def _segment_area(r: float, x0: float, x1: float, y0: float, y1: float) -> float:
    """Area of the disk of radius r (centered at 0) inside [x0, x1] x [y0, y1]."""
    y0, y1 = max(y0, -r), min(y1, r)
    if y1 <= y0:
        return 0.0

    def F(y):  # antiderivative of sqrt(r^2 - y^2)
        y = min(max(y, -r), r)
        return 0.5 * (y * math.sqrt(max(r * r - y * y, 0.0)) + r * r * math.asin(y / r))

    cuts = {y0, y1}
    for x in (x0, x1):
        if abs(x) < r:
            yc = math.sqrt(r * r - x * x)
            cuts.update(c for c in (-yc, yc) if y0 < c < y1)
    pts = sorted(cuts)
    area = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        ym = 0.5 * (a + b)
        s = math.sqrt(max(r * r - ym * ym, 0.0))
        lo, hi = max(x0, -s), min(x1, s)
        if hi <= lo:
            continue
        # chord clipped on each side either by the cell edge (constant) or the circle
        for edge, sign in ((hi, 1.0), (lo, -1.0)):
            if (sign > 0 and edge == x1) or (sign < 0 and edge == x0):
                area += sign * edge * (b - a)
            else:
                area += F(b) - F(a)
    return area


@lru_cache(maxsize=32)
def _ball_kernel_hat(grid: sp.TorusGrid, radius: float, weights: str) -> np.ndarray:
    """Spectrum of the periodic ball weight centered at the origin."""
    n, h = grid.n, grid.dx
    off = (np.arange(n) + n // 2) % n - n // 2
    ox, oy = np.meshgrid(off * h, off * h, indexing="xy")
    dist = np.hypot(ox, oy)
    if weights == "sharp":
        w = np.where(dist <= radius, grid.cell_area, 0.0)
    elif weights == "area":
        w = np.zeros((n, n))
        half = np.sqrt(2) * h / 2
        w[dist <= radius - half] = grid.cell_area
        for iy, ix in np.argwhere((dist > radius - half) & (dist < radius + half)):
            cx, cy = ox[iy, ix], oy[iy, ix]
            w[iy, ix] = _segment_area(radius, cx - h / 2, cx + h / 2, cy - h / 2, cy + h / 2)
    else:
        raise ValueError(f"unknown ball weights {weights!r}; expected 'area' or 'sharp'")
    out = sp.transform_forward(w)
    out.setflags(write=False)
    return out


def ball_integrals(grid: sp.TorusGrid, density: np.ndarray, radius: float, weights: str = "area") -> np.ndarray:
    """int_{B(x, radius)} density for every grid center x, by FFT convolution."""
    if not 0 < radius < grid.L / 2:
        raise ValueError(f"ball radius {radius} must lie in (0, L/2) = (0, {grid.L / 2})")
    return sp.transform_inverse(sp.transform_forward(density) * _ball_kernel_hat(grid, float(radius), weights))


def argmax_lex(values: np.ndarray, rtol: float = TIE_RTOL) -> tuple[int, int]:
    """(iy, ix) of the maximum; near-ties go to the smallest row-major index."""
    top = float(np.max(values))
    cand = np.flatnonzero(values.ravel() >= top - rtol * abs(top))
    iy, ix = np.unravel_index(int(cand[0]), values.shape)
    return int(iy), int(ix)


def energy_density(s: State, pot: PotentialSpec = PotentialSpec()) -> np.ndarray:
    """1/2 (|v|^2 + |grad d|^2 + 2 phi(d)) at grid points."""
    gd = sp.grad3(s.grid, s.d)
    rho = 0.5 * (np.sum(s.v**2, axis=0) + np.sum(gd**2, axis=(0, 1)))
    if pot.family != "none":
        rho = rho + pot.phi(s.d)
    return rho


@dataclass
class LocalEnergyProfile:
    R: float
    radius: float  # ball radius actually used (radius_multiplier * R)
    values: np.ndarray  # ball integral per grid center, [iy, ix]
    sup_value: float
    argmax_index: tuple[int, int]  # (iy, ix)
    argmax_x: float
    argmax_y: float


def local_energy(
    s: State,
    pot: PotentialSpec = PotentialSpec(),
    R: float = 0.5,
    radius_multiplier: float = 2.0,
    weights: str = "area",
) -> LocalEnergyProfile:
    """Local energy profile over balls of radius radius_multiplier * R."""
    grid = s.grid
    radius = radius_multiplier * R
    if not radius < grid.L / 2:
        raise ValueError(f"ball radius {radius_multiplier}R = {radius} must be < L/2 = {grid.L / 2}")
    vals = ball_integrals(grid, energy_density(s, pot), radius, weights)
    iy, ix = argmax_lex(vals)
    return LocalEnergyProfile(R, radius, vals, float(vals[iy, ix]), (iy, ix), ix * grid.dx, iy * grid.dx)


# -- concentration detector -------------------------------------------------


@dataclass(frozen=True)
class DetectorState:
    epsilon: float
    R: float
    policy: str = "log"
    fired: bool = False
    T_fire: float | None = None
    t_last: float | None = None
    drop_log: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown detector policy {self.policy!r}; expected one of {POLICIES}")
        if not self.epsilon > 0 or not self.R > 0:
            raise ValueError("detector epsilon and R must be positive")

    @property
    def threshold(self) -> float:
        return 2 * self.epsilon**2


def detector_update(det: DetectorState, profile: LocalEnergyProfile | float, t: float) -> DetectorState:
    """Fold one local-energy sample; fires at the first t with sup E_R > 2 eps^2."""
    if det.t_last is not None and t < det.t_last:
        raise ValueError(f"detector times must be non-decreasing ({det.t_last} -> {t})")
    sup = profile.sup_value if isinstance(profile, LocalEnergyProfile) else float(profile)
    if not det.fired and sup > det.threshold:
        return replace(det, fired=True, T_fire=t, t_last=t)
    return replace(det, t_last=t)


def restart_renormalized(s: State, pot: PotentialSpec = PotentialSpec()) -> tuple[State, float, float]:
    """Truncate to the resolved band, project v, renormalize d. Returns (state, E_before, E_after)."""
    grid = s.grid
    E_before = global_energy(s, pot).E_global
    vh = sp.leray_hat(grid, sp.dealias(grid, sp.transform_forward(s.v)))
    vh[..., 0, 0] = 0.0
    d = sp.truncate(grid, s.d)
    d = d / np.sqrt(np.sum(d**2, axis=0))
    new = State(grid, sp.transform_inverse(vh), d, s.t)
    E_after = global_energy(new, pot).E_global
    if E_after > E_before:
        logger.info("restart raised the energy: %.6e -> %.6e", E_before, E_after)
    return new, E_before, E_after


# -- Struwe-type L4 check ---------------------------------------------------


@dataclass
class StruweResult:
    lhs: float  # int |h|_{L4}^4 dt
    local_mass: float  # sup_{t, x} int_{B(x, r0)} |h|^2
    bracket: float  # int |grad h|^2 dt + r0^-2 int |h|^2 dt
    ratio: float
    status: str  # ok | 0/0 | degenerate


def _time_integral(times, vals):
    if len(vals) == 1:
        return float(vals[0])
    return float(trapezoid(vals, times))


def struwe_ratio(
    grid: sp.TorusGrid, fields: Sequence[np.ndarray], times: Sequence[float], r0: float, weights: str = "area"
) -> StruweResult:
    """LHS / (local mass * bracket) for a sampled family h(t) of shape (c, n, n).

    With a single slice the time integrals are replaced by instantaneous values.
    """
    l4, h1, l2, mass = [], [], [], 0.0
    for h in fields:
        h = np.asarray(h, float)
        h = h[None] if h.ndim == 2 else h
        sq = np.sum(h**2, axis=0)
        l4.append(float(np.sum(sq**2) * grid.cell_area))
        l2.append(float(np.sum(sq) * grid.cell_area))
        h1.append(sp.h1_seminorm(grid, h) ** 2)
        mass = max(mass, float(np.max(ball_integrals(grid, sq, r0, weights))))
    lhs = _time_integral(times, l4)
    bracket = _time_integral(times, h1) + _time_integral(times, l2) / r0**2
    den = mass * bracket
    if den == 0.0:
        if lhs == 0.0:
            return StruweResult(lhs, mass, bracket, math.nan, "0/0")
        return StruweResult(lhs, mass, bracket, math.inf, "degenerate")
    return StruweResult(lhs, mass, bracket, lhs / den, "ok")


def struwe_check(states: Sequence[State], r0: float, weights: str = "area") -> dict[str, StruweResult]:
    """Empirical constants for h = v and for h = grad d along a trajectory slice."""
    grid = states[0].grid
    times = [s.t for s in states]
    out = {
        "v": struwe_ratio(grid, [s.v for s in states], times, r0, weights),
        "grad_d": struwe_ratio(
            grid, [sp.grad3(grid, s.d).reshape(6, grid.n, grid.n) for s in states], times, r0, weights
        ),
    }
    for name, res in out.items():
        if res.status == "degenerate":
            logger.warning("Struwe check for %s: zero bracket with nonzero L4 mass", name)
    return out


# -- a priori quantities ----------------------------------------------------


def apriori_report(
    states: Sequence[State],
    forcing: ForcingSpec = ZERO,
    pot: PotentialSpec = PotentialSpec(),
    eps: float = 0.1,
    R: float = 0.5,
) -> dict[str, float]:
    """Integrated norms behind the L4, Delta d and higher-order estimates.

    Bound ratios divide each left-hand side by its right-hand structure with
    every constant set to 1. Nothing is asserted beyond finiteness.
    """
    grid = states[0].grid
    t = np.array([s.t for s in states])
    rows = {k: [] for k in ("lap_d", "v4", "gd4", "v2L4", "gd2L4", "grad_v", "Av", "grad_lap_d", "psi", "xi")}
    for s in states:
        vh, dh = sp.transform_forward(s.v), sp.transform_forward(s.d)
        lap_d = sp.transform_inverse(-grid.k2 * dh)
        gd = sp.grad3(grid, s.d)
        v4 = sp.lp_norm(grid, s.v, 4)
        gd4 = sp.lp_norm(grid, gd.reshape(6, grid.n, grid.n), 4)
        rows["lap_d"].append(sp.l2_norm(grid, lap_d) ** 2)
        rows["v4"].append(v4**4)
        rows["gd4"].append(gd4**4)
        rows["v2L4"].append(v4**2)
        rows["gd2L4"].append(gd4**2)
        rows["grad_v"].append(sp.h1_seminorm(grid, s.v) ** 2)
        rows["Av"].append(sp.l2_norm(grid, sp.transform_inverse(-grid.k2 * vh)) ** 2)
        rows["grad_lap_d"].append(sp.h1_seminorm(grid, lap_d) ** 2)
        rep = global_energy(s, pot, forcing)
        rows["psi"].append(rep.psi_rate)
        rows["xi"].append(rep.xi_rate)

    def I(key):
        return _time_integral(t, rows[key]) if len(t) > 1 else 0.0

    T = float(t[-1] - t[0])
    E0 = global_energy(states[0], pot, forcing).E_global
    Psi, Xi = I("psi"), I("xi")
    Sigma0 = E0 + rows["lap_d"][0] + rows["grad_v"][0] + Psi + Xi + (E0 + 1.0) * Xi
    sup_high = float(np.max(np.array(rows["grad_v"]) + np.array(rows["lap_d"])))
    int_high = I("Av") + I("grad_lap_d")
    int_l4 = I("v4") + I("gd4")
    bracket_47 = E0 + Psi + (1.0 + 2 * eps**2 / R**2) * T
    exponent = Xi + int_l4 + I("v2L4") + I("gd2L4")
    rhs_410 = Sigma0 * math.exp(min(exponent, 700.0))

    out = {
        "T": T,
        "E0": E0,
        "bold_E0": E0 + Psi,
        "Psi": Psi,
        "Xi": Xi,
        "Sigma0": Sigma0,
        "int_lap_d_sq": I("lap_d"),
        "int_v_L4_4": I("v4"),
        "int_grad_d_L4_4": I("gd4"),
        "int_L4_sum": int_l4,
        "sup_grad_v_sq_plus_lap_d_sq": sup_high,
        "int_Av_sq_plus_grad_lap_d_sq": int_high,
        "ratio_lap_d": I("lap_d") / bracket_47 if bracket_47 > 0 else math.nan,
        "ratio_L4": int_l4 / (eps**2 * bracket_47) if bracket_47 > 0 else math.nan,
        "ratio_higher_order": (sup_high + 2 * int_high) / rhs_410 if rhs_410 > 0 else math.nan,
    }
    bad = [k for k, v in out.items() if not k.startswith("ratio") and not math.isfinite(v)]
    if bad:
        raise FloatingPointError(f"non-finite a priori quantities: {bad}")
    return out


# -- local energy inequality ------------------------------------------------


def smooth_cutoff(grid: sp.TorusGrid, center: tuple[float, float], R: float) -> np.ndarray:
    """C-infinity radial bump: 1 on B(center, R), 0 outside B(center, 2R)."""
    if not 2 * R < grid.L / 2:
        raise ValueError("cutoff support 2R must be < L/2")
    X, Y = grid.coords()
    dx = (X - center[0] + grid.L / 2) % grid.L - grid.L / 2
    dy = (Y - center[1] + grid.L / 2) % grid.L - grid.L / 2
    s = (np.hypot(dx, dy) - R) / R  # 0 at the inner radius, 1 at the outer

    def psi(u):
        u = np.clip(u, 0.0, None)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)

    return psi(1 - s) / (psi(1 - s) + psi(s))


def validate_cutoff(grid: sp.TorusGrid, phi_c: np.ndarray, center: tuple[float, float], R: float) -> None:
    """Reject cutoffs violating 1_{B(R)} <= phi_c <= 1_{B(2R)} at grid points."""
    X, Y = grid.coords()
    dist = np.hypot(
        (X - center[0] + grid.L / 2) % grid.L - grid.L / 2, (Y - center[1] + grid.L / 2) % grid.L - grid.L / 2
    )
    tol = 1e-12
    if np.any(phi_c < -tol) or np.any(phi_c > 1 + tol):
        raise ValueError("cutoff must take values in [0, 1]")
    if np.any(phi_c[dist <= R] < 1 - tol):
        raise ValueError("cutoff must equal 1 on B(x, R)")
    if np.any(np.abs(phi_c[dist >= 2 * R]) > tol):
        raise ValueError("cutoff must vanish outside B(x, 2R)")


_BOUND_TERMS = (
    "grad_d_sq_v", "dt_d_grad_d", "phi_v", "v_cubed", "grad_v_v", "pressure_v",
    "g_grad_d", "d_grad_g_grad_d", "d_g_phi_prime", "f_v",
)  # fmt: skip
_EXACT_TERMS = ("kin_flux", "visc_flux", "pressure_flux", "phi_flux", "dt_d_flux", "g_tension", "f_work")


@dataclass
class LocalInequalityTable:
    times: np.ndarray
    E_phi: np.ndarray
    dissipation: float  # int int phi_c (|grad v|^2 + |R|^2)
    lhs: float  # E_phi(t) - E_phi(s) + dissipation
    bound_terms: dict[str, float]
    exact_terms: dict[str, float]

    @property
    def bound(self) -> float:
        return float(sum(self.bound_terms.values()))

    @property
    def exact_rhs(self) -> float:
        return float(sum(self.exact_terms.values()))

    @property
    def margin(self) -> float:
        return self.bound - self.lhs

    @property
    def identity_residual(self) -> float:
        return self.lhs - self.exact_rhs


def local_energy_inequality_terms(
    states: Sequence[State],
    phi_c: np.ndarray,
    pot: PotentialSpec = PotentialSpec(),
    forcing: ForcingSpec = ZERO,
    quadrature: str = "trapezoid",
) -> LocalInequalityTable:
    """Both sides of the localized energy inequality over the slice [t_0, t_end].

    ``bound_terms`` are the absolute-value terms of the inequality; the
    pressure slot uses p = p~ - 1/2 |grad d|^2 minus its mean. ``exact_terms``
    are the signed terms of the underlying identity (pressure p~), whose sum
    must match the left-hand side up to time discretization.
    """
    from .diagnostics import pressure_fields  # local import: diagnostics depends on this module

    grid = states[0].grid
    times = np.array([s.t for s in states])
    gphi = sp.grad(grid, phi_c)
    abs_gphi = np.sqrt(np.sum(gphi**2, axis=0))
    abs_phi = np.abs(phi_c)
    A = grid.cell_area
    samples = {k: [] for k in _BOUND_TERMS + _EXACT_TERMS + ("E_phi", "diss")}
    for s in states:
        v, d = s.v, s.d
        gv = np.stack([sp.grad(grid, v[0]), sp.grad(grid, v[1])])  # [i, j] = d_j v_i
        gd = sp.grad3(grid, d)  # [k, j] = d_j d_k
        vabs = np.sqrt(np.sum(v**2, axis=0))
        gd_sq = np.sum(gd**2, axis=(0, 1))
        gv_abs = np.sqrt(np.sum(gv**2, axis=(0, 1)))
        phi_d = pot.phi(d) if pot.family != "none" else np.zeros_like(vabs)
        R = tension(grid, d, pot, dealias=False)
        f = forcing.f(s.t, grid) if forcing.has_f else np.zeros_like(v)
        g = forcing.g(s.t, grid) if forcing.has_g else np.zeros_like(d)
        dxg = _cross(d, g)
        vgd = v[0] * gd[:, 0] + v[1] * gd[:, 1]
        dt_d = R - vgd + dxg
        p_tilde, p = pressure_fields(grid, v, d, f)
        p = p - p.mean()
        gd_gphi = gd[:, 0] * gphi[0] + gd[:, 1] * gphi[1]  # (grad d) grad phi_c
        v_gphi = v[0] * gphi[0] + v[1] * gphi[1]
        dabs = np.sqrt(np.sum(d**2, axis=0))
        gg = sp.grad3(grid, g)
        gg_abs = np.sqrt(np.sum(gg**2, axis=(0, 1)))
        pp_abs = np.sqrt(np.sum(pot.phi_prime(d) ** 2, axis=0))

        def q(x):
            return float(np.sum(x) * A)

        samples["E_phi"].append(q(phi_c * (0.5 * (vabs**2 + gd_sq) + phi_d)))
        samples["diss"].append(q(phi_c * (np.sum(gv**2, axis=(0, 1)) + np.sum(R**2, axis=0))))
        samples["grad_d_sq_v"].append(q(abs_gphi * 0.5 * gd_sq * vabs))
        samples["dt_d_grad_d"].append(q(abs_gphi * np.sqrt(np.sum(dt_d**2, axis=0)) * np.sqrt(gd_sq)))
        samples["phi_v"].append(q(abs_gphi * phi_d * vabs))
        samples["v_cubed"].append(q(abs_gphi * vabs**3))
        samples["grad_v_v"].append(q(abs_gphi * gv_abs * vabs))
        samples["pressure_v"].append(q(abs_gphi * np.abs(p) * vabs))
        samples["g_grad_d"].append(q(abs_gphi * np.sqrt(np.sum(g**2, axis=0)) * np.sqrt(gd_sq)))
        samples["d_grad_g_grad_d"].append(q(abs_phi * dabs * gg_abs * np.sqrt(gd_sq)))
        samples["d_g_phi_prime"].append(q(abs_phi * dabs * np.sqrt(np.sum(g**2, axis=0)) * pp_abs))
        samples["f_v"].append(q(abs_phi * np.sqrt(np.sum(f**2, axis=0)) * vabs))

        samples["kin_flux"].append(q(0.5 * vabs**2 * v_gphi))
        samples["visc_flux"].append(-q(np.sum(gv * v[:, None] * gphi[None], axis=(0, 1))))
        samples["pressure_flux"].append(q((p_tilde - p_tilde.mean()) * v_gphi))
        samples["phi_flux"].append(q(phi_d * v_gphi))
        samples["dt_d_flux"].append(-q(np.sum(dt_d * gd_gphi, axis=0)))
        samples["g_tension"].append(-q(phi_c * np.sum(dxg * R, axis=0)))
        samples["f_work"].append(q(phi_c * np.sum(f * v, axis=0)))

    if quadrature == "trapezoid":
        integ = lambda y: float(trapezoid(y, times))  # noqa: E731
    elif quadrature == "simpson":
        integ = lambda y: float(simpson(y, x=times))  # noqa: E731
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    E_phi = np.array(samples["E_phi"])
    diss = integ(samples["diss"])
    return LocalInequalityTable(
        times=times,
        E_phi=E_phi,
        dissipation=diss,
        lhs=float(E_phi[-1] - E_phi[0] + diss),
        bound_terms={k: integ(samples[k]) for k in _BOUND_TERMS},
        exact_terms={k: integ(samples[k]) for k in _EXACT_TERMS},
    )


# -- run-loop monitor -------------------------------------------------------


@dataclass
class MonitorConfig:
    every: int = 1
    eps: float = 1.0
    R: float = 0.5
    radius_multiplier: float = 2.0
    policy: str = "log"
    ball_weights: str = "area"
    local_energy: bool = True

    def __post_init__(self):
        if self.every < 1:
            raise ValueError("monitors.every must be >= 1")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown detector policy {self.policy!r}; expected one of {POLICIES}")
        if not self.eps > 0:
            raise ValueError("monitors.eps must be positive")
        if not self.R > 0:
            raise ValueError("monitors.R must be positive")
        if self.ball_weights not in ("area", "sharp"):
            raise ValueError("monitors.ball_weights must be 'area' or 'sharp'")

    @classmethod
    def from_dict(cls, cfg: dict) -> "MonitorConfig":
        return cls(**cfg)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class EnergyMonitor:
    """Run-loop hook: budget rows to energy.csv, detector events to JSON lines."""

    def __init__(
        self,
        grid: sp.TorusGrid,
        cfg: MonitorConfig = MonitorConfig(),
        pot: PotentialSpec = PotentialSpec(),
        forcing: ForcingSpec = ZERO,
        csv_path: str | Path | None = None,
        events_path: str | Path | None = None,
    ):
        self.grid, self.cfg, self.pot, self.forcing = grid, cfg, pot, forcing
        self.every = cfg.every
        self.budget = BudgetAccumulator()
        self.detector = DetectorState(cfg.eps, cfg.R, cfg.policy)
        self.rows: list[dict] = []
        self.reports: list[EnergyReport] = []
        self.events: list[dict] = []
        self._csv_file = self._writer = self._events_file = None
        if csv_path is not None:
            self._csv_file = open(csv_path, "w", newline="")
            self._writer = csv.writer(self._csv_file, lineterminator="\n")
            self._writer.writerow(CSV_COLUMNS)
        if events_path is not None:
            self._events_file = open(events_path, "w")

    def _event(self, payload: dict):
        self.events.append(payload)
        if self._events_file is not None:
            self._events_file.write(json.dumps(payload) + "\n")
            self._events_file.flush()

    def __call__(self, state: State, k: int):
        rep = global_energy(state, self.pot, self.forcing)
        residual, slack = self.budget.push(rep)
        self.reports.append(rep)
        if self.cfg.local_energy:
            prof = local_energy(state, self.pot, self.cfg.R, self.cfg.radius_multiplier, self.cfg.ball_weights)
            er, ax, ay = prof.sup_value, prof.argmax_x, prof.argmax_y
            was_fired = self.detector.fired
            self.detector = detector_update(self.detector, prof, state.t)
            just_fired = self.detector.fired and not was_fired
        else:
            er, ax, ay, just_fired = math.nan, math.nan, math.nan, False

        row = dict(
            t=state.t, E=rep.E_global, kinetic=rep.kinetic, elastic=rep.elastic, anisotropic=rep.anisotropic,
            diss_v=rep.dissipation_v, diss_R=rep.dissipation_R, work_f=rep.work_f, work_g=rep.work_g,
            residual_eq=residual, slack_ineq=slack, Psi=rep.Psi_cum, Xi=rep.Xi_cum,
            ER_sup=er, ER_argmax_x=ax, ER_argmax_y=ay, detector_fired=self.detector.fired,
        )  # fmt: skip
        self.rows.append(row)
        if self._writer is not None:
            self._writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
            self._csv_file.flush()

        if just_fired:
            self._event({"t": state.t, "event": "fire", "ER_sup": er, "eps": self.cfg.eps, "R": self.cfg.R})
            if self.cfg.policy == "halt":
                return True
            if self.cfg.policy == "restart-renormalized":
                new, e_before, e_after = restart_renormalized(state, self.pot)
                self.detector = replace(
                    self.detector, drop_log=self.detector.drop_log + ((state.t, e_before, e_after),)
                )
                self._event({"t": state.t, "event": "restart", "E_before": e_before, "E_after": e_after})
                # budget continues from the restarted state
                self.budget.prev = global_energy(new, self.pot, self.forcing)
                self.budget.E0 -= e_before - self.budget.prev.E_global
                return new
        return None

    def column(self, name: str) -> np.ndarray:
        return np.array([float(r[name]) for r in self.rows])

    def close(self):
        for fh in (self._csv_file, self._events_file):
            if fh is not None and not fh.closed:
                fh.close()
