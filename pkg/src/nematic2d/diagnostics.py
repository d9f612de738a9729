"""Post-hoc verifiers over stored trajectories.

* pressure recovery from the divergence of the momentum equation,
* the linear equation for z = |d|^2 - 1 along a trajectory,
* small-data regularity monitors.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import spectral as sp
from .energy import global_energy
from .forcing import ZERO, ForcingSpec
from .integrator import State
from .potential import PotentialSpec
from .rhs import momentum_rhs

logger = logging.getLogger(__name__)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])


# -- pressure ---------------------------------------------------------------


def pressure_fields(grid: sp.TorusGrid, v: np.ndarray, d: np.ndarray, f: np.ndarray | None = None):
    """(p~, p) with p~ solving -lap p~ = div(v.grad v + (grad d)^T lap d - f), p = p~ - 1/2 |grad d|^2.

    Both are returned with zero mean.
    """
    M_hat = sp.transform_forward(momentum_rhs(grid, v, d, f, dealias=True))  # = -(... - f)
    kk = grid.kx**2 + grid.ky**2
    inv = np.where(kk > 0, 1.0 / np.where(kk > 0, kk, 1.0), 0.0)
    p_hat = -1j * (grid.kx * M_hat[0] + grid.ky * M_hat[1]) * inv
    p_hat[0, 0] = 0.0
    p_tilde = sp.transform_inverse(p_hat)
    p = p_tilde - 0.5 * np.sum(sp.grad3(grid, d) ** 2, axis=(0, 1))
    return p_tilde, p - p.mean()


@dataclass
class PressureRecord:
    t: float
    p_tilde: np.ndarray
    p: np.ndarray
    grad_p_tilde_L43: float
    grad_p_L43: float
    cum_p_tilde_L43: float = 0.0  # (int_0^t |grad p~|_{L4/3}^{4/3} ds)^{3/4}
    cum_p_L43: float = 0.0


def recover_pressure(s: State, forcing: ForcingSpec = ZERO) -> PressureRecord:
    grid = s.grid
    f = forcing.f(s.t, grid) if forcing.has_f else None
    p_tilde, p = pressure_fields(grid, s.v, s.d, f)
    return PressureRecord(
        t=s.t,
        p_tilde=p_tilde,
        p=p,
        grad_p_tilde_L43=sp.lp_norm(grid, sp.grad(grid, p_tilde), 4 / 3),
        grad_p_L43=sp.lp_norm(grid, sp.grad(grid, p), 4 / 3),
    )


def pressure_series(states: Sequence[State], forcing: ForcingSpec = ZERO) -> list[PressureRecord]:
    recs = [recover_pressure(s, forcing) for s in states]
    t = np.array([r.t for r in recs])
    a = np.array([r.grad_p_tilde_L43 for r in recs]) ** (4 / 3)
    b = np.array([r.grad_p_L43 for r in recs]) ** (4 / 3)
    for j, r in enumerate(recs):
        if j:
            r.cum_p_tilde_L43 = float(trapezoid(a[: j + 1], t[: j + 1])) ** 0.75
            r.cum_p_L43 = float(trapezoid(b[: j + 1], t[: j + 1])) ** 0.75
    return recs


def pressure_consistency(s: State, forcing: ForcingSpec = ZERO) -> float:
    """|P M - (M - grad p~)|_{L2} / |M|_{L2} for the momentum tendency M."""
    grid = s.grid
    f = forcing.f(s.t, grid) if forcing.has_f else None
    M = momentum_rhs(grid, s.v, s.d, f, dealias=True)
    p_tilde, _ = pressure_fields(grid, s.v, s.d, f)
    diff = sp.leray_project(grid, M) - (M - sp.grad(grid, p_tilde))
    scale = sp.l2_norm(grid, M)
    return sp.l2_norm(grid, diff) / scale if scale > 0 else sp.l2_norm(grid, diff)


def write_pressure_csv(path, recs: Sequence[PressureRecord]):
    _write_csv(
        path,
        ("t", "grad_p_tilde_L43", "grad_p_L43", "cum_p_tilde_L43", "cum_p_L43", "p_tilde_mean"),
        [(r.t, r.grad_p_tilde_L43, r.grad_p_L43, r.cum_p_tilde_L43, r.cum_p_L43, r.p_tilde.mean()) for r in recs],
    )


# -- z equation -------------------------------------------------------------


@dataclass
class ZTrajectory:
    times: np.ndarray
    z_l2: np.ndarray
    z_final: np.ndarray
    G: np.ndarray  # int_0^t [|grad d|_{L4}^4 + 1 + |d|_{H2}^2]
    gronwall_c1: np.ndarray  # |z0| exp(G / 2): the c = 1 bound on |z(t)|_{L2}
    c_fit: float  # smallest c with |z(t)|^2 <= |z0|^2 exp(c G(t)) on the grid
    passed: bool

    @property
    def sup_l2(self) -> float:
        return float(np.max(self.z_l2))


class _Coefficients:
    """u(t) and a(t) = 2|grad d|^2 + 2 s phi'(d).d, linearly interpolated between snapshots."""

    def __init__(self, states: Sequence[State], pot: PotentialSpec, alpha_sign: float = -1.0):
        self.t = np.array([s.t for s in states])
        grid = states[0].grid
        self.u = [s.v for s in states]
        self.a = []
        self.g_int = []
        for s in states:
            gd = sp.grad3(grid, s.d)
            gsq = np.sum(gd**2, axis=(0, 1))
            a = 2 * gsq
            if pot.family != "none":
                a = a + 2 * alpha_sign * pot.alpha(s.d)
            self.a.append(a)
            self.g_int.append(
                float(np.sum(gsq**2) * grid.cell_area) + 1.0 + sp.sobolev_norm(grid, s.d, 2) ** 2
            )

    def __call__(self, t):
        j = int(np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 2))
        h = self.t[j + 1] - self.t[j]
        w = min(max((t - self.t[j]) / h, 0.0), 1.0)
        return (1 - w) * self.u[j] + w * self.u[j + 1], (1 - w) * self.a[j] + w * self.a[j + 1]


def z_verify(
    states: Sequence[State],
    dt_z: float,
    pot: PotentialSpec = PotentialSpec(),
    z0: np.ndarray | None = None,
    zero_tol: float = 1e-12,
    assert_tol: float = 1e-8,
    alpha_sign: float = -1.0,
) -> ZTrajectory:
    """Integrate z' - lap z + u.grad z = a z along the stored coefficients by IF-Heun.

    a = 2|grad d|^2 + 2 alpha_sign (phi'(d).d). The default alpha_sign = -1 is
    the published form of the equation; the director equation itself implies
    alpha_sign = +1 (dot it with d). The two agree whenever z0 = 0.

    z0 defaults to |d(t0)|^2 - 1. The only assertion is sup |z| <= assert_tol
    when |z0| <= zero_tol.
    """
    if alpha_sign not in (-1, 1):
        raise ValueError("alpha_sign must be -1 or +1")
    if len(states) < 2:
        raise ValueError("z_verify needs at least two snapshots")
    grid = states[0].grid
    coef = _Coefficients(states, pot, alpha_sign)
    if z0 is None:
        z0 = np.sum(states[0].d ** 2, axis=0) - 1.0
    t0, t1 = coef.t[0], coef.t[-1]
    nsteps = max(1, int(math.ceil((t1 - t0) / dt_z - 1e-9)))
    h = (t1 - t0) / nsteps
    E = np.exp(-grid.k2 * h)

    def N(zh, t):
        u, a = coef(t)
        z = sp.transform_inverse(zh)
        gz = sp.transform_inverse(sp.grad_hat(grid, zh))
        return sp.transform_forward(a * z - (u[0] * gz[0] + u[1] * gz[1]))

    zh = sp.transform_forward(z0)
    times, norms = [t0], [sp.l2_norm(grid, z0)]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nsteps):
            t = t0 + k * h
            n0 = N(zh, t)
            zp = E * (zh + h * n0)
            zh = E * (zh + 0.5 * h * n0) + 0.5 * h * N(zp, t + h)
            times.append(t0 + (k + 1) * h)
            norms.append(sp.l2_norm(grid, sp.transform_inverse(zh)))
    times, norms = np.array(times), np.array(norms)

    g_rate = np.interp(times, coef.t, coef.g_int)
    G = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (g_rate[1:] + g_rate[:-1]))])
    n0 = norms[0]
    bound = n0 * np.exp(0.5 * G)
    if n0 > 0:
        with np.errstate(divide="ignore"):
            c = 2 * np.log(np.where(norms > 0, norms, np.finfo(float).tiny) / n0)[1:] / G[1:]
        c_fit = float(np.max(c))
    else:
        c_fit = math.nan
    passed = bool(np.all(np.isfinite(norms)))
    if n0 <= zero_tol:
        passed = passed and float(np.max(norms)) <= assert_tol
    return ZTrajectory(times, norms, sp.transform_inverse(zh), G, bound, c_fit, passed)


def write_zcheck_csv(path, z: ZTrajectory):
    _write_csv(path, ("t", "z_L2", "gronwall_c1", "G"), zip(z.times, z.z_l2, z.gronwall_c1, z.G))


# -- small-data monitor -----------------------------------------------------


@dataclass
class SmallDataRecord:
    bold_E0: float
    times: np.ndarray
    grad_v_sq: np.ndarray
    lap_d_sq: np.ndarray
    int_high: float  # int (|Av|^2 + |grad lap d|^2)
    energy_lhs: np.ndarray  # 1/2 (|v|^2 + |grad d|^2)(t) + 1/2 int_0^t |grad v|^2
    bounded: bool
    energy_ok: bool
    detector_ok: bool
    energy_checked: bool
    notes: list

    @property
    def high_norm(self) -> np.ndarray:
        return self.grad_v_sq + self.lap_d_sq

    @property
    def passed(self) -> bool:
        return self.bounded and self.energy_ok and self.detector_ok


def smalldata_monitor(
    states: Sequence[State],
    forcing: ForcingSpec = ZERO,
    pot: PotentialSpec = PotentialSpec(),
    cap: float = 1e6,
    smallness: float = 0.0,
    detector_fired: bool = False,
    tol: float = 1e-6,
) -> SmallDataRecord:
    """Track |grad v|^2 + |lap d|^2 and the energy-level quantity E0 + Psi.

    Asserted: finiteness and the cap on the tracked norm; if the potential is
    quadratic, 1/2 (|v|^2 + |grad d|^2)(t) + 1/2 int_0^t |grad v|^2 <= E0 + Psi
    (+ tol); if E0 + Psi < smallness, the detector must not have fired.
    """
    grid = states[0].grid
    t = np.array([s.t for s in states])
    gv, ld, high, half, psi = [], [], [], [], []
    for s in states:
        vh, dh = sp.transform_forward(s.v), sp.transform_forward(s.d)
        lap_d = sp.transform_inverse(-grid.k2 * dh)
        gv.append(sp.h1_seminorm(grid, s.v) ** 2)
        ld.append(sp.l2_norm(grid, lap_d) ** 2)
        high.append(sp.l2_norm(grid, sp.transform_inverse(grid.k2 * vh)) ** 2 + sp.h1_seminorm(grid, lap_d) ** 2)
        half.append(0.5 * (sp.l2_norm(grid, s.v) ** 2 + sp.h1_seminorm(grid, s.d) ** 2))
        psi.append(global_energy(s, pot, forcing).psi_rate)
    gv, ld, half, psi = map(np.array, (gv, ld, half, psi))
    cum = lambda y: np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (y[1:] + y[:-1]))])  # noqa: E731
    E0 = global_energy(states[0], pot, forcing).E_global
    bold_E0 = E0 + float(cum(psi)[-1])
    energy_lhs = half + 0.5 * cum(gv)
    int_high = float(cum(np.array(high))[-1])

    notes = []
    finite = all(np.all(np.isfinite(x)) for x in (gv, ld, energy_lhs)) and math.isfinite(int_high)
    bounded = finite and float(np.max(gv + ld)) <= cap
    energy_checked = pot.family == "quadratic"
    if energy_checked:
        energy_ok = bool(np.max(energy_lhs) <= bold_E0 + tol)
    else:
        energy_ok = True
        notes.append("potential is not quadratic: energy-level small-data check skipped")
        logger.info(notes[-1])
    detector_ok = not (bold_E0 < smallness and detector_fired)
    return SmallDataRecord(bold_E0, t, gv, ld, int_high, energy_lhs, bounded, energy_ok, detector_ok, energy_checked, notes)


def write_smalldata_csv(path, rec: SmallDataRecord):
    _write_csv(
        path,
        ("t", "grad_v_sq", "lap_d_sq", "high_norm", "energy_lhs", "bold_E0"),
        [
            (t, a, b, a + b, e, rec.bold_E0)
            for t, a, b, e in zip(rec.times, rec.grad_v_sq, rec.lap_d_sq, rec.energy_lhs)
        ],
    )
