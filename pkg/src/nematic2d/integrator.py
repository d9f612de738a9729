"""Time stepping: integrating-factor Heun/Euler, run loop and Picard mode.

Diffusion is applied exactly through the per-mode factor exp(-|k|^2 dt);
nonlinear terms are explicit. ``picard_solve`` realizes the fixed-point map
whose contraction gives local well-posedness: each iteration solves the
linear Stokes/heat problem with the nonlinear terms frozen along the
previous iterate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import spectral as sp
from .forcing import ZERO, ForcingSpec
from .potential import PotentialSpec
from .rhs import assemble_hat

logger = logging.getLogger(__name__)

SCHEMES = ("IF-Heun", "IF-Euler")
CONSTRAINT_MODES = ("renormalize", "track-drift")


OVERFLOW_GUARD = 1e150


class NumericalAbort(RuntimeError):
    """Raised when a step produces non-finite values or |d| collapses."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
        self.trajectory = None


@dataclass
class State:
    grid: sp.TorusGrid
    v: np.ndarray
    d: np.ndarray
    t: float = 0.0

    def copy(self) -> "State":
        return State(self.grid, self.v.copy(), self.d.copy(), self.t)

    def divergence_max(self) -> float:
        return sp.spectral_max(sp.div_hat(self.grid, sp.transform_forward(self.v))) / self.grid.n**2

    def velocity_mean(self) -> np.ndarray:
        return self.v.mean(axis=(1, 2))

    def sphere_drift(self) -> float:
        return float(np.max(np.abs(np.sqrt(np.sum(self.d**2, axis=0)) - 1.0)))

    def check(self, constraint_tol: float = 1e-12, div_tol: float = 1e-12) -> None:
        if self.v.shape != (2, self.grid.n, self.grid.n) or self.d.shape != (3, self.grid.n, self.grid.n):
            raise ValueError("state arrays do not match the grid")
        if not (np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.d))):
            raise ValueError("state contains non-finite values")
        scale = max(1.0, float(np.max(np.abs(self.v))))
        if self.divergence_max() > div_tol * scale:
            raise ValueError(f"velocity is not divergence free ({self.divergence_max():.3e})")
        if np.max(np.abs(self.velocity_mean())) > div_tol * scale:
            raise ValueError("velocity has nonzero mean")
        if self.sphere_drift() > constraint_tol:
            raise ValueError(f"director leaves the sphere (max ||d|-1| = {self.sphere_drift():.3e})")


def make_state(grid: sp.TorusGrid, v, d, t: float = 0.0, normalize: bool = True) -> State:
    """Build a state with the velocity projected and mean-free and d optionally renormalized."""
    v = np.zeros((2, grid.n, grid.n)) if v is None else np.asarray(v, float)
    d = np.asarray(d, float)
    if d.shape == (3,):
        d = np.broadcast_to(d[:, None, None], (3, grid.n, grid.n)).copy()
    v = sp.transform_inverse(sp.zero_mean_hat(sp.leray_hat(grid, sp.transform_forward(v))))
    if normalize:
        d = d / np.sqrt(np.sum(d**2, axis=0))
    return State(grid, v, d, float(t))


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-3
    scheme: str = "IF-Heun"
    constraint_mode: str = "renormalize"
    dealias: bool = True
    cfl_safety: float = 1.0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.constraint_mode not in CONSTRAINT_MODES:
            raise ValueError(f"unknown constraint_mode {self.constraint_mode!r}; expected one of {CONSTRAINT_MODES}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety!r}")


@dataclass(frozen=True)
class PicardConfig:
    T0: float = 0.05
    dt: float = 1e-3
    max_iters: int = 30
    tol: float = 1e-10
    dealias: bool = True

    def __post_init__(self):
        if not self.T0 > 0:
            raise ValueError("picard.T0 must be positive")
        if not self.dt > 0:
            raise ValueError("picard.dt must be positive")
        if not self.tol > 0:
            raise ValueError("picard.tol must be positive")
        if self.max_iters < 2:
            raise ValueError("picard.max_iters must be at least 2")


def advisory_dt(state: State, cfg: StepperConfig) -> float:
    dx = state.grid.dx
    with np.errstate(over="ignore"):
        vmax = float(np.max(np.sqrt(np.sum(state.v**2, axis=0))))
    bound = dx**2 / np.pi**2
    if vmax > 0:
        bound = min(bound, dx / vmax)
    return cfg.cfl_safety * bound


# -- single step ------------------------------------------------------------


class _Tendency:
    """Evaluates the spectral nonlinear tendencies (N_v, N_d) from state spectra."""

    def __init__(self, grid, forcing: ForcingSpec, pot: PotentialSpec, dealias: bool):
        self.grid, self.forcing, self.pot, self.dealias = grid, forcing, pot, dealias
        self._E: dict[float, np.ndarray] = {}

    def factor(self, dt: float) -> np.ndarray:
        E = self._E.get(dt)
        if E is None:
            E = self._E[dt] = np.exp(-self.grid.k2 * dt)
        return E

    def __call__(self, vh, dh, t):
        g_now = self.forcing.g(t, self.grid) if self.forcing.has_g else None
        b = assemble_hat(self.grid, vh, dh, self.pot, g_now, self.dealias)
        Nv = b.Fv_hat
        if self.forcing.has_f:
            f_hat = sp.transform_forward(self.forcing.f(t, self.grid))
            Nv = Nv + sp.leray_hat(self.grid, f_hat)
        if not (np.all(np.isfinite(Nv)) and np.all(np.isfinite(b.Gd_hat))):
            _abort("non-finite nonlinear terms", t)
        Nv[..., 0, 0] = 0.0
        return Nv, b.Gd_hat

    def of_state(self, s: "State"):
        vh, dh = split_hat(sp.transform_forward(np.concatenate([s.v, s.d])))
        return vh, dh


def split_hat(spec):
    return spec[:2], spec[2:]


def _abort(msg, state_t, **diag):
    raise NumericalAbort(f"{msg} at t={state_t:.6g}", {"t": state_t, **diag})


def _finish(grid, vh, dh, t_new, cfg: StepperConfig, t_old) -> State:
    vh = sp.leray_hat(grid, vh)
    vh[..., 0, 0] = 0.0
    phys = sp.transform_inverse(np.concatenate([vh, dh]))
    v, d = phys[:2], phys[2:]
    if not np.all(np.isfinite(phys)):
        _abort("non-finite values after step", t_old, dt=cfg.dt)
    peak = float(np.max(np.abs(phys)))
    if peak > OVERFLOW_GUARD:
        # squares of such values overflow in every quadratic diagnostic
        _abort("field magnitude overflow after step", t_old, dt=cfg.dt, max_abs=peak)
    mag = np.sqrt(np.sum(d**2, axis=0))
    if float(np.min(mag)) < 0.5:
        _abort("|d| fell below 0.5 before renormalization", t_old, dt=cfg.dt, min_abs_d=float(np.min(mag)))
    if cfg.constraint_mode == "renormalize":
        d = d / mag
    return State(grid, v, d, t_new)


def step(
    s: State,
    cfg: StepperConfig,
    forcing: ForcingSpec = ZERO,
    pot: PotentialSpec = PotentialSpec(),
    _tend: _Tendency | None = None,
) -> State:
    """Advance one step of size cfg.dt."""
    grid, dt = s.grid, cfg.dt
    tend = _tend or _Tendency(grid, forcing, pot, cfg.dealias)
    E = tend.factor(dt)
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            vh, dh = tend.of_state(s)
        except ValueError as exc:
            _abort(f"non-finite state ({exc})", s.t, dt=dt)
        try:
            Nv0, Nd0 = tend(vh, dh, s.t)
        except ValueError as exc:
            _abort(f"non-finite tendency ({exc})", s.t, dt=dt)
        vh_p = E * (vh + dt * Nv0)
        dh_p = E * (dh + dt * Nd0)
        if cfg.scheme == "IF-Euler":
            return _finish(grid, vh_p, dh_p, s.t + dt, cfg, s.t)
        try:
            Nv1, Nd1 = tend(vh_p, dh_p, s.t + dt)
        except ValueError as exc:
            _abort(f"non-finite predictor tendency ({exc})", s.t, dt=dt)
        vh_new = E * (vh + 0.5 * dt * Nv0) + 0.5 * dt * Nv1
        dh_new = E * (dh + 0.5 * dt * Nd0) + 0.5 * dt * Nd1
        return _finish(grid, vh_new, dh_new, s.t + dt, cfg, s.t)


# -- run loop ---------------------------------------------------------------


@dataclass
class Trajectory:
    """States kept at the snapshot cadence plus run bookkeeping."""

    states: list[State] = field(default_factory=list)
    status: str = "completed"  # completed | halted | aborted
    steps: int = 0
    message: str = ""

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> State:
        return self.states[-1]


Hook = Callable[[State, int], object]


def run(
    s0: State,
    T: float,
    cfg: StepperConfig,
    forcing: ForcingSpec = ZERO,
    pot: PotentialSpec = PotentialSpec(),
    monitors: Sequence[Hook] = (),
    snapshot_every: int = 1,
    snapshot_writer: Callable[[State, int], None] | None = None,
) -> Trajectory:
    """Step from s0 up to time s0.t + T.

    ``monitors`` are callables ``hook(state, step_index)`` invoked at their
    own cadence (attribute ``every``, default 1 step). A hook returning True
    halts the run; returning a State replaces the current state (used by the
    restart policy of the concentration detector).
    """
    if T < 0:
        raise ValueError("horizon T must be non-negative")
    nsteps = int(round(T / cfg.dt))
    traj = Trajectory()
    tend = _Tendency(s0.grid, forcing, pot, cfg.dealias)
    bound = advisory_dt(s0, cfg)
    if cfg.dt > bound:
        logger.warning("dt=%.3g exceeds the advisory CFL bound %.3g", cfg.dt, bound)

    def keep(state, k):
        traj.states.append(state)
        if snapshot_writer is not None:
            snapshot_writer(state, k)

    def call_hooks(state, k):
        for hook in monitors:
            every = getattr(hook, "every", 1)
            if k % every and k != nsteps:
                continue
            out = hook(state, k)
            if out is True:
                return True, state
            if isinstance(out, State):
                state = out
        return False, state

    s = s0
    try:
        stop, s = call_hooks(s, 0)
        keep(s, 0)
        if stop:
            traj.status = "halted"
            traj.message = f"monitor requested stop at t={s.t:.6g}"
            return traj
        for k in range(1, nsteps + 1):
            s = step(s, cfg, forcing, pot, _tend=tend)
            traj.steps = k
            stop, s = call_hooks(s, k)
            if k % snapshot_every == 0 or k == nsteps or stop:
                keep(s, k)
            if stop:
                traj.status = "halted"
                traj.message = f"monitor requested stop at t={s.t:.6g}"
                break
    except NumericalAbort as exc:
        traj.status = "aborted"
        traj.message = str(exc)
        exc.trajectory = traj
        raise
    finally:
        for hook in monitors:
            close = getattr(hook, "close", None)
            if close is not None:
                close()
    return traj


# -- Picard mode ------------------------------------------------------------


@dataclass
class PicardResult:
    converged: bool
    iterations: int
    distances: list[float]
    contraction_factors: list[float]
    trajectory: list[State]
    message: str = ""


def xt_distance(grid: sp.TorusGrid, a: Sequence[State], b: Sequence[State]) -> float:
    """Discrete stand-in for the X_T distance: max over slices of |dv|_H1 + |dd|_H2."""
    best = 0.0
    for sa, sb in zip(a, b):
        dv = sp.sobolev_norm(grid, sa.v - sb.v, 1)
        dd = sp.sobolev_norm(grid, sa.d - sb.d, 2)
        best = max(best, dv + dd)
    return best


def _linear_solve(grid, s0: State, Nv: list, Nd: list, dt: float, times) -> list[State]:
    """Stokes/heat solve with RHS linearly interpolated between slices."""
    E = np.exp(-grid.k2 * dt)
    vh = sp.transform_forward(s0.v)
    dh = sp.transform_forward(s0.d)
    out = [State(grid, s0.v.copy(), s0.d.copy(), s0.t)]
    for j in range(len(times) - 1):
        vh = E * vh + 0.5 * dt * (E * Nv[j] + Nv[j + 1])
        dh = E * dh + 0.5 * dt * (E * Nd[j] + Nd[j + 1])
        vh = sp.zero_mean_hat(sp.leray_hat(grid, vh))
        out.append(State(grid, sp.transform_inverse(vh), sp.transform_inverse(dh), times[j + 1]))
    return out


def picard_solve(
    s0: State,
    cfg: PicardConfig,
    forcing: ForcingSpec = ZERO,
    pot: PotentialSpec = PotentialSpec(),
) -> PicardResult:
    """Fixed-point iteration of the frozen-coefficient map on [t0, t0 + T0].

    The initial iterate is the constant trajectory. Convergence is declared
    when the distance between consecutive iterates drops below cfg.tol;
    exhausting max_iters or producing non-finite iterates is reported as
    divergence rather than raised.
    """
    grid = s0.grid
    nslices = int(round(cfg.T0 / cfg.dt))
    times = s0.t + cfg.dt * np.arange(nslices + 1)
    tend = _Tendency(grid, forcing, pot, cfg.dealias)
    current = [State(grid, s0.v.copy(), s0.d.copy(), t) for t in times]
    distances: list[float] = []
    factors: list[float] = []
    with np.errstate(all="ignore"):
        for it in range(1, cfg.max_iters + 1):
            try:
                pairs = [tend(*tend.of_state(s), s.t) for s in current]
            except ValueError:
                return PicardResult(False, it, distances, factors, current, "non-finite iterate")
            new = _linear_solve(grid, s0, [p[0] for p in pairs], [p[1] for p in pairs], cfg.dt, times)
            dist = xt_distance(grid, new, current)
            if not math.isfinite(dist):
                return PicardResult(False, it, distances, factors, new, "non-finite iterate")
            if distances:
                factors.append(dist / distances[-1] if distances[-1] > 0 else 0.0)
            distances.append(dist)
            current = new
            if dist < cfg.tol:
                return PicardResult(True, it, distances, factors, current, "converged")
    return PicardResult(
        False, cfg.max_iters, distances, factors, current, f"no convergence in {cfg.max_iters} iterations"
    )


# -- constraint drift -------------------------------------------------------


@dataclass
class DriftRow:
    dt: float
    drift: float
    ratio: float  # drift / drift at the previous (larger) dt
    order: float


def sphere_drift_probe(
    s0: State,
    T: float,
    dt_list: Iterable[float],
    cfg: StepperConfig = StepperConfig(constraint_mode="track-drift"),
    forcing: ForcingSpec = ZERO,
    pot: PotentialSpec = PotentialSpec(),
) -> list[DriftRow]:
    """sup over steps of max_x ||d| - 1| for each dt, with observed orders."""
    rows: list[DriftRow] = []
    for dt in dt_list:
        c = replace(cfg, dt=float(dt))
        tend = _Tendency(s0.grid, forcing, pot, c.dealias)
        s, drift = s0, s0.sphere_drift()
        for _ in range(int(round(T / dt))):
            s = step(s, c, forcing, pot, _tend=tend)
            drift = max(drift, s.sphere_drift())
        if rows and rows[-1].drift > 0:
            ratio = drift / rows[-1].drift
            order = math.log(1 / ratio) / math.log(rows[-1].dt / dt) if ratio > 0 else math.inf
        else:
            ratio, order = math.nan, math.nan
        rows.append(DriftRow(float(dt), drift, ratio, order))
    return rows
