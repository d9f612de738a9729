"""Nonlinear right-hand sides of the projected system.

The velocity and director equations are advanced in the form

    v' + A v      = F(v, d) + P f,   F(v, d) = -P(v.grad v) - P[(grad d)^T lap d]
    d' - lap d    = G(v, d),         G(v, d) = |grad d|^2 d - v.grad d
                                               - phi'(d) + (phi'(d).d) d + d x g

where P is the Leray projection. Products are formed in physical space from
two-thirds-truncated inputs and truncated again afterwards. All derivative
fields of one state come out of a single batched inverse transform and all
products go back through a single batched forward transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .potential import PotentialSpec

_NONE = PotentialSpec()


@dataclass
class RhsBundle:
    """Spectral RHS pieces for one state plus a few auxiliary norms."""

    Fv_hat: np.ndarray  # (2, ...), projected, excludes forcing and diffusion
    Gd_hat: np.ndarray  # (3, ...), excludes diffusion, includes d x g
    R_hat: np.ndarray | None  # (3, ...), tension field if requested
    grad_d_L4_4: float
    v_grad_d_L2: float

    def Fv(self) -> np.ndarray:
        return sp.transform_inverse(self.Fv_hat)

    def Gd(self) -> np.ndarray:
        return sp.transform_inverse(self.Gd_hat)

    def R_of_d(self) -> np.ndarray:
        if self.R_hat is None:
            raise ValueError("bundle was assembled without the tension field")
        return sp.transform_inverse(self.R_hat)


def _cross(a, b):
    return np.stack(
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    )


class _Fields:
    """Physical-space ingredients of (v, d), built from their spectra.

    Attributes: ``v``, ``vx``, ``vy`` (v and its x/y derivatives), ``d``,
    ``dx``, ``dy``, ``lap`` (likewise for d). Missing inputs leave their
    attributes unset.
    """

    def __init__(self, grid: sp.TorusGrid, v_hat, d_hat, dealias: bool = True):
        self.grid, self.dealias = grid, dealias
        ikx, iky = 1j * grid.kx, 1j * grid.ky
        blocks, names = [], []
        if v_hat is not None:
            vm = self.band(v_hat)
            blocks += [vm, ikx * vm, iky * vm]
            names += ["v", "vx", "vy"]
        if d_hat is not None:
            dm = self.band(d_hat)
            blocks += [dm, ikx * dm, iky * dm, -grid.k2 * dm]
            names += ["d", "dx", "dy", "lap"]
        phys = sp.transform_inverse(np.concatenate(blocks))
        pos = 0
        for name, blk in zip(names, blocks):
            setattr(self, name, phys[pos : pos + len(blk)])
            pos += len(blk)

    def band(self, spec):
        return spec * self.grid.dealias_mask if self.dealias else spec

    def finish(self, prod: np.ndarray) -> np.ndarray:
        return self.band(sp.transform_forward(prod))

    def grad_sq(self):
        return np.sum(self.dx**2 + self.dy**2, axis=0)

    def v_grad(self, wx, wy):
        """(v . grad) w given the x and y derivatives of w."""
        return self.v[0] * wx + self.v[1] * wy

    def stress(self):
        """(grad d)^T lap d, the unprojected Ericksen force density."""
        return np.stack([np.sum(self.dx * self.lap, axis=0), np.sum(self.dy * self.lap, axis=0)])

    def director_terms(self, pot: PotentialSpec, g_now, grad_sq, advect: bool):
        """|grad d|^2 d [- v.grad d] - phi' + alpha d [+ d x g]."""
        d = self.d
        out = grad_sq * d
        if advect:
            out = out - self.v_grad(self.dx, self.dy)
        if pot.family != "none":
            out = out + pot.tangential_force_raw(d)
        if g_now is not None:
            out = out + _cross(d, np.broadcast_to(g_now, d.shape))
        return out


def _fields(grid, v, d, dealias):
    vh = None if v is None else sp.transform_forward(v)
    dh = None if d is None else sp.transform_forward(d)
    return _Fields(grid, vh, dh, dealias), vh, dh


def assemble_hat(
    grid: sp.TorusGrid,
    v_hat: np.ndarray,
    d_hat: np.ndarray,
    pot: PotentialSpec = _NONE,
    g_now: np.ndarray | None = None,
    dealias: bool = True,
    with_tension: bool = False,
) -> RhsBundle:
    """All nonlinear terms of the state with spectra (v_hat, d_hat)."""
    p = _Fields(grid, v_hat, d_hat, dealias)
    grad_sq = p.grad_sq()
    mom = p.v_grad(p.vx, p.vy) + p.stress()
    vgd = p.v_grad(p.dx, p.dy)
    prods = [mom, p.director_terms(pot, g_now, grad_sq, advect=True)]
    if with_tension:
        prods.append(p.director_terms(pot, None, grad_sq, advect=False))
    spec = p.finish(np.concatenate(prods))
    R_hat = -grid.k2 * d_hat + spec[5:8] if with_tension else None
    return RhsBundle(
        Fv_hat=-sp.leray_hat(grid, spec[0:2]),
        Gd_hat=spec[2:5],
        R_hat=R_hat,
        grad_d_L4_4=float(np.sum(grad_sq**2) * grid.cell_area),
        v_grad_d_L2=float(np.sqrt(np.sum(vgd**2) * grid.cell_area)),
    )


def assemble(
    grid: sp.TorusGrid,
    v: np.ndarray,
    d: np.ndarray,
    pot: PotentialSpec = _NONE,
    g_now: np.ndarray | None = None,
    dealias: bool = True,
    with_tension: bool = False,
) -> RhsBundle:
    """Physical-space front end of ``assemble_hat``."""
    return assemble_hat(
        grid, sp.transform_forward(v), sp.transform_forward(d), pot, g_now, dealias, with_tension
    )


def convective(grid: sp.TorusGrid, u: np.ndarray, w: np.ndarray, dealias: bool = True) -> np.ndarray:
    """B(u, w) = P(u . grad w) for 2D vector fields."""
    pu, _, _ = _fields(grid, u, None, dealias)
    pw, _, _ = _fields(grid, w, None, dealias)
    out = pu.finish(pu.v_grad(pw.vx, pw.vy))
    return sp.transform_inverse(sp.leray_hat(grid, out))


def ericksen_stress_div(grid: sp.TorusGrid, d: np.ndarray, dealias: bool = True) -> np.ndarray:
    """-P[(grad d)^T lap d], the projected divergence of the Ericksen stress."""
    p, _, _ = _fields(grid, None, d, dealias)
    return sp.transform_inverse(-sp.leray_hat(grid, p.finish(p.stress())))


def ericksen_stress_div_tensor(grid: sp.TorusGrid, d: np.ndarray, dealias: bool = True) -> np.ndarray:
    """-P Div(grad d (.) grad d), assembled from the stress tensor itself."""
    p, _, _ = _fields(grid, None, d, dealias)
    Mxx = np.sum(p.dx * p.dx, axis=0)
    Mxy = np.sum(p.dx * p.dy, axis=0)
    Myy = np.sum(p.dy * p.dy, axis=0)
    M_hat = p.finish(np.stack([Mxx, Mxy, Myy]))
    div_M = np.stack(
        [
            1j * grid.kx * M_hat[0] + 1j * grid.ky * M_hat[1],
            1j * grid.kx * M_hat[1] + 1j * grid.ky * M_hat[2],
        ]
    )
    return sp.transform_inverse(-sp.leray_hat(grid, div_M))


def director_rhs(
    grid: sp.TorusGrid,
    v: np.ndarray | None,
    d: np.ndarray,
    g_now: np.ndarray | None = None,
    pot: PotentialSpec = _NONE,
    dealias: bool = True,
) -> np.ndarray:
    """G(v, d) without the diffusion term."""
    p, _, _ = _fields(grid, v, d, dealias)
    terms = p.director_terms(pot, g_now, p.grad_sq(), advect=v is not None)
    return sp.transform_inverse(p.finish(terms))


def tension_hat(grid: sp.TorusGrid, d: np.ndarray, pot: PotentialSpec = _NONE, dealias: bool = True):
    p, _, dh = _fields(grid, None, d, dealias)
    terms = p.director_terms(pot, None, p.grad_sq(), advect=False)
    return -grid.k2 * dh + p.finish(terms)


def tension(grid: sp.TorusGrid, d: np.ndarray, pot: PotentialSpec = _NONE, dealias: bool = True) -> np.ndarray:
    """R(d) = lap d + |grad d|^2 d - phi'(d) + alpha(d) d."""
    return sp.transform_inverse(tension_hat(grid, d, pot, dealias))


def momentum_rhs(grid, v, d, f_now=None, dealias=True) -> np.ndarray:
    """Unprojected momentum tendency -v.grad v - (grad d)^T lap d + f (physical space)."""
    p, _, _ = _fields(grid, v, d, dealias)
    out = -sp.transform_inverse(p.finish(p.v_grad(p.vx, p.vy) + p.stress()))
    if f_now is not None:
        out = out + f_now
    return out


def structural_identity_check(
    grid: sp.TorusGrid,
    v: np.ndarray,
    d: np.ndarray,
    pot: PotentialSpec = _NONE,
    dealias: bool = True,
) -> dict[str, float]:
    """Residuals of the two orthogonality identities behind the energy law.

    ``dissip``: <-P Div(grad d (.) grad d), v> + <v.grad d, lap d>
    ``perp``:   <v.grad d, |grad d|^2 d - phi'(d) + alpha(d) d>

    Both vanish in the continuum for divergence-free v and unit d. The
    dissipation pairing is formed from the truncated fields the solver
    actually uses; the tangency pairing is pointwise in d and uses d as
    given. Each is returned raw and relative to its Cauchy-Schwarz scale.
    """
    pm, _, _ = _fields(grid, v, d, dealias)
    vgd_m = pm.v_grad(pm.dx, pm.dy)
    stress = -sp.transform_inverse(sp.leray_hat(grid, pm.finish(pm.stress())))
    dissip = sp.inner(grid, stress, pm.v) + sp.inner(grid, vgd_m, pm.lap)
    dissip_scale = sp.l2_norm(grid, stress) * sp.l2_norm(grid, pm.v) + sp.l2_norm(grid, vgd_m) * sp.l2_norm(
        grid, pm.lap
    )

    p, _, _ = _fields(grid, v, d, False)
    vgd = p.v_grad(p.dx, p.dy)
    other = p.director_terms(pot, None, p.grad_sq(), advect=False)
    perp = sp.inner(grid, vgd, other)
    perp_scale = sp.l2_norm(grid, vgd) * sp.l2_norm(grid, other)

    def rel(x, s):
        return abs(x) / s if s > 0 else abs(x)

    return {
        "dissip_residual": dissip,
        "perp_residual": perp,
        "dissip_relative": rel(dissip, dissip_scale),
        "perp_relative": rel(perp, perp_scale),
    }
