"""
Fourier machinery on the periodic square [0, L)^2.

Fields are plain numpy arrays. A scalar field has shape ``(n, n)`` and a
vector field with ``c`` components has shape ``(c, n, n)``; the two spatial
axes are ordered ``[iy, ix]`` (y outer, x inner) so that ``x`` varies
fastest in memory.

Transform normalization follows numpy: the forward transform is
unnormalized (a constant field ``c`` has the single coefficient ``c * n**2``
at k = 0) and the inverse carries the factor ``1/n**2``.

Odd derivatives use a wavenumber table whose Nyquist entry is zeroed, so the
table is symmetric (``k`` present iff ``-k`` present) and derivatives of real
fields stay real. The Laplacian keeps the full Nyquist wavenumber.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

logger = logging.getLogger(__name__)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("NEMATIC2D_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class TorusGrid:
    """Uniform n x n discretization of the flat torus of period L.

    Spectral arrays use the real-to-complex half-plane layout of shape
    (n, n//2 + 1): rows are y frequencies in FFT order, columns are the
    non-negative x frequencies. The mode at -k is the conjugate of the mode
    at k and is not stored; ``full_spectrum`` rebuilds the whole plane.
    """

    n: int
    L: float = 2 * np.pi
    kx: np.ndarray = field(init=False, repr=False)
    ky: np.ndarray = field(init=False, repr=False)
    k2: np.ndarray = field(init=False, repr=False)
    dealias_mask: np.ndarray = field(init=False, repr=False)
    parseval_weight: np.ndarray = field(init=False, repr=False)
    _leray: tuple = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 8 or n % 2:
            raise ValueError(f"grid size n must be an even integer >= 8, got {n!r}")
        if not np.isfinite(self.L) or self.L <= 0:
            raise ValueError(f"period L must be positive, got {self.L!r}")

        nh = n // 2 + 1
        my = np.fft.fftfreq(n, d=1.0 / n)
        mx = np.arange(nh, dtype=float)
        scale = 2 * np.pi / self.L
        my_odd, mx_odd = my.copy(), mx.copy()
        my_odd[n // 2] = 0.0
        mx_odd[n // 2] = 0.0
        kx = np.broadcast_to(mx_odd[None, :] * scale, (n, nh)).copy()
        ky = np.broadcast_to(my_odd[:, None] * scale, (n, nh)).copy()
        k2 = (mx[None, :] ** 2 + my[:, None] ** 2) * scale**2
        mask = (np.abs(mx)[None, :] <= n / 3) & (np.abs(my)[:, None] <= n / 3)
        weight = np.full((n, nh), 2.0)
        weight[:, 0] = 1.0
        weight[:, n // 2] = 1.0

        kk = kx**2 + ky**2
        inv = np.where(kk > 0, 1.0 / np.where(kk > 0, kk, 1.0), 0.0)
        leray = (1.0 - kx * kx * inv, -kx * ky * inv, 1.0 - ky * ky * inv)

        for arr in (kx, ky, k2, mask, weight) + leray:
            arr.setflags(write=False)
        object.__setattr__(self, "kx", kx)
        object.__setattr__(self, "ky", ky)
        object.__setattr__(self, "k2", k2)
        object.__setattr__(self, "dealias_mask", mask)
        object.__setattr__(self, "parseval_weight", weight)
        object.__setattr__(self, "_leray", leray)

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def cell_area(self) -> float:
        return self.dx**2

    @property
    def area(self) -> float:
        return self.L**2

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Grid point coordinates ``(X, Y)``, each of shape (n, n)."""
        x = np.arange(self.n) * self.dx
        return np.meshgrid(x, x, indexing="xy")

    def __eq__(self, other):
        return isinstance(other, TorusGrid) and self.n == other.n and self.L == other.L

    def __hash__(self):
        return hash((self.n, self.L))


# -- transforms -------------------------------------------------------------


def transform_forward(values: np.ndarray) -> np.ndarray:
    """Real-to-complex FFT over the last two axes. Rejects non-finite input."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))
        raise ValueError(
            f"non-finite field values ({len(bad)} entries, first at index {tuple(bad[0])})"
        )
    return scipy.fft.rfft2(values, axes=(-2, -1), workers=_workers())


def transform_inverse(spec: np.ndarray) -> np.ndarray:
    """Inverse of ``transform_forward`` (carries the 1/n^2 factor)."""
    n = spec.shape[-2]
    w = _workers()
    # two 1D passes; noticeably faster than irfft2 for stacked small grids
    return scipy.fft.irfft(scipy.fft.ifft(spec, axis=-2, workers=w), n=n, axis=-1, workers=w)


def full_spectrum(spec: np.ndarray) -> np.ndarray:
    """Expand a half-plane spectrum to the full (n, n) plane using c(-k) = conj(c(k))."""
    n = spec.shape[-2]
    out = np.zeros(spec.shape[:-1] + (n,), dtype=complex)
    out[..., : n // 2 + 1] = spec
    mx = np.arange(n // 2 + 1, n)
    my = np.arange(n)
    out[..., mx] = np.conj(spec[..., (-my) % n, :][..., (-mx) % n])
    return out


def hermitian_defect(full: np.ndarray) -> float:
    """max |c(-k) - conj(c(k))| relative to max |c| for a full-plane spectrum."""
    flipped = np.roll(np.flip(full, axis=(-2, -1)), 1, axis=(-2, -1))
    scale = max(float(np.max(np.abs(full))), 1e-300)
    return float(np.max(np.abs(flipped - np.conj(full)))) / scale


def dealias(grid: TorusGrid, spec: np.ndarray) -> np.ndarray:
    """Zero every mode outside the two-thirds band."""
    return spec * grid.dealias_mask


def truncate(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Physical-space field with all modes outside the two-thirds band removed."""
    return transform_inverse(dealias(grid, transform_forward(values)))


# -- differential operators -------------------------------------------------


def grad_hat(grid: TorusGrid, spec: np.ndarray) -> np.ndarray:
    """Spectral gradient; output gains a leading axis of length 2 (x, y)."""
    return np.stack([1j * grid.kx * spec, 1j * grid.ky * spec])


def grad(grid: TorusGrid, s: np.ndarray) -> np.ndarray:
    return transform_inverse(grad_hat(grid, transform_forward(s)))


def div_hat(grid: TorusGrid, u_hat: np.ndarray) -> np.ndarray:
    return 1j * grid.kx * u_hat[0] + 1j * grid.ky * u_hat[1]


def div(grid: TorusGrid, u: np.ndarray) -> np.ndarray:
    return transform_inverse(div_hat(grid, transform_forward(u)))


def laplacian(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    return transform_inverse(-grid.k2 * transform_forward(f))


def grad3(grid: TorusGrid, d: np.ndarray) -> np.ndarray:
    """Gradient tensor of a 3-vector field, shape (3, 2, n, n): [component, direction]."""
    g = grad_hat(grid, transform_forward(d))  # (2, 3, n, n)
    return transform_inverse(np.swapaxes(g, 0, 1))


# -- Leray projection -------------------------------------------------------


def leray_hat(grid: TorusGrid, u_hat: np.ndarray) -> np.ndarray:
    """Per mode apply I - k k^T/|k|^2; modes with k = 0 pass through."""
    pxx, pxy, pyy = grid._leray
    return np.stack([pxx * u_hat[0] + pxy * u_hat[1], pxy * u_hat[0] + pyy * u_hat[1]])


def leray_project(grid: TorusGrid, u: np.ndarray) -> np.ndarray:
    return transform_inverse(leray_hat(grid, transform_forward(u)))


def zero_mean_hat(spec: np.ndarray) -> np.ndarray:
    out = spec.copy()
    out[..., 0, 0] = 0.0
    return out


# -- integrals and norms ----------------------------------------------------


def integrate(grid: TorusGrid, f: np.ndarray) -> float:
    """Rectangle-rule integral over the torus (spectrally accurate)."""
    return float(np.sum(f) * grid.cell_area)


def inner(grid: TorusGrid, a: np.ndarray, b: np.ndarray) -> float:
    """L2 inner product, summed over components."""
    return float(np.sum(a * b) * grid.cell_area)


def _spec_sq_sum(grid: TorusGrid, spec: np.ndarray, weight=None) -> float:
    a = (spec.real**2 + spec.imag**2) * grid.parseval_weight
    if weight is not None:
        a = a * weight
    return float(np.sum(a)) * grid.cell_area / grid.n**2


def l2_norm(grid: TorusGrid, f: np.ndarray) -> float:
    return float(np.sqrt(np.sum(f**2) * grid.cell_area))


def lp_norm(grid: TorusGrid, f: np.ndarray, p: float) -> float:
    """L^p norm of the pointwise Euclidean magnitude (components on axis 0 if vector)."""
    mag = np.sqrt(np.sum(f**2, axis=0)) if f.ndim == 3 else np.abs(f)
    return float((np.sum(mag**p) * grid.cell_area) ** (1.0 / p))


def h1_seminorm(grid: TorusGrid, f: np.ndarray) -> float:
    """L2 norm of the gradient, computed from the spectrum."""
    kk = grid.kx**2 + grid.ky**2
    return float(np.sqrt(_spec_sq_sum(grid, transform_forward(f), kk)))


def hminus1_norm(grid: TorusGrid, f: np.ndarray, *, warn: bool = True) -> float:
    """sqrt(sum_{k != 0} |f_hat|^2 / |k|^2); the mean is discarded."""
    spec = transform_forward(f)
    mean = spec[..., 0, 0]
    if warn and np.any(np.abs(mean) > 1e-12 * max(1.0, float(np.max(np.abs(spec))))):
        logger.warning("H^-1 norm requested for data with nonzero mean; mean part discarded")
    kk = grid.k2
    w = np.where(kk > 0, 1.0 / np.where(kk > 0, kk, 1.0), 0.0)
    return float(np.sqrt(_spec_sq_sum(grid, spec, w)))


def sobolev_norm(grid: TorusGrid, f: np.ndarray, s: float) -> float:
    """Full H^s norm with Fourier weight (1 + |k|^2)^s."""
    return float(np.sqrt(_spec_sq_sum(grid, transform_forward(f), (1.0 + grid.k2) ** s)))


def norms(grid: TorusGrid, f: np.ndarray) -> dict[str, float]:
    """L2, L4, H1 seminorm and H^-1 norm of a scalar or vector field.

    All use the quadrature weight (L/n)^2. For a constant field c on a
    torus of area |T|, L2 = |c| |T|^(1/2) and L4 = |c| |T|^(1/4).
    """
    return {
        "L2": l2_norm(grid, f),
        "L4": lp_norm(grid, f, 4),
        "H1_seminorm": h1_seminorm(grid, f),
        "Hminus1": hminus1_norm(grid, f, warn=False),
    }


def spectral_max(spec: np.ndarray) -> float:
    return float(np.max(np.abs(spec)))


def resample(values: np.ndarray, n_new: int) -> np.ndarray:
    """Spectral interpolation (zero padding or truncation) to an n_new grid."""
    n = values.shape[-1]
    spec = np.fft.fftshift(np.fft.fft2(values, axes=(-2, -1)), axes=(-2, -1))
    out = np.zeros(values.shape[:-2] + (n_new, n_new), dtype=complex)
    m = min(n, n_new)
    src0, dst0 = (n - m) // 2, (n_new - m) // 2
    out[..., dst0 : dst0 + m, dst0 : dst0 + m] = spec[..., src0 : src0 + m, src0 : src0 + m]
    out = np.fft.ifftshift(out, axes=(-2, -1))
    return np.fft.ifft2(out, axes=(-2, -1)).real * (n_new / n) ** 2


def random_bandlimited(
    grid: TorusGrid, rng: np.random.Generator, components: int = 1, kmax: int = 4
) -> np.ndarray:
    """Real random field whose integer frequencies satisfy max(|mx|, |my|) <= kmax.

    Scaled so that the largest sample magnitude is 1.
    """
    n = grid.n
    spec = rng.standard_normal((components, n, n)) + 1j * rng.standard_normal((components, n, n))
    m = np.fft.fftfreq(n, d=1.0 / n)
    band = (np.abs(m)[None, :] <= kmax) & (np.abs(m)[:, None] <= kmax)
    vals = np.fft.ifft2(np.where(band, spec, 0.0), axes=(-2, -1)).real
    vals /= max(float(np.max(np.abs(vals))), 1e-300)
    return vals[0] if components == 1 else vals
