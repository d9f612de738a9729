"""External body force f (on the velocity) and director field g.

Forcing is built from a closed vocabulary of terms so that runs stay
bit-reproducible:

``mode``
    amp * P(t) * cos(2 pi (kx x + ky y) / L + phase), with P a polynomial in
    t given by its coefficients ``time_poly`` (lowest order first).
``pulse``
    amp * w(t) * cos(...), where w(t) = sin^2(pi (t - t_on) / (t_off - t_on))
    on [t_on, t_off] and zero elsewhere.

A term with kx = ky = 0 and phase 0 is a spatially constant vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .spectral import TorusGrid


class ForcingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ForcingTerm:
    kind: str
    amp: tuple[float, ...]
    kx: int = 0
    ky: int = 0
    phase: float = 0.0
    time_poly: tuple[float, ...] = (1.0,)
    t_on: float = 0.0
    t_off: float = 1.0

    def __post_init__(self):
        if self.kind not in ("mode", "pulse"):
            raise ValueError(f"unknown forcing term kind {self.kind!r}; expected 'mode' or 'pulse'")
        if self.kind == "pulse" and not self.t_off > self.t_on:
            raise ValueError("pulse requires t_off > t_on")
        vals = tuple(self.amp) + tuple(self.time_poly) + (self.phase, self.t_on, self.t_off)
        if not np.all(np.isfinite(vals)):
            raise ValueError("forcing parameters must be finite")

    def time_factor(self, t: float) -> float:
        if self.kind == "pulse":
            if t < self.t_on or t > self.t_off:
                return 0.0
            return float(np.sin(np.pi * (t - self.t_on) / (self.t_off - self.t_on)) ** 2)
        return float(np.polynomial.polynomial.polyval(t, self.time_poly))

    def profile(self, grid: TorusGrid) -> np.ndarray:
        """Time-independent part amp * cos(...), shape (len(amp), n, n); cached per grid."""
        return _profile(self, grid)

    def evaluate(self, t: float, grid: TorusGrid) -> np.ndarray:
        return self.time_factor(t) * self.profile(grid)

    @classmethod
    def from_dict(cls, cfg: dict) -> "ForcingTerm":
        known = {"kind", "amp", "kx", "ky", "phase", "time_poly", "t_on", "t_off"}
        extra = set(cfg) - known
        if extra:
            raise ValueError(f"unknown forcing term keys: {sorted(extra)}")
        kw = dict(cfg)
        kw["amp"] = tuple(float(a) for a in cfg["amp"])
        if "time_poly" in cfg:
            kw["time_poly"] = tuple(float(c) for c in cfg["time_poly"])
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "amp": list(self.amp), "kx": self.kx, "ky": self.ky, "phase": self.phase}
        if self.kind == "pulse":
            out.update(t_on=self.t_on, t_off=self.t_off)
        else:
            out["time_poly"] = list(self.time_poly)
        return out


@lru_cache(maxsize=64)
def _profile(term: ForcingTerm, grid: TorusGrid) -> np.ndarray:
    X, Y = grid.coords()
    shape = np.cos(2 * np.pi * (term.kx * X + term.ky * Y) / grid.L + term.phase)
    out = np.asarray(term.amp, float)[:, None, None] * shape
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ForcingSpec:
    f_terms: tuple[ForcingTerm, ...] = field(default_factory=tuple)
    g_terms: tuple[ForcingTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for t in self.f_terms:
            if len(t.amp) != 2:
                raise ValueError("f terms need a 2-component amplitude")
        for t in self.g_terms:
            if len(t.amp) != 3:
                raise ValueError("g terms need a 3-component amplitude")

    @property
    def has_f(self) -> bool:
        return bool(self.f_terms)

    @property
    def has_g(self) -> bool:
        return bool(self.g_terms)

    def _sum(self, terms, t, grid, ncomp, name):
        out = np.zeros((ncomp, grid.n, grid.n))
        try:
            for term in terms:
                out += term.evaluate(t, grid)
        except Exception as exc:
            raise ForcingError(f"evaluation of {name} failed at t={t!r}: {exc}") from exc
        if not np.all(np.isfinite(out)):
            raise ForcingError(f"{name} is not finite at t={t!r}")
        return out

    def f(self, t: float, grid: TorusGrid) -> np.ndarray:
        return self._sum(self.f_terms, t, grid, 2, "f")

    def g(self, t: float, grid: TorusGrid) -> np.ndarray:
        return self._sum(self.g_terms, t, grid, 3, "g")

    def f_mean(self, t: float, grid: TorusGrid) -> np.ndarray:
        return self.f(t, grid).mean(axis=(1, 2))

    @classmethod
    def from_dict(cls, cfg: dict | None) -> "ForcingSpec":
        cfg = cfg or {}
        extra = set(cfg) - {"f", "g"}
        if extra:
            raise ValueError(f"unknown forcing keys: {sorted(extra)}")
        return cls(
            tuple(ForcingTerm.from_dict(c) for c in cfg.get("f", [])),
            tuple(ForcingTerm.from_dict(c) for c in cfg.get("g", [])),
        )

    def to_dict(self) -> dict:
        return {"f": [t.to_dict() for t in self.f_terms], "g": [t.to_dict() for t in self.g_terms]}


def constant_g(vec) -> ForcingSpec:
    return ForcingSpec(g_terms=(ForcingTerm("mode", tuple(float(x) for x in vec)),))


ZERO = ForcingSpec()
