"""Anisotropic energy densities and their derivatives.

Two families are supported besides the trivial one:

* ``magnetic``:  phi(n) = 1/2 (|H|^2 - (n.H)^2),  phi'(n) = -(n.H) H
* ``quadratic``: phi(n) = 1/2 |n - xi|^2,         phi'(n) = n - xi

All functions broadcast over a leading component axis of length 3, so they
accept a single vector of shape (3,) as well as a field of shape (3, n, n).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

FAMILIES = ("none", "magnetic", "quadratic")


def _dot(a, b):
    return np.sum(a * b, axis=0)


def _bcast(vec: np.ndarray, like: np.ndarray) -> np.ndarray:
    return vec.reshape((3,) + (1,) * (like.ndim - 1))


@dataclass(frozen=True)
class PotentialSpec:
    """An admissible potential together with its growth/Lipschitz constants.

    ``M0`` bounds |phi'(n)| <= M0 (1 + |n|), ``M1`` is the Lipschitz constant
    of phi'' (zero for both quadratic families) and ``M2`` bounds |phi''|.
    """

    family: str = "none"
    H: tuple[float, float, float] = (0.0, 0.0, 0.0)
    xi: tuple[float, float, float] = (0.0, 0.0, 0.0)
    M0: float = field(init=False)
    M1: float = field(init=False)
    M2: float = field(init=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown potential family {self.family!r}; expected one of {FAMILIES}")
        H = tuple(float(h) for h in self.H)
        xi = tuple(float(x) for x in self.xi)
        if len(H) != 3 or len(xi) != 3 or not np.all(np.isfinite(H + xi)):
            raise ValueError("potential vectors H and xi must be finite 3-vectors")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "xi", xi)
        if self.family == "magnetic":
            h2 = float(np.dot(H, H))
            M0, M1, M2 = h2, 0.0, h2
        elif self.family == "quadratic":
            M0, M1, M2 = max(1.0, float(np.linalg.norm(xi))), 0.0, 1.0
        else:
            M0, M1, M2 = 0.0, 0.0, 0.0
        object.__setattr__(self, "M0", M0)
        object.__setattr__(self, "M1", M1)
        object.__setattr__(self, "M2", M2)

    @classmethod
    def magnetic(cls, H) -> "PotentialSpec":
        return cls("magnetic", H=tuple(H))

    @classmethod
    def quadratic(cls, xi) -> "PotentialSpec":
        return cls("quadratic", xi=tuple(xi))

    @classmethod
    def from_dict(cls, cfg: dict) -> "PotentialSpec":
        return cls(
            cfg.get("family", "none"),
            H=tuple(cfg.get("H", (0.0, 0.0, 0.0))),
            xi=tuple(cfg.get("xi", (0.0, 0.0, 0.0))),
        )

    def to_dict(self) -> dict:
        out = {"family": self.family}
        if self.family == "magnetic":
            out["H"] = list(self.H)
        if self.family == "quadratic":
            out["xi"] = list(self.xi)
        return out

    # -- pointwise evaluation -------------------------------------------

    def phi(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        if self.family == "magnetic":
            H = _bcast(np.array(self.H), n)
            return 0.5 * (float(np.dot(self.H, self.H)) - _dot(n, H) ** 2)
        if self.family == "quadratic":
            diff = n - _bcast(np.array(self.xi), n)
            return 0.5 * _dot(diff, diff)
        return np.zeros(n.shape[1:])

    def phi_prime(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        if self.family == "magnetic":
            H = _bcast(np.array(self.H), n)
            return -_dot(n, H) * H
        if self.family == "quadratic":
            return n - _bcast(np.array(self.xi), n)
        return np.zeros_like(n)

    def phi_second(self, n: np.ndarray) -> np.ndarray:
        """Hessian of phi, shape (3, 3) + n.shape[1:] (constant for both families)."""
        n = np.asarray(n, dtype=float)
        if self.family == "magnetic":
            hess = -np.outer(self.H, self.H)
        elif self.family == "quadratic":
            hess = np.eye(3)
        else:
            hess = np.zeros((3, 3))
        return np.broadcast_to(hess.reshape((3, 3) + (1,) * (n.ndim - 1)), (3, 3) + n.shape[1:])

    def alpha(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        return _dot(self.phi_prime(n), n)

    def tangential_force_raw(self, n: np.ndarray) -> np.ndarray:
        """-phi'(n) + alpha(n) n without the on-sphere check (hot path)."""
        pp = self.phi_prime(n)
        return -pp + _dot(pp, n) * n

    def tangential_force(self, n: np.ndarray) -> np.ndarray:
        """-phi'(n) + alpha(n) n: the part of the potential force tangent to the sphere."""
        n = np.asarray(n, dtype=float)
        drift = float(np.max(np.abs(np.sqrt(_dot(n, n)) - 1.0))) if n.size else 0.0
        if drift > 1e-8:
            logger.warning("tangential_force evaluated off the sphere (max ||n|-1| = %.3e)", drift)
        return -self.phi_prime(n) + self.alpha(n) * n
