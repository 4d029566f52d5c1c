"""Vector primitives: norms, feasible domains, mirror maps, seeded RNG streams.

Everything here is a pure function of its arguments.  Stochastic callers
receive randomness through an explicit :class:`RngStream`, which wraps a
counter-based (Philox) generator with hierarchical substream coordinates so
that parallel trials replay deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RngStream",
    "Domain",
    "BoxLinf",
    "L1Ball",
    "L2Ball",
    "as_vector",
    "norm",
    "project",
    "project_l1_ball",
    "mirror_grad",
    "mirror_grad_inverse",
    "bregman",
]


def as_vector(x, d: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-d float64 array, optionally checking length."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"expected a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    if d is not None and v.size != d:
        raise ValueError(f"expected dimension {d}, got {v.size}")
    return v


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream addressed by (seed, substream path).

    Identical (seed, path) pairs produce bit-identical draw sequences;
    distinct paths give statistically independent Philox streams.  Substreams
    are derived with :meth:`child`, e.g. experiment -> trial -> step.
    """

    seed: int
    path: tuple[int, ...] = field(default=())

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))


# --- feasible domains -------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """Base class for feasible sets supporting Euclidean projection."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class BoxLinf(Domain):
    """The box {x : ||x||_inf <= radius}."""

    radius: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def contains(self, x, tol=1e-9):
        return bool(np.max(np.abs(x)) <= self.radius + tol)

    def project(self, x):
        return np.clip(x, -self.radius, self.radius)


@dataclass(frozen=True)
class L2Ball(Domain):
    """The Euclidean ball of given radius about the origin."""

    radius: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def contains(self, x, tol=1e-9):
        return bool(np.linalg.norm(x) <= self.radius + tol)

    def project(self, x):
        nrm = np.linalg.norm(x)
        if nrm <= self.radius:
            return np.asarray(x, dtype=np.float64).copy()
        return x * (self.radius / nrm)


@dataclass(frozen=True)
class L1Ball(Domain):
    """The l1 ball of given radius about the origin."""

    radius: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def contains(self, x, tol=1e-9):
        return bool(np.sum(np.abs(x)) <= self.radius + tol)

    def project(self, x):
        return project_l1_ball(x, self.radius)


def project_l1_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """Exact Euclidean projection onto the l1 ball via sort-and-threshold.

    Projects |x| onto the simplex of size ``radius`` (Duchi et al. style
    O(d log d) method) and restores signs.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.sum(np.abs(x)) <= radius:
        return x.copy()
    mag = np.abs(x)
    u = np.sort(mag)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, x.size + 1)
    rho = np.nonzero(u * ks > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(x) * np.maximum(mag - theta, 0.0)


# --- norms ------------------------------------------------------------------


def norm(x: np.ndarray, p: float) -> float:
    """lp norm for p in [1, inf]; use ``math.inf`` (or np.inf) for the sup norm."""
    x = np.asarray(x, dtype=np.float64)
    if math.isinf(p):
        return float(np.max(np.abs(x)))
    if p < 1:
        raise ValueError("norm order p must satisfy p >= 1")
    if p == 1:
        return float(np.sum(np.abs(x)))
    if p == 2:
        return float(np.linalg.norm(x))
    return float(np.sum(np.abs(x) ** p) ** (1.0 / p))


def project(x: np.ndarray, dom: Domain) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``dom``."""
    return dom.project(as_vector(x, dom.dim))


# --- mirror map machinery ---------------------------------------------------
#
# Phi_a(x) = ||x||_a^2 / (a - 1) for 1 < a <= 2, the mirror map whose Bregman
# geometry gives sqrt(log d)-type rates over the l1 ball.


def _check_a(a: float) -> None:
    if not 1.0 < a <= 2.0:
        raise ValueError("mirror map exponent must satisfy 1 < a <= 2")


def mirror_grad(x: np.ndarray, a: float) -> np.ndarray:
    """Gradient of Phi_a(x) = ||x||_a^2/(a-1); maps 0 to 0."""
    _check_a(a)
    x = np.asarray(x, dtype=np.float64)
    na = norm(x, a)
    if na == 0.0:
        return np.zeros_like(x)
    scale = (2.0 / (a - 1.0)) * na ** (2.0 - a)
    return scale * np.sign(x) * np.abs(x) ** (a - 1.0)


def mirror_grad_inverse(theta: np.ndarray, a: float) -> np.ndarray:
    """Inverse of :func:`mirror_grad`: the x with grad Phi_a(x) = theta.

    Closed form: with b = a/(a-1) the dual exponent, ||x||_a = (a-1)||theta||_b/2
    and |x_i| = (|theta_i| / scale)^(1/(a-1)) for the same scale factor.
    """
    _check_a(a)
    theta = np.asarray(theta, dtype=np.float64)
    b = a / (a - 1.0)
    nb = norm(theta, b)
    if nb == 0.0:
        return np.zeros_like(theta)
    na = (a - 1.0) * nb / 2.0
    scale = (2.0 / (a - 1.0)) * na ** (2.0 - a)
    return np.sign(theta) * (np.abs(theta) / scale) ** (1.0 / (a - 1.0))


def phi_a(x: np.ndarray, a: float) -> float:
    """The mirror map value Phi_a(x) itself."""
    _check_a(a)
    return norm(x, a) ** 2 / (a - 1.0)


def bregman(x: np.ndarray, y: np.ndarray, a: float) -> float:
    """Bregman divergence D_{Phi_a}(x, y); nonnegative, zero iff x == y."""
    _check_a(a)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return phi_a(x, a) - phi_a(y, a) - float(np.dot(mirror_grad(y, a), x - y))
