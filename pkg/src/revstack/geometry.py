"""Convex feasible sets with exact Euclidean projections.

Four families are supported: axis-aligned boxes, Euclidean balls, the
intersection of an origin-centred ball with the nonnegative orthant, and the
interior shrink ``(1 - 2 delta) * base + delta * 1`` of any of these.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, UsageError


def as_vector(x, dim: int | None = None, name: str = "point") -> np.ndarray:
    """Convert ``x`` to a finite 1-d float array, checking the dimension."""
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise UsageError(f"{name} must be a vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise UsageError(f"{name} has dimension {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise UsageError(f"{name} has non-finite entries")
    return v


class FeasibleSet:
    """Common interface. Subclasses implement ``_project`` and geometry."""

    dim: int

    @property
    def dimension(self) -> int:
        return self.dim

    def project(self, x) -> np.ndarray:
        return self._project(as_vector(x, self.dim))

    def _project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 0.0) -> bool:
        if tol < 0:
            raise UsageError("tol must be nonnegative")
        x = as_vector(x, self.dim)
        return float(np.linalg.norm(x - self._project(x))) <= tol

    def separating_hyperplane(self, x) -> np.ndarray:
        """Unit ``w`` with ``<y - x, w> <= 0`` for every member ``y``.

        Uses the projection residual: for ``pi = project(x)`` the
        variational inequality ``<y - pi, x - pi> <= 0`` gives the cut.
        """
        x = as_vector(x, self.dim)
        r = x - self._project(x)
        nrm = float(np.linalg.norm(r))
        if nrm == 0.0:
            raise ContractViolation("point lies inside the set; no separating hyperplane")
        return r / nrm

    def diameter(self) -> float:
        """Largest distance between two members."""
        raise NotImplementedError

    def norm_bound(self) -> float:
        """``sup ||x||`` over members (the ``gamma`` of the analysis)."""
        raise NotImplementedError

    def box_bounds(self):
        """``(lo, hi)`` if the set is an axis-aligned box, else ``None``."""
        return None

    def center(self) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` members drawn uniformly (rows)."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Box(FeasibleSet):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lo, name="lo")
        hi = as_vector(self.hi, lo.shape[0], name="hi")
        if np.any(lo > hi):
            raise UsageError("Box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "dim", lo.shape[0])

    def _project(self, x):
        return np.minimum(np.maximum(x, self.lo), self.hi)

    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))

    def norm_bound(self):
        return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    def box_bounds(self):
        return self.lo, self.hi

    def center(self):
        return 0.5 * (self.lo + self.hi)

    def sample(self, rng, n):
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


def _ball_sample(rng, n, dim):
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((n, 1)) ** (1.0 / dim)


@dataclass(frozen=True, eq=False)
class Ball(FeasibleSet):
    center_: np.ndarray
    radius: float

    def __post_init__(self):
        c = as_vector(self.center_, name="center")
        if not self.radius > 0:
            raise UsageError("Ball radius must be positive")
        object.__setattr__(self, "center_", c)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "dim", c.shape[0])

    def _project(self, x):
        r = x - self.center_
        n = float(np.linalg.norm(r))
        if n <= self.radius:
            return x.copy()
        return self.center_ + r * (self.radius / n)

    def diameter(self):
        return 2.0 * self.radius

    def norm_bound(self):
        return float(np.linalg.norm(self.center_)) + self.radius

    def center(self):
        return self.center_.copy()

    def sample(self, rng, n):
        return self.center_ + self.radius * _ball_sample(rng, n, self.dim)

    def __repr__(self):
        return f"Ball(center={self.center_.tolist()}, radius={self.radius})"


@dataclass(frozen=True, eq=False)
class NonnegBall(FeasibleSet):
    """``{p >= 0 : ||p|| <= radius}``: price and toll spaces."""

    radius: float
    dim: int

    def __post_init__(self):
        if not self.radius > 0:
            raise UsageError("NonnegBall radius must be positive")
        if int(self.dim) < 1:
            raise UsageError("dimension must be positive")
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "dim", int(self.dim))

    def _project(self, x):
        # clamping then radial rescaling is exact for a cone cut by a centred ball
        y = np.maximum(x, 0.0)
        n = float(np.linalg.norm(y))
        if n > self.radius:
            y *= self.radius / n
        return y

    def diameter(self):
        return self.radius * (math.sqrt(2.0) if self.dim > 1 else 1.0)

    def norm_bound(self):
        return self.radius

    def center(self):
        return np.full(self.dim, 0.5 * self.radius / math.sqrt(self.dim))

    def sample(self, rng, n):
        return np.abs(self.radius * _ball_sample(rng, n, self.dim))


@dataclass(frozen=True, eq=False)
class Shrunk(FeasibleSet):
    """``(1 - 2 delta) * base + delta * 1``."""

    base: FeasibleSet
    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise UsageError("shrink delta must lie in (0, 1/2)")
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "dim", self.base.dim)

    @property
    def scale(self) -> float:
        return 1.0 - 2.0 * self.delta

    def to_base(self, x):
        return (x - self.delta) / self.scale

    def from_base(self, y):
        return self.scale * y + self.delta

    def _project(self, x):
        # isotropic scaling commutes with Euclidean projection
        return self.from_base(self.base._project(self.to_base(x)))

    def diameter(self):
        return self.scale * self.base.diameter()

    def norm_bound(self):
        return self.scale * self.base.norm_bound() + self.delta * math.sqrt(self.dim)

    def box_bounds(self):
        b = self.base.box_bounds()
        if b is None:
            return None
        return self.from_base(b[0]), self.from_base(b[1])

    def center(self):
        return self.from_base(self.base.center())

    def sample(self, rng, n):
        return self.from_base(self.base.sample(rng, n))

    def __repr__(self):
        return f"Shrunk({self.base!r}, delta={self.delta})"


def project(s: FeasibleSet, x) -> np.ndarray:
    return s.project(x)


def contains(s: FeasibleSet, x, tol: float = 0.0) -> bool:
    return s.contains(x, tol)


def shrink(s: FeasibleSet, delta: float) -> Shrunk:
    return Shrunk(s, delta)


def separating_hyperplane(s: FeasibleSet, x) -> np.ndarray:
    return s.separating_hyperplane(x)
