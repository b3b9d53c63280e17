"""Follower valuations, producer costs and the bundle-space profit.

Valuations expose value, gradient and Hessian plus the analytic constants the
induction schedules need: strong-concavity modulus ``sigma`` and Hölder
constants ``(lambda_val, beta)`` over ``(0, H]^d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotHomogeneousError, UsageError
from .geometry import as_vector


class Valuation:
    dim: int
    H: float

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError

    def homogeneity_degree(self) -> float:
        raise NotHomogeneousError(f"{type(self).__name__} is not homogeneous")

    def strong_concavity_constant(self) -> float:
        raise NotImplementedError

    def holder_constants(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def floor(self) -> float:
        """Lower edge of the differentiability region (0 when unbounded)."""
        return 0.0


def _positive(x, dim):
    x = as_vector(x, dim)
    if np.any(x <= 0):
        raise DomainError("valuation is only differentiable at strictly positive bundles")
    return x


@dataclass(frozen=True, eq=False)
class CES(Valuation):
    """``v(x) = (sum_i alpha_i x_i^rho)^beta``."""

    weights: np.ndarray
    rho: float
    beta: float = 1.0
    H: float = 1.0
    floor_frac: float = 1e-4

    def __post_init__(self):
        a = as_vector(self.weights, name="weights")
        if np.any(a <= 0):
            raise UsageError("CES weights must be positive")
        if not 0 < self.rho < 1:
            raise UsageError("CES exponent rho must lie in (0, 1)")
        if not (self.beta > 0 and self.rho * self.beta < 1):
            raise UsageError("CES requires beta > 0 and rho * beta < 1")
        if not self.H > 0:
            raise UsageError("region bound H must be positive")
        object.__setattr__(self, "weights", a)
        object.__setattr__(self, "dim", a.shape[0])

    @property
    def floor(self):
        return self.floor_frac * self.H

    def _inner(self, x):
        return float(self.weights @ x**self.rho)

    def value(self, x):
        x = _positive(x, self.dim)
        return self._inner(x) ** self.beta

    def gradient(self, x):
        x = _positive(x, self.dim)
        s = self._inner(x)
        return self.beta * s ** (self.beta - 1) * self.rho * self.weights * x ** (self.rho - 1)

    def hessian(self, x):
        x = _positive(x, self.dim)
        a, r, b = self.weights, self.rho, self.beta
        s = self._inner(x)
        g = r * a * x ** (r - 1)
        h = b * (b - 1) * s ** (b - 2) * np.outer(g, g)
        h[np.diag_indices(self.dim)] += b * s ** (b - 1) * r * (r - 1) * a * x ** (r - 2)
        return h

    def homogeneity_degree(self):
        return self.rho * self.beta

    def strong_concavity_constant(self):
        a, r, b, H = self.weights, self.rho, self.beta, self.H
        if b <= 1:
            return b * r * (1 - r) * float(a.sum()) ** (b - 1) * float(a.min()) * H ** (r * b - 2)
        kappa = (b - 1) * r / (1 - r)
        return b * r * (1 - r) * (1 - kappa) * float((a**b).min()) * H ** (r * b - 2)

    def holder_constants(self):
        return (float(self.weights.max()) * self.dim) ** self.beta, self.rho * self.beta

    def power_form(self):
        """``(c, k)`` with ``v(x) = c x^k`` when ``d = 1``, else ``None``."""
        if self.dim != 1:
            return None
        return float(self.weights[0]) ** self.beta, self.rho * self.beta


@dataclass(frozen=True, eq=False)
class CobbDouglas(Valuation):
    """``v(x) = prod_i x_i^alpha_i`` with ``sum alpha < 1``."""

    exponents: np.ndarray
    H: float = 1.0
    floor_frac: float = 1e-4

    def __post_init__(self):
        a = as_vector(self.exponents, name="exponents")
        if np.any(a <= 0) or a.sum() >= 1:
            raise UsageError("Cobb-Douglas exponents must be positive with sum < 1")
        if not self.H > 0:
            raise UsageError("region bound H must be positive")
        object.__setattr__(self, "exponents", a)
        object.__setattr__(self, "dim", a.shape[0])

    @property
    def floor(self):
        return self.floor_frac * self.H

    def value(self, x):
        x = _positive(x, self.dim)
        return float(np.prod(x**self.exponents))

    def gradient(self, x):
        x = _positive(x, self.dim)
        return self.value(x) * self.exponents / x

    def hessian(self, x):
        x = _positive(x, self.dim)
        v = self.value(x)
        g = self.exponents / x
        h = v * np.outer(g, g)
        h[np.diag_indices(self.dim)] -= v * self.exponents / x**2
        return h

    def homogeneity_degree(self):
        return float(self.exponents.sum())

    def strong_concavity_constant(self):
        # Verbatim analytic bound; it lower-bounds the true curvature only
        # where prod x^alpha is not small (see the test-suite domain).
        k = float(self.exponents.sum())
        return self.H ** (k - 2) * (1 - k) * float(self.exponents.min())

    def holder_constants(self):
        return 1.0, float(self.exponents.sum())

    def power_form(self):
        if self.dim != 1:
            return None
        return 1.0, float(self.exponents[0])


@dataclass(frozen=True, eq=False)
class QuadraticValuation(Valuation):
    """``v(x) = <a, x> - (q/2)||x||^2``; closed-form best responses."""

    linear: np.ndarray
    curvature: float
    H: float = 1.0

    def __post_init__(self):
        a = as_vector(self.linear, name="linear")
        if not self.curvature > 0:
            raise UsageError("curvature must be positive")
        object.__setattr__(self, "linear", a)
        object.__setattr__(self, "curvature", float(self.curvature))
        object.__setattr__(self, "dim", a.shape[0])

    def value(self, x):
        x = as_vector(x, self.dim)
        return float(self.linear @ x - 0.5 * self.curvature * (x @ x))

    def gradient(self, x):
        return self.linear - self.curvature * as_vector(x, self.dim)

    def hessian(self, x):
        return -self.curvature * np.eye(self.dim)

    def strong_concavity_constant(self):
        return self.curvature

    def holder_constants(self):
        # sup of ||a - q x|| over [0, H]^d
        lam = float(np.linalg.norm(self.linear)) + self.curvature * self.H * math.sqrt(self.dim)
        return lam, 1.0


class CostFunction:
    dim: int

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        return np.zeros((self.dim, self.dim))

    def lipschitz(self, H: float = 1.0) -> float:
        raise NotImplementedError

    def strong_convexity_constant(self) -> float:
        return 0.0

    def homogeneity_degree(self) -> float:
        raise NotHomogeneousError(f"{type(self).__name__} is not homogeneous")


@dataclass(frozen=True, eq=False)
class LinearCost(CostFunction):
    c: np.ndarray

    def __post_init__(self):
        c = as_vector(self.c, name="c")
        if np.any(c < 0):
            raise UsageError("linear cost coefficients must be nonnegative")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "dim", c.shape[0])

    def value(self, x):
        return float(self.c @ as_vector(x, self.dim))

    def gradient(self, x):
        return self.c.copy()

    def lipschitz(self, H=1.0):
        return float(np.linalg.norm(self.c))

    def homogeneity_degree(self):
        return 1.0


@dataclass(frozen=True, eq=False)
class QuadraticCost(CostFunction):
    """``c(x) = <c, x> + (q/2)||x||^2``."""

    c: np.ndarray
    q: float = 0.0

    def __post_init__(self):
        c = as_vector(self.c, name="c")
        if self.q < 0:
            raise UsageError("quadratic cost curvature must be nonnegative")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "dim", c.shape[0])

    def value(self, x):
        x = as_vector(x, self.dim)
        return float(self.c @ x + 0.5 * self.q * (x @ x))

    def gradient(self, x):
        return self.c + self.q * as_vector(x, self.dim)

    def hessian(self, x):
        return self.q * np.eye(self.dim)

    def lipschitz(self, H=1.0):
        return float(np.linalg.norm(self.c)) + self.q * H * math.sqrt(self.dim)

    def strong_convexity_constant(self):
        return self.q

    def homogeneity_degree(self):
        if np.all(self.c == 0) and self.q > 0:
            return 2.0
        if self.q == 0:
            return 1.0
        raise NotHomogeneousError("mixed linear + quadratic cost is not homogeneous")


def profit_of_bundle(v: Valuation, c: CostFunction, x) -> float:
    """Profit of selling ``x`` at its unique inducing price, ``k v(x) - c(x)``."""
    k = v.homogeneity_degree()
    return k * v.value(x) - c.value(x)


def revenue_identity_gap(v: Valuation, x) -> float:
    """``<grad v(x), x> - k v(x)``; zero for homogeneous ``v``."""
    return float(v.gradient(x) @ as_vector(x, v.dim)) - v.homogeneity_degree() * v.value(x)
