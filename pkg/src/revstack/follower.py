"""The follower: exact, approximate and noisy best responses.

A consumer with valuation ``v`` buys ``argmax_x v(x) - <p, x>``. A
principal-agent worker with cost ``c`` supplies ``argmax_x <p, x> - c(x)``.
Both are written as ``phi(x) - s <p, x>`` with ``s = +1`` (the leader charges)
or ``s = -1`` (the leader rewards).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SolverError, UnsupportedError, UsageError
from .geometry import Box, FeasibleSet, as_vector
from .preferences import CostFunction, QuadraticCost, QuadraticValuation, Valuation

CHARGE = "charge"
REWARD = "reward"


@dataclass(frozen=True)
class Exact:
    tol: float = 1e-9


@dataclass(frozen=True)
class Approximate:
    zeta: float
    tol: float = 1e-10


@dataclass(frozen=True)
class Noisy:
    nu: float = 1.0
    tol: float = 1e-9


class _Utility:
    """``u(x) = phi(x) - s <p, x>`` with derivative access."""

    def __init__(self, pref, p, role):
        self.pref = pref
        self.p = p
        self.s = 1.0 if role == CHARGE else -1.0
        self.neg = isinstance(pref, CostFunction)

    def value(self, x):
        phi = -self.pref.value(x) if self.neg else self.pref.value(x)
        return phi - self.s * float(self.p @ x)

    def gradient(self, x):
        g = self.pref.gradient(x)
        return (-g if self.neg else g) - self.s * self.p

    def hessian(self, x):
        h = self.pref.hessian(x)
        return -h if self.neg else h


def role_of(pref) -> str:
    return REWARD if isinstance(pref, CostFunction) else CHARGE


def effective_set(pref, feasible: FeasibleSet) -> FeasibleSet:
    """Intersect ``feasible`` with the differentiability region of ``pref``."""
    floor = getattr(pref, "floor", 0.0)
    if floor <= 0:
        return feasible
    bounds = feasible.box_bounds()
    if bounds is None:
        raise UnsupportedError("valuations with a positive floor need a box-shaped feasible set")
    lo, hi = bounds
    lo = np.maximum(lo, floor)
    if np.any(lo > hi):
        raise UsageError("feasible box lies below the valuation floor")
    return Box(lo, hi)


def _closed_form(pref, p, role, feasible):
    s = 1.0 if role == CHARGE else -1.0
    if isinstance(pref, QuadraticValuation):
        return feasible.project((pref.linear - s * p) / pref.curvature)
    if isinstance(pref, QuadraticCost) and pref.q > 0:
        # maximize -<c,x> - q/2 |x|^2 - s<p,x>
        return feasible.project((-pref.c - s * p) / pref.q)
    form = getattr(pref, "power_form", lambda: None)()
    if form is not None and role == CHARGE:
        # 1-d power valuation c x^k: stationary point (p / (c k))^(1/(k-1))
        lo, hi = effective_set(pref, feasible).box_bounds()
        c, k = form
        price = float(p[0])
        x = math.inf if price <= 0 else (price / (c * k)) ** (1.0 / (k - 1.0))
        return np.array([min(max(x, float(lo[0])), float(hi[0]))])
    return None


def _certificate(u, x, g, proj, hess):
    """Upper bound on ``||x - x*||`` from the natural residual.

    With local curvature ``sigma <= -eig(H) <= L`` and step ``1/L`` the
    projected-gradient residual ``r`` gives ``||x - x*|| <= 2 (L / sigma) ||r|| / L``.
    """
    ev = np.linalg.eigvalsh(-hess)
    sig, L = max(float(ev[0]), 1e-300), max(float(ev[-1]), 1e-300)
    r = x - proj(x + g / L)
    return 2.0 * float(np.linalg.norm(r)) / sig


def _newton_box(u, lo, hi, x, tol, max_iter):
    clip = lambda z: np.minimum(np.maximum(z, lo), hi)  # noqa: E731
    x = clip(x)
    cert = math.inf
    for it in range(max_iter):
        g = u.gradient(x)
        h = u.hessian(x)
        cert = _certificate(u, x, g, clip, h)
        if cert <= tol:
            return x, it, cert
        span = hi - lo
        slack = 1e-12 * np.maximum(span, 1.0)
        active = ((x <= lo + slack) & (g < 0)) | ((x >= hi - slack) & (g > 0))
        free = ~active
        d = np.zeros_like(x)
        if free.any():
            hf = -h[np.ix_(free, free)]
            try:
                d[free] = np.linalg.solve(hf, g[free])
            except np.linalg.LinAlgError:
                d[free] = g[free]
        u0 = u.value(x)
        t = 1.0
        while True:
            xn = clip(x + t * d)
            gain = float(g @ (xn - x))
            # below value resolution Armijo is noise; the local Newton step is trusted
            if t == 1.0 and gain <= 1e-13 * max(1.0, abs(u0)):
                break
            if u.value(xn) >= u0 + 1e-4 * gain:
                break
            t *= 0.5
            if t < 1e-30:
                raise SolverError("projected Newton line search stalled", cert)
        if np.array_equal(xn, x):
            # no representable progress left; accept if nearly certified
            if cert <= 10 * tol:
                return x, it, cert
            raise SolverError("projected Newton stagnated", cert)
        x = xn
    raise SolverError("best-response iteration cap exceeded", cert)


def _projected_gradient(u, feasible, x, tol, max_iter, sigma):
    x = feasible.project(x)
    step = 1.0
    cert = math.inf
    for it in range(max_iter):
        g = u.gradient(x)
        r = x - feasible.project(x + step * g)
        cert = float(np.linalg.norm(r)) / step * 2.0 / sigma
        if cert <= tol:
            return x, it, cert
        u0 = u.value(x)
        while True:
            xn = feasible.project(x + step * g)
            if u.value(xn) >= u0 + float(g @ (xn - x)) - float((xn - x) @ (xn - x)) / (2 * step):
                break
            step *= 0.5
            if step < 1e-30:
                raise SolverError("projected gradient line search stalled", cert)
        x = xn
        step *= 2.0
    raise SolverError("best-response iteration cap exceeded", cert)


def best_response_exact(pref, feasible: FeasibleSet, p, tol: float = 1e-9, *, x0=None,
                        max_iter: int = 10**6, role: str | None = None):
    """``argmax_{x in C} phi(x) - s <p, x>`` to Euclidean accuracy ``tol``."""
    role = role or role_of(pref)
    p = as_vector(p, feasible.dim, "price")
    cf = _closed_form(pref, p, role, feasible)
    if cf is not None:
        return cf
    box = effective_set(pref, feasible)
    u = _Utility(pref, p, role)
    start = box.center() if x0 is None else as_vector(x0, feasible.dim)
    bounds = box.box_bounds()
    if bounds is not None:
        x, _, _ = _newton_box(u, bounds[0], bounds[1], start, tol, max_iter)
        return x
    if isinstance(pref, Valuation):
        sigma = pref.strong_concavity_constant()
    else:
        sigma = pref.strong_convexity_constant()
    x, _, _ = _projected_gradient(u, box, start, tol, max_iter, sigma)
    return x


class FollowerOracle:
    """Stateful responder. ``respond`` is the only channel the leader uses."""

    def __init__(self, preference, feasible: FeasibleSet, mode=Exact(), seed: int = 0):
        if preference.dim != feasible.dim:
            raise UsageError("preference and feasible set dimensions differ")
        self.preference = preference
        self.feasible = feasible
        self.mode = mode
        self.role = role_of(preference)
        self.region = effective_set(preference, feasible)
        self.query_count = 0
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._warm = None

    @property
    def dim(self) -> int:
        return self.feasible.dim

    @property
    def sigma(self) -> float:
        if isinstance(self.preference, Valuation):
            return self.preference.strong_concavity_constant()
        return self.preference.strong_convexity_constant()

    def utility(self, p, x) -> float:
        return _Utility(self.preference, as_vector(p, self.dim), self.role).value(as_vector(x, self.dim))

    def best_response(self, p) -> np.ndarray:
        """Exact best response without touching the query counter.

        For verification and tests; leader algorithms call ``respond``.
        """
        x = best_response_exact(self.preference, self.feasible, p, self.mode.tol,
                                x0=self._warm, role=self.role)
        self._warm = x
        return x

    def respond(self, p) -> np.ndarray:
        p = as_vector(p, self.dim, "price")
        if np.any(p < 0):
            raise UsageError("leader actions must be nonnegative")
        self.query_count += 1
        x = self.best_response(p)
        if isinstance(self.mode, Noisy):
            return x + self.mode.nu * self._rng.standard_normal(self.dim)
        if isinstance(self.mode, Approximate) and self.mode.zeta > 0:
            return self._perturb(p, x)
        return x.copy()

    def _perturb(self, p, x):
        """Move away from ``x`` along a random direction losing <= zeta/2 utility."""
        u = _Utility(self.preference, p, self.role)
        d = self._rng.standard_normal(self.dim)
        d /= np.linalg.norm(d)
        u_star = u.value(x)
        budget = 0.5 * self.mode.zeta
        lo, hi = 0.0, self.feasible.diameter()
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            y = self.region.project(x + mid * d)
            if u_star - u.value(y) <= budget:
                lo = mid
            else:
                hi = mid
        return self.region.project(x + lo * d)
