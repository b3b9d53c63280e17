"""Zeroth-order convex minimisation from approximate evaluations.

Sets are first mapped affinely to a rounded body (boxes to the unit cube,
path-flow simplices to their isotropic embedding). Two optimisers work on the
rounded body:

GridRefine        lattice search that halves its window around the incumbent
                  each level; for ``d <= 3``.
SmoothedGradient  two-point sphere-sampling gradient estimates with
                  projected, AdaGrad-scaled descent and iterate averaging.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UnsupportedError
from .geometry import Ball, FeasibleSet, as_vector

GRID_REFINE = "grid_refine"
SMOOTHED_GRADIENT = "smoothed_gradient"
AUTO = "auto"


class ApproxEvaluator:
    """Wraps ``fn`` with a promised accuracy and a call counter."""

    def __init__(self, fn, accuracy: float = 0.0):
        self.fn = fn
        self.accuracy = float(accuracy)
        self.call_count = 0

    def query(self, x) -> float:
        self.call_count += 1
        return float(self.fn(x))

    __call__ = query


@dataclass(frozen=True)
class ZooConfig:
    accuracy: float
    method: str = AUTO
    budget: int | None = None
    seed: int = 0
    points_per_axis: int = 5
    # optional modulus of continuity |f(x) - f(y)| <= L |x - y|^exponent;
    # lets GridRefine stop once a window cannot vary by more than accuracy/2
    lipschitz: float | None = None
    exponent: float = 1.0

    def __post_init__(self):
        if not self.accuracy > 0:
            raise ConfigError("target accuracy must be positive")
        if self.method not in (AUTO, GRID_REFINE, SMOOTHED_GRADIENT):
            raise ConfigError(f"unknown ZOO method {self.method!r}")
        if self.points_per_axis < 3 or self.points_per_axis % 2 == 0:
            raise ConfigError("points_per_axis must be odd and >= 3")


@dataclass
class ZooResult:
    x: np.ndarray
    value: float
    certified: bool
    calls: int
    method: str
    history: list = field(default_factory=list)


# ---------------------------------------------------------------- rounding


@dataclass(frozen=True, eq=False)
class AffineMap:
    """``x = A z + b``."""

    A: np.ndarray
    b: np.ndarray

    def forward(self, z):
        return self.A @ z + self.b

    def inverse(self, x):
        return np.linalg.lstsq(self.A, np.asarray(x, dtype=float) - self.b, rcond=None)[0]


@dataclass(frozen=True, eq=False)
class RoundedBody:
    """Image of a set under ``map.inverse``, with ball sandwich ``r <= R``."""

    map: AffineMap
    dim: int
    center: np.ndarray
    inner_radius: float
    outer_radius: float
    lo: np.ndarray
    hi: np.ndarray
    _project: object

    @property
    def ratio(self) -> float:
        return self.outer_radius / self.inner_radius

    def project(self, z):
        return self._project(np.asarray(z, dtype=float))

    def contains(self, z, tol=1e-12):
        z = np.asarray(z, dtype=float)
        return float(np.linalg.norm(z - self.project(z))) <= tol


def _sum_zero_basis(n):
    """Orthonormal basis (n x (n-1)) of ``{y : sum y = 0}``."""
    M = np.eye(n)[:, : n - 1] - 1.0 / n
    Q, _ = np.linalg.qr(M)
    return Q[:, : n - 1]


def round_set(s) -> tuple[AffineMap, RoundedBody]:
    """Affine rounding for boxes, balls and path-flow simplices."""
    if isinstance(s, FeasibleSet):
        bounds = s.box_bounds()
        if bounds is not None:
            lo, hi = bounds
            span = hi - lo
            if np.any(span <= 0):
                raise UnsupportedError("degenerate box (zero width axis) cannot be rounded")
            d = s.dim
            amap = AffineMap(np.diag(span), lo.copy())
            body = RoundedBody(amap, d, np.full(d, 0.5), 0.5, 0.5 * math.sqrt(d), np.zeros(d),
                               np.ones(d), lambda z: np.clip(z, 0.0, 1.0))
            return amap, body
        if isinstance(s, Ball):
            d = s.dim
            amap = AffineMap(s.radius * np.eye(d), s.center())
            unit = Ball(np.zeros(d), 1.0)
            body = RoundedBody(amap, d, np.zeros(d), 1.0, 1.0, -np.ones(d), np.ones(d),
                               unit.project)
            return amap, body
        raise UnsupportedError(f"no rounding implemented for {type(s).__name__}")
    if hasattr(s, "blocks") and hasattr(s, "demands"):
        return _round_path_polytope(s)
    raise UnsupportedError(f"no rounding implemented for {type(s).__name__}")


def _round_path_polytope(poly):
    P = poly.dim
    cols, r_in, R2 = [], [], 0.0
    for b, k in zip(poly.blocks, poly.demands):
        n = b.stop - b.start
        if n == 1:
            continue
        U = _sum_zero_basis(n)
        block = np.zeros((P, n - 1))
        block[b, :] = k * U
        cols.append(block)
        r_in.append(1.0 / math.sqrt(n * (n - 1)))
        R2 += (n - 1) / n
    center_y = poly.center()
    if not cols:
        A = np.zeros((P, 0))
    else:
        A = np.hstack(cols)
    amap = AffineMap(A, center_y)
    dz = A.shape[1]
    # block scaling by k makes A^T A block-diagonal with k^2 I
    scale = np.array([np.sum(A[:, j] ** 2) for j in range(dz)])

    def to_z(y):
        return (A.T @ (y - center_y)) / scale if dz else np.zeros(0)

    def proj(z):
        return to_z(poly.project(A @ z + center_y))

    verts = []
    for b, k in zip(poly.blocks, poly.demands):
        for j in range(b.start, b.stop):
            y = center_y.copy()
            y[b] = 0.0
            y[j] = k
            verts.append(to_z(y))
    V = np.array(verts) if dz else np.zeros((1, 0))
    body = RoundedBody(amap, dz, np.zeros(dz), min(r_in) if r_in else 1.0,
                       math.sqrt(R2) if R2 else 1.0, V.min(axis=0), V.max(axis=0), proj)
    return amap, body


# ---------------------------------------------------------------- optimisers


def _default_budget(method, d, eps):
    if method == SMOOTHED_GRADIENT:
        return int(min(10 * max(d, 1) / eps**2, 1e6))
    return 20000


def minimize(evaluator, s, cfg: ZooConfig) -> ZooResult:
    """Approximate minimiser of ``evaluator`` over ``s``."""
    amap, body = round_set(s)
    method = cfg.method
    if method == AUTO:
        method = GRID_REFINE if body.dim <= 3 else SMOOTHED_GRADIENT
    if method == GRID_REFINE and body.dim > 3:
        raise ConfigError("GridRefine supports at most 3 dimensions")
    budget = cfg.budget or _default_budget(method, body.dim, cfg.accuracy)
    if body.dim == 0:
        x = amap.forward(np.zeros(0))
        v = evaluator.query(x)
        return ZooResult(x, v, True, 1, method, [(x, v)])
    eps_eval = getattr(evaluator, "accuracy", 0.0)
    if method == GRID_REFINE:
        return _grid_refine(evaluator, amap, body, cfg, budget, eps_eval)
    return _smoothed_gradient(evaluator, amap, body, cfg, budget, eps_eval)


def maximize(evaluator, s, cfg: ZooConfig) -> ZooResult:
    neg = ApproxEvaluator(lambda x: -evaluator.query(x), getattr(evaluator, "accuracy", 0.0))
    res = minimize(neg, s, cfg)
    res.value = -res.value
    res.history = [(x, -v) for x, v in res.history]
    return res


def _grid_refine(evaluator, amap, body, cfg, budget, eps_eval):
    d = body.dim
    n = cfg.points_per_axis
    offsets = np.array(list(itertools.product(np.linspace(-1.0, 1.0, n), repeat=d)))
    cache: dict = {}
    history = []
    calls = 0

    def f(z):
        nonlocal calls
        key = tuple(np.round(z, 13))
        if key not in cache:
            calls += 1
            x = amap.forward(z)
            v = evaluator.query(x)
            cache[key] = (z, v)
            history.append((x, v))
        return cache[key][1]

    center = 0.5 * (body.lo + body.hi)
    half = 0.5 * (body.hi - body.lo)
    best_z = body.project(center)
    best_v = f(best_z)
    certified = False
    # stop once the incumbent's window looks flat up to the target accuracy.
    # Evaluation error is not added to the threshold: for induced evaluations
    # the worst-case bound is far looser than the error actually seen, and a
    # noisy window still terminates once it shrinks below 1e-9.
    flat = 0.5 * cfg.accuracy
    while calls < budget:
        pts = [body.project(center + half * o) for o in offsets]
        vals = []
        for z in pts:
            if calls >= budget:
                break
            vals.append((f(z), tuple(z)))
        if not vals:
            break
        vmin = min(v for v, _ in vals)
        vmax = max(v for v, _ in vals)
        lvl_best = min(vals)[1]
        if vmin < best_v or tuple(best_z) == lvl_best:
            best_v, best_z = vmin, np.array(lvl_best)
        if len(vals) == len(pts) and (vmax - vmin <= flat or np.max(half) < 1e-9):
            certified = True
            break
        if cfg.lipschitz is not None:
            diam = float(np.linalg.norm(amap.A @ (2.0 * half)))
            if cfg.lipschitz * diam**cfg.exponent <= flat:
                certified = True
                break
        center = np.array(lvl_best)
        half = 0.5 * half
    x = amap.forward(best_z)
    return ZooResult(x, best_v, certified, calls, GRID_REFINE, history)


def _smoothed_gradient(evaluator, amap, body, cfg, budget, eps_eval):
    d = body.dim
    rng = np.random.default_rng(cfg.seed)
    z = body.center.copy()
    D = 2.0 * body.outer_radius
    mu0 = 0.5 * body.inner_radius
    mu_floor = min(mu0, 2.0 * math.sqrt(max(eps_eval, 1e-16) * D))
    sq = 0.0
    iters = max(1, budget // 2)
    acc = np.zeros(d)
    count = 0
    history = []
    calls = 0
    for t in range(1, iters + 1):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        mu = max(mu0 / t**0.25, mu_floor)
        zp, zm = body.project(z + mu * u), body.project(z - mu * u)
        fp = evaluator.query(amap.forward(zp))
        fm = evaluator.query(amap.forward(zm))
        calls += 2
        g = d * (fp - fm) / (2.0 * mu) * u
        sq += float(g @ g)
        if sq > 0:
            z = body.project(z - D / math.sqrt(sq) * g)
        if t > iters // 2:
            acc += z
            count += 1
    zbar = acc / max(count, 1)
    x = amap.forward(zbar)
    v = evaluator.query(x)
    calls += 1
    history.append((x, v))
    certified = budget >= _default_budget(SMOOTHED_GRADIENT, d, cfg.accuracy)
    return ZooResult(x, v, certified, calls, SMOOTHED_GRADIENT, history)
