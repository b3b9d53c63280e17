"""Learning a leader action that induces a target follower action.

All loops minimise a Lagrangian dual whose subgradient at ``p`` is the gap
between the target and the observed response, so they only need the
revealed action. Two leader roles exist:

``charge``  prices or tolls; a higher entry lowers that coordinate of the
            response, update ``p - eta (target - x)``.
``reward``  contract prices; a higher entry raises it, update
            ``p + eta (target - x)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractViolation, NumericalError, UsageError
from .geometry import NonnegBall, as_vector

log = logging.getLogger(__name__)

CHARGE = "charge"
REWARD = "reward"


# ---------------------------------------------------------------- schedules


@dataclass(frozen=True)
class Schedule:
    L: float
    radius: float
    T: float
    eta: float

    @property
    def iterations(self) -> int:
        return max(1, math.ceil(self.T - 1e-9))


def price_bound(lambda_val, holder_beta, epsilon, sigma) -> float:
    """``L = lambda^(1/beta) (4 / (eps^2 sigma))^((1 - beta) / beta)``."""
    b = holder_beta
    return lambda_val ** (1.0 / b) * (4.0 / (epsilon**2 * sigma)) ** ((1.0 - b) / b)


def learn_price_schedule(d, lambda_val, holder_beta, gamma, epsilon, sigma, t_constant=32.0):
    L = price_bound(lambda_val, holder_beta, epsilon, sigma)
    T = t_constant * d * L**2 * gamma**2 / (epsilon**4 * sigma**2)
    eta = math.sqrt(2.0) * gamma / (L * math.sqrt(d * T))
    return Schedule(L, math.sqrt(d) * L, T, eta)


def learn_lead_schedule(d, lambda_F, gamma, epsilon, sigma, zeta=0.0):
    if zeta > 0 and not epsilon > 2.0 * math.sqrt(2.0 * zeta / sigma):
        raise ConfigError(f"epsilon={epsilon} must exceed 2 sqrt(2 zeta / sigma) for zeta={zeta}")
    T = (16.0 * math.sqrt(2.0 * d) * lambda_F * gamma / (epsilon**2 * sigma - 4.0 * zeta)) ** 2
    eta = math.sqrt(2.0) * gamma / (math.sqrt(d) * lambda_F * math.sqrt(T))
    return Schedule(lambda_F, math.sqrt(d) * lambda_F, T, eta)


def learn_price_noisy_schedule(d, gamma, epsilon, sigma, constant=1.0):
    T = constant * d * gamma**2 / (epsilon**4 * sigma**2)
    eta = math.sqrt(2.0) * gamma / (math.sqrt(d) * math.sqrt(T))
    return Schedule(1.0, math.sqrt(d), T, eta)


def target_flow_schedule(m, delta, sigma):
    """Toll loop: radius ``2m``, ``T = 16 m^3 / (delta^4 sigma^2)``, ``eta = 2 m^1.5 / sqrt(T)``."""
    T = 16.0 * m**3 / (delta**4 * sigma**2)
    eta = 2.0 * m**1.5 / math.sqrt(T)
    return Schedule(2.0 * m, 2.0 * m, T, eta)


def learn_pe_iterations(d, lambda_val, gamma, epsilon, sigma) -> float:
    return 100.0 * d**2 * math.log(d * lambda_val * gamma / (epsilon * sigma))


def learn_te_iterations(m, epsilon, sigma) -> float:
    return 100.0 * m**2 * math.log(m / (epsilon * sigma))


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class InduceConfig:
    epsilon: float
    direction: str = CHARGE
    lambda_F: float = 1.0
    gamma: float = 1.0
    sigma: float = 1.0
    holder_beta: float = 1.0
    zeta: float = 0.0
    override_T: int | None = 5000
    override_eta: float | None = None
    check_every: int = 50
    early_exit: bool = True
    t_constant: float = 32.0
    noisy_constant: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.direction not in (CHARGE, REWARD):
            raise ConfigError(f"unknown direction {self.direction!r}")
        if not (self.sigma > 0 and self.gamma > 0 and self.lambda_F > 0):
            raise ConfigError("sigma, gamma and lambda_F must be positive")
        if not 0 < self.holder_beta <= 1:
            raise ConfigError("holder_beta must lie in (0, 1]")
        if self.zeta < 0:
            raise ConfigError("zeta must be nonnegative")
        if self.zeta > 0 and not self.epsilon > 2.0 * math.sqrt(2.0 * self.zeta / self.sigma):
            raise ConfigError("epsilon must exceed 2 sqrt(2 zeta / sigma)")
        for name in ("override_T", "override_eta"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")

    def resolve(self, schedule: Schedule) -> tuple[int, float]:
        """Iteration budget and step actually used.

        Without overrides the theoretical values apply. With only ``override_T``
        the step defaults to ``sigma``: the dual has a (1/sigma)-Lipschitz
        gradient, so this is the classical safe step for smooth descent.
        """
        T = schedule.iterations if self.override_T is None else int(self.override_T)
        if self.override_eta is not None:
            eta = float(self.override_eta)
        elif self.override_T is None:
            eta = schedule.eta
        else:
            eta = self.sigma
        return T, eta


@dataclass
class TraceRow:
    iteration: int
    leader_action: np.ndarray
    response: np.ndarray
    distance: float
    kind: str = "iterate"


@dataclass
class InduceResult:
    leader_action: np.ndarray
    induced: np.ndarray
    distance: float
    queries: int
    trace: list[TraceRow]
    converged: bool
    best_action: np.ndarray | None = None
    best_distance: float = math.inf
    iterations: int = 0
    eta: float = float("nan")
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------- subgradient loop


def _sign(direction):
    return 1.0 if direction == CHARGE else -1.0


def subgradient_induce(respond, target, space: NonnegBall, T: int, eta: float, *,
                       direction=CHARGE, epsilon=0.0, check_every=50, early_exit=True):
    """Projected subgradient descent on the dual; outputs the averaged action.

    ``respond`` is the follower channel. Every call is one query and one trace
    row, so ``queries == len(trace)``. With ``early_exit`` the running average
    is tested every ``check_every`` iterations (and at the first iterate) and
    the loop stops once it induces ``target`` within ``epsilon``.
    """
    target = as_vector(target, space.dim, "target")
    s = _sign(direction)
    p = np.zeros(space.dim)
    total = np.zeros(space.dim)
    trace: list[TraceRow] = []
    best, best_d = None, math.inf

    def query(a, t, kind):
        x = np.asarray(respond(a), dtype=float)
        d = float(np.linalg.norm(target - x))
        trace.append(TraceRow(t, a.copy(), x, d, kind))
        return x, d

    for t in range(1, T + 1):
        x, d = query(p, t, "iterate")
        if d < best_d:
            best, best_d = p.copy(), d
        total += p
        if early_exit and (t == 1 or t % check_every == 0):
            avg = total / t
            if t == 1:
                cx, cd = x, d
            else:
                cx, cd = query(avg, t, "check")
            if cd <= epsilon:
                return InduceResult(avg, cx, cd, len(trace), trace, True, best, best_d, t, eta)
        p = space._project(p - s * eta * (target - x))
    avg = total / T
    x, d = query(avg, T, "final")
    ok = d <= epsilon
    if early_exit and not ok:
        log.warning("induction budget exhausted: distance %.3e > epsilon %.3e", d, epsilon)
    return InduceResult(avg, x, d, len(trace), trace, ok, best, best_d, T, eta)


def _check_target(oracle, target):
    target = as_vector(target, oracle.dim, "target")
    if not oracle.feasible.contains(target, 1e-9):
        raise ContractViolation("target lies outside the follower's feasible set")
    return target


def learn_price(oracle, target, cfg: InduceConfig) -> InduceResult:
    """Prices inducing ``target`` from a Hölder valuation (``lambda_F`` = lambda_val)."""
    target = _check_target(oracle, target)
    d = oracle.dim
    sch = learn_price_schedule(d, cfg.lambda_F, cfg.holder_beta, cfg.gamma, cfg.epsilon,
                               cfg.sigma, cfg.t_constant)
    T, eta = cfg.resolve(sch)
    res = subgradient_induce(oracle.respond, target, NonnegBall(sch.radius, d), T, eta,
                             direction=cfg.direction, epsilon=cfg.epsilon,
                             check_every=cfg.check_every, early_exit=cfg.early_exit)
    res.info.update(schedule=sch)
    return res


def learn_lead(oracle, target, cfg: InduceConfig) -> InduceResult:
    """General-follower variant; tolerates zeta-approximate responses."""
    target = as_vector(target, oracle.dim, "target")
    if hasattr(oracle, "feasible"):
        target = _check_target(oracle, target)
    d = oracle.dim
    sch = learn_lead_schedule(d, cfg.lambda_F, cfg.gamma, cfg.epsilon, cfg.sigma, cfg.zeta)
    T, eta = cfg.resolve(sch)
    res = subgradient_induce(oracle.respond, target, NonnegBall(sch.radius, d), T, eta,
                             direction=cfg.direction, epsilon=cfg.epsilon,
                             check_every=cfg.check_every, early_exit=cfg.early_exit)
    res.info.update(schedule=sch)
    return res


def learn_price_noisy(oracle, target, cfg: InduceConfig, confidence: float = 0.1) -> InduceResult:
    """Stochastic-gradient variant for noisy contributions (reward role).

    The leader cannot verify a noisy response, so there is no early exit; the
    final query reports one noisy observation at the averaged price.
    """
    if not 0 < confidence < 1:
        raise UsageError("confidence must lie in (0, 1)")
    target = _check_target(oracle, target)
    d = oracle.dim
    sch = learn_price_noisy_schedule(d, cfg.gamma, cfg.epsilon, cfg.sigma, cfg.noisy_constant)
    T, eta = cfg.resolve(sch)
    res = subgradient_induce(oracle.respond, target, NonnegBall(sch.radius, d), T, eta,
                             direction=cfg.direction, epsilon=cfg.epsilon, early_exit=False)
    res.info.update(schedule=sch, confidence=confidence)
    return res


# ---------------------------------------------------------------- ellipsoid


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """``{x : (x - c)^T A^{-1} (x - c) <= 1}``."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        c = as_vector(self.center, name="center")
        A = np.atleast_2d(np.asarray(self.shape, dtype=float))
        if A.shape != (c.shape[0], c.shape[0]):
            raise UsageError("ellipsoid shape must be d x d")
        if np.max(np.abs(A - A.T)) > 1e-10 * max(1.0, np.max(np.abs(A))):
            raise NumericalError("ellipsoid shape is not symmetric")
        try:
            np.linalg.cholesky(A)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("ellipsoid shape is not positive definite") from exc
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", A)

    @classmethod
    def ball(cls, center, radius):
        c = as_vector(center, name="center")
        return cls(c, radius**2 * np.eye(c.shape[0]))

    @property
    def dim(self):
        return self.center.shape[0]

    def contains(self, x, tol=1e-9) -> bool:
        r = as_vector(x, self.dim) - self.center
        return float(r @ np.linalg.solve(self.shape, r)) <= 1.0 + tol

    def volume_factor(self) -> float:
        """``sqrt(det A)``; proportional to the volume."""
        return math.sqrt(float(np.linalg.det(self.shape)))


def ellipsoid_step(E: Ellipsoid, w, max_condition: float = 1e12) -> Ellipsoid:
    """Central cut keeping ``{x in E : <w, x - c> <= 0}``."""
    w = as_vector(w, E.dim, "cut")
    if not np.any(w):
        raise UsageError("cut direction must be nonzero")
    A = E.shape
    d = E.dim
    Aw = A @ w
    q = float(w @ Aw)
    if not q > 0:
        raise NumericalError("ellipsoid collapsed along the cut direction", q)
    b = Aw / math.sqrt(q)
    center = E.center - b / (d + 1)
    if d == 1:
        shape = A / 4.0
    else:
        shape = d * d / (d * d - 1.0) * (A - 2.0 / (d + 1) * np.outer(b, b))
        shape = 0.5 * (shape + shape.T)
        ev = np.linalg.eigvalsh(shape)
        if ev[0] <= 0 or ev[-1] / ev[0] > max_condition:
            raise NumericalError("ellipsoid shape became ill-conditioned",
                                 float(ev[-1] / ev[0]) if ev[0] > 0 else math.inf)
    return Ellipsoid(center, shape)


def _collapsed(E: Ellipsoid) -> bool:
    scale = 1e-15 * max(1.0, float(np.max(np.abs(E.center))))
    return float(np.max(np.diag(E.shape))) <= scale * scale


def ellipsoid_induce(respond, target, space: NonnegBall, T: int, *, direction=CHARGE,
                     epsilon=0.0, early_exit=True) -> InduceResult:
    """Ellipsoid method on the dual, started from the ball circumscribing ``space``.

    Centres outside ``space`` are cut with its separating hyperplane without a
    query. The centre with the smallest observed distance is returned.
    """
    target = as_vector(target, space.dim, "target")
    s = _sign(direction)
    E = Ellipsoid.ball(np.zeros(space.dim), space.radius)
    trace: list[TraceRow] = []
    best, best_x, best_d = None, None, math.inf
    cuts = 0
    t = 0
    while t < T:
        c = E.center
        if not space.contains(c, 0.0):
            E = ellipsoid_step(E, space.separating_hyperplane(c))
            cuts += 1
            if cuts > 100 * max(T, 1):
                raise ContractViolation("ellipsoid never found a feasible centre")
            continue
        t += 1
        x = np.asarray(respond(c), dtype=float)
        d = float(np.linalg.norm(target - x))
        trace.append(TraceRow(t, c.copy(), x, d))
        if d < best_d:
            best, best_x, best_d = c.copy(), x, d
        if (early_exit and d <= epsilon) or d == 0.0:
            break
        if _collapsed(E):
            break  # centre resolution exhausted; further cuts are rounding noise
        E = ellipsoid_step(E, s * (target - x))
    if best is None:
        raise ContractViolation("no feasible ellipsoid centre was queried")
    return InduceResult(best, best_x, best_d, len(trace), trace, best_d <= epsilon,
                        best, best_d, t, info={"infeasible_cuts": cuts})


def learn_price_ellipsoid(oracle, target, epsilon, *, lambda_val, gamma, sigma,
                          holder_beta=1.0, max_iter=None) -> InduceResult:
    target = _check_target(oracle, target)
    d = oracle.dim
    L = price_bound(lambda_val, holder_beta, epsilon, sigma)
    T = learn_pe_iterations(d, lambda_val, gamma, epsilon, sigma)
    n = max(1, math.ceil(T)) if max_iter is None else int(max_iter)
    res = ellipsoid_induce(oracle.respond, target, NonnegBall(math.sqrt(d) * L, d), n,
                           direction=oracle.role, epsilon=epsilon)
    res.info.update(T=T, radius=math.sqrt(d) * L)
    return res


def learn_toll_ellipsoid(oracle, target, epsilon, *, sigma, max_iter=None) -> InduceResult:
    """Tolls for a target edge flow; ``oracle`` is an equilibrium oracle."""
    m = oracle.dim
    target = as_vector(target, m, "target")
    T = learn_te_iterations(m, epsilon, sigma)
    n = max(1, math.ceil(T)) if max_iter is None else int(max_iter)
    res = ellipsoid_induce(oracle.respond, target, NonnegBall(float(m), m), n,
                           direction=CHARGE, epsilon=epsilon)
    res.info.update(T=T, radius=float(m))
    return res
