"""Leader optimisers: zeroth-order search over follower actions.

Each ZOO query names a target follower action ``x``; an induction loop finds
a leader action ``p`` that makes the follower play (close to) ``x``; the
leader's observed payoff at that play is returned to ZOO as the evaluation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError
from .follower import Exact, FollowerOracle, Noisy
from .geometry import FeasibleSet, shrink
from .induce import (CHARGE, REWARD, InduceConfig, learn_lead, learn_price,
                     learn_price_ellipsoid, learn_price_noisy, price_bound)
from .preferences import CostFunction, Valuation
from .zoo import ApproxEvaluator, ZooConfig, maximize, round_set

A_CONST = math.log(2.0) / (2.0 * math.pi)


# ---------------------------------------------------------------- objectives


@dataclass(frozen=True, eq=False)
class ProfitObjective:
    """Producer books: revenue ``<p, x>`` minus production cost ``c(x)``."""

    cost: CostFunction

    def observe(self, action, response) -> float:
        return float(np.asarray(action) @ response) - self.cost.value(response)


@dataclass(frozen=True, eq=False)
class ProcurementObjective:
    """Principal utility ``<values - p, x>`` from the realised contribution."""

    values: np.ndarray

    def observe(self, action, response) -> float:
        return float((np.asarray(self.values) - np.asarray(action)) @ response)


@dataclass(frozen=True, eq=False)
class SocialCostObjective:
    """Negated social cost; depends only on the follower's flow."""

    game: object

    def observe(self, action, response) -> float:
        return -self.game.social_cost(response)


@dataclass
class StackelbergInstance:
    follower: object
    objective: object
    action_space: object
    lipschitz: float
    lambda_F: float
    gamma: float
    sigma: float
    holder_beta: float = 1.0
    lambda_cost: float = 0.0
    requires_interior: bool = False

    @property
    def dim(self) -> int:
        return self.follower.dim


def pricing_instance(valuation: Valuation, cost: CostFunction, feasible: FeasibleSet,
                     tol: float = 1e-10) -> StackelbergInstance:
    """Profit maximisation against a consumer with valuation ``valuation``."""
    oracle = FollowerOracle(valuation, feasible, Exact(tol))
    lam_val, beta = valuation.holder_constants()
    lam_cost = cost.lipschitz(valuation.H)
    # ZOO searches where the consumer can actually buy (above the valuation floor)
    return StackelbergInstance(oracle, ProfitObjective(cost), oracle.region, lam_val + lam_cost,
                               lam_val, feasible.norm_bound(), valuation.strong_concavity_constant(),
                               beta, lam_cost, requires_interior=True)


def procurement_instance(cost: CostFunction, values, feasible: FeasibleSet, nu: float = 0.0,
                         seed: int = 0) -> StackelbergInstance:
    """Principal-agent: the agent with cost ``cost`` supplies at contract prices."""
    values = np.asarray(values, dtype=float)
    mode = Noisy(nu) if nu > 0 else Exact(1e-10)
    oracle = FollowerOracle(cost, feasible, mode, seed=seed)
    lip = math.sqrt(feasible.dim) + 1.0
    return StackelbergInstance(oracle, ProcurementObjective(values), oracle.region, lip,
                               cost.lipschitz(1.0), feasible.norm_bound(),
                               cost.strong_convexity_constant(), 1.0, requires_interior=True)


# ---------------------------------------------------------------- schedules


@dataclass(frozen=True)
class OproSchedule:
    epsilon: float
    delta: float
    alpha_prime: float


def opro_schedule(alpha, d, gamma, holder_beta, lambda_val, lambda_cost) -> OproSchedule:
    lam = lambda_val + lambda_cost
    b = holder_beta
    eps = min((alpha / (lam * (d + 1 + (12.0 * gamma) ** b))) ** (1.0 / b), 1.0 / (12.0 * gamma))
    return OproSchedule(eps, 4.0 * eps, d * eps**b * lam)


def learn_opt_epsilon(alpha, d, lipschitz) -> float:
    return alpha / (lipschitz * (d + 1))


@dataclass(frozen=True)
class OproNoisySchedule:
    epsilon: float
    delta: float
    alpha_prime: float
    beta_prime: float
    s: float


def opro_noisy_schedule(alpha, d, gamma, beta, T) -> OproNoisySchedule:
    eps = alpha / (12.0 * gamma + 3.0 * d)
    beta_p = beta / (2.0 * T)
    return OproNoisySchedule(eps, 2.0 * eps, 3.0 * d * eps, beta_p, samples_needed(d, beta_p, eps))


def samples_needed(d, beta_prime, epsilon) -> float:
    """``s = 2 d ln(2 / beta') / (a eps^2)`` with ``a = ln 2 / (2 pi)``."""
    return 2.0 * d * math.log(2.0 / beta_prime) / (A_CONST * epsilon**2)


# ---------------------------------------------------------------- results


@dataclass
class QueryRecord:
    t: int
    target: np.ndarray
    leader_action: np.ndarray
    induced: np.ndarray
    distance: float
    observed: float
    queries: int
    cumulative_queries: int
    elapsed_ms: float = 0.0


@dataclass
class LeaderResult:
    leader_action: np.ndarray
    induced: np.ndarray
    achieved_objective: float
    total_follower_queries: int
    zoo_queries: int
    trace: list[QueryRecord]
    certified: bool
    target: np.ndarray
    schedule: dict = field(default_factory=dict)


class _Composer:
    """Runs induce-then-observe for each ZOO query and keeps the records."""

    def __init__(self, instance, induce, observe_samples=0, callback=None):
        self.instance = instance
        self.induce = induce
        self.samples = observe_samples
        self.callback = callback
        self.records: list[QueryRecord] = []
        self.queries = 0
        self.all_converged = True
        self._t0 = time.perf_counter()

    def evaluate(self, target, kind="query"):
        res = self.induce(np.asarray(target, dtype=float))
        if not self.samples:  # noisy loops cannot verify their own output
            self.all_converged &= bool(res.converged)
        used = res.queries
        if self.samples:
            obs = [self.instance.objective.observe(res.leader_action,
                                                   self.instance.follower.respond(res.leader_action))
                   for _ in range(self.samples)]
            value = float(np.mean(obs))
            used += self.samples
        else:
            value = self.instance.objective.observe(res.leader_action, res.induced)
        self.queries += used
        rec = QueryRecord(len(self.records) + 1, np.asarray(target, dtype=float),
                          res.leader_action, res.induced, res.distance, value, used, self.queries,
                          1e3 * (time.perf_counter() - self._t0))
        self.records.append(rec)
        if self.callback is not None:
            self.callback(rec)
        return value, res


def _require_promise(eval_error, promise, allow):
    if eval_error > promise * (1.0 + 1e-9) and not allow:
        raise ConfigError(f"evaluation error bound {eval_error:.3e} exceeds the ZOO promise "
                          f"{promise:.3e}; pass allow_non_certified to run anyway")


def _space_for(instance, delta):
    space = instance.action_space
    if instance.requires_interior and delta > 0:
        if not delta < 0.5:
            raise ConfigError(f"interior shrink delta={delta} must be below 1/2")
        space = shrink(space, delta)
    return space


def _finish(instance, comp, zres, space, certified, schedule):
    target = zres.x
    to_target = getattr(space, "to_target", None)
    tgt = to_target(target) if to_target else target
    value, res = comp.evaluate(tgt, "final")
    return LeaderResult(res.leader_action, res.induced, value, comp.queries, zres.calls,
                        comp.records, certified and zres.certified and comp.all_converged,
                        np.asarray(tgt), schedule)


def opro(instance: StackelbergInstance, alpha: float, *, epsilon_floor: float | None = None,
         allow_non_certified: bool = False, inducer: str = "subgradient",
         induce_T: int | None = 5000, zoo_method: str = "auto", zoo_budget: int | None = None, seed: int = 0, callback=None) -> LeaderResult:
    """Profit-maximising prices.

    The schedule's ``epsilon`` is often far below what a desk run can reach;
    ``epsilon_floor`` caps it from below and marks the result non-certified.
    ZOO keeps the schedule's accuracy target ``alpha'``. A capped ``epsilon``
    breaks ZOO's evaluation promise, so it is refused unless
    ``allow_non_certified`` is set.
    """
    if not alpha > 0:
        raise UsageError("alpha must be positive")
    d = instance.dim
    sch = opro_schedule(alpha, d, instance.gamma, instance.holder_beta, instance.lambda_F,
                        instance.lambda_cost)
    eps, certified = sch.epsilon, True
    if epsilon_floor is not None and eps < epsilon_floor:
        eps, certified = float(epsilon_floor), False
    _require_promise(instance.lipschitz * eps**instance.holder_beta, sch.alpha_prime / d,
                     allow_non_certified)
    delta = 4.0 * eps
    space = _space_for(instance, delta)
    oracle = instance.follower

    if inducer == "subgradient":
        cfg = InduceConfig(eps, CHARGE, instance.lambda_F, instance.gamma, instance.sigma,
                           instance.holder_beta, override_T=induce_T)

        def induce(x):
            return learn_price(oracle, x, cfg)
    elif inducer == "ellipsoid":
        def induce(x):
            return learn_price_ellipsoid(oracle, x, eps, lambda_val=instance.lambda_F,
                                         gamma=instance.gamma, sigma=instance.sigma,
                                         holder_beta=instance.holder_beta)
    else:
        raise ConfigError(f"unknown inducer {inducer!r}")

    comp = _Composer(instance, induce, callback=callback)
    ev = ApproxEvaluator(lambda x: comp.evaluate(x)[0], instance.lipschitz * eps**instance.holder_beta)
    zres = maximize(ev, space, ZooConfig(sch.alpha_prime, zoo_method, zoo_budget, seed,
                                         lipschitz=instance.lipschitz,
                                         exponent=instance.holder_beta))
    schedule = {"epsilon": eps, "epsilon_schedule": sch.epsilon, "delta": delta,
                "alpha_prime": sch.alpha_prime, "inducer": inducer}
    return _finish(instance, comp, zres, space, certified, schedule)


def learn_opt(instance: StackelbergInstance, alpha: float, *, epsilon_floor: float | None = None,
              allow_non_certified: bool = False,
              induce_T: int | None = 5000, zoo_method: str = "auto", zoo_budget: int | None = None,
              seed: int = 0, inducer=None, callback=None) -> LeaderResult:
    """Generic composition: ZOO over follower actions with LearnLead evaluations.

    ``inducer(target, eps)``, when given, replaces the default induction loop
    (the routing module plugs in its toll loops this way).
    """
    if not alpha > 0:
        raise UsageError("alpha must be positive")
    _, body = round_set(instance.action_space)
    d = max(body.dim, 1)
    eps_sched = learn_opt_epsilon(alpha, d, instance.lipschitz)
    eps, certified = eps_sched, True
    if epsilon_floor is not None and eps < epsilon_floor:
        eps, certified = float(epsilon_floor), False
    _require_promise(instance.lipschitz * eps, instance.lipschitz * eps_sched, allow_non_certified)
    delta = 4.0 * eps if instance.requires_interior else 0.0
    space = _space_for(instance, delta)
    oracle = instance.follower
    to_target = getattr(space, "to_target", None)
    direction = getattr(oracle, "role", CHARGE)
    lam_F = instance.lambda_F
    if instance.holder_beta < 1:
        # Hoelder valuations: leader actions are bounded by the inducing-price bound
        lam_F = price_bound(instance.lambda_F, instance.holder_beta, eps, instance.sigma)
    cfg = InduceConfig(eps, direction, lam_F, instance.gamma, instance.sigma,
                       override_T=induce_T)
    if inducer is None:
        def base(tgt):
            return learn_lead(oracle, tgt, cfg)
    else:
        def base(tgt):
            return inducer(tgt, eps)

    def induce(x):
        return base(to_target(x) if to_target else x)

    comp = _Composer(instance, induce, callback=callback)
    ev = ApproxEvaluator(lambda x: comp.evaluate(x)[0], instance.lipschitz * eps)
    zres = maximize(ev, space, ZooConfig(d * eps_sched * instance.lipschitz, zoo_method,
                                         zoo_budget, seed, lipschitz=instance.lipschitz,
                                         exponent=instance.holder_beta))
    target = zres.x
    value, res = comp.evaluate(target)
    tgt = to_target(target) if to_target else target
    schedule = {"epsilon": eps, "epsilon_schedule": eps_sched, "delta": delta,
                "alpha_prime": d * eps_sched * instance.lipschitz}
    return LeaderResult(res.leader_action, res.induced, value, comp.queries, zres.calls,
                        comp.records, certified and zres.certified and comp.all_converged,
                        np.asarray(tgt), schedule)


def opro_noisy(instance: StackelbergInstance, alpha: float, beta: float = 0.1, *,
               samples: int | None = 200, induce_T: int | None = 1000,
               epsilon_floor: float | None = None, allow_non_certified: bool = False,
               zoo_method: str = "auto", zoo_budget: int | None = None,
               seed: int = 0, callback=None) -> LeaderResult:
    """Contract prices under noisy contributions.

    ``samples`` overrides the schedule's averaging count ``s`` (reported in the
    schedule); pass ``None`` to use the formula value.
    """
    if not alpha > 0 or not 0 < beta < 0.5:
        raise UsageError("need alpha > 0 and 0 < beta < 1/2")
    d = instance.dim
    zcfg_budget = zoo_budget or 20000
    sch = opro_noisy_schedule(alpha, d, instance.gamma, beta, zcfg_budget)
    eps, certified = sch.epsilon, True
    if epsilon_floor is not None and eps < epsilon_floor:
        eps, certified = float(epsilon_floor), False
    _require_promise(3.0 * eps, sch.alpha_prime / d, allow_non_certified)
    s = math.ceil(sch.s) if samples is None else int(samples)
    if s < sch.s:
        certified = False
    delta = 2.0 * eps
    space = _space_for(instance, delta)
    oracle = instance.follower
    cfg = InduceConfig(eps, REWARD, instance.lambda_F, instance.gamma, max(instance.sigma, 1e-12),
                       override_T=induce_T)

    def induce(x):
        return learn_price_noisy(oracle, x, cfg, sch.beta_prime)

    comp = _Composer(instance, induce, observe_samples=s, callback=callback)
    ev = ApproxEvaluator(lambda x: comp.evaluate(x)[0], 3.0 * eps)
    zres = maximize(ev, space, ZooConfig(sch.alpha_prime, zoo_method, zoo_budget, seed,
                                         lipschitz=instance.lipschitz))
    schedule = {"epsilon": eps, "delta": delta, "alpha_prime": sch.alpha_prime,
                "beta_prime": sch.beta_prime, "s_schedule": sch.s, "s_used": s}
    return _finish(instance, comp, zres, space, certified, schedule)


def plan_epsilon(kind: str, instance: StackelbergInstance, alpha: float,
                 epsilon_floor: float | None = None) -> tuple[float, bool]:
    """Accuracy a run would use and whether it keeps the certificate.

    ``kind`` is ``"opro"``, ``"learn_opt"`` or ``"opro_noisy"``. Runs no
    queries; the CLI uses it to refuse non-certified configs up front.
    """
    if kind == "opro":
        eps = opro_schedule(alpha, instance.dim, instance.gamma, instance.holder_beta,
                            instance.lambda_F, instance.lambda_cost).epsilon
    elif kind == "learn_opt":
        _, body = round_set(instance.action_space)
        eps = learn_opt_epsilon(alpha, max(body.dim, 1), instance.lipschitz)
    elif kind == "opro_noisy":
        eps = alpha / (12.0 * instance.gamma + 3.0 * instance.dim)
    else:
        raise UsageError(f"unknown leader algorithm {kind!r}")
    if epsilon_floor is not None and eps < epsilon_floor:
        return float(epsilon_floor), False
    return eps, True
