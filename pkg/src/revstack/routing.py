"""Nonatomic routing games, Wardrop equilibria and tolls.

Equilibria minimise the (tolled) potential ``sum_e int_0^{f_e} l_e + <tau, f>``.
The solver runs Frank-Wolfe with exact line search and a Dijkstra
all-or-nothing oracle, then finishes with path-based gradient projection
(Newton-like flow shifts onto the current shortest path), which reaches the
tight gaps the toll loops need. The certificate is the Frank-Wolfe gap.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelError, SolverError, UnsupportedError, UsageError
from .geometry import as_vector
from .induce import (CHARGE, InduceResult, ellipsoid_induce, learn_te_iterations,
                     subgradient_induce, target_flow_schedule)
from .geometry import NonnegBall


# ---------------------------------------------------------------- latencies


@dataclass(frozen=True)
class Polynomial:
    """``l(x) = sum_k coeffs[k] x^k``."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if not c or not all(math.isfinite(v) for v in c):
            raise UsageError("polynomial latency needs finite coefficients")
        object.__setattr__(self, "coeffs", c)

    def coefficients(self):
        return self.coeffs


@dataclass(frozen=True)
class Affine:
    """``l(x) = a x + b``."""

    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise UsageError("affine latency needs a >= 0 and b >= 0")

    def coefficients(self):
        return (float(self.b), float(self.a))


def _horner(C, x):
    out = np.zeros_like(x)
    for k in range(C.shape[1] - 1, -1, -1):
        out = out * x + C[:, k]
    return out


# ---------------------------------------------------------------- game


@dataclass
class Flow:
    edge_flows: np.ndarray
    path_flows: list = field(default_factory=list)  # per commodity: {edge tuple: flow}
    gap: float = 0.0
    iterations: int = 0
    potential_history: list = field(default_factory=list)

    def path_vector(self, paths):
        """Path flows ordered like ``paths`` (list per commodity)."""
        out = []
        for i, plist in enumerate(paths):
            pf = self.path_flows[i] if i < len(self.path_flows) else {}
            out.extend(pf.get(tuple(p), 0.0) for p in plist)
        return np.array(out)


class RoutingGame:
    """Directed graph with latency per edge and unit total demand."""

    def __init__(self, edges, commodities, name: str = "game"):
        self.name = name
        self.edges = [(t, h, lat) for t, h, lat in edges]
        if not self.edges:
            raise ModelError("a routing game needs at least one edge")
        self.commodities = [(s, t, float(k)) for s, t, k in commodities]
        if not self.commodities:
            raise ModelError("a routing game needs at least one commodity")
        nodes = []
        for t, h, _ in self.edges:
            for n in (t, h):
                if n not in nodes:
                    nodes.append(n)
        self.nodes = nodes
        self.index = {n: i for i, n in enumerate(nodes)}
        self.m = len(self.edges)
        coeffs = [lat.coefficients() for _, _, lat in self.edges]
        K = max(len(c) for c in coeffs)
        self.C = np.zeros((self.m, K))
        for e, c in enumerate(coeffs):
            self.C[e, : len(c)] = c
        self.dC = self.C[:, 1:] * np.arange(1, K) if K > 1 else np.zeros((self.m, 1))
        if self.dC.shape[1] == 0:
            self.dC = np.zeros((self.m, 1))
        self.iC = np.hstack([np.zeros((self.m, 1)), self.C / np.arange(1, K + 1)])
        self.out = [[] for _ in nodes]
        for e, (t, h, _) in enumerate(self.edges):
            self.out[self.index[t]].append((e, self.index[h]))
        total = 0.0
        for s, t, k in self.commodities:
            if not k > 0:
                raise ModelError("commodity demands must be positive")
            if s not in self.index or t not in self.index:
                raise ModelError(f"commodity endpoint not in graph: {s}->{t}")
            cost, _ = self.shortest_path(np.ones(self.m), s, t)
            if not math.isfinite(cost):
                raise ModelError(f"commodity {s}->{t} has no path")
            total += k
        if abs(total - 1.0) > 1e-9:
            raise ModelError(f"total demand must be 1, got {total}")
        if np.any(self.latency(np.zeros(self.m)) < 0):
            raise ModelError("latencies must be nonnegative")

    @property
    def dim(self):
        return self.m

    @property
    def total_demand(self):
        return sum(k for _, _, k in self.commodities)

    def latency(self, f):
        return _horner(self.C, np.asarray(f, dtype=float))

    def latency_derivative(self, f):
        return _horner(self.dC, np.asarray(f, dtype=float))

    def potential(self, f, tolls=None):
        f = np.asarray(f, dtype=float)
        val = float(np.sum(_horner(self.iC, f)))
        if tolls is not None:
            val += float(np.asarray(tolls) @ f)
        return val

    def social_cost(self, f):
        f = np.asarray(f, dtype=float)
        return float(f @ self.latency(f))

    @property
    def sigma_min(self) -> float:
        """Smallest latency derivative over ``[0, total demand]``."""
        xs = np.linspace(0.0, self.total_demand, 201)
        return float(min(np.min(_horner(self.dC[e : e + 1], xs)) for e in range(self.m)))

    def social_cost_lipschitz(self) -> float:
        """Bound on ``||grad Psi||`` over the flow box, Psi = sum f l(f)."""
        xs = np.linspace(0.0, self.total_demand, 201)
        per = [np.max(np.abs(_horner(self.C[e : e + 1], xs) + xs * _horner(self.dC[e : e + 1], xs)))
               for e in range(self.m)]
        return float(np.linalg.norm(per))

    def shortest_path(self, costs, source, sink):
        """Dijkstra on nonnegative edge costs; returns ``(cost, edge list)``."""
        s, t = self.index[source], self.index[sink]
        n = len(self.nodes)
        dist = [math.inf] * n
        pred = [-1] * n
        dist[s] = 0.0
        heap = [(0.0, s)]
        while heap:
            du, u = heapq.heappop(heap)
            if du > dist[u]:
                continue
            if u == t:
                break
            for e, v in self.out[u]:
                nd = du + costs[e]
                if nd < dist[v]:
                    dist[v] = nd
                    pred[v] = e
                    heapq.heappush(heap, (nd, v))
        if not math.isfinite(dist[t]):
            return math.inf, []
        path = []
        v = t
        while v != s:
            e = pred[v]
            path.append(e)
            v = self.index[self.edges[e][0]]
        return dist[t], path[::-1]

    def paths(self, commodity: int, limit: int | None = None):
        """Simple paths of a commodity in registration (depth-first) order."""
        src, dst, _ = self.commodities[commodity]
        s, t = self.index[src], self.index[dst]
        found = []

        def dfs(u, seen, acc):
            if limit is not None and len(found) > limit:
                return
            if u == t:
                found.append(tuple(acc))
                return
            for e, v in self.out[u]:
                if v not in seen:
                    seen.add(v)
                    acc.append(e)
                    dfs(v, seen, acc)
                    acc.pop()
                    seen.discard(v)

        dfs(s, {s}, [])
        if limit is not None and len(found) > limit:
            raise UnsupportedError(f"commodity {commodity} has more than {limit} paths")
        return found

    def edge_flow_of(self, path_flows):
        f = np.zeros(self.m)
        for pf in path_flows:
            for p, v in pf.items():
                for e in p:
                    f[e] += v
        return f


def _check_tolls(game, tolls):
    if tolls is None:
        return np.zeros(game.m)
    t = as_vector(tolls, game.m, "tolls")
    if np.any(t < 0):
        raise UsageError("tolls must be nonnegative")
    return t


def fw_gap(game, f, tolls):
    """``<c(f), f> - sum_i k_i dist_i(c(f))``: Frank-Wolfe duality gap."""
    c = game.latency(f) + tolls
    lower = 0.0
    for s, t, k in game.commodities:
        d, _ = game.shortest_path(c, s, t)
        lower += k * d
    return float(c @ f) - lower


def _line_search(game, f, d, tolls):
    """Minimise the tolled potential on ``f + s d``, ``s in [0, 1]``."""
    def slope(s):
        return float((game.latency(f + s * d) + tolls) @ d)

    s1 = slope(1.0)
    if s1 <= 0:
        return 1.0
    s0 = slope(0.0)
    if s0 >= 0:
        return 0.0
    if game.C.shape[1] <= 2:
        # affine latencies: the slope is linear in s
        return s0 / (s0 - s1)
    lo, hi = 0.0, 1.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def wardrop_equilibrium(game: RoutingGame, tolls=None, tol: float = 1e-7, *, start=None,
                        max_iter: int = 100000, fw_iters: int = 30) -> Flow:
    """Tolled Wardrop equilibrium with Frank-Wolfe gap <= ``sigma_min tol^2 / 2``.

    By strong convexity of the potential the returned edge flow is within
    ``tol`` of the unique equilibrium. When ``sigma_min`` is zero the gap target
    falls back to ``tol^2`` and uniqueness is not claimed.
    """
    tau = _check_tolls(game, tolls)
    if not tol > 0:
        raise UsageError("tol must be positive")
    sigma = game.sigma_min
    target = 0.5 * sigma * tol * tol if sigma > 0 else tol * tol
    # double-precision floor: gaps of a few 1e-14 are rounding noise
    target = max(target, 1e-13)

    if start is not None:
        pflows = [dict(pf) for pf in (start.path_flows if isinstance(start, Flow) else start)]
    else:
        c0 = game.latency(np.zeros(game.m)) + tau
        pflows = []
        for s, t, k in game.commodities:
            _, p = game.shortest_path(c0, s, t)
            pflows.append({tuple(p): k})
    f = game.edge_flow_of(pflows)
    history = [game.potential(f, tau)]
    gap = fw_gap(game, f, tau)
    it = 0

    # Frank-Wolfe phase
    while gap > target and it < fw_iters:
        it += 1
        c = game.latency(f) + tau
        aon = []
        for s, t, k in game.commodities:
            _, p = game.shortest_path(c, s, t)
            aon.append(tuple(p))
        y = game.edge_flow_of([{p: k} for p, (_, _, k) in zip(aon, game.commodities)])
        step = _line_search(game, f, y - f, tau)
        if step == 0.0:
            break
        for i, p in enumerate(aon):
            pf = pflows[i]
            for q in pf:
                pf[q] *= 1.0 - step
            pf[p] = pf.get(p, 0.0) + step * game.commodities[i][2]
        f = game.edge_flow_of(pflows)
        history.append(game.potential(f, tau))
        gap = fw_gap(game, f, tau)

    # path-based gradient projection
    while gap > target:
        it += 1
        if it > max_iter:
            raise SolverError("equilibrium solver did not reach its gap target", gap)
        for i, (s, t, _) in enumerate(game.commodities):
            pf = pflows[i]
            c = game.latency(f) + tau
            _, sp = game.shortest_path(c, s, t)
            sp = tuple(sp)
            pf.setdefault(sp, 0.0)
            sp_set = set(sp)
            for p in list(pf):
                if p == sp or pf[p] <= 0:
                    continue
                c = game.latency(f) + tau
                excess = sum(c[e] for e in p) - sum(c[e] for e in sp)
                if excess <= 0:
                    continue
                sym = [e for e in p if e not in sp_set] + [e for e in sp if e not in set(p)]
                denom = float(np.sum(game.latency_derivative(f)[sym]))
                move = pf[p] if denom <= 0 else min(pf[p], excess / denom)
                pf[p] -= move
                pf[sp] += move
                for e in p:
                    f[e] -= move
                for e in sp:
                    f[e] += move
            for p in [q for q, v in pf.items() if v <= 0 and q != sp]:
                del pf[p]
        f = game.edge_flow_of(pflows)
        new_gap = fw_gap(game, f, tau)
        if new_gap >= gap and new_gap <= 100 * target:
            gap = new_gap
            break  # rounding floor reached
        gap = new_gap
    return Flow(f, pflows, gap, it, history)


def wardrop_path_gap(game, flow: Flow, tolls=None, used: float = 1e-9) -> float:
    """Max over used paths of tolled latency minus the commodity's shortest path."""
    tau = _check_tolls(game, tolls)
    c = game.latency(flow.edge_flows) + tau
    worst = 0.0
    for i, (s, t, _) in enumerate(game.commodities):
        dmin, _ = game.shortest_path(c, s, t)
        for p, v in flow.path_flows[i].items():
            if v > used:
                worst = max(worst, sum(c[e] for e in p) - dmin)
    return worst


def potential(game, f, tolls=None):
    return game.potential(f, tolls)


def social_cost(game, flow) -> float:
    f = flow.edge_flows if isinstance(flow, Flow) else flow
    return game.social_cost(f)


class EquilibriumOracle:
    """Follower channel for tolls: returns the tolled equilibrium edge flow."""

    role = CHARGE

    def __init__(self, game: RoutingGame, tol: float = 1e-7):
        self.game = game
        self.tol = tol
        self.query_count = 0
        self._warm = None

    @property
    def dim(self):
        return self.game.m

    def best_response(self, tolls) -> np.ndarray:
        flow = wardrop_equilibrium(self.game, tolls, self.tol, start=self._warm)
        self._warm = flow
        return flow.edge_flows.copy()

    def respond(self, tolls) -> np.ndarray:
        self.query_count += 1
        return self.best_response(tolls)


# ---------------------------------------------------------------- feasibility


def is_feasible_flow(game: RoutingGame, g, tol: float = 1e-9) -> bool:
    """Whether ``g`` decomposes into per-commodity flows meeting the demands."""
    from scipy.optimize import linprog

    g = as_vector(g, game.m, "flow")
    if np.any(g < -tol):
        return False
    n, m, K = len(game.nodes), game.m, len(game.commodities)
    A_eq, b_eq = [], []
    for i, (s, t, k) in enumerate(game.commodities):
        for v in range(n):
            row = np.zeros(m * K)
            for e, (a, b, _) in enumerate(game.edges):
                if game.index[a] == v:
                    row[i * m + e] += 1.0
                if game.index[b] == v:
                    row[i * m + e] -= 1.0
            A_eq.append(row)
            b_eq.append(k if v == game.index[s] else (-k if v == game.index[t] else 0.0))
    for e in range(m):
        row = np.zeros(m * K)
        row[e::m] = 1.0
        A_eq.append(row)
        b_eq.append(g[e])
    # minimise the total violation with slack variables on every equality
    A = np.array(A_eq)
    r = A.shape[0]
    A_full = np.hstack([A, np.eye(r), -np.eye(r)])
    cost = np.concatenate([np.zeros(m * K), np.ones(2 * r)])
    res = linprog(cost, A_eq=A_full, b_eq=np.array(b_eq), bounds=(0, None), method="highs")
    return bool(res.status == 0 and res.fun <= tol * max(1, r))


# ---------------------------------------------------------------- target flow


def dual_value(game, tolls, target, tol=1e-10) -> float:
    """``h(tau) = min_f Phi(f) + <tau, f - target>`` via the equilibrium oracle."""
    tau = _check_tolls(game, tolls)
    f = wardrop_equilibrium(game, tau, tol).edge_flows
    return game.potential(f) + float(tau @ (f - np.asarray(target, dtype=float)))


def enforce_target_flow(game: RoutingGame, target, delta: float, *, sigma: float | None = None,
                        override_T: int | None = 5000, override_eta: float | None = None,
                        check_every: int = 50, tol: float | None = None,
                        oracle: EquilibriumOracle | None = None) -> InduceResult:
    """Tolls ``tau`` with ``||f*(tau) - target|| <= delta``.

    Toll ascent ``tau + eta (f*(tau) - target)`` on ``{tau >= 0, ||tau|| <= 2m}``
    with averaged output. ``override_T`` and the default step ``sigma`` mirror
    the pricing loops.
    """
    target = as_vector(target, game.m, "target")
    if not delta > 0:
        raise UsageError("delta must be positive")
    if not is_feasible_flow(game, target, 1e-7):
        raise ModelError("target is not a feasible flow")
    sigma = game.sigma_min if sigma is None else sigma
    if not sigma > 0:
        raise ModelError("target-flow enforcement needs latencies with positive slope")
    oracle = oracle or EquilibriumOracle(game, tol or min(1e-7, delta * 1e-3))
    sch = target_flow_schedule(game.m, delta, sigma)
    T = sch.iterations if override_T is None else int(override_T)
    if override_eta is not None:
        eta = override_eta
    else:
        eta = sch.eta if override_T is None else sigma
    res = subgradient_induce(oracle.respond, target, NonnegBall(sch.radius, game.m), T, eta,
                             direction=CHARGE, epsilon=delta, check_every=check_every)
    res.info.update(schedule=sch, oracle_calls=oracle.query_count)
    return res


def learn_tolls_ellipsoid(game: RoutingGame, target, epsilon: float, *, sigma=None,
                          tol=None, max_iter=None, oracle=None) -> InduceResult:
    """Ellipsoid counterpart of :func:`enforce_target_flow`."""
    sigma = game.sigma_min if sigma is None else sigma
    if not sigma > 0:
        raise ModelError("toll learning needs latencies with positive slope")
    oracle = oracle or EquilibriumOracle(game, tol or min(1e-8, epsilon * 1e-3))
    target = as_vector(target, game.m, "target")
    n = learn_te_iterations(game.m, epsilon, sigma)
    T = max(1, math.ceil(n)) if max_iter is None else max_iter
    res = ellipsoid_induce(oracle.respond, target, NonnegBall(float(game.m), game.m), T,
                           direction=CHARGE, epsilon=epsilon)
    res.info.update(T=n)
    return res


# ---------------------------------------------------------------- path polytope


class PathFlowPolytope:
    """Path flows of every commodity: a product of scaled simplices."""

    def __init__(self, game: RoutingGame, max_paths: int = 16):
        self.game = game
        self.paths = [game.paths(i, limit=max_paths) for i in range(len(game.commodities))]
        total = sum(len(p) for p in self.paths)
        if total > max_paths:
            raise UnsupportedError(f"{total} paths exceed the limit of {max_paths}")
        self.demands = [k for _, _, k in game.commodities]
        self.blocks = []
        start = 0
        for plist in self.paths:
            self.blocks.append(slice(start, start + len(plist)))
            start += len(plist)
        self.dim = start
        self.incidence = np.zeros((game.m, self.dim))
        j = 0
        for plist in self.paths:
            for p in plist:
                self.incidence[list(p), j] = 1.0
                j += 1

    @property
    def dimension(self):
        return self.dim

    def to_target(self, y) -> np.ndarray:
        return self.incidence @ as_vector(y, self.dim)

    def center(self):
        y = np.zeros(self.dim)
        for b, k in zip(self.blocks, self.demands):
            y[b] = k / (b.stop - b.start)
        return y

    def project(self, y):
        y = as_vector(y, self.dim)
        out = np.zeros_like(y)
        for b, k in zip(self.blocks, self.demands):
            out[b] = _project_simplex(y[b], k)
        return out

    def contains(self, y, tol=0.0):
        y = as_vector(y, self.dim)
        return float(np.linalg.norm(y - self.project(y))) <= tol

    def path_flows(self, y):
        y = as_vector(y, self.dim)
        out = []
        for b, plist in zip(self.blocks, self.paths):
            out.append({p: float(v) for p, v in zip(plist, y[b])})
        return out


def positive_slope_floor(game: RoutingGame) -> float:
    """Smallest latency slope over the edges whose latency is not constant."""
    xs = np.linspace(0.0, game.total_demand, 201)
    mins = [float(np.min(_horner(game.dC[e : e + 1], xs))) for e in range(game.m)]
    pos = [v for v in mins if v > 0]
    if not pos:
        raise ModelError("every latency is constant; tolls cannot steer the flow")
    return min(pos)


def toll_instance(game: RoutingGame, max_paths: int = 16, *, allow_flat: bool = False):
    """Leader view of toll setting: ZOO over path flows, objective -Psi.

    With constant-latency edges (``sigma_min = 0``) the potential is not
    strongly convex and the inducement guarantee lapses; ``allow_flat`` then
    uses the smallest positive slope as the step curvature instead.
    """
    from .leader import SocialCostObjective, StackelbergInstance

    poly = PathFlowPolytope(game, max_paths)
    sigma = game.sigma_min
    if not sigma > 0:
        if not allow_flat:
            raise ModelError("toll optimisation needs latencies with positive slope "
                             "(allow non-certified runs to proceed without)")
        sigma = positive_slope_floor(game)
    oracle = EquilibriumOracle(game, 1e-9)
    # Lipschitz in path flows: edge-flow bound times the incidence operator norm
    lip = game.social_cost_lipschitz() * float(np.linalg.norm(poly.incidence, 2))
    return StackelbergInstance(oracle, SocialCostObjective(game), poly, lip, 1.0,
                               2.0 * game.m, sigma)


def optimize_tolls(game: RoutingGame, alpha: float, *, inducer: str = "subgradient",
                   epsilon_floor: float | None = None, allow_non_certified: bool = False,
                   induce_T: int | None = 5000, zoo_method: str = "auto",
                   zoo_budget: int | None = None, seed: int = 0, max_paths: int = 16,
                   callback=None):
    """Tolls whose equilibrium has near-minimal social cost.

    ZOO searches the path-flow polytope; each query is turned into an edge
    flow target and enforced with tolls; the observed social cost is the
    evaluation. Networks with constant latencies run only as non-certified.
    """
    from .leader import learn_opt

    inst = toll_instance(game, max_paths, allow_flat=allow_non_certified)
    flat = not game.sigma_min > 0
    oracle, lip, sigma = inst.follower, inst.lipschitz, inst.sigma
    if inducer == "subgradient":
        def induce(target, eps):
            return enforce_target_flow(game, target, eps, sigma=sigma, override_T=induce_T,
                                       oracle=oracle)
    elif inducer == "ellipsoid":
        def induce(target, eps):
            return learn_tolls_ellipsoid(game, target, eps, sigma=sigma, oracle=oracle)
    else:
        raise UsageError(f"unknown inducer {inducer!r}")
    res = learn_opt(inst, alpha, epsilon_floor=epsilon_floor,
                    allow_non_certified=allow_non_certified, zoo_method=zoo_method,
                    zoo_budget=zoo_budget, seed=seed, inducer=induce, callback=callback)
    res.schedule.update(inducer=inducer, lipschitz=lip, sigma=sigma, flat_latencies=flat)
    if flat:
        res.certified = False
    return res


def _project_simplex(v, total):
    """Euclidean projection onto ``{x >= 0, sum x = total}``."""
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    idx = np.arange(1, n + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


# ---------------------------------------------------------------- enumeration


def enumerate_equilibrium(game: RoutingGame, tolls=None, eps: float = 1e-12) -> Flow:
    """Exact equilibrium of a single-commodity affine game by support enumeration.

    Supports are tried smallest first, then in lexicographic order of path
    registration; the first support whose equal-cost system has a nonnegative
    solution with no cheaper unused path is returned. Handles constant
    latencies where the potential is not strictly convex.
    """
    if len(game.commodities) != 1:
        raise UnsupportedError("support enumeration handles one commodity")
    if game.C.shape[1] > 2 and np.any(game.C[:, 2:] != 0):
        raise UnsupportedError("support enumeration needs affine latencies")
    tau = _check_tolls(game, tolls)
    paths = game.paths(0, limit=16)
    k = game.commodities[0][2]
    A = np.zeros((game.m, len(paths)))
    for j, p in enumerate(paths):
        A[list(p), j] = 1.0
    a = game.C[:, 1] if game.C.shape[1] > 1 else np.zeros(game.m)
    b = game.C[:, 0] + tau
    M = A.T @ (a[:, None] * A)
    r = A.T @ b
    P = len(paths)
    for size in range(1, P + 1):
        for S in itertools.combinations(range(P), size):
            S = list(S)
            n = len(S)
            K = np.zeros((n + 1, n + 1))
            K[:n, :n] = M[np.ix_(S, S)]
            K[:n, n] = -1.0
            K[n, :n] = 1.0
            rhs = np.concatenate([-r[S], [k]])
            if np.linalg.matrix_rank(K) < n + 1:
                continue
            sol = np.linalg.solve(K, rhs)
            y_s, c = sol[:n], sol[n]
            if np.any(y_s < -eps):
                continue
            y = np.zeros(P)
            y[S] = np.maximum(y_s, 0.0)
            costs = M @ y + r
            if np.all(costs >= c - 1e-10):
                f = A @ y
                return Flow(f, [{paths[j]: float(y[j]) for j in range(P) if y[j] > 0}])
    raise SolverError("no equilibrium support found", math.nan)


# ---------------------------------------------------------------- instances


def two_link_game() -> RoutingGame:
    """``l1(x) = x`` and ``l2(x) = 0.5 + 0.5 x`` in parallel, unit demand."""
    return RoutingGame([("s", "t", Affine(1.0, 0.0)), ("s", "t", Affine(0.5, 0.5))],
                       [("s", "t", 1.0)], name="two_link")


BRAESS_TOLLED_EDGES = (4, 5)


def braess_game() -> RoutingGame:
    """Braess network with two parallel A->B links (left costs 1/200)."""
    edges = [
        ("S", "A", Affine(0.4, 0.0)),
        ("S", "B", Affine(0.0, 0.5)),
        ("B", "T", Affine(0.4, 0.0)),
        ("A", "T", Affine(0.0, 0.5)),
        ("A", "B", Affine(0.0, 0.005)),
        ("A", "B", Affine(0.0, 0.0)),
    ]
    return RoutingGame(edges, [("S", "T", 1.0)], name="braess")


def braess_tolls(tau1: float, tau2: float) -> np.ndarray:
    t = np.zeros(6)
    t[list(BRAESS_TOLLED_EDGES)] = (tau1, tau2)
    return t


def braess_social_cost(tau1: float, tau2: float) -> float:
    if tau1 < 0 or tau2 < 0:
        raise UsageError("tolls must be nonnegative")
    g = braess_game()
    return g.social_cost(enumerate_equilibrium(g, braess_tolls(tau1, tau2)).edge_flows)


BUILTIN_GAMES = {"two_link": two_link_game, "braess": braess_game}


def parse_graph(text: str, name: str = "graph") -> RoutingGame:
    """Parse the edge-list format.

    One edge per line ``tail head variant params...`` with variants
    ``affine a b`` and ``poly c0 c1 ...``; commodities as
    ``commodity source sink demand``. ``#`` starts a comment.
    """
    edges, comms = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "commodity":
                if len(tok) != 4:
                    raise ValueError("expected 'commodity source sink demand'")
                comms.append((tok[1], tok[2], float(tok[3])))
                continue
            if len(tok) < 3:
                raise ValueError("expected 'tail head variant params...'")
            tail, head, kind, params = tok[0], tok[1], tok[2], [float(v) for v in tok[3:]]
            if kind == "affine":
                if len(params) != 2:
                    raise ValueError("affine takes 'a b'")
                lat = Affine(*params)
            elif kind == "poly":
                lat = Polynomial(tuple(params))
            else:
                raise ValueError(f"unknown latency variant {kind!r}")
        except (ValueError, UsageError) as exc:
            raise ModelError(f"line {lineno}: {exc}") from None
        edges.append((tail, head, lat))
    return RoutingGame(edges, comms, name=name)


def load_game(spec: str, base_dir: Path | None = None) -> RoutingGame:
    """Built-in instance by name, or a graph file path."""
    if spec in BUILTIN_GAMES:
        return BUILTIN_GAMES[spec]()
    path = Path(spec)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ModelError(f"unknown graph {spec!r}: not a built-in name or readable file")
    return parse_graph(path.read_text(), name=path.stem)
