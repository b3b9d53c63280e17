import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from revstack.errors import ModelError, UnsupportedError, UsageError
from revstack.routing import (Affine, EquilibriumOracle, PathFlowPolytope, Polynomial, RoutingGame,
                              braess_game, braess_social_cost, braess_tolls, dual_value,
                              enforce_target_flow, enumerate_equilibrium, is_feasible_flow,
                              learn_tolls_ellipsoid, load_game, optimize_tolls, parse_graph,
                              social_cost, two_link_game, wardrop_equilibrium, wardrop_path_gap)

import oracles


def random_game(seed, max_nodes=8):
    """Random DAG with a guaranteed chain, polynomial latencies with positive slope."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, max_nodes + 1))
    edges = [(i, i + 1) for i in range(n - 1)]
    for _ in range(int(rng.integers(1, n + 1))):
        i, j = sorted(rng.choice(n, 2, replace=False))
        edges.append((int(i), int(j)))
    spec = []
    for t, h in edges:
        coeffs = [float(rng.uniform(0, 1)), float(rng.uniform(0.2, 1.0))]
        if rng.random() < 0.4:
            coeffs.append(float(rng.uniform(0, 0.5)))
        spec.append((t, h, coeffs))
    if rng.random() < 0.5:
        comms = [(0, n - 1, 1.0)]
    else:
        comms = [(0, n - 1, 0.6), (int(rng.integers(0, n - 1)), n - 1, 0.4)]
    game = RoutingGame([(t, h, Polynomial(tuple(c))) for t, h, c in spec], comms)
    return game, spec, comms


# ---------------------------------------------------------------- equilibria

def test_two_link_equilibrium():
    game = two_link_game()
    flow = wardrop_equilibrium(game, tol=1e-8)
    assert np.allclose(flow.edge_flows, [2 / 3, 1 / 3], atol=1e-4)
    assert np.allclose(game.latency(flow.edge_flows), [2 / 3, 2 / 3], atol=1e-4)
    assert math.isclose(social_cost(game, flow), 2 / 3, abs_tol=1e-6)
    assert social_cost(game, np.zeros(2)) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1.5), st.floats(0, 1.5))
def test_tolled_two_link_matches_closed_form(t1, t2):
    flow = wardrop_equilibrium(two_link_game(), [t1, t2], tol=1e-8)
    assert np.allclose(flow.edge_flows, oracles.two_link_flow(t1, t2), atol=1e-7)


@pytest.mark.parametrize("seed", range(6))
def test_random_graphs_match_potential_oracle(seed):
    game, spec, comms = random_game(seed)
    flow = wardrop_equilibrium(game, tol=1e-7)
    ref, _, res = oracles.wardrop_by_potential(spec, comms)
    assert res.success
    assert np.allclose(flow.edge_flows, ref, atol=1e-4)
    gap = oracles.path_gap(spec, comms, flow.edge_flows, path_flows=flow.path_flows)
    assert gap <= 1e-4
    assert wardrop_path_gap(game, flow) <= 1e-4
    assert is_feasible_flow(game, flow.edge_flows, 1e-8)


def test_potential_descent_along_frank_wolfe():
    edges = [("s", "a", Polynomial((0.1, 1.0, 0.5))), ("s", "b", Affine(0.5, 0.3)),
             ("a", "t", Affine(0.7, 0.2)), ("b", "t", Polynomial((0.0, 0.4, 1.0))),
             ("a", "b", Affine(0.2, 0.05)), ("s", "t", Affine(2.0, 0.4))]
    game = RoutingGame(edges, [("s", "t", 1.0)])
    flow = wardrop_equilibrium(game, tol=1e-7, fw_iters=50)
    h = flow.potential_history
    assert len(h) > 2
    assert all(b <= a + 1e-12 for a, b in zip(h, h[1:]))


def test_unique_from_different_starts():
    game, _, _ = random_game(5)
    tol = 1e-6
    a = wardrop_equilibrium(game, tol=tol)
    starts = []
    for i in range(len(game.commodities)):
        plist = game.paths(i)
        k = game.commodities[i][2]
        starts.append({p: k / len(plist) for p in plist})
    b = wardrop_equilibrium(game, tol=tol, start=starts)
    assert np.linalg.norm(a.edge_flows - b.edge_flows) <= 2 * tol


@pytest.mark.parametrize("make", [two_link_game, braess_game])
def test_potential_is_sqrt_m_lipschitz(make):
    # every latency is at most 1 on unit flows, so the gradient norm is <= sqrt(m)
    game = make()
    poly = PathFlowPolytope(game)
    rng = np.random.default_rng(0)
    for _ in range(500):
        f = poly.to_target(rng.dirichlet(np.ones(poly.dim)))
        g = poly.to_target(rng.dirichlet(np.ones(poly.dim)))
        assert abs(game.potential(f) - game.potential(g)) <= math.sqrt(game.m) * np.linalg.norm(f - g) + 1e-12


def test_negative_tolls_rejected():
    with pytest.raises(UsageError):
        wardrop_equilibrium(two_link_game(), [-0.1, 0.0])
    with pytest.raises(UsageError):
        wardrop_equilibrium(two_link_game(), tol=0)


def test_equilibrium_oracle_counts():
    o = EquilibriumOracle(two_link_game(), 1e-9)
    o.respond([0.0, 0.0])
    o.best_response([0.1, 0.0])
    o.respond([0.2, 0.0])
    assert o.query_count == 2 and o.dim == 2


# ---------------------------------------------------------------- Braess

def test_braess_values():
    assert math.isclose(braess_social_cost(0, 0), 0.8, abs_tol=1e-6)
    assert math.isclose(braess_social_cost(1, 2), 0.7, abs_tol=1e-6)
    assert math.isclose(braess_social_cost(0.01, 0.02), 0.805, abs_tol=1e-6)
    mid = braess_social_cost(0.01, 0.02)
    assert mid > 0.99 * braess_social_cost(0, 0) + 0.01 * braess_social_cost(1, 2)


def test_braess_flow_patterns():
    g = braess_game()
    f0 = enumerate_equilibrium(g, braess_tolls(0, 0)).edge_flows
    assert np.allclose(f0, [1, 0, 1, 0, 0, 1])
    f1 = enumerate_equilibrium(g, braess_tolls(1, 2)).edge_flows
    assert np.allclose(f1, [0.5, 0.5, 0.5, 0.5, 0, 0])


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1.0), st.floats(0, 1.0))
def test_braess_matches_independent_enumeration(t1, t2):
    assert math.isclose(braess_social_cost(t1, t2), oracles.braess_social_cost(t1, t2), abs_tol=1e-9)


def test_braess_negative_toll():
    with pytest.raises(UsageError):
        braess_social_cost(-1, 0)


def test_enumeration_limits():
    with pytest.raises(UnsupportedError):
        enumerate_equilibrium(RoutingGame([("s", "t", Polynomial((0, 0, 1))), ("s", "t", Affine(1, 0))],
                                          [("s", "t", 1.0)]))


# ---------------------------------------------------------------- target flow

def test_target_already_induced():
    game = two_link_game()
    g0 = wardrop_equilibrium(game, tol=1e-10).edge_flows
    res = enforce_target_flow(game, g0, 1e-3)
    assert np.array_equal(res.leader_action, [0.0, 0.0])
    assert res.distance <= 1e-3 and res.queries == 1


def test_two_link_target_flow_and_duality():
    game = two_link_game()
    target = np.array([0.5, 0.5])
    delta = 1e-2
    res = enforce_target_flow(game, target, delta)
    tau = res.leader_action
    assert np.linalg.norm(oracles.two_link_flow(*tau) - target) <= delta
    assert abs((tau[0] - tau[1]) - 0.25) <= 1.5 * delta
    h = dual_value(game, tau, target)
    phi = game.potential(target)
    assert h <= phi + 1e-12
    assert phi <= h + delta**2 * game.sigma_min


def test_infeasible_target():
    with pytest.raises(ModelError):
        enforce_target_flow(two_link_game(), [0.7, 0.7], 1e-2)


def test_flat_network_rejected_for_target_flow():
    with pytest.raises(ModelError):
        enforce_target_flow(braess_game(), [1, 0, 1, 0, 0, 1], 1e-2)


def test_toll_ellipsoid_log_scaling():
    game = two_link_game()
    deltas = [1e-1, 1e-2, 1e-3, 1e-4]
    counts = []
    for d in deltas:
        res = learn_tolls_ellipsoid(game, [0.5, 0.5], d, tol=1e-12)
        assert res.distance <= d
        counts.append(res.queries)
    x = np.log(1 / np.array(deltas))
    slope, icpt = np.polyfit(x, counts, 1)
    pred = slope * x + icpt
    r2 = 1 - np.sum((counts - pred) ** 2) / np.sum((counts - np.mean(counts)) ** 2)
    assert r2 >= 0.95 and slope > 0


# ---------------------------------------------------------------- optimal tolls

def test_optimize_tolls_two_link():
    game = two_link_game()
    res = optimize_tolls(game, 0.02, inducer="ellipsoid")
    sc = oracles.two_link_social_cost(oracles.two_link_flow(*res.leader_action)[0])
    assert sc <= 0.625 + 0.02
    assert math.isclose(-res.achieved_objective, game.social_cost(res.induced))
    assert res.certified
    assert res.total_follower_queries == sum(r.queries for r in res.trace)


def test_optimize_tolls_braess_noncertified():
    game = braess_game()
    with pytest.raises(ModelError):
        optimize_tolls(game, 0.1)
    alpha = 0.1
    res = optimize_tolls(game, alpha, induce_T=100, zoo_budget=130, allow_non_certified=True)
    assert not res.certified and res.schedule["flat_latencies"]
    f = enumerate_equilibrium(game, res.leader_action).edge_flows
    assert game.social_cost(f) <= 0.7 + alpha


def test_optimize_tolls_unknown_inducer():
    with pytest.raises(UsageError):
        optimize_tolls(two_link_game(), 0.02, inducer="annealing")


# ---------------------------------------------------------------- model input

def test_parse_graph_round_trip():
    text = """
    # two parallel links
    s t affine 1 0
    s t poly 0.5 0.5   # l(x) = 0.5 + 0.5 x
    commodity s t 1
    """
    g = parse_graph(text)
    assert g.m == 2
    assert np.allclose(wardrop_equilibrium(g, tol=1e-8).edge_flows, [2 / 3, 1 / 3], atol=1e-6)


@pytest.mark.parametrize("text", [
    "s t cubic 1\ncommodity s t 1",
    "s t affine 1\ncommodity s t 1",
    "s t affine 1 0\ncommodity s t",
    "s t affine 1 0\ncommodity s u 1",
    "s t affine 1 0\nt s affine 1 0\ncommodity t u 1",
    "s t affine 1 0\ncommodity s t 0.5",
    "s t affine x 0\ncommodity s t 1",
    "s t affine -1 0\ncommodity s t 1",
])
def test_parse_graph_errors(text):
    with pytest.raises(ModelError):
        parse_graph(text)


def test_no_path_commodity():
    with pytest.raises(ModelError):
        RoutingGame([("a", "b", Affine(1, 0)), ("c", "d", Affine(1, 0))], [("a", "d", 1.0)])


def test_load_game(tmp_path):
    assert load_game("braess").m == 6
    p = tmp_path / "g.txt"
    p.write_text("s t affine 1 0\ns t affine 0.5 0.5\ncommodity s t 1\n")
    assert load_game("g.txt", tmp_path).m == 2
    with pytest.raises(ModelError):
        load_game("missing.txt", tmp_path)


def test_path_explosion_unsupported():
    edges = []
    for i in range(5):
        edges += [(i, i + 1, Affine(1, 0)), (i, i + 1, Affine(1, 0.1))]
    game = RoutingGame(edges, [(0, 5, 1.0)])
    with pytest.raises(UnsupportedError):
        PathFlowPolytope(game)
