import math

import numpy as np
import pytest

from revstack.errors import ConfigError, ContractViolation, NumericalError, UsageError
from revstack.follower import Approximate, Exact, FollowerOracle, Noisy
from revstack.geometry import Box, NonnegBall
from revstack.induce import (CHARGE, REWARD, Ellipsoid, InduceConfig, ellipsoid_step,
                             learn_lead, learn_lead_schedule, learn_pe_iterations, learn_price,
                             learn_price_ellipsoid, learn_price_noisy, learn_price_noisy_schedule,
                             learn_price_schedule, learn_te_iterations, learn_toll_ellipsoid,
                             price_bound, subgradient_induce, target_flow_schedule)
from revstack.preferences import CES, QuadraticCost, QuadraticValuation
from revstack.routing import EquilibriumOracle, two_link_game

import oracles


def ex1_oracle():
    return FollowerOracle(CES([1.0], 0.5), Box([0.0], [1.0]), Exact(1e-10))


def ex1_cfg(eps, **kw):
    v = CES([1.0], 0.5)
    lam, beta = v.holder_constants()
    return InduceConfig(eps, CHARGE, lam, 1.0, v.strong_concavity_constant(), beta, **kw)


# ---------------------------------------------------------------- schedules

def test_learn_price_schedule_example():
    s = learn_price_schedule(2, 1.0, 1.0, math.sqrt(2), 0.1, 0.25)
    assert s.L == 1.0
    assert math.isclose(s.T, 20_480_000, rel_tol=1e-9)
    assert math.isclose(s.eta, math.sqrt(2) * math.sqrt(2) / (1.0 * math.sqrt(2 * 20_480_000)))
    assert math.isclose(s.radius, math.sqrt(2))


def test_holder_price_bound():
    # L = lam^(1/b) (4 / (eps^2 sigma))^((1-b)/b) with b = 1/2: 4 * (4 / (0.01 * 0.25))
    assert math.isclose(price_bound(2.0, 0.5, 0.1, 0.25), 4.0 * 1600.0, rel_tol=1e-12)


def test_alternative_t_constant():
    a = learn_price_schedule(1, 1.0, 1.0, 1.0, 0.1, 1.0)
    b = learn_price_schedule(1, 1.0, 1.0, 1.0, 0.1, 1.0, t_constant=16.0)
    assert math.isclose(a.T, 2 * b.T)


def test_learn_lead_schedule_with_zeta():
    s = learn_lead_schedule(2, 1.5, 1.0, 0.1, 0.5, zeta=1e-4)
    expected = (16 * math.sqrt(4) * 1.5 * 1.0 / (0.01 * 0.5 - 4e-4)) ** 2
    assert math.isclose(s.T, expected, rel_tol=1e-12)
    with pytest.raises(ConfigError):
        learn_lead_schedule(2, 1.5, 1.0, 0.01, 0.5, zeta=1e-4)


def test_toll_and_ellipsoid_iteration_counts():
    s = target_flow_schedule(2, 0.1, 1.0)
    assert math.isclose(s.T, 16 * 8 / 1e-4)
    assert math.isclose(s.eta, 2 * 2**1.5 / math.sqrt(s.T))
    assert s.radius == 4.0
    assert math.isclose(learn_pe_iterations(2, 1.0, 1.0, 0.1, 0.5), 400 * math.log(40))
    assert math.isclose(learn_te_iterations(3, 0.01, 0.5), 900 * math.log(600))
    n = learn_price_noisy_schedule(2, 1.0, 0.1, 1.0)
    assert math.isclose(n.T, 2 / 1e-4)


@pytest.mark.parametrize("kw", [dict(epsilon=0), dict(epsilon=0.1, direction="up"),
                                dict(epsilon=0.1, sigma=0), dict(epsilon=0.1, holder_beta=1.5),
                                dict(epsilon=0.01, zeta=1e-3), dict(epsilon=0.1, override_T=0)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        InduceConfig(**kw)


def test_resolve_uses_sigma_step_with_override():
    cfg = InduceConfig(0.1, sigma=0.3, override_T=100)
    assert cfg.resolve(learn_price_schedule(1, 1, 1, 1, 0.1, 0.3)) == (100, 0.3)
    cfg2 = InduceConfig(0.1, sigma=0.3, override_T=None)
    s = learn_price_schedule(1, 1, 1, 1, 0.1, 0.3)
    assert cfg2.resolve(s) == (s.iterations, s.eta)


# ---------------------------------------------------------------- learn_price

def test_learn_price_example_one():
    o = ex1_oracle()
    res = learn_price(o, [1 / 16], ex1_cfg(0.01))
    assert res.converged and res.distance <= 0.01
    assert abs(oracles.ex1_demand(res.leader_action[0]) - 1 / 16) <= 0.01
    assert abs(res.leader_action[0] - 2.0) <= 0.2
    assert res.queries == len(res.trace) == o.query_count


def test_target_at_free_optimum_returns_zero_price():
    v = QuadraticValuation([0.3, 0.2], 1.0)
    o = FollowerOracle(v, Box([0, 0], [1, 1]))
    res = learn_price(o, o.best_response([0.0, 0.0]), InduceConfig(1e-3, lambda_F=2.0))
    assert np.array_equal(res.leader_action, [0.0, 0.0])
    assert res.distance == 0.0 and res.queries == 1


def test_quadratic_inverse_price():
    a = np.array([0.9, 0.7])
    v = QuadraticValuation(a, 1.0)
    o = FollowerOracle(v, Box([0, 0], [1, 1]))
    lam, _ = v.holder_constants()
    xh = np.array([0.4, 0.3])
    eps = 1e-3
    res = learn_price(o, xh, InduceConfig(eps, lambda_F=lam, gamma=math.sqrt(2), sigma=1.0))
    assert res.distance <= eps
    # closed-form inverse price a - q x_hat, perturbed by at most q * eps
    assert np.linalg.norm(res.leader_action - (a - xh)) <= eps * 2.0


def test_target_outside_feasible_set():
    with pytest.raises(ContractViolation):
        learn_price(ex1_oracle(), [1.5], ex1_cfg(0.01))


def test_iterates_stay_in_price_space():
    v = QuadraticValuation([0.9, 0.7], 1.0)
    o = FollowerOracle(v, Box([0, 0], [1, 1]))
    lam, _ = v.holder_constants()
    res = learn_price(o, [0.1, 0.8], InduceConfig(1e-4, lambda_F=lam, override_T=400))
    radius = res.info["schedule"].radius
    for row in res.trace:
        assert np.all(row.leader_action >= 0)
        assert np.linalg.norm(row.leader_action) <= radius + 1e-12


def test_budget_exhaustion_reports_distance():
    res = learn_price(ex1_oracle(), [1 / 16], ex1_cfg(1e-9, override_T=20))
    assert not res.converged
    assert res.distance > 1e-9 and res.iterations == 20
    assert res.trace[-1].kind == "final"


def test_learn_lead_matches_learn_price_when_lipschitz():
    v = QuadraticValuation([0.9, 0.7], 1.0)
    lam, _ = v.holder_constants()
    cfg = InduceConfig(1e-3, lambda_F=lam, gamma=math.sqrt(2))
    a = learn_price(FollowerOracle(v, Box([0, 0], [1, 1])), [0.5, 0.2], cfg)
    b = learn_lead(FollowerOracle(v, Box([0, 0], [1, 1])), [0.5, 0.2], cfg)
    assert np.array_equal(a.leader_action, b.leader_action)
    assert [r.distance for r in a.trace] == [r.distance for r in b.trace]


def test_learn_lead_tolerates_approximate_responses():
    v = QuadraticValuation([0.5, 0.4], 0.25)
    o = FollowerOracle(v, Box([0, 0], [1, 1]), Approximate(1e-5), seed=1)
    lam, _ = v.holder_constants()
    xh = np.array([0.4, 0.6])
    res = learn_lead(o, xh, InduceConfig(0.05, lambda_F=lam, gamma=math.sqrt(2), sigma=0.25,
                                         zeta=1e-5))
    assert res.converged
    assert np.linalg.norm(o.best_response(res.leader_action) - xh) <= 0.05


def test_subgradient_correctness_on_quadratic_dual():
    # g(p) = max_x v(x) - <p, x - x_hat>; closed form through the clipped argmax
    a, q = np.array([0.9, 0.7]), 1.0
    xh = np.array([0.4, 0.3])

    def xstar(p):
        return np.clip((a - p) / q, 0, 1)

    def g(p):
        x = xstar(p)
        return float(a @ x - 0.5 * q * x @ x - p @ (x - xh))

    rng = np.random.default_rng(0)
    for _ in range(500):
        p, pp = rng.uniform(0, 2, 2), rng.uniform(0, 2, 2)
        assert g(pp) >= g(p) + (xh - xstar(p)) @ (pp - p) - 1e-8


def test_regret_of_logged_trace():
    a = np.array([0.8, 0.6])
    v = QuadraticValuation(a, 1.0)
    o = FollowerOracle(v, Box([0, 0], [1, 1]))
    xh = np.array([0.3, 0.2])
    lam, _ = v.holder_constants()
    gamma, d, T = math.sqrt(2), 2, 500
    G, D = gamma * math.sqrt(2), math.sqrt(d) * lam
    res = subgradient_induce(o.respond, xh, NonnegBall(D, d), T, D / (G * math.sqrt(T)),
                             early_exit=False)
    rows = [r for r in res.trace if r.kind == "iterate"]
    P = np.array([r.leader_action for r in rows])
    grads = np.array([xh - r.response for r in rows])
    S = grads.sum(axis=0)
    best = -D * np.linalg.norm(np.maximum(-S, 0.0))
    regret = (np.einsum("ij,ij->", P, grads) - best) / T
    assert regret <= G * D / math.sqrt(T) * 1.1


# ---------------------------------------------------------------- noisy loop

def test_noisy_loop_with_zero_noise_is_deterministic_loop():
    cost = QuadraticCost([0.0, 0.0], 1.0)
    xh = np.array([0.3, 0.5])
    cfg = InduceConfig(0.05, REWARD, 1.0, math.sqrt(2), 1.0, override_T=300)
    noisy = learn_price_noisy(FollowerOracle(cost, Box([0, 0], [1, 1]), Noisy(0.0)), xh, cfg)
    plain = subgradient_induce(FollowerOracle(cost, Box([0, 0], [1, 1])).respond, xh,
                               NonnegBall(math.sqrt(2), 2), 300, 1.0, direction=REWARD,
                               epsilon=0.05, early_exit=False)
    assert np.array_equal(noisy.leader_action, plain.leader_action)


def test_noisy_loop_small_battery():
    cost = QuadraticCost([0.0, 0.0], 1.0)
    xh = np.array([0.3, 0.5])
    cfg = InduceConfig(0.05, REWARD, 1.0, math.sqrt(2), 1.0, override_T=1000)
    hits = 0
    for seed in range(5):
        o = FollowerOracle(cost, Box([0, 0], [1, 1]), Noisy(0.05), seed)
        res = learn_price_noisy(o, xh, cfg)
        hits += np.linalg.norm(o.best_response(res.leader_action) - xh) <= 0.05
        assert res.queries == 1001
    assert hits >= 4


def test_noisy_confidence_validated():
    o = FollowerOracle(QuadraticCost([0.0], 1.0), Box([0], [1]), Noisy(0.1))
    with pytest.raises(UsageError):
        learn_price_noisy(o, [0.5], InduceConfig(0.1, REWARD), confidence=1.5)


# ---------------------------------------------------------------- ellipsoid

def test_ellipsoid_step_unit_ball():
    E = Ellipsoid.ball([0.0, 0.0], 1.0)
    E2 = ellipsoid_step(E, [1.0, 0.0])
    assert np.allclose(E2.center, [-1 / 3, 0.0])
    assert np.allclose(E2.shape, np.diag([4 / 9, 4 / 3]))
    ratio = E2.volume_factor() / E.volume_factor()
    assert math.isclose(ratio, (2 / 3) * (4 / 3) ** 0.5, rel_tol=1e-12)
    assert math.isclose(ratio, 0.7698, abs_tol=1e-4)


def test_ellipsoid_half_containment():
    rng = np.random.default_rng(0)
    A = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 0.5]])
    E = Ellipsoid(np.array([0.5, -0.2, 0.1]), A)
    w = np.array([0.3, -1.0, 0.4])
    E2 = ellipsoid_step(E, w)
    Lc = np.linalg.cholesky(A)
    kept = 0
    while kept < 1000:
        u = rng.standard_normal(3)
        u *= rng.random() ** (1 / 3) / np.linalg.norm(u)
        x = E.center + Lc @ u
        if w @ (x - E.center) <= 0:
            kept += 1
            assert E2.contains(x, 1e-9)


def test_ellipsoid_one_dimensional_halving():
    E = Ellipsoid.ball([0.0], 1.0)
    E2 = ellipsoid_step(E, [1.0])
    assert np.allclose(E2.center, [-0.5]) and np.allclose(E2.shape, [[0.25]])
    E3 = ellipsoid_step(E2, [-1.0])
    assert np.allclose(E3.center, [-0.25])


def test_ellipsoid_errors():
    with pytest.raises(UsageError):
        ellipsoid_step(Ellipsoid.ball([0.0, 0.0], 1.0), [0.0, 0.0])
    with pytest.raises(NumericalError):
        Ellipsoid([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(NumericalError):
        Ellipsoid([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])


def test_learn_price_ellipsoid_example_one():
    o = ex1_oracle()
    v = CES([1.0], 0.5)
    lam, beta = v.holder_constants()
    res = learn_price_ellipsoid(o, [1 / 16], 1e-3, lambda_val=lam, gamma=1.0,
                                sigma=v.strong_concavity_constant(), holder_beta=beta)
    assert res.converged
    assert abs(oracles.ex1_demand(res.leader_action[0]) - 1 / 16) <= 1e-3
    assert res.queries <= res.info["T"]
    sub = learn_price(ex1_oracle(), [1 / 16], ex1_cfg(1e-3))
    assert res.queries < sub.queries


def test_learn_toll_ellipsoid_two_link():
    game = two_link_game()
    oracle = EquilibriumOracle(game, 1e-10)
    res = learn_toll_ellipsoid(oracle, [0.5, 0.5], 1e-3, sigma=game.sigma_min)
    assert res.distance <= 1e-3
    tau = res.leader_action
    # analytic inducing tolls: any tau with tau1 - tau2 = 0.25
    assert abs((tau[0] - tau[1]) - 0.25) <= 1e-2
    assert np.linalg.norm(oracles.two_link_flow(*tau) - [0.5, 0.5]) <= 1e-3 + 1e-9
