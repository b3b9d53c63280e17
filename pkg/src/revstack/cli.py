"""Config-driven experiment runner.

``revstack run CONFIG`` executes every (scenario, seed) cell and writes one
trace CSV per cell plus ``summary.json``. ``revstack verify CONFIG --action
a,b,...`` replays the follower at a fixed leader action.

Exit codes: 0 success, 1 a cell failed (partial traces kept, failure marker
row appended), 2 invalid config or arguments (nothing written).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import leader, routing
from .errors import ConfigError, ModelError, RevstackError, UsageError
from .follower import FollowerOracle, Noisy
from .geometry import Box
from .preferences import CES, CobbDouglas, LinearCost, QuadraticCost, QuadraticValuation

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUT_ENV = "REVSTACK_OUT"
DEFAULT_OUT = "revstack_out"
HEADER = ("scenario,seed,iteration,leader_action_norm,distance_to_target,objective_value,"
          "cumulative_queries,wall_clock_ms")
FAILED = "FAILED"

SCENARIOS = ("pricing", "pricing_ellipsoid", "stackelberg_general", "routing_target_flow",
             "routing_optimal_tolls", "principal_agent", "braess_scan")

# ---------------------------------------------------------------- schema

_num = (int, float)
_vec = "vector"
_vecs = "vectors"

SECTIONS = {
    "experiment": {"scenario": str, "seeds": "ints", "out": str, "name": str},
    "valuation": {"kind": str, "weights": _vec, "rho": _num, "beta": _num, "H": _num,
                  "floor_frac": _num, "exponents": _vec, "linear": _vec, "curvature": _num},
    "cost": {"kind": str, "c": _vec, "q": _num},
    "feasible": {"lo": _vec, "hi": _vec, "target": _vec},
    "principal": {"values": _vec, "nu": _num},
    "routing": {"graph": str, "target": _vec, "max_paths": int, "tolls": _vecs, "tol": _num},
    "algorithm": {"alpha": _num, "epsilon": _num, "delta": _num, "epsilon_floor": _num,
                  "inducer": str, "induce_T": int, "eta": _num, "check_every": int,
                  "zoo_method": str, "zoo_budget": int, "samples": int, "beta_c": _num,
                  "non_certified_ok": bool},
}

_PRICING = {"experiment", "valuation", "cost", "feasible", "algorithm"}
ALLOWED = {
    "pricing": _PRICING,
    "pricing_ellipsoid": _PRICING,
    "stackelberg_general": _PRICING,
    "routing_target_flow": {"experiment", "routing", "algorithm"},
    "routing_optimal_tolls": {"experiment", "routing", "algorithm"},
    "principal_agent": {"experiment", "cost", "feasible", "principal", "algorithm"},
    "braess_scan": {"experiment", "routing"},
}
REQUIRED = {
    "pricing": {"valuation": ["kind"], "cost": ["kind"], "algorithm": ["alpha"]},
    "pricing_ellipsoid": {"valuation": ["kind"], "cost": ["kind"], "algorithm": ["alpha"]},
    "stackelberg_general": {"valuation": ["kind"], "cost": ["kind"], "algorithm": ["alpha"]},
    "routing_target_flow": {"routing": ["graph", "target"], "algorithm": ["delta"]},
    "routing_optimal_tolls": {"routing": ["graph"], "algorithm": ["alpha"]},
    "principal_agent": {"cost": ["kind"], "principal": ["values"], "algorithm": ["alpha"]},
    "braess_scan": {},
}
BRAESS_POINTS = [[0.0, 0.0], [1.0, 2.0], [0.01, 0.02]]


class ConfigProblem(Exception):
    """Invalid config, anchored to a line of the file."""

    def __init__(self, path, line, message):
        self.path, self.line, self.message = path, line, message
        super().__init__(f"{path}:{line}: {message}")


def _locate(text: str, section: str | None, key: str | None = None) -> int:
    """Line of ``key`` inside ``[section]`` (or of the header itself)."""
    current = None
    header_line = 1
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_\-]+)\s*\]", line)
        if m:
            current = m.group(1)
            if current == section and key is None:
                return n
            if current == section:
                header_line = n
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", line):
            return n
    return header_line


def _check_type(value, kind) -> bool:
    if kind is str:
        return isinstance(value, str)
    if kind is bool:
        return isinstance(value, bool)
    if kind is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == _num:
        return isinstance(value, _num) and not isinstance(value, bool)
    if kind == "ints":
        return isinstance(value, list) and all(_check_type(v, int) for v in value) and value != []
    if kind == _vec:
        return isinstance(value, list) and value != [] and all(_check_type(v, _num) for v in value)
    if kind == _vecs:
        return isinstance(value, list) and all(_check_type(v, _vec) for v in value)
    raise AssertionError(kind)


_TYPE_NAMES = {str: "a string", bool: "true/false", int: "an integer", _num: "a number",
               "ints": "a non-empty list of integers", _vec: "a non-empty list of numbers",
               _vecs: "a list of number lists"}


@dataclass
class ExperimentConfig:
    path: Path
    text: str
    data: dict
    scenario: str
    seeds: list

    def section(self, name) -> dict:
        return self.data.get(name, {})

    def line(self, section, key=None) -> int:
        return _locate(self.text, section, key)

    def problem(self, section, key, message) -> ConfigProblem:
        return ConfigProblem(self.path, self.line(section, key), message)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigProblem(path, 0, f"cannot read config: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigProblem(path, int(m.group(1)) if m else 1, f"syntax error: {exc}") from None
    for name, body in data.items():
        if name not in SECTIONS:
            raise ConfigProblem(path, _locate(text, name), f"unknown section [{name}]")
        if not isinstance(body, dict):
            raise ConfigProblem(path, _locate(text, None, name),
                                f"{name!r} must be a [section] table")
        for key, value in body.items():
            if key not in SECTIONS[name]:
                raise ConfigProblem(path, _locate(text, name, key), f"unknown key {name}.{key}")
            kind = SECTIONS[name][key]
            if not _check_type(value, kind):
                raise ConfigProblem(path, _locate(text, name, key),
                                    f"{name}.{key} must be {_TYPE_NAMES[kind]}")
    exp = data.get("experiment")
    if not exp or "scenario" not in exp:
        raise ConfigProblem(path, _locate(text, "experiment"),
                            "missing experiment.scenario")
    scenario = exp["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigProblem(path, _locate(text, "experiment", "scenario"),
                            f"unknown scenario {scenario!r}; expected one of {', '.join(SCENARIOS)}")
    for name in data:
        if name not in ALLOWED[scenario]:
            raise ConfigProblem(path, _locate(text, name),
                                f"section [{name}] does not apply to scenario {scenario!r}")
    for name, keys in REQUIRED[scenario].items():
        for key in keys:
            if key not in data.get(name, {}):
                raise ConfigProblem(path, _locate(text, name), f"missing {name}.{key}")
    seeds = exp.get("seeds", [0])
    if len(set(seeds)) != len(seeds):
        raise ConfigProblem(path, _locate(text, "experiment", "seeds"), "seeds must be distinct")
    return ExperimentConfig(path, text, data, scenario, list(seeds))


# ---------------------------------------------------------------- builders


def _guarded(cfg, section, key, fn):
    try:
        return fn()
    except (UsageError, ModelError, ValueError, TypeError) as exc:
        raise cfg.problem(section, key, str(exc)) from None


def build_valuation(cfg: ExperimentConfig):
    sec = cfg.section("valuation")
    kind = sec["kind"]
    H = sec.get("H", 1.0)

    def need(*keys):
        for k in keys:
            if k not in sec:
                raise cfg.problem("valuation", None, f"valuation kind {kind!r} needs {k}")
        extra = set(sec) - {"kind", "H", "floor_frac", *keys, "beta"}
        if kind != "ces":
            extra |= {"beta"} & set(sec)
        if extra:
            k = sorted(extra)[0]
            raise cfg.problem("valuation", k, f"{k} does not apply to valuation kind {kind!r}")

    if kind == "ces":
        need("weights", "rho")
        return _guarded(cfg, "valuation", None, lambda: CES(
            np.array(sec["weights"], float), sec["rho"], sec.get("beta", 1.0), H,
            sec.get("floor_frac", 1e-4)))
    if kind == "cobb_douglas":
        need("exponents")
        return _guarded(cfg, "valuation", None, lambda: CobbDouglas(
            np.array(sec["exponents"], float), H, sec.get("floor_frac", 1e-4)))
    if kind == "quadratic":
        need("linear", "curvature")
        return _guarded(cfg, "valuation", None, lambda: QuadraticValuation(
            np.array(sec["linear"], float), sec["curvature"], H))
    raise cfg.problem("valuation", "kind", f"unknown valuation kind {kind!r}")


def build_cost(cfg: ExperimentConfig):
    sec = cfg.section("cost")
    kind = sec["kind"]
    if "c" not in sec:
        raise cfg.problem("cost", None, "cost needs coefficients c")
    c = np.array(sec["c"], float)
    if kind == "linear":
        if "q" in sec:
            raise cfg.problem("cost", "q", "q does not apply to a linear cost")
        return _guarded(cfg, "cost", "c", lambda: LinearCost(c))
    if kind == "quadratic":
        return _guarded(cfg, "cost", "q", lambda: QuadraticCost(c, sec.get("q", 0.0)))
    raise cfg.problem("cost", "kind", f"unknown cost kind {kind!r}")


def build_box(cfg: ExperimentConfig, dim: int, H: float = 1.0) -> Box:
    sec = cfg.section("feasible")
    lo = np.array(sec.get("lo", [0.0] * dim), float)
    hi = np.array(sec.get("hi", [H] * dim), float)
    for key, v in (("lo", lo), ("hi", hi)):
        if v.shape != (dim,):
            raise cfg.problem("feasible", key, f"feasible.{key} must have {dim} entries")
    return _guarded(cfg, "feasible", None, lambda: Box(lo, hi))


def build_game(cfg: ExperimentConfig):
    sec = cfg.section("routing")
    spec = sec.get("graph", "braess" if cfg.scenario == "braess_scan" else None)
    try:
        return routing.load_game(spec, cfg.path.parent)
    except (ModelError, UsageError, OSError) as exc:
        raise cfg.problem("routing", "graph", f"graph {spec!r}: {exc}") from None


def _alg(cfg, key, default=None):
    return cfg.section("algorithm").get(key, default)


def _positive(cfg, key, required=False):
    v = _alg(cfg, key)
    if v is None:
        if required:
            raise cfg.problem("algorithm", None, f"missing algorithm.{key}")
        return None
    if not v > 0:
        raise cfg.problem("algorithm", key, f"algorithm.{key} must be positive")
    return v


@dataclass
class Scenario:
    """Everything a cell needs, built from a validated config."""

    cfg: ExperimentConfig
    game: object = None
    valuation: object = None
    cost: object = None
    box: object = None
    target: object = None


def prepare(cfg: ExperimentConfig, allow_non_certified: bool = False) -> Scenario:
    """Build instances and check algorithm parameters; raises ConfigProblem."""
    sc = Scenario(cfg)
    name = cfg.scenario
    for key in ("alpha", "epsilon", "delta", "epsilon_floor", "eta", "beta_c"):
        _positive(cfg, key)
    for key in ("induce_T", "zoo_budget", "samples", "check_every"):
        _positive(cfg, key)
    method = _alg(cfg, "zoo_method", "auto")
    if method not in ("auto", "grid_refine", "smoothed_gradient"):
        raise cfg.problem("algorithm", "zoo_method", f"unknown zoo_method {method!r}")
    inducer = _alg(cfg, "inducer")
    if inducer is not None and inducer not in ("subgradient", "ellipsoid"):
        raise cfg.problem("algorithm", "inducer", f"unknown inducer {inducer!r}")
    if inducer is not None and name in ("pricing", "pricing_ellipsoid", "stackelberg_general",
                                        "principal_agent"):
        raise cfg.problem("algorithm", "inducer",
                          f"scenario {name!r} fixes its inducer; drop algorithm.inducer")
    allow = allow_non_certified or bool(_alg(cfg, "non_certified_ok", False))

    if name in ("pricing", "pricing_ellipsoid", "stackelberg_general"):
        sc.valuation = build_valuation(cfg)
        sc.cost = build_cost(cfg)
        if sc.cost.dim != sc.valuation.dim:
            raise cfg.problem("cost", "c", "cost and valuation dimensions differ")
        sc.box = build_box(cfg, sc.valuation.dim, sc.valuation.H)
        inst = _guarded(cfg, "feasible", None,
                        lambda: leader.pricing_instance(sc.valuation, sc.cost, sc.box))
        kind = "learn_opt" if name == "stackelberg_general" else "opro"
        if name == "pricing_ellipsoid" and _alg(cfg, "epsilon_floor") is not None:
            raise cfg.problem("algorithm", "epsilon_floor",
                              "the ellipsoid inducer runs at the certified accuracy; "
                              "drop algorithm.epsilon_floor")
        _certify(cfg, kind, inst, allow)
    elif name == "principal_agent":
        sc.cost = build_cost(cfg)
        if not isinstance(sc.cost, QuadraticCost) or sc.cost.q <= 0:
            raise cfg.problem("cost", "kind", "principal_agent needs a quadratic cost with q > 0")
        sc.box = build_box(cfg, sc.cost.dim)
        values = cfg.section("principal")["values"]
        if len(values) != sc.cost.dim:
            raise cfg.problem("principal", "values", f"values must have {sc.cost.dim} entries")
        nu = cfg.section("principal").get("nu", 0.02)
        if not nu > 0:
            raise cfg.problem("principal", "nu", "principal.nu must be positive")
        beta_c = _alg(cfg, "beta_c", 0.1)
        if not beta_c < 0.5:
            raise cfg.problem("algorithm", "beta_c", "algorithm.beta_c must be below 1/2")
        inst = leader.procurement_instance(sc.cost, values, sc.box, nu)
        _certify(cfg, "opro_noisy", inst, allow)
    else:
        sc.game = build_game(cfg)
        if name == "routing_target_flow":
            target = cfg.section("routing")["target"]
            if len(target) != sc.game.m:
                raise cfg.problem("routing", "target", f"target must have {sc.game.m} entries")
            sc.target = np.array(target, float)
            if not routing.is_feasible_flow(sc.game, sc.target, 1e-7):
                raise cfg.problem("routing", "target", "target is not a feasible flow")
            if not sc.game.sigma_min > 0:
                raise cfg.problem("routing", "graph", "target-flow enforcement needs "
                                  "latencies with positive slope")
        elif name == "routing_optimal_tolls":
            max_paths = cfg.section("routing").get("max_paths", 16)
            inst = _guarded(cfg, "routing", "graph", lambda: routing.toll_instance(sc.game, max_paths))
            _certify(cfg, "learn_opt", inst, allow)
        elif name == "braess_scan":
            if sc.game.name != "braess":
                raise cfg.problem("routing", "graph", "braess_scan runs on the braess network")
            for pt in cfg.section("routing").get("tolls", BRAESS_POINTS):
                if len(pt) != 2 or min(pt) < 0:
                    raise cfg.problem("routing", "tolls",
                                      "each toll point is [tau1, tau2] with nonnegative entries")
        if "target" in cfg.section("routing") and name != "routing_target_flow":
            t = cfg.section("routing")["target"]
            if len(t) != sc.game.m:
                raise cfg.problem("routing", "target", f"target must have {sc.game.m} entries")
            sc.target = np.array(t, float)
    if name not in ("routing_target_flow",) and sc.target is None:
        t = cfg.section("feasible").get("target")
        if t is not None:
            sc.target = np.array(t, float)
    return sc


def _certify(cfg, kind, inst, allow):
    alpha = _alg(cfg, "alpha")
    floor = _alg(cfg, "epsilon_floor")
    _, certified = leader.plan_epsilon(kind, inst, alpha, floor)
    if not certified and not allow:
        raise cfg.problem("algorithm", "epsilon_floor",
                          "epsilon_floor is above the certified accuracy; the run would be "
                          "non-certified (pass --non-certified-ok or set "
                          "algorithm.non_certified_ok = true)")


# ---------------------------------------------------------------- cells


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".12g")


def _row(scenario, seed, it, action, distance, objective, cumulative, wall_ms) -> str:
    norm = float(np.linalg.norm(action))
    return ",".join([scenario, str(seed), str(it), _fmt(norm), _fmt(distance), _fmt(objective),
                     str(int(cumulative)), format(float(wall_ms), ".3f")])


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_path(out: Path, scenario: str, seed: int) -> Path:
    return out / f"{scenario}_seed{seed}.csv"


class _TimedOracle(routing.EquilibriumOracle):
    """Equilibrium oracle that logs one trace row per query."""

    def __init__(self, game, tol, scenario, seed, target, rows):
        super().__init__(game, tol)
        self.scenario, self.seed, self.target, self.rows = scenario, seed, target, rows
        self._t0 = time.perf_counter()

    def respond(self, tolls):
        f = super().respond(tolls)
        d = float(np.linalg.norm(f - self.target))
        self.rows.append(_row(self.scenario, self.seed, self.query_count, tolls, d,
                              self.game.social_cost(f), self.query_count,
                              1e3 * (time.perf_counter() - self._t0)))
        return f


def _leader_cell(sc: Scenario, seed: int, rows: list, allow: bool) -> dict:
    cfg = sc.cfg
    name = cfg.scenario

    # routing reports social cost itself; the leader internally maximises its negative
    sign = -1.0 if name == "routing_optimal_tolls" else 1.0

    def cb(rec):
        rows.append(_row(name, seed, rec.t, rec.leader_action, rec.distance, sign * rec.observed,
                         rec.cumulative_queries, rec.elapsed_ms))

    alpha = _alg(cfg, "alpha")
    floor = _alg(cfg, "epsilon_floor")
    allow = allow or bool(_alg(cfg, "non_certified_ok", False))
    common = dict(epsilon_floor=floor, allow_non_certified=allow,
                  zoo_method=_alg(cfg, "zoo_method", "auto"), zoo_budget=_alg(cfg, "zoo_budget"),
                  seed=seed, callback=cb)
    if name in ("pricing", "pricing_ellipsoid"):
        inst = leader.pricing_instance(sc.valuation, sc.cost, sc.box)
        inducer = "ellipsoid" if name == "pricing_ellipsoid" else "subgradient"
        res = leader.opro(inst, alpha, inducer=inducer, induce_T=_alg(cfg, "induce_T", 5000),
                          **common)
    elif name == "stackelberg_general":
        inst = leader.pricing_instance(sc.valuation, sc.cost, sc.box)
        res = leader.learn_opt(inst, alpha, induce_T=_alg(cfg, "induce_T", 5000), **common)
    elif name == "principal_agent":
        nu = cfg.section("principal").get("nu", 0.02)
        inst = leader.procurement_instance(sc.cost, cfg.section("principal")["values"], sc.box,
                                           nu, seed=seed)
        res = leader.opro_noisy(inst, alpha, _alg(cfg, "beta_c", 0.1),
                                samples=_alg(cfg, "samples", 100),
                                induce_T=_alg(cfg, "induce_T", 1000), **common)
    else:  # routing_optimal_tolls
        res = routing.optimize_tolls(sc.game, alpha, inducer=_alg(cfg, "inducer", "subgradient"),
                                     induce_T=_alg(cfg, "induce_T", 5000),
                                     max_paths=cfg.section("routing").get("max_paths", 16),
                                     **common)
    return {"objective": sign * res.achieved_objective, "leader_action": res.leader_action.tolist(),
            "induced": res.induced.tolist(), "total_follower_queries": res.total_follower_queries,
            "zoo_queries": res.zoo_queries, "certified": bool(res.certified),
            "schedule": {k: v for k, v in res.schedule.items()}}


def _target_flow_cell(sc: Scenario, seed: int, rows: list) -> dict:
    cfg = sc.cfg
    delta = _alg(cfg, "delta")
    tol = cfg.section("routing").get("tol", min(1e-7, delta * 1e-3))
    oracle = _TimedOracle(sc.game, tol, cfg.scenario, seed, sc.target, rows)
    if _alg(cfg, "inducer", "subgradient") == "ellipsoid":
        res = routing.learn_tolls_ellipsoid(sc.game, sc.target, delta, oracle=oracle)
    else:
        res = routing.enforce_target_flow(sc.game, sc.target, delta,
                                          override_T=_alg(cfg, "induce_T", 5000),
                                          override_eta=_alg(cfg, "eta"),
                                          check_every=_alg(cfg, "check_every", 50), oracle=oracle)
    return {"objective": sc.game.social_cost(res.induced), "leader_action": res.leader_action.tolist(),
            "induced": res.induced.tolist(), "distance": res.distance, "converged": res.converged,
            "total_follower_queries": res.queries, "certified": bool(res.converged),
            "dual_value": routing.dual_value(sc.game, res.leader_action, sc.target),
            "target_potential": sc.game.potential(sc.target)}


def _point_key(pt) -> str:
    return f"SC({_fmt(pt[0])},{_fmt(pt[1])})"


def _braess_cell(sc: Scenario, seed: int, rows: list) -> dict:
    pts = sc.cfg.section("routing").get("tolls", BRAESS_POINTS)
    t0 = time.perf_counter()
    values = {}
    for i, pt in enumerate(pts, 1):
        tolls = routing.braess_tolls(*pt)
        cost = routing.braess_social_cost(*pt)
        values[_point_key(pt)] = cost
        rows.append(_row(sc.cfg.scenario, seed, i, tolls, math.nan, cost, i,
                         1e3 * (time.perf_counter() - t0)))
    out = {"points": values, "objective": min(values.values())}
    if len(pts) >= 2:
        a, b = np.array(pts[0], float), np.array(pts[1], float)
        mix = 0.99 * a + 0.01 * b
        lhs = routing.braess_social_cost(*mix)
        rhs = 0.99 * values[_point_key(pts[0])] + 0.01 * values[_point_key(pts[1])]
        out.update(witness_mix=_point_key(mix), witness_lhs=lhs, witness_rhs=rhs,
                   nonconvex_witness=bool(lhs > rhs))
    return out


def run_cell(sc: Scenario, seed: int, out: Path, allow: bool) -> dict:
    name = sc.cfg.scenario
    rows: list[str] = []
    t0 = time.perf_counter()
    status, error = "ok", None
    try:
        if name == "routing_target_flow":
            info = _target_flow_cell(sc, seed, rows)
        elif name == "braess_scan":
            info = _braess_cell(sc, seed, rows)
        else:
            info = _leader_cell(sc, seed, rows, allow)
    except (RevstackError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        status, error, info = "failed", f"{type(exc).__name__}: {exc}", {}
        last = rows[-1].split(",")[6] if rows else "0"
        rows.append(",".join([name, str(seed), FAILED, "", "", "", last,
                              format(1e3 * (time.perf_counter() - t0), ".3f")]))
    path = trace_path(out, name, seed)
    atomic_write(path, "\n".join([HEADER, *rows]) + "\n")
    cell = {"seed": seed, "status": status, "trace": path.name, "rows": len(rows)}
    if error:
        cell["error"] = error
    cell.update(_jsonable(info))
    return cell


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (bool, int, str)) or obj is None:
        return obj
    return repr(obj)


def _cell_entry(args):
    cfg_path, allow, seed, out = args
    cfg = load_config(cfg_path)
    sc = prepare(cfg, allow)
    return run_cell(sc, seed, Path(out), allow)


def summarize(cfg: ExperimentConfig, cells: list[dict]) -> dict:
    ok = [c for c in cells if c["status"] == "ok"]
    objs = [c["objective"] for c in ok if c.get("objective") is not None]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg.scenario,
        "config": cfg.path.name,
        "seeds": cfg.seeds,
        "completed": len(ok),
        "failed": len(cells) - len(ok),
        "mean_objective": float(np.mean(objs)) if objs else None,
        "total_follower_queries": int(sum(c.get("total_follower_queries", 0) for c in ok)),
        "certified": bool(ok) and all(c.get("certified", True) for c in ok) and len(ok) == len(cells),
        "cells": cells,
    }
    if cfg.scenario == "braess_scan" and ok:
        first = ok[0]
        summary.update(first["points"])
        if "nonconvex_witness" in first:
            summary["nonconvex_witness"] = first["nonconvex_witness"]
    return summary


def resolve_out(cli_out, cfg: ExperimentConfig) -> Path:
    if cli_out:
        return Path(cli_out)
    if "out" in cfg.section("experiment"):
        p = Path(cfg.section("experiment")["out"])
        return p if p.is_absolute() else cfg.path.parent / p
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def run(config_path, *, out=None, jobs: int = 1, non_certified_ok: bool = False,
        stderr=None) -> int:
    stderr = stderr or sys.stderr
    try:
        cfg = load_config(config_path)
        sc = prepare(cfg, non_certified_ok)
    except ConfigProblem as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    if jobs < 1:
        print("error: --jobs must be at least 1", file=stderr)
        return 2
    out_dir = resolve_out(out, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    if jobs > 1 and len(cfg.seeds) > 1:
        args = [(str(cfg.path), non_certified_ok, s, str(out_dir)) for s in cfg.seeds]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_cell_entry, args))
    else:
        cells = [run_cell(sc, s, out_dir, non_certified_ok) for s in cfg.seeds]
    summary = summarize(cfg, cells)
    atomic_write(out_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for c in cells:
        if c["status"] != "ok":
            print(f"error: seed {c['seed']}: {c['error']}", file=stderr)
    return 0 if summary["failed"] == 0 else 1


# ---------------------------------------------------------------- verify


def parse_action(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"--action must be a comma-separated list of numbers, got {text!r}") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise UsageError("--action must contain finite numbers")
    return np.array(vals)


def verify(config_path, action, *, non_certified_ok: bool = True) -> dict:
    """Replay the follower at ``action``; raises ConfigProblem / UsageError."""
    cfg = load_config(config_path)
    sc = prepare(cfg, True)
    a = parse_action(action) if isinstance(action, str) else np.asarray(action, float)
    if np.any(a < 0):
        raise UsageError("leader actions must be nonnegative")
    seed = cfg.seeds[0]
    name = cfg.scenario
    report = {"schema_version": SCHEMA_VERSION, "scenario": name, "seed": seed}
    if name in ("pricing", "pricing_ellipsoid", "stackelberg_general"):
        oracle = FollowerOracle(sc.valuation, sc.box, seed=seed)
        x = oracle.respond(a)
        obj = leader.ProfitObjective(sc.cost).observe(a, x)
        report.update(objective_name="profit")
    elif name == "principal_agent":
        nu = cfg.section("principal").get("nu", 0.02)
        oracle = FollowerOracle(sc.cost, sc.box, Noisy(nu), seed=seed)
        x = oracle.respond(a)
        obj = leader.ProcurementObjective(np.array(cfg.section("principal")["values"], float)).observe(a, x)
        report.update(objective_name="principal_utility", noisy=True)
    else:
        game = sc.game
        if name == "braess_scan" and a.shape == (2,):
            a = routing.braess_tolls(*a)
        if a.shape != (game.m,):
            raise UsageError(f"--action needs {game.m} tolls, got {a.shape[0]}")
        if name == "braess_scan":
            x = routing.enumerate_equilibrium(game, a).edge_flows
        else:
            x = routing.EquilibriumOracle(game, 1e-9).respond(a)
        obj = game.social_cost(x)
        report.update(objective_name="social_cost")
    if a.shape[0] != x.shape[0]:
        raise UsageError("action dimension does not match the follower")
    report.update(action=a.tolist(), induced=x.tolist(), objective=obj)
    if sc.target is not None:
        report["target"] = sc.target.tolist()
        report["distance_to_target"] = float(np.linalg.norm(x - sc.target))
    return _jsonable(report)


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="revstack", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run every (scenario, seed) cell of a config")
    r.add_argument("config")
    r.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    r.add_argument("--out", help=f"output directory (default: experiment.out, ${OUT_ENV}, "
                                 f"or ./{DEFAULT_OUT})")
    r.add_argument("--non-certified-ok", action="store_true",
                   help="allow capped accuracies that void the schedule's certificate")
    v = sub.add_parser("verify", help="replay the follower at a leader action")
    v.add_argument("config")
    v.add_argument("--action", required=True, help="comma-separated leader action")
    v.add_argument("--non-certified-ok", action="store_true", help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "run":
        return run(args.config, out=args.out, jobs=args.jobs,
                   non_certified_ok=args.non_certified_ok)
    try:
        report = verify(args.config, args.action)
    except ConfigProblem as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RevstackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
