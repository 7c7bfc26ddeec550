"""Self-check battery: independent oracles run against the fast paths.

Each check recomputes results with a deliberately different method (vertex
enumeration instead of simplex, raw re-enumeration instead of incremental
bookkeeping, post-move network evaluation instead of the per-pair payoff
cases) and reports mismatches.  The CLI ``check`` subcommand runs the
battery; the test suite reuses the generators and oracles with larger
budgets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import fse, lp as lpmod
from .connectivity import check_stage, disconnecting_actions
from .netmodel import (
    Action,
    ActionKind,
    Device,
    DeviceType,
    GameConfig,
    LinkModel,
    LocalSink,
    NetworkState,
    attack_device,
    attack_ls,
    attacker_strategy_set,
    build_state,
    canonical_key,
    defender_strategy_set,
    relabel_devices,
    restricted_attacker_set,
    step,
)
from .payoffs import (
    disconnected_weight,
    flags_of,
    latency,
    static_latency,
)


# ---------------------------------------------------------------------------
# LP oracles
# ---------------------------------------------------------------------------


def vertex_enumerate(lp: lpmod.LinearProgram, tol: float = 1e-8) -> lpmod.LPSolution:
    """Brute-force LP optimum: try every choice of n active constraints
    (rows and nonnegativity bounds; equality rows always active), solve the
    square systems in one batch, keep the best feasible point.  Assumes a
    bounded feasible region (add a box row when generating test programs)."""
    n = lp.num_vars
    a = lp.lhs
    b = lp.rhs
    eq_rows = np.flatnonzero(lp.equality)
    ineq_rows = np.flatnonzero(~lp.equality)
    k = n - eq_rows.size
    if k < 0:
        return lpmod.LPSolution(np.zeros(n), math.nan, lpmod.LPStatus.INFEASIBLE, 0)

    # candidate active rows: every inequality row, then one bound per var
    cand_lhs = np.vstack([a[ineq_rows], np.eye(n)]) if ineq_rows.size else np.eye(n)
    cand_rhs = np.concatenate([b[ineq_rows], np.zeros(n)]) if ineq_rows.size else np.zeros(n)
    combos = np.array(
        list(itertools.combinations(range(cand_lhs.shape[0]), k)), dtype=int
    )
    if combos.size == 0:
        combos = np.zeros((1, 0), dtype=int)
    n_c = combos.shape[0]
    mats = np.empty((n_c, n, n))
    rhs = np.empty((n_c, n))
    mats[:, : eq_rows.size, :] = a[eq_rows]
    rhs[:, : eq_rows.size] = b[eq_rows]
    if k:
        mats[:, eq_rows.size :, :] = cand_lhs[combos]
        rhs[:, eq_rows.size :] = cand_rhs[combos]
    dets = np.abs(np.linalg.det(mats))
    ok = dets > 1e-12
    if not ok.any():
        return lpmod.LPSolution(np.zeros(n), math.nan, lpmod.LPStatus.INFEASIBLE, 0)
    xs = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]
    feas = (xs > -tol).all(axis=1)
    if ineq_rows.size:
        feas &= (xs @ a[ineq_rows].T - b[ineq_rows] <= tol).all(axis=1)
    if eq_rows.size:
        feas &= (np.abs(xs @ a[eq_rows].T - b[eq_rows]) <= tol).all(axis=1)
    if not feas.any():
        return lpmod.LPSolution(np.zeros(n), math.nan, lpmod.LPStatus.INFEASIBLE, 0)
    vals = xs[feas] @ lp.objective
    best = int(np.argmax(vals))
    return lpmod.LPSolution(xs[feas][best], float(vals[best]), lpmod.LPStatus.OPTIMAL, 0)


def random_bounded_lp(rng: np.random.Generator, max_vars: int = 6, max_rows: int = 10):
    """Random LP with x = 0 feasible on all inequality rows and an explicit
    box row, so it is never unbounded (equality rows may still make it
    infeasible)."""
    n = int(rng.integers(2, max_vars + 1))
    m = int(rng.integers(1, max_rows))
    a_ub = rng.normal(0, 2.0, size=(m, n)).round(3)
    b_ub = np.abs(rng.normal(0, 3.0, size=m)).round(3)
    box = np.ones((1, n))
    a_ub = np.vstack([a_ub, box])
    b_ub = np.append(b_ub, round(float(rng.uniform(1, 10)), 3))
    c = rng.normal(0, 2.0, size=n).round(3)
    a_eq = b_eq = None
    if rng.random() < 0.3:
        a_eq = rng.normal(0, 1.0, size=(1, n)).round(3)
        b_eq = np.array([round(float(rng.uniform(0, 2.0)), 3)])
    return lpmod.maximize(c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq)


def solve_stage_game_by_enumeration(
    f_a: np.ndarray, f_d: np.ndarray, allowed: np.ndarray
) -> tuple[float, int]:
    """Leader-commitment search with the vertex-enumeration LP backend
    (independent of the simplex path)."""
    f_a = np.asarray(f_a, float)
    f_d = np.asarray(f_d, float)
    allowed = np.asarray(allowed, bool)
    n_rows, n_cols = f_a.shape
    gated = np.where(allowed, f_d, 0.0)
    best = None
    for bp in range(n_cols):
        rows = np.flatnonzero(allowed[:, bp])
        if rows.size == 0:
            continue
        a_ub = []
        for b in range(n_cols):
            if b == bp or not allowed[rows, b].any():
                continue  # vacuous comparison: no shared consistent row
            a_ub.append(gated[rows, b] - f_d[rows, bp])
        prog = lpmod.maximize(
            f_a[rows, bp],
            a_ub=np.array(a_ub) if a_ub else None,
            b_ub=np.zeros(len(a_ub)) if a_ub else None,
            a_eq=np.ones((1, rows.size)),
            b_eq=np.ones(1),
        )
        sol = vertex_enumerate(prog)
        if sol.status is not lpmod.LPStatus.OPTIMAL:
            continue
        if best is None or sol.value > best[0] + 1e-9:
            best = (sol.value, bp)
    if best is None:
        raise fse.NoFeasibleStage("oracle: no feasible candidate")
    return best


# ---------------------------------------------------------------------------
# Random small game instances (fuzz support)
# ---------------------------------------------------------------------------


def random_small_instance(
    rng: np.random.Generator,
    horizon: int = 2,
    force_threshold_edge: bool = False,
) -> tuple[GameConfig, NetworkState]:
    """A small random network plus config for fuzzing the game machinery.

    Clusters are kept at or above threshold; with ``force_threshold_edge``
    (or at random) one cluster sits exactly at its threshold so the
    coupled strategy sets bite.
    """
    areas = int(rng.integers(1, 3))
    num_info = int(rng.integers(2, 4))
    n_types = int(rng.integers(2, 4))
    catalog = []
    all_info = list(range(1, num_info + 1))
    for tid in range(1, n_types + 1):
        size = int(rng.integers(1, num_info + 1))
        chosen = sorted(rng.choice(all_info, size=size, replace=False).tolist())
        catalog.append(DeviceType(type_id=tid, info_set=frozenset(int(j) for j in chosen)))
    covered = set().union(*(t.info_set for t in catalog))
    missing = [j for j in all_info if j not in covered]
    if missing:
        catalog[-1] = DeviceType(
            type_id=n_types, info_set=catalog[-1].info_set | frozenset(missing)
        )
    devices = []
    nid = 0
    for h in range(1, areas + 1):
        for t in catalog:
            for _ in range(int(rng.integers(1, 4))):
                nid += 1
                devices.append(Device(device_id=nid, type_id=t.type_id, subarea=h))
    sinks = []
    sid = 0
    for h in range(1, areas + 1):
        for _ in range(int(rng.integers(1, 3))):
            sid += 1
            sinks.append(LocalSink(sink_id=sid, subarea=h, weight=10.0))
    state = build_state(catalog, devices, sinks)
    overrides = {}
    if force_threshold_edge or rng.random() < 0.4:
        keys = sorted(state.clusters)
        key = keys[int(rng.integers(0, len(keys)))]
        overrides[key] = len(state.clusters[key])
    cfg = GameConfig(
        num_areas=areas,
        num_info_types=num_info,
        type_catalog=tuple(catalog),
        attack_device_cost=tuple(
            round(0.5 * t.sensor_count + float(rng.uniform(0, 1)), 2) for t in catalog
        ),
        attack_ls_cost=round(float(rng.uniform(0, 20)), 2),
        ch_discovery_cost=round(float(rng.uniform(0, 10)), 2),
        als_discovery_cost=round(float(rng.uniform(0, 10)), 2),
        deploy_device_cost=tuple(
            round(0.5 * t.sensor_count, 2) for t in catalog
        ),
        deploy_ls_cost=round(float(rng.uniform(1, 20)), 2),
        nu=1.0,
        eta=1.0,
        mu=float(rng.choice([1.0, 10.0, 100.0])),
        lam=1.0,
        ls_target=3,
        horizon=horizon,
        ls_weight=10.0,
        threshold_default=1,
        threshold_overrides=overrides,
        link=LinkModel(),
    )
    return cfg, state


def random_stage_matrices(
    rng: np.random.Generator, max_actions: int = 6
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random abstract stage game with random coupling masks (every column
    keeps at least one allowed row)."""
    n_rows = int(rng.integers(2, max_actions + 1))
    n_cols = int(rng.integers(2, max_actions + 1))
    f_a = rng.normal(0, 5.0, size=(n_rows, n_cols)).round(3)
    f_d = rng.normal(0, 5.0, size=(n_rows, n_cols)).round(3)
    allowed = rng.random((n_rows, n_cols)) < 0.8
    for j in range(n_cols):
        if not allowed[:, j].any():
            allowed[int(rng.integers(0, n_rows)), j] = True
    return f_a, f_d, allowed


# ---------------------------------------------------------------------------
# Battery
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def check_lp_against_enumeration(seed: int = 0, trials: int = 80) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        prog = random_bounded_lp(rng)
        fast = lpmod.solve_lp(prog)
        slow = vertex_enumerate(prog)
        if fast.status is not slow.status:
            return CheckResult(
                "lp_vs_enumeration", False, f"status mismatch {fast.status} vs {slow.status}"
            )
        if fast.status is lpmod.LPStatus.OPTIMAL:
            worst = max(worst, abs(fast.value - slow.value))
    ok = worst < 1e-7
    return CheckResult("lp_vs_enumeration", ok, f"max value gap {worst:.2e} over {trials} LPs")


def check_zero_variable_soundness(seed: int = 1, trials: int = 80) -> CheckResult:
    rng = np.random.default_rng(seed)
    fired = 0
    for _ in range(trials):
        prog = random_bounded_lp(rng)
        sol = lpmod.solve_lp(prog)
        if sol.status is not lpmod.LPStatus.OPTIMAL:
            continue
        for r in range(prog.num_vars):
            if lpmod.zero_variable_test(prog, r):
                fired += 1
                if sol.x[r] > 1e-9:
                    return CheckResult(
                        "zero_variable_soundness",
                        False,
                        f"claimed x[{r}]=0 but optimum has {sol.x[r]:.3e}",
                    )
    return CheckResult(
        "zero_variable_soundness", True, f"{fired} firings, none contradicted"
    )


def check_transition_invariants(seed: int = 2, trials: int = 40) -> CheckResult:
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        cfg, state = random_small_instance(rng)
        attacks = attacker_strategy_set(state)
        a = attacks[int(rng.integers(0, len(attacks)))]
        moves = defender_strategy_set(state, a, cfg)
        b = moves[int(rng.integers(0, len(moves)))]
        nxt = step(state, a, b, cfg)
        nxt.validate()
        destroyed_dev = 1 if a.kind == ActionKind.ATTACK_DEVICE else 0
        deployed_dev = 1 if b.kind == ActionKind.DEPLOY_DEVICE else 0
        if len(nxt.devices) != len(state.devices) - destroyed_dev + deployed_dev:
            return CheckResult("transition_invariants", False, "device count drifted")
        destroyed_ls = 1 if a.kind == ActionKind.ATTACK_LS else 0
        deployed_ls = 1 if b.kind == ActionKind.DEPLOY_LS else 0
        if len(nxt.sinks) != len(state.sinks) - destroyed_ls + deployed_ls:
            return CheckResult("transition_invariants", False, "sink count drifted")
        sub = restricted_attacker_set(b, state, cfg)
        if not set(sub) <= set(attacks):
            return CheckResult("transition_invariants", False, "restriction not a subset")
    return CheckResult("transition_invariants", True, f"{trials} random stages")


def check_canonical_key_permutations(seed: int = 3, trials: int = 30) -> CheckResult:
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        _cfg, state = random_small_instance(rng)
        key = canonical_key(state)
        ids = sorted(state.devices)
        perm = rng.permutation(ids).tolist()
        mapping = dict(zip(ids, (int(p) for p in perm)))
        if canonical_key(relabel_devices(state, mapping)) != key:
            return CheckResult("canonical_key_permutations", False, "relabeling changed key")
    return CheckResult("canonical_key_permutations", True, f"{trials} relabelings")


def check_payoff_cases_against_replay(seed: int = 4, trials: int = 50) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        cfg, state = random_small_instance(rng)
        flags = flags_of(state)
        attacks = attacker_strategy_set(state)
        a = attacks[int(rng.integers(0, len(attacks)))]
        moves = defender_strategy_set(state, a, cfg)
        b = moves[int(rng.integers(0, len(moves)))]
        lam = latency(a, b, state, cfg.link, flags)
        replay = static_latency(step(state, a, b, cfg), cfg.link)
        worst = max(worst, abs(lam - replay))
        disconnected_weight(a, b, state, flags)
    ok = worst < 1e-12
    return CheckResult(
        "latency_vs_replay", ok, f"max gap {worst:.2e} over {trials} stage pairs"
    )


def check_stage_solver_against_enumeration(seed: int = 5, trials: int = 25) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        f_a, f_d, allowed = random_stage_matrices(rng, max_actions=4)
        value, _q, _b = fse.solve_stage_game_matrices(f_a, f_d, allowed)
        ref, _ = solve_stage_game_by_enumeration(f_a, f_d, allowed)
        worst = max(worst, abs(value - ref))
    ok = worst < 1e-7
    return CheckResult(
        "stage_solver_vs_enumeration", ok, f"max leader value gap {worst:.2e}"
    )


def check_single_stage_boundary(seed: int = 6, trials: int = 10) -> CheckResult:
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        cfg, state = random_small_instance(rng, horizon=1)
        feedback = fse.solve_stage(state, 1, cfg)
        myopic = fse.solve_nfse(state, 1, cfg)
        if feedback.b_star != myopic.b_star:
            return CheckResult("single_stage_boundary", False, "responses differ")
        if abs(feedback.omega_a - myopic.omega_a) > 1e-9:
            return CheckResult("single_stage_boundary", False, "values differ")
        if feedback.q_star.support != myopic.q_star.support:
            return CheckResult("single_stage_boundary", False, "mixtures differ")
    return CheckResult("single_stage_boundary", True, f"{trials} instances")


def check_guarantee_soundness(seed: int = 7, trials: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    guaranteed = 0
    for _ in range(trials):
        cfg, state = random_small_instance(rng, horizon=1)
        game = fse.build_stage_game(state, cfg, continuation=None)
        policy = fse.solve_stage_from_game(game)
        report = check_stage(game, policy, cfg)
        if report.guaranteed:
            guaranteed += 1
            zd = set(disconnecting_actions(policy.b_star, state, cfg))
            mass = sum(p for a, p in policy.q_star.support if a in zd)
            if mass > 1e-9:
                return CheckResult(
                    "guarantee_soundness", False, f"guaranteed but mass {mass:.2e}"
                )
    return CheckResult(
        "guarantee_soundness", True, f"{guaranteed}/{trials} certified, none contradicted"
    )


ALL_CHECKS: tuple[Callable[..., CheckResult], ...] = (
    check_lp_against_enumeration,
    check_zero_variable_soundness,
    check_transition_invariants,
    check_canonical_key_permutations,
    check_payoff_cases_against_replay,
    check_stage_solver_against_enumeration,
    check_single_stage_boundary,
    check_guarantee_soundness,
)


def run_battery(seed: int = 0) -> Iterator[CheckResult]:
    for idx, fn in enumerate(ALL_CHECKS):
        yield fn(seed=seed + idx)
