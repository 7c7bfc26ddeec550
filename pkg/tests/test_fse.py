from __future__ import annotations

import numpy as np
import pytest

from iobtgame import fse
from iobtgame.checks import random_small_instance, random_stage_matrices
from iobtgame.netmodel import (
    ActionKind,
    Device,
    DeviceType,
    LocalSink,
    attack_device,
    attack_ls,
    build_state,
    canonical_key,
    defender_strategy_set,
    restricted_attacker_set,
)
from conftest import tiny_config, tiny_state
from oracles import grid_leader_search, stage_game_scipy


def test_singleton_stage_game():
    f_a = np.array([[4.0]])
    f_d = np.array([[-1.0]])
    allowed = np.array([[True]])
    value, q, b = fse.solve_stage_game_matrices(f_a, f_d, allowed)
    assert (value, b) == (4.0, 0)
    assert q[0] == pytest.approx(1.0)


def test_two_by_two_commitment_against_grid():
    f_a = np.array([[3.0, 1.0], [2.0, 2.0]])
    f_d = np.array([[0.0, 1.0], [1.0, 0.0]])
    allowed = np.ones((2, 2), dtype=bool)
    value, q, b = fse.solve_stage_game_matrices(f_a, f_d, allowed)
    ref = grid_leader_search(f_a, f_d, allowed, steps=1000)
    assert value == pytest.approx(2.5, abs=1e-9)
    assert value >= ref - 1e-9
    assert value == pytest.approx(ref, abs=2e-3)


def test_matrix_solver_matches_scipy_oracle():
    rng = np.random.default_rng(41)
    for _ in range(80):
        f_a, f_d, allowed = random_stage_matrices(rng)
        value, q, b = fse.solve_stage_game_matrices(f_a, f_d, allowed)
        ref_value, _ref_b = stage_game_scipy(f_a, f_d, allowed)
        assert value == pytest.approx(ref_value, abs=1e-7)
        # coupling respected: no mass outside the winner's allowed rows
        assert q[~allowed[:, b]].sum() <= 1e-12


def test_winning_candidate_is_follower_optimal():
    rng = np.random.default_rng(43)
    for _ in range(60):
        f_a, f_d, allowed = random_stage_matrices(rng)
        value, q, b = fse.solve_stage_game_matrices(f_a, f_d, allowed)
        gated = np.where(allowed, f_d, 0.0)
        mine = float(q @ f_d[:, b])
        for alt in range(f_d.shape[1]):
            if alt == b or not allowed[allowed[:, b], alt].any():
                continue
            assert float(q @ gated[:, alt]) <= mine + 1e-7


def test_feasible_pure_rows_never_beat_the_mixture():
    rng = np.random.default_rng(47)
    for _ in range(60):
        f_a, f_d, allowed = random_stage_matrices(rng)
        value, q, b = fse.solve_stage_game_matrices(f_a, f_d, allowed)
        gated = np.where(allowed, f_d, 0.0)
        rows = np.flatnonzero(allowed[:, b])
        alt_cols = [
            c for c in range(f_d.shape[1]) if c != b and allowed[rows, c].any()
        ]
        for a in rows:
            if all(gated[a, c] <= f_d[a, b] + 1e-12 for c in alt_cols):
                assert f_a[a, b] <= value + 1e-7


def test_shifting_the_winning_column_shifts_the_value():
    rng = np.random.default_rng(53)
    for _ in range(25):
        f_a, f_d, allowed = random_stage_matrices(rng)
        value, q, b = fse.solve_stage_game_matrices(f_a, f_d, allowed)
        f_a2 = f_a.copy()
        f_a2[:, b] += 7.5
        value2, _q2, b2 = fse.solve_stage_game_matrices(f_a2, f_d, allowed)
        assert b2 == b
        assert value2 == pytest.approx(value + 7.5, abs=1e-7)


def test_builders_agree(cfg):
    rng = np.random.default_rng(61)
    for _ in range(50):
        cfg2, state = random_small_instance(rng)
        fast = fse.build_stage_game(state, cfg2, None)
        ref = fse.build_stage_game_reference(state, cfg2, None)
        assert fast.attacker_reps == ref.attacker_reps
        assert fast.defender_reps == ref.defender_reps
        assert (fast.allowed == ref.allowed).all()
        assert np.abs(fast.f_a - ref.f_a).max() == 0.0
        assert np.abs(fast.f_d - ref.f_d).max() == 0.0


def test_single_stage_feedback_equals_myopic():
    rng = np.random.default_rng(67)
    for _ in range(25):
        cfg, state = random_small_instance(rng, horizon=1)
        a_pol = fse.solve_stage(state, 1, cfg)
        b_pol = fse.solve_nfse(state, 1, cfg)
        assert a_pol.b_star == b_pol.b_star
        assert a_pol.q_star.support == b_pol.q_star.support
        assert a_pol.omega_a == pytest.approx(b_pol.omega_a, abs=1e-9)
        assert a_pol.omega_d == pytest.approx(b_pol.omega_d, abs=1e-9)


def test_policy_respects_coupling_and_rationality():
    rng = np.random.default_rng(71)
    for _ in range(30):
        cfg, state = random_small_instance(rng, horizon=1)
        policy = fse.solve_nfse(state, 1, cfg)
        consistent = set(restricted_attacker_set(policy.b_star, state, cfg))
        for a, p in policy.q_star.support:
            if p > 0:
                assert a in consistent
                assert policy.b_star in set(defender_strategy_set(state, a, cfg))


def test_horizon_boundary_and_continuation():
    cfg = tiny_config(horizon=2)
    state = tiny_state()
    assert fse.continuation_values(state, 3, cfg) == (0.0, 0.0)
    one = tiny_config(horizon=1)
    pol = fse.solve_stage(state, 1, one)
    assert fse.continuation_values(state, 1, one) == (pol.omega_a, pol.omega_d)


class _NoStore(fse.ValueCache):
    def __setitem__(self, key, value):
        pass

    def setdefault(self, key, value=None):
        return value


def test_cache_is_value_transparent():
    cfg = tiny_config(horizon=2)
    state = tiny_state()
    with_cache = fse.solve_stage(state, 1, cfg, fse.ValueCache())
    without = fse.solve_stage(state, 1, cfg, _NoStore())
    assert with_cache.omega_a == pytest.approx(without.omega_a, abs=1e-12)
    assert with_cache.omega_d == pytest.approx(without.omega_d, abs=1e-12)
    assert with_cache.q_star.support == without.q_star.support
    assert with_cache.b_star == without.b_star


def test_lookahead_cap_reduces_to_myopic():
    rng = np.random.default_rng(73)
    from dataclasses import replace

    for _ in range(10):
        cfg, state = random_small_instance(rng, horizon=3)
        capped = replace(cfg, lookahead_cap=1)
        pol = fse.solve_stage(state, 1, capped)
        myo = fse.solve_nfse(state, 1, cfg)
        assert pol.omega_a == pytest.approx(myo.omega_a, abs=1e-9)
        assert pol.b_star == myo.b_star


def test_low_sink_cost_support_targets_activated_sinks():
    from dataclasses import replace
    from iobtgame.harness import generate_instance, load_config, scale_loaded

    loaded = scale_loaded(load_config(), 0.1)
    cfg = replace(loaded.cfg, attack_ls_cost=0.0, als_discovery_cost=0.0, horizon=1)
    state = generate_instance(loaded, 0)
    policy = fse.solve_nfse(state, 1, cfg)
    activated = {attack_ls(s, h) for h, s in state.activated.items() if s}
    assert all(a in activated for a, p in policy.q_star.support if p > 1e-9)


def test_high_sink_cost_support_moves_to_heads():
    # one fat cluster makes head attacks the best target once sinks are dear
    types = (DeviceType(1, frozenset({1})),)
    devices = [Device(i, 1, 1) for i in range(1, 16)]
    sinks = [LocalSink(1, 1, 16.0), LocalSink(2, 1, 16.0)]
    state = build_state(types, devices, sinks)
    cfg = tiny_config(
        num_areas=1,
        num_info_types=1,
        type_catalog=types,
        attack_device_cost=(0.5,),
        deploy_device_cost=(0.5,),
        attack_ls_cost=200.0,
        als_discovery_cost=0.0,
        ch_discovery_cost=2.0,
        threshold_default=1,
        ls_weight=16.0,
        horizon=1,
    )
    policy = fse.solve_nfse(state, 1, cfg)
    heads = {attack_device(i) for i in state.headed_by}
    assert all(a in heads for a, p in policy.q_star.support if p > 1e-9)


def test_equal_probability_policy_spreads_uniformly():
    from iobtgame.harness import generate_instance, load_config, scale_loaded

    loaded = scale_loaded(load_config(), 0.1)
    state = generate_instance(loaded, 0)
    q = fse.equal_probability_policy(state)
    assert len(q.support) == 5
    assert all(p == pytest.approx(0.2) for _a, p in q.support)


def test_equal_probability_requires_an_activated_sink(cfg):
    stateless = build_state(tiny_config().type_catalog, [Device(1, 1, 1)], [])
    with pytest.raises(fse.NoActivatedLS):
        fse.equal_probability_policy(stateless)


def test_equal_probability_single_and_partial():
    cfg = tiny_config()
    state = tiny_state(sinks_per_area=1)
    q = fse.equal_probability_policy(state)
    assert q.support == ((attack_ls(1, 1), 1.0),)


def test_simulate_deterministic_and_reproducible():
    cfg = tiny_config(horizon=2)
    state = tiny_state()
    r1 = fse.simulate(state, cfg, fse.Mode.FSE, seed=5, num_runs=3)
    r2 = fse.simulate(state, cfg, fse.Mode.FSE, seed=5, num_runs=3)
    assert r1 == r2
    r3 = fse.simulate(state, cfg, fse.Mode.FSE, seed=6, num_runs=3)
    assert len(r3) == len(r1)


def test_simulate_singleton_support_sampled_exactly():
    types = (DeviceType(1, frozenset({1})),)
    devices = [Device(1, 1, 1), Device(2, 1, 1)]
    sinks = [LocalSink(1, 1, 5.0)]
    state = build_state(types, devices, sinks)
    cfg = tiny_config(
        num_areas=1, num_info_types=1, type_catalog=types,
        attack_device_cost=(0.5,), deploy_device_cost=(0.5,),
        attack_ls_cost=0.0, als_discovery_cost=0.0,
        threshold_default=1, ls_weight=6.0, horizon=1,
    )
    records = fse.simulate(state, cfg, fse.Mode.FSE, seed=0, num_runs=2)
    for rec in records:
        support = [a for a, p in rec.support if p > 1e-9]
        if len(support) == 1:
            assert rec.sampled_action == support[0]


def test_recursion_matches_unoptimized_reference():
    import iobtgame.lp as lpmod

    def solve_plain(f_a, f_d, allowed):
        gated = np.where(allowed, f_d, 0.0)
        best = None
        for bp in range(f_a.shape[1]):
            rows = np.flatnonzero(allowed[:, bp])
            if rows.size == 0:
                continue
            a_ub = [
                gated[rows, b] - f_d[rows, bp]
                for b in range(f_a.shape[1])
                if b != bp and allowed[rows, b].any()
            ]
            prog = lpmod.maximize(
                f_a[rows, bp],
                a_ub=np.array(a_ub) if a_ub else None,
                b_ub=np.zeros(len(a_ub)) if a_ub else None,
                a_eq=np.ones((1, rows.size)),
                b_eq=np.ones(1),
            )
            sol = lpmod.solve_lp(prog)
            if sol.status is not lpmod.LPStatus.OPTIMAL:
                continue
            if best is None or sol.value > best[0] + 1e-9:
                q = np.zeros(f_a.shape[0])
                q[rows] = sol.x
                best = (sol.value, bp, q)
        return best

    def reference(state, k, cfg, memo):
        if k <= 0 or (not state.devices and not state.sinks):
            return (0.0, 0.0)
        key = (k, canonical_key(state))
        if key in memo:
            return memo[key]
        game = fse.build_stage_game_reference(
            state, cfg, (lambda ch: reference(ch, k - 1, cfg, memo)) if k > 1 else None
        )
        v, bp, q = solve_plain(game.f_a, game.f_d, game.allowed)
        memo[key] = (float(v), float(q @ game.f_d[:, bp]))
        return memo[key]

    rng = np.random.default_rng(79)
    for _ in range(12):
        cfg, state = random_small_instance(rng, horizon=2)
        ref = reference(state, 2, cfg, {})
        pol = fse.solve_stage(state, 1, cfg, fse.ValueCache())
        assert pol.omega_a == pytest.approx(ref[0], abs=1e-6)
        assert pol.omega_d == pytest.approx(ref[1], abs=1e-6)
