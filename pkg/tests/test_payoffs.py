from __future__ import annotations

import numpy as np
import pytest

from iobtgame.checks import random_small_instance
from iobtgame.netmodel import (
    Device,
    DeviceType,
    LinkModel,
    LocalSink,
    attack_device,
    attack_ls,
    activate_ls,
    attacker_strategy_set,
    build_state,
    defender_strategy_set,
    deploy_device,
    deploy_ls,
    set_ch,
    step,
)
from iobtgame.payoffs import (
    UnhandledCase,
    attack_cost,
    attacker_payoff,
    defender_payoff,
    deploy_cost_and_utility,
    disconnected_weight,
    flags_of,
    latency,
    sensor_disconnect_count,
    static_latency,
)
from conftest import tiny_config, tiny_state


# ---------------------------------------------------------------------------
# costs and utility
# ---------------------------------------------------------------------------


def test_attack_cost_plain_device(cfg, state):
    # single-sensor device, not a head: just the per-type base 0.5
    non_head = [i for i in state.devices
                if state.devices[i].type_id == 1 and i not in state.headed_by][0]
    assert attack_cost(attack_device(non_head), state, cfg) == 0.5


def test_attack_cost_activated_sink():
    cfg = tiny_config(attack_ls_cost=50.0, als_discovery_cost=100.0)
    state = tiny_state()
    assert attack_cost(attack_ls(state.activated_sink(1), 1), state, cfg) == 150.0
    idle = [l for l in state.sinks if l != state.activated_sink(1)][0]
    assert attack_cost(attack_ls(idle, 1), state, cfg) == 50.0


def test_attack_cost_multi_cluster_head():
    cfg = tiny_config(attack_device_cost=(0.5, 0.5, 2.0), ch_discovery_cost=20.0)
    catalog = cfg.type_catalog
    # the dual-sensor device heads both clusters
    devices = [Device(1, 3, 1), Device(2, 1, 1), Device(3, 2, 1)]
    sinks = [LocalSink(1, 1, 10.0)]
    state = build_state(catalog, devices, sinks)
    assert state.headed_by[1] == (1, 2)
    assert attack_cost(attack_device(1), state, cfg) == 2.0 + 2 * 20.0


def test_deploy_ls_cost_and_shortfall():
    cfg = tiny_config(deploy_ls_cost=50.0, ls_target=3)
    state = tiny_state(sinks_per_area=2)
    assert deploy_cost_and_utility(deploy_ls(1), state, cfg) == (50.0, 1.0)


def test_deploy_device_counts_deficient_covered_clusters():
    cfg = tiny_config(threshold_default=4)
    state = tiny_state(per_cluster=3)  # both clusters hold 3 < 4
    c, u = deploy_cost_and_utility(deploy_device(3, 1), state, cfg)
    assert (c, u) == (1.0, 2.0)


def test_role_changes_cost_nothing(cfg, state):
    assert deploy_cost_and_utility(set_ch(1, 1, 1), state, cfg) == (0.0, 0.0)
    assert deploy_cost_and_utility(activate_ls(2, 1), state, cfg) == (0.0, 0.0)


# ---------------------------------------------------------------------------
# disconnected weight
# ---------------------------------------------------------------------------


def test_plain_member_counts_once(cfg, state):
    non_head = [i for i in state.devices
                if state.devices[i].type_id == 1 and i not in state.headed_by][0]
    response = set_ch(state.ch(2, 1), 2, 1)
    assert disconnected_weight(attack_device(non_head), response, state) == 1.0


def test_head_takes_the_whole_cluster():
    cfg = tiny_config(threshold_default=1)
    catalog = cfg.type_catalog
    devices = [Device(i, 1, 1) for i in range(1, 16)]
    sinks = [LocalSink(1, 1, 10.0)]
    state = build_state(catalog, devices, sinks)
    assert state.cluster_size(1, 1) == 15
    assert disconnected_weight(attack_device(state.ch(1, 1)), deploy_ls(1), state) == 15.0


def _area_kill_state():
    """Subarea 1 carries 20 sensor units and a weight-15 activated sink."""
    types = (DeviceType(1, frozenset({1})), DeviceType(2, frozenset({2})))
    devices = [Device(i, 1, 1) for i in range(1, 11)]
    devices += [Device(i, 2, 1) for i in range(11, 21)]
    devices += [Device(21, 1, 2), Device(22, 1, 2), Device(23, 2, 2), Device(24, 2, 2)]
    sinks = [LocalSink(1, 1, 15.0), LocalSink(2, 1, 15.0),
             LocalSink(3, 2, 15.0), LocalSink(4, 2, 15.0)]
    return build_state(types, devices, sinks)


def _area_kill_config(**overrides):
    fields = dict(
        num_areas=2,
        num_info_types=2,
        type_catalog=(DeviceType(1, frozenset({1})), DeviceType(2, frozenset({2}))),
        attack_device_cost=(0.5, 0.5),
        attack_ls_cost=50.0,
        ch_discovery_cost=20.0,
        als_discovery_cost=0.0,
        deploy_device_cost=(0.5, 0.5),
        deploy_ls_cost=50.0,
        ls_weight=15.0,
        threshold_default=1,
    )
    fields.update(overrides)
    from iobtgame.netmodel import GameConfig

    return GameConfig(**fields)


def test_activated_sink_kill_counts_the_subarea_even_when_reactivated():
    state = _area_kill_state()
    act = state.activated_sink(1)
    other = [l for l in state.area_sinks[1] if l != act][0]
    value = disconnected_weight(attack_ls(act, 1), activate_ls(other, 1), state)
    assert value == 20.0 + 15.0  # device weight plus the destroyed sink itself


def test_reactivation_credit_for_a_dark_subarea():
    cfg = _area_kill_config()
    state = _area_kill_state()
    act = state.activated_sink(1)
    other = [l for l in state.area_sinks[1] if l != act][0]
    # stage 1 severs subarea 1 without reactivation
    dark = step(state, attack_ls(act, 1), set_ch(state.ch(1, 2), 1, 2), cfg)
    assert dark.activated_sink(1) == 0
    # stage 2: an ordinary kill elsewhere while the defender restores area 1
    target = dark.cluster(1, 2)[-1]
    value = disconnected_weight(attack_device(target), activate_ls(other, 1), dark)
    assert value == 1.0 - 20.0  # credit equals the surviving device weight


def test_idle_sink_kill_counts_its_own_weight_only():
    state = _area_kill_state()
    idle = [l for l in state.area_sinks[1] if l != state.activated_sink(1)][0]
    assert disconnected_weight(attack_ls(idle, 1), deploy_ls(1), state) == 15.0


def test_replacement_joining_a_headless_cluster_is_lost_too():
    cfg = _area_kill_config()
    state = _area_kill_state()
    head = state.ch(1, 1)
    v = disconnected_weight(attack_device(head), deploy_device(1, 1), state)
    assert v == state.cluster_size(1, 1) + 1


def test_sensor_count_variant_zeroes_sink_weights():
    state = _area_kill_state()
    act = state.activated_sink(1)
    other = [l for l in state.area_sinks[1] if l != act][0]
    assert sensor_disconnect_count(attack_ls(act, 1), activate_ls(other, 1), state) == 20.0


# ---------------------------------------------------------------------------
# latency
# ---------------------------------------------------------------------------


def test_single_cluster_two_hops_plus_sink_hop():
    types = (DeviceType(1, frozenset({1})),)
    devices = [Device(1, 1, 1), Device(2, 1, 1), Device(3, 1, 1)]
    sinks = [LocalSink(1, 1, 5.0)]
    state = build_state(types, devices, sinks)
    link = LinkModel(packet_size=1.0, capacity=1.0, gs_delay=1.0)
    lam = latency(attack_device(2), set_ch(1, 1, 1), state, link)
    assert lam == pytest.approx(3.0)


def test_every_subarea_dark_means_zero_delay():
    cfg = _area_kill_config()
    state = _area_kill_state()
    dark = step(state, attack_ls(state.activated_sink(1), 1),
                set_ch(state.ch(1, 1), 1, 1), cfg)
    dark = step(dark, attack_ls(dark.activated_sink(2), 2),
                set_ch(dark.ch(1, 1), 1, 1), cfg)
    assert static_latency(dark, cfg.link) == 0.0
    a = attack_device(sorted(dark.devices)[0])
    assert latency(a, deploy_ls(1), dark, cfg.link) == 0.0


def test_connected_subarea_without_clusters_still_pays_the_sink_hop():
    types = (DeviceType(1, frozenset({1})),)
    devices = [Device(1, 1, 1)]
    sinks = [LocalSink(1, 1, 5.0)]
    state = build_state(types, devices, sinks)
    link = LinkModel(gs_delay=0.25)
    cfg = tiny_config(
        num_areas=1, num_info_types=1, type_catalog=types,
        attack_device_cost=(0.5,), deploy_device_cost=(0.5,),
        threshold_default=1, ls_weight=6.0, link=link,
    )
    # destroying the only member clears every cluster; the sink remains
    lam = latency(attack_device(1), deploy_ls(1), state, link)
    assert lam == pytest.approx(0.25)


def test_reactivation_routes_through_the_new_sink():
    state = _area_kill_state()
    act = state.activated_sink(1)
    other = [l for l in state.area_sinks[1] if l != act][0]
    link = LinkModel(gs_overrides={other: 0.2, act: 0.01, 3: 0.01, 4: 0.01})
    lam = latency(attack_ls(act, 1), activate_ls(other, 1), state, link)
    assert lam == pytest.approx(2 * (1.0 / 100.0) + 0.2)


def test_capacity_scaling_is_homogeneous():
    # the sink hop is a hop too: scaling every link capacity by kappa
    # divides each delay term, and the total, by exactly kappa
    state = _area_kill_state()
    kappa = 4.0
    link1 = LinkModel(capacity=100.0, gs_delay=0.04)
    link2 = LinkModel(capacity=100.0 * kappa, gs_delay=0.04 / kappa)
    act = state.activated_sink(1)
    for a, b in [
        (attack_device(1), set_ch(2, 1, 1)),
        (attack_ls(act, 1), deploy_ls(1)),
    ]:
        assert latency(a, b, state, link1) == pytest.approx(
            kappa * latency(a, b, state, link2)
        )


# ---------------------------------------------------------------------------
# composite payoffs
# ---------------------------------------------------------------------------


def test_attacker_payoff_composition():
    cfg = _area_kill_config(attack_ls_cost=0.5)
    state = _area_kill_state()
    act = state.activated_sink(1)
    a = attack_ls(act, 1)
    assert attacker_payoff(a, deploy_ls(2), state, cfg) == pytest.approx(35.0 - 0.5)
    cfg0 = _area_kill_config(nu=0.0, attack_ls_cost=150.0)
    assert attacker_payoff(a, deploy_ls(2), state, cfg0) == pytest.approx(35.0)


def test_defender_payoff_worked_example():
    # kill the activated sink of the 35-weight subarea while the defender
    # deploys a sink elsewhere: 1 - 35 - 100*0.03 - 50 = -87
    cfg = _area_kill_config(ls_target=3, deploy_ls_cost=50.0)
    state = _area_kill_state()
    act = state.activated_sink(1)
    value = defender_payoff(attack_ls(act, 1), deploy_ls(2), state, cfg, cfg.link)
    assert value == pytest.approx(1.0 - 35.0 - 100.0 * 0.03 - 50.0)


def test_defender_payoff_latency_indifferent_when_mu_zero():
    cfg = _area_kill_config(mu=0.0)
    state = _area_kill_state()
    act = state.activated_sink(1)
    value = defender_payoff(attack_ls(act, 1), deploy_ls(2), state, cfg, cfg.link)
    assert value == pytest.approx(1.0 - 35.0 - 50.0)


def test_attacker_payoff_strictly_decreasing_in_nu():
    state = _area_kill_state()
    a = attack_ls(state.activated_sink(1), 1)
    values = [
        attacker_payoff(a, deploy_ls(2), state, _area_kill_config(nu=nu))
        for nu in (0.0, 0.5, 1.0, 2.0)
    ]
    assert all(x > y for x, y in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# case-table totality and the replay oracle
# ---------------------------------------------------------------------------


def test_rejects_illegal_pairs(cfg, state):
    with pytest.raises(UnhandledCase):
        disconnected_weight(set_ch(1, 1, 1), deploy_ls(1), state)
    with pytest.raises(UnhandledCase):
        latency(attack_device(1), attack_device(2), state, cfg.link)


def test_case_table_total_and_consistent_with_replay():
    rng = np.random.default_rng(13)
    for _ in range(120):
        cfg, state = random_small_instance(rng)
        flags = flags_of(state)
        attacks = attacker_strategy_set(state)
        a = attacks[int(rng.integers(0, len(attacks)))]
        moves = defender_strategy_set(state, a, cfg)
        b = moves[int(rng.integers(0, len(moves)))]
        s_d = disconnected_weight(a, b, state, flags)
        lam = latency(a, b, state, cfg.link, flags)
        assert lam >= 0.0
        assert lam == pytest.approx(static_latency(step(state, a, b, cfg), cfg.link))
        # restoration credit never exceeds the restored component's weight
        if b.kind.name == "SET_CH":
            assert s_d >= -state.cluster_size(b.info, b.area)
        elif b.kind.name == "ACTIVATE_LS":
            assert s_d >= -state.area_weight(b.area) - 1e-9


def test_additivity_over_memberships():
    rng = np.random.default_rng(29)
    for _ in range(40):
        _cfg, state = random_small_instance(rng)
        for i, d in state.devices.items():
            if i in state.headed_by:
                continue
            k = len(state.catalog[d.type_id - 1].info_set)
            v = disconnected_weight(attack_device(i), deploy_ls(d.subarea), state)
            assert v == pytest.approx(k)
