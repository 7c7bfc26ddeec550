from __future__ import annotations

import numpy as np
import pytest

from iobtgame.checks import random_small_instance
from iobtgame.netmodel import (
    ActionKind,
    Device,
    DeviceType,
    EmptyFeasibleSet,
    InvalidAction,
    LocalSink,
    ViewPair,
    apply_transition,
    attack_device,
    attack_ls,
    activate_ls,
    attacker_strategy_set,
    build_state,
    canonical_key,
    config_automorphisms,
    defender_strategy_set,
    deploy_device,
    deploy_ls,
    destroy_projection,
    full_defender_set,
    relabel_devices,
    restricted_attacker_set,
    set_ch,
    step,
    threshold_clusters,
)
from conftest import tiny_catalog, tiny_config, tiny_state


# ---------------------------------------------------------------------------
# attacker strategy set
# ---------------------------------------------------------------------------


def test_attacker_set_enumerates_live_nodes():
    catalog = tiny_catalog()
    devices = [Device(1, 1, 1), Device(2, 2, 1)]
    sinks = [LocalSink(5, 1, 10.0)]
    state = build_state(catalog, devices, sinks)
    assert set(attacker_strategy_set(state)) == {
        attack_device(1),
        attack_device(2),
        attack_ls(5, 1),
    }


def test_attacker_set_skips_dead_devices():
    catalog = tiny_catalog()
    devices = [Device(1, 1, 1, alive=False)]
    sinks = [LocalSink(5, 1, 10.0)]
    state = build_state(catalog, devices, sinks)
    assert set(attacker_strategy_set(state)) == {attack_ls(5, 1)}


def test_attacker_set_matches_raw_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(25):
        _cfg, state = random_small_instance(rng)
        expected = {attack_device(i) for i in state.devices}
        expected |= {attack_ls(l, s.subarea) for l, s in state.sinks.items()}
        assert set(attacker_strategy_set(state)) == expected


# ---------------------------------------------------------------------------
# defender strategy set and the threshold coupling
# ---------------------------------------------------------------------------


def test_defender_set_unrestricted_above_threshold(cfg, state):
    # cluster sizes are 3, threshold 2: the full move set applies
    moves = defender_strategy_set(state, attack_device(1), cfg)
    assert set(moves) == set(full_defender_set(state, cfg))


def test_defender_set_forced_at_threshold():
    cfg = tiny_config()
    state = tiny_state(per_cluster=2)
    assert state.cluster_size(1, 1) == 2 == cfg.threshold(1, 1)
    moves = defender_strategy_set(state, attack_device(1), cfg)
    # only deployments covering information type 1 restore the cluster
    assert set(moves) == {deploy_device(1, 1), deploy_device(3, 1)}


def test_defender_set_full_for_sink_attacks():
    cfg = tiny_config()
    state = tiny_state(per_cluster=2)
    moves = defender_strategy_set(state, attack_ls(1, 1), cfg)
    assert set(moves) == set(full_defender_set(state, cfg))


def test_forced_set_never_empty_for_valid_catalogs():
    rng = np.random.default_rng(11)
    for _ in range(40):
        cfg, state = random_small_instance(rng, force_threshold_edge=True)
        for a in attacker_strategy_set(state):
            moves = defender_strategy_set(state, a, cfg)
            assert moves


def test_restricted_set_full_without_threshold_clusters(cfg, state):
    assert not threshold_clusters(state, cfg)
    full = set(attacker_strategy_set(state))
    for bp in full_defender_set(state, cfg):
        assert set(restricted_attacker_set(bp, state, cfg)) == full


def test_restricted_set_excludes_threshold_cluster_members():
    cfg = tiny_config()
    state = tiny_state(per_cluster=2)
    members = set(state.cluster(1, 1)) | set(state.cluster(2, 1))
    sub = set(restricted_attacker_set(activate_ls(2, 1), state, cfg))
    assert sub == {
        a for a in attacker_strategy_set(state)
        if not (a.kind == ActionKind.ATTACK_DEVICE and a.node in members)
    }


def test_restricted_set_full_for_restoring_deploy():
    cfg = tiny_config()
    state = tiny_state(per_cluster=2)
    # deploying the dual-sensor type covers any single-cluster deficiency
    sub = restricted_attacker_set(deploy_device(3, 1), state, cfg)
    assert set(sub) == set(attacker_strategy_set(state))


# ---------------------------------------------------------------------------
# transitions
# ---------------------------------------------------------------------------


def test_destroyed_device_replaced_by_fresh_deployment(cfg, state):
    n0 = state.total_deployed
    nxt = step(state, attack_device(3), deploy_device(3, 1), cfg)
    assert 3 not in nxt.devices
    assert n0 + 1 in nxt.devices
    assert n0 + 1 in nxt.cluster(1, 1) and n0 + 1 in nxt.cluster(2, 1)
    assert len(nxt.devices) == len(state.devices)


def test_destroyed_sink_replaced_by_fresh_sink(cfg, state):
    wm = state.sink_watermark
    nxt = step(state, attack_ls(1, 1), deploy_ls(1), cfg)
    assert 1 not in nxt.sinks
    assert wm + 1 in nxt.sinks
    assert nxt.activated_sink(1) == 0  # a fresh sink is never auto-activated
    assert len(nxt.sinks) == len(state.sinks)


def test_activation_follows_attack_on_ordinary_device(cfg, state):
    non_ch = [i for i in state.devices if i not in dict(state.ch_index).values()]
    target = non_ch[0]
    size0 = state.cluster_size(1, 1)
    nxt = step(state, attack_device(target), activate_ls(2, 1), cfg)
    assert nxt.activated_sink(1) == 2
    touched = 1 in state.device_type(target).info_set
    assert nxt.cluster_size(1, 1) == size0 - (1 if touched else 0)


def test_appointing_the_destroyed_device_leaves_role_vacant(cfg, state):
    ch = state.ch(1, 1)
    nxt = step(state, attack_device(ch), set_ch(ch, 1, 1), cfg)
    assert nxt.ch(1, 1) == 0


def test_activating_the_destroyed_sink_leaves_area_dark(cfg, state):
    act = state.activated_sink(1)
    nxt = step(state, attack_ls(act, 1), activate_ls(act, 1), cfg)
    assert nxt.activated_sink(1) == 0


def test_step_rejects_unavailable_response():
    cfg = tiny_config()
    state = tiny_state(per_cluster=2)
    with pytest.raises(InvalidAction):
        step(state, attack_device(1), set_ch(2, 2, 1), cfg)


def test_view_pair_offset(cfg, state):
    views = ViewPair(state, destroy_projection(state, attack_device(1)))
    nxt = apply_transition(views, attack_device(1), activate_ls(2, 1), cfg,
                           a_next=attack_ls(2, 1))
    assert 1 not in nxt.attacker_view.devices
    # the defender's view is one destruction ahead
    assert 2 in nxt.attacker_view.sinks
    assert 2 not in nxt.defender_view.sinks
    assert nxt.attacker_view.devices == nxt.defender_view.devices
    # horizon end: both observation points coincide
    last = apply_transition(nxt, attack_device(3), deploy_ls(1), cfg, a_next=None)
    assert last.attacker_view == last.defender_view


def test_transition_invariants_fuzz():
    rng = np.random.default_rng(7)
    for _ in range(60):
        cfg, state = random_small_instance(rng)
        attacks = attacker_strategy_set(state)
        a = attacks[int(rng.integers(0, len(attacks)))]
        for b in defender_strategy_set(state, a, cfg):
            nxt = step(state, a, b, cfg)
            nxt.validate()
            d_dev = (a.kind == ActionKind.ATTACK_DEVICE) - (
                b.kind == ActionKind.DEPLOY_DEVICE
            )
            assert len(nxt.devices) == len(state.devices) - d_dev
            d_ls = (a.kind == ActionKind.ATTACK_LS) - (b.kind == ActionKind.DEPLOY_LS)
            assert len(nxt.sinks) == len(state.sinks) - d_ls
            # cluster membership stays derivable from types and subareas
            for (j, h), ids in nxt.clusters.items():
                for i in ids:
                    d = nxt.devices[i]
                    assert d.subarea == h and j in nxt.catalog[d.type_id - 1].info_set


def test_forced_deploy_restores_every_touched_cluster():
    rng = np.random.default_rng(19)
    checked = 0
    for _ in range(60):
        cfg, state = random_small_instance(rng, force_threshold_edge=True)
        for a in attacker_strategy_set(state):
            if a.kind != ActionKind.ATTACK_DEVICE:
                continue
            dev = state.devices[a.node]
            touched = [
                j
                for j in state.catalog[dev.type_id - 1].info_set
                if state.cluster_size(j, dev.subarea) <= cfg.threshold(j, dev.subarea)
            ]
            if not touched:
                continue
            for b in defender_strategy_set(state, a, cfg):
                nxt = step(state, a, b, cfg)
                for j in state.catalog[dev.type_id - 1].info_set:
                    assert nxt.cluster_size(j, dev.subarea) >= cfg.threshold(
                        j, dev.subarea
                    )
                checked += 1
    assert checked > 10


# ---------------------------------------------------------------------------
# canonical key
# ---------------------------------------------------------------------------


def test_key_invariant_under_same_role_swap(state):
    ids = sorted(state.devices)
    type1 = [i for i in ids if state.devices[i].type_id == 1]
    non_ch = [i for i in type1 if i not in state.headed_by]
    assert len(non_ch) >= 1
    # swap a non-head with another same-type device of the same role set
    rng = np.random.default_rng(0)
    mapping = {i: i for i in ids}
    a, b = type1[0], type1[1]
    if state.headed_by.get(a, ()) == state.headed_by.get(b, ()):
        mapping[a], mapping[b] = b, a
        assert canonical_key(relabel_devices(state, mapping)) == canonical_key(state)


def test_key_changes_when_head_changes(cfg, state):
    other = [i for i in state.cluster(1, 1) if i != state.ch(1, 1)][0]
    moved = step(state, attack_ls(2, 1), set_ch(other, 1, 1), cfg)
    base = step(state, attack_ls(2, 1), set_ch(state.ch(1, 1), 1, 1), cfg)
    key_moved = canonical_key(moved)
    key_base = canonical_key(base)
    if state.device_signature(other)[0] != state.device_signature(state.ch(1, 1))[0]:
        assert key_moved != key_base


def test_key_permutation_fuzz():
    rng = np.random.default_rng(23)
    _cfg, state = random_small_instance(rng)
    key = canonical_key(state)
    ids = sorted(state.devices)
    for _ in range(1000):
        perm = rng.permutation(ids)
        mapping = {i: int(p) for i, p in zip(ids, perm)}
        assert canonical_key(relabel_devices(state, mapping)) == key


def test_catalog_automorphisms_identity_first():
    cfg = tiny_config()
    autos = config_automorphisms(cfg)
    assert autos[0] == ((1, 2), (1, 2, 3))
    # swapping the two information types maps type 1 <-> type 2 and fixes 3
    assert ((2, 1), (2, 1, 3)) in autos


def test_empty_feasible_set_unreachable_for_covering_catalogs():
    # every device's own type covers any deficiency it leaves, so the
    # forced set can only be empty for corrupted states
    rng = np.random.default_rng(31)
    for _ in range(30):
        cfg, state = random_small_instance(rng, force_threshold_edge=True)
        for a in attacker_strategy_set(state):
            defender_strategy_set(state, a, cfg)  # must not raise
