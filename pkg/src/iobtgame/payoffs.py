"""Stage payoffs: disconnected weight, delivery latency, and move costs.

The disconnected-weight term is a per-stage flow: weight newly severed
from the global sink by the attack (a cluster head takes its whole cluster
down, an ordinary device counts one per cluster membership, an activated
sink takes its whole subarea down), minus restoration credits when the
response re-heads a disconnected cluster or re-activates a disconnected
subarea.  The latency term is the delivery delay of the network as it
stands after both moves: the slowest connected cluster's two hops plus its
subarea's hop to the global sink, maximised over connected subareas.
Severed clusters and subareas contribute nothing; a max over nothing is 0.

The source tables for these terms carry a few inconsistent signs and
gates; this module implements the structurally consistent reading (every
surviving connected component contributes positively, destruction terms
and restoration credits apply uniformly across response kinds).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .netmodel import (
    Action,
    ActionKind,
    ATTACKER_KINDS,
    DEFENDER_KINDS,
    GameConfig,
    LinkModel,
    NetworkState,
    destroy_projection,
)


class UnhandledCase(Exception):
    """A move pair outside the payoff case table (programming error)."""


__all__ = [
    "LinkModel",
    "DisconnectionFlags",
    "PayoffTerms",
    "UnhandledCase",
    "flags_of",
    "attack_cost",
    "deploy_cost_and_utility",
    "disconnected_weight",
    "sensor_disconnect_count",
    "cluster_delay",
    "latency",
    "static_latency",
    "stage_payoff_terms",
    "attacker_payoff",
    "defender_payoff",
]


@dataclass(frozen=True)
class DisconnectionFlags:
    """Which subareas / clusters are currently cut off from the global
    sink: a subarea with no activated sink, and a cluster with no head or
    inside a cut-off subarea."""

    z_area: Mapping[int, int]
    z_cluster: Mapping[tuple[int, int], int]

    def area(self, h: int) -> int:
        return self.z_area.get(h, 1)

    def cluster(self, info: int, area: int) -> int:
        return self.z_cluster.get((info, area), 1)


def flags_of(state: NetworkState) -> DisconnectionFlags:
    z_area = {h: 0 if state.activated_sink(h) else 1 for h in state.areas}
    keys = set(state.clusters) | set(state.ch_index)
    z_cluster = {
        (j, h): 1 if (state.ch(j, h) == 0 or z_area.get(h, 1)) else 0
        for (j, h) in keys
    }
    return DisconnectionFlags(z_area=z_area, z_cluster=z_cluster)


@dataclass(frozen=True)
class PayoffTerms:
    """The five per-stage payoff components."""

    s_d: float
    latency: float
    c_a: float
    c_d: float
    u_d: float

    def attacker_value(self, cfg: GameConfig) -> float:
        return self.s_d - cfg.nu * self.c_a

    def defender_value(self, cfg: GameConfig) -> float:
        return self.u_d - cfg.eta * self.s_d - cfg.mu * self.latency - cfg.lam * self.c_d


# ---------------------------------------------------------------------------
# Costs and deployment utility
# ---------------------------------------------------------------------------


def attack_cost(a: Action, state: NetworkState, cfg: GameConfig) -> float:
    """Compromise cost: the per-type (or sink) base plus the discovery
    surcharge for each headed cluster / for the activated sink."""
    if a.kind == ActionKind.ATTACK_DEVICE:
        d = state.devices[a.node]
        heads = len(state.headed_by.get(a.node, ()))
        return cfg.attack_device_cost[d.type_id - 1] + heads * cfg.ch_discovery_cost
    if a.kind == ActionKind.ATTACK_LS:
        activated = state.activated_sink(a.area) == a.node
        return cfg.attack_ls_cost + (cfg.als_discovery_cost if activated else 0.0)
    raise UnhandledCase(f"{a.describe()} is not an attacker move")


def deploy_cost_and_utility(
    b: Action, state: NetworkState, cfg: GameConfig
) -> tuple[float, float]:
    """(cost, utility) of the defender's move; role changes are free and
    earn nothing.  A device deployment earns one utility point per covered
    cluster currently under its required size; a sink deployment earns the
    shortfall against the recommended sink count."""
    if b.kind == ActionKind.DEPLOY_DEVICE:
        info = cfg.type_catalog[b.node - 1].info_set
        u = float(
            sum(1 for j in info if state.cluster_size(j, b.area) < cfg.threshold(j, b.area))
        )
        return (cfg.deploy_device_cost[b.node - 1], u)
    if b.kind == ActionKind.DEPLOY_LS:
        return (cfg.deploy_ls_cost, float(cfg.ls_target - len(state.area_sinks.get(b.area, ()))))
    if b.kind in DEFENDER_KINDS:
        return (0.0, 0.0)
    raise UnhandledCase(f"{b.describe()} is not a defender move")


# ---------------------------------------------------------------------------
# Disconnected weight
# ---------------------------------------------------------------------------


def _area_weight(state: NetworkState, area: int, sink_scale: float) -> float:
    total = float(sum(state.device_weight(i) for i in state.area_devices.get(area, ())))
    s = state.activated_sink(area)
    if s:
        total += state.sinks[s].weight * sink_scale
    return total


def disconnected_weight(
    a: Action,
    b: Action,
    state: NetworkState,
    flags: DisconnectionFlags | None = None,
    *,
    sink_scale: float = 1.0,
) -> float:
    """Weight severed from the global sink by the stage pair (a, b).

    ``sink_scale`` weights the sink nodes' own contribution; 0 yields the
    pure sensor count used by the disconnected-sensors metric.
    """
    if a.kind not in ATTACKER_KINDS or b.kind not in DEFENDER_KINDS:
        raise UnhandledCase(f"({a.describe()}, {b.describe()}) is not a legal stage pair")
    if flags is None:
        flags = flags_of(state)

    if a.kind == ActionKind.ATTACK_DEVICE:
        i = a.node
        dev = state.devices[i]
        h_i = dev.subarea
        covered: frozenset[int] = frozenset()
        if b.kind == ActionKind.DEPLOY_DEVICE and b.area == h_i:
            covered = state.catalog[b.node - 1].info_set
        base = 0.0
        for j in state.catalog[dev.type_id - 1].info_set:
            if state.ch(j, h_i) == i:
                # head down: the whole cluster is cut off, including a
                # same-stage replacement that joins the headless cluster
                base += state.cluster_size(j, h_i) + (1.0 if j in covered else 0.0)
            else:
                base += 1.0
    else:
        m, h_a = a.node, a.area
        if state.activated_sink(h_a) == m:
            base = _area_weight(state, h_a, sink_scale)
            if b.kind == ActionKind.DEPLOY_DEVICE and b.area == h_a:
                # the replacement lands in the severed subarea
                base += state.catalog[b.node - 1].sensor_count
        else:
            base = state.sinks[m].weight * sink_scale

    if b.kind == ActionKind.SET_CH and flags.cluster(b.info, b.area):
        base -= state.cluster_size(b.info, b.area)
    elif b.kind == ActionKind.ACTIVATE_LS and flags.area(b.area):
        base -= _area_weight(state, b.area, sink_scale)
    return base


def sensor_disconnect_count(
    a: Action, b: Action, state: NetworkState, flags: DisconnectionFlags | None = None
) -> float:
    """Disconnected weight in sensor units (sink nodes count nothing)."""
    return disconnected_weight(a, b, state, flags, sink_scale=0.0)


# ---------------------------------------------------------------------------
# Latency
# ---------------------------------------------------------------------------


def cluster_delay(
    link: LinkModel, head: int, sink: int, members: tuple[int, ...] | frozenset[int]
) -> float:
    """Two-hop cluster delay: slowest member-to-head hop plus head-to-sink
    hop.  The head's own reading needs no hop."""
    worst = 0.0
    for n in members:
        if n == head:
            continue
        d = link.hop(n, head)
        if d > worst:
            worst = d
    return link.hop(head, sink) + worst


def _area_delay(
    state: NetworkState,
    h: int,
    link: LinkModel,
    a: Action | None = None,
    b: Action | None = None,
) -> float:
    """Delivery delay of one subarea after an optional move pair: a
    destroyed head/sink vacates its role unless the response fills it in
    the same stage, a deployment joins its covered clusters, appointing a
    node destroyed this stage leaves the role vacant.  Zero when the
    subarea has no activated sink (it contributes nothing)."""
    destroyed_device = a.node if a is not None and a.kind == ActionKind.ATTACK_DEVICE else 0
    destroyed_sink = a.node if a is not None and a.kind == ActionKind.ATTACK_LS else 0
    new_cover: frozenset[int] = frozenset()
    if b is not None and b.kind == ActionKind.DEPLOY_DEVICE and b.area == h:
        new_cover = state.catalog[b.node - 1].info_set
    new_device = state.total_deployed + 1 if new_cover else 0

    s = state.activated_sink(h)
    if destroyed_sink and s == destroyed_sink:
        s = 0
    if b is not None and b.kind == ActionKind.ACTIVATE_LS and b.area == h:
        s = b.node if b.node != destroyed_sink else 0
    if not s:
        return 0.0

    destroyed_cover: frozenset[int] = frozenset()
    if destroyed_device:
        dev = state.devices[destroyed_device]
        if dev.subarea == h:
            destroyed_cover = state.catalog[dev.type_id - 1].info_set

    uniform = link.is_uniform
    one_hop = link.packet_size / link.capacity
    area_worst = 0.0
    for j in state.info_ids:
        f = state.ch(j, h)
        if destroyed_device and f == destroyed_device:
            f = 0
        if b is not None and b.kind == ActionKind.SET_CH and (b.info, b.area) == (j, h):
            f = b.node if b.node != destroyed_device else 0
        if not f:
            continue
        if uniform:
            others = (
                state.cluster_size(j, h)
                - (1 if j in destroyed_cover else 0)
                + (1 if j in new_cover else 0)
                - 1  # the head itself
            )
            d = one_hop + (one_hop if others >= 1 else 0.0)
        else:
            members = [i for i in state.cluster(j, h) if i != destroyed_device]
            if j in new_cover:
                members.append(new_device)
            d = cluster_delay(link, f, s, members)
        if d > area_worst:
            area_worst = d
    return area_worst + link.gs(s)


def _static_area_delays(state: NetworkState, link: LinkModel) -> dict[int, float]:
    cache = state.__dict__.get("_area_delay_cache")
    if cache is not None and cache[0] is link:
        return cache[1]
    delays = {h: _area_delay(state, h, link) for h in state.areas}
    state.__dict__["_area_delay_cache"] = (link, delays)
    return delays


def latency(
    a: Action,
    b: Action,
    state: NetworkState,
    link: LinkModel,
    flags: DisconnectionFlags | None = None,
) -> float:
    """Delivery delay of the network after the stage pair (a, b).

    Each move only touches its own subarea, so the other subareas' delays
    are shared across all pairs on the same state.
    """
    if a.kind not in ATTACKER_KINDS or b.kind not in DEFENDER_KINDS:
        raise UnhandledCase(f"({a.describe()}, {b.describe()}) is not a legal stage pair")
    if a.kind == ActionKind.ATTACK_DEVICE:
        a_area = state.devices[a.node].subarea
    else:
        a_area = a.area
    affected = {a_area, b.area}
    base = _static_area_delays(state, link)
    worst = 0.0
    for h in state.areas:
        v = _area_delay(state, h, link, a, b) if h in affected else base[h]
        if v > worst:
            worst = v
    return worst


def static_latency(state: NetworkState, link: LinkModel) -> float:
    """Delivery delay of a network at rest (no pending moves)."""
    worst = 0.0
    for h in state.areas:
        s = state.activated_sink(h)
        if not s:
            continue
        area_worst = 0.0
        for j in state.info_ids:
            f = state.ch(j, h)
            if not f:
                continue
            d = cluster_delay(link, f, s, state.cluster(j, h))
            if d > area_worst:
                area_worst = d
        total = area_worst + link.gs(s)
        if total > worst:
            worst = total
    return worst


def _reset_delay_cache(state: NetworkState) -> None:
    state.__dict__.pop("_area_delay_cache", None)


# ---------------------------------------------------------------------------
# Composite stage payoffs
# ---------------------------------------------------------------------------


def stage_payoff_terms(
    a: Action, b: Action, state: NetworkState, cfg: GameConfig, link: LinkModel
) -> PayoffTerms:
    """All five payoff components for one stage pair.

    Deployment cost/utility are evaluated on the defender's observation
    point (the network with the attack applied): a deployment's worth is
    the shortfall it actually restores.
    """
    flags = flags_of(state)
    seen = destroy_projection(state, a)
    c_d, u_d = deploy_cost_and_utility(b, seen, cfg)
    return PayoffTerms(
        s_d=disconnected_weight(a, b, state, flags),
        latency=latency(a, b, state, link, flags),
        c_a=attack_cost(a, state, cfg),
        c_d=c_d,
        u_d=u_d,
    )


def attacker_payoff(a: Action, b: Action, state: NetworkState, cfg: GameConfig) -> float:
    """Severed weight minus normalized compromise cost."""
    return disconnected_weight(a, b, state) - cfg.nu * attack_cost(a, state, cfg)


def defender_payoff(
    a: Action, b: Action, state: NetworkState, cfg: GameConfig, link: LinkModel
) -> float:
    """Deployment utility minus normalized severed weight, delay, and
    deployment cost."""
    terms = stage_payoff_terms(a, b, state, cfg, link)
    return terms.defender_value(cfg)
