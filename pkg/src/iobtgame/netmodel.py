"""Domain model for the hierarchical sensor network game.

The network is a three-level hierarchy: heterogeneous multi-sensor devices
are grouped, per subarea, into one cluster per information type; each
cluster elects a cluster head (CH) that forwards to the subarea's activated
local sink (LS), which in turn forwards to the global sink.  An attacker
destroys one node per stage; the defender responds with a single role
change or deployment.  This module holds the state types, the two players'
(coupled) strategy sets, the deterministic state transition, and the
canonical state key used for memoization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple


class ActionKind(IntEnum):
    """Move tags. Enum order is the canonical tie-break order."""

    ATTACK_DEVICE = 0
    ATTACK_LS = 1
    SET_CH = 2
    DEPLOY_DEVICE = 3
    ACTIVATE_LS = 4
    DEPLOY_LS = 5


ATTACKER_KINDS = frozenset({ActionKind.ATTACK_DEVICE, ActionKind.ATTACK_LS})
DEFENDER_KINDS = frozenset(
    {ActionKind.SET_CH, ActionKind.DEPLOY_DEVICE, ActionKind.ACTIVATE_LS, ActionKind.DEPLOY_LS}
)


class Action(NamedTuple):
    """One player move.

    Field meaning by kind:
      ATTACK_DEVICE: node = device id
      ATTACK_LS:     node = sink id, area = subarea
      SET_CH:        node = device id, info = information type, area = subarea
      DEPLOY_DEVICE: node = device type id, area = subarea
      ACTIVATE_LS:   node = sink id, area = subarea
      DEPLOY_LS:     area = subarea
    """

    kind: ActionKind
    node: int = 0
    info: int = 0
    area: int = 0

    def describe(self) -> str:
        k = self.kind
        if k == ActionKind.ATTACK_DEVICE:
            return f"attack_device({self.node})"
        if k == ActionKind.ATTACK_LS:
            return f"attack_ls({self.node},{self.area})"
        if k == ActionKind.SET_CH:
            return f"set_ch({self.node},{self.info},{self.area})"
        if k == ActionKind.DEPLOY_DEVICE:
            return f"deploy_device({self.node},{self.area})"
        if k == ActionKind.ACTIVATE_LS:
            return f"activate_ls({self.node},{self.area})"
        return f"deploy_ls({self.area})"


def attack_device(device_id: int) -> Action:
    return Action(ActionKind.ATTACK_DEVICE, node=device_id)


def attack_ls(sink_id: int, area: int) -> Action:
    return Action(ActionKind.ATTACK_LS, node=sink_id, area=area)


def set_ch(device_id: int, info: int, area: int) -> Action:
    return Action(ActionKind.SET_CH, node=device_id, info=info, area=area)


def deploy_device(type_id: int, area: int) -> Action:
    return Action(ActionKind.DEPLOY_DEVICE, node=type_id, area=area)


def activate_ls(sink_id: int, area: int) -> Action:
    return Action(ActionKind.ACTIVATE_LS, node=sink_id, area=area)


def deploy_ls(area: int) -> Action:
    return Action(ActionKind.DEPLOY_LS, area=area)


class EmptyFeasibleSet(Exception):
    """No deployable device type covers the clusters a forced deployment
    must restore; the configuration is infeasible for this state."""


class InvalidAction(Exception):
    """A move outside the acting player's current strategy set."""


@dataclass(frozen=True)
class DeviceType:
    """A device class: the set of information types its sensors cover.

    One sensor per sensed information type, so the sensor count (and the
    device weight) equals ``len(info_set)``.
    """

    type_id: int
    info_set: frozenset[int]

    def __post_init__(self) -> None:
        if not self.info_set:
            raise ValueError(f"device type {self.type_id} senses nothing")
        if any(j < 1 for j in self.info_set):
            raise ValueError("information type ids must be >= 1")

    @property
    def sensor_count(self) -> int:
        return len(self.info_set)


@dataclass(frozen=True)
class Device:
    device_id: int
    type_id: int
    subarea: int
    alive: bool = True


@dataclass(frozen=True)
class LocalSink:
    sink_id: int
    subarea: int
    weight: float
    alive: bool = True


@dataclass(frozen=True)
class NetworkState:
    """Immutable snapshot of the network.

    Only live nodes are stored; destroyed nodes are dropped.  Clusters are
    derived from device types and subareas, never stored, so the membership
    invariant cannot drift.  A CH index of 0 / activation index of 0 means
    the role holder was destroyed and not yet replaced.  ``total_deployed``
    is the device-id watermark (fresh ids are never reused); sinks have
    their own watermark.

    Treat instances as frozen values: transitions return new states.
    """

    catalog: tuple[DeviceType, ...]
    devices: Mapping[int, Device]
    sinks: Mapping[int, LocalSink]
    ch_index: Mapping[tuple[int, int], int]
    activated: Mapping[int, int]
    total_deployed: int
    sink_watermark: int

    def device_type(self, device_id: int) -> DeviceType:
        return self.catalog[self.devices[device_id].type_id - 1]

    def device_weight(self, device_id: int) -> int:
        return self.device_type(device_id).sensor_count

    def ch(self, info: int, area: int) -> int:
        return self.ch_index.get((info, area), 0)

    def activated_sink(self, area: int) -> int:
        return self.activated.get(area, 0)

    @cached_property
    def info_ids(self) -> tuple[int, ...]:
        seen: set[int] = set()
        for t in self.catalog:
            seen |= t.info_set
        return tuple(sorted(seen))

    @cached_property
    def areas(self) -> tuple[int, ...]:
        seen = {d.subarea for d in self.devices.values()}
        seen |= {s.subarea for s in self.sinks.values()}
        seen |= {h for _, h in self.ch_index}
        seen |= set(self.activated)
        return tuple(sorted(seen))

    @cached_property
    def clusters(self) -> dict[tuple[int, int], tuple[int, ...]]:
        """(info, area) -> sorted ids of member devices.  Derived."""
        out: dict[tuple[int, int], list[int]] = {}
        for i in sorted(self.devices):
            d = self.devices[i]
            for j in self.catalog[d.type_id - 1].info_set:
                out.setdefault((j, d.subarea), []).append(i)
        return {key: tuple(ids) for key, ids in out.items()}

    def cluster(self, info: int, area: int) -> tuple[int, ...]:
        return self.clusters.get((info, area), ())

    def cluster_size(self, info: int, area: int) -> int:
        return len(self.clusters.get((info, area), ()))

    @cached_property
    def area_devices(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {}
        for i in sorted(self.devices):
            out.setdefault(self.devices[i].subarea, []).append(i)
        return {h: tuple(ids) for h, ids in out.items()}

    @cached_property
    def area_sinks(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {}
        for l in sorted(self.sinks):
            out.setdefault(self.sinks[l].subarea, []).append(l)
        return {h: tuple(ids) for h, ids in out.items()}

    @cached_property
    def headed_by(self) -> dict[int, tuple[int, ...]]:
        """device id -> sorted information types of the clusters it heads."""
        out: dict[int, list[int]] = {}
        for (j, _h), i in sorted(self.ch_index.items()):
            if i:
                out.setdefault(i, []).append(j)
        return {i: tuple(sorted(js)) for i, js in out.items()}

    def area_weight(self, area: int) -> float:
        """Total device weight in the area plus the activated sink's weight
        (zero sink contribution when no sink is activated)."""
        total = float(sum(self.device_weight(i) for i in self.area_devices.get(area, ())))
        s = self.activated_sink(area)
        if s:
            total += self.sinks[s].weight
        return total

    def device_signature(self, device_id: int) -> tuple[int, tuple[int, ...]]:
        """Exchangeability class of a device: (type, headed clusters)."""
        return (self.devices[device_id].type_id, self.headed_by.get(device_id, ()))

    def sink_signature(self, sink_id: int) -> tuple[float, bool]:
        s = self.sinks[sink_id]
        return (s.weight, self.activated_sink(s.subarea) == sink_id)

    def validate(self) -> None:
        for (j, h), i in self.ch_index.items():
            if i and i not in self.clusters.get((j, h), ()):
                raise ValueError(f"CH {i} of cluster ({j},{h}) is not a member")
        for h, l in self.activated.items():
            if l and (l not in self.sinks or self.sinks[l].subarea != h):
                raise ValueError(f"activated sink {l} missing from area {h}")
        if self.devices and max(self.devices) > self.total_deployed:
            raise ValueError("device id exceeds deployment watermark")
        if self.sinks and max(self.sinks) > self.sink_watermark:
            raise ValueError("sink id exceeds sink watermark")


@dataclass(frozen=True)
class LinkModel:
    """Single-hop delay model: hop(i, j) = packet_size(i) / capacity(i, j),
    plus a per-sink delay for the hop to the global sink.  Uniform scalars
    with optional per-node overrides."""

    packet_size: float = 1.0
    capacity: float = 100.0
    gs_delay: float = 0.01
    packet_overrides: Mapping[int, float] = field(default_factory=dict)
    capacity_overrides: Mapping[tuple[int, int], float] = field(default_factory=dict)
    gs_overrides: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = [self.packet_size, self.capacity, self.gs_delay]
        values += list(self.packet_overrides.values())
        values += list(self.capacity_overrides.values())
        values += list(self.gs_overrides.values())
        if any(v <= 0 for v in values):
            raise ValueError("link model entries must be positive")

    @property
    def is_uniform(self) -> bool:
        return not (self.packet_overrides or self.capacity_overrides or self.gs_overrides)

    def packet(self, node: int) -> float:
        return self.packet_overrides.get(node, self.packet_size)

    def link_capacity(self, src: int, dst: int) -> float:
        return self.capacity_overrides.get((src, dst), self.capacity)

    def hop(self, src: int, dst: int) -> float:
        return self.packet(src) / self.link_capacity(src, dst)

    def gs(self, sink_id: int) -> float:
        return self.gs_overrides.get(sink_id, self.gs_delay)


@dataclass(frozen=True)
class ViewPair:
    """The two per-stage observation points of one physical network.

    ``attacker_view`` is the network before either player moves at the
    stage.  ``defender_view`` is what the defender sees when it responds:
    the same network with the attacker's current destruction applied (one
    step ahead of the attacker's view, nothing else differs).
    """

    attacker_view: NetworkState
    defender_view: NetworkState


@dataclass(frozen=True)
class GameConfig:
    """All scalar game parameters.

    ``attack_device_cost`` / ``deploy_device_cost`` are indexed by
    ``type_id - 1``.  ``threshold(j, h)`` is the minimum cluster size the
    defender must maintain.
    """

    num_areas: int
    num_info_types: int
    type_catalog: tuple[DeviceType, ...]
    attack_device_cost: tuple[float, ...]
    attack_ls_cost: float
    ch_discovery_cost: float
    als_discovery_cost: float
    deploy_device_cost: tuple[float, ...]
    deploy_ls_cost: float
    nu: float = 1.0
    eta: float = 1.0
    mu: float = 100.0
    lam: float = 1.0
    ls_target: int = 3
    horizon: int = 1
    ls_weight: float = 15.0
    threshold_default: int = 15
    threshold_overrides: Mapping[tuple[int, int], int] = field(default_factory=dict)
    link: LinkModel = field(default_factory=LinkModel)
    lookahead_cap: int | None = None

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.ls_target < 1:
            raise ValueError("ls_target must be >= 1")
        if self.num_areas < 1 or self.num_info_types < 1:
            raise ValueError("need at least one area and one information type")
        if len(self.type_catalog) != len(self.attack_device_cost) or len(
            self.type_catalog
        ) != len(self.deploy_device_cost):
            raise ValueError("per-type cost vectors must match the catalog")
        for t_idx, t in enumerate(self.type_catalog, start=1):
            if t.type_id != t_idx:
                raise ValueError("type ids must be 1..K in catalog order")
            if any(j > self.num_info_types for j in t.info_set):
                raise ValueError(f"type {t.type_id} senses unknown information type")
        scalars = (
            self.attack_ls_cost,
            self.ch_discovery_cost,
            self.als_discovery_cost,
            self.deploy_ls_cost,
            self.nu,
            self.eta,
            self.mu,
            self.lam,
        )
        if any(v < 0 for v in scalars) or any(
            v < 0 for v in self.attack_device_cost + self.deploy_device_cost
        ):
            raise ValueError("costs and normalizers must be nonnegative")
        covered: set[int] = set()
        for t in self.type_catalog:
            covered |= t.info_set
        missing = set(range(1, self.num_info_types + 1)) - covered
        if missing:
            raise ValueError(f"no deployable type covers information types {sorted(missing)}")
        max_sensors = max(t.sensor_count for t in self.type_catalog)
        if self.ls_weight <= max_sensors:
            raise ValueError("sink weight must exceed every device weight")

    def threshold(self, info: int, area: int) -> int:
        return self.threshold_overrides.get((info, area), self.threshold_default)

    @property
    def num_types(self) -> int:
        return len(self.type_catalog)


# ---------------------------------------------------------------------------
# Strategy sets
# ---------------------------------------------------------------------------


def attacker_strategy_set(state: NetworkState) -> tuple[Action, ...]:
    """Every destroy move available on the live network, in canonical order."""
    moves = [attack_device(i) for i in sorted(state.devices)]
    moves.extend(
        attack_ls(l, state.sinks[l].subarea) for l in sorted(state.sinks)
    )
    return tuple(moves)


def full_defender_set(state: NetworkState, cfg: GameConfig) -> tuple[Action, ...]:
    """The unconditional defender move set: every CH re-assignment over
    current cluster members, every deployment, every sink activation."""
    moves: list[Action] = []
    for (j, h), members in sorted(state.clusters.items()):
        moves.extend(set_ch(i, j, h) for i in members)
    for tau in range(1, cfg.num_types + 1):
        moves.extend(deploy_device(tau, h) for h in range(1, cfg.num_areas + 1))
    for h in range(1, cfg.num_areas + 1):
        for l in state.area_sinks.get(h, ()):
            moves.append(activate_ls(l, h))
        moves.append(deploy_ls(h))
    return tuple(sorted(moves))


def deficient_infos(state: NetworkState, device_id: int, cfg: GameConfig) -> tuple[int, ...]:
    """Information types whose cluster (in the device's area) would fall
    strictly below threshold once the device is destroyed."""
    d = state.devices[device_id]
    h = d.subarea
    out = [
        j
        for j in sorted(state.catalog[d.type_id - 1].info_set)
        if state.cluster_size(j, h) - 1 < cfg.threshold(j, h)
    ]
    return tuple(out)


def threshold_attack(state: NetworkState, action: Action, cfg: GameConfig) -> bool:
    """Whether a device attack hits a cluster at (or already under) its
    required size, forcing the defender into a restoring deployment."""
    if action.kind != ActionKind.ATTACK_DEVICE or action.node not in state.devices:
        return False
    d = state.devices[action.node]
    return any(
        state.cluster_size(j, d.subarea) <= cfg.threshold(j, d.subarea)
        for j in state.catalog[d.type_id - 1].info_set
    )


def forced_deploy_set(state: NetworkState, device_id: int, cfg: GameConfig) -> tuple[Action, ...]:
    """Deployments that restore every cluster the destroyed device leaves
    under threshold: one move per type covering all deficient info types."""
    h = state.devices[device_id].subarea
    need = set(deficient_infos(state, device_id, cfg))
    moves = [
        deploy_device(t.type_id, h)
        for t in cfg.type_catalog
        if need <= t.info_set
    ]
    if not moves:
        raise EmptyFeasibleSet(
            f"no device type covers information types {sorted(need)} in area {h}"
        )
    return tuple(moves)


def defender_strategy_set(
    state: NetworkState, action: Action, cfg: GameConfig
) -> tuple[Action, ...]:
    """Defender moves consistent with the cluster-size requirement.

    When the attack pushes some cluster to (or keeps it under) its
    threshold, only the restoring deployments are allowed; otherwise the
    full move set applies.
    """
    if action.kind not in ATTACKER_KINDS:
        raise InvalidAction(f"{action.describe()} is not an attacker move")
    if threshold_attack(state, action, cfg):
        return forced_deploy_set(state, action.node, cfg)
    return full_defender_set(state, cfg)


def threshold_clusters(state: NetworkState, cfg: GameConfig) -> tuple[tuple[int, int], ...]:
    """Clusters sitting exactly at their required size."""
    return tuple(
        (j, h)
        for (j, h), members in sorted(state.clusters.items())
        if len(members) == cfg.threshold(j, h)
    )


def restoring_deploys(state: NetworkState, cfg: GameConfig) -> frozenset[Action]:
    """Deployments that could be the forced response to some threshold
    attack in the current state."""
    out: set[Action] = set()
    for i in state.devices:
        a = attack_device(i)
        if threshold_attack(state, a, cfg):
            out |= set(forced_deploy_set(state, i, cfg))
    return frozenset(out)


def restricted_attacker_set(
    bp: Action, state: NetworkState, cfg: GameConfig
) -> tuple[Action, ...]:
    """Attacker moves consistent with the defender's chosen response.

    A non-restoring response reveals that no at-threshold cluster was hit,
    so attacks on members of those clusters are excluded; a restoring
    deployment (or a state with no at-threshold cluster) leaves the full
    set.
    """
    if bp.kind not in DEFENDER_KINDS:
        raise InvalidAction(f"{bp.describe()} is not a defender move")
    full = attacker_strategy_set(state)
    at_threshold = threshold_clusters(state, cfg)
    if not at_threshold:
        return full
    if bp.kind == ActionKind.DEPLOY_DEVICE and bp in restoring_deploys(state, cfg):
        return full
    excluded = {i for key in at_threshold for i in state.clusters[key]}
    return tuple(
        a
        for a in full
        if not (a.kind == ActionKind.ATTACK_DEVICE and a.node in excluded)
    )


# ---------------------------------------------------------------------------
# Transitions
# ---------------------------------------------------------------------------


def destroy_projection(state: NetworkState, action: Action | None) -> NetworkState:
    """The network with one attack's destruction applied and nothing else
    (the defender's observation point, one step ahead of the attacker's)."""
    if action is None:
        return state
    if action.kind == ActionKind.ATTACK_DEVICE:
        i = action.node
        if i not in state.devices:
            raise InvalidAction(f"device {i} is not alive")
        devices = {k: v for k, v in state.devices.items() if k != i}
        ch_index = {key: c for key, c in state.ch_index.items() if c != i}
        return NetworkState(
            catalog=state.catalog,
            devices=devices,
            sinks=state.sinks,
            ch_index=ch_index,
            activated=state.activated,
            total_deployed=state.total_deployed,
            sink_watermark=state.sink_watermark,
        )
    if action.kind == ActionKind.ATTACK_LS:
        l = action.node
        if l not in state.sinks or state.sinks[l].subarea != action.area:
            raise InvalidAction(f"sink {l} is not alive in area {action.area}")
        sinks = {k: v for k, v in state.sinks.items() if k != l}
        activated = {h: s for h, s in state.activated.items() if s != l}
        return NetworkState(
            catalog=state.catalog,
            devices=state.devices,
            sinks=sinks,
            ch_index=state.ch_index,
            activated=activated,
            total_deployed=state.total_deployed,
            sink_watermark=state.sink_watermark,
        )
    raise InvalidAction(f"{action.describe()} is not an attacker move")


def step(state: NetworkState, a: Action, b: Action, cfg: GameConfig) -> NetworkState:
    """Apply one full stage (attack then response) to the ground network.

    A destroyed node is always removed; a deployment always adds a fresh
    node (device id = watermark + 1).  Appointing or activating a node the
    attacker destroyed in the same stage leaves the role vacant.  A newly
    deployed device is never auto-assigned as CH; a newly deployed sink is
    never auto-activated.
    """
    if b not in set(defender_strategy_set(state, a, cfg)):
        raise InvalidAction(
            f"{b.describe()} is not available against {a.describe()}"
        )
    mid = destroy_projection(state, a)
    devices = dict(mid.devices)
    sinks = dict(mid.sinks)
    ch_index = dict(mid.ch_index)
    activated = dict(mid.activated)
    total = mid.total_deployed
    wm = mid.sink_watermark

    if b.kind == ActionKind.SET_CH:
        if b.node in devices:
            ch_index[(b.info, b.area)] = b.node
        else:
            ch_index.pop((b.info, b.area), None)
    elif b.kind == ActionKind.DEPLOY_DEVICE:
        total += 1
        devices[total] = Device(device_id=total, type_id=b.node, subarea=b.area)
    elif b.kind == ActionKind.ACTIVATE_LS:
        if b.node in sinks:
            activated[b.area] = b.node
        else:
            activated.pop(b.area, None)
    elif b.kind == ActionKind.DEPLOY_LS:
        wm += 1
        sinks[wm] = LocalSink(sink_id=wm, subarea=b.area, weight=cfg.ls_weight)
    else:
        raise InvalidAction(f"{b.describe()} is not a defender move")

    return NetworkState(
        catalog=state.catalog,
        devices=devices,
        sinks=sinks,
        ch_index=ch_index,
        activated=activated,
        total_deployed=total,
        sink_watermark=wm,
    )


def apply_transition(
    views: ViewPair,
    a: Action,
    b: Action,
    cfg: GameConfig,
    a_next: Action | None = None,
) -> ViewPair:
    """Advance both observation points by one stage.

    The attacker's view gets the full (a, b) update; the defender's view is
    the same network with the next attack's destruction already applied
    (``a_next=None`` at the end of the horizon leaves the views equal).
    """
    nxt = step(views.attacker_view, a, b, cfg)
    return ViewPair(attacker_view=nxt, defender_view=destroy_projection(nxt, a_next))


# ---------------------------------------------------------------------------
# Canonical state key
# ---------------------------------------------------------------------------


def canonical_key(state: NetworkState) -> tuple:
    """Hashable key identifying the state up to relabeling of exchangeable
    devices (same type, same subarea, same headed clusters, same liveness)
    and of exchangeable sinks (same subarea, weight, activation role).

    Id watermarks are excluded: fresh-id assignment never affects play.
    """
    blocks = []
    for h in state.areas:
        ch_part = []
        for j in state.info_ids:
            i = state.ch(j, h)
            ch_part.append(state.device_signature(i) if i else (0, ()))
        counts: dict[tuple[int, tuple[int, ...]], int] = {}
        for i in state.area_devices.get(h, ()):
            sig = state.device_signature(i)
            counts[sig] = counts.get(sig, 0) + 1
        sink_counts: dict[tuple[float, bool], int] = {}
        for l in state.area_sinks.get(h, ()):
            sig_s = state.sink_signature(l)
            sink_counts[sig_s] = sink_counts.get(sig_s, 0) + 1
        blocks.append(
            (
                h,
                tuple(ch_part),
                tuple(sorted(counts.items())),
                tuple(sorted(sink_counts.items())),
            )
        )
    return tuple(blocks)


def config_automorphisms(
    cfg: GameConfig,
) -> tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]:
    """Symmetries of the game parameterization: pairs (info_map, type_map),
    1-indexed, such that relabeling information types by ``info_map`` and
    device types by ``type_map`` maps the catalog, per-type costs and
    thresholds onto themselves.  States identical up to such a relabeling
    have identical payoff-to-go.  The identity is always first; only
    uniform-threshold, uniform-link configurations admit more.
    """
    identity = (
        tuple(range(1, cfg.num_info_types + 1)),
        tuple(range(1, cfg.num_types + 1)),
    )
    out = [identity]
    if (
        cfg.threshold_overrides
        or not cfg.link.is_uniform
        or cfg.num_info_types > 7
    ):
        return tuple(out)
    import itertools

    infos = list(range(1, cfg.num_info_types + 1))
    type_profile = [
        (t.info_set, cfg.attack_device_cost[t.type_id - 1], cfg.deploy_device_cost[t.type_id - 1])
        for t in cfg.type_catalog
    ]
    for perm in itertools.permutations(infos):
        if perm == tuple(infos):
            continue
        pi = {j: perm[j - 1] for j in infos}
        # match each type to one with the permuted info set and same costs
        remaining = list(range(cfg.num_types))
        sigma: list[int] = []
        ok = True
        for idx, (info_set, ca, cd) in enumerate(type_profile):
            want = frozenset(pi[j] for j in info_set)
            found = -1
            for r in remaining:
                if (
                    type_profile[r][0] == want
                    and type_profile[r][1] == ca
                    and type_profile[r][2] == cd
                ):
                    found = r
                    break
            if found < 0:
                ok = False
                break
            remaining.remove(found)
            sigma.append(found + 1)
        if ok:
            out.append((tuple(perm), tuple(sigma)))
    return tuple(out)


def relabel_devices(state: NetworkState, mapping: Mapping[int, int]) -> NetworkState:
    """Rebuild the state under a device-id permutation (test support)."""
    devices = {
        mapping[i]: Device(mapping[i], d.type_id, d.subarea, d.alive)
        for i, d in state.devices.items()
    }
    ch_index = {key: mapping[i] for key, i in state.ch_index.items() if i}
    return NetworkState(
        catalog=state.catalog,
        devices=devices,
        sinks=state.sinks,
        ch_index=ch_index,
        activated=state.activated,
        total_deployed=max(max(devices, default=0), state.total_deployed),
        sink_watermark=state.sink_watermark,
    )


def build_state(
    catalog: Iterable[DeviceType],
    devices: Iterable[Device],
    sinks: Iterable[LocalSink],
    ch_index: Mapping[tuple[int, int], int] | None = None,
    activated: Mapping[int, int] | None = None,
) -> NetworkState:
    """Assemble a state, seeding any missing CH/activation roles with the
    lowest-id member, and validate it."""
    catalog = tuple(catalog)
    dev_map = {d.device_id: d for d in devices if d.alive}
    sink_map = {s.sink_id: s for s in sinks if s.alive}
    state = NetworkState(
        catalog=catalog,
        devices=dev_map,
        sinks=sink_map,
        ch_index={},
        activated={},
        total_deployed=max(dev_map, default=0),
        sink_watermark=max(sink_map, default=0),
    )
    ch = dict(ch_index) if ch_index is not None else {
        key: members[0] for key, members in state.clusters.items()
    }
    ch = {key: i for key, i in ch.items() if i}
    act = dict(activated) if activated is not None else {}
    if activated is None:
        for l in sorted(sink_map):
            h = sink_map[l].subarea
            act.setdefault(h, l)
    act = {h: l for h, l in act.items() if l}
    out = NetworkState(
        catalog=catalog,
        devices=dev_map,
        sinks=sink_map,
        ch_index=ch,
        activated=act,
        total_deployed=max(dev_map, default=0),
        sink_watermark=max(sink_map, default=0),
    )
    out.validate()
    return out
