"""Stagewise leader-commitment solution and feedback backward induction.

Each stage is a Stackelberg game: the attacker commits to a mixed strategy
over its destroy moves, the defender observes the mixture and answers with
one pure move.  The stage is solved by the multiple-LPs method: one LP per
candidate response, maximizing the attacker's payoff-to-go subject to the
candidate being follower-optimal, with the threshold coupling encoded by
restricting each LP's variables to the moves consistent with its
candidate.  Payoff-to-go adds the solved continuation of the reached
state, computed by backward induction memoized on a canonical state key.

Scalability rests on exchangeability: nodes of the same type, subarea and
role are interchangeable, so stage games are built over node groups and
continuation values are cached up to relabeling (and, when every subarea
shares one parameterization, up to subarea permutation).  Cached policies
may therefore mention ids from an equivalent sibling state; anything that
needs a policy for one concrete state solves its root stage directly and
only reads cached values for the successors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from . import lp as lpmod
from .netmodel import (
    Action,
    ActionKind,
    GameConfig,
    NetworkState,
    attack_device,
    attack_ls,
    attacker_strategy_set,
    canonical_key,
    defender_strategy_set,
    deploy_ls,
    destroy_projection,
    forced_deploy_set,
    full_defender_set,
    restoring_deploys,
    step,
    threshold_attack,
    threshold_clusters,
)
from .payoffs import (
    _area_delay,
    _area_weight,
    _static_area_delays,
    attack_cost,
    deploy_cost_and_utility,
    disconnected_weight,
    flags_of,
    sensor_disconnect_count,
)


VALUE_TIE_TOL = 1e-9


class NoFeasibleStage(Exception):
    """Every candidate response LP was infeasible (modeling error)."""


class NoActivatedLS(Exception):
    """The uniform baseline needs at least one activated sink."""


class Mode(Enum):
    FSE = "fse"
    NFSE = "nfse"
    EQUAL = "equal"


@dataclass(frozen=True)
class MixedStrategy:
    """Attacker mixture: (move, probability) pairs in canonical order."""

    support: tuple[tuple[Action, float], ...]

    def __post_init__(self) -> None:
        total = sum(p for _, p in self.support)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        if any(p < -1e-12 or p > 1.0 + 1e-12 for _, p in self.support):
            raise ValueError("probabilities must lie in [0, 1]")

    def prob(self, action: Action) -> float:
        for a, p in self.support:
            if a == action:
                return p
        return 0.0

    def actions(self) -> tuple[Action, ...]:
        return tuple(a for a, _ in self.support)

    def sample(self, rng: np.random.Generator) -> Action:
        probs = np.array([p for _, p in self.support], dtype=float)
        probs /= probs.sum()
        idx = int(rng.choice(len(self.support), p=probs))
        return self.support[idx][0]


@dataclass(frozen=True)
class StagePolicy:
    """Solved stage: attacker mixture, defender response, payoff-to-go."""

    q_star: MixedStrategy
    b_star: Action
    omega_a: float
    omega_d: float


class ValueCache(dict):
    """(stages_to_go, state key) -> StagePolicy.

    Any writer recomputes identical values, so insert order never matters;
    disabling the cache changes runtimes only.  Keys quotient out node
    relabelings, so a cached policy's moves are only meaningful for the
    state that created the entry; read omega values across states, not
    moves.  Carries the configuration's relabeling symmetries and a raw
    key -> canonical key memo (one cache must never serve two different
    configurations).
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.automorphisms = None
        self.canon_map: dict[tuple, tuple] = {}


@dataclass
class StageGame:
    """One stage at exchangeability-group resolution.

    Rows are attacker move groups, columns defender move groups; members
    of a group are mutually exchangeable, so payoffs and reached states
    are computed once per group.  ``allowed[i, j]`` marks rows consistent
    with column j under the threshold coupling (and playable against it).
    """

    state: NetworkState | None
    attacker_reps: tuple[Action, ...]
    attacker_members: tuple[tuple[Action, ...], ...]
    defender_reps: tuple[Action, ...]
    defender_members: tuple[tuple[Action, ...], ...]
    f_a: np.ndarray
    f_d: np.ndarray
    allowed: np.ndarray

    @property
    def num_rows(self) -> int:
        return len(self.attacker_reps)

    @property
    def num_cols(self) -> int:
        return len(self.defender_reps)


def solve_stage_game_matrices(
    f_a: np.ndarray, f_d: np.ndarray, allowed: np.ndarray
) -> tuple[float, np.ndarray, int]:
    """Multiple-LPs core on raw matrices.

    For each candidate column: variables are the rows its coupling allows,
    the objective is the attacker's column of ``f_a``, and every column is
    constrained to be weakly worse for the defender, with rows outside an
    alternative's own coupling contributing nothing to its side.  Returns
    (leader value, row mixture, winning column index); the winner is the
    best LP value, ties broken by lowest column index.

    An alternative column whose own coupling shares no row with the
    candidate's is a vacuous comparison (no mixture consistent with the
    candidate could ever make it playable) and imposes no constraint.

    Three exact shortcuts: a candidate whose best row cannot strictly beat
    the incumbent is skipped (the objective is a convex combination of its
    ``f_a`` column); when the candidate is follower-optimal against its
    best pure row, that row attains the LP bound, so the LP optimum is
    known without solving; and a candidate is infeasible outright when
    some alternative is strictly better for the defender on every allowed
    row.  Columns identical in all three matrices are solved once.
    """
    f_a = np.asarray(f_a, dtype=float)
    f_d = np.asarray(f_d, dtype=float)
    allowed = np.asarray(allowed, dtype=bool)
    n_rows, n_cols = f_a.shape
    if f_d.shape != (n_rows, n_cols) or allowed.shape != (n_rows, n_cols):
        raise ValueError("stage game matrices must share one shape")
    gated = np.where(allowed, f_d, 0.0)

    constraint_sigs: set[bytes] = set()
    constraint_cols: list[int] = []
    for b in range(n_cols):
        sig = gated[:, b].tobytes() + allowed[:, b].tobytes()
        if sig not in constraint_sigs:
            constraint_sigs.add(sig)
            constraint_cols.append(b)
    cons = np.array(constraint_cols, dtype=int)
    af = allowed.astype(np.float32)
    overlap = (af[:, cons].T @ af) > 0.5  # [alt index, col] share an allowed row

    candidate_of_sig: dict[bytes, tuple[float, np.ndarray]] = {}
    best: tuple[float, int, np.ndarray] | None = None
    for bp in range(n_cols):
        rows = np.flatnonzero(allowed[:, bp])
        if rows.size == 0:
            continue
        col_a = f_a[rows, bp]
        bound = col_a.max()
        if best is not None and bound <= best[0] + VALUE_TIE_TOL:
            continue
        alt_cols = cons[overlap[:, bp] & (cons != bp)]
        a_star = rows[int(np.argmax(col_a))]
        if (gated[a_star, alt_cols] <= f_d[a_star, bp] + 1e-12).all():
            # the best pure row already keeps this response optimal
            value = float(bound)
            q_full = np.zeros(n_rows)
            q_full[a_star] = 1.0
        else:
            sig = (
                col_a.tobytes() + gated[:, bp].tobytes() + allowed[:, bp].tobytes()
            )
            cached = candidate_of_sig.get(sig)
            if cached is not None:
                value, q_full = cached
                if math.isnan(value):
                    continue
            else:
                rhs_col = f_d[rows, bp]
                a_ub = gated[np.ix_(rows, alt_cols)].T - rhs_col[None, :]
                if a_ub.size and (a_ub.min(axis=1) > 1e-7).any():
                    candidate_of_sig[sig] = (math.nan, np.zeros(0))
                    continue
                prog = lpmod.maximize(
                    col_a,
                    a_ub=a_ub if a_ub.size else None,
                    b_ub=np.zeros(len(a_ub)) if a_ub.size else None,
                    a_eq=np.ones((1, rows.size)),
                    b_eq=np.ones(1),
                )
                sol = lpmod.solve_lp(prog)
                if sol.status is not lpmod.LPStatus.OPTIMAL:
                    candidate_of_sig[sig] = (math.nan, np.zeros(0))
                    continue
                q_full = np.zeros(n_rows)
                q_full[rows] = sol.x
                candidate_of_sig[sig] = (sol.value, q_full)
                value = sol.value
        if best is None or value > best[0] + VALUE_TIE_TOL:
            best = (value, bp, q_full)
    if best is None:
        raise NoFeasibleStage("no candidate response admits a feasible mixture")
    value, bp, q = best
    q = np.clip(q, 0.0, None)
    q /= q.sum()
    return value, q, bp


# ---------------------------------------------------------------------------
# Grouping and state keys
# ---------------------------------------------------------------------------


def _attacker_groups(
    state: NetworkState, exchangeable: bool
) -> tuple[tuple[Action, ...], tuple[tuple[Action, ...], ...]]:
    groups: dict[tuple, list[Action]] = {}
    for a in attacker_strategy_set(state):
        if not exchangeable:
            key = (a,)
        elif a.kind == ActionKind.ATTACK_DEVICE:
            d = state.devices[a.node]
            key = (0, d.subarea) + state.device_signature(a.node)
        else:
            key = (1, a.area) + state.sink_signature(a.node)
        groups.setdefault(key, []).append(a)
    pairs = sorted(
        ((sorted(acts)[0], tuple(sorted(acts))) for acts in groups.values()),
    )
    return tuple(p[0] for p in pairs), tuple(p[1] for p in pairs)


def _defender_groups(
    state: NetworkState, cfg: GameConfig, exchangeable: bool
) -> tuple[tuple[Action, ...], tuple[tuple[Action, ...], ...]]:
    groups: dict[tuple, list[Action]] = {}
    for b in full_defender_set(state, cfg):
        if not exchangeable:
            key = (b,)
        elif b.kind == ActionKind.SET_CH:
            key = (0, b.info, b.area) + state.device_signature(b.node)
        elif b.kind == ActionKind.ACTIVATE_LS:
            key = (1, b.area) + state.sink_signature(b.node)
        else:
            key = (2, b)
        groups.setdefault(key, []).append(b)
    pairs = sorted(
        ((sorted(acts)[0], tuple(sorted(acts))) for acts in groups.values()),
    )
    return tuple(p[0] for p in pairs), tuple(p[1] for p in pairs)


def _area_block(state: NetworkState, h: int) -> tuple:
    """Content of one subarea up to node relabeling."""
    ch_part = []
    for j in state.info_ids:
        i = state.ch(j, h)
        ch_part.append(state.device_signature(i) if i else (0, ()))
    counts: dict[tuple, int] = {}
    for i in state.area_devices.get(h, ()):
        sig = state.device_signature(i)
        counts[sig] = counts.get(sig, 0) + 1
    sink_counts: dict[tuple, int] = {}
    for l in state.area_sinks.get(h, ()):
        sig_s = state.sink_signature(l)
        sink_counts[sig_s] = sink_counts.get(sig_s, 0) + 1
    return (tuple(ch_part), tuple(sorted(counts.items())), tuple(sorted(sink_counts.items())))


def _state_blocks(state: NetworkState) -> dict[int, tuple]:
    blocks = state.__dict__.get("_area_blocks")
    if blocks is None:
        blocks = {h: _area_block(state, h) for h in state.areas}
        state.__dict__["_area_blocks"] = blocks
    return blocks


def _patch_child_blocks(
    parent_blocks: dict[int, tuple], child: NetworkState, affected: set[int]
) -> None:
    blocks = dict(parent_blocks)
    child_areas = set(child.areas)
    for h in affected:
        if h in child_areas:
            blocks[h] = _area_block(child, h)
        else:
            blocks.pop(h, None)
    child.__dict__["_area_blocks"] = blocks


def _area_block_after(
    state: NetworkState, h: int, a: Action, b: Action, cfg: GameConfig
) -> tuple:
    """The area block one subarea would have after the stage pair (a, b),
    derived without materializing the successor state (mirrors ``step``;
    fuzz-checked against rebuilding from the stepped state)."""
    destroyed = a.node if a.kind == ActionKind.ATTACK_DEVICE else 0
    destroyed_sink = a.node if a.kind == ActionKind.ATTACK_LS else 0

    def head_after(j: int) -> int:
        if b.kind == ActionKind.SET_CH and (b.info, b.area) == (j, h):
            return b.node if b.node != destroyed else 0
        f = state.ch(j, h)
        return 0 if f == destroyed else f

    heads: dict[int, list[int]] = {}
    for j in state.info_ids:
        f = head_after(j)
        if f:
            heads.setdefault(f, []).append(j)

    def sig_after(i: int) -> tuple[int, tuple[int, ...]]:
        return (state.devices[i].type_id, tuple(heads.get(i, ())))

    ch_part = []
    for j in state.info_ids:
        f = head_after(j)
        ch_part.append(sig_after(f) if f else (0, ()))
    counts: dict[tuple, int] = {}
    for i in state.area_devices.get(h, ()):
        if i == destroyed:
            continue
        sig = sig_after(i)
        counts[sig] = counts.get(sig, 0) + 1
    if b.kind == ActionKind.DEPLOY_DEVICE and b.area == h:
        sig = (b.node, ())
        counts[sig] = counts.get(sig, 0) + 1

    s = state.activated_sink(h)
    if destroyed_sink and s == destroyed_sink:
        s = 0
    if b.kind == ActionKind.ACTIVATE_LS and b.area == h:
        s = b.node if b.node != destroyed_sink else 0
    sink_counts: dict[tuple, int] = {}
    for l in state.area_sinks.get(h, ()):
        if l == destroyed_sink:
            continue
        sig_s = (state.sinks[l].weight, l == s)
        sink_counts[sig_s] = sink_counts.get(sig_s, 0) + 1
    if b.kind == ActionKind.DEPLOY_LS and b.area == h:
        sig_s = (cfg.ls_weight, False)
        sink_counts[sig_s] = sink_counts.get(sig_s, 0) + 1

    return (tuple(ch_part), tuple(sorted(counts.items())), tuple(sorted(sink_counts.items())))


def _block_is_empty(block: tuple) -> bool:
    ch_part, counts, sink_counts = block
    return not counts and not sink_counts and all(c == (0, ()) for c in ch_part)


def _symmetric_areas(cfg: GameConfig) -> bool:
    return cfg.link.is_uniform and not cfg.threshold_overrides


def cache_key(state: NetworkState, cfg: GameConfig) -> tuple:
    """Memoization key: node-relabeling quotient, plus subarea-permutation
    quotient when every subarea shares one parameterization.  Per-node
    link overrides break exchangeability entirely, so they force an exact
    id-level key."""
    if not cfg.link.is_uniform:
        return (
            "exact",
            tuple(sorted((i, d.type_id, d.subarea) for i, d in state.devices.items())),
            tuple(sorted((l, s.subarea, s.weight) for l, s in state.sinks.items())),
            tuple(sorted(state.ch_index.items())),
            tuple(sorted(state.activated.items())),
        )
    blocks = _state_blocks(state)
    if _symmetric_areas(cfg):
        return ("sym", tuple(sorted(blocks.values())))
    return ("area", tuple(sorted(blocks.items())))


def _transform_sig(sig: tuple, pi: tuple[int, ...], sigma: tuple[int, ...]) -> tuple:
    tau, headed = sig
    if tau == 0:
        return sig
    return (sigma[tau - 1], tuple(sorted(pi[j - 1] for j in headed)))


def _transform_block(block: tuple, pi: tuple[int, ...], sigma: tuple[int, ...]) -> tuple:
    ch_part, counts, sink_counts = block
    new_ch = list(ch_part)
    for j0, sig in enumerate(ch_part, start=1):
        new_ch[pi[j0 - 1] - 1] = _transform_sig(sig, pi, sigma)
    new_counts = tuple(
        sorted((_transform_sig(sig, pi, sigma), c) for sig, c in counts)
    )
    return (tuple(new_ch), new_counts, sink_counts)


def canonize_key(key: tuple, cache: "ValueCache", cfg: GameConfig) -> tuple:
    """Minimal key over the configuration's type/information relabelings
    (identity when the configuration admits none).  Raw keys are memoized
    so each distinct raw form is canonized once."""
    if key[0] != "sym":
        return key
    autos = cache.automorphisms
    if autos is None:
        from .netmodel import config_automorphisms

        autos = config_automorphisms(cfg)
        cache.automorphisms = autos
    if len(autos) == 1:
        return key
    hit = cache.canon_map.get(key)
    if hit is not None:
        return hit
    blocks = key[1]
    best = key
    for pi, sigma in autos[1:]:
        variant = ("sym", tuple(sorted(_transform_block(b, pi, sigma) for b in blocks)))
        if variant < best:
            best = variant
    cache.canon_map[key] = best
    return best


# ---------------------------------------------------------------------------
# Stage game assembly
# ---------------------------------------------------------------------------

Continuation = Callable[[NetworkState], tuple[float, float]]


class _RecursiveContinuation:
    """Payoff-to-go through the cache, with a key-first fast path: the
    successor's memo key is derived by patching the parent's area blocks,
    so cache hits never materialize the successor state."""

    __slots__ = ("k", "cfg", "cache")

    def __init__(self, k: int, cfg: GameConfig, cache: ValueCache):
        self.k = k
        self.cfg = cfg
        self.cache = cache

    def __call__(self, child: NetworkState) -> tuple[float, float]:
        return _values_to_go(child, self.k, self.cfg, self.cache)

    def values_for(
        self,
        state: NetworkState,
        a: Action,
        b: Action,
        block_a,
        block_b,
        block_joint,
        ha: int,
        hb: int,
    ) -> tuple[float, float]:
        cfg, cache = self.cfg, self.cache
        if not cfg.link.is_uniform:
            return self(step(state, a, b, cfg))
        parent_blocks = _state_blocks(state)
        blocks = dict(parent_blocks)
        if ha == hb:
            blk = block_joint
            if _block_is_empty(blk):
                blocks.pop(ha, None)
            else:
                blocks[ha] = blk
        else:
            if _block_is_empty(block_a):
                blocks.pop(ha, None)
            else:
                blocks[ha] = block_a
            if _block_is_empty(block_b):
                blocks.pop(hb, None)
            else:
                blocks[hb] = block_b
        if not blocks:
            return (0.0, 0.0)
        if _symmetric_areas(cfg):
            raw = ("sym", tuple(sorted(blocks.values())))
        else:
            raw = ("area", tuple(sorted(blocks.items())))
        key = (self.k, canonize_key(raw, cache, cfg))
        hit = cache.get(key)
        if hit is not None:
            return (hit.omega_a, hit.omega_d)
        child = step(state, a, b, cfg)
        child.__dict__["_area_blocks"] = blocks
        if _game_over(child):
            return (0.0, 0.0)
        policy = _solve_to_go(child, self.k, cfg, cache, key=key)
        return (policy.omega_a, policy.omega_d)


_NEUTRAL_RESPONSE = deploy_ls(0)


def _action_area(state: NetworkState, a: Action) -> int:
    if a.kind == ActionKind.ATTACK_DEVICE:
        return state.devices[a.node].subarea
    return a.area


def build_stage_game(
    state: NetworkState,
    cfg: GameConfig,
    continuation: Continuation | None = None,
) -> StageGame:
    """Assemble the stage game at group resolution.

    ``continuation`` maps a reached state to its solved payoff-to-go pair;
    None means a terminal stage (zero continuation), in which case no
    successor states are built at all.

    Payoff terms decompose into per-row and per-column pieces plus sparse
    same-subarea interactions, and each move pair touches at most two
    subareas of the delay maximum, so assembly is near-linear in rows
    plus columns; the direct per-pair reference implementation is kept in
    ``build_stage_game_reference`` and the two are fuzz-checked equal.
    """
    exchangeable = cfg.link.is_uniform
    a_reps, a_members = _attacker_groups(state, exchangeable)
    b_reps, b_members = _defender_groups(state, cfg, exchangeable)
    if not a_reps:
        raise NoFeasibleStage("attacker has no legal move")
    link = cfg.link
    flags = flags_of(state)

    at_threshold = threshold_clusters(state, cfg)
    restoring = restoring_deploys(state, cfg) if at_threshold else frozenset()
    excluded_devices: set[int] = set()
    for key in at_threshold:
        excluded_devices.update(state.clusters[key])

    n_rows, n_cols = len(a_reps), len(b_reps)
    f_a = np.zeros((n_rows, n_cols))
    f_d = np.zeros((n_rows, n_cols))
    allowed = np.zeros((n_rows, n_cols), dtype=bool)

    # per-row pieces
    a_area = np.zeros(n_rows, dtype=int)
    base_sd = np.zeros(n_rows)
    cost_a = np.zeros(n_rows)
    delay_a = np.zeros(n_rows)
    forced: list[frozenset[Action] | None] = []
    newly_deficient: list[frozenset[int]] = []
    for i, a in enumerate(a_reps):
        h = _action_area(state, a)
        a_area[i] = h
        base_sd[i] = disconnected_weight(a, _NEUTRAL_RESPONSE, state, flags)
        cost_a[i] = attack_cost(a, state, cfg)
        delay_a[i] = _area_delay(state, h, link, a, None)
        if a.kind == ActionKind.ATTACK_DEVICE and threshold_attack(state, a, cfg):
            forced.append(frozenset(forced_deploy_set(state, a.node, cfg)))
        else:
            forced.append(None)
        if a.kind == ActionKind.ATTACK_DEVICE:
            dev = state.devices[a.node]
            newly_deficient.append(
                frozenset(
                    j
                    for j in state.catalog[dev.type_id - 1].info_set
                    if state.cluster_size(j, h) == cfg.threshold(j, h)
                )
            )
        else:
            newly_deficient.append(frozenset())

    # per-column pieces
    b_area = np.array([b.area for b in b_reps], dtype=int)
    credit = np.zeros(n_cols)
    cost_d = np.zeros(n_cols)
    base_u = np.zeros(n_cols)
    delay_b = np.zeros(n_cols)
    for j, b in enumerate(b_reps):
        if b.kind == ActionKind.SET_CH and flags.cluster(b.info, b.area):
            credit[j] = state.cluster_size(b.info, b.area)
        elif b.kind == ActionKind.ACTIVATE_LS and flags.area(b.area):
            credit[j] = _area_weight(state, b.area, 1.0)
        cost_d[j], base_u[j] = deploy_cost_and_utility(b, state, cfg)
        delay_b[j] = _area_delay(state, b.area, link, None, b)

    statics = _static_area_delays(state, link)
    ranked = sorted(statics.items(), key=lambda kv: -kv[1])[:3]

    def others_max(h1: int, h2: int) -> float:
        for h, v in ranked:
            if h != h1 and h != h2:
                return v
        return 0.0

    # coupling mask
    allowed[:] = True
    if at_threshold:
        excl_rows = np.array(
            [
                a.kind == ActionKind.ATTACK_DEVICE and a.node in excluded_devices
                for a in a_reps
            ]
        )
        nonrestoring = np.array(
            [
                not (b.kind == ActionKind.DEPLOY_DEVICE and b in restoring)
                for b in b_reps
            ]
        )
        allowed &= ~(excl_rows[:, None] & nonrestoring[None, :])
    for irow, fset in enumerate(forced):
        if fset is not None:
            allowed[irow] &= np.array([b in fset for b in b_reps])

    # bulk payoff terms (per-row and per-column pieces compose additively;
    # only same-subarea pairs carry interactions, patched below)
    area_list = sorted({int(h) for h in a_area} | {int(h) for h in b_area} | set(state.areas))
    a_idx = {h: i for i, h in enumerate(area_list)}
    others_mat = np.array(
        [[others_max(h1, h2) for h2 in area_list] for h1 in area_list]
    )
    row_area_idx = np.array([a_idx[int(h)] for h in a_area])
    col_area_idx = np.array([a_idx[int(h)] for h in b_area])
    s_d = base_sd[:, None] - credit[None, :]
    u_mat = np.broadcast_to(base_u, (n_rows, n_cols)).copy()
    lam = others_mat[row_area_idx[:, None], col_area_idx[None, :]]
    np.maximum(lam, delay_a[:, None], out=lam)
    np.maximum(lam, delay_b[None, :], out=lam)

    rows_by_area: dict[int, list[int]] = {}
    for irow in range(n_rows):
        rows_by_area.setdefault(int(a_area[irow]), []).append(irow)
    for jcol, b in enumerate(b_reps):
        hb = int(b_area[jcol])
        same_rows = rows_by_area.get(hb, ())
        if b.kind == ActionKind.DEPLOY_DEVICE:
            cover = state.catalog[b.node - 1].info_set
            for irow in same_rows:
                a = a_reps[irow]
                s_d[irow, jcol] = disconnected_weight(a, b, state, flags)
                if a.kind == ActionKind.ATTACK_DEVICE:
                    u_mat[irow, jcol] += len(newly_deficient[irow] & cover)
        elif b.kind == ActionKind.DEPLOY_LS:
            for irow in same_rows:
                if a_reps[irow].kind == ActionKind.ATTACK_LS:
                    u_mat[irow, jcol] += 1.0
        base_other = others_mat[a_idx[hb], a_idx[hb]]
        if b.kind == ActionKind.DEPLOY_LS:
            # an idle sink never carries traffic: same-area delay is the
            # attack's effect alone
            for irow in same_rows:
                lam[irow, jcol] = max(base_other, delay_a[irow])
        else:
            for irow in same_rows:
                lam[irow, jcol] = max(
                    base_other, _area_delay(state, hb, link, a_reps[irow], b)
                )

    f_a[:] = s_d - cfg.nu * cost_a[:, None]
    f_d[:] = u_mat - cfg.eta * s_d - cfg.mu * lam - cfg.lam * cost_d[None, :]
    f_a[~allowed] = 0.0
    f_d[~allowed] = 0.0

    if continuation is not None:
        recursive = (
            continuation if isinstance(continuation, _RecursiveContinuation) else None
        )
        parent_blocks = _state_blocks(state)
        neutral_attack = Action(ActionKind.ATTACK_DEVICE, node=0)
        blocks_a: list[tuple | None] = [None] * n_rows
        if recursive is not None and exchangeable:
            blocks_a = [
                _area_block_after(state, int(a_area[i]), a, _NEUTRAL_RESPONSE, cfg)
                for i, a in enumerate(a_reps)
            ]
        for jcol, b in enumerate(b_reps):
            hb = int(b_area[jcol])
            block_b = None
            if recursive is not None and exchangeable:
                block_b = _area_block_after(state, hb, neutral_attack, b, cfg)
            for irow, a in enumerate(a_reps):
                if not allowed[irow, jcol]:
                    continue
                ha = int(a_area[irow])
                if recursive is not None and exchangeable:
                    joint = (
                        _area_block_after(state, ha, a, b, cfg) if ha == hb else None
                    )
                    wa, wd = recursive.values_for(
                        state, a, b, blocks_a[irow], block_b, joint, ha, hb
                    )
                else:
                    child = step(state, a, b, cfg)
                    _patch_child_blocks(parent_blocks, child, {ha, hb})
                    wa, wd = continuation(child)
                f_a[irow, jcol] += wa
                f_d[irow, jcol] += wd

    return StageGame(
        state=state,
        attacker_reps=a_reps,
        attacker_members=a_members,
        defender_reps=b_reps,
        defender_members=b_members,
        f_a=f_a,
        f_d=f_d,
        allowed=allowed,
    )


def build_stage_game_reference(
    state: NetworkState,
    cfg: GameConfig,
    continuation: Continuation | None = None,
) -> StageGame:
    """Straightforward per-pair assembly (the specification of
    ``build_stage_game``; kept for cross-checking)."""
    from .payoffs import latency

    exchangeable = cfg.link.is_uniform
    a_reps, a_members = _attacker_groups(state, exchangeable)
    b_reps, b_members = _defender_groups(state, cfg, exchangeable)
    if not a_reps:
        raise NoFeasibleStage("attacker has no legal move")
    flags = flags_of(state)
    at_threshold = bool(threshold_clusters(state, cfg))
    restoring = restoring_deploys(state, cfg) if at_threshold else frozenset()
    excluded_devices: set[int] = set()
    for key in threshold_clusters(state, cfg):
        excluded_devices.update(state.clusters[key])
    feasible_sets = {a: frozenset(defender_strategy_set(state, a, cfg)) for a in a_reps}

    n_rows, n_cols = len(a_reps), len(b_reps)
    f_a = np.zeros((n_rows, n_cols))
    f_d = np.zeros((n_rows, n_cols))
    allowed = np.zeros((n_rows, n_cols), dtype=bool)
    views = {a: destroy_projection(state, a) for a in a_reps}
    base_cost = {a: attack_cost(a, state, cfg) for a in a_reps}
    for jcol, b in enumerate(b_reps):
        coupled_out = at_threshold and not (
            b.kind == ActionKind.DEPLOY_DEVICE and b in restoring
        )
        for irow, a in enumerate(a_reps):
            if (
                coupled_out
                and a.kind == ActionKind.ATTACK_DEVICE
                and a.node in excluded_devices
            ):
                continue
            if b not in feasible_sets[a]:
                continue
            allowed[irow, jcol] = True
            s_d = disconnected_weight(a, b, state, flags)
            lam = latency(a, b, state, cfg.link, flags)
            c_d, u_d = deploy_cost_and_utility(b, views[a], cfg)
            pa = s_d - cfg.nu * base_cost[a]
            pd = u_d - cfg.eta * s_d - cfg.mu * lam - cfg.lam * c_d
            if continuation is not None:
                wa, wd = continuation(step(state, a, b, cfg))
                pa += wa
                pd += wd
            f_a[irow, jcol] = pa
            f_d[irow, jcol] = pd
    return StageGame(
        state=state,
        attacker_reps=a_reps,
        attacker_members=a_members,
        defender_reps=b_reps,
        defender_members=b_members,
        f_a=f_a,
        f_d=f_d,
        allowed=allowed,
    )


def _expand_policy(game: StageGame, value: float, q: np.ndarray, b_idx: int) -> StagePolicy:
    support: list[tuple[Action, float]] = []
    for i, mass in enumerate(q):
        if mass <= 1e-12:
            continue
        members = game.attacker_members[i]
        share = mass / len(members)
        support.extend((a, share) for a in members)
    support.sort()
    total = sum(p for _, p in support)
    support = [(a, p / total) for a, p in support]
    omega_d = float(q @ game.f_d[:, b_idx])
    return StagePolicy(
        q_star=MixedStrategy(support=tuple(support)),
        b_star=game.defender_reps[b_idx],
        omega_a=float(value),
        omega_d=omega_d,
    )


def solve_stage_from_game(game: StageGame) -> StagePolicy:
    value, q, b_idx = solve_stage_game_matrices(game.f_a, game.f_d, game.allowed)
    return _expand_policy(game, value, q, b_idx)


# ---------------------------------------------------------------------------
# Backward induction
# ---------------------------------------------------------------------------


def _game_over(state: NetworkState) -> bool:
    return not state.devices and not state.sinks


def _values_to_go(
    state: NetworkState, k: int, cfg: GameConfig, cache: ValueCache
) -> tuple[float, float]:
    if k <= 0 or _game_over(state):
        return (0.0, 0.0)
    policy = _solve_to_go(state, k, cfg, cache)
    return (policy.omega_a, policy.omega_d)


def _solve_to_go(
    state: NetworkState,
    k: int,
    cfg: GameConfig,
    cache: ValueCache,
    key: tuple | None = None,
) -> StagePolicy:
    if key is None:
        key = (k, canonize_key(cache_key(state, cfg), cache, cfg))
    hit = cache.get(key)
    if hit is not None:
        return hit
    game = build_stage_game(state, cfg, make_continuation(k, cfg, cache))
    policy = solve_stage_from_game(game)
    cache[key] = policy
    return policy


def make_continuation(
    k: int, cfg: GameConfig, cache: ValueCache
) -> Continuation | None:
    """Payoff-to-go callback for a stage with k stages remaining (None for
    a terminal stage, which skips successor construction entirely)."""
    if k <= 1:
        return None
    return _RecursiveContinuation(k - 1, cfg, cache)


def stages_to_go(t: int, cfg: GameConfig) -> int:
    k = cfg.horizon - t + 1
    if cfg.lookahead_cap is not None:
        k = min(k, cfg.lookahead_cap)
    return k


def solve_stage(
    state: NetworkState, t: int, cfg: GameConfig, cache: ValueCache | None = None
) -> StagePolicy:
    """Feedback solution of stage t (payoff-to-go through the horizon).

    The root game is always built for the given state, so the returned
    moves reference its actual node ids; only successor values come from
    the cache.
    """
    if not 1 <= t <= cfg.horizon:
        raise ValueError(f"stage {t} outside 1..{cfg.horizon}")
    cache = cache if cache is not None else ValueCache()
    k = stages_to_go(t, cfg)
    game = build_stage_game(state, cfg, make_continuation(k, cfg, cache))
    policy = solve_stage_from_game(game)
    cache.setdefault((k, canonize_key(cache_key(state, cfg), cache, cfg)), policy)
    return policy


def continuation_values(
    state: NetworkState, t: int, cfg: GameConfig, cache: ValueCache | None = None
) -> tuple[float, float]:
    """Both players' expected payoff-to-go from stage t at this state;
    (0, 0) one past the horizon."""
    if t == cfg.horizon + 1:
        return (0.0, 0.0)
    policy = solve_stage(state, t, cfg, cache)
    return (policy.omega_a, policy.omega_d)


def solve_nfse(
    state: NetworkState, t: int, cfg: GameConfig, cache: ValueCache | None = None
) -> StagePolicy:
    """Myopic stagewise solution: the one-shot stage game, no lookahead."""
    if not 1 <= t <= cfg.horizon:
        raise ValueError(f"stage {t} outside 1..{cfg.horizon}")
    cache = cache if cache is not None else ValueCache()
    game = build_stage_game(state, cfg, continuation=None)
    policy = solve_stage_from_game(game)
    cache.setdefault((1, canonize_key(cache_key(state, cfg), cache, cfg)), policy)
    return policy


def equal_probability_policy(state: NetworkState) -> MixedStrategy:
    """Uniform mixture over attacks on the activated sinks."""
    targets = [attack_ls(s, h) for h, s in sorted(state.activated.items()) if s]
    if not targets:
        raise NoActivatedLS("no activated sink to attack")
    p = 1.0 / len(targets)
    return MixedStrategy(support=tuple((a, p) for a in targets))


def myopic_best_response(
    state: NetworkState, q: MixedStrategy, cfg: GameConfig
) -> Action:
    """Best pure response to a mixture by immediate payoff alone."""
    game = build_stage_game(state, cfg, continuation=None)
    index = {a: i for i, members in enumerate(game.attacker_members) for a in members}
    weights = np.zeros(game.num_rows)
    for a, p in q.support:
        weights[index[a]] += p
    support_rows = sorted({index[a] for a, p in q.support if p > 0})
    best_idx = None
    best_val = -math.inf
    for j in range(game.num_cols):
        if not all(game.allowed[i, j] for i in support_rows):
            continue
        val = float(weights @ np.where(game.allowed[:, j], game.f_d[:, j], 0.0))
        if val > best_val + VALUE_TIE_TOL:
            best_val = val
            best_idx = j
    if best_idx is None:
        raise NoFeasibleStage("no response playable against the mixture")
    return game.defender_reps[best_idx]


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageRecord:
    """One simulated stage: the solved policy and the realized moves."""

    run: int
    stage: int
    mode: Mode
    support: tuple[tuple[Action, float], ...]
    b_star: Action
    omega_a: float
    omega_d: float
    expected_sensors: float
    p_h_mass: float
    p_c_mass: float
    sampled_action: Action
    played_response: Action
    fallback: bool


def max_weight_area(state: NetworkState) -> int:
    best_h, best_w = 0, -math.inf
    for h in state.areas:
        w = state.area_weight(h)
        if w > best_w + 1e-12:
            best_h, best_w = h, w
    return best_h


def max_cluster(state: NetworkState) -> tuple[int, int]:
    best, best_n = (0, 0), -1
    for (j, h) in sorted(state.clusters, key=lambda key: (key[1], key[0])):
        n = len(state.clusters[(j, h)])
        if n > best_n:
            best, best_n = (j, h), n
    return best


def _exact_key(state: NetworkState) -> tuple:
    return (
        tuple(sorted((i, d.type_id, d.subarea) for i, d in state.devices.items())),
        tuple(sorted((l, s.subarea, s.weight) for l, s in state.sinks.items())),
        tuple(sorted(state.ch_index.items())),
        tuple(sorted(state.activated.items())),
    )


def _policy_for(
    state: NetworkState, t: int, cfg: GameConfig, mode: Mode, cache: ValueCache
) -> StagePolicy:
    if mode is Mode.FSE:
        return solve_stage(state, t, cfg, cache)
    if mode is Mode.NFSE:
        return solve_nfse(state, t, cfg, cache)
    q = equal_probability_policy(state)
    b = myopic_best_response(state, q, cfg)
    game = build_stage_game(state, cfg, continuation=None)
    index = {a: i for i, members in enumerate(game.attacker_members) for a in members}
    b_idx = game.defender_reps.index(b)
    omega_a = sum(p * game.f_a[index[a], b_idx] for a, p in q.support)
    omega_d = sum(p * game.f_d[index[a], b_idx] for a, p in q.support)
    return StagePolicy(q_star=q, b_star=b, omega_a=omega_a, omega_d=omega_d)


def _stage_metrics(
    state: NetworkState, policy: StagePolicy
) -> tuple[float, float, float]:
    flags = flags_of(state)
    expected = sum(
        p * sensor_disconnect_count(a, policy.b_star, state, flags)
        for a, p in policy.q_star.support
    )
    h_star = max_weight_area(state)
    s = state.activated_sink(h_star) if h_star else 0
    p_h = policy.q_star.prob(attack_ls(s, h_star)) if s else 0.0
    j_c, h_c = max_cluster(state)
    f = state.ch(j_c, h_c) if h_c else 0
    p_c = policy.q_star.prob(attack_device(f)) if f else 0.0
    return expected, p_h, p_c


def simulate(
    initial: NetworkState,
    cfg: GameConfig,
    mode: Mode,
    seed: int,
    num_runs: int,
    cache: ValueCache | None = None,
) -> list[StageRecord]:
    """Monte-Carlo rollout of the chosen policy.

    Policies are deterministic per state; runs differ only through the
    sampled attack realizations, with one child RNG stream per run, so a
    (seed, num_runs) pair is fully reproducible.  The value cache is
    shared across runs.  On the rare threshold edge where the committed
    response is not playable against the sampled attack, the defender
    falls back to its best playable response for that attack (flagged in
    the record).
    """
    if num_runs < 1:
        raise ValueError("num_runs must be >= 1")
    cache = cache if cache is not None else ValueCache()
    policy_memo: dict[tuple, StagePolicy] = {}
    records: list[StageRecord] = []
    for run in range(num_runs):
        rng = np.random.default_rng([seed, run])
        state = initial
        for t in range(1, cfg.horizon + 1):
            if _game_over(state):
                break
            memo_key = (mode, stages_to_go(t, cfg), _exact_key(state))
            policy = policy_memo.get(memo_key)
            if policy is None:
                policy = _policy_for(state, t, cfg, mode, cache)
                policy_memo[memo_key] = policy
            expected, p_h, p_c = _stage_metrics(state, policy)
            a = policy.q_star.sample(rng)
            feasible = set(defender_strategy_set(state, a, cfg))
            fallback = policy.b_star not in feasible
            if fallback:
                game = build_stage_game(state, cfg, continuation=None)
                col = {
                    b: j
                    for j, members in enumerate(game.defender_members)
                    for b in members
                }
                row = {
                    act: i
                    for i, members in enumerate(game.attacker_members)
                    for act in members
                }[a]
                played = sorted(feasible)[0]
                for b in sorted(feasible)[1:]:
                    if game.f_d[row, col[b]] > game.f_d[row, col[played]] + VALUE_TIE_TOL:
                        played = b
            else:
                played = policy.b_star
            records.append(
                StageRecord(
                    run=run,
                    stage=t,
                    mode=mode,
                    support=policy.q_star.support,
                    b_star=policy.b_star,
                    omega_a=policy.omega_a,
                    omega_d=policy.omega_d,
                    expected_sensors=expected,
                    p_h_mass=p_h,
                    p_c_mass=p_c,
                    sampled_action=a,
                    played_response=played,
                    fallback=fallback,
                )
            )
            state = step(state, a, played, cfg)
    return records
