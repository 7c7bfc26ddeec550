"""Connectivity guarantees for the solved stage game.

A stage keeps the network connected iff the attacker's mixture puts no
mass on a move that severs a component given the defender's response: any
current cluster head, and any activated sink the response does not
immediately replace.  ``check_stage`` certifies this analytically, per
disconnecting move, by exhibiting a non-disconnecting move that dominates
it inside the stage LP: shifting mass between the two moves never loosens
a follower constraint and strictly improves the attacker objective, so
every optimal mixture drops the disconnecting move.

The certificate is reported through the classified constraint sets B1/B2/B3
(follower alternatives whose constraint coefficients bound the admissible
mass-shift rate from above, from below, or rule it out), the pivot
alternative and its ratio W.  Because the mixture's probabilities sum to
one, the shift rate is pinned to exactly 1, which collapses the ratio
window to: every B1 ratio >= 1 and every B2 ratio <= 1.  Alternatives with
a zero denominator are excluded from the ratio sets by convention (their
constraints are vacuous for the shift).  The test is sufficient, never
necessary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fse import StageGame, StagePolicy
from .netmodel import (
    Action,
    ActionKind,
    GameConfig,
    NetworkState,
    attack_device,
    attack_ls,
    restricted_attacker_set,
)


_SIGN_TOL = 1e-12
_MARGIN = 1e-9


def _ch_targets(state: NetworkState) -> list[Action]:
    return [attack_device(i) for (_j, _h), i in sorted(state.ch_index.items()) if i]


def _ls_targets(state: NetworkState, skip_area: int | None = None) -> list[Action]:
    return [
        attack_ls(s, h)
        for h, s in sorted(state.activated.items())
        if s and h != skip_area
    ]


def disconnecting_actions(
    bp: Action, state: NetworkState, cfg: GameConfig
) -> tuple[Action, ...]:
    """Attacker moves that sever a cluster or subarea given response bp.

    Heads and activated sinks are the only cut vertices.  The response
    exempts exactly the role it refills in the same stage: re-heading a
    cluster exempts that cluster's current head, re-activating a subarea's
    sink exempts that subarea's activated sink.  Deployments exempt
    nothing.
    """
    if bp.kind == ActionKind.SET_CH:
        targets = [
            attack_device(i)
            for (j, h), i in sorted(state.ch_index.items())
            if i and (j, h) != (bp.info, bp.area)
        ]
        targets += _ls_targets(state)
    elif bp.kind == ActionKind.ACTIVATE_LS:
        targets = _ch_targets(state) + _ls_targets(state, skip_area=bp.area)
    elif bp.kind in (ActionKind.DEPLOY_DEVICE, ActionKind.DEPLOY_LS):
        targets = _ch_targets(state) + _ls_targets(state)
    else:
        raise ValueError(f"{bp.describe()} is not a defender move")
    consistent = set(restricted_attacker_set(bp, state, cfg))
    return tuple(sorted(a for a in set(targets) if a in consistent))


@dataclass(frozen=True)
class DisconnectCheck:
    """Certificate attempt for one disconnecting move."""

    action: Action
    covered: bool
    witness: Action | None
    condition: int | None
    b1: tuple[Action, ...]
    b2: tuple[Action, ...]
    b3: tuple[Action, ...]
    ratio_w: float | None
    pivot: Action | None


@dataclass(frozen=True)
class ConnectivityReport:
    stage: int
    b_star: Action
    checks: tuple[DisconnectCheck, ...]
    guaranteed: bool

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "response": self.b_star.describe(),
            "verdict": "Guaranteed" if self.guaranteed else "NotGuaranteed",
            "checks": [
                {
                    "action": c.action.describe(),
                    "covered": c.covered,
                    "witness": c.witness.describe() if c.witness else None,
                    "condition": c.condition,
                    "b1": [b.describe() for b in c.b1],
                    "b2": [b.describe() for b in c.b2],
                    "b3": [b.describe() for b in c.b3],
                    "ratio_w": c.ratio_w,
                    "pivot": c.pivot.describe() if c.pivot else None,
                }
                for c in self.checks
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _certificate(
    game: StageGame,
    b_idx: int,
    r_idx: int,
    n_idx: int,
) -> tuple[bool, int | None, tuple, tuple, tuple, float | None, Action | None]:
    """Try to certify that row r gets zero mass by dominance through row n."""
    gated = np.where(game.allowed, game.f_d, 0.0)
    base_n = game.f_d[n_idx, b_idx]
    base_r = game.f_d[r_idx, b_idx]
    b1: list[int] = []
    b2: list[int] = []
    b3: list[int] = []
    ratios: dict[int, float] = {}
    shift_ok = True
    for b in range(game.num_cols):
        if b == b_idx:
            continue
        u = gated[n_idx, b] - base_n
        v = gated[r_idx, b] - base_r
        if u > _SIGN_TOL and v >= -_SIGN_TOL:
            b1.append(b)
            ratios[b] = v / u
            if v / u < 1.0 - _MARGIN:
                shift_ok = False
        elif u < -_SIGN_TOL and v <= _SIGN_TOL:
            b2.append(b)
            ratios[b] = v / u
            if v / u > 1.0 + _MARGIN:
                shift_ok = False
        elif u >= -_SIGN_TOL and v < -_SIGN_TOL:
            b3.append(b)
            shift_ok = False
        # remaining signatures never bind the shift; zero-denominator
        # alternatives are excluded from the ratio sets by convention

    improvement = game.f_a[n_idx, b_idx] > game.f_a[r_idx, b_idx] + _MARGIN
    fired: int | None = None
    if not b3 and shift_ok and improvement:
        if not b1 and not b2:
            fired = 5
        elif b1 and b2:
            fired = 4
        else:
            fired = 2
    pivot_idx: int | None = None
    if b1:
        pivot_idx = min(b1, key=lambda b: (ratios[b], b))
    elif b2:
        pivot_idx = max(b2, key=lambda b: (ratios[b], -b))
    reps = game.defender_reps
    return (
        fired is not None,
        fired,
        tuple(reps[b] for b in b1),
        tuple(reps[b] for b in b2),
        tuple(reps[b] for b in b3),
        ratios[pivot_idx] if pivot_idx is not None else None,
        reps[pivot_idx] if pivot_idx is not None else None,
    )


def check_stage(
    game: StageGame, policy: StagePolicy, cfg: GameConfig, stage: int = 1
) -> ConnectivityReport:
    """Certify that the solved stage keeps the network connected.

    Guaranteed means every disconnecting move consistent with the played
    response is provably zero in every optimal mixture; it implies the
    solved mixture itself puts no mass there.
    """
    state = game.state
    if state is None:
        raise ValueError("stage game carries no state")
    b_star = policy.b_star
    b_idx = game.defender_reps.index(b_star)
    zd = set(disconnecting_actions(b_star, state, cfg))
    zd_rows = [i for i, rep in enumerate(game.attacker_reps) if rep in zd]
    safe_rows = [
        i
        for i, rep in enumerate(game.attacker_reps)
        if game.allowed[i, b_idx] and rep not in zd
    ]
    checks: list[DisconnectCheck] = []
    all_ok = True
    for r in zd_rows:
        if not game.allowed[r, b_idx]:
            continue
        entry: DisconnectCheck | None = None
        for n in safe_rows:
            ok, fired, b1, b2, b3, w, pivot = _certificate(game, b_idx, r, n)
            if ok:
                entry = DisconnectCheck(
                    action=game.attacker_reps[r],
                    covered=True,
                    witness=game.attacker_reps[n],
                    condition=fired,
                    b1=b1,
                    b2=b2,
                    b3=b3,
                    ratio_w=w,
                    pivot=pivot,
                )
                break
            if entry is None:
                entry = DisconnectCheck(
                    action=game.attacker_reps[r],
                    covered=False,
                    witness=game.attacker_reps[n],
                    condition=None,
                    b1=b1,
                    b2=b2,
                    b3=b3,
                    ratio_w=w,
                    pivot=pivot,
                )
        if entry is None:
            entry = DisconnectCheck(
                action=game.attacker_reps[r],
                covered=False,
                witness=None,
                condition=None,
                b1=(),
                b2=(),
                b3=(),
                ratio_w=None,
                pivot=None,
            )
        if not entry.covered:
            all_ok = False
        checks.append(entry)
    return ConnectivityReport(
        stage=stage, b_star=b_star, checks=tuple(checks), guaranteed=all_ok
    )
