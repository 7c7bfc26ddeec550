"""Experiment harness: scenario configs, instance generation, metrics, CSV.

A scenario file is JSON with sections ``network``, ``types``, ``costs``,
``normalizers``, ``link``, ``thresholds`` and optional ``scenario``; the
packaged ``data/default_config.json`` holds the reference parameterization
and documents every field by example.  ``--scale`` shrinks device counts
and cluster thresholds proportionally for desk-scale runs, keeping the
type mix and threshold feasibility (or failing loudly).
"""

from __future__ import annotations

import csv
import importlib.resources
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .fse import Mode, StageRecord, ValueCache, simulate
from .netmodel import (
    Device,
    DeviceType,
    GameConfig,
    LinkModel,
    LocalSink,
    NetworkState,
    build_state,
)


class ConfigError(Exception):
    """Malformed or incoherent scenario file."""


class InfeasibleInstance(Exception):
    """Requested device counts cannot satisfy the cluster thresholds."""


@dataclass(frozen=True)
class InstanceSpec:
    """Deterministic network layout: identical per-area type counts."""

    areas: int
    ls_per_area: int
    ls_weight: float
    devices_per_area: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.areas < 1 or self.ls_per_area < 1:
            raise ConfigError("need at least one area and one sink per area")
        if any(n < 0 for n in self.devices_per_area):
            raise ConfigError("negative device count")


@dataclass(frozen=True)
class LoadedConfig:
    cfg: GameConfig
    spec: InstanceSpec
    scenario: dict


def default_config_text() -> str:
    return (
        importlib.resources.files("iobtgame")
        .joinpath("data/default_config.json")
        .read_text()
    )


def load_config(path: str | Path | None = None) -> LoadedConfig:
    """Load and validate a scenario file (packaged default when None)."""
    if path is None:
        raw = json.loads(default_config_text())
    else:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {p}: {exc}") from exc
    return parse_config(raw)


def _per_type(costs: dict, key: str, catalog: Sequence[DeviceType]) -> tuple[float, ...]:
    explicit = costs.get(key)
    if explicit is not None:
        if len(explicit) != len(catalog):
            raise ConfigError(f"{key} must list one value per device type")
        return tuple(float(v) for v in explicit)
    per_sensor = costs.get(f"{key}_per_sensor")
    if per_sensor is None:
        raise ConfigError(f"costs must define {key} or {key}_per_sensor")
    return tuple(float(per_sensor) * t.sensor_count for t in catalog)


def parse_config(raw: dict) -> LoadedConfig:
    try:
        types_raw = raw["types"]
        network = raw["network"]
        costs = raw["costs"]
        norm = raw.get("normalizers", {})
        link_raw = raw.get("link", {})
        thresholds = raw.get("thresholds", {})
    except KeyError as exc:
        raise ConfigError(f"missing config section: {exc}") from exc
    try:
        catalog = tuple(
            DeviceType(type_id=int(t["id"]), info_set=frozenset(int(j) for j in t["info"]))
            for t in types_raw
        )
        num_info = max(max(t.info_set) for t in catalog)
        counts_raw = network["devices_per_area"]
        counts = tuple(int(counts_raw[str(t.type_id)]) for t in catalog)
        spec = InstanceSpec(
            areas=int(network["areas"]),
            ls_per_area=int(network["ls_per_area"]),
            ls_weight=float(network.get("ls_weight", 15.0)),
            devices_per_area=counts,
        )
        link = LinkModel(
            packet_size=float(link_raw.get("packet_size", 1.0)),
            capacity=float(link_raw.get("capacity", 100.0)),
            gs_delay=float(link_raw.get("gs_delay", 0.01)),
        )
        overrides = {
            (int(k.split(",")[0]), int(k.split(",")[1])): int(v)
            for k, v in thresholds.get("overrides", {}).items()
        }
        cfg = GameConfig(
            num_areas=spec.areas,
            num_info_types=num_info,
            type_catalog=catalog,
            attack_device_cost=_per_type(costs, "attack_device", catalog),
            attack_ls_cost=float(costs["attack_ls"]),
            ch_discovery_cost=float(costs["ch_discovery"]),
            als_discovery_cost=float(costs["activated_ls_discovery"]),
            deploy_device_cost=_per_type(costs, "deploy_device", catalog),
            deploy_ls_cost=float(costs["deploy_ls"]),
            nu=float(norm.get("nu", 1.0)),
            eta=float(norm.get("eta", 1.0)),
            mu=float(norm.get("mu", 100.0)),
            lam=float(norm.get("lambda", 1.0)),
            ls_target=int(raw.get("ls_target", 3)),
            horizon=int(raw.get("horizon", 1)),
            ls_weight=spec.ls_weight,
            threshold_default=int(thresholds.get("default", 15)),
            threshold_overrides=overrides,
            link=link,
            lookahead_cap=raw.get("lookahead_cap"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    return LoadedConfig(cfg=cfg, spec=spec, scenario=dict(raw.get("scenario", {})))


def scale_loaded(loaded: LoadedConfig, scale: float) -> LoadedConfig:
    """Scale device counts and thresholds; structure must survive."""
    if scale <= 0:
        raise ConfigError("scale must be positive")
    if scale == 1.0:
        return loaded
    counts = tuple(
        int(math.floor(n * scale + 0.5)) for n in loaded.spec.devices_per_area
    )
    if sum(counts) == 0:
        raise InfeasibleInstance("scale removes every device")
    thr = max(1, int(math.floor(loaded.cfg.threshold_default * scale + 0.5)))
    over = {
        key: max(1, int(math.floor(v * scale + 0.5)))
        for key, v in loaded.cfg.threshold_overrides.items()
    }
    return LoadedConfig(
        cfg=replace(loaded.cfg, threshold_default=thr, threshold_overrides=over),
        spec=replace(loaded.spec, devices_per_area=counts),
        scenario=loaded.scenario,
    )


def generate_instance(loaded: LoadedConfig, seed: int = 0) -> NetworkState:
    """Build the start-of-game network: devices laid out area-major and
    type-major (so ids are deterministic), one CH per cluster (lowest id),
    sinks per area with the lowest activated.  The seed is accepted for
    interface stability; the default layout is fully deterministic."""
    del seed
    cfg, spec = loaded.cfg, loaded.spec
    devices: list[Device] = []
    next_id = 0
    for h in range(1, spec.areas + 1):
        for t in cfg.type_catalog:
            for _ in range(spec.devices_per_area[t.type_id - 1]):
                next_id += 1
                devices.append(Device(device_id=next_id, type_id=t.type_id, subarea=h))
    sinks: list[LocalSink] = []
    sid = 0
    for h in range(1, spec.areas + 1):
        for _ in range(spec.ls_per_area):
            sid += 1
            sinks.append(LocalSink(sink_id=sid, subarea=h, weight=spec.ls_weight))
    state = build_state(cfg.type_catalog, devices, sinks)
    for h in range(1, spec.areas + 1):
        for j in range(1, cfg.num_info_types + 1):
            n = state.cluster_size(j, h)
            if n and n < cfg.threshold(j, h):
                raise InfeasibleInstance(
                    f"cluster ({j},{h}) holds {n} devices, below threshold "
                    f"{cfg.threshold(j, h)}"
                )
            if not n and cfg.threshold(j, h) > 0:
                raise InfeasibleInstance(f"cluster ({j},{h}) is empty")
    return state


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

SCENARIO_LS_COST_GRID = (0.0, 50.0, 100.0, 150.0, 200.0)
SCENARIO_CH_COST_GRID = (0.0, 20.0, 40.0, 60.0, 80.0, 100.0)
SCENARIO_HORIZON_GRID = (1, 2, 3, 4, 5)
SCENARIO3_LS_COSTS = ((0.0, 50.0), (150.0, 50.0))


@dataclass(frozen=True)
class ScenarioPoint:
    """One (swept value, mode, horizon) cell of a scenario grid."""

    scenario: str
    swept_param: str
    swept_value: float
    mode: Mode
    horizon: int
    loaded: LoadedConfig

    @property
    def mode_label(self) -> str:
        if self.mode is Mode.FSE:
            return f"fse_T{self.horizon}"
        if self.mode is Mode.NFSE:
            return "nfse"
        return "equal"


@dataclass(frozen=True)
class MetricsRow:
    scenario: str
    mode: str
    swept_param: str
    swept_value: float
    horizon: int
    p_h: float
    p_c_max: float
    n_d: float
    runtime_s: float
    seed: int


CSV_COLUMNS = (
    "scenario",
    "mode",
    "swept_param",
    "swept_value",
    "horizon",
    "p_h",
    "p_c_max",
    "n_d",
    "seed",
)


def _with(loaded: LoadedConfig, **cfg_fields) -> LoadedConfig:
    return LoadedConfig(
        cfg=replace(loaded.cfg, **cfg_fields), spec=loaded.spec, scenario=loaded.scenario
    )


SCENARIO3_LOOKAHEAD = 2


def scenario_points(which: str, loaded: LoadedConfig) -> list[ScenarioPoint]:
    """The grid of a named scenario.

    1: sweep the sink-compromise cost (activated-sink discovery free).
    2: sweep the CH-discovery cost at sink costs (100, 50).
    3: sweep the horizon at sink costs (0, 50) labelled 3a and (150, 50)
       labelled 3b; the feedback policy there uses a fixed two-stage
       receding lookahead so the five-stage games stay tractable.
    """
    points: list[ScenarioPoint] = []
    if which == "1":
        for c_l in SCENARIO_LS_COST_GRID:
            base = _with(
                loaded, attack_ls_cost=c_l, als_discovery_cost=0.0, ch_discovery_cost=20.0
            )
            for mode, t in ((Mode.NFSE, 1), (Mode.FSE, 2), (Mode.FSE, 3), (Mode.EQUAL, 1)):
                points.append(
                    ScenarioPoint(
                        "1", "attack_ls_cost", c_l, mode, t, _with(base, horizon=t)
                    )
                )
    elif which == "2":
        for c_ch in SCENARIO_CH_COST_GRID:
            base = _with(
                loaded,
                ch_discovery_cost=c_ch,
                als_discovery_cost=100.0,
                attack_ls_cost=50.0,
            )
            for mode, t in ((Mode.NFSE, 1), (Mode.FSE, 2), (Mode.FSE, 3), (Mode.EQUAL, 1)):
                points.append(
                    ScenarioPoint(
                        "2", "ch_discovery_cost", c_ch, mode, t, _with(base, horizon=t)
                    )
                )
    elif which == "3":
        for (c_al, c_l), label in zip(SCENARIO3_LS_COSTS, ("3a", "3b")):
            base = _with(
                loaded,
                als_discovery_cost=c_al,
                attack_ls_cost=c_l,
                ch_discovery_cost=20.0,
                lookahead_cap=SCENARIO3_LOOKAHEAD,
            )
            for t in SCENARIO_HORIZON_GRID:
                for mode in (Mode.FSE, Mode.NFSE, Mode.EQUAL):
                    points.append(
                        ScenarioPoint(
                            label, "horizon", float(t), mode, t, _with(base, horizon=t)
                        )
                    )
    else:
        raise ConfigError(f"unknown scenario {which!r} (expected 1, 2 or 3)")
    return points


def _mean(values: Iterable[float]) -> float:
    vals = list(values)
    return float(sum(vals) / len(vals)) if vals else 0.0


def run_point(point: ScenarioPoint, seed: int, runs: int) -> MetricsRow:
    start = time.perf_counter()
    state = generate_instance(point.loaded, seed)
    records = simulate(
        state, point.loaded.cfg, point.mode, seed=seed, num_runs=runs, cache=ValueCache()
    )
    return extract_metrics(point, records, seed, time.perf_counter() - start)


def extract_metrics(
    point: ScenarioPoint, records: Sequence[StageRecord], seed: int, runtime_s: float = 0.0
) -> MetricsRow:
    """Aggregate per-stage records into one scenario row (means over all
    stages and runs; ties inside the records were already broken at the
    lowest index)."""
    return MetricsRow(
        scenario=point.scenario,
        mode=point.mode_label,
        swept_param=point.swept_param,
        swept_value=point.swept_value,
        horizon=point.horizon,
        p_h=_mean(r.p_h_mass for r in records),
        p_c_max=_mean(r.p_c_mass for r in records),
        n_d=_mean(r.expected_sensors for r in records),
        runtime_s=runtime_s,
        seed=seed,
    )


def _group_tasks(points: Sequence[ScenarioPoint]) -> list[list[ScenarioPoint]]:
    """One task per (scenario, swept value): those points differ only in
    mode/horizon, so they share one instance and one value cache (values
    are keyed by stages-to-go, never by the horizon itself)."""
    grouped: dict[tuple, list[ScenarioPoint]] = {}
    for p in points:
        grouped.setdefault((p.scenario, p.swept_param, p.swept_value), []).append(p)
    return [grouped[key] for key in sorted(grouped)]


def _run_task(args: tuple[list[ScenarioPoint], int, int]) -> list[MetricsRow]:
    group, seed, runs = args
    state = generate_instance(group[0].loaded, seed)
    cache = ValueCache()
    rows = []
    for point in sorted(group, key=lambda p: (p.mode.value, p.horizon), reverse=True):
        start = time.perf_counter()
        records = simulate(
            state, point.loaded.cfg, point.mode, seed=seed, num_runs=runs, cache=cache
        )
        rows.append(extract_metrics(point, records, seed, time.perf_counter() - start))
    return rows


def run_scenario(
    which: str,
    loaded: LoadedConfig,
    seed: int = 0,
    runs: int = 1,
    jobs: int = 1,
) -> list[MetricsRow]:
    tasks = [(group, seed, runs) for group in _group_tasks(scenario_points(which, loaded))]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    rows = [row for group_rows in results for row in group_rows]
    rows.sort(key=lambda r: (r.scenario, r.mode, r.swept_value, r.horizon))
    return rows


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def write_csv(rows: Sequence[MetricsRow], path: Path) -> None:
    """Deterministic CSV: fixed header, sorted rows, stable float format.
    Wall-clock timings go to a sidecar so the CSV is byte-reproducible."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.scenario,
                    r.mode,
                    r.swept_param,
                    _fmt(r.swept_value),
                    r.horizon,
                    _fmt(r.p_h),
                    _fmt(r.p_c_max),
                    _fmt(r.n_d),
                    r.seed,
                ]
            )


def write_timings(rows: Sequence[MetricsRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "mode", "swept_value", "horizon", "runtime_s"])
        for r in rows:
            writer.writerow(
                [r.scenario, r.mode, _fmt(r.swept_value), r.horizon, f"{r.runtime_s:.3f}"]
            )
