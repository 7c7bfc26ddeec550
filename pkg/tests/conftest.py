from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from iobtgame.netmodel import (
    Device,
    DeviceType,
    GameConfig,
    LinkModel,
    LocalSink,
    build_state,
)


def tiny_catalog():
    return (
        DeviceType(1, frozenset({1})),
        DeviceType(2, frozenset({2})),
        DeviceType(3, frozenset({1, 2})),
    )


def tiny_config(**overrides) -> GameConfig:
    """Two information types, one subarea, three device types."""
    fields = dict(
        num_areas=1,
        num_info_types=2,
        type_catalog=tiny_catalog(),
        attack_device_cost=(0.5, 0.5, 1.0),
        attack_ls_cost=5.0,
        ch_discovery_cost=2.0,
        als_discovery_cost=1.0,
        deploy_device_cost=(0.5, 0.5, 1.0),
        deploy_ls_cost=5.0,
        nu=1.0,
        eta=1.0,
        mu=100.0,
        lam=1.0,
        ls_target=3,
        horizon=2,
        ls_weight=10.0,
        threshold_default=2,
        link=LinkModel(),
    )
    fields.update(overrides)
    return GameConfig(**fields)


def tiny_state(catalog=None, *, per_cluster: int = 3, sinks_per_area: int = 2):
    """One subarea, both clusters populated with `per_cluster` single-type
    devices plus one dual-sensor device shared by both."""
    catalog = catalog or tiny_catalog()
    devices = []
    nid = 0
    for tid, count in ((1, per_cluster - 1), (2, per_cluster - 1), (3, 1)):
        for _ in range(count):
            nid += 1
            devices.append(Device(nid, tid, 1))
    sinks = [LocalSink(k + 1, 1, 10.0) for k in range(sinks_per_area)]
    return build_state(catalog, devices, sinks)


@pytest.fixture
def cfg():
    return tiny_config()


@pytest.fixture
def state():
    return tiny_state()
