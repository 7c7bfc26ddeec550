"""Dynamic attacker-defender connectivity game for hierarchical sensor
networks: stagewise leader-commitment solver with feedback backward
induction, analytical connectivity certificates, and an experiment
harness."""

__version__ = "0.1.0"

from .netmodel import (  # noqa: F401
    Action,
    ActionKind,
    Device,
    DeviceType,
    GameConfig,
    LinkModel,
    LocalSink,
    NetworkState,
    ViewPair,
    apply_transition,
    attack_device,
    attack_ls,
    activate_ls,
    attacker_strategy_set,
    build_state,
    canonical_key,
    defender_strategy_set,
    deploy_device,
    deploy_ls,
    restricted_attacker_set,
    set_ch,
    step,
)
from .fse import (  # noqa: F401
    MixedStrategy,
    Mode,
    StagePolicy,
    ValueCache,
    continuation_values,
    equal_probability_policy,
    simulate,
    solve_nfse,
    solve_stage,
)
from .connectivity import ConnectivityReport, check_stage, disconnecting_actions  # noqa: F401
from .harness import generate_instance, load_config, run_scenario, scale_loaded  # noqa: F401
