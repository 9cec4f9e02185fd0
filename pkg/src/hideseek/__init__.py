"""Vectorized multi-agent hide-and-seek gridworld engine.

Flat-memory environment batches stepped by nogil compiled kernels, six
observability modes, data-driven maps (PNG + JSON), a benchmark CLI and a
tabular learning smoke test.
"""

from .arena import ArenaError, EnvView, EnvironmentArena, allocate_arena, reset_env
from .layout import (
    ArenaLayout,
    KnowledgeMode,
    LayoutError,
    TileFlags,
    compute_layout,
    knowledge_size,
    pack_tile_flags,
    unpack_tile_flags,
)
from .mapspec import (
    AgentDef,
    MapError,
    MapSpec,
    POIDef,
    RewardConfig,
    TileTypeDef,
    build_map_spec,
    parse_config,
    parse_map_image,
)
from .dynamics import (
    StepResult,
    apply_move,
    compute_visibility,
    effective_speed,
    poi_update,
    radio_broadcast,
    step_env,
    stuck_and_rescue,
)
from .observation import (
    ContractError,
    ObsLayout,
    ObsMode,
    emit,
    fill_centralized,
    fill_decentralized,
    fill_true_state,
)
from .vecenv import EnvPool, StepOutputs, VecConfig, make_pool

__version__ = "0.1.0"

__all__ = [
    "AgentDef",
    "ArenaError",
    "ArenaLayout",
    "ContractError",
    "EnvPool",
    "EnvView",
    "EnvironmentArena",
    "KnowledgeMode",
    "LayoutError",
    "MapError",
    "MapSpec",
    "ObsLayout",
    "ObsMode",
    "POIDef",
    "RewardConfig",
    "StepOutputs",
    "StepResult",
    "TileFlags",
    "TileTypeDef",
    "VecConfig",
    "allocate_arena",
    "apply_move",
    "build_map_spec",
    "compute_layout",
    "compute_visibility",
    "effective_speed",
    "emit",
    "fill_centralized",
    "fill_decentralized",
    "fill_true_state",
    "knowledge_size",
    "make_pool",
    "pack_tile_flags",
    "parse_config",
    "parse_map_image",
    "poi_update",
    "radio_broadcast",
    "reset_env",
    "step_env",
    "stuck_and_rescue",
    "unpack_tile_flags",
    "__version__",
]
