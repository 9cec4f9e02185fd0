"""Packed entity representations and arena memory layout.

One environment lives in a single contiguous byte region. The packed structs
are 8 bytes per tile, 24 per agent, 16 per POI (asserted at import time), and
the per-environment stride is padded up to STRIDE_ALIGN so neighbouring
environments never share a cache/prefetch block.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

MAX_AGENTS = 20
STRIDE_ALIGN = 256

# Tile flag word bit positions (LSB first: walkable .. visibility mask).
BIT_WALKABLE = 0
BIT_FLYABLE = 1
BIT_AQUATIC = 2
BIT_BLOCKING = 3
BIT_GLOBAL_OBSERVED = 4
TYPE_SHIFT = 5
TYPE_BITS = 7
VIS_SHIFT = 12
VIS_BITS = 20

# AgentState flag byte.
AF_STUCK = 1 << 0
AF_WALK = 1 << 1
AF_FLY = 1 << 2
AF_SWIM = 1 << 3

# POIState flag word.
POI_SAVABLE_BITS = 20
POI_FOUND = 1 << 20
POI_SAVED = 1 << 21
POI_MOVES = 1 << 22

TILE_DTYPE = np.dtype([("flags", "<u4"), ("altitude", "<f4")])
AGENT_DTYPE = np.dtype(
    [
        ("x", "<f4"),
        ("y", "<f4"),
        ("view_range", "<f4"),
        ("deployment", "<f4"),
        ("last_x", "<u2"),
        ("last_y", "<u2"),
        ("flags", "u1"),
        ("max_alt", "<f2"),
        ("pad", "u1"),
    ]
)
POI_DTYPE = np.dtype(
    [("x", "<f4"), ("y", "<f4"), ("state", "<u4"), ("last_x", "<u2"), ("last_y", "<u2")]
)

assert TILE_DTYPE.itemsize == 8
assert AGENT_DTYPE.itemsize == 24
assert POI_DTYPE.itemsize == 16

# Per-POI knowledge record: found byte + last-known x, y (uint16 LE each).
POI_RECORD_BYTES = 5


class LayoutError(ValueError):
    pass


class KnowledgeMode(Enum):
    NONE = "none"
    PER_AGENT = "per-agent"
    SHARED = "shared"


@dataclass(frozen=True)
class TileFlags:
    walkable: bool = False
    flyable: bool = False
    aquatic: bool = False
    blocking: bool = False
    global_observed: bool = False
    type_id: int = 0
    visibility_mask: int = 0


def pack_tile_flags(
    walkable: bool = False,
    flyable: bool = False,
    aquatic: bool = False,
    blocking: bool = False,
    global_observed: bool = False,
    type_id: int = 0,
    visibility_mask: int = 0,
) -> int:
    if not 0 <= type_id < (1 << TYPE_BITS):
        raise LayoutError(f"type_id {type_id} out of range [0, 128)")
    if not 0 <= visibility_mask < (1 << VIS_BITS):
        raise LayoutError(f"visibility_mask {visibility_mask:#x} exceeds 20 bits")
    word = (
        (int(bool(walkable)) << BIT_WALKABLE)
        | (int(bool(flyable)) << BIT_FLYABLE)
        | (int(bool(aquatic)) << BIT_AQUATIC)
        | (int(bool(blocking)) << BIT_BLOCKING)
        | (int(bool(global_observed)) << BIT_GLOBAL_OBSERVED)
        | (type_id << TYPE_SHIFT)
        | (visibility_mask << VIS_SHIFT)
    )
    return word


def unpack_tile_flags(word: int) -> TileFlags:
    word &= 0xFFFFFFFF
    return TileFlags(
        walkable=bool(word & (1 << BIT_WALKABLE)),
        flyable=bool(word & (1 << BIT_FLYABLE)),
        aquatic=bool(word & (1 << BIT_AQUATIC)),
        blocking=bool(word & (1 << BIT_BLOCKING)),
        global_observed=bool(word & (1 << BIT_GLOBAL_OBSERVED)),
        type_id=(word >> TYPE_SHIFT) & ((1 << TYPE_BITS) - 1),
        visibility_mask=(word >> VIS_SHIFT) & ((1 << VIS_BITS) - 1),
    )


def pack_flags(tf: TileFlags) -> int:
    return pack_tile_flags(
        tf.walkable,
        tf.flyable,
        tf.aquatic,
        tf.blocking,
        tf.global_observed,
        tf.type_id,
        tf.visibility_mask,
    )


def knowledge_size(W: int, H: int, n_agents: int, n_pois: int, mode: KnowledgeMode) -> int:
    """Size of the belief block, rounded up to 8 bytes.

    Per agent: a W*H-bit observed-tile bitset (byte-rounded) plus one 5-byte
    record per POI. Shared mode keeps a single bitset + record set for the
    whole team; NONE drops the block entirely.
    """
    bitset = (W * H + 7) // 8
    per_unit = bitset + n_pois * POI_RECORD_BYTES
    if mode is KnowledgeMode.NONE:
        raw = 0
    elif mode is KnowledgeMode.PER_AGENT:
        raw = n_agents * per_unit
    else:
        raw = per_unit
    return (raw + 7) & ~7


@dataclass(frozen=True)
class ArenaLayout:
    W: int
    H: int
    n_agents: int
    n_pois: int
    n_types: int
    knowledge_mode: KnowledgeMode
    offset_grid: int
    offset_agents: int
    offset_pois: int
    offset_speeds: int
    offset_knowledge: int
    offset_counters: int
    raw_stride: int
    env_stride: int

    @property
    def vis_bytes(self) -> int:
        return (self.W * self.H + 7) // 8


def compute_layout(
    W: int,
    H: int,
    n_agents: int,
    n_pois: int,
    n_types: int,
    knowledge_mode: KnowledgeMode = KnowledgeMode.NONE,
    stride_align: int = STRIDE_ALIGN,
) -> ArenaLayout:
    for name, v in (("W", W), ("H", H), ("n_agents", n_agents), ("n_pois", n_pois), ("n_types", n_types)):
        if v <= 0:
            raise LayoutError(f"{name} must be positive, got {v}")
    if n_agents > MAX_AGENTS:
        raise LayoutError(
            f"n_agents {n_agents} exceeds the {MAX_AGENTS}-agent visibility mask capacity"
        )
    offset_grid = 0
    offset_agents = offset_grid + W * H * TILE_DTYPE.itemsize
    offset_pois = offset_agents + n_agents * AGENT_DTYPE.itemsize
    offset_speeds = offset_pois + n_pois * POI_DTYPE.itemsize
    offset_knowledge = offset_speeds + n_agents * n_types * 4
    offset_counters = offset_knowledge + knowledge_size(W, H, n_agents, n_pois, knowledge_mode)
    raw_stride = offset_counters + 16
    env_stride = (raw_stride + stride_align - 1) & ~(stride_align - 1)
    return ArenaLayout(
        W=W,
        H=H,
        n_agents=n_agents,
        n_pois=n_pois,
        n_types=n_types,
        knowledge_mode=knowledge_mode,
        offset_grid=offset_grid,
        offset_agents=offset_agents,
        offset_pois=offset_pois,
        offset_speeds=offset_speeds,
        offset_knowledge=offset_knowledge,
        offset_counters=offset_counters,
        raw_stride=raw_stride,
        env_stride=env_stride,
    )


# Counter word indices (int32[4] at offset_counters).
CTR_STEPS = 0
CTR_TILES_DISCOVERED = 1
CTR_POIS_FOUND = 2
CTR_POIS_SAVED = 3
