"""Observation buffer layout and fill surface.

All observation images are float32 ``[channel, row, column]`` row-major
planes. The caller allocates; the engine writes in place. Channel order:
tile types (one plane per type), altitude, detected POIs, discovery map,
self location (or one location plane per agent for shared images), then
last-known teammate planes for per-agent images.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import _kernels
from .arena import EnvView
from .layout import AF_STUCK, KnowledgeMode


class ContractError(ValueError):
    """A caller-provided buffer or argument violates the interface contract."""


class ObsMode(IntEnum):
    DecentralizedNoState = 0
    DecentralizedWithState = 1
    CentralizedNoState = 2
    CentralizedWithState = 3
    StateOnly = 4
    Void = 5

    @classmethod
    def parse(cls, name: str) -> "ObsMode":
        try:
            return cls[name]
        except KeyError:
            pass
        try:
            return cls(int(name))
        except ValueError:
            raise ContractError(
                f"unknown observation mode {name!r}; expected one of "
                + ", ".join(m.name for m in cls)
            ) from None


# knowledge block needed in the arena for each mode
KNOWLEDGE_FOR_MODE = {
    ObsMode.DecentralizedNoState: KnowledgeMode.PER_AGENT,
    ObsMode.DecentralizedWithState: KnowledgeMode.PER_AGENT,
    ObsMode.CentralizedNoState: KnowledgeMode.SHARED,
    ObsMode.CentralizedWithState: KnowledgeMode.SHARED,
    ObsMode.StateOnly: KnowledgeMode.NONE,
    ObsMode.Void: KnowledgeMode.NONE,
}

LOGICAL_LEN = 6


@dataclass(frozen=True)
class ObsLayout:
    """Channel offsets for one observation image."""

    n_types: int
    n_agents: int
    H: int
    W: int
    undifferentiated: bool = False

    @property
    def c_tile_types(self) -> int:
        return 0

    @property
    def c_altitude(self) -> int:
        return self.n_types

    @property
    def c_detected_pois(self) -> int:
        return self.n_types + 1

    @property
    def c_discovery(self) -> int:
        return self.n_types + 2

    @property
    def c_self(self) -> int:
        return self.n_types + 3

    @property
    def c_others(self) -> int:
        return self.n_types + 4

    @property
    def agent_channels(self) -> int:
        """Channels in one per-agent (decentralized) image."""
        if self.n_agents == 1:
            others = 0
        elif self.undifferentiated:
            others = 1
        else:
            others = self.n_agents - 1
        return self.n_types + 4 + others

    @property
    def shared_channels(self) -> int:
        """Channels in a shared (centralized or true-state) image."""
        return self.n_types + 3 + self.n_agents

    @property
    def plane_shape(self) -> tuple[int, int]:
        return (self.H, self.W)

    @property
    def logical_len(self) -> int:
        return LOGICAL_LEN


def _check_buffer(name: str, buf: np.ndarray, shape: tuple[int, ...]) -> None:
    if not isinstance(buf, np.ndarray):
        raise ContractError(f"{name} must be a numpy array")
    if buf.dtype != np.float32:
        raise ContractError(f"{name} must be float32, got {buf.dtype}")
    if buf.shape != shape:
        raise ContractError(f"{name} shape {buf.shape} != required {shape}")
    if not buf.flags.c_contiguous:
        raise ContractError(f"{name} must be C-contiguous")


def _layout_for(env: EnvView, undifferentiated: bool = False) -> ObsLayout:
    lay = env.arena.layout
    return ObsLayout(lay.n_types, lay.n_agents, lay.H, lay.W, undifferentiated)


def fill_decentralized(
    env: EnvView,
    agent_index: int,
    out_image: np.ndarray,
    out_logical: np.ndarray,
    undifferentiated: bool = False,
) -> None:
    """One agent's partial view from its knowledge bitset and radio records."""
    ar = env.arena
    lay = ar.layout
    ol = _layout_for(env, undifferentiated)
    if not 0 <= agent_index < lay.n_agents:
        raise ContractError(f"agent index {agent_index} out of range")
    if lay.knowledge_mode is KnowledgeMode.NONE:
        raise ContractError("arena carries no knowledge block; decentralized fill needs one")
    _check_buffer("out_image", out_image, (ol.agent_channels, lay.H, lay.W))
    _check_buffer("out_logical", out_logical, (ol.logical_len,))
    km = 1 if lay.knowledge_mode is KnowledgeMode.PER_AGENT else 2
    _kernels._fill_agent_obs(
        env.index, agent_index, out_image,
        lay.W, lay.H, lay.n_agents, lay.n_pois, lay.n_types, km, lay.vis_bytes,
        1 if undifferentiated else 0,
        ar.type_col, ar.grid_flags, ar.grid_alt, ar.agent_f, ar.poi_state,
        ar.knowledge, ar.poi_rec_stamp, ar.mate_know,
    )
    _fill_logical_py(env, agent_index, out_logical)


def _fill_logical_py(env: EnvView, a: int, out: np.ndarray) -> None:
    f = env.agent_f[a]
    out[0] = f[0]
    out[1] = f[1]
    out[2] = f[2]
    out[3] = f[3]
    out[4] = np.float32(1.0) if env.agent_flags[a] & AF_STUCK else np.float32(0.0)
    out[5] = np.float32(env.counters[0]) / np.float32(env.arena.spec.horizon)


def fill_centralized(env: EnvView, out_image: np.ndarray) -> None:
    """Team view from the shared knowledge union; one location plane per agent."""
    ar = env.arena
    lay = ar.layout
    ol = _layout_for(env)
    if lay.knowledge_mode is not KnowledgeMode.SHARED:
        raise ContractError("centralized fill needs a shared knowledge block")
    _check_buffer("out_image", out_image, (ol.shared_channels, lay.H, lay.W))
    _kernels._fill_cent_obs(
        env.index, out_image,
        lay.W, lay.H, lay.n_agents, lay.n_pois, lay.n_types, lay.vis_bytes,
        ar.type_col, ar.grid_flags, ar.grid_alt, ar.agent_f, ar.poi_state,
        ar.knowledge, ar.poi_rec_stamp,
    )


def fill_true_state(env: EnvView, out_image: np.ndarray) -> None:
    """Omniscient view: all tiles, true POI and agent positions, no masking."""
    ar = env.arena
    lay = ar.layout
    ol = _layout_for(env)
    _check_buffer("out_image", out_image, (ol.shared_channels, lay.H, lay.W))
    _kernels._fill_state_obs(
        env.index, out_image,
        lay.W, lay.H, lay.n_agents, lay.n_pois, lay.n_types,
        ar.type_col, ar.grid_flags, ar.grid_alt, ar.agent_f, ar.poi_pos, ar.poi_state,
    )


def emit(env: EnvView, mode: ObsMode, buffers: dict, undifferentiated: bool = False) -> None:
    """Dispatch the fills a mode requires.

    buffers keys by mode:
      Decentralized*:   "image" (A, C, H, W), "logical" (A, 6)
      Centralized*:     "shared" (C2, H, W), "logical" (A, 6)
      *WithState/StateOnly: "state" (C2, H, W)
      Void:             none (no buffer writes at all)
    """
    mode = ObsMode(mode)
    lay = env.arena.layout
    ol = _layout_for(env, undifferentiated)
    A = lay.n_agents

    def need(key):
        if key not in buffers:
            raise ContractError(f"mode {mode.name} requires buffer {key!r}")
        return buffers[key]

    if mode in (ObsMode.DecentralizedNoState, ObsMode.DecentralizedWithState):
        img = need("image")
        logical = need("logical")
        _check_buffer("image", img, (A, ol.agent_channels, lay.H, lay.W))
        _check_buffer("logical", logical, (A, ol.logical_len))
        for a in range(A):
            fill_decentralized(env, a, img[a], logical[a], undifferentiated)
    elif mode in (ObsMode.CentralizedNoState, ObsMode.CentralizedWithState):
        shared = need("shared")
        logical = need("logical")
        _check_buffer("logical", logical, (A, ol.logical_len))
        fill_centralized(env, shared)
        for a in range(A):
            _fill_logical_py(env, a, logical[a])
    if mode in (ObsMode.DecentralizedWithState, ObsMode.CentralizedWithState, ObsMode.StateOnly):
        fill_true_state(env, need("state"))
