"""Flat-memory environment arena: slab, pristine template, typed views, reset.

All n_envs environments live in one contiguous byte slab, one padded stride
each. Typed numpy views (strided over the env axis) expose every component
without copying; the pristine template is the canonical initial static state
and reset is a bulk byte copy plus entity re-placement.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .layout import (
    AGENT_DTYPE,
    AF_FLY,
    AF_SWIM,
    AF_WALK,
    ArenaLayout,
    KnowledgeMode,
    POI_DTYPE,
    POI_MOVES,
    STRIDE_ALIGN,
    compute_layout,
    pack_tile_flags,
)
from .mapspec import MapSpec, _tile_traversable


class ArenaError(RuntimeError):
    pass


def _align_alloc(nbytes: int, align: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Return (backing buffer, aligned view of nbytes)."""
    buf = np.empty(nbytes + align, dtype=np.uint8)
    off = (-buf.ctypes.data) % align
    return buf, buf[off : off + nbytes]


def _agent_flag_byte(caps) -> int:
    f = 0
    if "walk" in caps:
        f |= AF_WALK
    if "fly" in caps:
        f |= AF_FLY
    if "swim" in caps:
        f |= AF_SWIM
    return f


def build_pristine(spec: MapSpec, layout: ArenaLayout) -> np.ndarray:
    """Canonical initial bytes for one environment.

    Static regions (grid with zero visibility, speeds, zeroed knowledge and
    counters) are final; agent/POI slots hold deterministic placeholders that
    reset overwrites for random spawns.
    """
    buf = np.zeros(layout.env_stride, dtype=np.uint8)

    flags_by_id = np.zeros(128, dtype=np.uint32)
    alt_by_id = np.zeros(128, dtype=np.float32)
    for t in spec.type_table:
        flags_by_id[t.type_id] = pack_tile_flags(
            walkable=t.walkable,
            flyable=t.flyable,
            aquatic=t.aquatic,
            blocking=t.blocking,
            type_id=t.type_id,
        )
        alt_by_id[t.type_id] = t.altitude
    grid = np.ndarray(
        (layout.H, layout.W),
        dtype=np.dtype([("flags", "<u4"), ("altitude", "<f4")]),
        buffer=buf.data,
        offset=layout.offset_grid,
    )
    grid["flags"] = flags_by_id[spec.tile_type_grid]
    grid["altitude"] = alt_by_id[spec.tile_type_grid]

    agents = np.ndarray(
        (layout.n_agents,), dtype=AGENT_DTYPE, buffer=buf.data, offset=layout.offset_agents
    )
    for a in spec.agents:
        sx, sy = a.spawn if a.spawn is not None else (0, 0)
        agents[a.index]["x"] = np.float32(sx) + np.float32(0.5)
        agents[a.index]["y"] = np.float32(sy) + np.float32(0.5)
        agents[a.index]["view_range"] = a.view_range
        agents[a.index]["deployment"] = a.deployment
        agents[a.index]["last_x"] = sx
        agents[a.index]["last_y"] = sy
        agents[a.index]["flags"] = _agent_flag_byte(a.capabilities)
        agents[a.index]["max_alt"] = np.float16(a.max_alt)
        agents[a.index]["pad"] = 0

    pois = np.ndarray((layout.n_pois,), dtype=POI_DTYPE, buffer=buf.data, offset=layout.offset_pois)
    for p in spec.pois:
        sx, sy = p.spawn if p.spawn is not None else (0, 0)
        pois[p.index]["x"] = np.float32(sx) + np.float32(0.5)
        pois[p.index]["y"] = np.float32(sy) + np.float32(0.5)
        pois[p.index]["state"] = p.savable_by | (POI_MOVES if p.moves else 0)
        pois[p.index]["last_x"] = sx
        pois[p.index]["last_y"] = sy

    speeds = np.ndarray(
        (layout.n_agents, layout.n_types),
        dtype="<f4",
        buffer=buf.data,
        offset=layout.offset_speeds,
    )
    speeds[:] = spec.speeds
    # knowledge + counters already zero
    return buf


def _spawn_candidates(spec: MapSpec):
    """Per-entity candidate tile indices (y*W+x ascending) for random spawns."""
    W, H = spec.W, spec.H
    types = {t.type_id: t for t in spec.type_table}
    flat = spec.tile_type_grid.reshape(-1)

    def table(defs, pred):
        n = len(defs)
        cands = []
        for d in defs:
            if getattr(d, "spawn") is not None:
                cands.append(np.zeros(1, dtype=np.int32))
            else:
                ok = np.fromiter(
                    (pred(types[int(tid)], d) for tid in flat), count=W * H, dtype=bool
                )
                cands.append(np.nonzero(ok)[0].astype(np.int32))
        maxc = max(c.shape[0] for c in cands)
        arr = np.zeros((n, maxc), dtype=np.int32)
        cnt = np.zeros(n, dtype=np.int64)
        rnd = np.zeros(n, dtype=np.uint8)
        for i, (d, c) in enumerate(zip(defs, cands)):
            arr[i, : c.shape[0]] = c
            cnt[i] = c.shape[0]
            rnd[i] = 1 if d.spawn is None else 0
        return rnd, arr, cnt

    ag = table(spec.agents, lambda t, d: _tile_traversable(t, d.capabilities))
    poi = table(spec.pois, lambda t, d: t.walkable and not t.blocking)
    return ag, poi


class EnvironmentArena:
    """Owns the slab for n_envs environments plus the pristine template."""

    def __init__(
        self,
        spec: MapSpec,
        n_envs: int,
        knowledge_mode: KnowledgeMode = KnowledgeMode.PER_AGENT,
        stride_align: int = STRIDE_ALIGN,
        zero_fill: bool = True,
    ):
        if n_envs < 1:
            raise ArenaError(f"n_envs must be >= 1, got {n_envs}")
        self.spec = spec
        self.n_envs = n_envs
        self.layout = compute_layout(
            spec.W, spec.H, spec.n_agents, spec.n_pois, spec.n_types,
            knowledge_mode, stride_align,
        )
        lay = self.layout
        try:
            self._backing, self.slab = _align_alloc(n_envs * lay.env_stride)
        except MemoryError as e:
            raise ArenaError(f"cannot allocate {n_envs}x{lay.env_stride} byte arena") from e
        if zero_fill:
            self.slab[:] = 0
        self.pristine = build_pristine(spec, lay)

        (self.agent_rand, self.agent_cand, self.agent_cand_n), (
            self.poi_rand,
            self.poi_cand,
            self.poi_cand_n,
        ) = _spawn_candidates(spec)

        self.type_col = np.zeros(128, dtype=np.int64)
        self.type_stuck = np.zeros(128, dtype=np.float32)
        for col, t in enumerate(spec.type_table):
            self.type_col[t.type_id] = col
            self.type_stuck[t.type_id] = np.float32(t.stuck_probability)

        # knowledge recency stamps and last-known teammate positions live
        # outside the packed slab (see layout: POI records are 5 bytes);
        # cleared alongside the slab memcpy on reset
        A, P = spec.n_agents, spec.n_pois
        self.poi_rec_stamp = np.full((n_envs, A, P), -1, dtype=np.int32)
        self.mate_know = np.full((n_envs, A, A, 3), -1, dtype=np.int32)
        # per-step current-sight bitsets (scratch, not part of env state)
        self.cur_vis = np.zeros((n_envs, A, lay.vis_bytes), dtype=np.uint8)

        self._build_views()

    def _view(self, offset, shape, dtype, inner_strides):
        stride = self.layout.env_stride
        return np.ndarray(
            (self.n_envs, *shape),
            dtype=dtype,
            buffer=self.slab.data,
            offset=offset,
            strides=(stride, *inner_strides),
        )

    def _build_views(self):
        lay = self.layout
        W, H, A, P, T = lay.W, lay.H, lay.n_agents, lay.n_pois, lay.n_types
        self.slab2d = self._view(0, (lay.env_stride,), np.uint8, (1,))
        self.grid_flags = self._view(lay.offset_grid, (H, W), "<u4", (W * 8, 8))
        self.grid_alt = self._view(lay.offset_grid + 4, (H, W), "<f4", (W * 8, 8))
        self.agent_f = self._view(lay.offset_agents, (A, 4), "<f4", (24, 4))
        self.agent_last = self._view(lay.offset_agents + 16, (A, 2), "<u2", (24, 2))
        self.agent_flags = self._view(lay.offset_agents + 20, (A,), np.uint8, (24,))
        self.agent_maxalt = self._view(lay.offset_agents + 21, (A,), "<u2", (24,))
        self.poi_pos = self._view(lay.offset_pois, (P, 2), "<f4", (16, 4))
        self.poi_state = self._view(lay.offset_pois + 8, (P,), "<u4", (16,))
        self.poi_last = self._view(lay.offset_pois + 12, (P, 2), "<u2", (16, 2))
        self.speeds = self._view(lay.offset_speeds, (A, T), "<f4", (T * 4, 4))
        ksize = lay.offset_counters - lay.offset_knowledge
        self.knowledge = self._view(lay.offset_knowledge, (ksize,), np.uint8, (1,))
        self.counters = self._view(lay.offset_counters, (4,), "<i4", (4,))

    @property
    def kernel_views(self):
        return (
            self.slab2d, self.grid_flags, self.grid_alt, self.agent_f, self.agent_last,
            self.agent_flags, self.agent_maxalt, self.poi_pos, self.poi_state,
            self.poi_last, self.speeds, self.knowledge, self.counters,
        )

    @property
    def kernel_statics(self):
        return (
            self.type_col, self.type_stuck, self.pristine,
            self.agent_rand, self.agent_cand, self.agent_cand_n,
            self.poi_rand, self.poi_cand, self.poi_cand_n,
        )

    def env_bytes(self, i: int) -> np.ndarray:
        """Raw bytes of environment i (full stride, copy-free view)."""
        return self.slab2d[i]

    def static_equal_pristine(self, i: int) -> bool:
        """Bit-compare the static region (grid/speeds/knowledge/counters) to pristine."""
        lay = self.layout
        b = self.slab2d[i]
        p = self.pristine
        return bool(
            np.array_equal(b[: lay.offset_agents], p[: lay.offset_agents])
            and np.array_equal(b[lay.offset_speeds :], p[lay.offset_speeds :])
        )

    def view(self, i: int) -> "EnvView":
        return EnvView(self, i)


class EnvView:
    """Typed accessors over one environment's region."""

    def __init__(self, arena: EnvironmentArena, index: int):
        if not 0 <= index < arena.n_envs:
            raise IndexError(index)
        self.arena = arena
        self.index = index

    @property
    def grid_flags(self):
        return self.arena.grid_flags[self.index]

    @property
    def grid_alt(self):
        return self.arena.grid_alt[self.index]

    @property
    def agent_f(self):
        return self.arena.agent_f[self.index]

    @property
    def agent_last(self):
        return self.arena.agent_last[self.index]

    @property
    def agent_flags(self):
        return self.arena.agent_flags[self.index]

    @property
    def agent_maxalt(self):
        return self.arena.agent_maxalt[self.index]

    @property
    def poi_pos(self):
        return self.arena.poi_pos[self.index]

    @property
    def poi_state(self):
        return self.arena.poi_state[self.index]

    @property
    def poi_last(self):
        return self.arena.poi_last[self.index]

    @property
    def speeds(self):
        return self.arena.speeds[self.index]

    @property
    def knowledge(self):
        return self.arena.knowledge[self.index]

    @property
    def counters(self):
        return self.arena.counters[self.index]


def allocate_arena(spec: MapSpec, n_envs: int, **kw) -> EnvironmentArena:
    return EnvironmentArena(spec, n_envs, **kw)


def reset_env(arena: EnvironmentArena, env_index: int, rng_states: np.ndarray) -> None:
    """Reset one environment: pristine memcpy + entity re-placement.

    rng_states is the per-env uint64 counter array; the env's stream is
    consumed (one draw per random spawn) and never reseeded here. Auxiliary
    knowledge stamps are owned by the pool; standalone arena use does not
    track them.
    """
    if not 0 <= env_index < arena.n_envs:
        raise ArenaError(f"env index {env_index} out of range")
    _kernels._reset_env(
        env_index, arena.pristine, arena.slab2d, arena.agent_f, arena.agent_last,
        arena.poi_pos, arena.poi_last, rng_states, arena.poi_rec_stamp, arena.mate_know,
        arena.agent_rand, arena.agent_cand, arena.agent_cand_n,
        arena.poi_rand, arena.poi_cand, arena.poi_cand_n, arena.layout.W,
    )
