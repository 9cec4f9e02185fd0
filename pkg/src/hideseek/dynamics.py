"""Single-environment step rules and their composition.

step_env drives the compiled kernel (the same code path the pool uses). The
finer-grained rule functions operate on an EnvView in plain Python with the
same float32 arithmetic and draw order, so individual rules can be exercised
and inspected without a pool.

Fixed step order: deployment decrement, moves (agent index ascending, axis
x then y), stuck draws then rescue, visibility + discovery reward, radio,
POI find/save/move, counters and termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .arena import EnvView
from .layout import (
    AF_FLY,
    AF_STUCK,
    CTR_STEPS,
    KnowledgeMode,
    POI_FOUND,
    POI_RECORD_BYTES,
    POI_SAVED,
    VIS_SHIFT,
)
from .observation import ContractError
from .rng import Stream

RESCUE_RADIUS = 1.5
SAVE_RADIUS = 0.5

F1 = np.float32(1.0)
FN1 = np.float32(-1.0)


@dataclass(frozen=True)
class StepResult:
    reward: float
    terminated: bool
    truncated: bool
    agent_rewards: np.ndarray | None = None


def _clamp_pm1(v: np.float32) -> np.float32:
    if v > F1:
        return F1
    if v < FN1:
        return FN1
    return np.float32(v)


def _type_id_at(env: EnvView, tx: int, ty: int) -> int:
    return (int(env.grid_flags[ty, tx]) >> 5) & 127


def effective_speed(env: EnvView, agent_index: int, tile: tuple[int, int] | None = None) -> float:
    """Speed table lookup for the agent's current (or given) tile; 0 if stuck."""
    a = agent_index
    if env.agent_flags[a] & AF_STUCK:
        return 0.0
    if tile is None:
        tile = (int(env.agent_f[a, 0]), int(env.agent_f[a, 1]))
    col = int(env.arena.type_col[_type_id_at(env, tile[0], tile[1])])
    return float(env.speeds[a, col])


def _axis_ok(env: EnvView, a: int, tx: int, ty: int) -> bool:
    af = int(env.agent_flags[a])
    w = int(env.grid_flags[ty, tx])
    if not _kernels_traversable(w, af):
        return False
    if af & AF_FLY:
        maxalt = np.float32(np.frombuffer(env.agent_maxalt[a : a + 1].tobytes(), dtype=np.float16)[0])
        if env.grid_alt[ty, tx] > maxalt:
            return False
    return True


def _kernels_traversable(w: int, af: int) -> bool:
    if w & 8:  # blocking
        return False
    return bool((w & 1 and af & 2) or (w & 2 and af & 4) or (w & 4 and af & 8))


def apply_move(env: EnvView, agent_index: int, move: tuple[float, float]) -> tuple[float, float]:
    """Axis-separated move resolution; returns the new position.

    Each axis component is cancelled independently if its destination tile is
    out of bounds, blocking, not traversable, or above a flyer's ceiling.
    last_x/last_y record the integer tile left behind.
    """
    a = agent_index
    W, H = env.arena.layout.W, env.arena.layout.H
    px = np.float32(env.agent_f[a, 0])
    py = np.float32(env.agent_f[a, 1])
    otx, oty = int(px), int(py)
    sp = np.float32(effective_speed(env, a))
    ax = _clamp_pm1(np.float32(move[0]))
    ay = _clamp_pm1(np.float32(move[1]))

    nx = np.float32(px + ax * sp)
    tx = int(np.floor(nx))
    if 0 <= tx < W and _axis_ok(env, a, tx, oty):
        px = nx
    ctx = int(px)
    ny = np.float32(py + ay * sp)
    ty = int(np.floor(ny))
    if 0 <= ty < H and _axis_ok(env, a, ctx, ty):
        py = ny

    env.agent_f[a, 0] = px
    env.agent_f[a, 1] = py
    env.agent_last[a, 0] = otx
    env.agent_last[a, 1] = oty
    return float(px), float(py)


def stuck_and_rescue(env: EnvView, agent_index: int, rng: Stream) -> None:
    """Bernoulli stuck draw on new-tile entry, then teammate rescue check."""
    a = agent_index
    ntx, nty = int(env.agent_f[a, 0]), int(env.agent_f[a, 1])
    if ntx != int(env.agent_last[a, 0]) or nty != int(env.agent_last[a, 1]):
        p = np.float32(env.arena.type_stuck[_type_id_at(env, ntx, nty)])
        if rng.uniform() < p:
            env.agent_flags[a] |= AF_STUCK
    if env.agent_flags[a] & AF_STUCK:
        xa, ya = env.agent_f[a, 0], env.agent_f[a, 1]
        A = env.arena.layout.n_agents
        for b in range(A):
            if b == a or env.agent_flags[b] & AF_STUCK:
                continue
            dx = np.float32(env.agent_f[b, 0] - xa)
            dy = np.float32(env.agent_f[b, 1] - ya)
            if dx * dx + dy * dy <= np.float32(RESCUE_RADIUS * RESCUE_RADIUS):
                env.agent_flags[a] &= 0xFF ^ AF_STUCK
                break


def _ray_clear(env: EnvView, x0: int, y0: int, x1: int, y1: int, thresh: np.float32) -> bool:
    gf, ga = env.grid_flags, env.grid_alt
    dx, dy = abs(x1 - x0), abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx - dy
    x, y = x0, y0
    while True:
        if x == x1 and y == y1:
            return True
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy
        if x == x1 and y == y1:
            return True
        if int(gf[y, x]) & 8:
            return False
        if ga[y, x] > thresh:
            return False


def compute_visibility(env: EnvView, agent_index: int) -> set[int]:
    """Line-of-sight sweep; sets this agent's visibility bits (monotonic).

    Returns the set of visible tile indices (y*W + x). Range grows with the
    observer tile's altitude; occlusion blocks rays passing tiles higher than
    observer altitude + eye height. Also feeds the knowledge bitset when the
    arena carries one.
    """
    a = agent_index
    ar = env.arena
    lay = ar.layout
    W, H = lay.W, lay.H
    spec = ar.spec
    x = np.float32(env.agent_f[a, 0])
    y = np.float32(env.agent_f[a, 1])
    atx, aty = int(x), int(y)
    alt0 = np.float32(env.grid_alt[aty, atx])
    r = np.float32(env.agent_f[a, 2] * (F1 + alt0 / np.float32(spec.alt_scale)))
    thresh = np.float32(alt0 + np.float32(spec.eye_height))
    r2 = np.float32(r * r)
    xlo = max(0, int(np.floor(x - r)) - 1)
    xhi = min(W - 1, int(np.floor(x + r)) + 1)
    ylo = max(0, int(np.floor(y - r)) - 1)
    yhi = min(H - 1, int(np.floor(y + r)) + 1)
    abit = np.uint32(1 << (VIS_SHIFT + a))
    km = lay.knowledge_mode
    kbase = a * (lay.vis_bytes + lay.n_pois * POI_RECORD_BYTES) if km is KnowledgeMode.PER_AGENT else 0
    know = env.knowledge
    visible: set[int] = set()
    for ty in range(ylo, yhi + 1):
        for tx in range(xlo, xhi + 1):
            dxx = np.float32(np.float32(tx) + np.float32(0.5) - x)
            dyy = np.float32(np.float32(ty) + np.float32(0.5) - y)
            if dxx * dxx + dyy * dyy <= r2:
                if (tx == atx and ty == aty) or _ray_clear(env, atx, aty, tx, ty, thresh):
                    idx = ty * W + tx
                    visible.add(idx)
                    env.grid_flags[ty, tx] |= abit | np.uint32(1 << 4)
                    if km is not KnowledgeMode.NONE:
                        know[kbase + (idx >> 3)] |= np.uint8(1 << (idx & 7))
    return visible


def radio_broadcast(env: EnvView, sender: int, target: int) -> None:
    """Share the sender's current sight and all of its records with target.

    target == sender is a no-op. Tile knowledge is OR'd in; POI records and
    last-known teammate positions transfer only where the sender's step stamp
    is newer.
    """
    ar = env.arena
    lay = ar.layout
    A, P = lay.n_agents, lay.n_pois
    if not (0 <= sender < A and 0 <= target < A):
        raise ContractError(f"radio endpoints ({sender}, {target}) out of range")
    if sender == target:
        return
    e = env.index
    if lay.knowledge_mode is KnowledgeMode.PER_AGENT:
        visible = compute_visibility(env, sender)
        unit = lay.vis_bytes + P * POI_RECORD_BYTES
        kb_t = target * unit
        know = env.knowledge
        for idx in visible:
            know[kb_t + (idx >> 3)] |= np.uint8(1 << (idx & 7))
        kb_s = sender * unit
        for p in range(P):
            if ar.poi_rec_stamp[e, sender, p] > ar.poi_rec_stamp[e, target, p]:
                rs = kb_s + lay.vis_bytes + p * POI_RECORD_BYTES
                rt = kb_t + lay.vis_bytes + p * POI_RECORD_BYTES
                know[rt : rt + POI_RECORD_BYTES] = know[rs : rs + POI_RECORD_BYTES]
                ar.poi_rec_stamp[e, target, p] = ar.poi_rec_stamp[e, sender, p]
    mate = ar.mate_know
    for b in range(A):
        if mate[e, sender, b, 2] > mate[e, target, b, 2]:
            mate[e, target, b] = mate[e, sender, b]
    stamp = int(env.counters[CTR_STEPS]) + 1
    if stamp > mate[e, target, sender, 2]:
        mate[e, target, sender, 0] = int(env.agent_f[sender, 0])
        mate[e, target, sender, 1] = int(env.agent_f[sender, 1])
        mate[e, target, sender, 2] = stamp


def poi_update(env: EnvView, rng: Stream) -> tuple[int, int]:
    """Found/save/move pass over all POIs; returns (n_newly_found, n_newly_saved)."""
    ar = env.arena
    lay = ar.layout
    W, H = lay.W, lay.H
    spec = ar.spec
    speed = np.float32(spec.poi_speed)
    n_found = n_saved = 0
    for p in range(lay.n_pois):
        st = int(env.poi_state[p])
        ptx, pty = int(env.poi_pos[p, 0]), int(env.poi_pos[p, 1])
        if not st & POI_FOUND:
            if (int(env.grid_flags[pty, ptx]) >> VIS_SHIFT) != 0:
                st |= POI_FOUND
                n_found += 1
        if st & POI_FOUND and not st & POI_SAVED:
            for a in range(lay.n_agents):
                if st >> a & 1:
                    dx = np.float32(env.agent_f[a, 0] - env.poi_pos[p, 0])
                    dy = np.float32(env.agent_f[a, 1] - env.poi_pos[p, 1])
                    if dx * dx + dy * dy <= np.float32(SAVE_RADIUS * SAVE_RADIUS):
                        st |= POI_SAVED
                        n_saved += 1
                        break
        if st & (1 << 22) and not st & POI_SAVED:
            d = rng.randint(8)
            px = np.float32(env.poi_pos[p, 0])
            py = np.float32(env.poi_pos[p, 1])
            nx = np.float32(px + _kernels.DIR8_X[d] * speed)
            tx = int(np.floor(nx))
            if 0 <= tx < W:
                w = int(env.grid_flags[pty, tx])
                if w & 1 and not w & 8:
                    px = nx
            ctx = int(px)
            ny = np.float32(py + _kernels.DIR8_Y[d] * speed)
            ty = int(np.floor(ny))
            if 0 <= ty < H:
                w = int(env.grid_flags[ty, ctx])
                if w & 1 and not w & 8:
                    py = ny
            env.poi_last[p, 0] = ptx
            env.poi_last[p, 1] = pty
            env.poi_pos[p, 0] = px
            env.poi_pos[p, 1] = py
        env.poi_state[p] = st
    return n_found, n_saved


def step_env(env: EnvView, actions: np.ndarray, rng_states: np.ndarray) -> StepResult:
    """One full step of one environment via the compiled kernel.

    actions: (n_agents, 3) float32 rows of [move_x, move_y, radio_target].
    rng_states: the per-env uint64 counter array (mutated in place).
    """
    ar = env.arena
    lay = ar.layout
    A = lay.n_agents
    actions = np.asarray(actions, dtype=np.float32)
    if actions.shape != (A, 3):
        raise ContractError(f"actions shape {actions.shape} != ({A}, 3)")
    e = env.index
    acts = np.zeros((e + 1, A, 3), dtype=np.float32)
    acts[e] = actions
    prew = np.zeros(A, dtype=np.float32)
    new_know = np.zeros((1, 1, 1), dtype=np.uint8)
    spec = ar.spec
    r = spec.rewards
    km = {"none": 0, "per-agent": 1, "shared": 2}[lay.knowledge_mode.value]
    team, terminated, truncated = _kernels._step_env(
        e, acts,
        lay.W, lay.H, A, lay.n_pois, lay.n_types, spec.horizon, km, lay.vis_bytes, 0,
        np.float32(spec.alt_scale), np.float32(spec.eye_height), np.float32(spec.poi_speed),
        np.float32(r.r_tile), np.float32(r.r_found), np.float32(r.r_saved),
        ar.type_col, ar.type_stuck,
        ar.grid_flags, ar.grid_alt, ar.agent_f, ar.agent_last, ar.agent_flags,
        ar.agent_maxalt, ar.poi_pos, ar.poi_state, ar.poi_last, ar.speeds,
        ar.knowledge, ar.counters,
        rng_states, ar.cur_vis, new_know, ar.poi_rec_stamp, ar.mate_know,
        prew,
    )
    return StepResult(
        reward=float(team),
        terminated=bool(terminated),
        truncated=bool(truncated),
        agent_rewards=prew if r.per_agent else None,
    )
