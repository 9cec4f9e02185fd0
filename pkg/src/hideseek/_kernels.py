"""Hot-path kernels over the flat arena slab.

All functions here are numba-compiled with ``nogil=True`` so the worker pool
gets true parallelism across environment chunks. Every function takes the
pre-built strided views into the slab (see arena.py) plus the per-env
auxiliary arrays owned by the pool; nothing here allocates on the step path.

Semantics contract (mirrored bit-for-bit by the pure-Python reference used in
the tests; all continuous math is float32, all randomness comes from the
per-env counter stream in draw order):

step order per environment:
  1. deployment decrement (all agents)
  2. moves, agent index ascending (deployed agents; axis-separated x then y)
  3. stuck draws ascending (deployed agents that entered a new tile),
     then rescue pass ascending (any non-stuck teammate within 1.5 tiles)
  4. visibility ascending (deployed agents), discovery reward accounting,
     then last-known-teammate bookkeeping
  5. radio ascending (deployed senders; target == self is a no-op)
  6. POI update ascending: found -> save -> random move -> knowledge records
  7. counters, termination/truncation

reset draw order: one tile draw per random-spawn agent ascending, then per
random-spawn POI ascending. desync pre-roll: one horizon draw, then per
pre-step and per agent: move x, move y, radio target.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# float32 constants (kept as named values so the reference implementation can
# reuse the exact same literals)
F0 = np.float32(0.0)
F05 = np.float32(0.5)
F1 = np.float32(1.0)
FN1 = np.float32(-1.0)
RESCUE_R2 = np.float32(2.25)  # 1.5 tiles
SAVE_R2 = np.float32(0.25)  # 0.5 tiles

U_GAMMA = np.uint64(0x9E3779B97F4A7C15)
U_M1 = np.uint64(0xBF58476D1CE4E5B9)
U_M2 = np.uint64(0x94D049BB133111EB)
F2POW24 = np.float32(1.0 / (1 << 24))
F2POW23 = np.float32(1.0 / (1 << 23))

# tile flag bits (int64 masks; see layout.py)
T_WALK = 1
T_FLY = 2
T_AQUA = 4
T_BLOCK = 8
T_GLOBAL = 16

A_STUCK = 1
A_WALK = 2
A_FLY = 4
A_SWIM = 8

P_FOUND = 1 << 20
P_SAVED = 1 << 21
P_MOVES = 1 << 22

INV_SQRT2 = np.float32(0.7071067811865476)
DIR8_X = np.array([1.0, INV_SQRT2, 0.0, -INV_SQRT2, -1.0, -INV_SQRT2, 0.0, INV_SQRT2], dtype=np.float32)
DIR8_Y = np.array([0.0, INV_SQRT2, 1.0, INV_SQRT2, 0.0, -INV_SQRT2, -1.0, -INV_SQRT2], dtype=np.float32)

# observation modes
MODE_DEC = 0
MODE_DEC_STATE = 1
MODE_CENT = 2
MODE_CENT_STATE = 3
MODE_STATE = 4
MODE_VOID = 5


@njit(cache=True, nogil=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * U_M1
    z = (z ^ (z >> np.uint64(27))) * U_M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True, inline="always")
def _next_u24(rng, e):
    rng[e] = rng[e] + U_GAMMA
    return _mix64(rng[e]) >> np.uint64(40)


@njit(cache=True, nogil=True, inline="always")
def _uniform(rng, e):
    return np.float32(_next_u24(rng, e)) * F2POW24


@njit(cache=True, nogil=True, inline="always")
def _uniform_pm1(rng, e):
    return np.float32(_next_u24(rng, e)) * F2POW23 - F1


@njit(cache=True, nogil=True, inline="always")
def _randint(rng, e, n):
    return np.int64((_next_u24(rng, e) * np.uint64(n)) >> np.uint64(24))


@njit(cache=True, nogil=True, inline="always")
def _half_to_f4(bits):
    s = np.float32(1.0) if (bits >> 15) & 1 == 0 else np.float32(-1.0)
    ex = (bits >> 10) & 0x1F
    m = bits & 0x3FF
    if ex == 0:
        return s * np.float32(m * 5.960464477539063e-08)
    if ex == 31:
        if m == 0:
            return s * np.float32(np.inf)
        return np.float32(np.nan)
    return s * np.float32((1.0 + m / 1024.0) * 2.0 ** (ex - 15))


@njit(cache=True, nogil=True, inline="always")
def _bit_get(bits, idx):
    return (bits[idx >> 3] >> (idx & 7)) & 1


@njit(cache=True, nogil=True, inline="always")
def _bit_set(bits, idx):
    bits[idx >> 3] |= np.uint8(1 << (idx & 7))


@njit(cache=True, nogil=True, inline="always")
def _traversable(w, aflags):
    if w & T_BLOCK:
        return False
    if (w & T_WALK) and (aflags & A_WALK):
        return True
    if (w & T_FLY) and (aflags & A_FLY):
        return True
    if (w & T_AQUA) and (aflags & A_SWIM):
        return True
    return False


@njit(cache=True, nogil=True, inline="always")
def _ray_clear(gf, ga, x0, y0, x1, y1, thresh):
    """Integer (Bresenham) line walk, endpoints excluded."""
    dx = abs(x1 - x0)
    dy = abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx - dy
    x = x0
    y = y0
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
        w = np.int64(gf[y, x])
        if w & T_BLOCK:
            return False
        if ga[y, x] > thresh:
            return False


@njit(cache=True, nogil=True)
def _reset_env(
    e,
    pristine,
    slab2d,
    ag_f,
    ag_last,
    poi_pos,
    poi_last,
    rng,
    poi_rec_stamp,
    mate,
    ag_rand,
    ag_cand,
    ag_cand_n,
    poi_rand,
    poi_cand,
    poi_cand_n,
    W,
):
    for i in range(pristine.shape[0]):
        slab2d[e, i] = pristine[i]
    for a in range(poi_rec_stamp.shape[1]):
        for p in range(poi_rec_stamp.shape[2]):
            poi_rec_stamp[e, a, p] = -1
    for a in range(mate.shape[1]):
        for b in range(mate.shape[2]):
            mate[e, a, b, 0] = 0
            mate[e, a, b, 1] = 0
            mate[e, a, b, 2] = -1
    for a in range(ag_rand.shape[0]):
        if ag_rand[a]:
            idx = ag_cand[a, _randint(rng, e, ag_cand_n[a])]
            tx = idx % W
            ty = idx // W
            ag_f[e, a, 0] = np.float32(tx) + F05
            ag_f[e, a, 1] = np.float32(ty) + F05
            ag_last[e, a, 0] = tx
            ag_last[e, a, 1] = ty
    for p in range(poi_rand.shape[0]):
        if poi_rand[p]:
            idx = poi_cand[p, _randint(rng, e, poi_cand_n[p])]
            tx = idx % W
            ty = idx // W
            poi_pos[e, p, 0] = np.float32(tx) + F05
            poi_pos[e, p, 1] = np.float32(ty) + F05
            poi_last[e, p, 0] = tx
            poi_last[e, p, 1] = ty


@njit(cache=True, nogil=True)
def _visibility_agent(
    e,
    a,
    gf,
    ga,
    ag_f,
    cur_vis,
    know,
    new_know,
    know_mode,
    track_new,
    W,
    H,
    P,
    alt_scale,
    eye_h,
    vis_bytes,
):
    """Set this agent's visibility bits; returns newly-global-observed count."""
    x = ag_f[e, a, 0]
    y = ag_f[e, a, 1]
    vr = ag_f[e, a, 2]
    atx = np.int64(x)
    aty = np.int64(y)
    alt0 = ga[aty, atx]
    r = vr * (F1 + alt0 / alt_scale)
    thresh = alt0 + eye_h
    r2 = r * r
    xlo = np.int64(np.floor(x - r)) - 1
    xhi = np.int64(np.floor(x + r)) + 1
    ylo = np.int64(np.floor(y - r)) - 1
    yhi = np.int64(np.floor(y + r)) + 1
    if xlo < 0:
        xlo = 0
    if ylo < 0:
        ylo = 0
    if xhi > W - 1:
        xhi = W - 1
    if yhi > H - 1:
        yhi = H - 1
    abit = np.int64(1) << np.int64(12 + a)
    kbase = a * (vis_bytes + P * 5) if know_mode == 1 else 0
    nnew = 0
    for ty in range(ylo, yhi + 1):
        for tx in range(xlo, xhi + 1):
            dxx = (np.float32(tx) + F05) - x
            dyy = (np.float32(ty) + F05) - y
            if dxx * dxx + dyy * dyy <= r2:
                if (tx == atx and ty == aty) or _ray_clear(gf, ga, atx, aty, tx, ty, thresh):
                    idx = ty * W + tx
                    _bit_set(cur_vis[e, a], idx)
                    w = np.int64(gf[ty, tx])
                    neww = w | abit | T_GLOBAL
                    if neww != w:
                        if (w & T_GLOBAL) == 0:
                            nnew += 1
                        gf[ty, tx] = neww
                    if know_mode != 0:
                        bi = kbase + (idx >> 3)
                        m = np.uint8(1 << (idx & 7))
                        old = know[e, bi]
                        if old & m == 0:
                            know[e, bi] = old | m
                            if track_new:
                                _bit_set(new_know[e, a], idx)
    return nnew


@njit(cache=True, nogil=True)
def _step_env(
    e,
    actions,
    # dims
    W,
    H,
    A,
    P,
    T,
    horizon,
    know_mode,
    vis_bytes,
    track_new,
    # consts
    alt_scale,
    eye_h,
    poi_speed,
    r_tile,
    r_found,
    r_saved,
    # static tables
    type_col,
    type_stuck,
    # views
    grid_flags,
    grid_alt,
    ag_f,
    ag_last,
    ag_flags,
    ag_maxalt,
    poi_pos,
    poi_state,
    poi_last,
    speeds,
    know,
    counters,
    # aux
    rng,
    cur_vis,
    new_know,
    poi_rec_stamp,
    mate,
    # out
    prew,
):
    gf = grid_flags[e]
    ga = grid_alt[e]
    s1 = np.int64(counters[e, 0]) + 1  # step number being computed (1-based)

    for a in range(A):
        prew[a] = F0

    # 1. deployment decrement
    for a in range(A):
        d = ag_f[e, a, 3]
        if d > F0:
            d = d - F1
            if d < F0:
                d = F0
            ag_f[e, a, 3] = d

    # 2. moves
    for a in range(A):
        if ag_f[e, a, 3] > F0:
            continue  # not deployed yet
        af = np.int64(ag_flags[e, a])
        px = ag_f[e, a, 0]
        py = ag_f[e, a, 1]
        otx = np.int64(px)
        oty = np.int64(py)
        if af & A_STUCK:
            sp = F0
        else:
            col = type_col[(np.int64(gf[oty, otx]) >> 5) & 127]
            sp = speeds[e, a, col]
        ax = actions[e, a, 0]
        if ax > F1:
            ax = F1
        elif ax < FN1:
            ax = FN1
        ay = actions[e, a, 1]
        if ay > F1:
            ay = F1
        elif ay < FN1:
            ay = FN1
        maxalt = _half_to_f4(np.int64(ag_maxalt[e, a]))
        # x axis
        nx = px + ax * sp
        tx = np.int64(np.floor(nx))
        if 0 <= tx < W:
            w = np.int64(gf[oty, tx])
            ok = _traversable(w, af)
            if ok and (af & A_FLY) and ga[oty, tx] > maxalt:
                ok = False
            if ok:
                px = nx
        ctx = np.int64(px)
        # y axis
        ny = py + ay * sp
        ty = np.int64(np.floor(ny))
        if 0 <= ty < H:
            w = np.int64(gf[ty, ctx])
            ok = _traversable(w, af)
            if ok and (af & A_FLY) and ga[ty, ctx] > maxalt:
                ok = False
            if ok:
                py = ny
        ag_f[e, a, 0] = px
        ag_f[e, a, 1] = py
        ag_last[e, a, 0] = otx
        ag_last[e, a, 1] = oty

    # 3. stuck draws, then rescue
    for a in range(A):
        if ag_f[e, a, 3] > F0:
            continue
        ntx = np.int64(ag_f[e, a, 0])
        nty = np.int64(ag_f[e, a, 1])
        if ntx != np.int64(ag_last[e, a, 0]) or nty != np.int64(ag_last[e, a, 1]):
            p = type_stuck[(np.int64(gf[nty, ntx]) >> 5) & 127]
            if _uniform(rng, e) < p:
                ag_flags[e, a] |= np.uint8(A_STUCK)
    for a in range(A):
        if np.int64(ag_flags[e, a]) & A_STUCK:
            xa = ag_f[e, a, 0]
            ya = ag_f[e, a, 1]
            for b in range(A):
                if b != a and (np.int64(ag_flags[e, b]) & A_STUCK) == 0:
                    dxx = ag_f[e, b, 0] - xa
                    dyy = ag_f[e, b, 1] - ya
                    if dxx * dxx + dyy * dyy <= RESCUE_R2:
                        ag_flags[e, a] &= np.uint8(0xFF ^ A_STUCK)
                        break

    # 4. visibility + discovery reward + teammate bookkeeping
    for a in range(A):
        for i in range(vis_bytes):
            cur_vis[e, a, i] = 0
        if track_new:
            for i in range(vis_bytes):
                new_know[e, a, i] = 0
    total_new = 0
    for a in range(A):
        if ag_f[e, a, 3] > F0:
            continue
        nnew = _visibility_agent(
            e, a, gf, ga, ag_f, cur_vis, know, new_know, know_mode, track_new,
            W, H, P, alt_scale, eye_h, vis_bytes,
        )
        total_new += nnew
        prew[a] += r_tile * np.float32(nnew)
    for a in range(A):
        if ag_f[e, a, 3] > F0:
            continue
        for b in range(A):
            if b == a:
                continue
            tbx = np.int64(ag_f[e, b, 0])
            tby = np.int64(ag_f[e, b, 1])
            if _bit_get(cur_vis[e, a], tby * W + tbx):
                mate[e, a, b, 0] = tbx
                mate[e, a, b, 1] = tby
                mate[e, a, b, 2] = s1

    # 5. radio
    for a in range(A):
        if ag_f[e, a, 3] > F0:
            continue
        t = np.int64(actions[e, a, 2])
        if t < 0:
            t = 0
        elif t > A - 1:
            t = A - 1
        if t == a:
            continue
        if know_mode == 1:
            kb_a = a * (vis_bytes + P * 5)
            kb_t = t * (vis_bytes + P * 5)
            for i in range(vis_bytes):
                v = cur_vis[e, a, i]
                if v:
                    old = know[e, kb_t + i]
                    nb = old | v
                    if nb != old:
                        know[e, kb_t + i] = nb
                        if track_new:
                            new_know[e, t, i] |= np.uint8(nb & ~np.int64(old))
            for p in range(P):
                if poi_rec_stamp[e, a, p] > poi_rec_stamp[e, t, p]:
                    ra = kb_a + vis_bytes + p * 5
                    rt = kb_t + vis_bytes + p * 5
                    for i in range(5):
                        know[e, rt + i] = know[e, ra + i]
                    poi_rec_stamp[e, t, p] = poi_rec_stamp[e, a, p]
        for b in range(A):
            if mate[e, a, b, 2] > mate[e, t, b, 2]:
                mate[e, t, b, 0] = mate[e, a, b, 0]
                mate[e, t, b, 1] = mate[e, a, b, 1]
                mate[e, t, b, 2] = mate[e, a, b, 2]
        if s1 > mate[e, t, a, 2]:
            mate[e, t, a, 0] = np.int64(ag_f[e, a, 0])
            mate[e, t, a, 1] = np.int64(ag_f[e, a, 1])
            mate[e, t, a, 2] = s1

    # 6. POI update
    nf = 0
    ns = 0
    for p in range(P):
        st = np.int64(poi_state[e, p])
        ptx = np.int64(poi_pos[e, p, 0])
        pty = np.int64(poi_pos[e, p, 1])
        if (st & P_FOUND) == 0:
            if (np.int64(gf[pty, ptx]) >> 12) != 0:
                st |= P_FOUND
                nf += 1
                seer = 0
                for a in range(A):
                    if _bit_get(cur_vis[e, a], pty * W + ptx):
                        seer = a
                        break
                prew[seer] += r_found
        if (st & P_FOUND) and (st & P_SAVED) == 0:
            for a in range(A):
                if (st >> a) & 1:
                    dxx = ag_f[e, a, 0] - poi_pos[e, p, 0]
                    dyy = ag_f[e, a, 1] - poi_pos[e, p, 1]
                    if dxx * dxx + dyy * dyy <= SAVE_R2:
                        st |= P_SAVED
                        ns += 1
                        prew[a] += r_saved
                        break
        if (st & P_MOVES) and (st & P_SAVED) == 0:
            d = _randint(rng, e, 8)
            px = poi_pos[e, p, 0]
            py = poi_pos[e, p, 1]
            nx = px + DIR8_X[d] * poi_speed
            tx = np.int64(np.floor(nx))
            if 0 <= tx < W:
                w = np.int64(gf[pty, tx])
                if (w & T_WALK) and (w & T_BLOCK) == 0:
                    px = nx
            ctx = np.int64(px)
            ny = py + DIR8_Y[d] * poi_speed
            ty = np.int64(np.floor(ny))
            if 0 <= ty < H:
                w = np.int64(gf[ty, ctx])
                if (w & T_WALK) and (w & T_BLOCK) == 0:
                    py = ny
            poi_last[e, p, 0] = ptx
            poi_last[e, p, 1] = pty
            poi_pos[e, p, 0] = px
            poi_pos[e, p, 1] = py
            ptx = np.int64(px)
            pty = np.int64(py)
        poi_state[e, p] = st
        if know_mode == 1:
            for a in range(A):
                if _bit_get(cur_vis[e, a], pty * W + ptx):
                    rb = a * (vis_bytes + P * 5) + vis_bytes + p * 5
                    know[e, rb] = 1 if (st & P_FOUND) else 0
                    know[e, rb + 1] = ptx & 0xFF
                    know[e, rb + 2] = (ptx >> 8) & 0xFF
                    know[e, rb + 3] = pty & 0xFF
                    know[e, rb + 4] = (pty >> 8) & 0xFF
                    poi_rec_stamp[e, a, p] = s1
        elif know_mode == 2:
            seen = False
            for a in range(A):
                if _bit_get(cur_vis[e, a], pty * W + ptx):
                    seen = True
                    break
            if seen:
                rb = vis_bytes + p * 5
                know[e, rb] = 1 if (st & P_FOUND) else 0
                know[e, rb + 1] = ptx & 0xFF
                know[e, rb + 2] = (ptx >> 8) & 0xFF
                know[e, rb + 3] = pty & 0xFF
                know[e, rb + 4] = (pty >> 8) & 0xFF
                poi_rec_stamp[e, 0, p] = s1

    # 7. counters + termination
    counters[e, 0] = s1
    counters[e, 1] += total_new
    counters[e, 2] += nf
    counters[e, 3] += ns
    all_saved = True
    for p in range(P):
        if (np.int64(poi_state[e, p]) & P_SAVED) == 0:
            all_saved = False
            break
    terminated = all_saved
    truncated = (not terminated) and s1 >= horizon
    team = F0
    for a in range(A):
        team = team + prew[a]
    return team, terminated, truncated


@njit(cache=True, nogil=True)
def _fill_logical(e, a, out, ag_f, ag_flags, counters, horizon):
    out[e, a, 0] = ag_f[e, a, 0]
    out[e, a, 1] = ag_f[e, a, 1]
    out[e, a, 2] = ag_f[e, a, 2]
    out[e, a, 3] = ag_f[e, a, 3]
    out[e, a, 4] = F1 if (np.int64(ag_flags[e, a]) & A_STUCK) else F0
    out[e, a, 5] = np.float32(counters[e, 0]) / np.float32(horizon)


@njit(cache=True, nogil=True)
def _fill_agent_obs(
    e, a, out,  # out: (C, H, W) slice for this env/agent
    W, H, A, P, T, know_mode, vis_bytes, undiff,
    type_col, grid_flags, grid_alt, ag_f, poi_state, know, poi_rec_stamp, mate,
):
    for c in range(out.shape[0]):
        for yy in range(H):
            for xx in range(W):
                out[c, yy, xx] = F0
    kbase = a * (vis_bytes + P * 5) if know_mode == 1 else 0
    gf = grid_flags[e]
    ga = grid_alt[e]
    for yy in range(H):
        for xx in range(W):
            idx = yy * W + xx
            if (know[e, kbase + (idx >> 3)] >> (idx & 7)) & 1:
                w = np.int64(gf[yy, xx])
                out[type_col[(w >> 5) & 127], yy, xx] = F1
                out[T, yy, xx] = ga[yy, xx]
                out[T + 2, yy, xx] = F1
    sa = 0 if know_mode != 1 else a
    for p in range(P):
        if poi_rec_stamp[e, sa, p] >= 0:
            rb = kbase + vis_bytes + p * 5
            if know[e, rb] and (np.int64(poi_state[e, p]) & P_SAVED) == 0:
                rx = np.int64(know[e, rb + 1]) | (np.int64(know[e, rb + 2]) << 8)
                ry = np.int64(know[e, rb + 3]) | (np.int64(know[e, rb + 4]) << 8)
                out[T + 1, ry, rx] = F1
    out[T + 3, np.int64(ag_f[e, a, 1]), np.int64(ag_f[e, a, 0])] = F1
    if A > 1:
        for b in range(A):
            if b == a:
                continue
            if mate[e, a, b, 2] >= 0:
                if undiff:
                    c = T + 4
                else:
                    c = T + 4 + (b if b < a else b - 1)
                out[c, mate[e, a, b, 1], mate[e, a, b, 0]] = F1


@njit(cache=True, nogil=True)
def _fill_cent_obs(
    e, out,  # (C2, H, W)
    W, H, A, P, T, vis_bytes,
    type_col, grid_flags, grid_alt, ag_f, poi_state, know, poi_rec_stamp,
):
    for c in range(out.shape[0]):
        for yy in range(H):
            for xx in range(W):
                out[c, yy, xx] = F0
    gf = grid_flags[e]
    ga = grid_alt[e]
    for yy in range(H):
        for xx in range(W):
            idx = yy * W + xx
            if (know[e, idx >> 3] >> (idx & 7)) & 1:
                w = np.int64(gf[yy, xx])
                out[type_col[(w >> 5) & 127], yy, xx] = F1
                out[T, yy, xx] = ga[yy, xx]
                out[T + 2, yy, xx] = F1
    for p in range(P):
        if poi_rec_stamp[e, 0, p] >= 0:
            rb = vis_bytes + p * 5
            if know[e, rb] and (np.int64(poi_state[e, p]) & P_SAVED) == 0:
                rx = np.int64(know[e, rb + 1]) | (np.int64(know[e, rb + 2]) << 8)
                ry = np.int64(know[e, rb + 3]) | (np.int64(know[e, rb + 4]) << 8)
                out[T + 1, ry, rx] = F1
    for a in range(A):
        out[T + 3 + a, np.int64(ag_f[e, a, 1]), np.int64(ag_f[e, a, 0])] = F1


@njit(cache=True, nogil=True)
def _fill_state_obs(
    e, out,  # (C2, H, W)
    W, H, A, P, T,
    type_col, grid_flags, grid_alt, ag_f, poi_pos, poi_state,
):
    for c in range(out.shape[0]):
        for yy in range(H):
            for xx in range(W):
                out[c, yy, xx] = F0
    gf = grid_flags[e]
    ga = grid_alt[e]
    for yy in range(H):
        for xx in range(W):
            w = np.int64(gf[yy, xx])
            out[type_col[(w >> 5) & 127], yy, xx] = F1
            out[T, yy, xx] = ga[yy, xx]
            if w & T_GLOBAL:
                out[T + 2, yy, xx] = F1
    for p in range(P):
        if (np.int64(poi_state[e, p]) & P_SAVED) == 0:
            out[T + 1, np.int64(poi_pos[e, p, 1]), np.int64(poi_pos[e, p, 0])] = F1
    for a in range(A):
        out[T + 3 + a, np.int64(ag_f[e, a, 1]), np.int64(ag_f[e, a, 0])] = F1


@njit(cache=True, nogil=True)
def _emit_env(
    e, mode, undiff,
    W, H, A, P, T, horizon, know_mode, vis_bytes,
    type_col, grid_flags, grid_alt, ag_f, ag_flags, poi_pos, poi_state, counters,
    know, poi_rec_stamp, mate,
    dec_img, cent_img, state_img, logical,
):
    if mode == MODE_DEC or mode == MODE_DEC_STATE:
        for a in range(A):
            _fill_agent_obs(
                e, a, dec_img[e, a], W, H, A, P, T, know_mode, vis_bytes, undiff,
                type_col, grid_flags, grid_alt, ag_f, poi_state, know, poi_rec_stamp, mate,
            )
            _fill_logical(e, a, logical, ag_f, ag_flags, counters, horizon)
    elif mode == MODE_CENT or mode == MODE_CENT_STATE:
        _fill_cent_obs(
            e, cent_img[e], W, H, A, P, T, vis_bytes,
            type_col, grid_flags, grid_alt, ag_f, poi_state, know, poi_rec_stamp,
        )
        for a in range(A):
            _fill_logical(e, a, logical, ag_f, ag_flags, counters, horizon)
    if mode == MODE_DEC_STATE or mode == MODE_CENT_STATE or mode == MODE_STATE:
        _fill_state_obs(
            e, state_img[e], W, H, A, P, T,
            type_col, grid_flags, grid_alt, ag_f, poi_pos, poi_state,
        )


@njit(cache=True, nogil=True)
def step_range(
    lo, hi, slot,
    actions,
    dims,       # (W, H, A, P, T, horizon, know_mode, vis_bytes)
    consts,     # (alt_scale, eye_h, poi_speed, r_tile, r_found, r_saved) float32
    statics,    # (type_col, type_stuck, pristine, ag_rand, ag_cand, ag_cand_n, poi_rand, poi_cand, poi_cand_n)
    views,      # (slab2d, grid_flags, grid_alt, ag_f, ag_last, ag_flags, ag_maxalt,
                #  poi_pos, poi_state, poi_last, speeds, know, counters)
    aux,        # (rng, cur_vis, new_know, poi_rec_stamp, mate)
    scratch,    # (srew (slots, cap*A), sterm (slots, cap), strunc (slots, cap))
    obs,        # (dec_img, cent_img, state_img, logical)
    mode, undiff, auto_reset, track_new,
    marks, mark_n,
):
    W, H, A, P, T, horizon, know_mode, vis_bytes = dims
    alt_scale, eye_h, poi_speed, r_tile, r_found, r_saved = consts
    type_col, type_stuck, pristine, ag_rand, ag_cand, ag_cand_n, poi_rand, poi_cand, poi_cand_n = statics
    slab2d, grid_flags, grid_alt, ag_f, ag_last, ag_flags, ag_maxalt, poi_pos, poi_state, poi_last, speeds, know, counters = views
    rng, cur_vis, new_know, poi_rec_stamp, mate = aux
    srew, sterm, strunc = scratch
    dec_img, cent_img, state_img, logical = obs

    for e in range(lo, hi):
        k = e - lo
        prew = srew[slot, k * A : (k + 1) * A]
        team, terminated, truncated = _step_env(
            e, actions,
            W, H, A, P, T, horizon, know_mode, vis_bytes, track_new,
            alt_scale, eye_h, poi_speed, r_tile, r_found, r_saved,
            type_col, type_stuck,
            grid_flags, grid_alt, ag_f, ag_last, ag_flags, ag_maxalt,
            poi_pos, poi_state, poi_last, speeds, know, counters,
            rng, cur_vis, new_know, poi_rec_stamp, mate,
            prew,
        )
        sterm[slot, k] = 1 if terminated else 0
        strunc[slot, k] = 1 if truncated else 0
        was_reset = 0
        if auto_reset and (terminated or truncated):
            was_reset = 1
            _reset_env(
                e, pristine, slab2d, ag_f, ag_last, poi_pos, poi_last, rng,
                poi_rec_stamp, mate,
                ag_rand, ag_cand, ag_cand_n, poi_rand, poi_cand, poi_cand_n, W,
            )
        if track_new and (mode == MODE_DEC or mode == MODE_DEC_STATE):
            _emit_env_diff(
                e, was_reset,
                W, H, A, P, T, horizon, know_mode, vis_bytes, undiff,
                type_col, grid_flags, grid_alt, ag_f, ag_flags, poi_pos, poi_state,
                counters, know, poi_rec_stamp, mate, new_know,
                dec_img, state_img, logical, mode, marks, mark_n,
            )
        else:
            _emit_env(
                e, mode, undiff,
                W, H, A, P, T, horizon, know_mode, vis_bytes,
                type_col, grid_flags, grid_alt, ag_f, ag_flags, poi_pos, poi_state, counters,
                know, poi_rec_stamp, mate,
                dec_img, cent_img, state_img, logical,
            )


@njit(cache=True, nogil=True)
def reset_range(
    lo, hi,
    dims, consts, statics, views, aux,
    obs,
    mode, undiff, desync,
):
    W, H, A, P, T, horizon, know_mode, vis_bytes = dims
    alt_scale, eye_h, poi_speed, r_tile, r_found, r_saved = consts
    type_col, type_stuck, pristine, ag_rand, ag_cand, ag_cand_n, poi_rand, poi_cand, poi_cand_n = statics
    slab2d, grid_flags, grid_alt, ag_f, ag_last, ag_flags, ag_maxalt, poi_pos, poi_state, poi_last, speeds, know, counters = views
    rng, cur_vis, new_know, poi_rec_stamp, mate = aux
    prew = np.zeros(A, dtype=np.float32)
    dec_img, cent_img, state_img, logical = obs

    # pre-roll actions, indexed by absolute env id (reset path may allocate)
    acts = np.zeros((hi, A, 3), dtype=np.float32) if desync else np.zeros((1, A, 3), dtype=np.float32)
    for e in range(lo, hi):
        _reset_env(
            e, pristine, slab2d, ag_f, ag_last, poi_pos, poi_last, rng,
            poi_rec_stamp, mate,
            ag_rand, ag_cand, ag_cand_n, poi_rand, poi_cand, poi_cand_n, W,
        )
        if desync:
            k = _randint(rng, e, horizon)
            for _ in range(k):
                for a in range(A):
                    acts[e, a, 0] = _uniform_pm1(rng, e)
                    acts[e, a, 1] = _uniform_pm1(rng, e)
                    acts[e, a, 2] = np.float32(_randint(rng, e, A))
                team, terminated, truncated = _step_env(
                    e, acts,
                    W, H, A, P, T, horizon, know_mode, vis_bytes, 0,
                    alt_scale, eye_h, poi_speed, r_tile, r_found, r_saved,
                    type_col, type_stuck,
                    grid_flags, grid_alt, ag_f, ag_last, ag_flags, ag_maxalt,
                    poi_pos, poi_state, poi_last, speeds, know, counters,
                    rng, cur_vis, new_know, poi_rec_stamp, mate,
                    prew,
                )
                if terminated or truncated:
                    _reset_env(
                        e, pristine, slab2d, ag_f, ag_last, poi_pos, poi_last, rng,
                        poi_rec_stamp, mate,
                        ag_rand, ag_cand, ag_cand_n, poi_rand, poi_cand, poi_cand_n, W,
                    )
        _emit_env(
            e, mode, undiff,
            W, H, A, P, T, horizon, know_mode, vis_bytes,
            type_col, grid_flags, grid_alt, ag_f, ag_flags, poi_pos, poi_state, counters,
            know, poi_rec_stamp, mate,
            dec_img, cent_img, state_img, logical,
        )


@njit(cache=True, nogil=True)
def zero_range(lo, hi, slab2d):
    for e in range(lo, hi):
        for i in range(slab2d.shape[1]):
            slab2d[e, i] = 0


@njit(cache=True, nogil=True)
def copy_scratch(chunks_lo, chunks_hi, A, srew, sterm, strunc, out_rew, out_prew, out_term, out_trunc, per_agent):
    """Single serial pass folding per-chunk scratch into the shared outputs."""
    for ci in range(chunks_lo.shape[0]):
        lo = chunks_lo[ci]
        hi = chunks_hi[ci]
        for e in range(lo, hi):
            k = e - lo
            team = F0
            for a in range(A):
                v = srew[ci, k * A + a]
                team = team + v
                if per_agent:
                    out_prew[e, a] = v
            out_rew[e] = team
            out_term[e] = sterm[ci, k]
            out_trunc[e] = strunc[ci, k]


@njit(cache=True, nogil=True)
def _sparse_marks(
    e, a, out, erase,
    A, P, T, know_mode, vis_bytes, undiff,
    ag_f, poi_state, know, poi_rec_stamp, mate,
    marks, mark_n,
):
    """Erase last step's sparse-plane marks, redraw current ones, record them.

    Sparse planes (detected POIs, self location, teammates) hold at most
    P + A cells, so the diff fill repaints them cell-by-cell instead of
    clearing whole planes.
    """
    if erase:
        for i in range(mark_n[e, a]):
            out[marks[e, a, i, 0], marks[e, a, i, 1], marks[e, a, i, 2]] = F0
    n = 0
    kbase = a * (vis_bytes + P * 5) if know_mode == 1 else 0
    sa = a if know_mode == 1 else 0
    for p in range(P):
        if poi_rec_stamp[e, sa, p] >= 0:
            rb = kbase + vis_bytes + p * 5
            if know[e, rb] and (np.int64(poi_state[e, p]) & P_SAVED) == 0:
                rx = np.int64(know[e, rb + 1]) | (np.int64(know[e, rb + 2]) << 8)
                ry = np.int64(know[e, rb + 3]) | (np.int64(know[e, rb + 4]) << 8)
                out[T + 1, ry, rx] = F1
                marks[e, a, n, 0] = T + 1
                marks[e, a, n, 1] = ry
                marks[e, a, n, 2] = rx
                n += 1
    sy = np.int64(ag_f[e, a, 1])
    sx = np.int64(ag_f[e, a, 0])
    out[T + 3, sy, sx] = F1
    marks[e, a, n, 0] = T + 3
    marks[e, a, n, 1] = sy
    marks[e, a, n, 2] = sx
    n += 1
    if A > 1:
        for b in range(A):
            if b == a:
                continue
            if mate[e, a, b, 2] >= 0:
                if undiff:
                    c = T + 4
                else:
                    c = T + 4 + (b if b < a else b - 1)
                out[c, mate[e, a, b, 1], mate[e, a, b, 0]] = F1
                marks[e, a, n, 0] = c
                marks[e, a, n, 1] = mate[e, a, b, 1]
                marks[e, a, n, 2] = mate[e, a, b, 0]
                n += 1
    mark_n[e, a] = n


@njit(cache=True, nogil=True)
def _emit_env_diff(
    e, full,
    W, H, A, P, T, horizon, know_mode, vis_bytes, undiff,
    type_col, grid_flags, grid_alt, ag_f, ag_flags, poi_pos, poi_state, counters,
    know, poi_rec_stamp, mate, new_know,
    dec_img, state_img, logical, mode, marks, mark_n,
):
    """Decentralized-image emit that writes only what changed this step."""
    gf = grid_flags[e]
    ga = grid_alt[e]
    for a in range(A):
        out = dec_img[e, a]
        if full:
            _fill_agent_obs(
                e, a, out, W, H, A, P, T, know_mode, vis_bytes, undiff,
                type_col, grid_flags, grid_alt, ag_f, poi_state, know,
                poi_rec_stamp, mate,
            )
            _sparse_marks(
                e, a, out, 0, A, P, T, know_mode, vis_bytes, undiff,
                ag_f, poi_state, know, poi_rec_stamp, mate, marks, mark_n,
            )
        else:
            _sparse_marks(
                e, a, out, 1, A, P, T, know_mode, vis_bytes, undiff,
                ag_f, poi_state, know, poi_rec_stamp, mate, marks, mark_n,
            )
            for i in range(vis_bytes):
                v = np.int64(new_know[e, a, i])
                if v:
                    for bit in range(8):
                        if (v >> bit) & 1:
                            idx = i * 8 + bit
                            yy = idx // W
                            xx = idx % W
                            w = np.int64(gf[yy, xx])
                            out[type_col[(w >> 5) & 127], yy, xx] = F1
                            out[T, yy, xx] = ga[yy, xx]
                            out[T + 2, yy, xx] = F1
        _fill_logical(e, a, logical, ag_f, ag_flags, counters, horizon)
    if mode == MODE_DEC_STATE:
        _fill_state_obs(
            e, state_img[e], W, H, A, P, T,
            type_col, grid_flags, grid_alt, ag_f, poi_pos, poi_state,
        )


@njit(cache=True, nogil=True)
def rebuild_marks_range(
    lo, hi, dims, views, aux, dec_img, undiff, marks, mark_n,
):
    """Record current sparse-plane marks after a full (reset) fill."""
    W, H, A, P, T, horizon, know_mode, vis_bytes = dims
    slab2d, grid_flags, grid_alt, ag_f, ag_last, ag_flags, ag_maxalt, poi_pos, poi_state, poi_last, speeds, know, counters = views
    rng, cur_vis, new_know, poi_rec_stamp, mate = aux
    for e in range(lo, hi):
        for a in range(A):
            _sparse_marks(
                e, a, dec_img[e, a], 0, A, P, T, know_mode, vis_bytes, undiff,
                ag_f, poi_state, know, poi_rec_stamp, mate, marks, mark_n,
            )
