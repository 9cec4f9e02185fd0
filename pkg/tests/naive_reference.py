"""Straightforward reference implementation used as the test oracle.

Plain Python objects, no packing, no compiled code. Mirrors the engine's
documented semantics contract: same float32 arithmetic, same draw order,
same fixed step phases. Nothing here imports engine internals except the
MapSpec data type; the RNG is re-derived from the documented counter scheme.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15

F0 = np.float32(0.0)
F05 = np.float32(0.5)
F1 = np.float32(1.0)
FN1 = np.float32(-1.0)
RESCUE_R2 = np.float32(2.25)
SAVE_R2 = np.float32(0.25)
INV_SQRT2 = np.float32(0.7071067811865476)
DIR8 = [
    (np.float32(1.0), np.float32(0.0)),
    (INV_SQRT2, INV_SQRT2),
    (np.float32(0.0), np.float32(1.0)),
    (np.float32(-INV_SQRT2), INV_SQRT2),
    (np.float32(-1.0), np.float32(0.0)),
    (np.float32(-INV_SQRT2), np.float32(-INV_SQRT2)),
    (np.float32(0.0), np.float32(-1.0)),
    (INV_SQRT2, np.float32(-INV_SQRT2)),
]


def mix64(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def stream_seed(global_seed, env_index):
    return mix64((global_seed & MASK64) ^ mix64((env_index * GAMMA + GAMMA) & MASK64))


class Rng:
    def __init__(self, state):
        self.state = state & MASK64

    def u24(self):
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state) >> 40

    def uniform(self):
        return np.float32(np.float32(self.u24()) * np.float32(1.0 / (1 << 24)))

    def uniform_pm1(self):
        return np.float32(np.float32(self.u24()) * np.float32(1.0 / (1 << 23)) - F1)

    def randint(self, n):
        return (self.u24() * n) >> 24


class NaiveAgent:
    def __init__(self, d):
        self.x = np.float32(0.0)
        self.y = np.float32(0.0)
        self.view_range = np.float32(d.view_range)
        self.deployment = np.float32(d.deployment)
        self.last_x = 0
        self.last_y = 0
        self.stuck = False
        self.walk = "walk" in d.capabilities
        self.fly = "fly" in d.capabilities
        self.swim = "swim" in d.capabilities
        self.max_alt = np.float32(np.float16(d.max_alt))
        self.spawn = d.spawn


class NaivePOI:
    def __init__(self, d):
        self.x = np.float32(0.0)
        self.y = np.float32(0.0)
        self.savable_by = d.savable_by
        self.moves = d.moves
        self.found = False
        self.saved = False
        self.last_x = 0
        self.last_y = 0
        self.spawn = d.spawn


class NaiveEnv:
    """One environment, stepped in the exact engine phase/draw order.

    know_mode: 0 none, 1 per-agent, 2 shared.
    """

    def __init__(self, spec, rng: Rng, know_mode: int = 1):
        self.spec = spec
        self.rng = rng
        self.know_mode = know_mode
        self.W, self.H = spec.W, spec.H
        self.A = spec.n_agents
        self.P = spec.n_pois
        types = sorted(spec.type_table, key=lambda t: t.type_id)
        self.types = {t.type_id: t for t in types}
        self.col_of = {t.type_id: i for i, t in enumerate(types)}
        self.type_of = [
            self.types[int(spec.tile_type_grid[y, x])]
            for y in range(self.H)
            for x in range(self.W)
        ]
        self.alt = np.array(
            [np.float32(t.altitude) for t in self.type_of], dtype=np.float32
        ).reshape(self.H, self.W)
        self.agent_cands = [self._cands_agent(a) for a in spec.agents]
        self.poi_cands = [self._cands_poi() for _ in spec.pois]
        self.reset()

    # -- helpers -----------------------------------------------------------

    def _t(self, x, y):
        return self.type_of[y * self.W + x]

    def _traversable(self, t, ag: NaiveAgent):
        if t.blocking:
            return False
        return (t.walkable and ag.walk) or (t.flyable and ag.fly) or (t.aquatic and ag.swim)

    def _cands_agent(self, d):
        ag = NaiveAgent(d)
        return [
            i
            for i in range(self.W * self.H)
            if self._traversable(self.type_of[i], ag)
        ]

    def _cands_poi(self):
        return [
            i
            for i in range(self.W * self.H)
            if self.type_of[i].walkable and not self.type_of[i].blocking
        ]

    # -- reset -------------------------------------------------------------

    def reset(self):
        self.agents = [NaiveAgent(d) for d in self.spec.agents]
        self.pois = [NaivePOI(d) for d in self.spec.pois]
        # vis[a] = per-agent monotonic visibility sets; global set
        self.vis = [set() for _ in range(self.A)]
        self.global_observed = set()
        nk = self.A if self.know_mode == 1 else 1
        self.know = [set() for _ in range(nk)]
        self.poi_rec = [[None] * self.P for _ in range(nk)]  # (found, x, y)
        self.rec_stamp = [[-1] * self.P for _ in range(self.A)]
        self.mate = [[(0, 0, -1)] * self.A for _ in range(self.A)]
        self.steps = 0
        self.tiles_discovered = 0
        self.pois_found = 0
        self.pois_saved = 0
        self.cur_vis = [set() for _ in range(self.A)]
        for a, d in zip(self.agents, self.spec.agents):
            if d.spawn is None:
                cand = self.agent_cands[d.index]
                idx = cand[self.rng.randint(len(cand))]
            else:
                idx = d.spawn[1] * self.W + d.spawn[0]
            a.x = np.float32(np.float32(idx % self.W) + F05)
            a.y = np.float32(np.float32(idx // self.W) + F05)
            a.last_x, a.last_y = idx % self.W, idx // self.W
        for p, d in zip(self.pois, self.spec.pois):
            if d.spawn is None:
                cand = self.poi_cands[d.index]
                idx = cand[self.rng.randint(len(cand))]
            else:
                idx = d.spawn[1] * self.W + d.spawn[0]
            p.x = np.float32(np.float32(idx % self.W) + F05)
            p.y = np.float32(np.float32(idx // self.W) + F05)
            p.last_x, p.last_y = idx % self.W, idx // self.W

    # -- visibility --------------------------------------------------------

    def _ray_clear(self, x0, y0, x1, y1, thresh):
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
            if self._t(x, y).blocking:
                return False
            if self.alt[y, x] > thresh:
                return False

    def _visibility(self, ai):
        ag = self.agents[ai]
        atx, aty = int(ag.x), int(ag.y)
        alt0 = np.float32(self.alt[aty, atx])
        r = np.float32(ag.view_range * (F1 + alt0 / np.float32(self.spec.alt_scale)))
        thresh = np.float32(alt0 + np.float32(self.spec.eye_height))
        r2 = np.float32(r * r)
        xlo = max(0, int(np.floor(np.float32(ag.x - r))) - 1)
        xhi = min(self.W - 1, int(np.floor(np.float32(ag.x + r))) + 1)
        ylo = max(0, int(np.floor(np.float32(ag.y - r))) - 1)
        yhi = min(self.H - 1, int(np.floor(np.float32(ag.y + r))) + 1)
        nnew = 0
        kset = self.know[ai if self.know_mode == 1 else 0] if self.know_mode else None
        for ty in range(ylo, yhi + 1):
            for tx in range(xlo, xhi + 1):
                dxx = np.float32(np.float32(np.float32(tx) + F05) - ag.x)
                dyy = np.float32(np.float32(np.float32(ty) + F05) - ag.y)
                if np.float32(dxx * dxx + dyy * dyy) <= r2:
                    if (tx == atx and ty == aty) or self._ray_clear(atx, aty, tx, ty, thresh):
                        idx = ty * self.W + tx
                        self.cur_vis[ai].add(idx)
                        self.vis[ai].add(idx)
                        if idx not in self.global_observed:
                            self.global_observed.add(idx)
                            nnew += 1
                        if kset is not None:
                            kset.add(idx)
        return nnew

    # -- step --------------------------------------------------------------

    def step(self, actions):
        """actions: sequence of (ax, ay, radio_target) per agent."""
        spec = self.spec
        A, P, W, H = self.A, self.P, self.W, self.H
        s1 = self.steps + 1
        prew = [F0] * A

        for ag in self.agents:
            if ag.deployment > F0:
                d = np.float32(ag.deployment - F1)
                ag.deployment = d if d > F0 else F0

        for ai, ag in enumerate(self.agents):
            if ag.deployment > F0:
                continue
            otx, oty = int(ag.x), int(ag.y)
            if ag.stuck:
                sp = F0
            else:
                col = self.col_of[self._t(otx, oty).type_id]
                sp = np.float32(spec.speeds[ai, col])
            ax = np.float32(min(1.0, max(-1.0, float(np.float32(actions[ai][0])))))
            ay = np.float32(min(1.0, max(-1.0, float(np.float32(actions[ai][1])))))
            px, py = np.float32(ag.x), np.float32(ag.y)
            nx = np.float32(px + np.float32(ax * sp))
            tx = int(np.floor(nx))
            if 0 <= tx < W:
                t = self._t(tx, oty)
                ok = self._traversable(t, ag)
                if ok and ag.fly and self.alt[oty, tx] > ag.max_alt:
                    ok = False
                if ok:
                    px = nx
            ctx = int(px)
            ny = np.float32(py + np.float32(ay * sp))
            ty = int(np.floor(ny))
            if 0 <= ty < H:
                t = self._t(ctx, ty)
                ok = self._traversable(t, ag)
                if ok and ag.fly and self.alt[ty, ctx] > ag.max_alt:
                    ok = False
                if ok:
                    py = ny
            ag.x, ag.y = px, py
            ag.last_x, ag.last_y = otx, oty

        for ag in self.agents:
            if ag.deployment > F0:
                continue
            ntx, nty = int(ag.x), int(ag.y)
            if ntx != ag.last_x or nty != ag.last_y:
                p = np.float32(self._t(ntx, nty).stuck_probability)
                if self.rng.uniform() < p:
                    ag.stuck = True
        for ag in self.agents:
            if ag.stuck:
                for b in self.agents:
                    if b is not ag and not b.stuck:
                        dxx = np.float32(b.x - ag.x)
                        dyy = np.float32(b.y - ag.y)
                        if np.float32(dxx * dxx + dyy * dyy) <= RESCUE_R2:
                            ag.stuck = False
                            break

        self.cur_vis = [set() for _ in range(A)]
        total_new = 0
        for ai, ag in enumerate(self.agents):
            if ag.deployment > F0:
                continue
            nnew = self._visibility(ai)
            total_new += nnew
            prew[ai] = np.float32(prew[ai] + np.float32(np.float32(spec.rewards.r_tile) * np.float32(nnew)))
        for ai, ag in enumerate(self.agents):
            if ag.deployment > F0:
                continue
            for bi, b in enumerate(self.agents):
                if bi == ai:
                    continue
                if int(b.y) * W + int(b.x) in self.cur_vis[ai]:
                    self.mate[ai][bi] = (int(b.x), int(b.y), s1)

        for ai, ag in enumerate(self.agents):
            if ag.deployment > F0:
                continue
            t = min(A - 1, max(0, int(np.int64(np.float32(actions[ai][2])))))
            if t == ai:
                continue
            if self.know_mode == 1:
                self.know[t] |= self.cur_vis[ai]
                for p in range(P):
                    if self.rec_stamp[ai][p] > self.rec_stamp[t][p]:
                        self.poi_rec[t][p] = self.poi_rec[ai][p]
                        self.rec_stamp[t][p] = self.rec_stamp[ai][p]
            for bi in range(A):
                if self.mate[ai][bi][2] > self.mate[t][bi][2]:
                    self.mate[t][bi] = self.mate[ai][bi]
            if s1 > self.mate[t][ai][2]:
                self.mate[t][ai] = (int(ag.x), int(ag.y), s1)

        nf = ns = 0
        for pi, poi in enumerate(self.pois):
            ptx, pty = int(poi.x), int(poi.y)
            if not poi.found:
                idx = pty * W + ptx
                if any(idx in self.vis[a] for a in range(A)):
                    poi.found = True
                    nf += 1
                    seer = 0
                    for a in range(A):
                        if idx in self.cur_vis[a]:
                            seer = a
                            break
                    prew[seer] = np.float32(prew[seer] + np.float32(spec.rewards.r_found))
            if poi.found and not poi.saved:
                for a in range(A):
                    if poi.savable_by >> a & 1:
                        dxx = np.float32(self.agents[a].x - poi.x)
                        dyy = np.float32(self.agents[a].y - poi.y)
                        if np.float32(dxx * dxx + dyy * dyy) <= SAVE_R2:
                            poi.saved = True
                            ns += 1
                            prew[a] = np.float32(prew[a] + np.float32(spec.rewards.r_saved))
                            break
            if poi.moves and not poi.saved:
                d = self.rng.randint(8)
                dx8, dy8 = DIR8[d]
                speed = np.float32(spec.poi_speed)
                px, py = np.float32(poi.x), np.float32(poi.y)
                nx = np.float32(px + np.float32(dx8 * speed))
                tx = int(np.floor(nx))
                if 0 <= tx < W:
                    t = self._t(tx, pty)
                    if t.walkable and not t.blocking:
                        px = nx
                ctx = int(px)
                ny = np.float32(py + np.float32(dy8 * speed))
                ty = int(np.floor(ny))
                if 0 <= ty < H:
                    t = self._t(ctx, ty)
                    if t.walkable and not t.blocking:
                        py = ny
                poi.last_x, poi.last_y = ptx, pty
                poi.x, poi.y = px, py
                ptx, pty = int(px), int(py)
            idx = pty * W + ptx
            if self.know_mode == 1:
                for a in range(A):
                    if idx in self.cur_vis[a]:
                        self.poi_rec[a][pi] = (1 if poi.found else 0, ptx, pty)
                        self.rec_stamp[a][pi] = s1
            elif self.know_mode == 2:
                if any(idx in self.cur_vis[a] for a in range(A)):
                    self.poi_rec[0][pi] = (1 if poi.found else 0, ptx, pty)
                    self.rec_stamp[0][pi] = s1

        self.steps = s1
        self.tiles_discovered += total_new
        self.pois_found += nf
        self.pois_saved += ns
        terminated = all(p.saved for p in self.pois)
        truncated = (not terminated) and s1 >= spec.horizon
        team = F0
        for v in prew:
            team = np.float32(team + v)
        return team, prew, terminated, truncated

    # -- desync / vec semantics -------------------------------------------

    def desync_roll(self):
        """Reset-time pre-roll: advance a uniform number of random-action steps."""
        k = self.rng.randint(self.spec.horizon)
        for _ in range(k):
            acts = []
            for _a in range(self.A):
                ax = self.rng.uniform_pm1()
                ay = self.rng.uniform_pm1()
                t = self.rng.randint(self.A)
                acts.append((ax, ay, np.float32(t)))
            _, _, term, trunc = self.step(acts)
            if term or trunc:
                self.reset()

    # -- observation fills (independent of the engine's) -------------------

    def fill_agent_obs(self, ai, n_types, undiff=False):
        A, W, H, T = self.A, self.W, self.H, n_types
        others = 0 if A == 1 else (1 if undiff else A - 1)
        out = np.zeros((T + 4 + others, H, W), dtype=np.float32)
        kset = self.know[ai if self.know_mode == 1 else 0]
        for idx in kset:
            y, x = idx // W, idx % W
            out[self.col_of[self._t(x, y).type_id], y, x] = 1.0
            out[T, y, x] = self.alt[y, x]
            out[T + 2, y, x] = 1.0
        si = ai if self.know_mode == 1 else 0
        for pi in range(self.P):
            rec = self.poi_rec[si][pi]
            if self.rec_stamp[si][pi] >= 0 and rec and rec[0] and not self.pois[pi].saved:
                out[T + 1, rec[2], rec[1]] = 1.0
        ag = self.agents[ai]
        out[T + 3, int(ag.y), int(ag.x)] = 1.0
        if A > 1:
            for bi in range(A):
                if bi == ai:
                    continue
                mx, my, stamp = self.mate[ai][bi]
                if stamp >= 0:
                    c = T + 4 if undiff else T + 4 + (bi if bi < ai else bi - 1)
                    out[c, my, mx] = 1.0
        return out

    def fill_logical(self, ai):
        ag = self.agents[ai]
        return np.array(
            [
                ag.x,
                ag.y,
                ag.view_range,
                ag.deployment,
                1.0 if ag.stuck else 0.0,
                np.float32(np.float32(self.steps) / np.float32(self.spec.horizon)),
            ],
            dtype=np.float32,
        )

    def fill_cent_obs(self, n_types):
        A, W, H, T = self.A, self.W, self.H, n_types
        out = np.zeros((T + 3 + A, H, W), dtype=np.float32)
        for idx in self.know[0]:
            y, x = idx // W, idx % W
            out[self.col_of[self._t(x, y).type_id], y, x] = 1.0
            out[T, y, x] = self.alt[y, x]
            out[T + 2, y, x] = 1.0
        for pi in range(self.P):
            rec = self.poi_rec[0][pi]
            if self.rec_stamp[0][pi] >= 0 and rec and rec[0] and not self.pois[pi].saved:
                out[T + 1, rec[2], rec[1]] = 1.0
        for ai, ag in enumerate(self.agents):
            out[T + 3 + ai, int(ag.y), int(ag.x)] = 1.0
        return out

    def fill_state_obs(self, n_types):
        A, W, H, T = self.A, self.W, self.H, n_types
        out = np.zeros((T + 3 + A, H, W), dtype=np.float32)
        for y in range(H):
            for x in range(W):
                out[self.col_of[self._t(x, y).type_id], y, x] = 1.0
                out[T, y, x] = self.alt[y, x]
                if y * W + x in self.global_observed:
                    out[T + 2, y, x] = 1.0
        for poi in self.pois:
            if not poi.saved:
                out[T + 1, int(poi.y), int(poi.x)] = 1.0
        for ai, ag in enumerate(self.agents):
            out[T + 3 + ai, int(ag.y), int(ag.x)] = 1.0
        return out


def snapshot(env: NaiveEnv) -> dict:
    """Comparable view of the full dynamic state (float32 kept bit-exact)."""
    return {
        "agents": [
            (
                float(a.x),
                float(a.y),
                a.last_x,
                a.last_y,
                a.stuck,
                float(a.deployment),
            )
            for a in env.agents
        ],
        "pois": [
            (float(p.x), float(p.y), p.found, p.saved, p.last_x, p.last_y)
            for p in env.pois
        ],
        "counters": (env.steps, env.tiles_discovered, env.pois_found, env.pois_saved),
        "vis": [frozenset(v) for v in env.vis],
        "global": frozenset(env.global_observed),
        "know": [frozenset(k) for k in env.know],
    }
