"""Learning smoke test: tabular Q-learning on a tiny single-agent map.

Desk-scale check that the reward signal is learnable: a Q-table over
(agent tile, POI-found bit) with 9 discrete actions (8 compass moves + stay)
must clearly beat a random policy on an 8x8 fixture. No deep learning, no
function approximation; everything is reproducible bit-for-bit per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .layout import POI_FOUND
from .mapspec import AgentDef, MapSpec, POIDef, RewardConfig, TileTypeDef
from .observation import ObsMode
from .vecenv import EnvPool, VecConfig

SQRT2_INV = 1.0 / math.sqrt(2.0)

# 8 compass unit moves + stay, mapped straight into the continuous action box
ACTION_SET = np.array(
    [
        [1.0, 0.0],
        [SQRT2_INV, SQRT2_INV],
        [0.0, 1.0],
        [-SQRT2_INV, SQRT2_INV],
        [-1.0, 0.0],
        [-SQRT2_INV, -SQRT2_INV],
        [0.0, -1.0],
        [SQRT2_INV, -SQRT2_INV],
        [0.0, 0.0],
    ],
    dtype=np.float32,
)
N_ACTIONS = len(ACTION_SET)


def smoke_spec() -> MapSpec:
    """8x8 single-agent fixture: open field, one stationary POI, short horizon."""
    types = (TileTypeDef(0, (32, 160, 32), walkable=True),)
    grid = np.zeros((8, 8), dtype=np.int16)
    agents = (AgentDef(index=0, capabilities=frozenset({"walk"}), view_range=1.2, spawn=(1, 1)),)
    pois = (POIDef(index=0, spawn=(6, 6), savable_by=1),)
    speeds = np.ones((1, 1), dtype=np.float32)
    return MapSpec(
        W=8, H=8, tile_type_grid=grid, type_table=types, speeds=speeds,
        agents=agents, pois=pois, horizon=48, rewards=RewardConfig(),
    )


@dataclass(frozen=True)
class SmokeConfig:
    steps: int = 200_000
    gamma: float = 0.99
    alpha: float = 0.2
    eps_start: float = 1.0
    eps_end: float = 0.05
    eval_every: int = 20_000
    eval_episodes: int = 32
    spec: MapSpec = field(default_factory=smoke_spec)


@dataclass(frozen=True)
class EvalPoint:
    step: int
    mean_return: float
    sem: float


def _make_pool(spec: MapSpec, seed: int) -> EnvPool:
    return EnvPool(
        spec,
        VecConfig(n_envs=1, n_workers=1, mode=ObsMode.Void, seed=seed, desync=False),
    )


def _state_of(pool: EnvPool) -> tuple[int, int]:
    ar = pool.arena
    tile = int(ar.agent_f[0, 0, 1]) * ar.layout.W + int(ar.agent_f[0, 0, 0])
    found = 1 if int(ar.poi_state[0, 0]) & POI_FOUND else 0
    return tile, found


def _act(pool: EnvPool, action_index: int):
    acts = np.zeros((1, 1, 3), dtype=np.float32)
    acts[0, 0, :2] = ACTION_SET[action_index]
    out = pool.vec_step(acts)
    return float(out.rewards[0]), bool(out.terminated[0]), bool(out.truncated[0])


def evaluate_policy(policy, n_episodes: int, seed: int, spec: MapSpec | None = None):
    """Mean episodic return with SEM over n_episodes fresh-reset rollouts.

    policy: callable (state, rng) -> action index; rng is a numpy Generator
    so stochastic policies stay deterministic per seed.
    """
    spec = spec if spec is not None else smoke_spec()
    rng = np.random.default_rng(seed)
    pool = _make_pool(spec, seed)
    try:
        pool.vec_reset()
        returns = []
        for _ in range(n_episodes):
            total = 0.0
            done = False
            while not done:
                r, term, trunc = _act(pool, policy(_state_of(pool), rng))
                total += r
                done = term or trunc
            returns.append(total)  # auto-reset already produced the next episode
    finally:
        pool.close()
    mean = sum(returns) / len(returns)
    if len(returns) > 1:
        var = sum((x - mean) ** 2 for x in returns) / (len(returns) - 1)
        sem = math.sqrt(var / len(returns))
    else:
        sem = 0.0
    return mean, sem


def random_policy(state, rng) -> int:
    return int(rng.integers(N_ACTIONS))


def stay_policy(state, rng) -> int:
    return N_ACTIONS - 1


def greedy(q: dict, state) -> int:
    row = q.get(state)
    return int(np.argmax(row)) if row is not None else N_ACTIONS - 1


def train_q_smoke(config: SmokeConfig, seed: int) -> list[EvalPoint]:
    """Q-learning loop; returns the greedy-policy evaluation curve."""
    spec = config.spec
    q: dict[tuple[int, int], np.ndarray] = {}
    rng = np.random.default_rng(seed)
    pool = _make_pool(spec, seed)
    curve: list[EvalPoint] = []
    try:
        pool.vec_reset()
        state = _state_of(pool)
        for t in range(1, config.steps + 1):
            eps = config.eps_start + (config.eps_end - config.eps_start) * min(
                1.0, t / (0.8 * config.steps)
            )
            if state not in q:
                q[state] = np.zeros(N_ACTIONS, dtype=np.float64)
            if rng.random() < eps:
                a = int(rng.integers(N_ACTIONS))
            else:
                a = int(np.argmax(q[state]))
            r, term, trunc = _act(pool, a)
            nstate = _state_of(pool)  # post-auto-reset state when done
            if term or trunc:
                target = r
            else:
                nrow = q.get(nstate)
                target = r + config.gamma * (float(nrow.max()) if nrow is not None else 0.0)
            q[state][a] += config.alpha * (target - q[state][a])
            state = nstate
            if t % config.eval_every == 0 or t == config.steps:
                mean, sem = evaluate_policy(
                    lambda s, _rng: greedy(q, s), config.eval_episodes, seed + 1, spec
                )
                if not curve or curve[-1].step != t:
                    curve.append(EvalPoint(step=t, mean_return=mean, sem=sem))
    finally:
        pool.close()
    return curve


def curve_to_csv(curve: list[EvalPoint]) -> str:
    lines = ["step,mean_return,sem"]
    for p in curve:
        lines.append(f"{p.step},{p.mean_return!r},{p.sem!r}")
    return "\n".join(lines) + "\n"
