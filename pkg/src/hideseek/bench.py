"""Throughput benchmark harness: variants, timing, SPS reports.

Methodology: each (envs, agents, variant) cell builds a pool, warms up for a
fixed wall-clock period (dropped from measurement), then times `steps` total
environment steps of random actions, repeated `repeats` times; SPS = total
env-steps / seconds, reported as mean with standard error over repeats.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .mapspec import (
    AgentDef,
    MapSpec,
    POIDef,
    RewardConfig,
    TileTypeDef,
)
from .observation import ObsMode
from .vecenv import EnvPool, VecConfig, WAIT_POLICIES

VARIANTS = ("dense", "diff_sweep", "unpadded_stride", "serial_init", "tuple_pack")


class BenchError(ValueError):
    """Invalid benchmark configuration (maps to CLI usage errors)."""


@dataclass(frozen=True)
class BenchConfig:
    envs: tuple[int, ...] = (128,)
    agents: tuple[int, ...] = (1,)
    mode: ObsMode = ObsMode.DecentralizedNoState
    steps: int = 100_000
    workers: int = 0
    wait_policy: str = "yield"
    variant: str = "dense"
    warmup_seconds: float = 5.0
    repeats: int = 6
    seed: int = 0
    map_size: int = 64
    n_pois: int = 4

    def validate(self) -> None:
        if not self.envs or any(e < 1 for e in self.envs):
            raise BenchError(f"envs must be positive, got {self.envs}")
        if not self.agents or any(a < 1 for a in self.agents):
            raise BenchError(f"agents must be positive, got {self.agents}")
        if self.steps < max(self.envs):
            raise BenchError(f"steps ({self.steps}) must be >= largest batch ({max(self.envs)})")
        if self.repeats < 1:
            raise BenchError(f"repeats must be >= 1, got {self.repeats}")
        if self.variant not in VARIANTS:
            raise BenchError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.wait_policy not in WAIT_POLICIES:
            raise BenchError(f"wait_policy must be one of {WAIT_POLICIES}")
        if self.warmup_seconds < 0:
            raise BenchError("warmup_seconds must be >= 0")


@dataclass(frozen=True)
class BenchRow:
    variant: str
    mode: str
    envs: int
    agents: int
    workers: int
    sps_mean: float
    sps_sem: float
    wall_s: float


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)


def benchmark_spec(
    n_agents: int, size: int = 64, n_pois: int = 4, horizon: int = 512, seed: int = 1234
) -> MapSpec:
    """Deterministic synthetic map for benchmarking: walls, water, highland."""
    types = (
        TileTypeDef(0, (32, 160, 32), walkable=True),
        TileTypeDef(1, (90, 90, 90), blocking=True, altitude=5.0),
        TileTypeDef(2, (40, 80, 200), aquatic=True, walkable=True, stuck_probability=0.02),
        TileTypeDef(3, (150, 120, 60), walkable=True, altitude=2.0),
    )
    rng = np.random.default_rng(seed)
    grid = np.zeros((size, size), dtype=np.int16)
    r = rng.random((size, size))
    grid[r < 0.05] = 1
    grid[(r >= 0.05) & (r < 0.12)] = 2
    grid[(r >= 0.12) & (r < 0.20)] = 3
    grid[0, :] = 1
    grid[-1, :] = 1
    grid[:, 0] = 1
    grid[:, -1] = 1

    agents = tuple(
        AgentDef(index=a, capabilities=frozenset({"walk", "swim"}), view_range=3.0)
        for a in range(n_agents)
    )
    pois = tuple(POIDef(index=p, moves=(p % 2 == 0)) for p in range(n_pois))
    speeds = np.zeros((n_agents, 4), dtype=np.float32)
    speeds[:, 0] = 1.0
    speeds[:, 2] = 0.4
    speeds[:, 3] = 0.8
    return MapSpec(
        W=size,
        H=size,
        tile_type_grid=grid,
        type_table=types,
        speeds=speeds,
        agents=agents,
        pois=pois,
        horizon=horizon,
        rewards=RewardConfig(),
    )


def random_actions(rng: np.random.Generator, n_envs: int, n_agents: int) -> np.ndarray:
    """Uniform move components in [-1, 1) and radio targets, directly float32."""
    out = np.empty((n_envs, n_agents, 3), dtype=np.float32)
    rng.random(out=out, dtype=np.float32)
    out[:, :, :2] *= np.float32(2.0)
    out[:, :, :2] -= np.float32(1.0)
    out[:, :, 2] *= np.float32(n_agents)
    np.floor(out[:, :, 2], out=out[:, :, 2])
    return out


def _variant_config(cfg: BenchConfig, n_envs: int) -> VecConfig:
    vc = VecConfig(
        n_envs=n_envs,
        n_workers=cfg.workers,
        mode=cfg.mode,
        seed=cfg.seed,
        wait_policy=cfg.wait_policy,
    )
    if cfg.variant == "diff_sweep":
        vc = replace(vc, diff_fill=True)
    elif cfg.variant == "unpadded_stride":
        vc = replace(vc, stride_align=8)
    elif cfg.variant == "serial_init":
        vc = replace(vc, serial_init=True)
    elif cfg.variant == "tuple_pack":
        vc = replace(vc, tuple_pack=True)
    return vc


def _time_cell(pool: EnvPool, cfg: BenchConfig, n_envs: int, n_agents: int) -> BenchRow:
    rng = np.random.default_rng(cfg.seed)
    pool.vec_reset()
    deadline = time.perf_counter() + cfg.warmup_seconds
    while time.perf_counter() < deadline:
        pool.vec_step(random_actions(rng, n_envs, n_agents))
    iters = max(1, cfg.steps // n_envs)
    sps = []
    wall = 0.0
    for _ in range(cfg.repeats):
        t0 = time.perf_counter()
        for _ in range(iters):
            pool.vec_step(random_actions(rng, n_envs, n_agents))
        dt = time.perf_counter() - t0
        wall += dt
        sps.append(n_envs * iters / dt)
    mean = sum(sps) / len(sps)
    if len(sps) > 1:
        var = sum((s - mean) ** 2 for s in sps) / (len(sps) - 1)
        sem = math.sqrt(var / len(sps))
    else:
        sem = 0.0
    return BenchRow(
        variant=cfg.variant,
        mode=cfg.mode.name,
        envs=n_envs,
        agents=n_agents,
        workers=pool.n_workers,
        sps_mean=mean,
        sps_sem=sem,
        wall_s=wall,
    )


def run_benchmark(cfg: BenchConfig) -> BenchReport:
    cfg = replace(cfg, mode=ObsMode(cfg.mode))
    cfg.validate()
    report = BenchReport()
    for n_agents in cfg.agents:
        spec = benchmark_spec(n_agents, size=cfg.map_size, n_pois=cfg.n_pois)
        for n_envs in cfg.envs:
            pool = EnvPool(spec, _variant_config(cfg, n_envs))
            try:
                report.rows.append(_time_cell(pool, cfg, n_envs, n_agents))
            finally:
                pool.close()
    return report


COLUMNS = ("variant", "mode", "envs", "agents", "workers", "sps_mean", "sps_sem", "wall_s")


def emit_report(report: BenchReport, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in report.rows:
            w.writerow([r.variant, r.mode, r.envs, r.agents, r.workers,
                        repr(r.sps_mean), repr(r.sps_sem), repr(r.wall_s)])
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(COLUMNS) + " |",
                 "|" + "|".join("---" for _ in COLUMNS) + "|"]
        for r in report.rows:
            lines.append(
                f"| {r.variant} | {r.mode} | {r.envs} | {r.agents} | {r.workers} "
                f"| {r.sps_mean:.0f} | {r.sps_sem:.0f} | {r.wall_s:.2f} |"
            )
        return "\n".join(lines) + "\n"
    raise BenchError(f"format must be csv or markdown, got {fmt!r}")


def parse_report(csv_text: str) -> BenchReport:
    """Inverse of emit_report(csv) for round-trips."""
    rd = csv.reader(io.StringIO(csv_text))
    header = next(rd)
    if tuple(header) != COLUMNS:
        raise BenchError(f"unexpected CSV header {header}")
    report = BenchReport()
    for row in rd:
        report.rows.append(
            BenchRow(row[0], row[1], int(row[2]), int(row[3]), int(row[4]),
                     float(row[5]), float(row[6]), float(row[7]))
        )
    return report
