import copy
import io
import json

import numpy as np
import pytest
from PIL import Image

from hideseek.mapspec import (
    AgentDef,
    MapSpec,
    POIDef,
    RewardConfig,
    TileTypeDef,
    build_map_spec,
)

# tile palette shared by the image fixtures
RGB_OPEN = (32, 160, 32)
RGB_WALL = (90, 90, 90)
RGB_WATER = (40, 80, 200)
RGB_SWAMP = (100, 70, 20)
RGB_HIGH = (150, 120, 60)

TYPE_TABLE_JSON = [
    {"id": 0, "rgb": list(RGB_OPEN), "walkable": True},
    {"id": 1, "rgb": list(RGB_WALL), "blocking": True, "altitude": 9.0},
    {"id": 2, "rgb": list(RGB_WATER), "aquatic": True},
    {"id": 3, "rgb": list(RGB_SWAMP), "walkable": True, "stuck_probability": 0.25},
    {"id": 4, "rgb": list(RGB_HIGH), "walkable": True, "flyable": True, "altitude": 2.0},
]


def png_bytes(pixel_grid) -> bytes:
    arr = np.asarray(pixel_grid, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def grid_image(type_grid, palette=None) -> bytes:
    """Render an int type grid to PNG bytes using the fixture palette."""
    palette = palette or {
        0: RGB_OPEN, 1: RGB_WALL, 2: RGB_WATER, 3: RGB_SWAMP, 4: RGB_HIGH
    }
    tg = np.asarray(type_grid)
    px = np.zeros((*tg.shape, 3), dtype=np.uint8)
    for tid, rgb in palette.items():
        px[tg == tid] = rgb
    return png_bytes(px)


def oracle_type_grid(seed=7, size=16):
    """Mixed-terrain grid: walls, water, swamp, highland, walled border."""
    rng = np.random.default_rng(seed)
    g = np.zeros((size, size), dtype=np.int16)
    r = rng.random((size, size))
    g[r < 0.08] = 1
    g[(r >= 0.08) & (r < 0.16)] = 2
    g[(r >= 0.16) & (r < 0.24)] = 3
    g[(r >= 0.24) & (r < 0.32)] = 4
    g[0, :] = 1
    g[-1, :] = 1
    g[:, 0] = 1
    g[:, -1] = 1
    g[1, 1] = 0  # guaranteed open spawn pocket
    g[1, 2] = 0
    g[2, 1] = 0
    return g


def oracle_config(per_agent=False, horizon=128):
    return {
        "tile_types": copy.deepcopy(TYPE_TABLE_JSON),
        "speeds": [
            [1.0, 0.0, 0.0, 0.6, 0.8],
            [0.9, 0.0, 0.5, 0.6, 0.8],
            [1.0, 0.0, 0.0, 1.0, 1.0],
        ],
        "agents": [
            {"capabilities": ["walk"], "view_range": 2.5, "spawn": "random"},
            {"capabilities": ["walk", "swim"], "view_range": 3.0, "spawn": "random"},
            {
                "capabilities": ["walk", "fly"],
                "view_range": 3.5,
                "max_alt": 3.0,
                "spawn": "random",
                "deployment": 2.0,
            },
        ],
        "pois": [
            {"spawn": "random", "moves": True},
            {"spawn": "random", "savable_by": [1, 2]},
        ],
        "horizon": horizon,
        "rewards": {"tile": 0.01, "found": 1.0, "saved": 10.0, "per_agent": per_agent},
        "alt_scale": 10.0,
        "eye_height": 1.0,
        "poi_speed": 0.25,
    }


@pytest.fixture(scope="session")
def oracle_spec() -> MapSpec:
    """16x16, 3 heterogeneous agents, 2 POIs; the oracle-equivalence map."""
    return build_map_spec(grid_image(oracle_type_grid()), json.dumps(oracle_config()))


@pytest.fixture(scope="session")
def oracle_spec_per_agent() -> MapSpec:
    return build_map_spec(
        grid_image(oracle_type_grid()), json.dumps(oracle_config(per_agent=True))
    )


def flat_spec(
    size=8,
    n_agents=1,
    n_pois=1,
    horizon=64,
    view_range=2.0,
    poi_spawn=(5, 5),
    agent_spawn=(1, 1),
    moves=False,
    per_agent=False,
) -> MapSpec:
    """All-open single-type map built directly (no image round trip)."""
    types = (TileTypeDef(0, RGB_OPEN, walkable=True),)
    grid = np.zeros((size, size), dtype=np.int16)
    agents = tuple(
        AgentDef(
            index=a,
            capabilities=frozenset({"walk"}),
            view_range=view_range,
            spawn=agent_spawn if a == 0 else None,
        )
        for a in range(n_agents)
    )
    pois = tuple(
        POIDef(
            index=p,
            spawn=poi_spawn if p == 0 else None,
            moves=moves,
            savable_by=(1 << n_agents) - 1,
        )
        for p in range(n_pois)
    )
    return MapSpec(
        W=size,
        H=size,
        tile_type_grid=grid,
        type_table=types,
        speeds=np.ones((n_agents, 1), dtype=np.float32),
        agents=agents,
        pois=pois,
        horizon=horizon,
        rewards=RewardConfig(per_agent=per_agent),
    )


@pytest.fixture(scope="session")
def tiny_spec() -> MapSpec:
    return flat_spec()
