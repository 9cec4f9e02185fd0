"""Map image + JSON config parsing into a validated MapSpec.

Everything the engine simulates is data-driven: a PNG whose pixel colors are
looked up exactly (no nearest-match) in the tile-type table, plus a JSON
config carrying the type table, the per-agent-per-type speed matrix, agent
and POI rosters, horizon and reward values.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image

from .layout import MAX_AGENTS


class MapError(ValueError):
    """Raised for malformed images/configs; message carries the offending path."""


# Default reward magnitudes (config overridable).
DEFAULT_R_TILE = 0.01
DEFAULT_R_FOUND = 1.0
DEFAULT_R_SAVED = 10.0
DEFAULT_HORIZON = 512
DEFAULT_VIEW_RANGE = 3.0
DEFAULT_MAX_ALT = 1000.0
DEFAULT_ALT_SCALE = 10.0
DEFAULT_EYE_HEIGHT = 1.0
DEFAULT_POI_SPEED = 0.25

CAPABILITY_NAMES = ("walk", "fly", "swim")


@dataclass(frozen=True)
class TileTypeDef:
    type_id: int
    rgb: tuple[int, int, int]
    walkable: bool = False
    flyable: bool = False
    aquatic: bool = False
    blocking: bool = False
    altitude: float = 0.0
    stuck_probability: float = 0.0
    dangerous: bool = False  # accepted and stored; no dynamics effect


@dataclass(frozen=True)
class AgentDef:
    index: int
    capabilities: frozenset[str]
    view_range: float = DEFAULT_VIEW_RANGE
    max_alt: float = DEFAULT_MAX_ALT
    spawn: tuple[int, int] | None = None  # None = random
    deployment: float = 0.0


@dataclass(frozen=True)
class POIDef:
    index: int
    spawn: tuple[int, int] | None = None
    moves: bool = False
    savable_by: int = 0  # 20-bit agent mask


@dataclass(frozen=True)
class RewardConfig:
    r_tile: float = DEFAULT_R_TILE
    r_found: float = DEFAULT_R_FOUND
    r_saved: float = DEFAULT_R_SAVED
    per_agent: bool = False


@dataclass(frozen=True)
class MapSpec:
    W: int
    H: int
    tile_type_grid: np.ndarray  # (H, W) int16, grid[y, x]; image row 0 is y=0
    type_table: tuple[TileTypeDef, ...]
    speeds: np.ndarray  # (n_agents, n_types) float32, tiles/step
    agents: tuple[AgentDef, ...]
    pois: tuple[POIDef, ...]
    horizon: int = DEFAULT_HORIZON
    rewards: RewardConfig = field(default_factory=RewardConfig)
    alt_scale: float = DEFAULT_ALT_SCALE
    eye_height: float = DEFAULT_EYE_HEIGHT
    poi_speed: float = DEFAULT_POI_SPEED
    undifferentiated_agents: bool = False

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_pois(self) -> int:
        return len(self.pois)

    @property
    def n_types(self) -> int:
        return len(self.type_table)

    def type_by_id(self, type_id: int) -> TileTypeDef:
        return self._type_index()[type_id]

    def _type_index(self) -> dict[int, TileTypeDef]:
        return {t.type_id: t for t in self.type_table}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MapSpec):
            return NotImplemented
        return (
            self.W == other.W
            and self.H == other.H
            and np.array_equal(self.tile_type_grid, other.tile_type_grid)
            and self.type_table == other.type_table
            and np.array_equal(self.speeds, other.speeds)
            and self.agents == other.agents
            and self.pois == other.pois
            and self.horizon == other.horizon
            and self.rewards == other.rewards
            and self.alt_scale == other.alt_scale
            and self.eye_height == other.eye_height
            and self.poi_speed == other.poi_speed
            and self.undifferentiated_agents == other.undifferentiated_agents
        )


def _as_bool(v, path: str) -> bool:
    if not isinstance(v, bool):
        raise MapError(f"{path}: expected boolean, got {v!r}")
    return v


def _as_num(v, path: str, lo=None, hi=None) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MapError(f"{path}: expected number, got {v!r}")
    v = float(v)
    if lo is not None and v < lo:
        raise MapError(f"{path}: {v} below minimum {lo}")
    if hi is not None and v > hi:
        raise MapError(f"{path}: {v} above maximum {hi}")
    return v


def _parse_spawn(v, path: str) -> tuple[int, int] | None:
    if v is None or v == "random":
        return None
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return (int(v[0]), int(v[1]))
    raise MapError(f'{path}: spawn must be "random" or [x, y], got {v!r}')


def parse_config(json_bytes: bytes | str) -> dict:
    """Parse and validate the JSON side of a map definition.

    Returns a dict of validated pieces (type_table, speeds, agents, pois,
    horizon, rewards, visibility constants); combine with an image via
    build_map_spec.
    """
    try:
        cfg = json.loads(json_bytes)
    except json.JSONDecodeError as e:
        raise MapError(f"config is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise MapError("config root must be an object")

    raw_types = cfg.get("tile_types")
    if not isinstance(raw_types, list) or not raw_types:
        raise MapError("tile_types: expected non-empty list")
    type_table = []
    seen_rgb: dict[tuple[int, int, int], int] = {}
    seen_ids: set[int] = set()
    for i, t in enumerate(raw_types):
        path = f"tile_types[{i}]"
        if not isinstance(t, dict):
            raise MapError(f"{path}: expected object")
        type_id = int(_as_num(t.get("id", i), f"{path}.id", lo=0, hi=127))
        if type_id in seen_ids:
            raise MapError(f"{path}.id: duplicate type id {type_id}")
        seen_ids.add(type_id)
        rgb_raw = t.get("rgb")
        if not isinstance(rgb_raw, (list, tuple)) or len(rgb_raw) != 3:
            raise MapError(f"{path}.rgb: expected [r, g, b]")
        rgb = tuple(int(_as_num(c, f"{path}.rgb[{j}]", lo=0, hi=255)) for j, c in enumerate(rgb_raw))
        if rgb in seen_rgb:
            raise MapError(f"{path}.rgb: triple {rgb} already used by type {seen_rgb[rgb]}")
        seen_rgb[rgb] = type_id
        blocking = _as_bool(t.get("blocking", False), f"{path}.blocking")
        walkable = _as_bool(t.get("walkable", False), f"{path}.walkable")
        if blocking and walkable:
            raise MapError(f"{path}: blocking tiles cannot be walkable")
        type_table.append(
            TileTypeDef(
                type_id=type_id,
                rgb=rgb,  # type: ignore[arg-type]
                walkable=walkable,
                flyable=_as_bool(t.get("flyable", False), f"{path}.flyable"),
                aquatic=_as_bool(t.get("aquatic", False), f"{path}.aquatic"),
                blocking=blocking,
                altitude=_as_num(t.get("altitude", 0.0), f"{path}.altitude", lo=0.0),
                stuck_probability=_as_num(
                    t.get("stuck_probability", 0.0), f"{path}.stuck_probability", lo=0.0, hi=1.0
                ),
                dangerous=_as_bool(t.get("dangerous", False), f"{path}.dangerous"),
            )
        )
    type_table.sort(key=lambda t: t.type_id)

    raw_agents = cfg.get("agents")
    if not isinstance(raw_agents, list) or not raw_agents:
        raise MapError("agents: expected non-empty list")
    if len(raw_agents) > MAX_AGENTS:
        raise MapError(f"agents: at most {MAX_AGENTS} agents supported, got {len(raw_agents)}")
    agents = []
    for i, a in enumerate(raw_agents):
        path = f"agents[{i}]"
        if not isinstance(a, dict):
            raise MapError(f"{path}: expected object")
        caps_raw = a.get("capabilities", [])
        if not isinstance(caps_raw, list):
            raise MapError(f"{path}.capabilities: expected list")
        caps = frozenset(caps_raw)
        if not caps:
            raise MapError(f"{path}.capabilities: agent needs at least one capability")
        unknown = caps - set(CAPABILITY_NAMES)
        if unknown:
            raise MapError(f"{path}.capabilities: unknown capabilities {sorted(unknown)}")
        agents.append(
            AgentDef(
                index=i,
                capabilities=caps,
                view_range=_as_num(a.get("view_range", DEFAULT_VIEW_RANGE), f"{path}.view_range", lo=1e-6),
                max_alt=_as_num(a.get("max_alt", DEFAULT_MAX_ALT), f"{path}.max_alt"),
                spawn=_parse_spawn(a.get("spawn", "random"), path),
                deployment=_as_num(a.get("deployment", 0.0), f"{path}.deployment", lo=0.0),
            )
        )

    raw_pois = cfg.get("pois")
    if not isinstance(raw_pois, list) or not raw_pois:
        raise MapError("pois: expected non-empty list")
    pois = []
    for i, p in enumerate(raw_pois):
        path = f"pois[{i}]"
        if not isinstance(p, dict):
            raise MapError(f"{path}: expected object")
        savable = p.get("savable_by")
        if savable is None:
            mask = (1 << len(agents)) - 1
        else:
            if not isinstance(savable, list) or not savable:
                raise MapError(f"{path}.savable_by: expected non-empty list of agent indices")
            mask = 0
            for j in savable:
                j = int(_as_num(j, f"{path}.savable_by", lo=0))
                if j >= len(agents):
                    raise MapError(
                        f"{path}.savable_by: agent index {j} undefined (only {len(agents)} agents)"
                    )
                mask |= 1 << j
        pois.append(
            POIDef(
                index=i,
                spawn=_parse_spawn(p.get("spawn", "random"), path),
                moves=_as_bool(p.get("moves", False), f"{path}.moves"),
                savable_by=mask,
            )
        )

    n_types = len(type_table)
    raw_speeds = cfg.get("speeds")
    if raw_speeds is None:
        speeds = np.ones((len(agents), n_types), dtype=np.float32)
    else:
        if not isinstance(raw_speeds, list) or len(raw_speeds) != len(agents):
            raise MapError(f"speeds: expected {len(agents)} rows (one per agent)")
        for i, row in enumerate(raw_speeds):
            if not isinstance(row, list) or len(row) != n_types:
                raise MapError(f"speeds[{i}]: expected {n_types} entries (one per tile type)")
            for j, s in enumerate(row):
                _as_num(s, f"speeds[{i}][{j}]", lo=0.0)
        speeds = np.asarray(raw_speeds, dtype=np.float32)

    horizon = int(_as_num(cfg.get("horizon", DEFAULT_HORIZON), "horizon", lo=1))

    raw_rewards = cfg.get("rewards", {})
    if not isinstance(raw_rewards, dict):
        raise MapError("rewards: expected object")
    rewards = RewardConfig(
        r_tile=_as_num(raw_rewards.get("tile", DEFAULT_R_TILE), "rewards.tile", lo=0.0),
        r_found=_as_num(raw_rewards.get("found", DEFAULT_R_FOUND), "rewards.found", lo=0.0),
        r_saved=_as_num(raw_rewards.get("saved", DEFAULT_R_SAVED), "rewards.saved", lo=0.0),
        per_agent=_as_bool(raw_rewards.get("per_agent", False), "rewards.per_agent"),
    )

    return {
        "type_table": tuple(type_table),
        "speeds": speeds,
        "agents": tuple(agents),
        "pois": tuple(pois),
        "horizon": horizon,
        "rewards": rewards,
        "alt_scale": _as_num(cfg.get("alt_scale", DEFAULT_ALT_SCALE), "alt_scale", lo=1e-6),
        "eye_height": _as_num(cfg.get("eye_height", DEFAULT_EYE_HEIGHT), "eye_height", lo=0.0),
        "poi_speed": _as_num(cfg.get("poi_speed", DEFAULT_POI_SPEED), "poi_speed", lo=0.0),
        "undifferentiated_agents": _as_bool(
            cfg.get("undifferentiated_agents", False), "undifferentiated_agents"
        ),
    }


def parse_map_image(image_bytes: bytes, type_table) -> np.ndarray:
    """Decode a PNG into a (H, W) grid of type ids via exact RGB lookup."""
    try:
        img = Image.open(io.BytesIO(image_bytes))
        img.load()
    except Exception as e:
        raise MapError(f"cannot decode map image: {e}") from e
    img = img.convert("RGB")  # alpha ignored
    px = np.asarray(img, dtype=np.uint8)  # (H, W, 3), row 0 = y 0
    H, W = px.shape[:2]
    lut = {t.rgb: t.type_id for t in type_table}
    codes = px[:, :, 0].astype(np.int64) << 16 | px[:, :, 1].astype(np.int64) << 8 | px[:, :, 2]
    grid = np.full((H, W), -1, dtype=np.int16)
    for (r, g, b), tid in lut.items():
        grid[codes == (r << 16 | g << 8 | b)] = tid
    if (grid < 0).any():
        ys, xs = np.nonzero(grid < 0)
        y, x = int(ys[0]), int(xs[0])
        rgb = tuple(int(c) for c in px[y, x])
        raise MapError(f"unmatched RGB at ({x},{y}): {rgb}")
    return grid


def _tile_traversable(t: TileTypeDef, caps: frozenset[str]) -> bool:
    if t.blocking:
        return False
    return ("walk" in caps and t.walkable) or ("fly" in caps and t.flyable) or (
        "swim" in caps and t.aquatic
    )


def build_map_spec(image_bytes: bytes, json_bytes: bytes | str) -> MapSpec:
    """Compose the two parsers and cross-validate spawns against the grid."""
    cfg = parse_config(json_bytes)
    grid = parse_map_image(image_bytes, cfg["type_table"])
    H, W = grid.shape
    spec = MapSpec(W=W, H=H, tile_type_grid=grid, **cfg)
    types = {t.type_id: t for t in spec.type_table}

    for a in spec.agents:
        if a.spawn is not None:
            x, y = a.spawn
            if not (0 <= x < W and 0 <= y < H):
                raise MapError(f"agents[{a.index}].spawn: ({x},{y}) outside {W}x{H} map")
            t = types[int(grid[y, x])]
            if not _tile_traversable(t, a.capabilities):
                raise MapError(
                    f"agents[{a.index}].spawn: tile ({x},{y}) type {t.type_id} not traversable "
                    f"with capabilities {sorted(a.capabilities)}"
                )
        # random spawns need at least one traversable tile
        elif not any(
            _tile_traversable(types[int(tid)], a.capabilities) for tid in np.unique(grid)
        ):
            raise MapError(f"agents[{a.index}]: no traversable tile for random spawn")

    walkable_ids = {t.type_id for t in spec.type_table if t.walkable and not t.blocking}
    for p in spec.pois:
        if p.spawn is not None:
            x, y = p.spawn
            if not (0 <= x < W and 0 <= y < H):
                raise MapError(f"pois[{p.index}].spawn: ({x},{y}) outside {W}x{H} map")
            if int(grid[y, x]) not in walkable_ids:
                raise MapError(f"pois[{p.index}].spawn: tile ({x},{y}) is not walkable")
        elif not any(int(tid) in walkable_ids for tid in np.unique(grid)):
            raise MapError(f"pois[{p.index}]: no walkable tile for random spawn")
    return spec


def spec_to_config_json(spec: MapSpec) -> str:
    """Serialize the config side of a MapSpec (round-trip counterpart)."""
    def spawn_out(s):
        return "random" if s is None else list(s)

    cfg = {
        "tile_types": [
            {
                "id": t.type_id,
                "rgb": list(t.rgb),
                "walkable": t.walkable,
                "flyable": t.flyable,
                "aquatic": t.aquatic,
                "blocking": t.blocking,
                "altitude": t.altitude,
                "stuck_probability": t.stuck_probability,
                "dangerous": t.dangerous,
            }
            for t in spec.type_table
        ],
        "speeds": spec.speeds.astype(float).tolist(),
        "agents": [
            {
                "capabilities": sorted(a.capabilities),
                "view_range": a.view_range,
                "max_alt": a.max_alt,
                "spawn": spawn_out(a.spawn),
                "deployment": a.deployment,
            }
            for a in spec.agents
        ],
        "pois": [
            {
                "spawn": spawn_out(p.spawn),
                "moves": p.moves,
                "savable_by": [i for i in range(MAX_AGENTS) if p.savable_by >> i & 1],
            }
            for p in spec.pois
        ],
        "horizon": spec.horizon,
        "rewards": {
            "tile": spec.rewards.r_tile,
            "found": spec.rewards.r_found,
            "saved": spec.rewards.r_saved,
            "per_agent": spec.rewards.per_agent,
        },
        "alt_scale": spec.alt_scale,
        "eye_height": spec.eye_height,
        "poi_speed": spec.poi_speed,
        "undifferentiated_agents": spec.undifferentiated_agents,
    }
    return json.dumps(cfg, indent=2)


def spec_to_image_bytes(spec: MapSpec) -> bytes:
    """Render the tile grid back to a PNG using the type table colors."""
    lut = np.zeros((128, 3), dtype=np.uint8)
    for t in spec.type_table:
        lut[t.type_id] = t.rgb
    px = lut[spec.tile_type_grid]
    buf = io.BytesIO()
    Image.fromarray(px, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
