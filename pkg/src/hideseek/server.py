"""Length-prefixed stdio protocol exposing the pool to other processes.

Run as `python3 -m hideseek.server`. One pool per process. Frames are binary:

    u32 LE payload length (bytes after the length field)
    u8  frame type
    payload

Request types:
    0x01 CREATE  payload = UTF-8 JSON:
                 {"map": {...}, "vec": {...}} where map is one of
                   {"builtin": "bench", "agents": N, "size": S, "pois": P,
                    "horizon": H, "seed": K}
                   {"config": <config object>, "image_b64": "<png>"}
                   {"config_path": "...", "image_path": "..."}
                 and vec carries n_envs, n_workers, mode, seed, desync,
                 auto_reset (all optional but n_envs).
    0x02 RESET   empty payload
    0x03 STEP    payload = float32 LE actions, shape (n_envs, n_agents, 3)
    0x04 CLOSE   empty payload

Response types:
    0x81 CREATED JSON {"abi", "n_envs", "n_agents", "block_size",
                       "descriptors": [{"role", "dtype", "shape", "offset",
                                        "nbytes"}, ...]}
    0x82/0x83    reset/step result: the output block — every descriptor's
                 bytes at its stated offset, stable layout for the pool's life
    0x84 CLOSED  empty
    0xFF ERROR   JSON {"error": "..."}

The descriptor block covers exactly the buffers the engine writes each step
(rewards, dones, observation tensors for the pool's mode), so a client can
keep one allocation and alias typed views into it.
"""

from __future__ import annotations

import base64
import json
import struct
import sys

import numpy as np

from .bench import benchmark_spec
from .mapspec import MapError, build_map_spec
from .observation import ContractError, ObsMode
from .vecenv import EnvPool, VecConfig

ABI = "hideseek-bridge-1"

REQ_CREATE = 0x01
REQ_RESET = 0x02
REQ_STEP = 0x03
REQ_CLOSE = 0x04
RSP_CREATED = 0x81
RSP_RESET = 0x82
RSP_STEP = 0x83
RSP_CLOSED = 0x84
RSP_ERROR = 0xFF

_ALIGN = 8


def _spec_from_json(m: dict):
    if m.get("builtin") == "bench":
        return benchmark_spec(
            int(m.get("agents", 1)),
            size=int(m.get("size", 16)),
            n_pois=int(m.get("pois", 2)),
            horizon=int(m.get("horizon", 128)),
            seed=int(m.get("seed", 1234)),
        )
    if "config" in m and "image_b64" in m:
        cfg = m["config"]
        if not isinstance(cfg, str):
            cfg = json.dumps(cfg)
        return build_map_spec(base64.b64decode(m["image_b64"]), cfg)
    if "config_path" in m and "image_path" in m:
        with open(m["image_path"], "rb") as f:
            image = f.read()
        with open(m["config_path"], "rb") as f:
            cfg = f.read()
        return build_map_spec(image, cfg)
    raise ContractError("map must carry builtin, inline config+image_b64, or paths")


class _Session:
    def __init__(self):
        self.pool: EnvPool | None = None
        self.descriptors: list[dict] = []
        self.block_size = 0
        self._arrays: list[np.ndarray] = []
        self._block: bytes | None = None

    def create(self, payload: bytes) -> bytes:
        req = json.loads(payload.decode("utf-8"))
        spec = _spec_from_json(req.get("map", {}))
        v = req.get("vec", {})
        cfg = VecConfig(
            n_envs=int(v["n_envs"]),
            n_workers=int(v.get("n_workers", 1)),
            mode=ObsMode.parse(str(v.get("mode", "DecentralizedNoState"))),
            seed=int(v.get("seed", 0)),
            desync=bool(v.get("desync", True)),
            auto_reset=bool(v.get("auto_reset", True)),
        )
        if self.pool is not None:
            self.pool.close()
        self.pool = EnvPool(spec, cfg)
        self._build_descriptors()
        return json.dumps(
            {
                "abi": ABI,
                "n_envs": self.pool.n_envs,
                "n_agents": spec.n_agents,
                "block_size": self.block_size,
                "descriptors": self.descriptors,
            }
        ).encode("utf-8")

    def _build_descriptors(self):
        out = self.pool.vec_reset()  # materializes buffer identities
        named = [
            ("rewards", out.rewards),
            ("terminated", out.terminated),
            ("truncated", out.truncated),
        ]
        if out.agent_rewards is not None:
            named.append(("agent_rewards", out.agent_rewards))
        for role, arr in (
            ("obs_image", out.obs_image),
            ("obs_logical", out.obs_logical),
            ("shared_image", out.shared_image),
            ("state_image", out.state_image),
        ):
            if arr is not None:
                named.append((role, arr))
        self.descriptors = []
        self._arrays = []
        off = 0
        for role, arr in named:
            self.descriptors.append(
                {
                    "role": role,
                    "dtype": arr.dtype.name,
                    "shape": list(arr.shape),
                    "offset": off,
                    "nbytes": arr.nbytes,
                }
            )
            self._arrays.append(arr)
            off += (arr.nbytes + _ALIGN - 1) & ~(_ALIGN - 1)
        self.block_size = off
        self._block = bytearray(off)

    def _emit_block(self) -> bytes:
        for d, arr in zip(self.descriptors, self._arrays):
            o = d["offset"]
            self._block[o : o + d["nbytes"]] = arr.tobytes()
        return bytes(self._block)

    def reset(self) -> bytes:
        self._require_pool().vec_reset()
        return self._emit_block()

    def step(self, payload: bytes) -> bytes:
        pool = self._require_pool()
        A = pool.arena.layout.n_agents
        expect = pool.n_envs * A * 3 * 4
        if len(payload) != expect:
            raise ContractError(f"actions payload {len(payload)} bytes, expected {expect}")
        acts = np.frombuffer(payload, dtype="<f4").reshape(pool.n_envs, A, 3)
        pool.vec_step(acts)
        return self._emit_block()

    def close(self) -> bytes:
        if self.pool is not None:
            self.pool.close()
            self.pool = None
        return b""

    def _require_pool(self) -> EnvPool:
        if self.pool is None:
            raise ContractError("no pool; send CREATE first")
        return self.pool


def _read_exact(stream, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def _write_frame(stream, ftype: int, payload: bytes) -> None:
    stream.write(struct.pack("<I", len(payload) + 1))
    stream.write(bytes([ftype]))
    stream.write(payload)
    stream.flush()


def serve(stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    session = _Session()
    responses = {
        REQ_CREATE: (session.create, RSP_CREATED, True),
        REQ_RESET: (lambda p: session.reset(), RSP_RESET, False),
        REQ_STEP: (session.step, RSP_STEP, True),
        REQ_CLOSE: (lambda p: session.close(), RSP_CLOSED, False),
    }
    while True:
        head = _read_exact(stdin, 4)
        if head is None:
            break
        (length,) = struct.unpack("<I", head)
        body = _read_exact(stdin, length)
        if body is None or length < 1:
            break
        ftype, payload = body[0], body[1:]
        handler = responses.get(ftype)
        try:
            if handler is None:
                raise ContractError(f"unknown frame type {ftype:#x}")
            fn, rsp, _ = handler
            _write_frame(stdout, rsp, fn(payload))
        except (ContractError, MapError, ValueError, OSError) as e:
            _write_frame(
                stdout, RSP_ERROR, json.dumps({"error": str(e)}).encode("utf-8")
            )
        if ftype == REQ_CLOSE:
            break


if __name__ == "__main__":
    serve()
