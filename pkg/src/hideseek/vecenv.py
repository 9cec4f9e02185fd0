"""Batched environment pool: worker threads, scratch gathering, auto-reset.

All environments live in one arena; a step farms contiguous env chunks out to
a small thread pool running the nogil kernels. Workers write rewards and done
flags into per-chunk scratch rows (64-byte padded, so no two workers touch
the same cache block), then a single serial pass folds scratch into the
caller-facing output arrays. Outputs are therefore a pure function of
(seed, spec, action sequence) regardless of worker count.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .arena import EnvironmentArena
from .mapspec import MapSpec
from .observation import KNOWLEDGE_FOR_MODE, ContractError, ObsLayout, ObsMode
from .rng import stream_seed

WAIT_POLICIES = ("spin", "yield")


@dataclass(frozen=True)
class VecConfig:
    n_envs: int
    n_workers: int = 0  # 0 = hardware default
    mode: ObsMode = ObsMode.DecentralizedNoState
    seed: int = 0
    desync: bool = True
    auto_reset: bool = True
    wait_policy: str = "yield"
    undifferentiated: bool = False
    # benchmark ablation hooks
    stride_align: int = 256
    serial_init: bool = False
    diff_fill: bool = False
    tuple_pack: bool = False


@dataclass
class StepOutputs:
    """Caller-facing result arrays; identities are stable for the pool's life."""

    rewards: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    agent_rewards: np.ndarray | None = None
    obs_image: np.ndarray | None = None
    obs_logical: np.ndarray | None = None
    shared_image: np.ndarray | None = None
    state_image: np.ndarray | None = None


class _Workers:
    """Fixed helper threads pulling work items from a shared cursor.

    The caller participates in every run, so n_helpers = workers - 1. The
    wait policy controls how idle threads wait: "yield" parks on a condition
    variable, "spin" busy-polls the epoch counter.
    """

    def __init__(self, n_helpers: int, wait_policy: str):
        if wait_policy not in WAIT_POLICIES:
            raise ContractError(f"wait_policy must be one of {WAIT_POLICIES}")
        self.wait_policy = wait_policy
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._epoch = 0
        self._fn = None
        self._n_items = 0
        self._cursor = 0
        self._done = 0
        self._errors: list[BaseException] = []
        self._stop = False
        self._threads = [
            threading.Thread(target=self._loop, daemon=True) for _ in range(max(0, n_helpers))
        ]
        for t in self._threads:
            t.start()

    def _pull(self, epoch: int) -> int:
        with self._lock:
            # a thread may outlive its epoch by one pull; never let it grab
            # work (and the stale fn) from the next one
            if self._epoch != epoch:
                return -1
            i = self._cursor
            if i >= self._n_items:
                return -1
            self._cursor = i + 1
            return i

    def _work_item(self, fn, i: int) -> None:
        try:
            fn(i)
        except BaseException as exc:
            with self._lock:
                self._errors.append(exc)
        finally:
            with self._lock:
                self._done += 1
                if self._done == self._n_items:
                    self._cond.notify_all()

    def _loop(self) -> None:
        seen = 0
        while True:
            if self.wait_policy == "spin":
                while self._epoch == seen and not self._stop:
                    pass
            else:
                with self._cond:
                    while self._epoch == seen and not self._stop:
                        self._cond.wait()
            if self._stop:
                return
            seen = self._epoch
            fn = self._fn
            while True:
                i = self._pull(seen)
                if i < 0:
                    break
                self._work_item(fn, i)

    def run(self, fn, n_items: int) -> None:
        if n_items <= 0:
            return
        if not self._threads or n_items == 1:
            for i in range(n_items):
                fn(i)
            return
        with self._cond:
            self._fn = fn
            self._n_items = n_items
            self._cursor = 0
            self._done = 0
            self._errors = []
            self._epoch += 1
            epoch = self._epoch
            self._cond.notify_all()
        while True:
            i = self._pull(epoch)
            if i < 0:
                break
            self._work_item(fn, i)
        if self.wait_policy == "spin":
            while self._done < n_items:
                pass
        else:
            with self._cond:
                while self._done < n_items:
                    self._cond.wait()
        if self._errors:
            raise self._errors[0]

    def close(self) -> None:
        if self._stop:
            return
        with self._cond:
            self._stop = True
            self._cond.notify_all()
        for t in self._threads:
            t.join()
        self._threads = []


def _chunk_plan(n_envs: int, n_workers: int) -> tuple[np.ndarray, np.ndarray]:
    n_chunks = min(n_envs, max(16, 4 * n_workers))
    base = n_envs // n_chunks
    extra = n_envs % n_chunks
    lo = np.zeros(n_chunks, dtype=np.int64)
    hi = np.zeros(n_chunks, dtype=np.int64)
    pos = 0
    for c in range(n_chunks):
        size = base + (1 if c < extra else 0)
        lo[c] = pos
        hi[c] = pos + size
        pos += size
    return lo, hi


def _pad_to(n: int, quantum: int) -> int:
    return max(quantum, (n + quantum - 1) & ~(quantum - 1))


class EnvPool:
    """n_envs environments behind one reset/step/close surface."""

    def __init__(self, spec: MapSpec, config: VecConfig):
        if config.n_envs < 1:
            raise ContractError(f"n_envs must be >= 1, got {config.n_envs}")
        mode = ObsMode(config.mode)
        self.spec = spec
        self.config = config
        self.mode = mode
        self.n_envs = config.n_envs
        self.n_workers = config.n_workers if config.n_workers > 0 else (os.cpu_count() or 1)

        self.arena = EnvironmentArena(
            spec,
            config.n_envs,
            knowledge_mode=KNOWLEDGE_FOR_MODE[mode],
            stride_align=config.stride_align,
            zero_fill=False,
        )
        lay = self.arena.layout
        W, H, A, P, T = lay.W, lay.H, lay.n_agents, lay.n_pois, lay.n_types
        n = self.n_envs
        self.obs_layout = ObsLayout(T, A, H, W, config.undifferentiated)

        self._chunks_lo, self._chunks_hi = _chunk_plan(n, self.n_workers)
        n_chunks = self._chunks_lo.shape[0]
        cap = int((self._chunks_hi - self._chunks_lo).max())

        self._srew = np.zeros((n_chunks, _pad_to(cap * A, 16)), dtype=np.float32)
        self._sterm = np.zeros((n_chunks, _pad_to(cap, 64)), dtype=np.uint8)
        self._strunc = np.zeros((n_chunks, _pad_to(cap, 64)), dtype=np.uint8)

        self._rng = np.zeros(n, dtype=np.uint64)
        vb = lay.vis_bytes
        self._cur_vis = self.arena.cur_vis
        # diff filling only applies where per-agent images exist
        diff_fill = config.diff_fill and mode in (
            ObsMode.DecentralizedNoState, ObsMode.DecentralizedWithState
        )
        self._new_know = np.zeros((n, A, vb if diff_fill else 1), dtype=np.uint8)
        self._track_new = 1 if diff_fill else 0
        if diff_fill:
            self._marks = np.zeros((n, A, P + A, 3), dtype=np.int32)
            self._mark_n = np.zeros((n, A), dtype=np.int32)
        else:
            self._marks = np.zeros((1, 1, 1, 3), dtype=np.int32)
            self._mark_n = np.zeros((1, 1), dtype=np.int32)

        ol = self.obs_layout
        if mode in (ObsMode.DecentralizedNoState, ObsMode.DecentralizedWithState):
            self._dec_img = np.zeros((n, A, ol.agent_channels, H, W), dtype=np.float32)
        else:
            self._dec_img = np.zeros((0, 1, 1, 1, 1), dtype=np.float32)
        if mode in (ObsMode.CentralizedNoState, ObsMode.CentralizedWithState):
            self._cent_img = np.zeros((n, ol.shared_channels, H, W), dtype=np.float32)
        else:
            self._cent_img = np.zeros((0, 1, 1, 1), dtype=np.float32)
        if mode in (ObsMode.DecentralizedWithState, ObsMode.CentralizedWithState, ObsMode.StateOnly):
            self._state_img = np.zeros((n, ol.shared_channels, H, W), dtype=np.float32)
        else:
            self._state_img = np.zeros((0, 1, 1, 1), dtype=np.float32)
        if mode.value <= ObsMode.CentralizedWithState.value:
            self._logical = np.zeros((n, A, ol.logical_len), dtype=np.float32)
        else:
            self._logical = np.zeros((0, 1, 1), dtype=np.float32)

        self.per_agent_rewards = bool(spec.rewards.per_agent)
        self._rewards = np.zeros(n, dtype=np.float32)
        self._agent_rewards = (
            np.zeros((n, A), dtype=np.float32)
            if self.per_agent_rewards
            else np.zeros((1, 1), dtype=np.float32)
        )
        self._terminated = np.zeros(n, dtype=np.uint8)
        self._truncated = np.zeros(n, dtype=np.uint8)

        km = {"none": 0, "per-agent": 1, "shared": 2}[lay.knowledge_mode.value]
        self._dims = (W, H, A, P, T, spec.horizon, km, vb)
        r = spec.rewards
        self._consts = (
            np.float32(spec.alt_scale), np.float32(spec.eye_height), np.float32(spec.poi_speed),
            np.float32(r.r_tile), np.float32(r.r_found), np.float32(r.r_saved),
        )
        self._aux = (
            self._rng, self._cur_vis, self._new_know,
            self.arena.poi_rec_stamp, self.arena.mate_know,
        )
        self._obs_tuple = (self._dec_img, self._cent_img, self._state_img, self._logical)
        self._undiff = 1 if config.undifferentiated else 0

        self._workers = _Workers(self.n_workers - 1, config.wait_policy)
        self._closed = False
        self._was_reset = False

        # first-touch the slab from the threads that will step it (or from
        # one thread under the serial_init ablation)
        slab2d = self.arena.slab2d
        if config.serial_init:
            _kernels.zero_range(0, n, slab2d)
        else:
            clo, chi = self._chunks_lo, self._chunks_hi
            self._workers.run(lambda c: _kernels.zero_range(clo[c], chi[c], slab2d), n_chunks)

    # -- lifecycle ---------------------------------------------------------

    def _check_open(self):
        if self._closed:
            raise ContractError("pool is closed")

    def vec_reset(self) -> StepOutputs:
        self._check_open()
        for i in range(self.n_envs):
            self._rng[i] = stream_seed(self.config.seed, i)
        statics = self.arena.kernel_statics
        views = self.arena.kernel_views
        dims, consts, aux, obs = self._dims, self._consts, self._aux, self._obs_tuple
        mode_i, undiff = int(self.mode), self._undiff
        desync = 1 if self.config.desync else 0
        clo, chi = self._chunks_lo, self._chunks_hi

        def job(c):
            _kernels.reset_range(
                clo[c], chi[c], dims, consts, statics, views, aux, obs,
                mode_i, undiff, desync,
            )

        self._workers.run(job, clo.shape[0])
        if self._track_new:
            _kernels.rebuild_marks_range(
                0, self.n_envs, dims, views, aux, self._dec_img, undiff,
                self._marks, self._mark_n,
            )
        self._rewards[:] = 0
        if self.per_agent_rewards:
            self._agent_rewards[:] = 0
        self._terminated[:] = 0
        self._truncated[:] = 0
        self._was_reset = True
        return self._outputs()

    def vec_step(self, actions: np.ndarray) -> StepOutputs:
        self._check_open()
        if not self._was_reset:
            raise ContractError("vec_reset must run before vec_step")
        A = self.arena.layout.n_agents
        actions = np.asarray(actions, dtype=np.float32)
        if actions.shape != (self.n_envs, A, 3):
            raise ContractError(
                f"actions shape {actions.shape} != ({self.n_envs}, {A}, 3)"
            )
        if not actions.flags.c_contiguous:
            actions = np.ascontiguousarray(actions)

        statics = self.arena.kernel_statics
        views = self.arena.kernel_views
        dims, consts, aux, obs = self._dims, self._consts, self._aux, self._obs_tuple
        scratch = (self._srew, self._sterm, self._strunc)
        mode_i, undiff = int(self.mode), self._undiff
        auto_reset = 1 if self.config.auto_reset else 0
        track_new = self._track_new
        clo, chi = self._chunks_lo, self._chunks_hi

        marks, mark_n = self._marks, self._mark_n

        def job(c):
            _kernels.step_range(
                clo[c], chi[c], c, actions, dims, consts, statics, views, aux,
                scratch, obs, mode_i, undiff, auto_reset, track_new, marks, mark_n,
            )

        self._workers.run(job, clo.shape[0])
        _kernels.copy_scratch(
            clo, chi, A, self._srew, self._sterm, self._strunc,
            self._rewards, self._agent_rewards, self._terminated, self._truncated,
            1 if self.per_agent_rewards else 0,
        )
        if self.config.tuple_pack:
            self._tuple_pack_pass()
        return self._outputs()

    def _tuple_pack_pass(self):
        """Ablation: route outputs through boxed Python tuples and back.

        Reproduces the per-step repack/convert overhead of tuple-based
        bindings. Values are unchanged; only the copy cost is added.
        """
        boxed = [
            (float(self._rewards[e]), bool(self._terminated[e]), bool(self._truncated[e]))
            for e in range(self.n_envs)
        ]
        rew = np.array([b[0] for b in boxed], dtype=np.float32)
        term = np.array([b[1] for b in boxed], dtype=np.uint8)
        trunc = np.array([b[2] for b in boxed], dtype=np.uint8)
        self._rewards[:] = rew
        self._terminated[:] = term
        self._truncated[:] = trunc

    def _outputs(self) -> StepOutputs:
        return StepOutputs(
            rewards=self._rewards,
            terminated=self._terminated,
            truncated=self._truncated,
            agent_rewards=self._agent_rewards if self.per_agent_rewards else None,
            obs_image=self._dec_img if self._dec_img.shape[0] else None,
            obs_logical=self._logical if self._logical.shape[0] else None,
            shared_image=self._cent_img if self._cent_img.shape[0] else None,
            state_image=self._state_img if self._state_img.shape[0] else None,
        )

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._workers.close()
        # drop the big allocations; output identities end with the pool
        self.arena = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def make_pool(spec: MapSpec, config: VecConfig) -> EnvPool:
    return EnvPool(spec, config)
