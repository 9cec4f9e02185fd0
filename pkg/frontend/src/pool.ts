/**
 * RemotePool: drive a hideseek engine pool running in a Python child process.
 *
 * The engine writes each step's outputs into one block whose layout is fixed
 * at CREATE time. The client keeps a single ArrayBuffer of that size and one
 * typed view per descriptor aliasing it; step()/reset() overwrite the block
 * in place and always hand back the same view objects (zero-copy contract on
 * this side of the pipe).
 */

import { ChildProcess, spawn } from "node:child_process";

import {
  ABI,
  Frame,
  FrameParser,
  REQ_CLOSE,
  REQ_CREATE,
  REQ_RESET,
  REQ_STEP,
  RSP_CLOSED,
  RSP_CREATED,
  RSP_ERROR,
  encodeFrame,
} from "./protocol.js";

export interface BufferDescriptor {
  role: string;
  dtype: string;
  shape: number[];
  offset: number;
  nbytes: number;
}

export interface CreatedInfo {
  abi: string;
  n_envs: number;
  n_agents: number;
  block_size: number;
  descriptors: BufferDescriptor[];
}

export interface MapRequest {
  builtin?: string;
  agents?: number;
  size?: number;
  pois?: number;
  horizon?: number;
  seed?: number;
  config?: unknown;
  image_b64?: string;
  config_path?: string;
  image_path?: string;
}

export interface VecRequest {
  n_envs: number;
  n_workers?: number;
  mode?: string;
  seed?: number;
  desync?: boolean;
  auto_reset?: boolean;
}

export type OutputView = Float32Array | Uint8Array | Int32Array;
export type OutputViews = Record<string, OutputView>;

const VIEW_FOR_DTYPE: Record<string, (b: ArrayBuffer, o: number, n: number) => OutputView> = {
  float32: (b, o, n) => new Float32Array(b, o, n),
  uint8: (b, o, n) => new Uint8Array(b, o, n),
  int32: (b, o, n) => new Int32Array(b, o, n),
};

export interface RemotePoolOptions {
  /** Python interpreter, default "python3". */
  python?: string;
  /** Extra environment for the child (e.g. PYTHONPATH). */
  env?: Record<string, string>;
}

interface Waiter {
  resolve: (f: Frame) => void;
  reject: (e: Error) => void;
}

export class RemotePool {
  readonly info: CreatedInfo;
  /** One stable allocation; every output view aliases it for the pool's life. */
  readonly block: ArrayBuffer;
  readonly views: OutputViews;

  private readonly blockBytes: Uint8Array;
  private closed = false;

  private constructor(
    private readonly proc: ChildProcess,
    private readonly channel: Channel,
    info: CreatedInfo,
  ) {
    this.info = info;
    this.block = new ArrayBuffer(info.block_size);
    this.blockBytes = new Uint8Array(this.block);
    const views: OutputViews = {};
    for (const d of info.descriptors) {
      const make = VIEW_FOR_DTYPE[d.dtype];
      if (!make) throw new Error(`unsupported dtype ${d.dtype} for ${d.role}`);
      const count = d.shape.reduce((a, b) => a * b, 1);
      views[d.role] = make(this.block, d.offset, count);
    }
    this.views = views;
  }

  static async create(
    map: MapRequest,
    vec: VecRequest,
    opts: RemotePoolOptions = {},
  ): Promise<RemotePool> {
    const proc = spawn(opts.python ?? "python3", ["-m", "hideseek.server"], {
      stdio: ["pipe", "pipe", "inherit"],
      env: { ...process.env, ...opts.env },
    });
    const channel = new Channel(proc);
    const rsp = await channel.request(
      REQ_CREATE,
      Buffer.from(JSON.stringify({ map, vec }), "utf-8"),
    );
    if (rsp.type !== RSP_CREATED) {
      channel.dispose();
      proc.kill();
      throw errorFrom(rsp);
    }
    const info = JSON.parse(rsp.payload.toString("utf-8")) as CreatedInfo;
    if (info.abi !== ABI) {
      channel.dispose();
      proc.kill();
      throw new Error(`ABI mismatch: server ${info.abi}, client ${ABI}`);
    }
    return new RemotePool(proc, channel, info);
  }

  /** Reset every environment; returns the (stable) output views. */
  async reset(): Promise<OutputViews> {
    return this.roundTrip(REQ_RESET, new Uint8Array(0));
  }

  /** Step with actions shaped (n_envs, n_agents, 3) float32, flattened. */
  async step(actions: Float32Array): Promise<OutputViews> {
    const expect = this.info.n_envs * this.info.n_agents * 3;
    if (actions.length !== expect) {
      throw new Error(`actions length ${actions.length}, expected ${expect}`);
    }
    return this.roundTrip(
      REQ_STEP,
      new Uint8Array(actions.buffer, actions.byteOffset, actions.byteLength),
    );
  }

  async close(): Promise<void> {
    if (this.closed) return;
    this.closed = true;
    try {
      const rsp = await this.channel.request(REQ_CLOSE, new Uint8Array(0));
      if (rsp.type !== RSP_CLOSED) throw errorFrom(rsp);
    } finally {
      this.channel.dispose();
      this.proc.stdin?.end();
      await new Promise<void>((resolve) => {
        this.proc.once("exit", () => resolve());
        setTimeout(() => {
          this.proc.kill();
          resolve();
        }, 2000).unref();
      });
    }
  }

  private async roundTrip(type: number, payload: Uint8Array): Promise<OutputViews> {
    if (this.closed) throw new Error("pool is closed");
    const rsp = await this.channel.request(type, payload);
    if (rsp.type === RSP_ERROR) throw errorFrom(rsp);
    if (rsp.payload.byteLength !== this.info.block_size) {
      throw new Error(
        `output block ${rsp.payload.byteLength} bytes, expected ${this.info.block_size}`,
      );
    }
    this.blockBytes.set(rsp.payload);
    return this.views;
  }
}

function errorFrom(f: Frame): Error {
  if (f.type === RSP_ERROR) {
    try {
      return new Error(`engine: ${JSON.parse(f.payload.toString("utf-8")).error}`);
    } catch {
      /* fall through */
    }
  }
  return new Error(`unexpected response frame 0x${f.type.toString(16)}`);
}

/** FIFO request/response matching over the child's stdio. */
class Channel {
  private parser = new FrameParser();
  private waiters: Waiter[] = [];
  private disposed = false;

  constructor(private readonly proc: ChildProcess) {
    proc.stdout!.on("data", (chunk: Buffer) => {
      let frames: Frame[];
      try {
        frames = this.parser.push(chunk);
      } catch (e) {
        this.failAll(e as Error);
        return;
      }
      for (const f of frames) this.waiters.shift()?.resolve(f);
    });
    proc.on("error", (e) => this.failAll(e));
    proc.on("exit", (code) => {
      this.failAll(new Error(`engine process exited (code ${code})`));
    });
  }

  request(type: number, payload: Uint8Array): Promise<Frame> {
    return new Promise<Frame>((resolve, reject) => {
      if (this.disposed) {
        reject(new Error("channel disposed"));
        return;
      }
      this.waiters.push({ resolve, reject });
      this.proc.stdin!.write(encodeFrame(type, payload));
    });
  }

  dispose(): void {
    this.disposed = true;
    this.failAll(new Error("channel disposed"));
  }

  private failAll(e: Error): void {
    const pending = this.waiters;
    this.waiters = [];
    for (const w of pending) w.reject(e);
  }
}
