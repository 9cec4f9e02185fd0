import { createHash } from "node:crypto";
import { execFileSync } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, describe, expect, it } from "vitest";

import { RemotePool } from "../src/pool.js";

const HERE = fileURLToPath(new URL(".", import.meta.url));

/** Deterministic action stream; values pass through Float32Array so the
 * bytes on disk are exactly what the bridge sends. */
function actionStream(seed: number) {
  let s = BigInt(seed) & 0xffffffffn;
  return () => {
    s = (s * 1664525n + 1013904223n) & 0xffffffffn;
    return Number(s) / 4294967296.0;
  };
}

function fillActions(out: Float32Array, next: () => number): void {
  for (let i = 0; i < out.length; i += 3) {
    out[i] = next() * 2 - 1;
    out[i + 1] = next() * 2 - 1;
    out[i + 2] = next();
  }
}

function hashBlock(hash: ReturnType<typeof createHash>, pool: RemotePool): void {
  const bytes = new Uint8Array(pool.block);
  for (const d of pool.info.descriptors) {
    hash.update(bytes.subarray(d.offset, d.offset + d.nbytes));
  }
}

describe("remote pool", () => {
  const pools: RemotePool[] = [];
  afterAll(async () => {
    await Promise.all(pools.map((p) => p.close()));
  });

  it("exposes the advertised output layout", async () => {
    const pool = await RemotePool.create(
      { builtin: "bench", agents: 2, size: 16, pois: 2, horizon: 64, seed: 7 },
      { n_envs: 3, seed: 11 },
    );
    pools.push(pool);
    const roles = pool.info.descriptors.map((d) => d.role);
    expect(roles.slice(0, 3)).toEqual(["rewards", "terminated", "truncated"]);
    expect(roles).toContain("obs_image");
    expect(pool.block.byteLength).toBe(pool.info.block_size);
    for (const d of pool.info.descriptors) {
      expect(d.offset % 8).toBe(0);
      const view = pool.views[d.role];
      expect(view.buffer).toBe(pool.block);
      expect(view.byteOffset).toBe(d.offset);
      expect(view.byteLength).toBe(d.nbytes);
    }
    expect((pool.views.rewards as Float32Array).length).toBe(3);
  });

  it("rejects malformed requests without killing the session", async () => {
    await expect(
      RemotePool.create({ builtin: "bench", agents: 99 }, { n_envs: 1 }),
    ).rejects.toThrow(/engine:/);

    const pool = await RemotePool.create(
      { builtin: "bench", agents: 1, size: 8, pois: 1, horizon: 16, seed: 3 },
      { n_envs: 2, seed: 1 },
    );
    pools.push(pool);
    await expect(pool.step(new Float32Array(5))).rejects.toThrow(/actions length/);
    await pool.reset();
    await pool.step(new Float32Array(2 * 1 * 3));
  });

  it("close is idempotent and fences further use", async () => {
    const pool = await RemotePool.create(
      { builtin: "bench", agents: 1, size: 8, pois: 1, horizon: 16, seed: 3 },
      { n_envs: 1, seed: 1 },
    );
    await pool.close();
    await pool.close();
    await expect(pool.reset()).rejects.toThrow(/closed/);
  });

  it(
    "keeps one stable zero-copy block across 10k steps",
    { timeout: 300_000 },
    async () => {
      const pool = await RemotePool.create(
        { builtin: "bench", agents: 2, size: 8, pois: 1, horizon: 32, seed: 5 },
        { n_envs: 2, n_workers: 1, mode: "Void", seed: 13 },
      );
      pools.push(pool);
      const views = await pool.reset();
      expect(views).toBe(pool.views);

      const next = actionStream(99);
      const actions = new Float32Array(2 * 2 * 3);
      const truncated = pool.views.truncated as Uint8Array;
      let truncations = 0;
      let rewardSum = 0;
      for (let t = 0; t < 10_000; t++) {
        fillActions(actions, next);
        const out = await pool.step(actions);
        // same objects every step, still aliasing the one block
        expect(out).toBe(pool.views);
        if (t % 1000 === 0) {
          for (const d of pool.info.descriptors) {
            expect(pool.views[d.role].buffer).toBe(pool.block);
          }
        }
        for (let e = 0; e < 2; e++) truncations += truncated[e];
        rewardSum += (pool.views.rewards as Float32Array)[0];
      }
      // horizon 32, so the block demonstrably updates in place
      expect(truncations).toBeGreaterThan(100);
      expect(Number.isFinite(rewardSum)).toBe(true);
    },
  );

  it(
    "matches an in-process engine run byte for byte",
    { timeout: 120_000 },
    async () => {
      const req = {
        map: { builtin: "bench", agents: 1, size: 8, pois: 1, horizon: 32, seed: 5 },
        vec: { n_envs: 2, n_workers: 1, mode: "DecentralizedNoState", seed: 9, desync: true, auto_reset: true },
      };
      const steps = 300;
      const pool = await RemotePool.create(req.map, req.vec);
      pools.push(pool);
      await pool.reset();

      const next = actionStream(4242);
      const all = new Float32Array(steps * 2 * 1 * 3);
      fillActions(all, next);

      const hash = createHash("sha256");
      hashBlock(hash, pool);
      for (let t = 0; t < steps; t++) {
        await pool.step(all.subarray(t * 6, (t + 1) * 6));
        hashBlock(hash, pool);
      }
      const bridgeDigest = hash.digest("hex");

      const dir = mkdtempSync(join(tmpdir(), "hideseek-bridge-"));
      try {
        const actionsPath = join(dir, "actions.f4");
        writeFileSync(actionsPath, Buffer.from(all.buffer, all.byteOffset, all.byteLength));
        const raw = execFileSync(
          "python3",
          [join(HERE, "reference_run.py"), actionsPath, String(steps), JSON.stringify(req)],
          { encoding: "utf-8" },
        );
        expect(JSON.parse(raw).digest).toBe(bridgeDigest);
      } finally {
        rmSync(dir, { recursive: true, force: true });
      }
    },
  );
});
