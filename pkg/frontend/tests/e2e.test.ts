/**
 * Full-stack check: train a tiny checkpoint, start the editing service,
 * then verify that painting a mask here and posting it yields byte-for-byte
 * the same PNG as the command line `edit` tool given the same inputs.
 *
 * Needs the python package installed (`pip install -e .`). Skip with
 * SKIP_E2E=1 when only the pure frontend units are wanted.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { createServer } from "node:net";
import { mkdtempSync, readFileSync, writeFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { EditorApi } from "../src/api";
import { createMask, paintBox, maskToGray } from "../src/mask";
import { encodeGrayPng, base64ToBytes } from "../src/png";

const PY = process.env.PYTHON ?? "python3";
const SIZE = 8;

const TRAIN_CONFIG = `network:
  image_size: ${SIZE}
  stylemap_hw: [2, 2]
  stylemap_channels: 4
  latent_dim: 8
  mapping_layers: 2
  mapping_hidden: 8
  channel_base: 64
  channel_max: 16
train:
  total_steps: 2
  batch_size: 2
  log_every: 1
data:
  train_count: 8
  val_count: 2
  test_count: 2
`;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.on("error", reject);
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr === null || typeof addr === "string") {
        reject(new Error("no port"));
        return;
      }
      srv.close(() => resolve(addr.port));
    });
  });
}

async function waitForHealth(api: EditorApi, proc: ChildProcess, ms: number): Promise<void> {
  const deadline = Date.now() + ms;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    if (proc.exitCode !== null) {
      throw new Error(`service exited early with code ${proc.exitCode}`);
    }
    try {
      await api.health();
      return;
    } catch (e) {
      lastError = e;
      await new Promise((r) => setTimeout(r, 500));
    }
  }
  throw new Error(`service never became healthy: ${lastError}`);
}

describe.skipIf(process.env.SKIP_E2E === "1")("mask editor against the live service", () => {
  let dir: string;
  let ckpt: string;
  let server: ChildProcess | null = null;
  let api: EditorApi;

  beforeAll(async () => {
    dir = mkdtempSync(join(tmpdir(), "maskeditor-e2e-"));
    writeFileSync(join(dir, "cfg.yaml"), TRAIN_CONFIG);
    execFileSync(PY, ["-m", "stylemap.cli", "train", "--config", join(dir, "cfg.yaml"), "--out", join(dir, "run")], {
      stdio: "pipe",
    });
    ckpt = join(dir, "run", "last.ckpt");
    execFileSync(
      PY,
      ["-m", "stylemap.cli", "toy-export", "--split", "test", "--count", "2", "--size", String(SIZE), "--out", join(dir, "imgs")],
      { stdio: "pipe" },
    );

    const port = await freePort();
    server = spawn(PY, ["-m", "stylemap.cli", "serve", "--ckpt", ckpt, "--port", String(port)], {
      stdio: "pipe",
    });
    api = new EditorApi(`http://127.0.0.1:${port}`);
    await waitForHealth(api, server, 120_000);
  }, 240_000);

  afterAll(() => {
    server?.kill("SIGTERM");
    if (dir) rmSync(dir, { recursive: true, force: true });
  });

  it(
    "a painted mask renders byte-identically to the command line edit",
    async () => {
      const info = await api.health();
      expect(info.image_size).toBe(SIZE);

      const originalPng = new Uint8Array(readFileSync(join(dir, "imgs", "test_00000.png")));
      const referencePng = new Uint8Array(readFileSync(join(dir, "imgs", "test_00001.png")));
      const original = await api.project(originalPng);
      const reference = await api.project(referencePng);

      // paint the right half, exactly as the box tool does
      const mask = createMask(SIZE, SIZE);
      paintBox(mask, SIZE / 2, 0, SIZE - 1, SIZE - 1, 1);
      const maskPng = encodeGrayPng(maskToGray(mask), SIZE, SIZE);
      const maskPath = join(dir, "mask.png");
      writeFileSync(maskPath, maskPng);

      const served = base64ToBytes(
        await api.edit({
          originalId: original.id,
          referenceId: reference.id,
          maskPng,
          space: "wplus",
        }),
      );

      const cliOut = join(dir, "cli_edit.png");
      execFileSync(
        PY,
        [
          "-m", "stylemap.cli", "edit",
          "--ckpt", ckpt,
          "--original", join(dir, "imgs", "test_00000.png"),
          "--reference", join(dir, "imgs", "test_00001.png"),
          "--mask", maskPath,
          "--space", "wplus",
          "--out", cliOut,
        ],
        { stdio: "pipe" },
      );
      const cliBytes = new Uint8Array(readFileSync(cliOut));

      expect(served.length).toBe(cliBytes.length);
      expect(served).toEqual(cliBytes);
    },
    120_000,
  );

  it(
    "an empty mask is rejected as a no-op by the client before any request",
    async () => {
      // the UI short-circuits empty masks; the service itself must still
      // treat an all-zero mask as the identity, which the reconstruction
      // from /project already is
      const originalPng = new Uint8Array(readFileSync(join(dir, "imgs", "test_00000.png")));
      const original = await api.project(originalPng);
      const empty = encodeGrayPng(new Uint8Array(SIZE * SIZE), SIZE, SIZE);
      const served = await api.edit({
        originalId: original.id,
        referenceId: original.id,
        maskPng: empty,
        space: "wplus",
      });
      expect(served).toBe(original.reconstruction);
    },
    60_000,
  );
});
