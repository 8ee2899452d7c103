/**
 * Integration harness: spawn a real registry server through the egodb CLI
 * and talk to it exactly the way the deployed viewer does.
 */

import { spawn, execFile } from "node:child_process";
import { mkdtemp, mkdir, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";

import type { EpisodeRecord } from "../src/api.js";

const PYTHON = process.env.EGODB_PYTHON ?? "python3";

export interface ServerHandle {
  baseUrl: string;
  dbPath: string;
  storeDir: string;
  stop(): Promise<void>;
}

export async function spawnRegistryServer(token?: string): Promise<ServerHandle> {
  const workdir = await mkdtemp(join(tmpdir(), "egodb-viewer-test-"));
  const dbPath = join(workdir, "registry.db");
  const storeDir = join(workdir, "store");
  await mkdir(storeDir, { recursive: true });

  const args = ["-m", "egodb.cli", "serve", "--registry", dbPath, "--port", "0",
    "--store", storeDir];
  if (token) args.push("--token", token);
  const proc = spawn(PYTHON, args, { stdio: ["ignore", "pipe", "pipe"] });

  const baseUrl = await new Promise<string>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("registry server never came up")), 15000);
    let buffer = "";
    proc.stdout.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/listening on (http:\/\/[\d.]+:\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]);
      }
    });
    proc.stderr.on("data", () => undefined);
    proc.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`registry server exited early with code ${code}`));
    });
  });

  return {
    baseUrl,
    dbPath,
    storeDir,
    stop: () =>
      new Promise<void>((resolve) => {
        proc.once("exit", () => resolve());
        proc.kill("SIGINT");
        setTimeout(() => proc.kill("SIGKILL"), 3000).unref();
      }),
  };
}

export function runCli(args: string[]): Promise<{ stdout: string; code: number }> {
  return new Promise((resolve) => {
    execFile(PYTHON, ["-m", "egodb.cli", ...args], (error, stdout) => {
      const code = error && typeof (error as { code?: unknown }).code === "number"
        ? ((error as { code: number }).code)
        : error ? 1 : 0;
      resolve({ stdout, code });
    });
  });
}

export function makeRecord(index: number, overrides: Partial<EpisodeRecord> = {}): EpisodeRecord {
  return {
    episode_hash: index.toString(16).padStart(64, "0"),
    operator: "op-0",
    lab: "lab-a",
    task: "fold-clothes",
    scene: "kitchen",
    embodiment: "human",
    robot_name: null,
    task_description: "",
    objects: [],
    num_frames: null,
    processed_path: null,
    mp4_path: null,
    processing_error: null,
    is_deleted: false,
    is_eval: false,
    eval_score: null,
    eval_success: null,
    ...overrides,
  };
}

/** Deterministic PRNG so randomized comparisons reproduce across runs. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const pick = <T>(rand: () => number, options: T[]): T =>
  options[Math.floor(rand() * options.length)];

export function randomSeedRecord(rand: () => number, index: number): EpisodeRecord {
  const embodiment = rand() < 0.4 ? "robot" : "human";
  const processed = rand() < 0.5;
  return makeRecord(index, {
    operator: `op-${Math.floor(rand() * 3)}`,
    lab: `lab-${Math.floor(rand() * 3)}`,
    task: pick(rand, ["fold-clothes", "bag-grocery", "cup-on-saucer", "object-in-container"]),
    scene: `scene-${Math.floor(rand() * 3)}`,
    embodiment,
    robot_name: embodiment === "robot" ? `arm-${Math.floor(rand() * 2)}` : null,
    task_description: pick(rand, ["fold the shirt neatly", "bag all groceries", ""]),
    num_frames: rand() < 0.7 ? Math.floor(rand() * 500) : null,
    processed_path: processed ? `processed/${index}/canonical.bin` : null,
    processing_error: !processed && rand() < 0.3 ? "decode failure" : null,
    is_deleted: rand() < 0.15,
    is_eval: rand() < 0.2,
  });
}

/** A tiny binary PPM frame for preview tests. */
export function ppmFrame(width = 4, height = 4, value = 200): Uint8Array {
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii");
  const pixels = Buffer.alloc(width * height * 3, value);
  return new Uint8Array(Buffer.concat([header, pixels]));
}

export async function seedPreviewBlobs(storeDir: string, hash: string, frames: number): Promise<string> {
  const prefix = `processed/${hash}`;
  const dir = join(storeDir, prefix);
  await mkdir(dir, { recursive: true });
  for (let i = 0; i < frames; i++) {
    await writeFile(join(dir, `preview_${String(i).padStart(5, "0")}.ppm`), ppmFrame(4, 4, 40 + i));
  }
  await writeFile(join(dir, "canonical.bin"), Buffer.from("stub"));
  return prefix;
}
