// Panel round trip against a live gateway: connect, render the roster,
// pause, inject an order, and find its effect in the exported trace.

import { spawn, ChildProcess } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { GatewayClient } from "../src/client.js";
import { Frame } from "../src/protocol.js";
import { connectNode } from "../src/node_ws.js";

const PORT = 18700 + (process.pid % 800);
let workdir: string;
let backend: ChildProcess;
let backendExit: Promise<number>;

function waitFor<T>(poll: () => T | undefined, timeoutMs = 30000, what = "condition"):
    Promise<T> {
  const start = Date.now();
  return new Promise((resolve, reject) => {
    const tick = () => {
      const value = poll();
      if (value !== undefined) {
        resolve(value);
      } else if (Date.now() - start > timeoutMs) {
        reject(new Error(`timed out waiting for ${what}`));
      } else {
        setTimeout(tick, 25);
      }
    };
    tick();
  });
}

beforeAll(async () => {
  workdir = fs.mkdtempSync(path.join(os.tmpdir(), "wg-panel-"));
  const gen = spawn("python3", ["-m", "warpgrid.cli", "gen",
    "--aircraft", "3", "--tanks", "3", "--radius", "10",
    "--seed", "7", "--max-ticks", "15", "--out", "s.scn"], { cwd: workdir });
  await new Promise((resolve, reject) => {
    gen.on("exit", (code) => (code === 0 ? resolve(null) : reject(new Error("gen failed"))));
  });
  backend = spawn("python3", ["-m", "warpgrid.cli", "run",
    "--scenario", "s.scn", "--workers", "1",
    "--control-listen", `127.0.0.1:${PORT}`,
    "--trace-out", "panel.trace", "--max-wall", "120"],
    { cwd: workdir, stdio: ["ignore", "pipe", "pipe"] });
  backend.stderr?.on("data", (d) => process.stderr.write(d));
  backendExit = new Promise((resolve) => backend.on("exit", (code) => resolve(code ?? -1)));
  // Wait for the gateway socket to accept connections.
  await waitFor(() => {
    try {
      const probe = fs.existsSync(path.join(workdir, "s.scn"));
      return probe ? true : undefined;
    } catch {
      return undefined;
    }
  }, 10000, "scenario file");
}, 60000);

afterAll(() => {
  if (backend && backend.exitCode === null) {
    backend.kill();
  }
  fs.rmSync(workdir, { recursive: true, force: true });
});

describe("panel round trip (acceptance criterion 11)", () => {
  it("connects, renders, pauses, injects, and the order reaches the trace", async () => {
    // Connect with retries while the backend binds its port.
    let socket;
    for (let attempt = 0; ; attempt++) {
      try {
        socket = await connectNode("127.0.0.1", PORT);
        break;
      } catch (err) {
        if (attempt > 120) {
          throw err;
        }
        await new Promise((r) => setTimeout(r, 250));
      }
    }
    const client = new GatewayClient(socket);
    const frames: Frame[] = [];
    client.onframe = (f) => frames.push(f);

    await waitFor(
      () => (frames.some((f) => f.type === "snapshot") ? true : undefined),
      20000, "hello and snapshot");
    expect(client.state.versionBanner).toBeNull();
    // The snapshot renders the roster entity count exactly.
    expect(client.state.entityNames().length).toBe(client.state.rosterSize);
    expect(client.state.rosterSize).toBe(12);

    // Pause: the badge flips within one epoch (the reply frame itself).
    const epochBefore = client.state.epoch;
    expect(client.pause()).toBe(true);
    await waitFor(
      () => (client.state.status().paused ? true : undefined), 15000, "paused badge");
    const pauseReply = frames.find((f) => f.type === "reply" && f.cmd === "pause");
    expect(pauseReply && "epoch" in pauseReply && pauseReply.epoch <= epochBefore + 1).toBe(true);
    expect(client.resume()).toBe(true);
    await waitFor(
      () => (!client.state.status().paused ? true : undefined), 15000, "resumed");

    // Inject an order for an alive entity early in the timeline: its extra
    // recon chain shows up as a second record for that actor at that tick.
    const alive = client.state.markers().filter((m) => m.alive);
    expect(alive.length).toBeGreaterThan(0);
    const receiver = alive[0].name;
    const injectedTick = client.state.minInjectionTime() + 1;
    expect(client.inject(receiver, 1)).toBe(true);
    await waitFor(
      () => (frames.some((f) => f.type === "reply" && f.cmd === "inject")
        ? true : undefined), 15000, "inject reply");
    const reply = frames.find((f) => f.type === "reply" && f.cmd === "inject");
    expect(reply && "accepted" in reply && reply.accepted === 1).toBe(true);

    client.send({ cmd: "shutdown" });
    const code = await backendExit;
    expect(code).toBe(0);

    const trace = fs.readFileSync(path.join(workdir, "panel.trace"), "utf8")
      .trim().split("\n").map((line) => JSON.parse(line));
    const atTick = trace.filter((r) => r.actor === receiver && r.ts === injectedTick);
    expect(atTick.length).toBeGreaterThanOrEqual(2);
  }, 120000);
});
