// Browser wiring: three quadrants (status, metrics, tactical board) plus
// the pause/resume buttons and the injection form.

import { BoardRenderer } from "./board.js";
import { connectBrowser, GatewayClient } from "./client.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function wsUrl(): string {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/ws`;
}

export function start(): void {
  const client: GatewayClient = connectBrowser(wsUrl());
  const canvas = el<HTMLCanvasElement>("board");
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    throw new Error("canvas 2d context unavailable");
  }
  const renderer = new BoardRenderer(ctx, canvas.width, canvas.height);

  const render = () => {
    const state = client.state;
    const status = state.status();
    el("banner").textContent = state.versionBanner ?? "";
    el("banner").style.display = state.versionBanner ? "block" : "none";
    el("gvt").textContent = status.gvt === null ? "done" : String(status.gvt);
    el("paused").textContent = status.paused ? "PAUSED" : "running";
    el("alive").textContent =
      `blue ${status.aliveBySide.blue ?? 0} / red ${status.aliveBySide.red ?? 0}`;
    const metrics = state.metricsQuadrant();
    el("committed").textContent = String(metrics.committed);
    el("rollbacks").textContent = String(metrics.rollbacks);
    el("rate").textContent = String(metrics.eventsDelta);
    el("reply").textContent = state.lastReply ?? "";
    const receiverBox = el<HTMLSelectElement>("receiver");
    const names = state.entityNames();
    if (receiverBox.options.length !== names.length) {
      receiverBox.innerHTML = "";
      for (const name of names) {
        const opt = document.createElement("option");
        opt.value = opt.textContent = name;
        receiverBox.appendChild(opt);
      }
    }
    const enabled = state.canSendCommands();
    for (const id of ["pause", "resume", "inject"]) {
      el<HTMLButtonElement>(id).disabled = !enabled;
    }
    el<HTMLInputElement>("offset").min = "0";
    el("mintime").textContent = String(state.minInjectionTime());
    renderer.render(state.mapRadius, state.markers());
  };

  client.onframe = render;
  el<HTMLButtonElement>("pause").onclick = () => client.pause();
  el<HTMLButtonElement>("resume").onclick = () => client.resume();
  el<HTMLButtonElement>("inject").onclick = () => {
    const receiver = el<HTMLSelectElement>("receiver").value;
    const offset = Number(el<HTMLInputElement>("offset").value || "0");
    const kind = el<HTMLSelectElement>("kind").value;
    client.inject(receiver, offset, kind);
  };
  render();
}

start();
