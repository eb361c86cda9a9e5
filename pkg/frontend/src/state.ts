// Panel view model: a pure fold over received frames.
//
// The rendered entity set always equals the last applied telemetry frame;
// destroyed entities linger as fading markers for three epochs before
// disappearing.  Everything the three quadrants (status, metrics, board)
// show is derived here; rendering layers stay dumb.

import {
  DeltaFrame,
  EntityView,
  Frame,
  HelloFrame,
  MetricsFrame,
  PROTOCOL_VERSION,
  SnapshotFrame,
} from "./protocol.js";

export const FADE_EPOCHS = 3;

export interface Marker extends EntityView {
  fade: number; // 0 = solid; 1..FADE_EPOCHS = fading out after destruction
}

export interface StatusQuadrant {
  gvt: number | null;
  paused: boolean;
  aliveBySide: Record<string, number>;
  connected: boolean;
}

export interface MetricsQuadrant {
  committed: number;
  rollbacks: number;
  eventsDelta: number;
  perWorker: Record<string, number>;
}

export class PanelState {
  versionBanner: string | null = null;
  mapRadius = 0;
  rosterSize = 0;
  epoch = 0;
  gvt: number | null = null;
  paused = false;
  connected = false;
  lastReply: string | null = null;

  private entities = new Map<string, EntityView>();
  private fadeSince = new Map<string, number>();
  private metrics: MetricsFrame | null = null;

  apply(frame: Frame): void {
    if (this.versionBanner) {
      return; // rendering halted until reconnect with a matching build
    }
    if ("epoch" in frame && typeof frame.epoch === "number") {
      if (frame.epoch <= this.epoch) {
        return; // frames are strictly ordered; drop stale ones
      }
      this.epoch = frame.epoch;
    }
    switch (frame.type) {
      case "hello":
        this.applyHello(frame);
        break;
      case "snapshot":
        this.applySnapshot(frame);
        break;
      case "delta":
        this.applyDelta(frame);
        break;
      case "metrics":
        this.metrics = frame;
        this.gvt = frame.gvt;
        this.paused = frame.paused;
        break;
      case "reply":
        this.paused = frame.paused;
        this.lastReply = summarizeReply(frame);
        break;
      case "error":
        this.lastReply = `error: ${frame.error}`;
        break;
    }
  }

  private applyHello(frame: HelloFrame): void {
    if (frame.version !== PROTOCOL_VERSION) {
      this.versionBanner =
        `protocol version ${frame.version} does not match panel build ` +
        `(${PROTOCOL_VERSION}); rendering halted`;
      this.connected = false;
      return;
    }
    this.mapRadius = frame.map_radius;
    this.rosterSize = frame.roster;
    this.connected = true;
  }

  private applySnapshot(frame: SnapshotFrame): void {
    this.noteDestructions(frame.entities, true);
    this.entities = new Map(frame.entities.map((e) => [e.name, e]));
    this.gvt = frame.gvt;
    this.paused = frame.paused;
  }

  private applyDelta(frame: DeltaFrame): void {
    this.noteDestructions(frame.entities, false);
    for (const e of frame.entities) {
      this.entities.set(e.name, e);
    }
    this.gvt = frame.gvt;
    this.paused = frame.paused;
  }

  private noteDestructions(updates: EntityView[], full: boolean): void {
    for (const e of updates) {
      const prev = this.entities.get(e.name);
      const wasAlive = prev ? prev.alive : true;
      if (wasAlive && !e.alive && !this.fadeSince.has(e.name)) {
        this.fadeSince.set(e.name, this.epoch);
      }
    }
    if (full) {
      for (const name of [...this.fadeSince.keys()]) {
        if (!updates.some((e) => e.name === name)) {
          this.fadeSince.delete(name);
        }
      }
    }
  }

  disconnect(): void {
    this.connected = false;
  }

  markers(): Marker[] {
    const out: Marker[] = [];
    for (const e of this.entities.values()) {
      if (e.alive) {
        out.push({ ...e, fade: 0 });
        continue;
      }
      const since = this.fadeSince.get(e.name);
      if (since === undefined) {
        continue; // destroyed before we connected: never shown
      }
      const age = this.epoch - since;
      if (age < FADE_EPOCHS) {
        out.push({ ...e, fade: age + 1 });
      } else {
        this.fadeSince.delete(e.name);
      }
    }
    return out.sort((a, b) => (a.name < b.name ? -1 : 1));
  }

  entityNames(): string[] {
    return [...this.entities.keys()].sort();
  }

  status(): StatusQuadrant {
    const alive: Record<string, number> = { blue: 0, red: 0 };
    for (const e of this.entities.values()) {
      if (e.alive) {
        alive[e.side] = (alive[e.side] ?? 0) + 1;
      }
    }
    return {
      gvt: this.gvt,
      paused: this.paused,
      aliveBySide: alive,
      connected: this.connected,
    };
  }

  metricsQuadrant(): MetricsQuadrant {
    return {
      committed: this.metrics?.committed ?? 0,
      rollbacks: this.metrics?.rollbacks ?? 0,
      eventsDelta: this.metrics?.events_delta ?? 0,
      perWorker: this.metrics?.per_worker ?? {},
    };
  }

  // Injection form constraint mirrored from the server: orders may not
  // target the past of the committed clock.
  minInjectionTime(): number {
    return this.gvt === null ? 1 : Math.floor(this.gvt) + 1;
  }

  canSendCommands(): boolean {
    return this.connected && this.versionBanner === null;
  }
}

function summarizeReply(frame: { cmd: string; ok?: boolean; accepted?: number; rejected?: string[] }): string {
  if (frame.cmd === "inject") {
    const rejected = frame.rejected?.length ?? 0;
    return `inject: accepted=${frame.accepted ?? 0} rejected=${rejected}`;
  }
  return `${frame.cmd}: ${frame.ok === false ? "failed" : "ok"}`;
}
