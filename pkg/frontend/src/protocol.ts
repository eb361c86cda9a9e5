// Gateway protocol: JSON frames over a WebSocket, one frame per message.
// The hello frame carries a protocol version; everything else is rejected
// when the version does not match what this panel was built against.

export const PROTOCOL_VERSION = 1;

export interface EntityView {
  name: string;
  side: "blue" | "red";
  type: string;
  pos: [number, number, number];
  alive: boolean;
}

export interface HelloFrame {
  type: "hello";
  version: number;
  epoch: number;
  map_radius: number;
  roster: number;
}

export interface SnapshotFrame {
  type: "snapshot";
  epoch: number;
  gvt: number | null;
  paused: boolean;
  entities: EntityView[];
}

export interface DeltaFrame {
  type: "delta";
  epoch: number;
  gvt: number | null;
  paused: boolean;
  entities: EntityView[];
}

export interface MetricsFrame {
  type: "metrics";
  epoch: number;
  gvt: number | null;
  committed: number;
  rollbacks: number;
  events_delta: number;
  per_worker: Record<string, number>;
  alive: Record<string, number>;
  paused: boolean;
}

export interface ReplyFrame {
  type: "reply";
  epoch: number;
  cmd: string;
  paused: boolean;
  ok?: boolean;
  accepted?: number;
  rejected?: string[];
  status?: unknown;
}

export interface ErrorFrame {
  type: "error";
  epoch?: number;
  error: string;
}

export type Frame =
  | HelloFrame
  | SnapshotFrame
  | DeltaFrame
  | MetricsFrame
  | ReplyFrame
  | ErrorFrame;

export interface InjectOrder {
  receiver: string;
  time: number;
  kind?: string;
  target?: string;
}

export type Command =
  | { cmd: "pause" }
  | { cmd: "resume" }
  | { cmd: "status" }
  | { cmd: "shutdown" }
  | { cmd: "inject"; events: InjectOrder[] };

export function parseFrame(raw: string): Frame {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch (err) {
    throw new Error(`unparseable frame: ${err}`);
  }
  if (typeof obj !== "object" || obj === null || !("type" in obj)) {
    throw new Error("frame missing a type field");
  }
  const frame = obj as Frame;
  switch (frame.type) {
    case "hello":
    case "snapshot":
    case "delta":
    case "metrics":
    case "reply":
    case "error":
      return frame;
    default:
      throw new Error(`unknown frame type ${(frame as { type: string }).type}`);
  }
}

export function serializeCommand(cmd: Command): string {
  return JSON.stringify(cmd);
}
