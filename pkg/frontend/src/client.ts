// Gateway connection: a thin socket abstraction so the same client logic
// runs on the browser WebSocket and on the node test shim.

import { Command, Frame, parseFrame, serializeCommand } from "./protocol.js";
import { PanelState } from "./state.js";

export interface PanelSocket {
  send(text: string): void;
  close(): void;
  onmessage: ((text: string) => void) | null;
  onclose: (() => void) | null;
}

export class GatewayClient {
  readonly state = new PanelState();
  onframe: ((frame: Frame) => void) | null = null;

  constructor(private readonly socket: PanelSocket) {
    socket.onmessage = (text) => this.receive(text);
    socket.onclose = () => this.state.disconnect();
  }

  private receive(text: string): void {
    for (const line of text.split("\n")) {
      if (!line.trim()) {
        continue;
      }
      let frame: Frame;
      try {
        frame = parseFrame(line);
      } catch (err) {
        this.state.lastReply = String(err);
        continue;
      }
      this.state.apply(frame);
      this.onframe?.(frame);
    }
  }

  // Commands are refused locally unless the connection is open and the
  // protocol versions matched at hello time.
  send(cmd: Command): boolean {
    if (!this.state.canSendCommands()) {
      return false;
    }
    this.socket.send(serializeCommand(cmd));
    return true;
  }

  pause(): boolean {
    return this.send({ cmd: "pause" });
  }

  resume(): boolean {
    return this.send({ cmd: "resume" });
  }

  inject(receiver: string, timeOffset: number, kind = "reconnaissance",
         target?: string): boolean {
    const time = this.state.minInjectionTime() + Math.max(0, timeOffset);
    return this.send({
      cmd: "inject",
      events: [{ receiver, time, kind, ...(target ? { target } : {}) }],
    });
  }

  close(): void {
    this.socket.close();
    this.state.disconnect();
  }
}

export function connectBrowser(url: string): GatewayClient {
  const ws = new WebSocket(url);
  const shim: PanelSocket = {
    send: (text) => ws.send(text),
    close: () => ws.close(),
    onmessage: null,
    onclose: null,
  };
  ws.onmessage = (ev) => shim.onmessage?.(String(ev.data));
  ws.onclose = () => shim.onclose?.();
  return new GatewayClient(shim);
}
