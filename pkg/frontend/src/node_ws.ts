// Minimal WebSocket client over a raw TCP socket, for node-side tests.
// Implements just enough of RFC 6455 to talk to the gateway: the upgrade
// handshake, masked client text frames, and unmasked server frames.

import * as crypto from "node:crypto";
import * as net from "node:net";

import { PanelSocket } from "./client.js";

const GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

export function connectNode(host: string, port: number, path = "/ws"):
    Promise<PanelSocket> {
  return new Promise((resolve, reject) => {
    const sock = net.createConnection({ host, port });
    const key = crypto.randomBytes(16).toString("base64");
    const expected = crypto.createHash("sha1").update(key + GUID).digest("base64");
    let buf = Buffer.alloc(0);
    let upgraded = false;

    const shim: PanelSocket = {
      send(text: string) {
        sock.write(encodeClientFrame(Buffer.from(text, "utf8")));
      },
      close() {
        sock.destroy();
      },
      onmessage: null,
      onclose: null,
    };

    sock.on("connect", () => {
      sock.write(
        `GET ${path} HTTP/1.1\r\nHost: ${host}:${port}\r\n` +
        "Upgrade: websocket\r\nConnection: Upgrade\r\n" +
        `Sec-WebSocket-Key: ${key}\r\nSec-WebSocket-Version: 13\r\n\r\n`);
    });
    sock.on("error", reject);
    sock.on("close", () => shim.onclose?.());
    sock.on("data", (chunk) => {
      buf = Buffer.concat([buf, chunk]);
      if (!upgraded) {
        const end = buf.indexOf("\r\n\r\n");
        if (end < 0) {
          return;
        }
        const header = buf.subarray(0, end).toString("latin1");
        buf = buf.subarray(end + 4);
        if (!header.includes("101") || !header.includes(expected)) {
          reject(new Error(`handshake rejected: ${header.split("\r\n")[0]}`));
          sock.destroy();
          return;
        }
        upgraded = true;
        resolve(shim);
      }
      let frame = decodeServerFrame(buf);
      while (frame) {
        buf = buf.subarray(frame.consumed);
        if (frame.opcode === 0x1 && frame.payload) {
          shim.onmessage?.(frame.payload.toString("utf8"));
        }
        if (frame.opcode === 0x8) {
          sock.destroy();
          return;
        }
        frame = decodeServerFrame(buf);
      }
    });
  });
}

function encodeClientFrame(payload: Buffer): Buffer {
  const mask = crypto.randomBytes(4);
  const masked = Buffer.from(payload);
  for (let i = 0; i < masked.length; i++) {
    masked[i] ^= mask[i % 4];
  }
  let header: Buffer;
  if (payload.length < 126) {
    header = Buffer.from([0x81, 0x80 | payload.length]);
  } else if (payload.length < 65536) {
    header = Buffer.alloc(4);
    header[0] = 0x81;
    header[1] = 0x80 | 126;
    header.writeUInt16BE(payload.length, 2);
  } else {
    header = Buffer.alloc(10);
    header[0] = 0x81;
    header[1] = 0x80 | 127;
    header.writeBigUInt64BE(BigInt(payload.length), 2);
  }
  return Buffer.concat([header, mask, masked]);
}

function decodeServerFrame(buf: Buffer):
    { opcode: number; payload: Buffer | null; consumed: number } | null {
  if (buf.length < 2) {
    return null;
  }
  const opcode = buf[0] & 0x0f;
  let length = buf[1] & 0x7f;
  let offset = 2;
  if (length === 126) {
    if (buf.length < 4) {
      return null;
    }
    length = buf.readUInt16BE(2);
    offset = 4;
  } else if (length === 127) {
    if (buf.length < 10) {
      return null;
    }
    length = Number(buf.readBigUInt64BE(2));
    offset = 10;
  }
  if (buf.length < offset + length) {
    return null;
  }
  return {
    opcode,
    payload: buf.subarray(offset, offset + length),
    consumed: offset + length,
  };
}
