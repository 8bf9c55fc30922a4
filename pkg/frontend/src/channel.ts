// Thin WebSocket wrapper for the engine channel.

import type { ClientMessage, ServerMessage } from "./protocol.js";
import { parseServerMessage } from "./protocol.js";

export interface Channel {
  send(msg: ClientMessage): void;
  close(): void;
}

export function connect(
  url: string,
  onMessage: (msg: ServerMessage) => void,
  onStatus: (open: boolean) => void,
): Channel {
  const ws = new WebSocket(url);
  ws.onopen = () => onStatus(true);
  ws.onclose = () => onStatus(false);
  ws.onmessage = (ev) => {
    const msg = parseServerMessage(String(ev.data));
    if (msg !== null) onMessage(msg);
  };
  return {
    send(msg: ClientMessage) {
      if (ws.readyState === WebSocket.OPEN) ws.send(JSON.stringify(msg));
    },
    close() {
      ws.close();
    },
  };
}
