// Event-stream subscription; events are applied in arrival order and the
// view renders only confirmed backend state.

import type { WsEvent } from "./types.js";

export function connectEvents(
  url: string,
  onEvent: (event: WsEvent) => void,
  onClose: () => void,
): WebSocket {
  const socket = new WebSocket(url);
  socket.onmessage = (msg) => {
    try {
      onEvent(JSON.parse(String(msg.data)) as WsEvent);
    } catch (err) {
      console.error("event stream parse error", err);
    }
  };
  socket.onclose = () => onClose();
  socket.onerror = () => socket.close();
  return socket;
}
