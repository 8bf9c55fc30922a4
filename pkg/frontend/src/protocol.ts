// Message schema of the engine's client channel: one JSON object per
// WebSocket message. Field names mirror the wire exactly.

export type Mode = "one_point" | "all_points";

export type ClientMessage =
  | { type: "load_image"; path: string }
  | { type: "start_tracking" }
  | { type: "stop_tracking" }
  | { type: "set_mode"; mode: Mode }
  | { type: "set_slice"; z: number }
  | { type: "set_window"; center: number; width: number }
  | { type: "gaze_feed"; t_us: number; sx: number; sy: number; valid: 0 | 1 }
  | { type: "clear" }
  | { type: "save_mask"; path?: string };

export interface ImageMeta {
  type: "image_meta";
  image_id: string;
  path: string | null;
  iw: number;
  ih: number;
  depth: number;
  slice: number;
  mode: Mode;
  window: { center: number; width: number };
  viewport: { x0: number; y0: number; dw: number; dh: number };
  pixels: string; // base64 of iw*ih display bytes
}

export interface GazeCursor {
  type: "gaze_cursor";
  sx: number;
  sy: number;
  t_us: number;
}

export interface FixationEvent {
  type: "fixation";
  ix: number;
  iy: number;
  onset_us: number;
  duration_us: number;
  n_samples: number;
}

export interface MaskUpdate {
  type: "mask_update";
  version: number;
  request_id: number;
  iw: number;
  ih: number;
  rle: number[];
  score: number;
}

export interface SavedAck {
  type: "saved_ack";
  path: string;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage =
  | ImageMeta
  | GazeCursor
  | FixationEvent
  | MaskUpdate
  | SavedAck
  | ErrorMessage;

const SERVER_TYPES = new Set([
  "image_meta",
  "gaze_cursor",
  "fixation",
  "mask_update",
  "saved_ack",
  "error",
]);

export function parseServerMessage(raw: string): ServerMessage | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const type = (obj as { type?: unknown }).type;
  if (typeof type !== "string" || !SERVER_TYPES.has(type)) return null;
  return obj as ServerMessage;
}
