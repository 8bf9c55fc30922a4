// Pure view model: every server message folds into a new ViewState.
// Rendering reads the state; no segmentation logic lives client-side.

import { decodeRle } from "./rle.js";
import type { ImageMeta, Mode, ServerMessage } from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface TrackDot {
  ix: number;
  iy: number;
}

export interface ViewState {
  connection: ConnectionStatus;
  meta: ImageMeta | null;
  mode: Mode;
  maskVersion: number;
  mask: Uint8Array | null; // iw*ih, 1 = foreground
  dots: TrackDot[];
  cursor: { sx: number; sy: number } | null;
  showTracks: boolean;
  overlayOpacity: number;
  banner: string | null;
  savedPath: string | null;
}

export function initialViewState(): ViewState {
  return {
    connection: "connecting",
    meta: null,
    mode: "all_points",
    maskVersion: 0,
    mask: null,
    dots: [],
    cursor: null,
    showTracks: true,
    overlayOpacity: 0.45,
    banner: null,
    savedPath: null,
  };
}

export function applyServerMessage(state: ViewState, msg: ServerMessage): ViewState {
  switch (msg.type) {
    case "image_meta": {
      const sceneChanged =
        state.meta === null ||
        state.meta.image_id !== msg.image_id ||
        state.meta.slice !== msg.slice;
      return {
        ...state,
        meta: msg,
        mode: msg.mode,
        // prompts are slice-local: a new scene invalidates mask and tracks
        mask: sceneChanged ? null : state.mask,
        dots: sceneChanged ? [] : state.dots,
        banner: null,
      };
    }
    case "gaze_cursor":
      return { ...state, cursor: { sx: msg.sx, sy: msg.sy } };
    case "fixation":
      if (!state.showTracks) return state;
      return { ...state, dots: [...state.dots, { ix: msg.ix, iy: msg.iy }] };
    case "mask_update": {
      if (msg.version <= state.maskVersion) return state; // stale: no repaint
      try {
        const mask = decodeRle(msg.rle, msg.iw, msg.ih);
        return { ...state, mask, maskVersion: msg.version };
      } catch (err) {
        return { ...state, banner: `mask decode failed: ${String(err)}` };
      }
    }
    case "saved_ack":
      return { ...state, savedPath: msg.path, banner: `saved ${msg.path}` };
    case "error":
      return { ...state, banner: msg.message };
    default:
      return state;
  }
}

export function setConnection(state: ViewState, connection: ConnectionStatus): ViewState {
  return { ...state, connection };
}

export function toggleTracks(state: ViewState, on: boolean): ViewState {
  return on ? { ...state, showTracks: true } : { ...state, showTracks: false, dots: [] };
}
