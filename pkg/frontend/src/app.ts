// Wires the panel, canvas, scrollbar, and mouse-as-gaze source to the
// engine channel. Pure view/controller: all pipeline state lives server
// side, so everything here can be torn down and reconnected freely.

import { connect, type Channel } from "./channel.js";
import { MouseGazeSource } from "./gaze_source.js";
import type { Mode, ServerMessage } from "./protocol.js";
import { render } from "./render.js";
import {
  applyServerMessage,
  initialViewState,
  setConnection,
  toggleTracks,
  type ViewState,
} from "./view_state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

let state: ViewState = initialViewState();
let channel: Channel | null = null;
let tracking = false;

const canvas = el<HTMLCanvasElement>("view");
const status = el<HTMLSpanElement>("status");
const banner = el<HTMLDivElement>("banner");
const sliceBar = el<HTMLInputElement>("slice");
const sliceLabel = el<HTMLSpanElement>("slice-label");
const opacity = el<HTMLInputElement>("opacity");
const windowCenter = el<HTMLInputElement>("win-center");
const windowWidth = el<HTMLInputElement>("win-width");

function update(next: ViewState): void {
  state = next;
  status.textContent = state.connection;
  banner.textContent = state.banner ?? "";
  banner.style.display = state.banner ? "block" : "none";
  if (state.meta !== null) {
    sliceBar.max = String(state.meta.depth - 1);
    sliceBar.value = String(state.meta.slice);
    sliceLabel.textContent = `${state.meta.slice + 1}/${state.meta.depth}`;
    (el<HTMLInputElement>(`mode-${state.meta.mode}`)).checked = true;
  }
  render(canvas, state);
}

function onMessage(msg: ServerMessage): void {
  update(applyServerMessage(state, msg));
}

const gaze = new MouseGazeSource(canvas, (msg) => channel?.send(msg));

function connectChannel(): void {
  const url = (el<HTMLInputElement>("server-url")).value;
  channel?.close();
  channel = connect(url, onMessage, (open) => {
    update(setConnection(state, open ? "open" : "closed"));
  });
}

function setTracking(on: boolean): void {
  tracking = on;
  channel?.send({ type: on ? "start_tracking" : "stop_tracking" });
  if (on) gaze.start();
  else gaze.stop();
  el<HTMLButtonElement>("track").textContent = on ? "Stop Tracking" : "Start Tracking";
}

function setMode(mode: Mode): void {
  channel?.send({ type: "set_mode", mode });
}

el<HTMLButtonElement>("connect").onclick = connectChannel;
el<HTMLButtonElement>("load").onclick = () => {
  channel?.send({ type: "load_image", path: (el<HTMLInputElement>("image-path")).value });
};
el<HTMLButtonElement>("track").onclick = () => setTracking(!tracking);
el<HTMLInputElement>("show-tracks").onchange = (ev) => {
  update(toggleTracks(state, (ev.target as HTMLInputElement).checked));
};
el<HTMLInputElement>("mode-one_point").onchange = () => setMode("one_point");
el<HTMLInputElement>("mode-all_points").onchange = () => setMode("all_points");
el<HTMLButtonElement>("save").onclick = () => channel?.send({ type: "save_mask" });
el<HTMLButtonElement>("clear").onclick = () => channel?.send({ type: "clear" });
sliceBar.oninput = () => channel?.send({ type: "set_slice", z: Number(sliceBar.value) });
opacity.oninput = () => update({ ...state, overlayOpacity: Number(opacity.value) / 100 });
windowCenter.onchange = windowWidth.onchange = () => {
  channel?.send({
    type: "set_window",
    center: Number(windowCenter.value),
    width: Math.max(Number(windowWidth.value), 1),
  });
};

// keyboard shortcuts mirror the buttons
document.addEventListener("keydown", (ev) => {
  if ((ev.target as HTMLElement).tagName === "INPUT") return;
  switch (ev.key) {
    case "t":
      setTracking(!tracking);
      break;
    case "1":
      setMode("one_point");
      break;
    case "a":
      setMode("all_points");
      break;
    case "m":
      channel?.send({ type: "save_mask" });
      break;
    case "c":
      channel?.send({ type: "clear" });
      break;
  }
});

update(state);
connectChannel();
