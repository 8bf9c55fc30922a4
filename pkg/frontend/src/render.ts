// Canvas compositing: windowed slice, green mask overlay, yellow track
// dots, hollow red gaze cursor. All coordinates come straight from the
// engine; the canvas is laid out to match the engine's viewport.

import type { ViewState } from "./view_state.js";

function base64Bytes(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export function sliceImageData(pixels: string, iw: number, ih: number): ImageData {
  const gray = base64Bytes(pixels);
  const rgba = new Uint8ClampedArray(iw * ih * 4);
  for (let i = 0; i < iw * ih; i++) {
    const v = gray[i];
    rgba[4 * i] = v;
    rgba[4 * i + 1] = v;
    rgba[4 * i + 2] = v;
    rgba[4 * i + 3] = 255;
  }
  return new ImageData(rgba, iw, ih);
}

export function maskImageData(
  mask: Uint8Array,
  iw: number,
  ih: number,
  opacity: number,
): ImageData {
  const rgba = new Uint8ClampedArray(iw * ih * 4);
  const alpha = Math.round(255 * opacity);
  for (let i = 0; i < iw * ih; i++) {
    if (mask[i]) {
      rgba[4 * i + 1] = 200; // green
      rgba[4 * i + 3] = alpha;
    }
  }
  return new ImageData(rgba, iw, ih);
}

export function render(canvas: HTMLCanvasElement, state: ViewState): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const meta = state.meta;
  if (meta === null) {
    ctx.fillStyle = "#889";
    ctx.font = "14px sans-serif";
    ctx.fillText("no image loaded", 20, 30);
    return;
  }
  const vp = meta.viewport;

  const work = document.createElement("canvas");
  work.width = meta.iw;
  work.height = meta.ih;
  const wctx = work.getContext("2d");
  if (wctx === null) return;
  wctx.putImageData(sliceImageData(meta.pixels, meta.iw, meta.ih), 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(work, vp.x0, vp.y0, vp.dw, vp.dh);

  if (state.mask !== null) {
    wctx.clearRect(0, 0, meta.iw, meta.ih);
    wctx.putImageData(maskImageData(state.mask, meta.iw, meta.ih, state.overlayOpacity), 0, 0);
    ctx.drawImage(work, vp.x0, vp.y0, vp.dw, vp.dh);
  }

  if (state.showTracks) {
    ctx.fillStyle = "#ffd21f";
    const sx = vp.dw / meta.iw;
    const sy = vp.dh / meta.ih;
    for (const dot of state.dots) {
      ctx.beginPath();
      ctx.arc(vp.x0 + (dot.ix + 0.5) * sx, vp.y0 + (dot.iy + 0.5) * sy, 3, 0, 2 * Math.PI);
      ctx.fill();
    }
  }

  if (state.cursor !== null) {
    ctx.strokeStyle = "#e33";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(state.cursor.sx, state.cursor.sy, 9, 0, 2 * Math.PI);
    ctx.stroke();
  }
}
