// Mouse-as-gaze: samples the hovered position at tracker rate and emits
// gaze_feed messages, so the whole system runs with zero eye-tracking
// hardware. Canvas-relative coordinates are the engine's screen space.

import type { ClientMessage } from "./protocol.js";

export class MouseGazeSource {
  private lastX: number | null = null;
  private lastY: number | null = null;
  private lastT = 0;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly target: HTMLElement,
    private readonly send: (msg: ClientMessage) => void,
    private readonly rateHz = 60,
  ) {}

  start(): void {
    if (this.timer !== null) return;
    this.target.addEventListener("mousemove", this.onMove);
    this.target.addEventListener("mouseleave", this.onLeave);
    this.timer = setInterval(() => this.tick(), 1000 / this.rateHz);
  }

  stop(): void {
    if (this.timer === null) return;
    clearInterval(this.timer);
    this.timer = null;
    this.target.removeEventListener("mousemove", this.onMove);
    this.target.removeEventListener("mouseleave", this.onLeave);
  }

  private onMove = (ev: MouseEvent): void => {
    const rect = this.target.getBoundingClientRect();
    this.lastX = ev.clientX - rect.left;
    this.lastY = ev.clientY - rect.top;
  };

  private onLeave = (): void => {
    this.lastX = this.lastY = null;
  };

  private tick(): void {
    // timestamps must strictly increase within the stream
    const t = Math.max(Math.round(performance.now() * 1000), this.lastT + 1);
    this.lastT = t;
    if (this.lastX === null || this.lastY === null) {
      this.send({ type: "gaze_feed", t_us: t, sx: 0, sy: 0, valid: 0 });
      return;
    }
    this.send({ type: "gaze_feed", t_us: t, sx: this.lastX, sy: this.lastY, valid: 1 });
  }
}
