import type { CanvasStrokeLog, LogPoint } from "./wire.js";

export interface PointerSample {
  kind: "down" | "move" | "up";
  x: number;
  y: number;
  t: number;
}

/** Groups pointer samples into strokes.

    Samples arrive in screen coordinates; the transform maps them into
    the model's canvas system before anything is stored. A down begins
    a stroke, moves extend it, an up closes it. Moves and ups while the
    pen is lifted are ignored, so hover never draws. */
export class StrokeCapture {
  private done: LogPoint[][] = [];
  private current: LogPoint[] | null = null;

  constructor(
    private readonly toCanvas: (x: number, y: number) => [number, number] = (x, y) => [x, y],
  ) {}

  get drawing(): boolean {
    return this.current !== null;
  }

  get empty(): boolean {
    return this.done.length === 0 && this.current === null;
  }

  /** Feed one sample; returns true when the log changed. */
  handle(sample: PointerSample): boolean {
    const [x, y] = this.toCanvas(sample.x, sample.y);
    const point = { x, y, t: sample.t };
    switch (sample.kind) {
      case "down":
        // a down while drawing means we missed the up; close first
        if (this.current !== null) this.done.push(this.current);
        this.current = [point];
        return true;
      case "move":
        if (this.current === null) return false;
        this.current.push(point);
        return true;
      case "up":
        if (this.current === null) return false;
        this.done.push(this.current);
        this.current = null;
        return true;
    }
  }

  /** Deep copy of everything captured so far, open stroke included. */
  snapshot(): CanvasStrokeLog {
    const strokes = this.done.map((s) => s.map((p) => ({ ...p })));
    if (this.current !== null && this.current.length > 0) {
      strokes.push(this.current.map((p) => ({ ...p })));
    }
    return { strokes };
  }

  clear(): void {
    this.done = [];
    this.current = null;
  }
}
