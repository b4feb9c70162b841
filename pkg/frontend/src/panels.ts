/** Panel controllers: all UI behavior that is not literally DOM.

    Each panel owns one latest-wins gate, so a burst of interactions
    leaves at most one request in flight and the newest result on
    screen. Failures split two ways: an unreachable service trips the
    shared banner flag, a rejected payload lands in the panel's own
    error line. Drawing itself never depends on the service. */

import {
  ServiceClient,
  ServiceError,
  ServiceUnreachable,
} from "./client.js";
import type { ClassifyResponse, RetrieveHit } from "./client.js";
import { StrokeCapture } from "./capture.js";
import type { PointerSample } from "./capture.js";
import { LatestGate, debounce } from "./latest.js";
import type { Debounced } from "./latest.js";
import { interchangeLine, parseInterchangeLine, toWire } from "./wire.js";
import type { CanvasStrokeLog, WireStrokes } from "./wire.js";

/** Shared reachability flag behind the banner. */
export class ServiceStatus {
  private reachable = true;
  private listeners = new Set<(up: boolean) => void>();

  get up(): boolean {
    return this.reachable;
  }

  set(up: boolean): void {
    if (up === this.reachable) return;
    this.reachable = up;
    for (const fn of this.listeners) fn(up);
  }

  subscribe(fn: (up: boolean) => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }
}

abstract class Panel {
  protected readonly gate = new LatestGate();
  error: string | null = null;
  busy = false;

  constructor(
    protected readonly client: ServiceClient,
    protected readonly status: ServiceStatus,
    private readonly onChange?: () => void,
  ) {}

  protected notify(): void {
    this.onChange?.();
  }

  /** One request through the panel's gate; failures are routed, never
      thrown, so callers can fire-and-forget from event handlers. */
  protected async exchange<T>(
    fn: (signal: AbortSignal) => Promise<T>,
  ): Promise<T | undefined> {
    this.busy = true;
    this.error = null;
    this.notify();
    try {
      const value = await this.gate.run(fn);
      if (value !== undefined) this.status.set(true);
      return value;
    } catch (err) {
      if (err instanceof ServiceUnreachable) {
        this.status.set(false);
        this.error = "service unreachable";
      } else if (err instanceof ServiceError) {
        this.error = err.message;
      } else {
        throw err;
      }
      return undefined;
    } finally {
      this.busy = this.gate.pending;
      this.notify();
    }
  }
}

export interface DrawResult {
  classify: ClassifyResponse | null;
  reconstruction: WireStrokes | null;
}

/** The live drawing panel: capture strokes, and while the user draws,
    keep a debounced classify + reconstruct pair running against the
    current state of the canvas. */
export class DrawPanel extends Panel {
  readonly capture: StrokeCapture;
  readonly poke: Debounced<[]>;
  result: DrawResult = { classify: null, reconstruction: null };

  constructor(
    client: ServiceClient,
    status: ServiceStatus,
    opts: {
      toCanvas?: (x: number, y: number) => [number, number];
      debounceMs?: number;
      onChange?: () => void;
    } = {},
  ) {
    super(client, status, opts.onChange);
    this.capture = new StrokeCapture(opts.toCanvas);
    this.poke = debounce(() => void this.refreshNow(), opts.debounceMs ?? 250);
  }

  /** Pointer entry point: update the capture, then schedule a refresh.
      Capture always works; the refresh is what needs the service. */
  pointer(sample: PointerSample): boolean {
    const changed = this.capture.handle(sample);
    if (changed) {
      this.notify();
      this.poke();
    }
    return changed;
  }

  async refreshNow(): Promise<DrawResult | undefined> {
    const log = this.capture.snapshot();
    if (log.strokes.length === 0) {
      this.result = { classify: null, reconstruction: null };
      this.notify();
      return this.result;
    }
    const strokes = toWire(log);
    const value = await this.exchange(async (signal) => {
      const [classify, recon] = await Promise.all([
        // a checkpoint without a classifier head answers 503; keep the
        // reconstruction panel alive in that case
        this.client.classify(strokes, signal).catch((err) => {
          if (err instanceof ServiceError && err.status === 503) return null;
          throw err;
        }),
        this.client.reconstruct(strokes, signal),
      ]);
      return { classify, reconstruction: recon.strokes };
    });
    if (value !== undefined) this.result = value;
    return value;
  }

  /** Current drawing as one CLI-ready interchange line. */
  exportLine(): string {
    return interchangeLine(this.capture.snapshot());
  }

  clear(): void {
    this.poke.cancel();
    this.capture.clear();
    this.result = { classify: null, reconstruction: null };
    this.notify();
  }
}

/** Two saved sketches and a slider across the path between them. */
export class InterpolatePanel extends Panel {
  a: CanvasStrokeLog | null = null;
  b: CanvasStrokeLog | null = null;
  frames: WireStrokes[] | null = null;
  slider = 0;

  constructor(
    client: ServiceClient,
    status: ServiceStatus,
    readonly steps = 11,
    onChange?: () => void,
  ) {
    super(client, status, onChange);
    if (steps < 2) throw new Error("steps must be at least 2");
  }

  async save(slot: "a" | "b", log: CanvasStrokeLog): Promise<void> {
    if (log.strokes.length === 0) {
      this.error = "draw something first";
      this.notify();
      return;
    }
    this[slot] = log;
    this.frames = null;
    this.notify();
    if (this.a !== null && this.b !== null) await this.load();
  }

  async load(): Promise<WireStrokes[] | undefined> {
    if (this.a === null || this.b === null) return undefined;
    const value = await this.exchange((signal) =>
      this.client.interpolate(toWire(this.a!), toWire(this.b!), this.steps, signal),
    );
    if (value !== undefined) this.frames = value.frames;
    return this.frames ?? undefined;
  }

  /** Slider position in [0, 1]; values outside are clamped. */
  setSlider(t: number): void {
    this.slider = Math.min(1, Math.max(0, t));
    this.notify();
  }

  /** Frame under the slider; 0 and 1 land exactly on the endpoints. */
  frame(): WireStrokes | null {
    if (this.frames === null || this.frames.length === 0) return null;
    const index = Math.round(this.slider * (this.frames.length - 1));
    return this.frames[index];
  }
}

/** Decode a noised embedding of the given sketch. */
export class PerturbPanel extends Panel {
  sigma = 0.1;
  seed = 0;
  strokes: WireStrokes | null = null;

  setSigma(value: number): void {
    this.sigma = Math.max(0, value);
    this.notify();
  }

  setSeed(value: number): void {
    this.seed = Math.trunc(value);
    this.notify();
  }

  async run(log: CanvasStrokeLog): Promise<WireStrokes | undefined> {
    if (log.strokes.length === 0) return undefined;
    const value = await this.exchange((signal) =>
      this.client.perturb(toWire(log), this.sigma, this.seed, signal),
    );
    if (value !== undefined) this.strokes = value.strokes;
    return value?.strokes;
  }
}

/** k-nearest grid over the service's retrieval index.

    Click-to-requery needs strokes for the clicked id, and the API only
    ranks ids, so the panel keeps a client-side gallery: every query it
    ran plus any interchange lines loaded from a file. Grid cells whose
    id has no gallery entry are shown but not clickable. */
export class RetrievePanel extends Panel {
  k = 8;
  results: RetrieveHit[] = [];
  queryId: string | null = null;
  private readonly gallery = new Map<string, WireStrokes>();
  private queryCount = 0;

  setK(value: number): void {
    this.k = Math.max(1, Math.trunc(value));
    this.notify();
  }

  async query(strokes: WireStrokes, id?: string): Promise<RetrieveHit[] | undefined> {
    const queryId = id ?? `query/${this.queryCount++}`;
    this.gallery.set(queryId, strokes);
    const value = await this.exchange((signal) =>
      this.client.retrieve(strokes, this.k, signal),
    );
    if (value !== undefined) {
      this.results = value.results;
      this.queryId = queryId;
    }
    return value?.results;
  }

  queryLog(log: CanvasStrokeLog): Promise<RetrieveHit[] | undefined> {
    return this.query(toWire(log));
  }

  canRequery(id: string): boolean {
    return this.gallery.has(id);
  }

  async requery(id: string): Promise<RetrieveHit[] | undefined> {
    const strokes = this.gallery.get(id);
    if (strokes === undefined) return undefined;
    return this.query(strokes, id);
  }

  galleryStrokes(id: string): WireStrokes | undefined {
    return this.gallery.get(id);
  }

  /** Load interchange ndjson into the gallery. Ids default to
      file/NNNNN by line; pass the served index's ids to make dataset
      results requeryable. Returns the number of sketches loaded. */
  loadGallery(text: string, ids?: string[]): number {
    let n = 0;
    for (const line of text.split("\n")) {
      if (line.trim() === "") continue;
      const strokes = parseInterchangeLine(line);
      const id = ids?.[n] ?? `file/${String(n).padStart(5, "0")}`;
      this.gallery.set(id, strokes);
      n++;
    }
    this.notify();
    return n;
  }
}
