/** Stroke shapes shared with the service and with CLI interchange files. */

/** One [xs, ys] pair per stroke, the form every endpoint speaks. */
export type WireStrokes = number[][][];

export interface LogPoint {
  x: number;
  y: number;
  /** capture time in ms; dropped on the wire */
  t: number;
}

/** Strokes as captured on the canvas, timestamps kept for the log. */
export interface CanvasStrokeLog {
  strokes: LogPoint[][];
}

export function toWire(log: CanvasStrokeLog): WireStrokes {
  return log.strokes.map((stroke) => [
    stroke.map((p) => p.x),
    stroke.map((p) => p.y),
  ]);
}

/** Rebuild a log from wire strokes; timestamps restart from zero. */
export function fromWire(wire: WireStrokes): CanvasStrokeLog {
  let t = 0;
  return {
    strokes: wire.map(([xs, ys]) =>
      xs.map((x, i) => ({ x, y: ys[i], t: t++ })),
    ),
  };
}

/** One ndjson line in the interchange form the CLI reads directly. */
export function interchangeLine(log: CanvasStrokeLog): string {
  return JSON.stringify({ strokes: toWire(log) });
}

/** Parse one interchange line. Accepts the three spellings: a bare
    stroke list, an object with "strokes", or a record with "drawing"
    (which wins when both keys are present, as on the CLI side). */
export function parseInterchangeLine(line: string): WireStrokes {
  const obj: unknown = JSON.parse(line);
  const strokes = Array.isArray(obj)
    ? obj
    : (obj as Record<string, unknown>)?.["drawing"] ??
      (obj as Record<string, unknown>)?.["strokes"];
  if (!Array.isArray(strokes) || strokes.length === 0) {
    throw new Error("line holds no strokes");
  }
  for (const pair of strokes) {
    if (
      !Array.isArray(pair) || pair.length !== 2 ||
      !Array.isArray(pair[0]) || !Array.isArray(pair[1]) ||
      pair[0].length !== pair[1].length || pair[0].length === 0
    ) {
      throw new Error("stroke is not an [xs, ys] pair");
    }
    for (const v of [...pair[0], ...pair[1]]) {
      if (typeof v !== "number" || !Number.isFinite(v)) {
        throw new Error("non-numeric coordinate");
      }
    }
  }
  return strokes as WireStrokes;
}
