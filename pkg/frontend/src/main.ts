/** DOM wiring. Behavior lives in the panel controllers; this file only
    binds events, renders state, and keeps the banner honest. */

import { ServiceClient } from "./client.js";
import type { ConfigResponse } from "./client.js";
import {
  DrawPanel,
  InterpolatePanel,
  PerturbPanel,
  RetrievePanel,
  ServiceStatus,
} from "./panels.js";
import { RequestLog } from "./requestlog.js";
import type { WireStrokes } from "./wire.js";

function $<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing #${id}`);
  return el as T;
}

const baseUrl =
  new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8080";

const log = new RequestLog();
const client = new ServiceClient(baseUrl, { log });
const status = new ServiceStatus();

let canvasDims: [number, number] = [255, 255];
let classNames: string[] = [];

// ---- rendering helpers ------------------------------------------------------

function renderStrokes(
  canvas: HTMLCanvasElement,
  strokes: WireStrokes | null,
  color = "#1a56a0",
): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (strokes === null) return;
  const sx = canvas.width / canvasDims[0];
  const sy = canvas.height / canvasDims[1];
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.lineCap = "round";
  ctx.lineJoin = "round";
  for (const [xs, ys] of strokes) {
    ctx.beginPath();
    xs.forEach((x, i) => {
      const px = x * sx;
      const py = ys[i] * sy;
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    if (xs.length === 1) ctx.lineTo(xs[0] * sx + 0.5, ys[0] * sy);
    ctx.stroke();
  }
}

function download(name: string, text: string, type = "application/json"): void {
  const a = document.createElement("a");
  a.href = URL.createObjectURL(new Blob([text], { type }));
  a.download = name;
  a.click();
  URL.revokeObjectURL(a.href);
}

// ---- panels -----------------------------------------------------------------

const pad = $<HTMLCanvasElement>("pad");

const draw = new DrawPanel(client, status, { onChange: renderDraw });
const interp = new InterpolatePanel(client, status, 11, renderInterp);
const perturb = new PerturbPanel(client, status, renderPerturb);
const retrieve = new RetrievePanel(client, status, renderRetrieve);

function renderDraw(): void {
  renderStrokes(pad, draw.capture.empty ? null : toPadStrokes(), "#222");
  renderStrokes($<HTMLCanvasElement>("recon"), draw.result.reconstruction);
  $<HTMLDivElement>("draw-error").textContent = draw.error ?? "";
  const label = $<HTMLDivElement>("class-label");
  const probs = $<HTMLUListElement>("probs");
  const classify = draw.result.classify;
  label.textContent = classify === null ? "" : classify.class;
  probs.replaceChildren();
  if (classify === null) return;
  const ranked = classify.probabilities
    .map((p, i) => ({ name: classNames[i] ?? `class ${i}`, p }))
    .sort((lhs, rhs) => rhs.p - lhs.p)
    .slice(0, 5);
  for (const row of ranked) {
    const li = document.createElement("li");
    const bar = document.createElement("span");
    bar.className = "bar";
    bar.style.width = `${Math.round(row.p * 120)}px`;
    li.append(bar, `${row.name} ${row.p.toFixed(3)}`);
    probs.append(li);
  }
}

function toPadStrokes(): WireStrokes {
  return draw.capture.snapshot().strokes.map((s) => [
    s.map((p) => p.x),
    s.map((p) => p.y),
  ]);
}

function renderInterp(): void {
  renderStrokes($<HTMLCanvasElement>("interp"), interp.frame());
  $<HTMLDivElement>("interp-error").textContent = interp.error ?? "";
  const note = $<HTMLSpanElement>("interp-note");
  if (interp.frames !== null) {
    const index = Math.round(interp.slider * (interp.frames.length - 1));
    note.textContent = `frame ${index + 1} of ${interp.frames.length}`;
  } else if (interp.a === null && interp.b === null) {
    note.textContent = "save two sketches to interpolate";
  } else {
    note.textContent = interp.a === null ? "A missing" : interp.b === null ? "B missing" : "loading";
  }
}

function renderPerturb(): void {
  renderStrokes($<HTMLCanvasElement>("perturb-canvas"), perturb.strokes);
  $<HTMLDivElement>("perturb-error").textContent = perturb.error ?? "";
}

function renderRetrieve(): void {
  $<HTMLDivElement>("retrieve-error").textContent = retrieve.error ?? "";
  const grid = $<HTMLDivElement>("grid");
  grid.replaceChildren();
  for (const hit of retrieve.results) {
    const cell = document.createElement("div");
    cell.className = "cell";
    const strokes = retrieve.galleryStrokes(hit.id);
    if (strokes !== undefined) {
      const thumb = document.createElement("canvas");
      thumb.width = 96;
      thumb.height = 96;
      renderStrokes(thumb, strokes, "#555");
      cell.append(thumb);
    }
    const id = document.createElement("div");
    id.className = "id";
    id.textContent = hit.id;
    id.title = hit.id;
    const score = document.createElement("div");
    score.textContent = hit.score.toFixed(4);
    cell.append(id, score);
    if (retrieve.canRequery(hit.id)) {
      cell.classList.add("clickable");
      cell.title = "click to use as the query";
      cell.addEventListener("click", () => void retrieve.requery(hit.id));
    }
    grid.append(cell);
  }
}

// ---- pointer capture --------------------------------------------------------

function sampleFrom(kind: "down" | "move" | "up", ev: PointerEvent) {
  const rect = pad.getBoundingClientRect();
  const fx = Math.min(1, Math.max(0, (ev.clientX - rect.left) / rect.width));
  const fy = Math.min(1, Math.max(0, (ev.clientY - rect.top) / rect.height));
  return { kind, x: fx * canvasDims[0], y: fy * canvasDims[1], t: performance.now() };
}

pad.addEventListener("pointerdown", (ev) => {
  pad.setPointerCapture(ev.pointerId);
  draw.pointer(sampleFrom("down", ev));
});
pad.addEventListener("pointermove", (ev) => {
  if (draw.capture.drawing) draw.pointer(sampleFrom("move", ev));
});
for (const type of ["pointerup", "pointercancel"] as const) {
  pad.addEventListener(type, (ev) => draw.pointer(sampleFrom("up", ev)));
}

// ---- controls ---------------------------------------------------------------

$<HTMLButtonElement>("clear").addEventListener("click", () => draw.clear());

$<HTMLButtonElement>("export-sketch").addEventListener("click", () => {
  if (draw.capture.empty) return;
  download(`sketch-${Date.now()}.ndjson`, draw.exportLine() + "\n");
});

$<HTMLButtonElement>("export-log").addEventListener("click", () => {
  download(`requests-${Date.now()}.json`, log.toJSON());
});

$<HTMLButtonElement>("save-a").addEventListener("click", () => {
  void interp.save("a", draw.capture.snapshot());
});
$<HTMLButtonElement>("save-b").addEventListener("click", () => {
  void interp.save("b", draw.capture.snapshot());
});
$<HTMLInputElement>("islider").addEventListener("input", (ev) => {
  interp.setSlider(Number((ev.target as HTMLInputElement).value) / 1000);
});

$<HTMLInputElement>("sigma").addEventListener("change", (ev) => {
  perturb.setSigma(Number((ev.target as HTMLInputElement).value));
});
$<HTMLInputElement>("seed").addEventListener("change", (ev) => {
  perturb.setSeed(Number((ev.target as HTMLInputElement).value));
});
$<HTMLButtonElement>("perturb-run").addEventListener("click", () => {
  void perturb.run(draw.capture.snapshot());
});

$<HTMLInputElement>("kinput").addEventListener("change", (ev) => {
  retrieve.setK(Number((ev.target as HTMLInputElement).value));
});
$<HTMLButtonElement>("retrieve-run").addEventListener("click", () => {
  if (!draw.capture.empty) void retrieve.queryLog(draw.capture.snapshot());
});
$<HTMLInputElement>("gallery-file").addEventListener("change", async (ev) => {
  const input = ev.target as HTMLInputElement;
  const file = input.files?.[0];
  if (file === undefined) return;
  try {
    const n = retrieve.loadGallery(await file.text());
    $<HTMLSpanElement>("retrieve-note").textContent = `${n} gallery sketches loaded`;
  } catch (err) {
    $<HTMLDivElement>("retrieve-error").textContent = String(err);
  }
  input.value = "";
});

// ---- banner and boot --------------------------------------------------------

status.subscribe((up) => {
  $<HTMLDivElement>("banner").hidden = up;
  if (!up) pollHealth();
});

let polling = false;
function pollHealth(): void {
  if (polling) return;
  polling = true;
  const timer = setInterval(() => {
    client
      .health()
      .then(() => {
        status.set(true);
        clearInterval(timer);
        polling = false;
      })
      .catch(() => {});
  }, 4000);
}

function applyConfig(cfg: ConfigResponse): void {
  canvasDims = [cfg.canvas[0] ?? 255, cfg.canvas[1] ?? 255];
  classNames = cfg.class_names;
  const bits = [
    `${cfg.scheme} scheme`,
    `d=${cfg.d_model}`,
    cfg.n_classes > 0 ? `${cfg.n_classes} classes` : "no classifier",
    cfg.has_index ? "index loaded" : "no retrieval index",
  ];
  $<HTMLSpanElement>("scheme-note").textContent = bits.join(" | ");
  $<HTMLButtonElement>("retrieve-run").disabled = !cfg.has_index;
}

client
  .config()
  .then((cfg) => {
    status.set(true);
    applyConfig(cfg);
  })
  .catch(() => {
    status.set(false);
    $<HTMLSpanElement>("scheme-note").textContent = "offline";
  });
