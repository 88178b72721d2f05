/**
 * DOM wiring for the three-plane slice viewer. All geometry, session, and
 * decoding logic lives in the tested modules; this file only renders and
 * forwards events.
 */

import { Client } from "./api.js";
import {
  planeAxis,
  planeShape,
  screenFromVoxel,
  voxelFromScreen,
  type ViewTransform,
} from "./coords.js";
import { overlaySlice, overlayToRgba } from "./overlay.js";
import { rleDecode } from "./rle.js";
import { ViewerSession } from "./state.js";
import { SCORE_OPTIONS, type Plane, type Voxel } from "./types.js";

const PLANES: Plane[] = ["axial", "coronal", "sagittal"];
const POLL_MS = 500;

interface PlaneView {
  plane: Plane;
  canvas: HTMLCanvasElement;
  slider: HTMLInputElement;
  label: HTMLSpanElement;
  index: number;
  view: ViewTransform;
}

const client = new Client(
  (window as any).EXTREMESEG_BASE_URL ?? window.location.origin,
);
const session = new ViewerSession();
let volumeId: string | null = null;
let mask: Uint8Array | null = null;
let maskDims: [number, number, number] | null = null;
const views = new Map<Plane, PlaneView>();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(text: string): void {
  el<HTMLSpanElement>("status").textContent = text;
}

function crosshairTo(v: Voxel): void {
  for (const pv of views.values()) {
    const axis = planeAxis(pv.plane);
    pv.index = v[axis];
    pv.slider.value = String(pv.index);
  }
  redrawAll();
}

async function redraw(pv: PlaneView): Promise<void> {
  if (!volumeId || !session.meta) return;
  const img = new Image();
  img.src = client.sliceUrl(volumeId, pv.plane, pv.index);
  await img.decode();
  const { rows, cols } = planeShape(pv.plane, session.meta.dims);
  pv.canvas.width = cols * pv.view.zoom;
  pv.canvas.height = rows * pv.view.zoom;
  const ctx = pv.canvas.getContext("2d")!;
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, pv.canvas.width, pv.canvas.height);
  ctx.drawImage(img, pv.view.panX, pv.view.panY, cols * pv.view.zoom,
    rows * pv.view.zoom);
  if (mask && maskDims && session.overlayVisible) {
    const slice = overlaySlice(mask, maskDims, pv.plane, pv.index);
    const rgba = new ImageData(overlayToRgba(slice), slice.cols, slice.rows);
    const off = document.createElement("canvas");
    off.width = slice.cols;
    off.height = slice.rows;
    off.getContext("2d")!.putImageData(rgba, 0, 0);
    ctx.drawImage(off, pv.view.panX, pv.view.panY,
      slice.cols * pv.view.zoom, slice.rows * pv.view.zoom);
  }
  for (const p of session.points) {
    if (p.plane !== pv.plane) continue;
    const { sx, sy, slice } = screenFromVoxel(pv.plane, p.voxel, pv.view);
    if (slice !== pv.index) continue;
    ctx.strokeStyle = "#ffd400";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(sx, sy, 5, 0, 2 * Math.PI);
    ctx.stroke();
  }
  pv.label.textContent = `${pv.plane} ${pv.index}`;
}

function redrawAll(): void {
  for (const pv of views.values()) void redraw(pv);
  el<HTMLButtonElement>("run").disabled = !session.canSubmit();
  el<HTMLSpanElement>("points").textContent =
    `${session.points.length}/6 points`;
}

function onCanvasClick(pv: PlaneView, ev: MouseEvent): void {
  if (!session.meta) return;
  const rect = pv.canvas.getBoundingClientRect();
  const voxel = voxelFromScreen(
    pv.plane, ev.clientX - rect.left, ev.clientY - rect.top, pv.index,
    pv.view, session.meta.dims);
  if (!voxel) return;
  if (session.placePoint(pv.plane, voxel)) {
    setStatus(`placed ${pv.plane} point at (${voxel.x}, ${voxel.y}, ${voxel.z})`);
    crosshairTo(voxel);
  } else {
    setStatus(`plane ${pv.plane} already has two points`);
  }
  redrawAll();
}

async function run(): Promise<void> {
  if (!volumeId || !session.canSubmit()) return;
  const clicks = session.buildClicks();
  const jobId = await client.submitJob(
    volumeId, clicks, session.annotationSecondsNow());
  session.markSubmitted(jobId);
  setStatus("segmenting...");
  const doc = await client.pollJob(jobId, POLL_MS);
  if (doc.state !== "done" || !doc.mask) {
    setStatus(`job failed: ${doc.error ?? "unknown"}`);
    return;
  }
  maskDims = doc.mask.dims;
  mask = rleDecode(doc.mask.runs, maskDims);
  session.markJobDone();
  setStatus("review the overlay, then score it");
  el<HTMLDivElement>("scoring").style.display = "block";
  redrawAll();
}

async function score(value: string): Promise<void> {
  if (!session.jobId) return;
  const { evaluationSeconds } = session.markScored();
  await client.scoreJob(session.jobId, value, evaluationSeconds);
  setStatus(`scored ${value}; session complete`);
  el<HTMLDivElement>("scoring").style.display = "none";
}

async function loadVolume(file: File): Promise<void> {
  const body = new Uint8Array(await file.arrayBuffer());
  volumeId = await client.uploadVolume(body);
  session.loadVolume(await client.getMeta(volumeId));
  mask = null;
  maskDims = null;
  for (const plane of PLANES) {
    const pv = views.get(plane)!;
    const { slices } = planeShape(plane, session.meta!.dims);
    pv.index = Math.floor(slices / 2);
    pv.slider.max = String(slices - 1);
    pv.slider.value = String(pv.index);
  }
  setStatus(`loaded ${volumeId}; place two points per plane`);
  redrawAll();
}

export function boot(): void {
  for (const plane of PLANES) {
    const pv: PlaneView = {
      plane,
      canvas: el<HTMLCanvasElement>(`canvas-${plane}`),
      slider: el<HTMLInputElement>(`slider-${plane}`),
      label: el<HTMLSpanElement>(`label-${plane}`),
      index: 0,
      view: { zoom: 6, panX: 0, panY: 0 },
    };
    pv.canvas.addEventListener("click", (ev) => onCanvasClick(pv, ev));
    pv.slider.addEventListener("input", () => {
      pv.index = Number(pv.slider.value);
      void redraw(pv);
    });
    views.set(plane, pv);
  }
  el<HTMLInputElement>("file").addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file) void loadVolume(file);
  });
  el<HTMLButtonElement>("run").addEventListener("click", () => void run());
  el<HTMLButtonElement>("clear").addEventListener("click", () => {
    session.clearPoints();
    setStatus("points cleared");
    redrawAll();
  });
  el<HTMLInputElement>("overlay").addEventListener("change", (ev) => {
    session.overlayVisible = (ev.target as HTMLInputElement).checked;
    redrawAll();
  });
  const scoring = el<HTMLDivElement>("scoring");
  for (const opt of SCORE_OPTIONS) {
    const btn = document.createElement("button");
    btn.textContent = opt.label;
    btn.addEventListener("click", () => void score(opt.value));
    scoring.appendChild(btn);
  }
}

if (typeof document !== "undefined" && document.getElementById("canvas-axial")) {
  boot();
}
