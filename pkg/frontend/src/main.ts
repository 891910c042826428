// Browser app: upload an image, draw an interaction, view the predicted
// matte, and navigate previous results. Geometry is kept in image pixel
// coordinates so zooming the canvas never corrupts it.

import { MattingApi } from "./api.js";
import {
  checkerboardBacked,
  compositeOverColor,
  maskOverlay,
  Rgb,
} from "./compositing.js";
import { DrawState, Pixel, ToolKind } from "./geometry.js";
import { HistoryCursor } from "./history.js";
import { HistoryEntry, Interaction } from "./types.js";

type OverlayMode = "alpha" | "mask" | "composite";

const api = new MattingApi("");

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusEl = document.getElementById("status")!;
const fileInput = document.getElementById("file") as HTMLInputElement;
const predictBtn = document.getElementById("predict") as HTMLButtonElement;
const backBtn = document.getElementById("back") as HTMLButtonElement;
const forwardBtn = document.getElementById("forward") as HTMLButtonElement;
const clearBtn = document.getElementById("clear") as HTMLButtonElement;
const overlaySelect = document.getElementById("overlay") as HTMLSelectElement;
const bgColorInput = document.getElementById("bgcolor") as HTMLInputElement;
const roleToggle = document.getElementById("role") as HTMLSelectElement;
const toolButtons = Array.from(
  document.querySelectorAll<HTMLButtonElement>("button[data-tool]"),
);

let sessionId: string | null = null;
let imageData: ImageData | null = null;
let draw: DrawState | null = null;
let activeTool: ToolKind = "bbox";
let inFlight = false;
const history = new HistoryCursor();

function setStatus(text: string) {
  statusEl.textContent = text;
}

function hexToRgb(hex: string): Rgb {
  const v = parseInt(hex.slice(1), 16);
  return [(v >> 16) & 255, (v >> 8) & 255, v & 255];
}

function toImageCoords(event: MouseEvent): Pixel {
  const rect = canvas.getBoundingClientRect();
  const col = ((event.clientX - rect.left) / rect.width) * canvas.width;
  const row = ((event.clientY - rect.top) / rect.height) * canvas.height;
  return { row, col };
}

async function decodeGrayPng(b64: string): Promise<Uint8ClampedArray> {
  const img = new Image();
  img.src = `data:image/png;base64,${b64}`;
  await img.decode();
  const off = document.createElement("canvas");
  off.width = img.width;
  off.height = img.height;
  const octx = off.getContext("2d")!;
  octx.drawImage(img, 0, 0);
  const rgba = octx.getImageData(0, 0, img.width, img.height).data;
  const gray = new Uint8ClampedArray(img.width * img.height);
  for (let i = 0; i < gray.length; i++) gray[i] = rgba[4 * i];
  return gray;
}

function drawGeometry() {
  if (!draw) return;
  ctx.strokeStyle = "#ffd400";
  ctx.fillStyle = "#ffd400";
  ctx.lineWidth = Math.max(1, canvas.width / 256);
  if (draw.tool === "bbox" && draw.dragStart && draw.dragCurrent) {
    const [r0, c0, r1, c1] = [
      Math.min(draw.dragStart.row, draw.dragCurrent.row),
      Math.min(draw.dragStart.col, draw.dragCurrent.col),
      Math.max(draw.dragStart.row, draw.dragCurrent.row),
      Math.max(draw.dragStart.col, draw.dragCurrent.col),
    ];
    ctx.strokeRect(c0, r0, c1 - c0, r1 - r0);
  }
  for (const [row, col, role] of draw.points) {
    ctx.fillStyle = role === "bg" ? "#ff4040" : "#40c040";
    ctx.beginPath();
    ctx.arc(col, row, Math.max(2, canvas.width / 128), 0, 2 * Math.PI);
    ctx.fill();
  }
  if (draw.trail.length > 0) {
    for (const p of draw.trail) ctx.fillRect(p.col - 1, p.row - 1, 3, 3);
  }
}

async function render(entry: HistoryEntry | null) {
  if (!imageData) return;
  ctx.putImageData(imageData, 0, 0);
  if (entry) {
    const mode = overlaySelect.value as OverlayMode;
    const alpha = await decodeGrayPng(entry.response.alpha);
    const mask = await decodeGrayPng(entry.response.mask);
    let shown: Uint8ClampedArray;
    if (mode === "alpha") {
      shown = checkerboardBacked(imageData.data, alpha, canvas.width);
    } else if (mode === "mask") {
      shown = maskOverlay(imageData.data, mask);
    } else {
      shown = compositeOverColor(imageData.data, alpha, hexToRgb(bgColorInput.value));
    }
    const buffer = new Uint8ClampedArray(shown.length);
    buffer.set(shown);
    ctx.putImageData(new ImageData(buffer, canvas.width, canvas.height), 0, 0);
  }
  drawGeometry();
  updateControls();
}

function updateControls() {
  const interaction = draw?.buildInteraction() ?? null;
  predictBtn.disabled = inFlight || !sessionId || !interaction || !history.atHead();
  backBtn.disabled = !history.canGoBack();
  forwardBtn.disabled = !history.canGoForward();
  if (draw?.tool === "scribble" && !interaction && draw.trail.length > 0) {
    setStatus("scribble needs at least 3 distinct pixels");
  } else if (draw?.tool === "extreme_points") {
    const prompt = draw.nextExtremePrompt();
    setStatus(prompt ? `click the ${prompt} point of the object` : "extreme points ready");
  }
  roleToggle.style.display = activeTool === "fg_bg_points" ? "inline-block" : "none";
}

function resetDraw() {
  if (!imageData) return;
  draw = new DrawState(activeTool, canvas.height, canvas.width);
  void render(history.current());
}

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  try {
    const info = await api.createSession(file);
    sessionId = info.session_id;
    const bitmap = await createImageBitmap(file);
    canvas.width = info.width;
    canvas.height = info.height;
    ctx.drawImage(bitmap, 0, 0);
    imageData = ctx.getImageData(0, 0, info.width, info.height);
    setStatus(`session ${info.session_id.slice(0, 8)} (${info.width}x${info.height})`);
    resetDraw();
  } catch (err) {
    setStatus(String(err));
  }
});

toolButtons.forEach((button) => {
  button.addEventListener("click", () => {
    activeTool = button.dataset.tool as ToolKind;
    toolButtons.forEach((b) => b.classList.toggle("active", b === button));
    resetDraw();
  });
});

let pointerDown = false;
canvas.addEventListener("mousedown", (e) => {
  if (!draw || !history.atHead()) return;
  pointerDown = true;
  draw.pointerDown(toImageCoords(e), roleToggle.value as "fg" | "bg");
  void render(history.current());
});
canvas.addEventListener("mousemove", (e) => {
  if (!draw || !pointerDown) return;
  draw.pointerMove(toImageCoords(e));
  void render(history.current());
});
window.addEventListener("mouseup", (e) => {
  if (!draw || !pointerDown) return;
  pointerDown = false;
  draw.pointerUp(toImageCoords(e as MouseEvent));
  void render(history.current());
});

predictBtn.addEventListener("click", async () => {
  const interaction: Interaction | null = draw?.buildInteraction() ?? null;
  if (!sessionId || !interaction || inFlight) return;
  inFlight = true;
  updateControls();
  setStatus("predicting...");
  try {
    const response = await api.predict(sessionId, interaction);
    history.push({ interaction, response });
    setStatus(`done in ${response.latency_ms.toFixed(1)} ms (model ${response.model_id})`);
    resetDraw();
  } catch (err) {
    setStatus(String(err)); // session stays intact on failure
  } finally {
    inFlight = false;
    void render(history.current());
  }
});

backBtn.addEventListener("click", () => {
  const entry = history.back();
  if (entry && draw) draw = new DrawState(activeTool, canvas.height, canvas.width);
  void render(entry);
});
forwardBtn.addEventListener("click", () => {
  const entry = history.forward();
  void render(entry);
});
clearBtn.addEventListener("click", resetDraw);
overlaySelect.addEventListener("change", () => void render(history.current()));
bgColorInput.addEventListener("input", () => void render(history.current()));

updateControls();
setStatus("upload an image to start");
