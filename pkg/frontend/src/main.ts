import { EditorApi, RequestGate, ApiError, HealthInfo } from "./api";
import {
  MaskGrid,
  createMask,
  clearMask,
  countPainted,
  paintStroke,
  paintBox,
  maskToGray,
} from "./mask";
import { encodeGrayPng, bytesToBase64, base64ToBytes } from "./png";

type Tool = "brush" | "erase" | "box";

interface Session {
  id: string;
  reconstruction: string; // base64 png from the service
}

const api = new EditorApi("");
const gate = new RequestGate(120);

const el = {
  status: document.getElementById("status") as HTMLElement,
  originalInput: document.getElementById("original-file") as HTMLInputElement,
  referenceInput: document.getElementById("reference-file") as HTMLInputElement,
  originalCanvas: document.getElementById("original-canvas") as HTMLCanvasElement,
  referenceCanvas: document.getElementById("reference-canvas") as HTMLCanvasElement,
  resultImg: document.getElementById("result-img") as HTMLImageElement,
  toolButtons: Array.from(document.querySelectorAll<HTMLButtonElement>("[data-tool]")),
  brushSize: document.getElementById("brush-size") as HTMLInputElement,
  clearButton: document.getElementById("clear-mask") as HTMLButtonElement,
  spaceToggle: document.getElementById("space-toggle") as HTMLInputElement,
  downloadMask: document.getElementById("download-mask") as HTMLAnchorElement,
  interpSlider: document.getElementById("interp-t") as HTMLInputElement,
  interpValue: document.getElementById("interp-value") as HTMLElement,
  semanticPanel: document.getElementById("semantic-panel") as HTMLElement,
  semanticSelect: document.getElementById("semantic-direction") as HTMLSelectElement,
  semanticStrength: document.getElementById("semantic-strength") as HTMLInputElement,
  semanticValue: document.getElementById("semantic-value") as HTMLElement,
  paintedCount: document.getElementById("painted-count") as HTMLElement,
};

let imageSize = 0;
let mask: MaskGrid | null = null;
let original: Session | null = null;
let reference: Session | null = null;
let tool: Tool = "brush";
let painting = false;
let lastX = -1;
let lastY = -1;
let boxStart: { x: number; y: number } | null = null;

function setStatus(text: string, kind: "ok" | "err" | "busy" = "ok"): void {
  el.status.textContent = text;
  el.status.dataset.kind = kind;
}

function reportError(e: unknown): void {
  const msg = e instanceof ApiError ? `${e.status}: ${e.message}` : String(e);
  setStatus(msg, "err");
}

/** Canvas pixel coords for a pointer event, in model-resolution units. */
function canvasCell(canvas: HTMLCanvasElement, ev: PointerEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  const x = Math.floor(((ev.clientX - rect.left) / rect.width) * imageSize);
  const y = Math.floor(((ev.clientY - rect.top) / rect.height) * imageSize);
  return { x, y };
}

function drawSessionImage(canvas: HTMLCanvasElement, b64: string): Promise<void> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => {
      canvas.width = img.naturalWidth;
      canvas.height = img.naturalHeight;
      const ctx = canvas.getContext("2d")!;
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(img, 0, 0);
      resolve();
    };
    img.onerror = () => reject(new Error("could not decode reconstruction"));
    img.src = "data:image/png;base64," + b64;
  });
}

/** Repaint the original canvas: reconstruction plus the mask overlay. */
async function redrawOriginal(): Promise<void> {
  if (!original || !mask) return;
  await drawSessionImage(el.originalCanvas, original.reconstruction);
  const ctx = el.originalCanvas.getContext("2d")!;
  ctx.fillStyle = "rgba(255, 64, 64, 0.45)";
  for (let y = 0; y < mask.height; y++) {
    for (let x = 0; x < mask.width; x++) {
      if (mask.data[y * mask.width + x]) ctx.fillRect(x, y, 1, 1);
    }
  }
  el.paintedCount.textContent = `${countPainted(mask)} px`;
}

function maskPngBytes(): Uint8Array {
  if (!mask) throw new Error("no mask");
  return encodeGrayPng(maskToGray(mask), mask.width, mask.height);
}

function refreshDownloadLink(): void {
  if (!mask) return;
  el.downloadMask.href = "data:image/png;base64," + bytesToBase64(maskPngBytes());
  el.downloadMask.download = "mask.png";
}

function scheduleEdit(): void {
  if (!original || !reference || !mask) return;
  if (countPainted(mask) === 0) {
    // empty mask is the identity; show it without a round trip
    el.resultImg.src = "data:image/png;base64," + original.reconstruction;
    setStatus("mask is empty; showing the original reconstruction");
    return;
  }
  const space = el.spaceToggle.checked ? "w" : "wplus";
  const body = {
    originalId: original.id,
    referenceId: reference.id,
    maskPng: maskPngBytes(),
    space: space as "wplus" | "w",
  };
  setStatus("rendering…", "busy");
  gate.schedule(async (signal) => {
    const image = await api.edit(body, signal);
    el.resultImg.src = "data:image/png;base64," + image;
    setStatus("ready");
  }, reportError);
}

async function loadSession(input: HTMLInputElement, which: "original" | "reference"): Promise<void> {
  const file = input.files?.[0];
  if (!file) return;
  setStatus(`projecting ${which}…`, "busy");
  try {
    const bytes = new Uint8Array(await file.arrayBuffer());
    const result = await api.project(bytes);
    const session: Session = { id: result.id, reconstruction: result.reconstruction };
    if (which === "original") {
      original = session;
      mask = createMask(imageSize, imageSize);
      await redrawOriginal();
      refreshDownloadLink();
    } else {
      reference = session;
      await drawSessionImage(el.referenceCanvas, session.reconstruction);
    }
    setStatus(`${which} projected (${result.id})`);
    scheduleEdit();
  } catch (e) {
    reportError(e);
  }
}

function applyBrush(x: number, y: number): void {
  if (!mask) return;
  const radius = Number(el.brushSize.value);
  const value = tool === "erase" ? 0 : 1;
  if (lastX >= 0) {
    paintStroke(mask, lastX, lastY, x, y, radius, value);
  } else {
    paintStroke(mask, x, y, x, y, radius, value);
  }
  lastX = x;
  lastY = y;
}

function bindMaskPainting(): void {
  const canvas = el.originalCanvas;
  canvas.addEventListener("pointerdown", (ev) => {
    if (!mask) return;
    canvas.setPointerCapture(ev.pointerId);
    painting = true;
    lastX = -1;
    lastY = -1;
    const { x, y } = canvasCell(canvas, ev);
    if (tool === "box") {
      boxStart = { x, y };
    } else {
      applyBrush(x, y);
      void redrawOriginal();
    }
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!painting || !mask) return;
    const { x, y } = canvasCell(canvas, ev);
    if (tool === "box") return; // box paints on release
    applyBrush(x, y);
    void redrawOriginal();
  });
  const finish = (ev: PointerEvent) => {
    if (!painting || !mask) return;
    painting = false;
    if (tool === "box" && boxStart) {
      const { x, y } = canvasCell(canvas, ev);
      paintBox(mask, boxStart.x, boxStart.y, x, y, 1);
      boxStart = null;
      void redrawOriginal();
    }
    refreshDownloadLink();
    scheduleEdit();
  };
  canvas.addEventListener("pointerup", finish);
  canvas.addEventListener("pointercancel", () => {
    painting = false;
    boxStart = null;
  });
}

function bindTools(): void {
  for (const btn of el.toolButtons) {
    btn.addEventListener("click", () => {
      tool = btn.dataset.tool as Tool;
      for (const other of el.toolButtons) other.classList.toggle("active", other === btn);
    });
  }
  el.clearButton.addEventListener("click", () => {
    if (!mask) return;
    clearMask(mask);
    void redrawOriginal();
    refreshDownloadLink();
    scheduleEdit();
  });
  el.spaceToggle.addEventListener("change", scheduleEdit);
}

function bindInterpolation(): void {
  el.interpSlider.addEventListener("input", () => {
    const t = Number(el.interpSlider.value) / 100;
    el.interpValue.textContent = t.toFixed(2);
    if (!original || !reference) return;
    setStatus("interpolating…", "busy");
    gate.schedule(async (signal) => {
      const image = await api.interpolate(original!.id, reference!.id, t, signal);
      el.resultImg.src = "data:image/png;base64," + image;
      setStatus("ready");
    }, reportError);
  });
}

function bindSemantic(info: HealthInfo): void {
  if (!info.directions.length) {
    el.semanticPanel.hidden = true;
    return;
  }
  el.semanticPanel.hidden = false;
  for (const name of info.directions) {
    const opt = document.createElement("option");
    opt.value = name;
    opt.textContent = name;
    el.semanticSelect.appendChild(opt);
  }
  el.semanticStrength.addEventListener("input", () => {
    const strength = Number(el.semanticStrength.value) / 10;
    el.semanticValue.textContent = strength.toFixed(1);
    if (!original) return;
    setStatus("applying direction…", "busy");
    gate.schedule(async (signal) => {
      const image = await api.semantic(original!.id, el.semanticSelect.value, strength, signal);
      el.resultImg.src = "data:image/png;base64," + image;
      setStatus("ready");
    }, reportError);
  });
}

async function init(): Promise<void> {
  try {
    const info = await api.health();
    imageSize = info.image_size;
    setStatus(`connected; model renders ${info.image_size}×${info.image_size}`);
    bindSemantic(info);
  } catch (e) {
    reportError(e);
    return;
  }
  el.originalInput.addEventListener("change", () => void loadSession(el.originalInput, "original"));
  el.referenceInput.addEventListener("change", () => void loadSession(el.referenceInput, "reference"));
  bindMaskPainting();
  bindTools();
  bindInterpolation();
}

void init();

// handy for console poking during development
export { base64ToBytes };
