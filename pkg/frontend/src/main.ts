// Page wiring: sketch pad on the left, mesh viewer on the right, action row
// driving the editing service. One in-flight mutating request at a time.

import { ApiClient, ApiError, EditPayload } from "./api.js";
import { CanvasState, EXPORT_SIZE } from "./canvas.js";
import { defaultCamera } from "./geometry.js";
import { lassoPick } from "./lasso.js";
import { ViewerState, renderMesh } from "./viewer.js";

const api = new ApiClient("");
const pad = new CanvasState(EXPORT_SIZE);
const viewer = new ViewerState(defaultCamera());

let sessionId: string | null = null;
let pending = false;
let lassoTrail: Array<[number, number]> = [];
let lassoActive = false;

const sketchCanvas = document.getElementById("sketch") as HTMLCanvasElement;
const meshCanvas = document.getElementById("mesh") as HTMLCanvasElement;
const statusLine = document.getElementById("status") as HTMLElement;
const buttons = {
  generate: document.getElementById("generate") as HTMLButtonElement,
  refine: document.getElementById("refine") as HTMLButtonElement,
  blend: document.getElementById("blend") as HTMLButtonElement,
  undo: document.getElementById("undo") as HTMLButtonElement,
  outline: document.getElementById("outline") as HTMLButtonElement,
  clear: document.getElementById("clear") as HTMLButtonElement,
  undoStroke: document.getElementById("undo-stroke") as HTMLButtonElement,
};

function setStatus(text: string): void {
  statusLine.textContent = text;
}

function refreshButtons(): void {
  const busy = pending || sessionId === null;
  buttons.generate.disabled = busy || !pad.hasInk();
  buttons.refine.disabled = busy || viewer.selected.size === 0;
  buttons.blend.disabled = busy || viewer.selected.size === 0 || !pad.hasInk();
  buttons.undo.disabled = busy;
  buttons.outline.disabled = busy || viewer.mesh === null;
  buttons.clear.disabled = pending;
  buttons.undoStroke.disabled = pending || pad.strokes.length === 0;
}

function paintSketch(): void {
  const ctx = sketchCanvas.getContext("2d")!;
  const px = pad.rasterize();
  const img = ctx.createImageData(pad.size, pad.size);
  for (let i = 0; i < px.length; i++) {
    const v = Math.round(px[i] * 255);
    img.data[4 * i] = v;
    img.data[4 * i + 1] = v;
    img.data[4 * i + 2] = v;
    img.data[4 * i + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
}

function paintMesh(): void {
  const ctx = meshCanvas.getContext("2d")!;
  renderMesh(ctx, viewer, meshCanvas.width, meshCanvas.height);
  if (lassoTrail.length > 1) {
    ctx.beginPath();
    ctx.moveTo(lassoTrail[0][0], lassoTrail[0][1]);
    for (const [x, y] of lassoTrail.slice(1)) ctx.lineTo(x, y);
    ctx.strokeStyle = "#ff8800";
    ctx.setLineDash([6, 4]);
    ctx.stroke();
    ctx.setLineDash([]);
  }
}

function exportSketchBase64(): string {
  const px = pad.rasterize();
  const off = document.createElement("canvas");
  off.width = pad.size;
  off.height = pad.size;
  const ctx = off.getContext("2d")!;
  const img = ctx.createImageData(pad.size, pad.size);
  for (let i = 0; i < px.length; i++) {
    const v = Math.round(px[i] * 255);
    img.data[4 * i] = v;
    img.data[4 * i + 1] = v;
    img.data[4 * i + 2] = v;
    img.data[4 * i + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
  return off.toDataURL("image/png").split(",")[1];
}

function applyPayload(out: EditPayload): void {
  viewer.setMesh(out.empty ? null : out.mesh);
  const present = out.presence.map((p, i) => [p, i] as const).filter(([p]) => p >= 0.5);
  const done = out.completed.filter(Boolean).length;
  setStatus(`parts ${present.length}/${out.presence.length}, completed ${done}, faces ${out.mesh.faces.length}`);
  paintMesh();
}

async function run(label: string, action: () => Promise<void>): Promise<void> {
  if (pending) return;
  pending = true;
  refreshButtons();
  try {
    await action();
  } catch (err) {
    setStatus(err instanceof ApiError ? `${label} failed — ${err.message}` : `${label} failed`);
  } finally {
    pending = false;
    refreshButtons();
  }
}

function decodePngToPad(base64: string): Promise<void> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => {
      const off = document.createElement("canvas");
      off.width = img.width;
      off.height = img.height;
      const ctx = off.getContext("2d")!;
      ctx.drawImage(img, 0, 0);
      const data = ctx.getImageData(0, 0, img.width, img.height).data;
      const pixels = new Float64Array(img.width * img.height);
      for (let i = 0; i < pixels.length; i++) pixels[i] = data[4 * i] / 255;
      pad.clear();
      pad.setBackground(pixels, img.width);
      paintSketch();
      resolve();
    };
    img.onerror = () => reject(new Error("bad png"));
    img.src = `data:image/png;base64,${base64}`;
  });
}

// sketch pad input
sketchCanvas.addEventListener("pointerdown", (e) => {
  const rect = sketchCanvas.getBoundingClientRect();
  pad.beginStroke(e.clientX - rect.left, e.clientY - rect.top, 3);
  sketchCanvas.setPointerCapture(e.pointerId);
});
sketchCanvas.addEventListener("pointermove", (e) => {
  if (e.buttons !== 1) return;
  const rect = sketchCanvas.getBoundingClientRect();
  pad.extendStroke(e.clientX - rect.left, e.clientY - rect.top);
  paintSketch();
});
sketchCanvas.addEventListener("pointerup", () => {
  paintSketch();
  refreshButtons();
});

// lasso selection over the viewer
meshCanvas.addEventListener("pointerdown", (e) => {
  if (!viewer.mesh) return;
  lassoActive = true;
  const rect = meshCanvas.getBoundingClientRect();
  lassoTrail = [[e.clientX - rect.left, e.clientY - rect.top]];
  meshCanvas.setPointerCapture(e.pointerId);
});
meshCanvas.addEventListener("pointermove", (e) => {
  if (!lassoActive) return;
  const rect = meshCanvas.getBoundingClientRect();
  lassoTrail.push([e.clientX - rect.left, e.clientY - rect.top]);
  paintMesh();
});
meshCanvas.addEventListener("pointerup", () => {
  if (!lassoActive || !viewer.mesh) return;
  lassoActive = false;
  const picked = lassoPick(lassoTrail, viewer.mesh, viewer.camera, meshCanvas.width, meshCanvas.height);
  lassoTrail = [];
  if (picked.degenerate) {
    setStatus("lasso too small — draw a loop around the parts to select");
    paintMesh();
    return;
  }
  viewer.selected = picked.parts;
  void run("select", async () => {
    if (sessionId) await api.select(sessionId, [...picked.parts]);
    setStatus(`selected parts: ${[...picked.parts].sort((a, b) => a - b).join(", ") || "none"}`);
  });
  paintMesh();
});

buttons.generate.addEventListener("click", () =>
  run("generate", async () => {
    if (!sessionId) return;
    applyPayload(await api.generate(sessionId, exportSketchBase64()));
  }),
);
buttons.refine.addEventListener("click", () =>
  run("refine", async () => {
    if (!sessionId) return;
    applyPayload(await api.refine(sessionId));
  }),
);
buttons.blend.addEventListener("click", () =>
  run("blend", async () => {
    if (!sessionId) return;
    applyPayload(await api.blend(sessionId, exportSketchBase64()));
  }),
);
buttons.undo.addEventListener("click", () =>
  run("undo", async () => {
    if (!sessionId) return;
    applyPayload(await api.undo(sessionId));
  }),
);
buttons.outline.addEventListener("click", () =>
  run("outline", async () => {
    if (!sessionId) return;
    await decodePngToPad(await api.outline(sessionId, viewer.camera.azimuth, viewer.camera.elevation));
    setStatus("outline loaded onto the pad — edit and generate or blend");
  }),
);
buttons.clear.addEventListener("click", () => {
  pad.clear();
  paintSketch();
  refreshButtons();
});
buttons.undoStroke.addEventListener("click", () => {
  pad.undoStroke();
  paintSketch();
  refreshButtons();
});

// orbit with the right mouse button
meshCanvas.addEventListener("contextmenu", (e) => e.preventDefault());
meshCanvas.addEventListener("pointermove", (e) => {
  if (e.buttons === 2) {
    viewer.orbit(e.movementX * 0.01, e.movementY * 0.01);
    paintMesh();
  }
});

async function boot(): Promise<void> {
  paintSketch();
  try {
    await api.health();
    sessionId = await api.createSession();
    setStatus("ready — draw a sketch and press generate");
  } catch {
    setStatus("service unreachable — start the server and reload");
  }
  refreshButtons();
}

void boot();
