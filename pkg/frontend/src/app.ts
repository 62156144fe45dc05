// Single-page prompting workflow: browse tilts, click example particles,
// run inference, inspect projected detections, save and reuse prototypes.

import { Api, ApiError, type OverlayBox, type SceneInfo } from "./api";
import { drawDetections, drawPrompts, type Ctx2D } from "./overlay";
import {
  addPrompt,
  classColor,
  clearPrompts,
  initialPromptState,
  initialReviewState,
  promptFromClick,
  setDiameter,
  toggleClass,
} from "./state";
import {
  fitImage,
  pan,
  screenToImage,
  zoomAt,
  type ViewTransform,
} from "./transform";

const CANVAS_SIZE = 640;

type ImageLike = { src: string; el?: HTMLImageElement; decoded: Promise<unknown> };

function defaultImageLoader(url: string): ImageLike {
  const img = new Image();
  img.src = url;
  return { src: url, el: img, decoded: img.decode().catch(() => undefined) };
}

export class App {
  api: Api;
  root: HTMLElement;
  scenes: SceneInfo[] = [];
  scene: SceneInfo | null = null;
  sessionId: string | null = null;
  tiltIndex = 0;
  view: ViewTransform = { scale: 1, ox: 0, oy: 0 };
  prompts = initialPromptState();
  review = initialReviewState();
  overlays = new Map<number, OverlayBox[]>();
  imageCache = new Map<number, ImageLike>();
  requestedUrls: string[] = [];
  inferPending = false;
  status = "";
  lastDetections: { x: number; y: number }[] = [];

  private ctx: Ctx2D | null;
  private imageLoader: (url: string) => ImageLike;

  constructor(
    root: HTMLElement,
    api: Api,
    opts: { ctx?: Ctx2D | null; imageLoader?: (url: string) => ImageLike } = {},
  ) {
    this.root = root;
    this.api = api;
    this.imageLoader = opts.imageLoader ?? defaultImageLoader;
    this.buildDom();
    this.ctx = opts.ctx !== undefined ? opts.ctx : this.canvas.getContext("2d");
  }

  // --- DOM scaffolding ---
  canvas!: HTMLCanvasElement;
  sceneSelect!: HTMLSelectElement;
  tiltSlider!: HTMLInputElement;
  thetaLabel!: HTMLSpanElement;
  promptList!: HTMLUListElement;
  statusBar!: HTMLDivElement;
  runButton!: HTMLButtonElement;
  thresholdSlider!: HTMLInputElement;
  diameterSlider!: HTMLInputElement;
  zeroOnlyCheckbox!: HTMLInputElement;
  classPalette!: HTMLDivElement;
  protoSelect!: HTMLSelectElement;

  private buildDom(): void {
    this.root.innerHTML = `
      <div class="layout">
        <div class="viewer">
          <div class="toolbar">
            <select id="scene-select"></select>
            <input id="tilt-slider" type="range" min="0" max="0" value="0">
            <span id="theta-label">θ = 0°</span>
          </div>
          <canvas id="view" width="${CANVAS_SIZE}" height="${CANVAS_SIZE}"></canvas>
        </div>
        <div class="panel">
          <h3>Prompts</h3>
          <div id="class-palette"></div>
          <label>diameter <input id="diameter" type="range" min="2" max="40" value="12">
            <span id="diameter-value">12</span> px</label>
          <label><input id="zero-only" type="checkbox"> 0°-only prompting</label>
          <ul id="prompt-list"></ul>
          <button id="clear-prompts">clear all</button>
          <h3>Inference</h3>
          <button id="run">run inference</button>
          <label>score ≥ <input id="threshold" type="range" min="0" max="1" step="0.01" value="0.3">
            <span id="threshold-value">0.30</span></label>
          <div id="class-toggles"></div>
          <h3>Prototypes</h3>
          <button id="save-protos">save prototypes</button>
          <select id="proto-select"></select>
          <button id="apply-protos">apply to current scene</button>
          <div id="status"></div>
        </div>
      </div>`;
    const q = <T extends Element>(sel: string) => this.root.querySelector(sel) as T;
    this.canvas = q("#view");
    this.sceneSelect = q("#scene-select");
    this.tiltSlider = q("#tilt-slider");
    this.thetaLabel = q("#theta-label");
    this.promptList = q("#prompt-list");
    this.statusBar = q("#status");
    this.runButton = q("#run");
    this.thresholdSlider = q("#threshold");
    this.diameterSlider = q("#diameter");
    this.zeroOnlyCheckbox = q("#zero-only");
    this.classPalette = q("#class-palette");
    this.protoSelect = q("#proto-select");
    this.wireEvents();
  }

  private wireEvents(): void {
    this.sceneSelect.addEventListener("change", () => {
      void this.openScene(this.sceneSelect.value);
    });
    this.tiltSlider.addEventListener("input", () => {
      this.setTilt(Number(this.tiltSlider.value));
    });
    this.root.addEventListener("keydown", (ev) => {
      const e = ev as KeyboardEvent;
      if (e.key === "ArrowLeft") this.setTilt(this.tiltIndex - 1);
      if (e.key === "ArrowRight") this.setTilt(this.tiltIndex + 1);
    });
    this.canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      const rect = this.canvas.getBoundingClientRect();
      const factor = ev.deltaY < 0 ? 1.2 : 1 / 1.2;
      this.view = zoomAt(this.view, ev.clientX - rect.left, ev.clientY - rect.top, factor);
      this.redraw();
    });
    let dragging = false;
    let last: [number, number] = [0, 0];
    this.canvas.addEventListener("mousedown", (ev) => {
      if (ev.button === 1 || ev.button === 2 || ev.shiftKey) {
        dragging = true;
        last = [ev.clientX, ev.clientY];
        ev.preventDefault();
      }
    });
    this.canvas.addEventListener("mousemove", (ev) => {
      if (dragging) {
        this.view = pan(this.view, ev.clientX - last[0], ev.clientY - last[1]);
        last = [ev.clientX, ev.clientY];
        this.redraw();
      }
    });
    this.canvas.addEventListener("mouseup", (ev) => {
      if (dragging) {
        dragging = false;
        return;
      }
      if (ev.button === 0) {
        const rect = this.canvas.getBoundingClientRect();
        void this.clickAt(ev.clientX - rect.left, ev.clientY - rect.top);
      }
    });
    this.canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());
    this.runButton.addEventListener("click", () => void this.runInference());
    this.root.querySelector("#clear-prompts")!.addEventListener("click", () => void this.clearAll());
    this.thresholdSlider.addEventListener("input", () => {
      this.review.scoreThreshold = Number(this.thresholdSlider.value);
      (this.root.querySelector("#threshold-value") as HTMLElement).textContent =
        this.review.scoreThreshold.toFixed(2);
      this.redraw();
    });
    this.diameterSlider.addEventListener("input", () => {
      const d = Number(this.diameterSlider.value);
      setDiameter(this.prompts, this.prompts.activeClass, d);
      (this.root.querySelector("#diameter-value") as HTMLElement).textContent = String(d);
    });
    this.zeroOnlyCheckbox.addEventListener("change", () => {
      this.prompts.zeroOnlyMode = this.zeroOnlyCheckbox.checked;
      this.setStatus(this.prompts.zeroOnlyMode
        ? "0°-only mode: prompting restricted to the nearest-zero tilt"
        : "");
    });
    this.root.querySelector("#save-protos")!.addEventListener("click", () => void this.saveProtos());
    this.root.querySelector("#apply-protos")!.addEventListener("click", () => void this.applyProtos());
  }

  // --- lifecycle ---

  async start(): Promise<void> {
    this.scenes = await this.api.listScenes();
    this.sceneSelect.innerHTML = this.scenes
      .map((s) => `<option value="${s.id}">${s.id} (${s.n_tilts} tilts)</option>`)
      .join("");
    if (this.scenes.length) await this.openScene(this.scenes[0].id);
  }

  async openScene(sceneId: string): Promise<void> {
    const scene = this.scenes.find((s) => s.id === sceneId);
    if (!scene) throw new Error(`unknown scene ${sceneId}`);
    this.scene = scene;
    this.sessionId = await this.api.createSession(sceneId);
    clearPrompts(this.prompts);
    this.overlays.clear();
    this.imageCache.clear();
    this.lastDetections = [];
    this.view = fitImage(CANVAS_SIZE, CANVAS_SIZE, scene.dims.w, scene.dims.h);
    this.tiltSlider.max = String(scene.n_tilts - 1);
    this.setTilt(this.zeroTiltIndex());
    this.renderPromptList();
    this.setStatus(`session ${this.sessionId} on ${sceneId}`);
  }

  zeroTiltIndex(): number {
    if (!this.scene) return 0;
    let best = 0;
    this.scene.angles_deg.forEach((a, i) => {
      if (Math.abs(a) < Math.abs(this.scene!.angles_deg[best])) best = i;
    });
    return best;
  }

  setTilt(index: number): void {
    if (!this.scene) return;
    this.tiltIndex = Math.min(Math.max(index, 0), this.scene.n_tilts - 1);
    this.tiltSlider.value = String(this.tiltIndex);
    const theta = this.scene.angles_deg[this.tiltIndex];
    this.thetaLabel.textContent = `θ = ${theta.toFixed(1)}°`;
    const img = this.ensureImage(this.tiltIndex);
    void img.decoded.then(() => this.redraw());
    if (this.lastDetections.length && !this.overlays.has(this.tiltIndex)) {
      void this.loadOverlay(this.tiltIndex).then(() => this.redraw());
    }
    this.redraw();
  }

  ensureImage(index: number): ImageLike {
    let cached = this.imageCache.get(index);
    if (!cached) {
      const url = this.api.tiltImageUrl(this.scene!.id, index);
      this.requestedUrls.push(url);
      cached = this.imageLoader(url);
      this.imageCache.set(index, cached);
    }
    return cached;
  }

  // --- prompting ---

  async clickAt(screenX: number, screenY: number): Promise<void> {
    if (!this.scene || !this.sessionId) return;
    const [ix, iy] = screenToImage(this.view, screenX, screenY);
    if (ix < 0 || iy < 0 || ix > this.scene.dims.w || iy > this.scene.dims.h) return;
    const item = promptFromClick(this.prompts, this.tiltIndex, this.zeroTiltIndex(), ix, iy);
    if (!item) {
      this.setStatus("0°-only mode: click on the nearest-zero tilt");
      return;
    }
    try {
      await this.api.addPrompts(this.sessionId, [item]);
      addPrompt(this.prompts, item);
      this.renderPromptList();
      this.redraw();
    } catch (err) {
      this.surface(err);
    }
  }

  async clearAll(): Promise<void> {
    if (!this.sessionId) return;
    await this.api.clearPrompts(this.sessionId);
    clearPrompts(this.prompts);
    this.overlays.clear();
    this.lastDetections = [];
    this.renderPromptList();
    this.redraw();
  }

  async removeAt(index: number): Promise<void> {
    if (!this.sessionId) return;
    // server stores an append-only list; removal resyncs the full list
    this.prompts.items.splice(index, 1);
    await this.api.clearPrompts(this.sessionId);
    if (this.prompts.items.length) {
      await this.api.addPrompts(this.sessionId, this.prompts.items);
    }
    this.renderPromptList();
    this.redraw();
  }

  renderPromptList(): void {
    this.promptList.innerHTML = this.prompts.items
      .map(
        (p, i) =>
          `<li><span style="color:${classColor(p.class)}">●</span> ` +
          `tilt ${p.tilt_index} (${p.x.toFixed(1)}, ${p.y.toFixed(1)}) d=${p.d} ` +
          `<button data-remove="${i}">×</button></li>`,
      )
      .join("");
    this.promptList.querySelectorAll("button[data-remove]").forEach((btn) => {
      btn.addEventListener("click", () => {
        void this.removeAt(Number((btn as HTMLElement).dataset.remove));
      });
    });
    this.renderClassPalette();
  }

  renderClassPalette(): void {
    const labels = [1, 2, 3, 4];
    this.classPalette.innerHTML = labels
      .map(
        (l) =>
          `<button data-class="${l}" style="border-color:${classColor(l)};` +
          `${l === this.prompts.activeClass ? "font-weight:bold;" : ""}">class ${l}</button>`,
      )
      .join("");
    this.classPalette.querySelectorAll("button[data-class]").forEach((btn) => {
      btn.addEventListener("click", () => {
        this.prompts.activeClass = Number((btn as HTMLElement).dataset.class);
        this.renderClassPalette();
      });
    });
  }

  // --- inference and review ---

  async runInference(usePrototypes?: string): Promise<void> {
    if (!this.sessionId || this.inferPending) return;
    this.inferPending = true;
    this.runButton.disabled = true;
    this.setStatus("running inference...");
    try {
      const result = await this.api.infer(this.sessionId, usePrototypes);
      this.lastDetections = result.items.map((d) => ({ x: d.x, y: d.y }));
      this.overlays.clear();
      await this.loadOverlay(this.tiltIndex);
      this.renderClassToggles(new Set(result.items.map((d) => d.class)));
      this.setStatus(`${result.items.length} detections in ${result.runtime_s.toFixed(3)}s`);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.setStatus("inference in progress");
      } else {
        this.surface(err);
      }
    } finally {
      this.inferPending = false;
      this.runButton.disabled = false;
      this.redraw();
    }
  }

  async loadOverlay(tilt: number): Promise<OverlayBox[]> {
    if (!this.sessionId) return [];
    let boxes = this.overlays.get(tilt);
    if (!boxes) {
      const body = await this.api.overlay(this.sessionId, tilt);
      boxes = body.items;
      this.overlays.set(tilt, boxes);
    }
    return boxes;
  }

  renderClassToggles(classes: Set<number>): void {
    const host = this.root.querySelector("#class-toggles") as HTMLElement;
    host.innerHTML = [...classes]
      .sort((a, b) => a - b)
      .map(
        (l) =>
          `<label style="color:${classColor(l)}"><input type="checkbox" data-toggle="${l}" ` +
          `${this.review.hiddenClasses.has(l) ? "" : "checked"}> class ${l}</label>`,
      )
      .join("");
    host.querySelectorAll("input[data-toggle]").forEach((box) => {
      box.addEventListener("change", () => {
        toggleClass(this.review, Number((box as HTMLElement).dataset.toggle));
        this.redraw();
      });
    });
  }

  async saveProtos(): Promise<void> {
    if (!this.sessionId) return;
    try {
      const { proto_id } = await this.api.savePrototypes(this.sessionId);
      await this.refreshProtoList();
      this.setStatus(`saved ${proto_id}`);
    } catch (err) {
      this.surface(err);
    }
  }

  async refreshProtoList(): Promise<void> {
    const protos = await this.api.listPrototypes();
    this.protoSelect.innerHTML = protos
      .map((p) => `<option value="${p.proto_id}">${p.proto_id} (${p.classes.length} classes)</option>`)
      .join("");
  }

  async applyProtos(): Promise<void> {
    const protoId = this.protoSelect.value;
    if (!protoId) {
      this.setStatus("no prototypes saved yet");
      return;
    }
    await this.runInference(protoId);
  }

  // --- drawing ---

  redraw(): void {
    if (!this.ctx || !this.scene) return;
    const ctx = this.ctx as CanvasRenderingContext2D & Ctx2D;
    if ("clearRect" in ctx) {
      (ctx as CanvasRenderingContext2D).clearRect(0, 0, CANVAS_SIZE, CANVAS_SIZE);
      const img = this.imageCache.get(this.tiltIndex) as unknown as
        | { el?: HTMLImageElement }
        | HTMLImageElement
        | undefined;
      const el = img instanceof HTMLImageElement ? img : img?.el;
      if (el && "drawImage" in ctx) {
        try {
          (ctx as CanvasRenderingContext2D).drawImage(
            el,
            this.view.ox,
            this.view.oy,
            this.scene.dims.w * this.view.scale,
            this.scene.dims.h * this.view.scale,
          );
        } catch {
          /* image may not be decoded yet */
        }
      }
    }
    const boxes = this.overlays.get(this.tiltIndex) ?? [];
    drawDetections(ctx, boxes, this.review, this.view);
    drawPrompts(ctx, this.prompts.items, this.tiltIndex, this.view);
  }

  setStatus(msg: string): void {
    this.status = msg;
    this.statusBar.textContent = msg;
  }

  surface(err: unknown): void {
    if (err instanceof ApiError) {
      this.setStatus(`error ${err.status}: ${err.message}`);
    } else {
      this.setStatus(String(err));
    }
  }
}
