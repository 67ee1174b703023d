/**
 * DOM wiring: hierarchy editor, scented sliders, sparsification and blending
 * controls, and the streamed viewport. All state is reconstructible from the
 * server, so a refresh simply re-fetches /state.
 */
import { SessionClient } from "./client.js";
import { HierarchyEditor } from "./hierarchy.js";
import type { PathPair, SessionState } from "./protocol.js";
import { SliderPanel, SliderRow } from "./sliders.js";
import { debounce, throttle } from "./util.js";
import { FrameGate, OrbitCamera, fitOrbit } from "./viewport.js";

const SLIDER_DEBOUNCE_MS = 50;
const CAMERA_THROTTLE_MS = 80;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class App {
  client: SessionClient;
  editor = new HierarchyEditor();
  panel = new SliderPanel();
  gate = new FrameGate();
  orbit: OrbitCamera | null = null;
  state: SessionState | null = null;

  viewport = el<HTMLImageElement>("viewport");
  status = el<HTMLDivElement>("status");
  sliders = el<HTMLDivElement>("sliders");
  levels = el<HTMLDivElement>("levels");

  private requestFrameSoon = debounce(() => void this.requestFrame(), 30);
  private pushCamera = throttle(() => void this.sendCamera(), CAMERA_THROTTLE_MS);
  private fractionSenders = new Map<string, (f: number) => void>();

  constructor() {
    const base = `${location.protocol}//${location.host}`;
    this.client = new SessionClient(base, {
      socketFactory: (url) => {
        const ws = new WebSocket(url);
        ws.binaryType = "arraybuffer";
        const adapter: import("./client.js").SocketLike = {
          onmessage: null,
          onclose: null,
          onopen: null,
          close: () => ws.close(),
        };
        ws.onmessage = (ev) => adapter.onmessage?.({ data: ev.data });
        ws.onclose = () => adapter.onclose?.();
        ws.onopen = () => adapter.onopen?.();
        return adapter;
      },
      onFrame: (frame) => {
        if (this.gate.offer(frame)) {
          const blob = new Blob([frame.bytes.buffer as ArrayBuffer], { type: "image/png" });
          this.viewport.src = URL.createObjectURL(blob);
        }
      },
      onReport: (report) => {
        if (this.panel.applyReport(report)) this.renderSliders();
      },
      onStateChanged: () => void this.refresh(),
      onWarning: (message) => this.note(message),
      onError: (message) => this.note(`error: ${message}`),
      onReconnect: () => void this.refresh(),
    });
  }

  note(message: string): void {
    this.status.textContent = message;
  }

  async start(): Promise<void> {
    await this.client.createSession();
    this.client.connectStream();
    el<HTMLButtonElement>("load").onclick = () => void this.loadDataset();
    el<HTMLButtonElement>("add-level").onclick = () => this.addLevel();
    el<HTMLButtonElement>("apply-hierarchy").onclick = () => void this.applyHierarchy();
    this.bindSparsifyControls();
    this.bindBlendControls();
    this.bindViewport();
    this.note("session ready; load a dataset descriptor");
  }

  async refresh(): Promise<void> {
    this.state = await this.client.state();
    this.gate.setEpoch(this.state.epoch);
    this.panel.setState(this.state);
    this.editor.absorbStyles(this.state.hierarchy);
    this.renderSliders();
    this.requestFrameSoon();
  }

  async loadDataset(): Promise<void> {
    const descriptor = el<HTMLInputElement>("descriptor").value.trim();
    if (!descriptor) return this.note("enter a descriptor path");
    await this.client.command({ cmd: "loadDataset", descriptor });
    await this.refresh();
    if (this.state?.dataset) {
      this.orbit = fitOrbit(this.state.dataset.dims, this.state.dataset.spacing);
      await this.sendCamera();
      this.note(`loaded ${this.state.dataset.instances} instances`);
      this.renderAttributeOptions();
    }
  }

  // -- hierarchy editing -----------------------------------------------------

  scalarAttributes(): string[] {
    return (this.state?.dataset?.attributes ?? [])
      .filter((a) => a.kind === "scalar")
      .map((a) => a.name);
  }

  renderAttributeOptions(): void {
    const datalist = el<HTMLDataListElement>("attributes");
    datalist.innerHTML = "";
    for (const name of this.scalarAttributes()) {
      const option = document.createElement("option");
      option.value = name;
      datalist.appendChild(option);
    }
  }

  addLevel(): void {
    const attr = this.scalarAttributes()[0];
    if (!attr) return this.note("load a dataset first");
    this.editor.addLevel(attr);
    this.renderLevels();
  }

  renderLevels(): void {
    this.levels.innerHTML = "";
    this.editor.levels.forEach((level, li) => {
      const box = document.createElement("div");
      box.className = "level";
      const attr = document.createElement("input");
      attr.value = level.attribute;
      attr.setAttribute("list", "attributes");
      attr.onchange = () => this.editor.setAttribute(li, attr.value);
      box.appendChild(attr);

      level.ranges.forEach((range, ri) => {
        const row = document.createElement("span");
        row.className = "range";
        const lo = document.createElement("input");
        const hi = document.createElement("input");
        lo.value = range.lo === null ? "" : String(range.lo);
        hi.value = range.hi === null ? "" : String(range.hi);
        lo.placeholder = "-inf";
        hi.placeholder = "inf";
        const commit = () => {
          const loV = lo.value === "" ? null : Number(lo.value);
          const hiV = hi.value === "" ? null : Number(hi.value);
          const err = this.editor.updateRange(li, ri, loV, hiV);
          row.classList.toggle("invalid", err !== null);
          if (err) this.note(err.message);
        };
        lo.onchange = commit;
        hi.onchange = commit;
        const del = document.createElement("button");
        del.textContent = "x";
        del.onclick = () => {
          this.editor.removeRange(li, ri);
          this.renderLevels();
        };
        row.append(lo, "..", hi, del);
        box.appendChild(row);
      });
      const add = document.createElement("button");
      add.textContent = "+ range";
      add.onclick = () => {
        this.editor.addRange(li, null, null);
        this.renderLevels();
      };
      const drop = document.createElement("button");
      drop.textContent = "remove level";
      drop.onclick = () => {
        this.editor.removeLevel(li);
        this.renderLevels();
      };
      box.append(add, drop);
      this.levels.appendChild(box);
    });
    el<HTMLSpanElement>("group-count").textContent = String(this.editor.groupCount());
  }

  async applyHierarchy(): Promise<void> {
    await this.client.command({ cmd: "setHierarchy", hierarchy: this.editor.expand() });
    await this.refresh();
  }

  // -- sliders ----------------------------------------------------------------

  renderSliders(): void {
    this.sliders.innerHTML = "";
    for (const row of this.panel.rows) {
      this.sliders.appendChild(this.sliderRowElement(row));
    }
  }

  private sliderRowElement(row: SliderRow): HTMLDivElement {
    const box = document.createElement("div");
    box.className = "slider-row" + (row.locked ? " locked" : "") + (row.empty ? " empty" : "");
    box.style.marginLeft = `${row.depth * 18}px`;

    if (row.color) {
      const swatch = document.createElement("input");
      swatch.type = "color";
      swatch.value = rgbToHex(row.color);
      swatch.onchange = () => void this.recolor(row, swatch.value);
      box.appendChild(swatch);
    }
    const label = document.createElement("span");
    label.className = "label";
    label.textContent = `${row.label} (${row.count})`;
    box.appendChild(label);

    if (row.histogram) box.appendChild(histogramCanvas(row.histogram.counts));

    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = "0";
    slider.max = "1";
    slider.step = "0.01";
    slider.value = String(row.fraction);
    slider.disabled = row.locked;
    slider.oninput = () => {
      const f = Number(slider.value);
      this.panel.previewFraction(row.path, f);
      this.fractionSender(row.path)(f);
    };
    box.appendChild(slider);

    box.appendChild(trackBar("hidden", row.hiddenTrack));
    box.appendChild(trackBar("occluded", row.occludedTrack));

    const lock = document.createElement("button");
    lock.textContent = row.locked ? "unlock" : "lock";
    lock.onclick = () => void this.toggleLock(row);
    box.appendChild(lock);
    return box;
  }

  private fractionSender(path: PathPair[]): (f: number) => void {
    const key = JSON.stringify(path);
    let sender = this.fractionSenders.get(key);
    if (!sender) {
      sender = debounce((f: number) => {
        void this.client
          .command({ cmd: "setFraction", path, f })
          .then(() => this.refresh())
          .catch(() => undefined);
      }, SLIDER_DEBOUNCE_MS);
      this.fractionSenders.set(key, sender);
    }
    return sender;
  }

  private async toggleLock(row: SliderRow): Promise<void> {
    await this.client.command({ cmd: "setLock", path: row.path, locked: !row.locked });
    await this.refresh();
  }

  private async recolor(row: SliderRow, hex: string): Promise<void> {
    // Colors ride on the hierarchy document, keyed by path.
    const doc = this.editor.expand();
    let nodes = doc.roots;
    let target = null as import("./protocol.js").RangeWire | null;
    for (const [ni, ri] of row.path) {
      target = nodes[ni].ranges[ri];
      nodes = target.children ?? [];
    }
    if (target) target.color = hexToRgba(hex);
    await this.client.command({ cmd: "setHierarchy", hierarchy: doc });
    await this.refresh();
  }

  // -- controls ----------------------------------------------------------------

  bindSparsifyControls(): void {
    const mode = el<HTMLSelectElement>("mode");
    const kt = el<HTMLInputElement>("kappa-t");
    const ks = el<HTMLInputElement>("kappa-s");
    const apply = () =>
      void this.client
        .command({
          cmd: "setSparsifyParams",
          mode: mode.value,
          kappaT: Number(kt.value),
          kappaS: Number(ks.value),
        })
        .then(() => this.refresh());
    mode.onchange = apply;
    kt.onchange = apply;
    ks.onchange = apply;
  }

  bindBlendControls(): void {
    const send = debounce(() => {
      void this.client
        .command({
          cmd: "setBlendWeights",
          wColor: Number(el<HTMLInputElement>("w-color").value),
          wTransfer: Number(el<HTMLInputElement>("w-transfer").value),
          wAlpha: Number(el<HTMLInputElement>("w-alpha").value),
        })
        .then(() => this.requestFrameSoon());
    }, SLIDER_DEBOUNCE_MS);
    for (const id of ["w-color", "w-transfer", "w-alpha"]) {
      el<HTMLInputElement>(id).oninput = send;
    }
  }

  bindViewport(): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.viewport.onmousedown = (ev) => {
      dragging = true;
      lastX = ev.clientX;
      lastY = ev.clientY;
    };
    window.onmouseup = () => (dragging = false);
    window.onmousemove = (ev) => {
      if (!dragging || !this.orbit) return;
      this.orbit.orbit(ev.clientX - lastX, ev.clientY - lastY);
      lastX = ev.clientX;
      lastY = ev.clientY;
      this.pushCamera();
    };
    this.viewport.onwheel = (ev) => {
      if (!this.orbit) return;
      ev.preventDefault();
      this.orbit.zoom(ev.deltaY > 0 ? 1.1 : 1 / 1.1);
      this.pushCamera();
    };
  }

  async sendCamera(): Promise<void> {
    if (!this.orbit) return;
    await this.client.command(this.orbit.toCommand(512, 512));
    this.requestFrameSoon();
  }

  async requestFrame(): Promise<void> {
    try {
      await this.client.command({ cmd: "requestFrame" });
    } catch {
      // errors already surfaced via onError
    }
  }
}

function rgbToHex(rgba: number[]): string {
  const to2 = (v: number) =>
    Math.round(Math.min(1, Math.max(0, v)) * 255)
      .toString(16)
      .padStart(2, "0");
  return `#${to2(rgba[0])}${to2(rgba[1])}${to2(rgba[2])}`;
}

function hexToRgba(hex: string): number[] {
  const n = parseInt(hex.slice(1), 16);
  return [((n >> 16) & 255) / 255, ((n >> 8) & 255) / 255, (n & 255) / 255, 1.0];
}

function histogramCanvas(counts: number[]): HTMLCanvasElement {
  const canvas = document.createElement("canvas");
  canvas.width = 96;
  canvas.height = 24;
  const ctx = canvas.getContext("2d");
  if (ctx && counts.length) {
    const peak = Math.max(...counts, 1);
    const w = canvas.width / counts.length;
    ctx.fillStyle = "#888";
    counts.forEach((c, i) => {
      const h = (c / peak) * canvas.height;
      ctx.fillRect(i * w, canvas.height - h, Math.max(w - 1, 1), h);
    });
  }
  return canvas;
}

function trackBar(kind: "hidden" | "occluded", proportion: number): HTMLDivElement {
  const track = document.createElement("div");
  track.className = `track ${kind}`;
  track.title = `${kind}: ${(proportion * 100).toFixed(0)} %`;
  const fill = document.createElement("div");
  fill.style.width = `${Math.round(proportion * 100)}%`;
  track.appendChild(fill);
  return track;
}

window.addEventListener("DOMContentLoaded", () => {
  const app = new App();
  void app.start();
  (window as unknown as { crowdvisApp: App }).crowdvisApp = app;
});
