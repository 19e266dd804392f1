/** Browser entry point: wires the service client, render panels and
 * controls into the page. All rate-limiting and range logic lives in the
 * imported modules; this file is DOM plumbing only.
 */

import { ApiClient, ServiceError, type FitPayload, type View } from "./api.js";
import { pixelToUv, uvToPixel } from "./drag.js";
import { RenderPanel } from "./panel.js";
import {
  clampParam,
  clampParams,
  DEFAULT_PARAMS,
  RANGES,
  type ParamName,
  type RenderParams,
} from "./params.js";

const VIEWS: View[] = ["edited", "diffuse", "shadowed", "envmap"];

interface PanelBinding {
  view: View;
  panel: RenderPanel<RenderParams>;
  img: HTMLImageElement;
  url: string | null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

class EditorApp {
  private readonly client: ApiClient;
  private params: RenderParams = { ...DEFAULT_PARAMS };
  private scene = "";
  private fit: FitPayload | null = null;
  private hasEnv = false;
  private readonly panels: PanelBinding[] = [];
  private readonly sliders = new Map<ParamName, HTMLInputElement>();
  private readonly numbers = new Map<ParamName, HTMLInputElement>();
  private readonly status: HTMLElement;
  private readonly sceneSelect: HTMLSelectElement;
  private readonly envButtons: HTMLElement;
  private readonly resetButton: HTMLButtonElement;
  private readonly marker: HTMLElement;
  private readonly envPane: HTMLElement;

  constructor(private readonly root: HTMLElement, baseUrl: string) {
    this.client = new ApiClient(baseUrl);
    this.status = el("div", "status", "connecting…");
    this.sceneSelect = el("select");
    this.envButtons = el("div", "env-buttons");
    this.resetButton = el("button", "", "reset to fitted light");
    this.marker = el("div", "light-marker");
    this.envPane = el("div", "pane envmap-pane");
    this.build();
  }

  private build(): void {
    const header = el("header");
    header.append(el("h1", "", "compose-kit editor"), this.status);
    this.root.append(header);

    const controls = el("div", "controls");
    const sceneRow = el("div", "row");
    sceneRow.append(el("label", "", "scene"), this.sceneSelect);
    controls.append(sceneRow, this.envButtons);

    for (const name of Object.keys(RANGES) as ParamName[]) {
      controls.append(this.sliderRow(name));
    }
    this.resetButton.addEventListener("click", () => this.resetToFit());
    controls.append(this.resetButton);

    const grid = el("div", "panel-grid");
    for (const view of VIEWS) {
      const pane = view === "envmap" ? this.envPane : el("div", "pane");
      pane.append(el("h2", "", view));
      const img = el("img");
      img.alt = `${view} render`;
      pane.append(img);
      if (view === "envmap") {
        pane.append(this.marker);
        this.bindDrag(img);
      }
      grid.append(pane);
      const panel = new RenderPanel<RenderParams>(
        (params, signal) => this.client.render(this.scene, view, params, signal),
        {
          onImage: (bytes) => this.show(view, bytes),
          onError: (error) => this.report(error),
        },
        (params) => this.client.renderUrl(this.scene, view, params),
      );
      this.panels.push({ view, panel, img, url: null });
    }

    const layout = el("div", "layout");
    layout.append(controls, grid);
    this.root.append(layout);

    this.sceneSelect.addEventListener("change", () => {
      this.scene = this.sceneSelect.value;
      void this.refreshScenes(false);
    });
  }

  private sliderRow(name: ParamName): HTMLElement {
    const range = RANGES[name];
    const row = el("div", "row");
    const slider = el("input");
    slider.type = "range";
    slider.min = String(range.min);
    slider.max = String(range.max);
    slider.step = String(range.step);
    const number = el("input", "number-fallback");
    number.type = "number";
    number.min = String(range.min);
    number.max = String(range.max);
    number.step = String(range.step);
    const apply = (raw: string) => {
      this.setParam(name, Number(raw));
    };
    slider.addEventListener("input", () => apply(slider.value));
    number.addEventListener("change", () => apply(number.value));
    row.append(el("label", "", range.label), slider, number);
    this.sliders.set(name, slider);
    this.numbers.set(name, number);
    return row;
  }

  private bindDrag(img: HTMLImageElement): void {
    let dragging = false;
    const move = (event: PointerEvent) => {
      const rect = img.getBoundingClientRect();
      if (rect.width <= 0 || rect.height <= 0) return;
      const { u, v } = pixelToUv(
        event.clientX - rect.left,
        event.clientY - rect.top,
        rect.width,
        rect.height,
      );
      this.setParam("u", u, false);
      this.setParam("v", v);
    };
    img.addEventListener("pointerdown", (event) => {
      dragging = true;
      img.setPointerCapture(event.pointerId);
      move(event);
    });
    img.addEventListener("pointermove", (event) => {
      if (dragging) move(event);
    });
    img.addEventListener("pointerup", () => {
      dragging = false;
    });
  }

  private setParam(name: ParamName, value: number, refresh = true): void {
    this.params = { ...this.params, [name]: clampParam(name, value) };
    if (refresh) {
      this.syncControls();
      this.requestAll();
    }
  }

  private syncControls(): void {
    for (const [name, slider] of this.sliders) {
      slider.value = String(this.params[name]);
      const number = this.numbers.get(name);
      if (number) number.value = this.params[name].toFixed(3);
    }
    const rect = this.envPane.querySelector("img")?.getBoundingClientRect();
    if (rect && rect.width > 0) {
      const { x, y } = uvToPixel(this.params.u, this.params.v, rect.width, rect.height);
      this.marker.style.left = `${x}px`;
      this.marker.style.top = `${y}px`;
    }
  }

  private requestAll(): void {
    if (!this.scene || !this.hasEnv) return;
    const params = clampParams(this.params);
    for (const binding of this.panels) {
      binding.panel.request(params);
    }
  }

  private show(view: View, bytes: Uint8Array): void {
    const binding = this.panels.find((p) => p.view === view);
    if (!binding) return;
    if (binding.url) URL.revokeObjectURL(binding.url);
    binding.url = URL.createObjectURL(
      new Blob([new Uint8Array(bytes)], { type: "image/png" }),
    );
    binding.img.src = binding.url;
    if (view === "envmap") this.syncControls();
  }

  private report(error: unknown): void {
    if (error instanceof ServiceError) {
      this.status.textContent = `${error.error}: ${error.detail}`;
      this.status.classList.toggle("error", true);
    } else {
      this.status.textContent = String(error);
      this.status.classList.toggle("error", true);
    }
  }

  private ok(message: string): void {
    this.status.textContent = message;
    this.status.classList.toggle("error", false);
  }

  private resetToFit(): void {
    if (!this.fit) {
      this.report(new ServiceError(422, "NoDominantLight",
        "this environment has no fitted light; set parameters manually"));
      return;
    }
    this.params = clampParams({
      ...this.params,
      u: this.fit.u,
      v: this.fit.v,
      sigma: this.fit.sigma,
      gamma: this.fit.gamma,
    });
    this.syncControls();
    this.requestAll();
  }

  private async loadEnv(name: string): Promise<void> {
    try {
      const reply = await this.client.postEnv(this.scene, { builtin: name });
      this.fit = reply.fit;
      this.hasEnv = true;
      this.ok(`environment "${name}" loaded (fit u=${reply.fit.u.toFixed(3)})`);
    } catch (error) {
      if (error instanceof ServiceError && error.error === "NoDominantLight") {
        // stored anyway; explicit parameters still render
        this.fit = null;
        this.hasEnv = true;
        this.report(error);
      } else {
        this.report(error);
        return;
      }
    }
    for (const binding of this.panels) binding.panel.invalidate();
    this.resetButton.disabled = this.fit === null;
    if (this.fit) this.resetToFit();
    else this.requestAll();
  }

  private async refreshScenes(initial: boolean): Promise<void> {
    try {
      const reply = await this.client.scenes();
      if (initial) {
        this.sceneSelect.replaceChildren();
        for (const scene of reply.scenes) {
          const option = el("option", "", scene.id);
          option.value = scene.id;
          this.sceneSelect.append(option);
        }
        this.envButtons.replaceChildren(el("label", "", "environment"));
        for (const name of reply.builtin_environments) {
          const button = el("button", "", name);
          button.addEventListener("click", () => void this.loadEnv(name));
          this.envButtons.append(button);
        }
        this.envButtons.append(this.uploadControl());
        this.scene = reply.scenes[0]?.id ?? "";
        this.sceneSelect.value = this.scene;
      }
      const info = reply.scenes.find((s) => s.id === this.scene);
      this.hasEnv = info?.has_env ?? false;
      this.fit = info?.fit ?? null;
      this.resetButton.disabled = this.fit === null;
      this.ok(`${reply.scenes.length} scene(s) ready`);
      for (const binding of this.panels) binding.panel.invalidate();
      if (this.hasEnv) this.requestAll();
    } catch (error) {
      this.report(error);
    }
  }

  private uploadControl(): HTMLElement {
    const input = el("input");
    input.type = "file";
    input.accept = ".pfm,.hdr";
    input.addEventListener("change", () => {
      const file = input.files?.[0];
      if (!file) return;
      const format = file.name.toLowerCase().endsWith(".hdr") ? "hdr" : "pfm";
      const reader = new FileReader();
      reader.onload = () => {
        const data = String(reader.result ?? "");
        const b64 = data.slice(data.indexOf(",") + 1);
        void this.postUpload(b64, format);
      };
      reader.readAsDataURL(file);
    });
    return input;
  }

  private async postUpload(b64: string, format: "pfm" | "hdr"): Promise<void> {
    try {
      const reply = await this.client.postEnv(this.scene, {
        envmap_b64: b64,
        format,
      });
      this.fit = reply.fit;
      this.hasEnv = true;
      this.ok(`upload accepted (fit u=${reply.fit.u.toFixed(3)})`);
      for (const binding of this.panels) binding.panel.invalidate();
      this.resetToFit();
    } catch (error) {
      if (error instanceof ServiceError && error.error === "NoDominantLight") {
        this.fit = null;
        this.hasEnv = true;
        this.resetButton.disabled = true;
        this.report(error);
        for (const binding of this.panels) binding.panel.invalidate();
        this.requestAll();
      } else {
        this.report(error);
      }
    }
  }

  async start(): Promise<void> {
    if (!(await this.client.health())) {
      this.report(new Error("service unreachable; start `compose-kit serve`"));
      return;
    }
    await this.refreshScenes(true);
  }
}

const baseUrl =
  new URLSearchParams(window.location.search).get("service") ??
  "http://127.0.0.1:8000";
const root = document.getElementById("app");
if (root) {
  void new EditorApp(root, baseUrl).start();
}
