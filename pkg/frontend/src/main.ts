/**
 * Three-panel annotation page: object picker, placement canvas, live preview.
 *
 * All compositing pixels come from GET /preview; this page only does
 * coordinate transforms. The canvas shows the background at `viewScale`
 * (fit-to-panel); every bbox sent to the server is in image pixels.
 */

import { ApiClient, AssetEntry } from "./api.js";
import { imageToScreen, screenToImage } from "./coords.js";
import { PreviewController } from "./preview.js";
import {
  PlacementState,
  commitBody,
  drag,
  initialState,
  scale,
  selectBackground,
  selectObject,
} from "./state.js";

const PANEL_SIZE = 384;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  parent?: HTMLElement,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  parent?.appendChild(node);
  return node;
}

export function mount(root: HTMLElement, api: ApiClient = new ApiClient()): void {
  root.innerHTML = "";
  const bar = el("div", { class: "statusbar" }, root);
  const row = el("div", { class: "panels" }, root);
  const pickerPanel = el("div", { class: "panel picker" }, row);
  const canvasPanel = el("div", { class: "panel canvas" }, row);
  const previewPanel = el("div", { class: "panel preview" }, row);

  el("h2", {}, pickerPanel).textContent = "Objects";
  const objectList = el("div", { class: "asset-list" }, pickerPanel);
  el("h2", {}, pickerPanel).textContent = "Backgrounds";
  const backgroundList = el("div", { class: "asset-list" }, pickerPanel);

  el("h2", {}, canvasPanel).textContent = "Placement";
  const canvas = el("canvas", {
    width: String(PANEL_SIZE),
    height: String(PANEL_SIZE),
  }, canvasPanel);
  const controls = el("div", { class: "controls" }, canvasPanel);
  const scaleDown = el("button", {}, controls);
  scaleDown.textContent = "−";
  const scaleUp = el("button", {}, controls);
  scaleUp.textContent = "+";
  const commitBtn = el("button", { class: "commit" }, controls);
  commitBtn.textContent = "Commit annotation";

  el("h2", {}, previewPanel).textContent = "Preview";
  const previewImg = el("img", { alt: "copy-paste preview" }, previewPanel);

  let state: PlacementState = initialState();
  let viewScale = 1;
  const bgImage = new Image();

  const setStatus = (text: string, isError = false) => {
    bar.textContent = text;
    bar.classList.toggle("error", isError);
  };

  const previews = new PreviewController<Blob>(
    () => {
      const { objectId, backgroundId, bbox } = state;
      if (!objectId || !backgroundId || !bbox) return Promise.reject(new Error("incomplete"));
      return api.fetchPreview(objectId, backgroundId, bbox);
    },
    (blob) => {
      const url = URL.createObjectURL(blob);
      previewImg.onload = () => URL.revokeObjectURL(url);
      previewImg.src = url;
    },
    (err) => setStatus(String(err), true),
  );

  function redraw(): void {
    const ctx = canvas.getContext("2d")!;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (!state.background) return;
    viewScale = Math.min(
      PANEL_SIZE / state.background.width,
      PANEL_SIZE / state.background.height,
    );
    ctx.drawImage(
      bgImage,
      0,
      0,
      state.background.width * viewScale,
      state.background.height * viewScale,
    );
    if (state.bbox) {
      const [sx, sy] = imageToScreen(state.bbox.x, state.bbox.y, viewScale);
      ctx.strokeStyle = "#e33";
      ctx.lineWidth = 2;
      ctx.strokeRect(sx, sy, state.bbox.w * viewScale, state.bbox.h * viewScale);
    }
  }

  function update(next: PlacementState, refreshPreview = true): void {
    state = next;
    redraw();
    if (refreshPreview && state.bbox) previews.request();
  }

  async function loadAssets(): Promise<void> {
    const [objects, backgrounds] = await Promise.all([
      api.listAssets("object"),
      api.listAssets("background"),
    ]);
    const fill = (
      container: HTMLElement,
      entries: AssetEntry[],
      onPick: (e: AssetEntry) => void,
    ) => {
      container.innerHTML = "";
      for (const entry of entries) {
        const img = el("img", {
          src: api.assetImageUrl(entry.id),
          title: entry.id,
          class: "thumb",
        }, container);
        img.addEventListener("click", () => onPick(entry));
      }
    };
    fill(objectList, objects, (e) =>
      update(selectObject(state, e.id, { width: e.width, height: e.height })),
    );
    fill(backgroundList, backgrounds, (e) => {
      bgImage.onload = () => redraw();
      bgImage.src = api.assetImageUrl(e.id);
      update(selectBackground(state, e.id, { width: e.width, height: e.height }));
    });
  }

  // drag in screen pixels, applied in image pixels
  let dragging = false;
  let last: [number, number] | null = null;
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    last = [ev.offsetX, ev.offsetY];
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!dragging || !last || !state.bbox) return;
    const [ix0, iy0] = screenToImage(last[0], last[1], viewScale);
    const [ix1, iy1] = screenToImage(ev.offsetX, ev.offsetY, viewScale);
    last = [ev.offsetX, ev.offsetY];
    update(drag(state, ix1 - ix0, iy1 - iy0));
  });
  canvas.addEventListener("pointerup", () => {
    dragging = false;
    last = null;
  });

  scaleUp.addEventListener("click", () => update(scale(state, 1.1)));
  scaleDown.addEventListener("click", () => update(scale(state, 1 / 1.1)));

  commitBtn.addEventListener("click", async () => {
    try {
      const record = await api.createAnnotation(commitBody(state));
      setStatus(`committed annotation ${record.id}`);
      update({ ...initialState() }, false);
      previewImg.removeAttribute("src");
    } catch (err) {
      // keep the placement so the user can fix and retry
      setStatus(String(err), true);
    }
  });

  setStatus("pick an object and a background");
  loadAssets().catch((err) => setStatus(`failed to load assets: ${err}`, true));
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mount(document.getElementById("app")!);
}
