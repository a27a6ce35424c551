/**
 * Browser bootstrap: parse the URL, build the viewer, wire mouse and
 * keyboard controls, and run the render loop.
 */

import { orbited, panned } from "./camera.js";
import { ServiceClient } from "./client.js";
import { parseViewerConfig } from "./config.js";
import { renderScene } from "./render.js";
import { LayerName, Viewer } from "./viewer.js";

function fail(message: string): never {
  const banner = document.getElementById("banner")!;
  banner.textContent = message;
  banner.hidden = false;
  throw new Error(message);
}

function start(): void {
  let config;
  try {
    config = parseViewerConfig(window.location.search);
  } catch (err) {
    fail(err instanceof Error ? err.message : String(err));
  }

  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const banner = document.getElementById("banner")!;

  const viewer = new Viewer({
    client: new ServiceClient(config.service, config.dataset),
    globalBox: config.globalBox,
    pointBudget: config.pointBudget,
    boxBudget: config.boxBudget,
    cacheSize: config.cacheSize,
  });

  for (const name of ["points", "kdboxes", "delaunay", "voronoi"] as LayerName[]) {
    const toggle = document.getElementById(`layer-${name}`) as HTMLInputElement;
    toggle.checked = viewer.layers[name].enabled;
    toggle.addEventListener("change", () => {
      viewer.setLayer(name, toggle.checked);
      const state = viewer.layers[name];
      toggle.disabled = !state.available;
      toggle.parentElement!.title = state.note ?? "";
    });
  }

  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("mousedown", (ev) => {
    dragging = true;
    lastX = ev.clientX;
    lastY = ev.clientY;
  });
  window.addEventListener("mouseup", () => {
    dragging = false;
  });
  window.addEventListener("mousemove", (ev) => {
    if (!dragging) return;
    const dx = ev.clientX - lastX;
    const dy = ev.clientY - lastY;
    lastX = ev.clientX;
    lastY = ev.clientY;
    const next = ev.shiftKey
      ? panned(viewer.camera, -dx, dy)
      : orbited(viewer.camera, -dx * 0.005, dy * 0.005);
    viewer.onCameraChange(next);
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    viewer.zoomBy(ev.deltaY > 0 ? 1.25 : 0.8);
  });

  function resize(): void {
    canvas.width = canvas.clientWidth;
    canvas.height = canvas.clientHeight;
    viewer.camera = { ...viewer.camera, aspect: canvas.width / Math.max(1, canvas.height) };
  }
  window.addEventListener("resize", resize);
  resize();

  viewer.start();

  let lastRevision = -1;
  let lastCamera = viewer.camera;
  function frame(): void {
    const layerNotes = (Object.keys(viewer.layers) as LayerName[])
      .filter((name) => viewer.layers[name].note !== null)
      .map((name) => `${name}: ${viewer.layers[name].note}`);
    const text = viewer.banner ?? layerNotes.join(" | ");
    banner.textContent = text;
    banner.hidden = text === "";
    viewer.tick((scene) => {
      if (scene.revision === lastRevision && viewer.camera === lastCamera) return;
      lastRevision = scene.revision;
      lastCamera = viewer.camera;
      renderScene(ctx, scene, viewer.camera, canvas.width, canvas.height);
    });
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

start();
