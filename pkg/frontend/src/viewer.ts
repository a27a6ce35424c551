/**
 * The viewer core: camera changes in, scene updates out.
 *
 * Wiring rules, all enforced here rather than in the UI layer:
 *
 * - every camera change re-evaluates each enabled layer against the
 *   geometry cache; only misses touch the network;
 * - the frame path (`tick`) never awaits anything; fetches complete
 *   in the background and swap geometry into the scene when they are
 *   still the latest of their kind;
 * - at most one request per endpoint kind is in flight, with latest-
 *   wins coalescing, so a camera scrub costs at most one follow-up
 *   request per kind;
 * - a failed fetch shows a banner and retries with exponential
 *   backoff while the scene keeps rendering whatever it has.
 */

import { EndpointKind, GeometryCache, Payload } from "./cache.js";
import { CameraState, defaultCamera, viewBox, zoomed } from "./camera.js";
import { ServiceClient, ServiceError } from "./client.js";
import { Box3 } from "./geometry.js";
import { Scene } from "./scene.js";
import { RequestScheduler } from "./scheduler.js";

export type LayerName = "points" | "kdboxes" | "delaunay" | "voronoi";

const LAYER_KINDS: Record<LayerName, EndpointKind> = {
  points: "sample",
  kdboxes: "kdboxes",
  delaunay: "delaunay_edges",
  voronoi: "voronoi_cells",
};

export interface LayerState {
  enabled: boolean;
  /** False when the server lacks the index this layer needs. */
  available: boolean;
  /** Shown as a tooltip when the layer is unavailable or capped. */
  note: string | null;
}

export interface ViewerOptions {
  client: ServiceClient;
  /** Data-space bound of the dataset; frames the camera, clips view boxes. */
  globalBox: Box3;
  /** Points asked of /sample per view. */
  pointBudget?: number;
  /** Minimum kd-boxes asked of /kdboxes per view. */
  boxBudget?: number;
  /** Minimum edges asked of /delaunay_edges per view. */
  edgeBudget?: number;
  /** Minimum cells asked of /voronoi_cells per view. */
  cellBudget?: number;
  cacheSize?: number;
  retryBaseMs?: number;
  retryCapMs?: number;
  /** Injectable timer so tests can drive the retry clock. */
  timer?: (fn: () => void, ms: number) => void;
}

export const DEFAULT_POINT_BUDGET = 100_000;
export const DEFAULT_BOX_BUDGET = 500;

export class Viewer {
  camera: CameraState;
  readonly scene = new Scene();
  readonly cache: GeometryCache;
  readonly scheduler = new RequestScheduler();
  readonly layers: Record<LayerName, LayerState> = {
    points: { enabled: true, available: true, note: null },
    kdboxes: { enabled: false, available: true, note: null },
    delaunay: { enabled: false, available: true, note: null },
    voronoi: { enabled: false, available: true, note: null },
  };

  /** Error banner text, or null when the service answers. */
  banner: string | null = null;
  /** Frames drawn so far; advances even while requests hang. */
  frameCount = 0;

  private readonly client: ServiceClient;
  private readonly globalBox: Box3;
  private readonly budgets: Record<LayerName, number>;
  private readonly retryBaseMs: number;
  private readonly retryCapMs: number;
  private readonly timer: (fn: () => void, ms: number) => void;
  private retryAttempts = 0;

  constructor(options: ViewerOptions) {
    this.client = options.client;
    this.globalBox = options.globalBox;
    this.cache = new GeometryCache(options.cacheSize);
    this.budgets = {
      points: options.pointBudget ?? DEFAULT_POINT_BUDGET,
      kdboxes: options.boxBudget ?? DEFAULT_BOX_BUDGET,
      delaunay: options.edgeBudget ?? 1,
      voronoi: options.cellBudget ?? 1,
    };
    this.retryBaseMs = options.retryBaseMs ?? 1000;
    this.retryCapMs = options.retryCapMs ?? 30_000;
    this.timer = options.timer ?? ((fn, ms) => setTimeout(fn, ms));
    this.camera = defaultCamera(options.globalBox);
  }

  /** Kick off the initial view. */
  start(): void {
    this.onCameraChange(this.camera);
  }

  /** The box all requests are currently phrased in. */
  currentViewBox(): Box3 | null {
    return viewBox(this.camera, this.globalBox);
  }

  onCameraChange(camera: CameraState): void {
    this.camera = camera;
    for (const name of Object.keys(this.layers) as LayerName[]) {
      if (this.layers[name].enabled && this.layers[name].available) {
        this.refreshLayer(name);
      }
    }
  }

  zoomBy(factor: number): void {
    this.onCameraChange(zoomed(this.camera, factor));
  }

  setLayer(name: LayerName, enabled: boolean): void {
    if (this.layers[name].enabled === enabled) return;
    this.layers[name].enabled = enabled;
    if (!enabled) {
      this.scene.clear(LAYER_KINDS[name]);
    } else if (this.layers[name].available) {
      this.refreshLayer(name);
    }
  }

  /**
   * Draw one frame.  Synchronous by design: geometry is whatever the
   * scene holds right now, never the result of an awaited fetch.
   */
  tick(draw?: (scene: Scene) => void): void {
    this.frameCount++;
    draw?.(this.scene);
  }

  private refreshLayer(name: LayerName): void {
    const kind = LAYER_KINDS[name];
    const box = this.currentViewBox();
    if (box === null) {
      this.scene.clear(kind);
      return;
    }
    const budget = this.budgets[name];
    const hit = this.cache.lookup(kind, box, budget);
    if (hit !== null) {
      this.scene.set(kind, hit, box, true);
      return;
    }
    this.scheduler.schedule(kind, {
      run: () => this.fetchKind(kind, box, budget),
      apply: (payload) => {
        this.cache.insert(kind, box, budget, payload as Payload);
        this.scene.set(kind, payload as Payload, box, false);
        this.banner = null;
        this.retryAttempts = 0;
        this.layers[name].note = null;
      },
      fail: (error) => this.onFetchError(name, error),
    });
  }

  private fetchKind(kind: EndpointKind, box: Box3, budget: number): Promise<Payload> {
    switch (kind) {
      case "sample":
        return this.client.sample(box, budget);
      case "kdboxes":
        return this.client.kdboxes(box, budget);
      case "delaunay_edges":
        return this.client.delaunayEdges(box, budget);
      case "voronoi_cells":
        return this.client.voronoiCells(box, budget);
    }
  }

  private onFetchError(name: LayerName, error: unknown): void {
    if (error instanceof ServiceError && error.status === 400) {
      // The dataset lacks the index behind this layer; a retry cannot fix it.
      this.layers[name].available = false;
      this.layers[name].note = error.message;
      this.scene.clear(LAYER_KINDS[name]);
      return;
    }
    if (error instanceof ServiceError && error.status === 413) {
      const matched = error.stats.matched ?? 0;
      this.layers[name].note =
        `result over the row cap (${matched} matched); zoom in to narrow the view`;
      return;
    }
    this.retryAttempts++;
    const delay = Math.min(
      this.retryBaseMs * 2 ** (this.retryAttempts - 1),
      this.retryCapMs,
    );
    const reason = error instanceof Error ? error.message : String(error);
    this.banner = `service unreachable (${reason}); retrying in ${Math.round(delay / 1000)}s`;
    this.timer(() => {
      if (this.layers[name].enabled && this.layers[name].available) {
        this.refreshLayer(name);
      }
    }, delay);
  }
}
