/**
 * What is currently on screen: one geometry set per endpoint kind,
 * tagged with the box it was fetched for.  The render loop draws
 * whatever is here; fetch completions swap sets in, so stale geometry
 * stays visible until something newer lands.
 */

import { EndpointKind, Payload } from "./cache.js";
import { Box3 } from "./geometry.js";

export interface SceneEntry {
  payload: Payload;
  box: Box3;
  /** True when the set came out of the cache rather than the network. */
  fromCache: boolean;
}

export class Scene {
  private layers = new Map<EndpointKind, SceneEntry>();

  /** Bumped on every content change; lets a renderer skip idle frames. */
  revision = 0;

  set(kind: EndpointKind, payload: Payload, box: Box3, fromCache: boolean): void {
    this.layers.set(kind, { payload, box, fromCache });
    this.revision++;
  }

  clear(kind: EndpointKind): void {
    if (this.layers.delete(kind)) this.revision++;
  }

  get(kind: EndpointKind): SceneEntry | undefined {
    return this.layers.get(kind);
  }

  kinds(): EndpointKind[] {
    return [...this.layers.keys()];
  }
}
