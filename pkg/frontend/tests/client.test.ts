import { describe, expect, it } from "vitest";

import { BINARY_THRESHOLD, ServiceClient, ServiceError } from "../src/client.js";
import { Box3 } from "../src/geometry.js";
import { jsonResponse, makePoints, MockService } from "./mock.js";

const GLOBAL: Box3 = { lo: [-10, -10, -10], hi: [10, 10, 10] };

function world() {
  const service = new MockService(makePoints(400, GLOBAL), GLOBAL);
  return { service, client: new ServiceClient("http://mock", "mock", service.fetch) };
}

describe("content negotiation", () => {
  it("asks for JSON at or below the binary threshold", async () => {
    const { service, client } = world();
    const result = await client.sample(GLOBAL, 32);
    expect(service.calls[0]!.accept).toBe("application/json");
    expect(result.ids.length).toBe(32);
    expect(result.dim).toBe(3);
    expect(result.scalar).not.toBeNull();
  });

  it("switches to the binary column encoding above the threshold", async () => {
    const { service, client } = world();
    const result = await client.sample(GLOBAL, BINARY_THRESHOLD + 1);
    expect(service.calls[0]!.accept).toBe("application/octet-stream");
    expect(result.ids.length).toBe(400); // every point; the box holds no more
    expect(result.coords.length).toBe(400 * 3);
  });

  it("decodes both encodings to the same rows", async () => {
    // The box holds only 200 points, so a JSON request for all of them
    // and a binary request for far more return the same rows.
    const service = new MockService(makePoints(200, GLOBAL), GLOBAL);
    const client = new ServiceClient("http://mock", "mock", service.fetch);
    const viaJson = await client.sample(GLOBAL, 200);
    const viaBinary = await client.sample(GLOBAL, BINARY_THRESHOLD + 1);
    expect(service.calls.map((c) => c.accept)).toEqual([
      "application/json",
      "application/octet-stream",
    ]);
    expect(viaBinary.ids).toEqual(viaJson.ids);
    expect(Array.from(viaBinary.coords)).toEqual(Array.from(viaJson.coords));
    expect(Array.from(viaBinary.scalar!)).toEqual(Array.from(viaJson.scalar!));
  });
});

describe("error mapping", () => {
  it("surfaces the server's error body as a ServiceError", async () => {
    const client = new ServiceClient("http://mock", "mock", async () =>
      jsonResponse({ schema_version: 1, error: "result exceeds the row cap", stats: { cap: 10, matched: 99 } }, 413),
    );
    const err = await client.sample(GLOBAL, 5).catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(413);
    expect(err.message).toBe("result exceeds the row cap");
    expect(err.stats.matched).toBe(99);
  });

  it("falls back to a status-line message on an unreadable body", async () => {
    const client = new ServiceClient("http://mock", "mock", async () =>
      new Response("gateway timeout", { status: 504 }),
    );
    const err = await client.kdboxes(GLOBAL, 5).catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(504);
    expect(err.message).toContain("504");
  });
});

describe("endpoint payloads", () => {
  it("parses kd-boxes", async () => {
    const { client } = world();
    const result = await client.kdboxes(GLOBAL, 500);
    expect(result.boxes.length).toBeGreaterThanOrEqual(500);
    const box = result.boxes[0]!;
    expect(box.lo.length).toBe(3);
    expect(box.hi.length).toBe(3);
    expect(box.level).toBeGreaterThan(0);
  });

  it("parses adjacency edges with seed positions", async () => {
    const { client } = world();
    const result = await client.delaunayEdges(GLOBAL, 1);
    expect(result.edges.length).toBeGreaterThan(0);
    expect(result.seedIds.length).toBe(result.seedCoords.length);
    expect(result.level.cells).toBeGreaterThan(0);
  });

  it("parses voronoi cells with volumes", async () => {
    const { client } = world();
    const result = await client.voronoiCells(GLOBAL, 9);
    expect(result.cells.length).toBeGreaterThanOrEqual(9);
    for (const cell of result.cells) {
      expect(cell.volume).toBeGreaterThan(0);
      expect(cell.seed.length).toBe(3);
    }
  });
});
