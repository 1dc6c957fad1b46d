import { describe, expect, it } from "vitest";

import { ApiError } from "../src/api.js";
import { stubClient } from "./helpers.js";

describe("ApiClient", () => {
  it("posts the session request as JSON and returns the parsed payload", async () => {
    const { client, calls } = stubClient(() => ({
      json: { schema: "favorita", app: "batch", threads: 1, queries: ["Q1"], jointree: { nodes: [], edges: [], roots: {} } },
    }));
    const info = await client.createSession({ schema: "favorita", app: { kind: "batch" } });
    expect(info.schema).toBe("favorita");
    expect(calls).toHaveLength(1);
    expect(calls[0].method).toBe("POST");
    expect(calls[0].path).toBe("/session");
    expect(calls[0].body).toEqual({ schema: "favorita", app: { kind: "batch" } });
  });

  it("turns an error body into an ApiError with the server's message", async () => {
    const { client } = stubClient(() => ({
      status: 409,
      json: { error: "no active session; POST /session first" },
    }));
    const err = await client.jointree().catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).message).toBe("no active session; POST /session first");
  });

  it("falls back to a generic message when the error body is not JSON", async () => {
    const { client } = stubClient(() => ({ status: 500 }));
    const err = await client.groups().catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).message).toBe("GET /groups failed");
  });

  it("encodes view filters as query parameters", async () => {
    const { client, calls } = stubClient(() => ({ json: { views: [], queries: [] } }));
    await client.views({ direction: "Items->Sales" });
    await client.views({ node: "Sales" });
    const q1 = new URLSearchParams(calls[0].path.split("?")[1]);
    expect(q1.get("direction")).toBe("Items->Sales");
    const q2 = new URLSearchParams(calls[1].path.split("?")[1]);
    expect(q2.get("node")).toBe("Sales");
  });

  it("sends root reassignments and probe points with the documented bodies", async () => {
    const { client, calls } = stubClient((call) => {
      if (call.path.includes("/root")) {
        return { json: { query: "Q1", root: "Items", jointree: { nodes: [], edges: [], roots: {} }, views: [], queries: [] } };
      }
      return { json: { index: 0, centroid: [1, 2], distance: 0.5 } };
    });
    await client.reassignRoot("Q1", "Items");
    await client.assign([1.5, -2]);
    expect(calls[0].path).toBe("/queries/Q1/root");
    expect(calls[0].body).toEqual({ node: "Items" });
    expect(calls[1].path).toBe("/rkmeans/assign");
    expect(calls[1].body).toEqual({ point: [1.5, -2] });
  });
});
