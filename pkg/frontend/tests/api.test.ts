import { describe, expect, it } from "vitest";
import { Api, ApiError } from "../src/api";

type Call = { url: string; init?: RequestInit };

function mockFetch(responses: Record<string, unknown>, status = 200) {
  const calls: Call[] = [];
  const fetchFn = (async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const key = `${init?.method ?? "GET"} ${url.split("?")[0]}`;
    const body = responses[key];
    if (body === undefined) {
      return new Response(JSON.stringify({ detail: `no stub for ${key}` }), { status: 404 });
    }
    return new Response(JSON.stringify(body), { status });
  }) as unknown as typeof fetch;
  return { fetchFn, calls };
}

describe("api client", () => {
  it("creates sessions and round-trips prompts", async () => {
    const { fetchFn, calls } = mockFetch({
      "POST /sessions": { session_id: "abc" },
      "POST /sessions/abc/prompts": { count: 1 },
      "GET /sessions/abc/prompts": { items: [{ tilt_index: 0, x: 1, y: 2, d: 3, class: 1 }] },
    });
    const api = new Api("", fetchFn);
    const sid = await api.createSession("scene_000");
    expect(sid).toBe("abc");
    await api.addPrompts(sid, [{ tilt_index: 0, x: 1, y: 2, d: 3, class: 1 }]);
    const body = JSON.parse(String(calls[1].init?.body));
    expect(body.items[0]).toEqual({ tilt_index: 0, x: 1, y: 2, d: 3, class: 1 });
    const stored = await api.getPrompts(sid);
    expect(stored.items).toHaveLength(1);
  });

  it("surfaces structured errors with status codes", async () => {
    const fetchFn = (async () =>
      new Response(JSON.stringify({ detail: "inference already running" }), { status: 409 })
    ) as unknown as typeof fetch;
    const api = new Api("", fetchFn);
    await expect(api.infer("s")).rejects.toThrowError(ApiError);
    try {
      await api.infer("s");
    } catch (err) {
      expect((err as ApiError).status).toBe(409);
      expect((err as ApiError).message).toContain("already running");
    }
  });

  it("passes prototype ids through infer", async () => {
    const { fetchFn, calls } = mockFetch({
      "POST /sessions/s/infer": { items: [], runtime_s: 0, peak_mem_bytes: 0, model_hash: "h" },
    });
    const api = new Api("", fetchFn);
    await api.infer("s", "proto_1");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ use_prototypes: "proto_1" });
  });

  it("builds tilt image urls from the base", () => {
    const api = new Api("http://x:1");
    expect(api.tiltImageUrl("scene_000", 4)).toBe("http://x:1/scenes/scene_000/tilts/4.png");
  });
});
