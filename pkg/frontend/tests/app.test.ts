// DOM-level behavior of the single-page app against a stubbed API.
import { beforeEach, describe, expect, it } from "vitest";
import { Api, type SceneInfo } from "../src/api";
import { App } from "../src/app";
import { imageToScreen } from "../src/transform";

const SCENE: SceneInfo = {
  id: "scene_000",
  dims: { w: 64, h: 64, d: 64 },
  n_tilts: 5,
  angles_deg: [-30, -15, 0, 15, 30],
};

function stubApi() {
  const serverPrompts: unknown[] = [];
  let inferCount = 0;
  const fetchFn = (async (url: string, init?: RequestInit) => {
    const method = init?.method ?? "GET";
    const path = url.split("?")[0];
    const ok = (body: unknown) => new Response(JSON.stringify(body), { status: 200 });
    if (method === "GET" && path === "/scenes") return ok([SCENE]);
    if (method === "POST" && path === "/sessions") return ok({ session_id: "sess1" });
    if (method === "POST" && path === "/sessions/sess1/prompts") {
      const items = JSON.parse(String(init?.body)).items;
      serverPrompts.push(...items);
      return ok({ count: serverPrompts.length });
    }
    if (method === "GET" && path === "/sessions/sess1/prompts") return ok({ items: serverPrompts });
    if (method === "DELETE" && path === "/sessions/sess1/prompts") {
      serverPrompts.length = 0;
      return ok({ count: 0 });
    }
    if (method === "POST" && path === "/sessions/sess1/infer") {
      inferCount += 1;
      return ok({
        items: [{ x: 32, y: 32, z: 32, d: 10, class: 1, score: 0.9 }],
        runtime_s: 0.01,
        peak_mem_bytes: 0,
        model_hash: "h",
      });
    }
    if (method === "GET" && path === "/sessions/sess1/detections") {
      const tilt = Number(new URL(url, "http://x").searchParams.get("tilt"));
      return ok({
        items: [{ tilt_index: tilt, x: 32, y: 32, d: 10, class: 1, score: 0.9 }],
        theta_deg: SCENE.angles_deg[tilt],
      });
    }
    if (method === "GET" && path === "/prototypes") return ok([]);
    return new Response(JSON.stringify({ detail: `no stub: ${method} ${path}` }), { status: 404 });
  }) as unknown as typeof fetch;
  return { api: new Api("", fetchFn), serverPrompts, inferCounter: () => inferCount };
}

function makeApp() {
  const root = document.createElement("div");
  document.body.appendChild(root);
  const { api, serverPrompts, inferCounter } = stubApi();
  const app = new App(root, api, {
    ctx: null,
    imageLoader: (url) => ({ src: url, decoded: Promise.resolve() }),
  });
  return { app, root, serverPrompts, inferCounter };
}

describe("app", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("starts on the nearest-zero tilt with the angle label", async () => {
    const { app } = makeApp();
    await app.start();
    expect(app.tiltIndex).toBe(2);
    expect(app.thetaLabel.textContent).toContain("0.0");
  });

  it("caches tilt images so each png is requested once", async () => {
    const { app } = makeApp();
    await app.start();
    app.setTilt(1);
    app.setTilt(2);
    app.setTilt(1);
    app.setTilt(1);
    const ones = app.requestedUrls.filter((u) => u.endsWith("/1.png"));
    expect(ones).toHaveLength(1);
  });

  it("click posts the image pixel under the view transform", async () => {
    const { app, serverPrompts } = makeApp();
    await app.start();
    const target: [number, number] = [20.25, 40.5];
    const [sx, sy] = imageToScreen(app.view, target[0], target[1]);
    await app.clickAt(sx, sy);
    expect(serverPrompts).toHaveLength(1);
    const posted = serverPrompts[0] as { x: number; y: number; tilt_index: number };
    expect(Math.abs(posted.x - target[0])).toBeLessThan(1e-9);
    expect(Math.abs(posted.y - target[1])).toBeLessThan(1e-9);
    expect(posted.tilt_index).toBe(2);
  });

  it("zero-only mode blocks clicks on other tilts", async () => {
    const { app, serverPrompts } = makeApp();
    await app.start();
    app.prompts.zeroOnlyMode = true;
    app.setTilt(0);
    await app.clickAt(320, 320);
    expect(serverPrompts).toHaveLength(0);
    expect(app.status).toContain("0°-only");
    app.setTilt(2);
    await app.clickAt(320, 320);
    expect(serverPrompts).toHaveLength(1);
  });

  it("prompt list round-trips with the server after edits", async () => {
    const { app, serverPrompts } = makeApp();
    await app.start();
    await app.clickAt(100, 100);
    await app.clickAt(200, 200);
    await app.clickAt(300, 300);
    await app.removeAt(1);
    expect(serverPrompts).toEqual(app.prompts.items);
    const sorted = (l: unknown[]) => JSON.stringify(l);
    const fromServer = await app.api.getPrompts(app.sessionId!);
    expect(sorted(fromServer.items)).toBe(sorted(app.prompts.items));
  });

  it("clear-all empties both sides and the overlay", async () => {
    const { app, serverPrompts } = makeApp();
    await app.start();
    await app.clickAt(100, 100);
    await app.runInference();
    expect(app.overlays.size).toBeGreaterThan(0);
    await app.clearAll();
    expect(serverPrompts).toHaveLength(0);
    expect(app.prompts.items).toHaveLength(0);
    expect(app.overlays.size).toBe(0);
  });

  it("runs inference and loads the overlay for the current tilt", async () => {
    const { app } = makeApp();
    await app.start();
    await app.clickAt(100, 100);
    await app.runInference();
    const boxes = app.overlays.get(2)!;
    expect(boxes).toHaveLength(1);
    expect(app.status).toContain("1 detections");
  });

  it("shows 'inference in progress' on 409", async () => {
    const root = document.createElement("div");
    document.body.appendChild(root);
    const fetchFn = (async (url: string, init?: RequestInit) => {
      const method = init?.method ?? "GET";
      if (method === "GET" && url.split("?")[0] === "/scenes") {
        return new Response(JSON.stringify([SCENE]), { status: 200 });
      }
      if (method === "POST" && url === "/sessions") {
        return new Response(JSON.stringify({ session_id: "s" }), { status: 200 });
      }
      return new Response(JSON.stringify({ detail: "inference already running" }), { status: 409 });
    }) as unknown as typeof fetch;
    const app = new App(root, new Api("", fetchFn), {
      ctx: null,
      imageLoader: (url) => ({ src: url, decoded: Promise.resolve() }),
    });
    await app.start();
    await app.runInference();
    expect(app.status).toBe("inference in progress");
  });
});
