// Typed client for the detection service. The UI performs no geometry of its
// own: projected overlay boxes always come from the server.

export type SceneInfo = {
  id: string;
  dims: { w: number; h: number; d: number };
  n_tilts: number;
  angles_deg: number[];
};

export type PromptItem = {
  tilt_index: number;
  x: number;
  y: number;
  d: number;
  class: number;
};

export type DetectionItem = {
  x: number;
  y: number;
  z: number;
  d: number;
  class: number;
  score: number;
};

export type DetectionFile = {
  items: DetectionItem[];
  runtime_s: number;
  peak_mem_bytes: number;
  model_hash: string;
};

export type OverlayBox = {
  tilt_index: number;
  x: number;
  y: number;
  d: number;
  class: number;
  score: number;
};

export type PrototypeInfo = {
  proto_id: string;
  classes: number[];
  C: number;
  source_scene: string;
};

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class Api {
  constructor(private base: string = "", private fetchFn: typeof fetch = fetch.bind(globalThis)) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(`${this.base}${path}`, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = await res.json();
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail ?? body);
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(res.status, detail);
    }
    return res.json() as Promise<T>;
  }

  listScenes(): Promise<SceneInfo[]> {
    return this.request("/scenes");
  }

  tiltImageUrl(sceneId: string, index: number): string {
    return `${this.base}/scenes/${sceneId}/tilts/${index}.png`;
  }

  async createSession(sceneId: string): Promise<string> {
    const body = await this.request<{ session_id: string }>("/sessions", {
      method: "POST",
      body: JSON.stringify({ scene_id: sceneId }),
    });
    return body.session_id;
  }

  addPrompts(sessionId: string, items: PromptItem[]): Promise<{ count: number }> {
    return this.request(`/sessions/${sessionId}/prompts`, {
      method: "POST",
      body: JSON.stringify({ items }),
    });
  }

  getPrompts(sessionId: string): Promise<{ items: PromptItem[] }> {
    return this.request(`/sessions/${sessionId}/prompts`);
  }

  clearPrompts(sessionId: string): Promise<{ count: number }> {
    return this.request(`/sessions/${sessionId}/prompts`, { method: "DELETE" });
  }

  infer(sessionId: string, usePrototypes?: string): Promise<DetectionFile> {
    return this.request(`/sessions/${sessionId}/infer`, {
      method: "POST",
      body: JSON.stringify(usePrototypes ? { use_prototypes: usePrototypes } : {}),
    });
  }

  overlay(sessionId: string, tilt: number): Promise<{ items: OverlayBox[]; theta_deg: number }> {
    return this.request(`/sessions/${sessionId}/detections?tilt=${tilt}`);
  }

  savePrototypes(sessionId: string): Promise<{ proto_id: string }> {
    return this.request("/prototypes", {
      method: "POST",
      body: JSON.stringify({ session_id: sessionId }),
    });
  }

  listPrototypes(): Promise<PrototypeInfo[]> {
    return this.request("/prototypes");
  }
}
