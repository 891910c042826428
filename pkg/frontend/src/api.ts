// HTTP client for the matting service.

import { Interaction, PredictResponse, SessionInfo } from "./types.js";

export class MattingApi {
  constructor(private readonly baseUrl: string = "") {}

  async health(): Promise<{ status: string; model_id: string }> {
    const r = await fetch(`${this.baseUrl}/api/health`);
    if (!r.ok) throw new Error(`health check failed: ${r.status}`);
    return r.json();
  }

  async createSession(file: Blob, filename = "image.png"): Promise<SessionInfo> {
    const form = new FormData();
    form.append("file", file, filename);
    const r = await fetch(`${this.baseUrl}/api/session`, { method: "POST", body: form });
    if (!r.ok) throw new Error(`session upload failed: ${r.status} ${await r.text()}`);
    return r.json();
  }

  async predict(sessionId: string, interaction: Interaction): Promise<PredictResponse> {
    const r = await fetch(`${this.baseUrl}/api/predict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, interaction }),
    });
    if (!r.ok) {
      const detail = await r.text();
      throw new Error(`predict failed: ${r.status} ${detail}`);
    }
    return r.json();
  }

  async history(sessionId: string): Promise<{ session_id: string; history: unknown[] }> {
    const r = await fetch(`${this.baseUrl}/api/session/${sessionId}/history`);
    if (!r.ok) throw new Error(`history failed: ${r.status}`);
    return r.json();
  }
}
