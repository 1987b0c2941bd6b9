// Typed client for the documented session endpoints. Every request the
// console makes goes through here, so the contract tests can replay the
// whole corpus against the backend schema.

import type { Mode, OfficerSignal, SessionState, DecisionPayload } from "./types.js";

export interface CreateSessionResponse {
  session_id: string;
}

export interface InstructionResponse {
  decision: DecisionPayload;
  state: SessionState;
}

export interface StepResponse {
  state: SessionState;
  events: unknown[];
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  if (!resp.ok) {
    let detail = `${resp.status}`;
    try {
      const body = (await resp.json()) as { detail?: { message?: string } };
      detail = body.detail?.message ?? detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new Error(`API error: ${detail}`);
  }
  return (await resp.json()) as T;
}

function post<T>(url: string, body: unknown): Promise<T> {
  return request<T>(url, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
}

export class SessionApi {
  constructor(private baseUrl: string = "") {}

  createSession(mode: Mode, seed: number, driver: string): Promise<CreateSessionResponse> {
    return post(`${this.baseUrl}/api/sessions`, { mode, seed, driver });
  }

  getState(sessionId: string): Promise<SessionState> {
    return request(`${this.baseUrl}/api/sessions/${sessionId}/state`);
  }

  postInstruction(sessionId: string, text: string): Promise<InstructionResponse> {
    return post(`${this.baseUrl}/api/sessions/${sessionId}/instruction`, { text });
  }

  postOfficer(sessionId: string, signal: OfficerSignal): Promise<{ state: SessionState }> {
    return post(`${this.baseUrl}/api/sessions/${sessionId}/officer`, { signal });
  }

  step(sessionId: string): Promise<StepResponse> {
    return post(`${this.baseUrl}/api/sessions/${sessionId}/step`, {});
  }

  reset(sessionId: string, seed: number | null): Promise<{ state: SessionState }> {
    return post(`${this.baseUrl}/api/sessions/${sessionId}/reset`, { seed });
  }

  getTranscript(sessionId: string): Promise<{ history: DecisionPayload[] }> {
    return request(`${this.baseUrl}/api/sessions/${sessionId}/transcript`);
  }
}

export function wsUrl(sessionId: string, base: string = ""): string {
  if (base) {
    return `${base.replace(/^http/, "ws")}/ws/sessions/${sessionId}`;
  }
  const proto = window.location.protocol === "https:" ? "wss:" : "ws:";
  return `${proto}//${window.location.host}/ws/sessions/${sessionId}`;
}
