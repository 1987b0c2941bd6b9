// The view model is a pure reduction of server events; the renderer never
// invents state the backend did not send.

import type {
  DecisionPayload,
  PocObjectPayload,
  SessionState,
  ViolationPayload,
  WsEvent,
} from "./types.js";

export type ConnectionStatus = "disconnected" | "connecting" | "live" | "error";

export interface ViewModel {
  sessionId: string | null;
  state: SessionState | null;
  lastDecision: DecisionPayload | null;
  violations: ViolationPayload[];
  connection: ConnectionStatus;
  errorMessage: string | null;
}

export function emptyModel(): ViewModel {
  return {
    sessionId: null,
    state: null,
    lastDecision: null,
    violations: [],
    connection: "disconnected",
    errorMessage: null,
  };
}

export function applyEvent(model: ViewModel, event: WsEvent): ViewModel {
  switch (event.type) {
    case "state":
      return {
        ...model,
        sessionId: event.payload.session_id,
        state: event.payload,
        lastDecision: event.payload.latest_decision ?? model.lastDecision,
        violations: event.payload.violations ?? model.violations,
      };
    case "decision":
      return { ...model, lastDecision: event.payload };
    case "violation":
      return { ...model, violations: [...model.violations, event.payload] };
  }
}

export function setConnection(
  model: ViewModel,
  connection: ConnectionStatus,
  errorMessage: string | null = null,
): ViewModel {
  return { ...model, connection, errorMessage };
}

/** The object a poc "go" decision points at, for the heading line. */
export function headingTarget(model: ViewModel): PocObjectPayload | null {
  const command = model.lastDecision?.command;
  if (!command || command.action !== "go" || command.destination_id === undefined) {
    return null;
  }
  const objects = model.state?.objects ?? [];
  return objects.find((o) => o.id === command.destination_id) ?? null;
}

export function decisionLabel(decision: DecisionPayload | null): string {
  if (!decision) return "—";
  if (decision.decision) return decision.decision.action;
  if (decision.command) {
    return decision.command.action === "go"
      ? `go → object ${decision.command.destination_id}`
      : "stop";
  }
  if (decision.error) return `parse error: ${decision.error.kind}`;
  return "—";
}

export function decisionReason(decision: DecisionPayload | null): string {
  return decision?.decision?.reason ?? "";
}
