// Payload shapes of the session API. The console renders exclusively from
// these; there is no client-side physics.

export type Mode = "highway" | "poc";
export type OfficerSignal = "absent" | "go" | "stop";

export interface EgoPayload {
  lane: "right" | "left";
  speed_kmh: number;
  odometer_m: number;
}

export interface VehiclePayload {
  category: string;
  x_m: number;
  y_m: number;
  speed_kmh: number;
}

export interface RulesPayload {
  speed_limit_kmh: number | null;
  keep_right: boolean;
  overtaking_allowed: boolean;
  extra: string[];
}

export interface PocObjectPayload {
  id: number;
  category: string;
  color: string;
  x_m: number;
  y_m: number;
}

export interface DecisionPayload {
  prompt: string;
  raw_response: string;
  driver: string;
  tick: number;
  decision?: { action: string; reason?: string };
  command?: { action: string; destination_id?: number };
  error?: { kind: string; detail?: string };
}

export interface ViolationPayload {
  kind: string;
  tick: number;
  detail: string;
}

export interface SessionState {
  session_id: string;
  mode: Mode;
  tick: number;
  driver: string;
  instruction: string | null;
  latest_decision: DecisionPayload | null;
  violations: ViolationPayload[];
  // highway
  ego?: EgoPayload;
  vehicles?: VehiclePayload[];
  rules?: RulesPayload;
  // poc
  objects?: PocObjectPayload[];
  officer?: OfficerSignal;
}

export type WsEvent =
  | { type: "state"; payload: SessionState }
  | { type: "decision"; payload: DecisionPayload }
  | { type: "violation"; payload: ViolationPayload };
