import { SessionApi, wsUrl } from "./api.js";
import {
  applyEvent,
  decisionLabel,
  decisionReason,
  emptyModel,
  setConnection,
  ViewModel,
} from "./model.js";
import { drawScene } from "./render.js";
import { connectEvents } from "./ws.js";
import type { Mode, OfficerSignal } from "./types.js";

const api = new SessionApi();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("scene");
const ctx = canvas.getContext("2d");
if (!ctx) throw new Error("2D context unavailable");

const modeSelect = el<HTMLSelectElement>("mode");
const seedInput = el<HTMLInputElement>("seed");
const connectBtn = el<HTMLButtonElement>("connect");
const banner = el<HTMLDivElement>("banner");
const instructionInput = el<HTMLInputElement>("instruction");
const submitBtn = el<HTMLButtonElement>("submit");
const officerRow = el<HTMLDivElement>("officer-row");
const stepBtn = el<HTMLButtonElement>("step");
const resetBtn = el<HTMLButtonElement>("reset");
const decisionEl = el<HTMLDivElement>("decision");
const reasonEl = el<HTMLDivElement>("reason");
const violationsEl = el<HTMLUListElement>("violations");
const promptEl = el<HTMLPreElement>("prompt");
const rawEl = el<HTMLPreElement>("raw");
const statusEl = el<HTMLSpanElement>("status");

let model: ViewModel = emptyModel();
let socket: WebSocket | null = null;

function render(): void {
  drawScene(ctx!, canvas.width, canvas.height, model);
  statusEl.textContent = model.connection;
  statusEl.className = `status status-${model.connection}`;
  banner.hidden = model.connection !== "error";
  banner.textContent = model.errorMessage ?? "";
  decisionEl.textContent = decisionLabel(model.lastDecision);
  reasonEl.textContent = decisionReason(model.lastDecision);
  promptEl.textContent = model.lastDecision?.prompt ?? "";
  rawEl.textContent = model.lastDecision?.raw_response ?? "";
  violationsEl.replaceChildren(
    ...model.violations.map((v) => {
      const li = document.createElement("li");
      li.textContent = `tick ${v.tick}: ${v.kind} — ${v.detail}`;
      return li;
    }),
  );
  const mode = model.state?.mode;
  officerRow.hidden = mode !== "poc";
  stepBtn.disabled = mode !== "highway" || model.connection !== "live";
  submitBtn.disabled = model.connection !== "live" || instructionInput.value.trim() === "";
  resetBtn.disabled = model.connection !== "live";
}

function update(next: ViewModel): void {
  model = next;
  render();
}

function fail(err: unknown): void {
  update(setConnection(model, "error", err instanceof Error ? err.message : String(err)));
}

async function connect(): Promise<void> {
  socket?.close();
  update(setConnection(emptyModel(), "connecting"));
  try {
    const mode = modeSelect.value as Mode;
    const seed = Number(seedInput.value) || 0;
    const { session_id } = await api.createSession(mode, seed, "oracle");
    socket = connectEvents(
      wsUrl(session_id),
      (event) => update(applyEvent(model, event)),
      () => update(setConnection(model, "disconnected")),
    );
    socket.onopen = () => update(setConnection(model, "live"));
  } catch (err) {
    fail(err);
  }
}

async function submitInstruction(): Promise<void> {
  const sid = model.sessionId;
  const text = instructionInput.value.trim();
  if (!sid || !text) return;
  try {
    await api.postInstruction(sid, text);
    instructionInput.value = "";
    render();
  } catch (err) {
    fail(err);
  }
}

connectBtn.addEventListener("click", () => void connect());
submitBtn.addEventListener("click", () => void submitInstruction());
instructionInput.addEventListener("input", render);
instructionInput.addEventListener("keydown", (e) => {
  if (e.key === "Enter" && !submitBtn.disabled) void submitInstruction();
});
stepBtn.addEventListener("click", () => {
  if (model.sessionId) api.step(model.sessionId).catch(fail);
});
resetBtn.addEventListener("click", () => {
  if (model.sessionId) {
    api.reset(model.sessionId, Number(seedInput.value) || 0).catch(fail);
  }
});
officerRow.querySelectorAll<HTMLButtonElement>("button[data-signal]").forEach((btn) => {
  btn.addEventListener("click", () => {
    if (model.sessionId) {
      api.postOfficer(model.sessionId, btn.dataset.signal as OfficerSignal).catch(fail);
    }
  });
});

render();
