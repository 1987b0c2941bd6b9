// Bird's-eye canvas rendering: two-lane highway or cone field, ego marker,
// and the heading line from ego to a poc destination.

import { headingTarget, ViewModel } from "./model.js";
import type { PocObjectPayload, SessionState, VehiclePayload } from "./types.js";

const LANE_WIDTH_M = 3.5;
const ROAD_COLOR = "#2c2f38";
const LANE_LINE = "#e8e8e8";
const EGO_COLOR = "#4da3ff";
const VEHICLE_COLOR = "#d9822b";

interface Frame {
  width: number;
  height: number;
  egoX: number; // canvas x of the ego lateral origin
  egoY: number; // canvas y of the ego longitudinal origin
  scaleX: number; // px per meter, lateral
  scaleY: number; // px per meter, longitudinal
}

function highwayFrame(width: number, height: number): Frame {
  return {
    width,
    height,
    egoX: width / 2,
    egoY: height * 0.72,
    scaleX: width / (LANE_WIDTH_M * 6),
    scaleY: height / 220, // covers roughly -60 .. +120 m
  };
}

function toCanvas(frame: Frame, xM: number, yM: number): [number, number] {
  return [frame.egoX + xM * frame.scaleX, frame.egoY - yM * frame.scaleY];
}

function drawVehicleBox(
  ctx: CanvasRenderingContext2D,
  frame: Frame,
  xM: number,
  yM: number,
  color: string,
  label: string,
): void {
  const [cx, cy] = toCanvas(frame, xM, yM);
  const w = 2.0 * frame.scaleX;
  const h = 5.0 * frame.scaleY;
  ctx.fillStyle = color;
  ctx.fillRect(cx - w / 2, cy - h / 2, w, h);
  ctx.fillStyle = "#cfd3dc";
  ctx.font = "11px system-ui, sans-serif";
  ctx.textAlign = "left";
  ctx.fillText(label, cx + w / 2 + 4, cy + 4);
}

function drawHighway(ctx: CanvasRenderingContext2D, frame: Frame, state: SessionState): void {
  const ego = state.ego;
  if (!ego) return;
  // Ego lane center sits at lateral 0; the other lane at +/- one width.
  const leftOffset = ego.lane === "right" ? -LANE_WIDTH_M : 0;
  const roadLeftM = leftOffset - LANE_WIDTH_M / 2;
  const [roadLeft] = toCanvas(frame, roadLeftM, 0);
  const [roadRight] = toCanvas(frame, roadLeftM + 2 * LANE_WIDTH_M, 0);
  ctx.fillStyle = ROAD_COLOR;
  ctx.fillRect(roadLeft, 0, roadRight - roadLeft, frame.height);
  ctx.strokeStyle = LANE_LINE;
  ctx.setLineDash([14, 12]);
  ctx.beginPath();
  const [midX] = toCanvas(frame, roadLeftM + LANE_WIDTH_M, 0);
  ctx.moveTo(midX, 0);
  ctx.lineTo(midX, frame.height);
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.strokeRect(roadLeft, 0, roadRight - roadLeft, frame.height);

  (state.vehicles ?? []).forEach((v: VehiclePayload) => {
    drawVehicleBox(ctx, frame, v.x_m, v.y_m, VEHICLE_COLOR, `${v.category} ${v.speed_kmh} km/h`);
  });
  drawVehicleBox(ctx, frame, 0, 0, EGO_COLOR, `ego ${ego.speed_kmh} km/h (${ego.lane})`);
}

function drawCone(
  ctx: CanvasRenderingContext2D,
  frame: Frame,
  object: PocObjectPayload,
): void {
  const [cx, cy] = toCanvas(frame, object.x_m, object.y_m);
  ctx.fillStyle = object.color;
  ctx.beginPath();
  ctx.moveTo(cx, cy - 10);
  ctx.lineTo(cx - 8, cy + 8);
  ctx.lineTo(cx + 8, cy + 8);
  ctx.closePath();
  ctx.fill();
  ctx.strokeStyle = "#1b1d24";
  ctx.stroke();
  ctx.fillStyle = "#cfd3dc";
  ctx.font = "11px system-ui, sans-serif";
  ctx.textAlign = "center";
  ctx.fillText(`#${object.id} ${object.color} ${object.category}`, cx, cy + 22);
}

function drawPocField(
  ctx: CanvasRenderingContext2D,
  frame: Frame,
  model: ViewModel,
  state: SessionState,
): void {
  ctx.fillStyle = "#23252e";
  ctx.fillRect(0, 0, frame.width, frame.height);
  const target = headingTarget(model);
  if (target) {
    const [ex, ey] = toCanvas(frame, 0, 0);
    const [tx, ty] = toCanvas(frame, target.x_m, target.y_m);
    ctx.strokeStyle = "#54d86a";
    ctx.lineWidth = 2.5;
    ctx.setLineDash([8, 6]);
    ctx.beginPath();
    ctx.moveTo(ex, ey);
    ctx.lineTo(tx, ty);
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.lineWidth = 1;
  }
  (state.objects ?? []).forEach((o) => drawCone(ctx, frame, o));
  const [ex, ey] = toCanvas(frame, 0, 0);
  ctx.fillStyle = EGO_COLOR;
  ctx.fillRect(ex - 10, ey - 6, 20, 26);
  ctx.fillStyle = "#cfd3dc";
  ctx.textAlign = "center";
  ctx.fillText(state.officer === "stop" ? "ego (officer: STOP)" : "ego", ex, ey + 38);
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  model: ViewModel,
): void {
  ctx.clearRect(0, 0, width, height);
  const state = model.state;
  if (!state) {
    ctx.fillStyle = "#8a90a0";
    ctx.font = "14px system-ui, sans-serif";
    ctx.textAlign = "center";
    ctx.fillText("no session", width / 2, height / 2);
    return;
  }
  if (state.mode === "highway") {
    drawHighway(ctx, highwayFrame(width, height), state);
  } else {
    const frame: Frame = {
      width,
      height,
      egoX: width / 2,
      egoY: height * 0.9,
      scaleX: width / 12,
      scaleY: height / 26,
    };
    drawPocField(ctx, frame, model, state);
  }
}
