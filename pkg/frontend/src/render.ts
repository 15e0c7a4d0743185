/**
 * Canvas rendering of the simulated scene, one frame per state message.
 *
 * Drawing is a pure function of the view state. The subset of the 2D
 * context API used here is declared as an interface so tests can pass a
 * recording fake instead of a real canvas.
 */

import { ClientViewState, ObjectState, StateMessage } from "./protocol.js";

export interface Ctx2D {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
  strokeStyle: string;
  fillStyle: string;
  lineWidth: number;
  font: string;
}

export interface Viewport {
  width: number;
  height: number;
  /** world units visible across the half-width */
  worldSpan: number;
}

export function worldToScreen(vp: Viewport, x: number, y: number): [number, number] {
  const scale = Math.min(vp.width, vp.height) / (2 * vp.worldSpan);
  // world origin at the lower-left quarter so the arm workspace fits
  const ox = vp.width * 0.25;
  const oy = vp.height * 0.75;
  return [ox + x * scale, oy - y * scale];
}

const KIND_COLORS: Record<ObjectState["kind"], string> = {
  graspable: "#e9b44c",
  container: "#7b6ca8",
  target_zone: "#63a375",
};

export const SUBTASK_ORDER = ["reached", "grasped", "brought", "completed"];

/** Draw one frame. Returns false (frame skipped) when required fields are missing. */
export function renderState(ctx: Ctx2D, view: ClientViewState, vp: Viewport): boolean {
  ctx.clearRect(0, 0, vp.width, vp.height);
  const state = view.lastState;
  if (!state || !state.ee || !state.objects) {
    drawBadge(ctx, vp, view.lastError ? `error: ${view.lastError.code}` : "waiting for state");
    return false;
  }

  for (const obj of state.objects) {
    const [sx, sy] = worldToScreen(vp, obj.x, obj.y);
    const r = obj.radius * (Math.min(vp.width, vp.height) / (2 * vp.worldSpan));
    ctx.beginPath();
    ctx.fillStyle = obj.held ? "#d1495b" : KIND_COLORS[obj.kind] ?? "#999999";
    ctx.arc(sx, sy, r, 0, Math.PI * 2);
    ctx.fill();
    ctx.fillStyle = "#222222";
    ctx.fillText(obj.id, sx + r + 2, sy);
  }

  if (state.joints.length > 0) {
    drawArm(ctx, vp, state);
  } else {
    const [sx, sy] = worldToScreen(vp, state.s[0], state.s[1]);
    ctx.beginPath();
    ctx.fillStyle = "#1c6dd0";
    ctx.arc(sx, sy, 6, 0, Math.PI * 2);
    ctx.fill();
  }

  drawHud(ctx, vp, view, state);
  return true;
}

function drawArm(ctx: Ctx2D, vp: Viewport, state: StateMessage): void {
  ctx.beginPath();
  ctx.strokeStyle = "#1c6dd0";
  ctx.lineWidth = 5;
  const [bx, by] = worldToScreen(vp, 0, 0);
  ctx.moveTo(bx, by);
  for (const [jx, jy] of state.joints) {
    const [sx, sy] = worldToScreen(vp, jx, jy);
    ctx.lineTo(sx, sy);
  }
  ctx.stroke();
  // gripper jaws at the end-effector: gap closes as gripper goes to 1
  const [ex, ey] = worldToScreen(vp, state.ee[0], state.ee[1]);
  const gap = 10 * (1 - state.gripper) + 3;
  ctx.beginPath();
  ctx.strokeStyle = state.gripper >= 0.5 ? "#d1495b" : "#444444";
  ctx.lineWidth = 3;
  ctx.moveTo(ex - gap, ey - 6);
  ctx.lineTo(ex - gap, ey + 6);
  ctx.moveTo(ex + gap, ey - 6);
  ctx.lineTo(ex + gap, ey + 6);
  ctx.stroke();
}

function drawHud(ctx: Ctx2D, vp: Viewport, view: ClientViewState, state: StateMessage): void {
  ctx.font = "13px sans-serif";
  ctx.fillStyle = "#222222";
  let y = 18;
  ctx.fillText(`task: ${state.task}   tick ${state.tick}`, 8, y);
  y += 18;
  if (view.config?.variant === "ee") {
    ctx.fillText(`mode ${state.mode === 0 ? "0: translate (x,y)" : "1: wrist + gripper"}`, 8, y);
    y += 18;
  }
  ctx.fillText(`running EE jerk: ${state.jerk_running.toFixed(2)}`, 8, y);
  y += 18;
  const flags = state.subtasks;
  if (SUBTASK_ORDER.some((k) => k in flags)) {
    for (const key of SUBTASK_ORDER) {
      if (key in flags) {
        ctx.fillText(`${flags[key] ? "[x]" : "[ ]"} ${key}`, 8, y);
        y += 16;
      }
    }
  } else if ("completed" in flags) {
    ctx.fillText(`${flags.completed ? "[x]" : "[ ]"} completed`, 8, y);
    y += 16;
  }
  if (view.retrieval) {
    ctx.fillText(
      `heard: "${view.retrieval.text}" (cos ${view.retrieval.similarity.toFixed(2)})`,
      8, vp.height - 10,
    );
  }
}

function drawBadge(ctx: Ctx2D, vp: Viewport, text: string): void {
  ctx.font = "14px sans-serif";
  ctx.fillStyle = "#aa3333";
  ctx.fillText(text, 10, 22);
}
