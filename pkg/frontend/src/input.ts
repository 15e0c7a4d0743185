/**
 * Keyboard and virtual-joystick state mapped to wire input messages.
 *
 * Keys are level-sensitive (held arrow = full deflection) except the mode
 * toggle, which is edge-triggered so one keypress toggles exactly once no
 * matter how long it is held. At most one input message is produced per
 * animation frame; dropping intermediate ones is safe under the server's
 * latest-input-wins contract.
 */

import { ClientMessage } from "./protocol.js";

export interface InputState {
  held: Set<string>;
  toggleArmed: boolean;
  togglePending: boolean;
  /** virtual joystick deflection, each axis in [-1, 1] */
  stick: { x: number; y: number } | null;
}

export function initialInputState(): InputState {
  return { held: new Set(), toggleArmed: true, togglePending: false, stick: null };
}

export function keyDown(input: InputState, key: string): void {
  if (key === "m") {
    if (input.toggleArmed) {
      input.togglePending = true;
      input.toggleArmed = false;
    }
    return;
  }
  input.held.add(key);
}

export function keyUp(input: InputState, key: string): void {
  if (key === "m") {
    input.toggleArmed = true;
    return;
  }
  input.held.delete(key);
}

function axis(input: InputState, negative: string, positive: string): number {
  let v = 0;
  if (input.held.has(positive)) v += 1;
  if (input.held.has(negative)) v -= 1;
  return v;
}

/**
 * Build this frame's input message, or null when there is nothing new to
 * say (no deflection and no pending toggle and nothing held last frame).
 */
export function sampleInput(
  input: InputState,
  variant: string,
  latentDim: number,
): ClientMessage | null {
  const sx = input.stick ? input.stick.x : axis(input, "ArrowLeft", "ArrowRight");
  const sy = input.stick ? input.stick.y : axis(input, "ArrowDown", "ArrowUp");
  if (variant === "ee") {
    const toggle = input.togglePending;
    input.togglePending = false;
    return { type: "input", u1: sx, u2: sy, toggle };
  }
  if (variant === "imitation") {
    return null; // language-only control: the policy drives itself
  }
  const z = new Array(latentDim).fill(0);
  if (latentDim === 1) {
    // single axis: either stick direction maps onto it
    z[0] = clamp(sx !== 0 ? sx : sy);
  } else {
    z[0] = clamp(sx);
    if (latentDim > 1) z[1] = clamp(sy);
  }
  return { type: "input", z };
}

function clamp(v: number): number {
  return Math.max(-1, Math.min(1, v));
}
