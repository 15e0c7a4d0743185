import { describe, expect, it } from "vitest";

import {
  applyServerMessage,
  initialViewState,
  parseServerMessage,
  ServerMessage,
  StateMessage,
} from "../src/protocol.js";
import { initialInputState, keyDown, keyUp, sampleInput } from "../src/input.js";

function stateMsg(tick: number): StateMessage {
  return {
    type: "state",
    tick,
    stepped: true,
    s: [0, 0, 0, 0],
    joints: [
      [1, 0],
      [2, 0],
      [3, 0],
    ],
    ee: [3, 0, 0],
    gripper: 0,
    objects: [],
    subtasks: { reached: false, grasped: false, brought: false, completed: false },
    jerk_running: 0,
    mode: 0,
    task: "banana_in_basket",
  };
}

describe("view state reducer", () => {
  it("tracks session, retrieval, and state messages", () => {
    let view = initialViewState();
    view = applyServerMessage(view, {
      type: "session",
      id: "s1",
      config: {
        protocol: 1, env: "arm", variant: "language", task: "banana_in_basket",
        dt: 0.05, latent_dim: 2, tasks: ["banana_in_basket"],
      },
    });
    expect(view.sessionId).toBe("s1");
    view = applyServerMessage(view, {
      type: "retrieved", exemplar_id: 3, text: "put the banana in the basket",
      similarity: 0.9, task: "banana_in_basket",
    });
    expect(view.retrieval?.exemplar_id).toBe(3);
    view = applyServerMessage(view, stateMsg(1));
    expect(view.lastState?.tick).toBe(1);
  });

  it("counts tick gaps", () => {
    let view = initialViewState();
    view = applyServerMessage(view, stateMsg(1));
    view = applyServerMessage(view, stateMsg(2));
    view = applyServerMessage(view, stateMsg(4)); // gap
    view = applyServerMessage(view, stateMsg(5));
    expect(view.tickGaps).toBe(1);
  });

  it("parses only known message shapes", () => {
    expect(parseServerMessage("not json")).toBeNull();
    expect(parseServerMessage('{"no":"type"}')).toBeNull();
    expect(parseServerMessage('{"type":"warp"}')).toBeNull();
    const ok = parseServerMessage('{"type":"error","code":"X","message":"y"}');
    expect((ok as ServerMessage).type).toBe("error");
  });
});

describe("input sampling", () => {
  it("idle keyboard yields a zero latent input", () => {
    const input = initialInputState();
    const msg = sampleInput(input, "language", 2);
    expect(msg).toEqual({ type: "input", z: [0, 0] });
  });

  it("held right arrow maps to +1 on a one dof config", () => {
    const input = initialInputState();
    keyDown(input, "ArrowRight");
    expect(sampleInput(input, "language", 1)).toEqual({ type: "input", z: [1] });
    keyUp(input, "ArrowRight");
    expect(sampleInput(input, "language", 1)).toEqual({ type: "input", z: [0] });
  });

  it("mode toggle is edge triggered: once per keypress", () => {
    const input = initialInputState();
    keyDown(input, "m");
    keyDown(input, "m"); // auto-repeat while held
    let msg = sampleInput(input, "ee", 2);
    expect(msg).toMatchObject({ toggle: true });
    msg = sampleInput(input, "ee", 2);
    expect(msg).toMatchObject({ toggle: false });
    keyUp(input, "m");
    keyDown(input, "m");
    expect(sampleInput(input, "ee", 2)).toMatchObject({ toggle: true });
  });

  it("imitation variant emits no input messages", () => {
    const input = initialInputState();
    keyDown(input, "ArrowUp");
    expect(sampleInput(input, "imitation", 2)).toBeNull();
  });
});
