/**
 * Wire protocol types and the client-side view-state reducer.
 *
 * The client is a pure renderer: everything it draws derives from the most
 * recent server state message. The reducer here folds inbound messages into
 * a ClientViewState and never simulates anything itself.
 */

export type Variant = "language" | "no_language" | "imitation" | "ee";

export interface HelloMessage {
  type: "hello";
  env: "arm" | "cross";
  variant: Variant;
  checkpoint_id?: string;
  task?: string;
}

export interface UtteranceMessage {
  type: "utterance";
  text: string;
}

export interface LatentInputMessage {
  type: "input";
  z: number[];
}

export interface EEInputMessage {
  type: "input";
  u1: number;
  u2: number;
  toggle: boolean;
}

export type ClientMessage =
  | HelloMessage
  | UtteranceMessage
  | LatentInputMessage
  | EEInputMessage
  | { type: "reset" };

export interface SessionConfig {
  protocol: number;
  env: string;
  variant: Variant;
  task: string;
  dt: number;
  latent_dim: number | null;
  tasks: string[];
}

export interface ObjectState {
  id: string;
  x: number;
  y: number;
  radius: number;
  kind: "graspable" | "container" | "target_zone";
  held: boolean;
}

export interface StateMessage {
  type: "state";
  tick: number;
  stepped: boolean;
  s: number[];
  joints: number[][];
  ee: number[];
  gripper: number;
  objects: ObjectState[];
  subtasks: Record<string, boolean>;
  jerk_running: number;
  mode: number;
  task: string;
}

export interface RetrievedMessage {
  type: "retrieved";
  exemplar_id: number;
  text: string;
  similarity: number;
  task: string;
}

export interface SessionMessage {
  type: "session";
  id: string;
  config: SessionConfig;
}

export interface ErrorMessage {
  type: "error";
  code: string;
  message: string;
}

export type ServerMessage = SessionMessage | RetrievedMessage | StateMessage | ErrorMessage;

export interface ClientViewState {
  connection: "connecting" | "connected" | "closed";
  sessionId: string | null;
  config: SessionConfig | null;
  utteranceText: string;
  retrieval: RetrievedMessage | null;
  lastState: StateMessage | null;
  lastError: ErrorMessage | null;
  tickGaps: number;
}

export function initialViewState(): ClientViewState {
  return {
    connection: "connecting",
    sessionId: null,
    config: null,
    utteranceText: "",
    retrieval: null,
    lastState: null,
    lastError: null,
    tickGaps: 0,
  };
}

/** Fold one server message into the view. Pure: returns a new state. */
export function applyServerMessage(view: ClientViewState, msg: ServerMessage): ClientViewState {
  switch (msg.type) {
    case "session":
      return { ...view, sessionId: msg.id, config: msg.config, retrieval: null, lastState: null };
    case "retrieved":
      return { ...view, retrieval: msg, lastError: null };
    case "state": {
      let gaps = view.tickGaps;
      if (view.lastState !== null && msg.tick !== view.lastState.tick + 1) {
        gaps += 1;
      }
      return { ...view, lastState: msg, tickGaps: gaps };
    }
    case "error":
      return { ...view, lastError: msg };
    default:
      return view;
  }
}

export function parseServerMessage(raw: string): ServerMessage | null {
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof parsed !== "object" || parsed === null || !("type" in parsed)) {
    return null;
  }
  const t = (parsed as { type: string }).type;
  if (t === "session" || t === "retrieved" || t === "state" || t === "error") {
    return parsed as ServerMessage;
  }
  return null;
}

export function encodeClientMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}
