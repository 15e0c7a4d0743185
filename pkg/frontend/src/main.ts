/**
 * Browser entry point: connects the websocket, wires the DOM, and runs the
 * render/input loop on animation frames. The server is authoritative; this
 * file only routes messages and draws.
 */

import {
  applyServerMessage,
  ClientViewState,
  encodeClientMessage,
  initialViewState,
  parseServerMessage,
  Variant,
} from "./protocol.js";
import { initialInputState, keyDown, keyUp, sampleInput } from "./input.js";
import { Ctx2D, renderState } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function wsUrl(): string {
  const proto = location.protocol === "https:" ? "wss:" : "ws:";
  return `${proto}//${location.host}/ws`;
}

function main(): void {
  const canvas = el<HTMLCanvasElement>("scene");
  const ctx = canvas.getContext("2d") as unknown as Ctx2D;
  const banner = el<HTMLDivElement>("banner");
  const status = el<HTMLDivElement>("status");
  const utteranceBox = el<HTMLInputElement>("utterance");
  const sendButton = el<HTMLButtonElement>("send");
  const resetButton = el<HTMLButtonElement>("reset");
  const variantSelect = el<HTMLSelectElement>("variant");
  const checkpointBox = el<HTMLInputElement>("checkpoint");
  const connectButton = el<HTMLButtonElement>("connect");

  let view: ClientViewState = initialViewState();
  const input = initialInputState();
  let socket: WebSocket | null = null;

  function send(msg: ReturnType<typeof sampleInput> | { type: string; [k: string]: unknown }) {
    if (socket && socket.readyState === WebSocket.OPEN && msg) {
      socket.send(encodeClientMessage(msg as never));
    }
  }

  function connect(): void {
    socket?.close();
    view = initialViewState();
    socket = new WebSocket(wsUrl());
    socket.onopen = () => {
      view = { ...view, connection: "connected" };
      send({
        type: "hello",
        env: "arm",
        variant: variantSelect.value as Variant,
        checkpoint_id: checkpointBox.value || undefined,
      });
    };
    socket.onmessage = (event) => {
      const msg = parseServerMessage(String(event.data));
      if (msg) view = applyServerMessage(view, msg);
    };
    socket.onclose = () => {
      view = { ...view, connection: "closed" };
    };
  }

  connectButton.onclick = connect;
  sendButton.onclick = () => {
    if (utteranceBox.value.trim()) {
      send({ type: "utterance", text: utteranceBox.value.trim() });
    }
  };
  resetButton.onclick = () => send({ type: "reset" });
  document.addEventListener("keydown", (e) => {
    if (document.activeElement !== utteranceBox) keyDown(input, e.key);
  });
  document.addEventListener("keyup", (e) => keyUp(input, e.key));

  function frame(): void {
    const variant = view.config?.variant ?? "language";
    const latentDim = view.config?.latent_dim ?? 2;
    if (view.sessionId && (view.retrieval || variant === "ee")) {
      const msg = sampleInput(input, variant, latentDim);
      if (msg) send(msg);
    }
    renderState(ctx, view, { width: canvas.width, height: canvas.height, worldSpan: 3.2 });
    status.textContent =
      `${view.connection}` +
      (view.sessionId ? ` | session ${view.sessionId}` : "") +
      (view.lastError ? ` | ${view.lastError.code}: ${view.lastError.message}` : "");
    banner.textContent = view.retrieval
      ? `retrieved: "${view.retrieval.text}" [${view.retrieval.task}] ` +
        `cos ${view.retrieval.similarity.toFixed(3)}`
      : "type an utterance and press send";
    requestAnimationFrame(frame);
  }

  connect();
  requestAnimationFrame(frame);
}

main();
