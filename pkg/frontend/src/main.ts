/** Browser entry point: wires keyboard, canvas, and HUD to the session client.
 *
 * The canvas only ever paints states received from the server; between
 * messages the last frame stays up. Keyboard changes pass through a send
 * gate so the wire sees at most one action per 20 ms.
 */

import { TeleopClient, ClientView } from "./client.js";
import { KeyTracker, SendGate } from "./input.js";
import { drawScene, Viewport } from "./render.js";

const SEND_INTERVAL_MS = 20;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

const envSelect = el<HTMLSelectElement>("env");
const connectBtn = el<HTMLButtonElement>("connect");
const resetBtn = el<HTMLButtonElement>("reset");
const finishBtn = el<HTMLButtonElement>("finish");
const downloadLink = el<HTMLAnchorElement>("download");
const banner = el<HTMLElement>("banner");
const bannerText = el<HTMLElement>("banner-text");
const retryBtn = el<HTMLButtonElement>("retry");
const statusEl = el<HTMLElement>("status");
const pairsEl = el<HTMLElement>("pairs");
const episodeEl = el<HTMLElement>("episode");
const rewardEl = el<HTMLElement>("reward");
const canvas = el<HTMLCanvasElement>("scene");

const ctx = canvas.getContext("2d")!;
const vp: Viewport = { width: canvas.width, height: canvas.height };

let framePending = false;

function paint(): void {
  framePending = false;
  const st = client.view.lastState;
  if (st === null) {
    ctx.clearRect(0, 0, vp.width, vp.height);
    return;
  }
  drawScene(ctx, vp, st.render);
}

function schedulePaint(): void {
  if (framePending) return;
  framePending = true;
  requestAnimationFrame(paint);
}

function refresh(view: ClientView): void {
  statusEl.textContent = view.status;
  pairsEl.textContent = String(view.pairs);
  episodeEl.textContent = view.lastState === null ? "-" : String(view.lastState.episode);
  rewardEl.textContent = view.lastState === null ? "-" : view.lastState.reward.toFixed(3);

  const live = view.status === "live";
  connectBtn.disabled = view.status === "connecting" || live || view.status === "paused";
  envSelect.disabled = connectBtn.disabled;
  resetBtn.disabled = !live;
  finishBtn.disabled = !live || view.pairs === 0;
  finishBtn.title = view.pairs === 0 ? "record at least one pair first" : "";

  const url = client.downloadUrl();
  if (url !== null) {
    downloadLink.href = url;
    downloadLink.textContent = `download ${view.saved!.pairs} pairs`;
    downloadLink.hidden = false;
  } else {
    downloadLink.hidden = true;
  }

  if (view.error !== null) {
    bannerText.textContent = view.error;
    retryBtn.hidden = !(view.status === "paused" || view.status === "failed");
    banner.hidden = false;
  } else {
    banner.hidden = true;
  }

  schedulePaint();
}

const client = new TeleopClient(location.origin, refresh);
const tracker = new KeyTracker();
const gate = new SendGate(SEND_INTERVAL_MS, (a) => client.sendAction(a));

function pushAction(): void {
  const meta = client.view.meta;
  if (meta !== null) gate.offer(tracker.action(meta.action_dim));
}

document.addEventListener("keydown", (ev) => {
  if (ev.repeat) return; // OS auto-repeat is not a state change
  if (tracker.press(ev.key)) {
    ev.preventDefault();
    pushAction();
  }
});

document.addEventListener("keyup", (ev) => {
  if (tracker.release(ev.key)) pushAction();
});

// losing focus strands keys in the down set; release everything
window.addEventListener("blur", () => {
  if (tracker.clear()) pushAction();
});

connectBtn.addEventListener("click", () => {
  client.connect(envSelect.value).catch(() => {});
});

retryBtn.addEventListener("click", () => {
  if (client.view.meta !== null && client.view.status === "paused") {
    client.reopen();
  } else {
    client.connect(envSelect.value).catch(() => {});
  }
});

resetBtn.addEventListener("click", () => client.reset());

finishBtn.addEventListener("click", () => {
  client.finish().catch(() => {});
});

refresh(client.view);
