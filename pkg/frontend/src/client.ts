/** Session client: opens a session, drives the stream, tracks the view.
 *
 * Holds no DOM references; the UI subscribes through onChange and reads
 * the view record. The displayed pair counter is always the server's
 * acknowledged count, never a client-side guess. Transport is injectable
 * so the state machine is testable without a server.
 */

import {
  actionMsg,
  finishMsg,
  parseServerMsg,
  parseSessionMeta,
  ProtocolError,
  resetMsg,
  SavedMsg,
  SessionMeta,
  StateMsg,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export interface Transport {
  fetchJson(url: string, body?: unknown): Promise<unknown>;
  openSocket(url: string): SocketLike;
}

const browserTransport: Transport = {
  async fetchJson(url, body) {
    const resp = await fetch(url, {
      method: body === undefined ? "GET" : "POST",
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const doc: unknown = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail = (doc as { detail?: unknown })?.detail;
      throw new Error(typeof detail === "string" ? detail : `HTTP ${resp.status}`);
    }
    return doc;
  },
  openSocket(url) {
    return new WebSocket(url) as unknown as SocketLike;
  },
};

export type Status = "idle" | "connecting" | "live" | "paused" | "finished" | "failed";

export interface ClientView {
  status: Status;
  meta: SessionMeta | null;
  lastState: StateMsg | null;
  pairs: number;
  saved: SavedMsg | null;
  error: string | null;
}

export class TeleopClient {
  readonly view: ClientView = {
    status: "idle",
    meta: null,
    lastState: null,
    pairs: 0,
    saved: null,
    error: null,
  };

  private socket: SocketLike | null = null;
  private closing = false;
  private finishResolve: ((m: SavedMsg) => void) | null = null;
  private finishReject: ((e: Error) => void) | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly onChange: (view: ClientView) => void = () => {},
    private readonly transport: Transport = browserTransport,
  ) {}

  private emit(): void {
    this.onChange(this.view);
  }

  /** Open a fresh session and start streaming. */
  async connect(env: string, tickMs?: number): Promise<void> {
    this.view.status = "connecting";
    this.view.error = null;
    this.view.saved = null;
    this.view.lastState = null;
    this.view.pairs = 0;
    this.emit();
    try {
      const doc = await this.transport.fetchJson(`${this.baseUrl}/session`, {
        env,
        ...(tickMs === undefined ? {} : { tick_ms: tickMs }),
      });
      this.view.meta = parseSessionMeta(doc);
    } catch (err) {
      this.view.status = "failed";
      this.view.error = err instanceof Error ? err.message : String(err);
      this.emit();
      throw err;
    }
    this.openStream();
  }

  /** Rejoin the current session after a drop (within the pause window). */
  reopen(): void {
    if (this.view.meta === null) throw new Error("no session to reopen");
    this.openStream();
  }

  private streamUrl(): string {
    const base = this.baseUrl.replace(/^http/, "ws");
    return `${base}/session/${this.view.meta!.session_id}/stream`;
  }

  private openStream(): void {
    this.closing = false;
    this.view.status = "connecting";
    this.view.error = null;
    this.emit();
    const socket = this.transport.openSocket(this.streamUrl());
    this.socket = socket;
    socket.onopen = () => {
      this.view.status = "live";
      this.emit();
    };
    socket.onmessage = (ev) => this.handleMessage(String(ev.data));
    socket.onerror = () => {
      if (this.view.status === "connecting") {
        this.view.status = "failed";
        this.view.error = "stream failed to open";
        this.emit();
      }
    };
    socket.onclose = () => {
      this.socket = null;
      if (this.view.status === "finished" || this.closing) return;
      this.view.status = "paused";
      this.view.error = "connection lost; the session stays resumable briefly";
      if (this.finishReject !== null) {
        this.finishReject(new Error("stream closed before the recording saved"));
        this.finishResolve = this.finishReject = null;
      }
      this.emit();
    };
  }

  private handleMessage(raw: string): void {
    let msg;
    try {
      msg = parseServerMsg(raw);
    } catch (err) {
      if (!(err instanceof ProtocolError)) throw err;
      this.view.error = `bad server message: ${err.message}`;
      this.emit();
      return;
    }
    if (msg.type === "state") {
      this.view.lastState = msg;
      this.view.pairs = msg.pairs;
    } else if (msg.type === "saved") {
      this.view.saved = msg;
      this.view.pairs = msg.pairs;
      this.view.status = "finished";
      if (this.finishResolve !== null) {
        this.finishResolve(msg);
        this.finishResolve = this.finishReject = null;
      }
    } else {
      this.view.error = msg.message;
    }
    this.emit();
  }

  sendAction(a: number[]): void {
    if (this.socket !== null && this.view.status === "live") {
      this.socket.send(actionMsg(a));
    }
  }

  reset(): void {
    this.socket?.send(resetMsg());
  }

  /** Ask the server to persist the recording; resolves with the receipt. */
  finish(): Promise<SavedMsg> {
    if (this.socket === null) return Promise.reject(new Error("not connected"));
    const promise = new Promise<SavedMsg>((resolve, reject) => {
      this.finishResolve = resolve;
      this.finishReject = reject;
    });
    this.socket.send(finishMsg());
    return promise;
  }

  /** Where the saved JSONL can be fetched; null before the first save. */
  downloadUrl(): string | null {
    if (this.view.saved === null || this.view.meta === null) return null;
    return `${this.baseUrl}/session/${this.view.meta.session_id}/dataset`;
  }

  disconnect(): void {
    this.closing = true;
    this.socket?.close();
    this.socket = null;
  }
}
