import { describe, expect, it } from "vitest";

import { ClientView, SocketLike, TeleopClient, Transport } from "../src/client.js";

const META = {
  session_id: "abc",
  env: "cartpole",
  state_dim: 4,
  action_dim: 1,
  action_low: [-10],
  action_high: [10],
  tick_ms: 50,
  render_keys: ["kind", "cart_x"],
};

const STATE = JSON.stringify({
  type: "state",
  s: [0, 0, 0.1, 0],
  render: { kind: "cartpole", cart_x: 0 },
  reward: 1,
  terminal: false,
  pairs: 3,
  episode: 1,
});

class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;

  constructor(readonly url: string) {}

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }
}

function harness(sessionDoc: unknown = META) {
  const sockets: FakeSocket[] = [];
  const posts: Array<{ url: string; body: unknown }> = [];
  const views: ClientView[] = [];
  const transport: Transport = {
    async fetchJson(url, body) {
      posts.push({ url, body });
      if (sessionDoc instanceof Error) throw sessionDoc;
      return sessionDoc;
    },
    openSocket(url) {
      const s = new FakeSocket(url);
      sockets.push(s);
      return s;
    },
  };
  const client = new TeleopClient(
    "http://localhost:8321",
    (v) => views.push({ ...v }),
    transport,
  );
  return { client, sockets, posts, views };
}

describe("TeleopClient", () => {
  it("opens a session then a stream, and goes live on socket open", async () => {
    const { client, sockets, posts } = harness();
    await client.connect("cartpole", 25);
    expect(posts).toEqual([
      { url: "http://localhost:8321/session", body: { env: "cartpole", tick_ms: 25 } },
    ]);
    expect(sockets[0].url).toBe("ws://localhost:8321/session/abc/stream");
    expect(client.view.status).toBe("connecting");
    sockets[0].onopen!();
    expect(client.view.status).toBe("live");
    expect(client.view.meta?.action_dim).toBe(1);
  });

  it("tracks state messages and the acknowledged pair count", async () => {
    const { client, sockets } = harness();
    await client.connect("cartpole");
    sockets[0].onopen!();
    sockets[0].onmessage!({ data: STATE });
    expect(client.view.pairs).toBe(3);
    expect(client.view.lastState?.s).toEqual([0, 0, 0.1, 0]);
  });

  it("only sends actions while live", async () => {
    const { client, sockets } = harness();
    await client.connect("cartpole");
    client.sendAction([1]); // still connecting
    sockets[0].onopen!();
    client.sendAction([0.5]);
    expect(sockets[0].sent).toEqual([JSON.stringify({ type: "action", a: [0.5] })]);
  });

  it("resolves finish() on the saved receipt and exposes the download url", async () => {
    const { client, sockets } = harness();
    await client.connect("cartpole");
    sockets[0].onopen!();
    expect(client.downloadUrl()).toBeNull();
    const done = client.finish();
    sockets[0].onmessage!({ data: JSON.stringify({ type: "saved", path: "/d/x.jsonl", pairs: 9 }) });
    await expect(done).resolves.toEqual({ type: "saved", path: "/d/x.jsonl", pairs: 9 });
    expect(client.view.status).toBe("finished");
    expect(client.view.pairs).toBe(9);
    expect(client.downloadUrl()).toBe("http://localhost:8321/session/abc/dataset");
    sockets[0].onclose!(); // server closing afterwards must not demote the view
    expect(client.view.status).toBe("finished");
  });

  it("pauses on an unexpected close and can reopen the same session", async () => {
    const { client, sockets } = harness();
    await client.connect("cartpole");
    sockets[0].onopen!();
    const done = client.finish();
    sockets[0].onclose!();
    expect(client.view.status).toBe("paused");
    expect(client.view.error).toContain("resumable");
    await expect(done).rejects.toThrow("closed before");
    client.reopen();
    expect(sockets).toHaveLength(2);
    expect(sockets[1].url).toBe("ws://localhost:8321/session/abc/stream");
    sockets[1].onopen!();
    expect(client.view.status).toBe("live");
  });

  it("fails visibly when the session request is rejected", async () => {
    const { client } = harness(new Error("unknown env 'cartpol'"));
    await expect(client.connect("cartpol")).rejects.toThrow("cartpol");
    expect(client.view.status).toBe("failed");
    expect(client.view.error).toContain("cartpol");
  });

  it("surfaces malformed server messages without dropping the stream", async () => {
    const { client, sockets } = harness();
    await client.connect("cartpole");
    sockets[0].onopen!();
    sockets[0].onmessage!({ data: "won't parse" });
    expect(client.view.status).toBe("live");
    expect(client.view.error).toContain("bad server message");
    sockets[0].onmessage!({ data: STATE });
    expect(client.view.pairs).toBe(3);
  });

  it("passes server error envelopes into the view", async () => {
    const { client, sockets } = harness();
    await client.connect("cartpole");
    sockets[0].onopen!();
    sockets[0].onmessage!({ data: JSON.stringify({ type: "error", message: "bad action" }) });
    expect(client.view.error).toBe("bad action");
  });

  it("notifies the view subscriber on every transition", async () => {
    const { client, sockets, views } = harness();
    await client.connect("cartpole");
    sockets[0].onopen!();
    sockets[0].onmessage!({ data: STATE });
    const statuses = views.map((v) => v.status);
    expect(statuses).toContain("connecting");
    expect(statuses).toContain("live");
    expect(views[views.length - 1].pairs).toBe(3);
  });
});
