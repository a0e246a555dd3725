/** Wire types for the teleoperation service, with strict parsing.
 *
 * One JSON object per websocket message. The server streams `state`
 * envelopes at its tick rate and answers `finish` with a single `saved`;
 * anything malformed is reported as a ProtocolError rather than silently
 * rendered.
 */

export interface SessionMeta {
  session_id: string;
  env: string;
  state_dim: number;
  action_dim: number;
  action_low: number[];
  action_high: number[];
  tick_ms: number;
  render_keys: string[];
}

export interface StateMsg {
  type: "state";
  s: number[];
  render: Record<string, unknown>;
  reward: number;
  terminal: boolean;
  pairs: number;
  episode: number;
}

export interface SavedMsg {
  type: "saved";
  path: string;
  pairs: number;
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type ServerMsg = StateMsg | SavedMsg | ErrorMsg;

export class ProtocolError extends Error {}

function fail(reason: string): never {
  throw new ProtocolError(reason);
}

function numberField(obj: Record<string, unknown>, key: string): number {
  const v = obj[key];
  if (typeof v !== "number" || !Number.isFinite(v)) {
    fail(`field ${key} is not a finite number`);
  }
  return v;
}

function numberArray(obj: Record<string, unknown>, key: string): number[] {
  const v = obj[key];
  if (!Array.isArray(v) || v.some((x) => typeof x !== "number" || !Number.isFinite(x))) {
    fail(`field ${key} is not an array of finite numbers`);
  }
  return v as number[];
}

export function parseServerMsg(raw: string): ServerMsg {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    fail("message is not JSON");
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    fail("message is not an object");
  }
  const obj = doc as Record<string, unknown>;
  switch (obj.type) {
    case "state": {
      const render = obj.render;
      if (typeof render !== "object" || render === null) {
        fail("field render is not an object");
      }
      return {
        type: "state",
        s: numberArray(obj, "s"),
        render: render as Record<string, unknown>,
        reward: numberField(obj, "reward"),
        terminal: obj.terminal === true,
        pairs: numberField(obj, "pairs"),
        episode: numberField(obj, "episode"),
      };
    }
    case "saved": {
      if (typeof obj.path !== "string") fail("field path is not a string");
      return { type: "saved", path: obj.path, pairs: numberField(obj, "pairs") };
    }
    case "error": {
      if (typeof obj.message !== "string") fail("field message is not a string");
      return { type: "error", message: obj.message };
    }
    default:
      fail(`unknown message type ${JSON.stringify(obj.type)}`);
  }
}

export function actionMsg(a: number[]): string {
  return JSON.stringify({ type: "action", a });
}

export function resetMsg(): string {
  return JSON.stringify({ type: "reset" });
}

export function finishMsg(): string {
  return JSON.stringify({ type: "finish" });
}

export function parseSessionMeta(doc: unknown): SessionMeta {
  if (typeof doc !== "object" || doc === null) fail("session reply is not an object");
  const obj = doc as Record<string, unknown>;
  if (typeof obj.session_id !== "string") fail("field session_id is not a string");
  if (typeof obj.env !== "string") fail("field env is not a string");
  const keys = obj.render_keys;
  if (!Array.isArray(keys) || keys.some((k) => typeof k !== "string")) {
    fail("field render_keys is not an array of strings");
  }
  return {
    session_id: obj.session_id,
    env: obj.env,
    state_dim: numberField(obj, "state_dim"),
    action_dim: numberField(obj, "action_dim"),
    action_low: numberArray(obj, "action_low"),
    action_high: numberArray(obj, "action_high"),
    tick_ms: numberField(obj, "tick_ms"),
    render_keys: keys as string[],
  };
}
