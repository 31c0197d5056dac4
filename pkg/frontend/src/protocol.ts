/**
 * Wire protocol mirror: line-delimited JSON messages, field names exactly as
 * the broker emits them.  Encoding preserves the broker's key order (object
 * literal order); decoding validates the tag and required fields and throws
 * ProtocolError on anything else.
 */

export type Scalar = boolean | number | string;
export type RealityMode = "physical" | "mixed" | "immersive";
export type Facet = "physical" | "virtual";
export type Origin = "physical" | "virtual";
export type Role = "device" | "user" | "console";
export type Presentation = "full" | "summary";

export interface ClockStamp {
  l: number;
  a: string;
}

export interface VersionedValue {
  v: Scalar;
  c: ClockStamp;
}

export interface ContextEvent {
  id: string;
  origin: Origin;
  cat: string;
  prio: number;
  topic: string;
  payload: Record<string, Scalar>;
  ts: number;
  ttl: number;
}

export interface Hello {
  t: "hello";
  client_id: string;
  role: Role;
  proto_version: number;
}

export interface Welcome {
  t: "welcome";
  session_id: string;
  server_lamport: number;
}

export interface Sub {
  t: "sub";
  filter: string;
}

export interface Pub {
  t: "pub";
  topic: string;
  event: ContextEvent;
}

export interface SetMsg {
  t: "set";
  object_id: string;
  facet: Facet;
  key: string;
  value: Scalar;
  client_lamport: number;
}

export interface StateMsg {
  t: "state";
  object_id: string;
  facet: Facet;
  entries: Record<string, VersionedValue>;
}

export interface Transition {
  t: "transition";
  user_id: string;
  target_mode: RealityMode;
}

export interface TransitionOk {
  t: "transition_ok";
  user_id: string;
  mode: RealityMode;
}

export interface Cue {
  t: "cue";
  user_id: string;
  presentation: Presentation;
  event: ContextEvent;
  summary_text?: string;
}

export interface Ack {
  t: "ack";
  ref_id: string;
}

export interface ErrMsg {
  t: "err";
  code: string;
  detail: string;
}

export interface Ping {
  t: "ping";
  nonce: number;
}

export interface Pong {
  t: "pong";
  nonce: number;
}

export type Message =
  | Hello
  | Welcome
  | Sub
  | Pub
  | SetMsg
  | StateMsg
  | Transition
  | TransitionOk
  | Cue
  | Ack
  | ErrMsg
  | Ping
  | Pong;

export class ProtocolError extends Error {}

const REQUIRED_FIELDS: Record<string, string[]> = {
  hello: ["client_id", "role", "proto_version"],
  welcome: ["session_id", "server_lamport"],
  sub: ["filter"],
  pub: ["topic", "event"],
  set: ["object_id", "facet", "key", "value", "client_lamport"],
  state: ["object_id", "facet", "entries"],
  transition: ["user_id", "target_mode"],
  transition_ok: ["user_id", "mode"],
  cue: ["user_id", "presentation", "event"],
  ack: ["ref_id"],
  err: ["code", "detail"],
  ping: ["nonce"],
  pong: ["nonce"],
};

/** Encode one message as a wire line (trailing newline included). */
export function encodeLine(msg: Message): string {
  return JSON.stringify(msg) + "\n";
}

/** Parse one wire line; throws ProtocolError on unknown or incomplete input. */
export function decodeLine(line: string): Message {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch (e) {
    throw new ProtocolError(`malformed line: ${(e as Error).message}`);
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new ProtocolError("message must be a JSON object");
  }
  const obj = raw as Record<string, unknown>;
  const tag = obj["t"];
  if (typeof tag !== "string" || !(tag in REQUIRED_FIELDS)) {
    throw new ProtocolError(`unknown message tag ${String(tag)}`);
  }
  for (const field of REQUIRED_FIELDS[tag] ?? []) {
    if (!(field in obj)) {
      throw new ProtocolError(`${tag} is missing field ${field}`);
    }
  }
  if (tag === "pub" || tag === "cue") {
    const event = obj["event"] as Record<string, unknown>;
    for (const field of ["id", "origin", "cat", "prio", "topic", "payload", "ts", "ttl"]) {
      if (typeof event !== "object" || event === null || !(field in event)) {
        throw new ProtocolError(`${tag}.event is missing field ${field}`);
      }
    }
  }
  return obj as unknown as Message;
}

/** Split a websocket frame payload into wire lines (frames may batch lines). */
export function frameLines(data: string): string[] {
  return data.split("\n").filter((line) => line.trim().length > 0);
}

export function helloMessage(clientId: string): Hello {
  return { t: "hello", client_id: clientId, role: "console", proto_version: 1 };
}

export function subMessage(filter: string): Sub {
  return { t: "sub", filter };
}

export function setMessage(
  objectId: string,
  facet: Facet,
  key: string,
  value: Scalar,
  clientLamport: number,
): SetMsg {
  return {
    t: "set",
    object_id: objectId,
    facet,
    key,
    value,
    client_lamport: clientLamport,
  };
}

export function transitionMessage(userId: string, mode: RealityMode): Transition {
  return { t: "transition", user_id: userId, target_mode: mode };
}
