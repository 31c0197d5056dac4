/**
 * WebSocket session against a live broker: hello as console, subscribe to
 * everything plus twin state, surface decoded messages, reconnect with
 * capped backoff.  A WebSocket factory can be injected so the same client
 * runs in browsers and under node test harnesses.
 */

import {
  Facet,
  Message,
  RealityMode,
  Scalar,
  decodeLine,
  encodeLine,
  frameLines,
  helloMessage,
  setMessage,
  subMessage,
  transitionMessage,
} from "./protocol.js";

export interface WebSocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
  readyState: number;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export interface ClientOptions {
  url: string;
  clientId: string;
  onMessage: (msg: Message) => void;
  onStatus: (status: "connecting" | "connected" | "error" | "closed") => void;
  makeSocket?: WebSocketFactory;
  reconnect?: boolean;
}

const OPEN = 1;

export class ConsoleClient {
  private ws: WebSocketLike | null = null;
  private closed = false;
  private retryMs = 500;
  private lamport = 0;

  constructor(private readonly options: ClientOptions) {}

  connect(): void {
    const make =
      this.options.makeSocket ??
      ((url: string) => new WebSocket(url) as unknown as WebSocketLike);
    this.options.onStatus("connecting");
    let ws: WebSocketLike;
    try {
      ws = make(this.options.url);
    } catch {
      this.options.onStatus("error");
      this.scheduleRetry();
      return;
    }
    this.ws = ws;
    ws.onopen = () => {
      this.retryMs = 500;
      ws.send(encodeLine(helloMessage(this.options.clientId)));
      ws.send(encodeLine(subMessage("#")));
      ws.send(encodeLine(subMessage("state/#")));
    };
    ws.onmessage = (ev) => {
      const text =
        typeof ev.data === "string" ? ev.data : String(ev.data ?? "");
      for (const line of frameLines(text)) {
        let msg: Message;
        try {
          msg = decodeLine(line);
        } catch {
          continue; // tolerate unknown traffic; render only what we understand
        }
        if (msg.t === "welcome") {
          this.lamport = Math.max(this.lamport, msg.server_lamport);
          this.options.onStatus("connected");
        }
        if (msg.t === "state") {
          for (const entry of Object.values(msg.entries)) {
            this.lamport = Math.max(this.lamport, entry.c.l);
          }
        }
        this.options.onMessage(msg);
      }
    };
    ws.onerror = () => {
      this.options.onStatus("error");
    };
    ws.onclose = () => {
      if (!this.closed) {
        this.options.onStatus("error");
        this.scheduleRetry();
      } else {
        this.options.onStatus("closed");
      }
    };
  }

  private scheduleRetry(): void {
    if (this.closed || this.options.reconnect === false) return;
    setTimeout(() => {
      if (!this.closed) this.connect();
    }, this.retryMs);
    this.retryMs = Math.min(this.retryMs * 2, 8000);
  }

  private send(msg: Message): boolean {
    if (!this.ws || this.ws.readyState !== OPEN) return false;
    this.ws.send(encodeLine(msg));
    return true;
  }

  /** Control a device value; rendering waits for the State echo. */
  setValue(objectId: string, facet: Facet, key: string, value: Scalar): boolean {
    return this.send(setMessage(objectId, facet, key, value, this.lamport));
  }

  requestTransition(userId: string, mode: RealityMode): boolean {
    return this.send(transitionMessage(userId, mode));
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
