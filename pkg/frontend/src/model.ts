/**
 * Server-authoritative view model.
 *
 * Every rendered value is traceable to a received message: sending a Set or
 * Transition changes nothing here until the broker's echo (State,
 * TransitionOk, Cue, Err) arrives.  The per-user awareness-gap figure is a
 * client-side estimate over the traffic this console happened to observe,
 * computed with the same rule as the authoritative replay metric: a
 * physical-origin event with priority >= 2 seen while the user is immersed
 * counts as relevant, and is delivered only if a cue for it shows up within
 * the event's ttl.
 */

import {
  ContextEvent,
  Message,
  Presentation,
  RealityMode,
  Scalar,
  VersionedValue,
} from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "error" | "closed";

export interface ObjectView {
  objectId: string;
  physical: Map<string, VersionedValue>;
  virtual: Map<string, VersionedValue>;
  /** true when any key disagrees across facets (value-wise) */
  diverged: boolean;
}

export interface CueEntry {
  presentation: Presentation;
  event: ContextEvent;
  summaryText?: string;
}

export interface UserView {
  userId: string;
  mode: RealityMode | "unknown";
  cues: CueEntry[]; // most recent first
  relevant: number;
  delivered: number;
}

export interface ErrView {
  code: string;
  detail: string;
}

const CUE_FEED_LIMIT = 20;
const G_PRIORITY_MIN = 2;

function facetsDiverge(
  physical: Map<string, VersionedValue>,
  virtual: Map<string, VersionedValue>,
): boolean {
  for (const [key, entry] of physical) {
    const other = virtual.get(key);
    if (other !== undefined && other.v !== entry.v) return true;
  }
  return false;
}

export class ConsoleModel {
  status: ConnectionStatus = "connecting";
  sessionId: string | null = null;
  objects = new Map<string, ObjectView>();
  users = new Map<string, UserView>();
  lastError: ErrView | null = null;
  messagesSeen = 0;
  /** pending awareness deadlines: eventId -> {userId, deadline ts} */
  private pending = new Map<string, { userId: string; deadline: number }>();

  setStatus(status: ConnectionStatus): void {
    this.status = status;
    if (status === "connecting") {
      // reconnect: state re-hydrates from the retained snapshot, so drop
      // everything derived from the old session
      this.objects.clear();
      this.pending.clear();
      this.sessionId = null;
    }
  }

  user(userId: string): UserView {
    let view = this.users.get(userId);
    if (!view) {
      view = { userId, mode: "unknown", cues: [], relevant: 0, delivered: 0 };
      this.users.set(userId, view);
    }
    return view;
  }

  private object(objectId: string): ObjectView {
    let view = this.objects.get(objectId);
    if (!view) {
      view = {
        objectId,
        physical: new Map(),
        virtual: new Map(),
        diverged: false,
      };
      this.objects.set(objectId, view);
    }
    return view;
  }

  /** Estimated awareness gap for one user; null until anything was relevant. */
  gapEstimate(userId: string): number | null {
    const view = this.users.get(userId);
    if (!view || view.relevant === 0) return null;
    return 1 - view.delivered / view.relevant;
  }

  apply(msg: Message): void {
    this.messagesSeen += 1;
    switch (msg.t) {
      case "welcome":
        this.sessionId = msg.session_id;
        this.status = "connected";
        this.lastError = null;
        break;
      case "state": {
        const view = this.object(msg.object_id);
        const facet = msg.facet === "physical" ? view.physical : view.virtual;
        for (const [key, entry] of Object.entries(msg.entries)) {
          facet.set(key, entry);
        }
        view.diverged = facetsDiverge(view.physical, view.virtual);
        break;
      }
      case "transition_ok": {
        this.user(msg.user_id).mode = msg.mode;
        break;
      }
      case "pub":
        this.observeEvent(msg.event);
        break;
      case "cue": {
        const view = this.user(msg.user_id);
        view.cues.unshift({
          presentation: msg.presentation,
          event: msg.event,
          summaryText: msg.summary_text,
        });
        if (view.cues.length > CUE_FEED_LIMIT) view.cues.pop();
        const pending = this.pending.get(msg.event.id);
        if (
          pending &&
          pending.userId === msg.user_id &&
          msg.event.ts <= pending.deadline
        ) {
          view.delivered += 1;
          this.pending.delete(msg.event.id);
        }
        break;
      }
      case "err":
        this.lastError = { code: msg.code, detail: msg.detail };
        break;
      case "ack":
        break; // nothing rendered from acks; state arrives via echo
      default:
        break;
    }
  }

  private observeEvent(event: ContextEvent): void {
    // track user modes from the bridge's own transition announcements
    if (event.topic.startsWith("bridge/") && event.topic.endsWith("/transition")) {
      const userId = event.topic.split("/")[1];
      const to = event.payload["to"];
      if (userId && typeof to === "string") {
        this.user(userId).mode = to as RealityMode;
      }
      return;
    }
    if (event.origin !== "physical" || event.prio < G_PRIORITY_MIN) return;
    for (const view of this.users.values()) {
      if (view.mode === "immersive") {
        view.relevant += 1;
        this.pending.set(event.id, {
          userId: view.userId,
          deadline: event.ts + event.ttl,
        });
      }
    }
  }
}

export function scalarText(value: Scalar): string {
  if (typeof value === "string") return value;
  return JSON.stringify(value);
}
