import { describe, expect, test } from "vitest";

import { ConsoleModel } from "../src/model.js";
import { ContextEvent, StateMsg } from "../src/protocol.js";

function stateMsg(
  objectId: string,
  facet: "physical" | "virtual",
  key: string,
  value: boolean | number | string,
  lamport = 1,
  actor = "dev1",
): StateMsg {
  return {
    t: "state",
    object_id: objectId,
    facet,
    entries: { [key]: { v: value, c: { l: lamport, a: actor } } },
  };
}

function physicalEvent(id: string, prio = 3, ts = 0, ttl = 30_000): ContextEvent {
  return {
    id,
    origin: "physical",
    cat: "device-state",
    prio,
    topic: "obj/plant1/physical",
    payload: {},
    ts,
    ttl,
  };
}

describe("view model", () => {
  test("welcome marks connected and clears errors", () => {
    const model = new ConsoleModel();
    model.apply({ t: "err", code: "x", detail: "boom" });
    model.apply({ t: "welcome", session_id: "s1", server_lamport: 0 });
    expect(model.status).toBe("connected");
    expect(model.lastError).toBeNull();
  });

  test("state hydrates both facets and clears diverged on agreement", () => {
    const model = new ConsoleModel();
    model.apply(stateMsg("plant1", "physical", "moisture", 0.18));
    let obj = model.objects.get("plant1")!;
    expect(obj.physical.get("moisture")?.v).toBe(0.18);
    expect(obj.diverged).toBe(false); // virtual side unknown, nothing disagrees
    model.apply(stateMsg("plant1", "virtual", "moisture", 0.5, 2));
    obj = model.objects.get("plant1")!;
    expect(obj.diverged).toBe(true);
    model.apply(stateMsg("plant1", "virtual", "moisture", 0.18, 3));
    expect(model.objects.get("plant1")!.diverged).toBe(false);
  });

  test("no state is invented client-side", () => {
    const model = new ConsoleModel();
    // nothing applied: toggling in the UI sends a Set but the model only
    // moves on the broker's echo
    expect(model.objects.size).toBe(0);
    model.apply({ t: "ack", ref_id: "applied" });
    expect(model.objects.size).toBe(0);
  });

  test("transition_ok and bridge events move the mode badge", () => {
    const model = new ConsoleModel();
    model.apply({ t: "transition_ok", user_id: "u1", mode: "mixed" });
    expect(model.users.get("u1")?.mode).toBe("mixed");
    model.apply({
      t: "pub",
      topic: "bridge/u1/transition",
      event: {
        id: "b9", origin: "virtual", cat: "application", prio: 2,
        topic: "bridge/u1/transition",
        payload: { from: "mixed", to: "immersive" }, ts: 5, ttl: 30_000,
      },
    });
    expect(model.users.get("u1")?.mode).toBe("immersive");
  });

  test("err is rendered inline", () => {
    const model = new ConsoleModel();
    model.apply({ t: "err", code: "illegal-edge", detail: "physical -> immersive" });
    expect(model.lastError).toEqual({
      code: "illegal-edge",
      detail: "physical -> immersive",
    });
  });

  test("cue feed keeps most recent first and caps length", () => {
    const model = new ConsoleModel();
    for (let i = 0; i < 25; i++) {
      model.apply({
        t: "cue", user_id: "u1", presentation: "full",
        event: physicalEvent(`e${i}`),
      });
    }
    const cues = model.users.get("u1")!.cues;
    expect(cues).toHaveLength(20);
    expect(cues[0]!.event.id).toBe("e24");
  });

  test("gap estimate follows the replay formula on observed traffic", () => {
    const model = new ConsoleModel();
    model.apply({ t: "transition_ok", user_id: "u1", mode: "immersive" });
    expect(model.gapEstimate("u1")).toBeNull();
    // three relevant events, one cued in time, one cued late, one missed
    model.apply({ t: "pub", topic: "x/a", event: physicalEvent("a", 3, 0, 100) });
    model.apply({ t: "pub", topic: "x/b", event: physicalEvent("b", 3, 0, 100) });
    model.apply({ t: "pub", topic: "x/c", event: physicalEvent("c", 3, 0, 100) });
    model.apply({ t: "cue", user_id: "u1", presentation: "full",
                  event: physicalEvent("a", 3, 50, 100) });
    model.apply({ t: "cue", user_id: "u1", presentation: "full",
                  event: physicalEvent("b", 3, 900, 100) });
    expect(model.gapEstimate("u1")).toBeCloseTo(1 - 1 / 3, 12);
    // low-priority and virtual-origin events are not relevant
    model.apply({ t: "pub", topic: "x/d", event: physicalEvent("d", 1) });
    model.apply({
      t: "pub", topic: "x/e",
      event: { ...physicalEvent("e", 5), origin: "virtual" },
    });
    expect(model.users.get("u1")!.relevant).toBe(3);
  });

  test("gap estimate ignores events while user is not immersed", () => {
    const model = new ConsoleModel();
    model.apply({ t: "transition_ok", user_id: "u1", mode: "mixed" });
    model.apply({ t: "pub", topic: "x/a", event: physicalEvent("a") });
    expect(model.gapEstimate("u1")).toBeNull();
  });

  test("reconnect drops object state for re-hydration", () => {
    const model = new ConsoleModel();
    model.apply(stateMsg("plant1", "physical", "moisture", 0.18));
    model.setStatus("connecting");
    expect(model.objects.size).toBe(0);
    model.apply(stateMsg("plant1", "physical", "moisture", 0.18));
    expect(model.objects.get("plant1")?.physical.get("moisture")?.v).toBe(0.18);
  });
});
