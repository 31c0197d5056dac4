/**
 * Plain-DOM rendering of the console model, plus the two controls: set a
 * device value on the physical facet and request user mode transitions.
 * Re-renders wholesale on every message; the model stays the single source
 * of truth.
 */

import { ConsoleClient } from "./client.js";
import { ConsoleModel, scalarText } from "./model.js";
import { RealityMode, Scalar, VersionedValue } from "./protocol.js";

const MODES: RealityMode[] = ["physical", "mixed", "immersive"];

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function facetTable(
  title: string,
  entries: Map<string, VersionedValue>,
): HTMLElement {
  const box = el("div", "facet");
  box.appendChild(el("h4", undefined, title));
  if (entries.size === 0) {
    box.appendChild(el("p", "empty", "(empty)"));
    return box;
  }
  const table = el("table");
  for (const [key, entry] of [...entries].sort(([a], [b]) =>
    a.localeCompare(b),
  )) {
    const row = el("tr");
    row.appendChild(el("td", "key", key));
    row.appendChild(el("td", "value", scalarText(entry.v)));
    row.appendChild(el("td", "clock", `@${entry.c.l}/${entry.c.a}`));
    table.appendChild(row);
  }
  box.appendChild(table);
  return box;
}

function parseScalar(text: string): Scalar {
  if (text === "true") return true;
  if (text === "false") return false;
  const n = Number(text);
  return Number.isFinite(n) && text.trim() !== "" ? n : text;
}

export function render(
  root: HTMLElement,
  model: ConsoleModel,
  client: ConsoleClient,
): void {
  root.replaceChildren();

  const header = el("header");
  header.appendChild(el("h1", undefined, "XRI operator console"));
  header.appendChild(el("span", `status status-${model.status}`, model.status));
  if (model.lastError) {
    header.appendChild(
      el("div", "error",
         `broker error ${model.lastError.code}: ${model.lastError.detail}`),
    );
  }
  root.appendChild(header);

  const objects = el("section", "objects");
  objects.appendChild(el("h2", undefined, "Twin objects"));
  for (const view of [...model.objects.values()].sort((a, b) =>
    a.objectId.localeCompare(b.objectId),
  )) {
    const card = el("div", view.diverged ? "card diverged" : "card");
    card.appendChild(
      el("h3", undefined,
         view.diverged ? `${view.objectId} (diverged)` : view.objectId),
    );
    card.appendChild(facetTable("physical", view.physical));
    card.appendChild(facetTable("virtual", view.virtual));

    const form = el("div", "setter");
    const keyInput = el("input") as HTMLInputElement;
    keyInput.placeholder = "key";
    const valueInput = el("input") as HTMLInputElement;
    valueInput.placeholder = "value";
    const button = el("button", undefined, "set physical") as HTMLButtonElement;
    button.onclick = () => {
      if (keyInput.value) {
        client.setValue(view.objectId, "physical", keyInput.value,
                        parseScalar(valueInput.value));
      }
    };
    form.append(keyInput, valueInput, button);
    card.appendChild(form);
    objects.appendChild(card);
  }
  root.appendChild(objects);

  const users = el("section", "users");
  users.appendChild(el("h2", undefined, "Users"));
  for (const view of [...model.users.values()].sort((a, b) =>
    a.userId.localeCompare(b.userId),
  )) {
    const card = el("div", "card");
    const title = el("h3", undefined, view.userId);
    title.appendChild(el("span", `badge badge-${view.mode}`, view.mode));
    card.appendChild(title);

    const gap = model.gapEstimate(view.userId);
    card.appendChild(
      el("p", "gap",
         gap === null
           ? "G estimate: n/a (nothing relevant observed)"
           : `G estimate: ${gap.toFixed(3)} ` +
             `(${view.delivered}/${view.relevant} cued; authoritative value ` +
             `comes from log replay)`),
    );

    const controls = el("div", "transitions");
    for (const mode of MODES) {
      const button = el("button", undefined, mode) as HTMLButtonElement;
      button.onclick = () => client.requestTransition(view.userId, mode);
      controls.appendChild(button);
    }
    card.appendChild(controls);

    const feed = el("ul", "cues");
    for (const cue of view.cues) {
      const body =
        cue.presentation === "summary" && cue.summaryText
          ? cue.summaryText
          : `${cue.event.cat} prio ${cue.event.prio} on ${cue.event.topic}`;
      feed.appendChild(el("li", `cue cue-${cue.presentation}`,
                          `[${cue.presentation}] ${body}`));
    }
    card.appendChild(feed);
    users.appendChild(card);
  }
  root.appendChild(users);

  const footer = el("footer");
  footer.appendChild(
    el("span", undefined, `messages observed: ${model.messagesSeen}`),
  );
  root.appendChild(footer);
}
