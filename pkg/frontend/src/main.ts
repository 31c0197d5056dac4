/** Bootstrap: connect to the broker named by ?ws=... (default same host :7450). */

import { ConsoleClient } from "./client.js";
import { ConsoleModel } from "./model.js";
import { render } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const host = window.location.hostname || "127.0.0.1";
const url = params.get("ws") ?? `ws://${host}:7450/ws`;
const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const model = new ConsoleModel();
const client = new ConsoleClient({
  url,
  clientId: params.get("client") ?? `console-${Math.floor(Math.random() * 1e6)}`,
  onMessage: (msg) => {
    model.apply(msg);
    render(root, model, client);
  },
  onStatus: (status) => {
    model.setStatus(status);
    render(root, model, client);
  },
});

client.connect();
render(root, model, client);
