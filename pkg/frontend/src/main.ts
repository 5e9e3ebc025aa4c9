/** Browser entry point: one session per page, rendered into #app. */

import { ApiClient } from "./client.js";
import { SessionController } from "./controller.js";
import { renderConsole } from "./render.js";
import { EventFeed } from "./stream.js";
import type { FindingJson } from "./types.js";

function readAnswer(form: HTMLFormElement): FindingJson | null {
  const data = new FormData(form);
  const value = data.get("value");
  if (value === "present" || value === "absent") return value;
  if (value === "positive") return { positive: String(data.get("result") ?? "") };
  return null;
}

async function start(root: HTMLElement, baseUrl: string, pack: string, keywords: string[]) {
  const client = new ApiClient(baseUrl);
  const controller = await SessionController.open(client, { pack, keywords });
  const feed = new EventFeed(baseUrl, controller.sessionId);

  const redraw = () => {
    root.innerHTML = renderConsole(controller.view, controller.lastError);
  };
  controller.onChange(() => {
    redraw();
    if (controller.view.closedStatus !== null) feed.stop();
  });
  redraw();

  root.addEventListener("submit", (event) => {
    const form = event.target as HTMLFormElement;
    if (!form.classList.contains("question")) return;
    event.preventDefault();
    const value = readAnswer(form);
    const sign = form.dataset["sign"];
    if (value !== null && sign) void controller.submitAnswer(sign, value);
  });
  root.addEventListener("click", (event) => {
    const button = event.target as HTMLElement;
    const action = button.dataset["action"];
    const seq = Number(button.dataset["seq"]);
    if (action === "validate") void controller.validateProposal(seq);
    else if (action === "reject") void controller.rejectProposal(seq);
  });

  await feed.run((message) => controller.ingest([message]));
}

const setup = document.querySelector<HTMLFormElement>("#setup");
setup?.addEventListener("submit", (event) => {
  event.preventDefault();
  const data = new FormData(setup);
  const keywords = String(data.get("keywords") ?? "")
    .split(",")
    .map((s) => s.trim())
    .filter(Boolean);
  const root = document.querySelector<HTMLElement>("#app");
  if (root === null) return;
  setup.hidden = true;
  void start(
    root,
    String(data.get("base") ?? "http://127.0.0.1:8000"),
    String(data.get("pack") ?? "diarrhea"),
    keywords,
  );
});
