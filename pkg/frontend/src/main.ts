/** DOM wiring: create-session form, label-batch screen with 1/2/3
 * keyboard shortcuts, query-list panel, MRE sparkline, status polling. */

import { ApiError, NetworkError, SessionApi } from "./api.js";
import { SessionStore } from "./state.js";
import type { Label } from "./types.js";
import "./style.css";

const POLL_INTERVAL_MS = 2000;
const LABELS: Array<{ key: string; value: Label; text: string }> = [
  { key: "1", value: "relevant", text: "1 · relevant" },
  { key: "2", value: "irrelevant", text: "2 · irrelevant" },
  { key: "3", value: "unknown", text: "3 · unknown" },
];

const baseUrl = new URLSearchParams(location.search).get("api") ?? "http://127.0.0.1:8000";
const api = new SessionApi(baseUrl);
const store = new SessionStore();

const root = document.getElementById("app") as HTMLElement;
let pollTimer: number | null = null;
let focusedRow = 0;

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderCreateForm(): void {
  root.replaceChildren();
  const form = el("form", "create-form") as HTMLFormElement;
  form.innerHTML = `
    <h1>querysmith labeling</h1>
    <label>Prototype document
      <textarea name="prototype" rows="6" required
        placeholder="Paste the reference text whose topic you want to retrieve"></textarea>
    </label>
    <div class="row">
      <label>Label budget <input name="budget" type="number" value="300" min="1"></label>
      <label>Batch size <input name="batch" type="number" value="10" min="1"></label>
      <label>Seed <input name="seed" type="number" placeholder="random"></label>
    </div>
    <button type="submit">Start session</button>
    <p class="error" hidden></p>
  `;
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const data = new FormData(form);
    const errorNode = form.querySelector(".error") as HTMLElement;
    errorNode.hidden = true;
    try {
      const seedRaw = String(data.get("seed") ?? "").trim();
      const created = await api.createSession({
        prototype_text: String(data.get("prototype") ?? ""),
        label_budget: Number(data.get("budget")),
        batch_size: Number(data.get("batch")),
        params: seedRaw ? { seed: Number(seedRaw) } : {},
      });
      store.startSession(created.session_id, Number(data.get("budget")));
      await refreshBatch();
      startPolling();
    } catch (error) {
      errorNode.hidden = false;
      errorNode.textContent =
        error instanceof ApiError ? `${error.detail} (${error.fields.join(", ")})` : String(error);
    }
  });
  root.append(form);
}

async function refreshBatch(): Promise<void> {
  const sessionId = store.view.sessionId;
  if (!sessionId) return;
  try {
    store.applyBatch(await api.getBatch(sessionId));
    focusedRow = 0;
  } catch (error) {
    if (error instanceof NetworkError) store.setNetworkError(error.message);
    else throw error;
  }
}

async function submitLabels(): Promise<void> {
  const sessionId = store.view.sessionId;
  if (!sessionId || !store.submitReady) return;
  try {
    store.applySubmitSuccess(await api.submitLabels(sessionId, store.labelsPayload()));
    await refreshBatch();
  } catch (error) {
    if (error instanceof ApiError && error.code === "invalid_labels") {
      store.applySubmitRejection(error.fields);
    } else if (error instanceof NetworkError) {
      store.setNetworkError(error.message);
    } else if (error instanceof ApiError) {
      store.setNetworkError(error.detail);
    } else {
      throw error;
    }
  }
}

function startPolling(): void {
  if (pollTimer !== null) clearInterval(pollTimer);
  pollTimer = window.setInterval(async () => {
    const sessionId = store.view.sessionId;
    if (!sessionId) return;
    try {
      store.applyStatus(await api.getStatus(sessionId));
    } catch (error) {
      if (error instanceof NetworkError) store.setNetworkError(error.message);
    }
  }, POLL_INTERVAL_MS);
}

function sparkline(points: number[]): SVGSVGElement {
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", "0 0 120 32");
  svg.classList.add("sparkline");
  if (points.length > 0) {
    const max = Math.max(...points, 2);
    const step = points.length > 1 ? 116 / (points.length - 1) : 0;
    const path = points
      .map((v, i) => `${i === 0 ? "M" : "L"}${2 + i * step},${30 - (v / max) * 28}`)
      .join(" ");
    const node = document.createElementNS("http://www.w3.org/2000/svg", "path");
    node.setAttribute("d", path);
    svg.append(node);
  }
  return svg;
}

function renderSession(): void {
  const view = store.view;
  if (!view.sessionId) return;
  root.replaceChildren();

  const header = el("header");
  header.append(el("h1", undefined, "querysmith labeling"));
  header.append(el("code", "session-id", view.sessionId));
  root.append(header);

  if (view.networkError) {
    const banner = el("div", "banner", `network problem: ${view.networkError} — retrying keeps your selections`);
    const retry = el("button", undefined, "Retry now") as HTMLButtonElement;
    retry.addEventListener("click", () => void refreshBatch());
    banner.append(retry);
    root.append(banner);
  }

  const gauge = el("div", "gauge");
  gauge.append(el("span", undefined, `status: ${view.status}`));
  gauge.append(el("span", undefined, `labels: ${view.labelsUsed} / ${view.budget}`));
  if (view.bestMre !== null) gauge.append(el("span", undefined, `best MRE: ${view.bestMre.toFixed(4)}`));
  gauge.append(sparkline(view.mreTrajectory));
  root.append(gauge);

  const main = el("div", "columns");
  const batchPanel = el("section", "batch-panel");
  if (view.status !== "active" || (view.batch.length === 0 && view.labelsUsed > 0)) {
    batchPanel.append(el("h2", undefined, "Session finished"));
    const exportButton = el("button", undefined, "Export queries and documents") as HTMLButtonElement;
    exportButton.addEventListener("click", async () => {
      const exported = await api.getExport(view.sessionId as string);
      const blob = new Blob([JSON.stringify(exported, null, 2)], { type: "application/json" });
      const link = document.createElement("a");
      link.href = URL.createObjectURL(blob);
      link.download = `session-${view.sessionId}.json`;
      link.click();
    });
    batchPanel.append(exportButton);
  } else {
    batchPanel.append(el("h2", undefined, `Round ${view.round} — label each result`));
    view.batch.forEach((item, rowIndex) => {
      const row = el("article", "result-row");
      if (view.offendingIds.includes(item.doc_id)) row.classList.add("offending");
      if (rowIndex === focusedRow) row.classList.add("focused");
      row.append(el("span", "rank", `#${item.rank}`));
      row.append(el("span", "score", item.score.toFixed(4)));
      row.append(el("p", "text", item.text));
      const buttons = el("div", "labels");
      for (const { value, text } of LABELS) {
        const button = el("button", undefined, text) as HTMLButtonElement;
        if (view.selections.get(item.doc_id) === value) button.classList.add("selected");
        button.addEventListener("click", () => {
          store.select(item.doc_id, value);
          focusedRow = Math.min(rowIndex + 1, view.batch.length - 1);
        });
        buttons.append(button);
      }
      row.append(buttons);
      batchPanel.append(row);
    });
    const submit = el("button", "submit", "Submit labels") as HTMLButtonElement;
    submit.disabled = !store.submitReady;
    submit.addEventListener("click", () => void submitLabels());
    batchPanel.append(submit);
  }
  main.append(batchPanel);

  const queuePanel = el("aside", "queue-panel");
  queuePanel.append(el("h2", undefined, "Best queries (ascending MRE)"));
  const list = el("ol");
  for (const entry of view.queue) {
    const item = el("li");
    item.append(el("code", undefined, entry.terms.join(" ")));
    item.append(el("span", "mre", entry.mre.toFixed(4)));
    list.append(item);
  }
  queuePanel.append(list);
  main.append(queuePanel);
  root.append(main);
}

document.addEventListener("keydown", (event) => {
  const view = store.view;
  if (!view.sessionId || view.batch.length === 0) return;
  const shortcut = LABELS.find((l) => l.key === event.key);
  if (shortcut) {
    const item = view.batch[focusedRow];
    if (item) {
      store.select(item.doc_id, shortcut.value);
      focusedRow = Math.min(focusedRow + 1, view.batch.length - 1);
    }
  } else if (event.key === "Enter" && store.submitReady) {
    void submitLabels();
  }
});

store.subscribe(() => {
  if (store.view.sessionId) renderSession();
});

renderCreateForm();
