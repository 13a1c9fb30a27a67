import { drawHeatmap } from "./heatmap.js";
import type { AlertDetail } from "./types.js";
import { LABEL_NAMES } from "./types.js";

// Alert detail: depth heatmap over the window, per-frame price ladder,
// similar exemplars, and the three label buttons (keyboard 1/2/0).

function ladderTable(detail: AlertDetail, frame: number): HTMLTableElement {
  const table = document.createElement("table");
  table.className = "ladder";
  const head = document.createElement("tr");
  for (const title of ["Bid qty", "Bid px", "Ask px", "Ask qty"]) {
    const th = document.createElement("th");
    th.textContent = title;
    head.appendChild(th);
  }
  table.appendChild(head);
  const rows = detail.frames[frame] ?? [];
  const bids = rows.filter((r) => r[1] === 0);
  const asks = rows.filter((r) => r[1] === 1);
  const levels = Math.max(bids.length, asks.length);
  for (let i = 0; i < Math.min(levels, 12); i++) {
    const tr = document.createElement("tr");
    const bid = bids[i];
    const ask = asks[i];
    for (const text of [
      bid ? String(bid[3]) : "",
      bid ? String(bid[2]) : "",
      ask ? String(ask[2]) : "",
      ask ? String(ask[3]) : "",
    ]) {
      const td = document.createElement("td");
      td.textContent = text;
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  return table;
}

export interface DetailCallbacks {
  onLabel: (alertId: string, label: number) => void;
  onClose: () => void;
}

export function renderDetail(
  container: HTMLElement,
  detail: AlertDetail,
  callbacks: DetailCallbacks,
): void {
  container.replaceChildren();
  const title = document.createElement("h2");
  title.textContent = `${detail.alert_id} — ${LABEL_NAMES[detail.predicted_label]} `
    + `(p=${detail.model_score.toFixed(3)})`;
  container.appendChild(title);

  const canvas = document.createElement("canvas");
  canvas.width = 480;
  canvas.height = 300;
  canvas.className = "heatmap";
  container.appendChild(canvas);
  drawHeatmap(canvas, detail.frames);

  const lastFrame = Math.max(0, detail.frames.length - 1);
  container.appendChild(ladderTable(detail, lastFrame));

  const similars = document.createElement("div");
  similars.className = "exemplars";
  const caption = document.createElement("h3");
  caption.textContent = "Similar confirmed cases";
  similars.appendChild(caption);
  const list = document.createElement("ul");
  for (const ex of detail.similar_exemplars) {
    const li = document.createElement("li");
    li.textContent = `${ex.exemplar_id} · ${LABEL_NAMES[ex.label]} · `
      + `cos ${ex.similarity.toFixed(4)} · ${ex.source}`;
    list.appendChild(li);
  }
  similars.appendChild(list);
  container.appendChild(similars);

  const buttons = document.createElement("div");
  buttons.className = "label-buttons";
  for (const label of [1, 2, 0]) {
    const button = document.createElement("button");
    button.dataset.label = String(label);
    button.textContent = `${LABEL_NAMES[label]} [${label}]`;
    button.disabled = detail.status === "Dismissed";
    button.addEventListener("click", () => callbacks.onLabel(detail.alert_id, label));
    buttons.appendChild(button);
  }
  const close = document.createElement("button");
  close.textContent = "Back";
  close.addEventListener("click", callbacks.onClose);
  buttons.appendChild(close);
  container.appendChild(buttons);

  if (detail.annotations.length > 0) {
    const log = document.createElement("ul");
    log.className = "annotation-log";
    for (const ann of detail.annotations) {
      const li = document.createElement("li");
      li.textContent = `${ann.created_at} ${ann.source}: ${LABEL_NAMES[ann.label]}`
        + (ann.notes ? ` — ${ann.notes}` : "");
      log.appendChild(li);
    }
    container.appendChild(log);
  }
}
