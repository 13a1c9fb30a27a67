import type { AlertSummary } from "./types.js";

// Queue view: renders the alert list exactly in server order (the server
// owns ranking; the UI never re-sorts).

function sideBadge(label: number): HTMLSpanElement {
  const badge = document.createElement("span");
  badge.className =
    label === 1 ? "badge badge-buy" : label === 2 ? "badge badge-sell" : "badge";
  badge.textContent = label === 1 ? "BUY SPOOF" : label === 2 ? "SELL SPOOF" : "-";
  return badge;
}

function fmt(x: number | null, digits = 3): string {
  return x === null || x === undefined ? "-" : x.toFixed(digits);
}

export function renderQueue(
  container: HTMLElement,
  alerts: AlertSummary[],
  onSelect: (alertId: string) => void,
): void {
  container.replaceChildren();
  if (alerts.length === 0) {
    const empty = document.createElement("div");
    empty.className = "empty-state";
    empty.textContent = "No alerts in the queue.";
    container.appendChild(empty);
    return;
  }
  const table = document.createElement("table");
  table.className = "queue";
  const head = document.createElement("tr");
  for (const title of ["Rank", "Alert", "Instr", "Side", "Model", "Similarity", "Status"]) {
    const th = document.createElement("th");
    th.textContent = title;
    head.appendChild(th);
  }
  table.appendChild(head);
  for (const alert of alerts) {
    const tr = document.createElement("tr");
    tr.dataset.alertId = alert.alert_id;
    tr.className = `status-${alert.status.toLowerCase()}`;
    const cells = [
      String(alert.rank ?? "-"),
      alert.alert_id,
      String(alert.instrument_id),
      "",
      fmt(alert.model_score),
      fmt(alert.similarity_score),
      alert.status,
    ];
    cells.forEach((text, i) => {
      const td = document.createElement("td");
      if (i === 3) {
        td.appendChild(sideBadge(alert.predicted_label));
      } else {
        td.textContent = text;
      }
      tr.appendChild(td);
    });
    tr.addEventListener("click", () => onSelect(alert.alert_id));
    table.appendChild(tr);
  }
  container.appendChild(table);
}
