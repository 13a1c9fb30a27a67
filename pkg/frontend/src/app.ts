import { ApiClient } from "./api.js";
import { renderDetail } from "./detail.js";
import { renderQueue } from "./queue.js";
import type { AlertDetail, AlertSummary } from "./types.js";

// Controller: holds the current queue + open alert, talks to the service,
// and applies optimistic status updates that roll back on failure. All
// ordering and scoring comes from the server.

export interface AppElements {
  queue: HTMLElement;
  detail: HTMLElement;
  banner: HTMLElement;
  statusFilter?: HTMLSelectElement;
}

export class TriageApp {
  alerts: AlertSummary[] = [];
  current: AlertDetail | null = null;
  statusFilter = "";

  constructor(
    private els: AppElements,
    private api: ApiClient = new ApiClient(),
  ) {}

  async start(): Promise<void> {
    this.bindKeys();
    this.els.statusFilter?.addEventListener("change", () => {
      this.statusFilter = this.els.statusFilter!.value;
      void this.refreshQueue();
    });
    await this.refreshQueue();
  }

  bindKeys(): void {
    document.addEventListener("keydown", (ev) => {
      if (!this.current) return;
      if (ev.key === "1" || ev.key === "2" || ev.key === "0") {
        void this.submitLabel(this.current.alert_id, Number(ev.key));
      }
    });
  }

  setBanner(text: string): void {
    this.els.banner.textContent = text;
    this.els.banner.className = text ? "banner banner-error" : "banner";
  }

  async refreshQueue(): Promise<void> {
    try {
      this.alerts = await this.api.listAlerts(this.statusFilter || undefined);
      this.setBanner("");
    } catch {
      this.setBanner("Connection lost — showing stale data");
      return;
    }
    renderQueue(this.els.queue, this.alerts, (id) => void this.openAlert(id));
  }

  async openAlert(alertId: string): Promise<void> {
    try {
      this.current = await this.api.getAlert(alertId);
    } catch {
      this.setBanner(`Alert ${alertId} could not be loaded`);
      return;
    }
    this.renderCurrent();
  }

  renderCurrent(): void {
    if (!this.current) {
      this.els.detail.replaceChildren();
      return;
    }
    renderDetail(this.els.detail, this.current, {
      onLabel: (id, label) => void this.submitLabel(id, label),
      onClose: () => {
        this.current = null;
        this.els.detail.replaceChildren();
      },
    });
  }

  /** Optimistic label: flip status locally, roll back if the POST fails. */
  async submitLabel(alertId: string, label: number): Promise<void> {
    const row = this.alerts.find((a) => a.alert_id === alertId);
    const before = row?.status;
    if (row) {
      row.status = label === 0 ? "Dismissed" : "Annotated";
      renderQueue(this.els.queue, this.alerts, (id) => void this.openAlert(id));
    }
    try {
      await this.api.postAnnotation(alertId, label);
    } catch (err) {
      if (row && before) row.status = before;
      this.setBanner(`Annotation failed: ${String(err)}`);
      renderQueue(this.els.queue, this.alerts, (id) => void this.openAlert(id));
      return;
    }
    if (this.current?.alert_id === alertId) {
      this.current = null;
      this.els.detail.replaceChildren();
    }
    // the server re-ranked the queue; pull its new order
    await this.refreshQueue();
  }
}

export function mount(root: Document = document): TriageApp {
  const app = new TriageApp({
    queue: root.getElementById("queue")!,
    detail: root.getElementById("detail")!,
    banner: root.getElementById("banner")!,
    statusFilter: (root.getElementById("status-filter") as HTMLSelectElement) ?? undefined,
  });
  void app.start();
  return app;
}
