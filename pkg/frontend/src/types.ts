// Mirrors of the surveillance service's JSON shapes. Every number the UI
// shows comes straight from these payloads; nothing is recomputed locally.

export type AlertStatus = "New" | "Annotated" | "Dismissed";

export interface AlertSummary {
  alert_id: string;
  instrument_id: number;
  t_end: number;
  predicted_label: number;
  model_score: number;
  similarity_score: number | null;
  rank: number | null;
  status: AlertStatus;
}

/** One non-empty ladder slot: [level, side, price, qty]; side 0=bid 1=ask. */
export type LadderRow = [number, number, number, number];

export interface SimilarExemplar {
  exemplar_id: string;
  similarity: number;
  label: number;
  source: string;
  window_ref: Record<string, unknown>;
}

export interface AnnotationRecord {
  alert_id: string;
  label: number;
  source: string;
  notes: string;
  created_at: string;
}

export interface AlertDetail extends AlertSummary {
  frames: LadderRow[][];
  annotations: AnnotationRecord[];
  similar_exemplars: SimilarExemplar[];
  window_ref: Record<string, unknown>;
}

export const LABEL_NAMES: Record<number, string> = {
  0: "Not spoofing",
  1: "Buy-side spoof",
  2: "Sell-side spoof",
};
