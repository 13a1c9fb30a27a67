import type { LadderRow } from "./types.js";

// Depth heatmap: timesteps across, price levels down, bid block above ask
// block, cell intensity = log-compressed resting qty. Spoofing reads as a
// transient bright band away from the inside that vanishes after the
// opposite-side execution.

export interface HeatmapCell {
  t: number;
  level: number;
  side: number; // 0 bid, 1 ask
  intensity: number; // 0..1
}

export function heatmapCells(frames: LadderRow[][], depth = 30): HeatmapCell[] {
  let maxLog = 0;
  for (const rows of frames) {
    for (const [, , , qty] of rows) {
      maxLog = Math.max(maxLog, Math.log1p(qty));
    }
  }
  if (maxLog === 0) return [];
  const cells: HeatmapCell[] = [];
  frames.forEach((rows, t) => {
    for (const [level, side, , qty] of rows) {
      if (level >= depth || qty <= 0) continue;
      cells.push({ t, level, side, intensity: Math.log1p(qty) / maxLog });
    }
  });
  return cells;
}

const BID_HUE = 210; // blue-ish demand block
const ASK_HUE = 10; // red-ish supply block

export function drawHeatmap(
  canvas: HTMLCanvasElement,
  frames: LadderRow[][],
  depth = 30,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const steps = frames.length || 1;
  const cellW = canvas.width / steps;
  const cellH = canvas.height / (2 * depth);
  ctx.fillStyle = "#11151c";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  for (const cell of heatmapCells(frames, depth)) {
    // bid levels mirror upward from the centre line, asks run downward
    const y =
      cell.side === 0
        ? (depth - 1 - cell.level) * cellH
        : (depth + cell.level) * cellH;
    const hue = cell.side === 0 ? BID_HUE : ASK_HUE;
    const light = 18 + 60 * cell.intensity;
    ctx.fillStyle = `hsl(${hue}, 80%, ${light}%)`;
    ctx.fillRect(cell.t * cellW, y, Math.ceil(cellW), Math.ceil(cellH));
  }
  ctx.strokeStyle = "#3a4354";
  ctx.beginPath();
  ctx.moveTo(0, depth * cellH);
  ctx.lineTo(canvas.width, depth * cellH);
  ctx.stroke();
}
