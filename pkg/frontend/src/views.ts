/**
 * HTML renderers for the table view, detail panel, and map view. All
 * functions are pure string builders over API payloads so they can be
 * exercised without a browser.
 */

import type {
  ImageDetail,
  ImageRecord,
  MapMarker,
  QueueItem,
  TransitionEvent,
} from "./types.js";
import {
  confidenceRange,
  escapeHtml,
  formatTimestamp,
  shortCategory,
  timeInQueue,
} from "./format.js";
import { detectionOverlay, categoryColor } from "./overlay.js";
import type { ApiError } from "./api.js";

// -- table view --------------------------------------------------------------

export const QUEUE_COLUMNS = [
  "Image",
  "Thumbnail",
  "Detections",
  "Confidence",
  "State",
  "In queue",
] as const;

export function renderEmptyState(message: string): string {
  return `<div class="empty-state">${escapeHtml(message)}</div>`;
}

export function renderQueueRows(
  items: QueueItem[],
  nowMs: number,
  categoryFilter = "",
): string {
  const visible = categoryFilter
    ? items.filter((it) => it.detections.categories.includes(categoryFilter))
    : items;
  if (visible.length === 0) {
    return "";
  }
  return visible
    .map((it) => {
      const d = it.detections;
      const cats = d.categories.map(shortCategory).join(", ");
      return `<tr data-image-id="${escapeHtml(it.image_id)}">
        <td class="mono">${escapeHtml(it.image_id)}</td>
        <td><img class="thumb" src="${escapeHtml(it.thumbnail)}" alt=""></td>
        <td>${d.count}<span class="cats">${escapeHtml(cats)}</span></td>
        <td>${confidenceRange(d.min_confidence, d.max_confidence)}</td>
        <td><span class="state state-Verification">Verification</span></td>
        <td>${timeInQueue(it.entered_verification_at, nowMs)}</td>
      </tr>`;
    })
    .join("");
}

export function renderRecordRows(records: ImageRecord[]): string {
  return records
    .map(
      (r) => `<tr data-image-id="${escapeHtml(r.image_id)}">
        <td class="mono">${escapeHtml(r.image_id)}</td>
        <td><img class="thumb" src="/api/images/${encodeURIComponent(r.image_id)}/file" alt=""></td>
        <td>–</td>
        <td>–</td>
        <td><span class="state state-${escapeHtml(r.state)}">${escapeHtml(r.state)}</span></td>
        <td>–</td>
      </tr>`,
    )
    .join("");
}

export function renderTable(bodyRows: string, emptyMessage: string): string {
  if (!bodyRows) return renderEmptyState(emptyMessage);
  const head = QUEUE_COLUMNS.map((c) => `<th>${c}</th>`).join("");
  return `<table class="queue">
    <thead><tr>${head}</tr></thead>
    <tbody>${bodyRows}</tbody>
  </table>`;
}

// -- detail panel -------------------------------------------------------------

export function renderDetail(detail: ImageDetail, imageUrl: string): string {
  const r = detail.record;
  const dets = detail.detections.items;
  const overlay = detectionOverlay(dets, r.width, r.height);
  const verdict = detail.verdict
    ? `<p class="verdict verdict-${detail.verdict.verdict}">
         ${detail.verdict.verdict} by ${escapeHtml(detail.verdict.reviewer)}
         at ${formatTimestamp(detail.verdict.at)}</p>`
    : "";
  const canJudge = r.state === "Verification";
  const buttons = canJudge
    ? `<div class="verdict-buttons">
         <button class="btn btn-correct" data-action="verdict" data-verdict="correct"
                 data-image-id="${escapeHtml(r.image_id)}">Correct</button>
         <button class="btn btn-incorrect" data-action="verdict" data-verdict="incorrect"
                 data-image-id="${escapeHtml(r.image_id)}">Incorrect</button>
       </div>`
    : "";
  const detRows = dets
    .map(
      (d, i) => `<li style="color:${categoryColor(d.category_id)}">
        det ${i + 1}: category ${d.category_id}, score ${d.score.toFixed(2)},
        box [${d.bbox.map((v) => v.toFixed(1)).join(", ")}]</li>`,
    )
    .join("");
  return `<div class="detail" data-image-id="${escapeHtml(r.image_id)}">
    <header>
      <h2 class="mono">${escapeHtml(r.image_id)}</h2>
      <button class="btn btn-close" data-action="close">×</button>
    </header>
    <div class="stage" style="aspect-ratio:${r.width}/${r.height}">
      <img src="${escapeHtml(imageUrl)}" alt="${escapeHtml(r.image_id)}">
      ${overlay}
    </div>
    <dl class="facts">
      <dt>State</dt><dd><span class="state state-${escapeHtml(r.state)}">${escapeHtml(r.state)}</span>
        <span class="mono">v${r.state_version}</span></dd>
      <dt>Detector</dt><dd>${escapeHtml(detail.detections.detector ?? "–")}</dd>
      <dt>Size</dt><dd>${r.width}×${r.height} (${escapeHtml(r.resolution_tier)})</dd>
      <dt>Geo</dt><dd>${r.geo ? `${r.geo[0].toFixed(5)}, ${r.geo[1].toFixed(5)}` : "–"}</dd>
    </dl>
    <ul class="det-list">${detRows || "<li>no detections recorded</li>"}</ul>
    ${verdict}
    ${buttons}
    <div class="error-slot"></div>
  </div>`;
}

export function renderHistory(events: TransitionEvent[]): string {
  const rows = events
    .map(
      (e) => `<li><span class="mono">v${e.version_after}</span>
        ${escapeHtml(e.from)} → ${escapeHtml(e.to)}
        <span class="reason">${escapeHtml(e.reason)}</span></li>`,
    )
    .join("");
  return `<ol class="history">${rows}</ol>`;
}

/** Inline error with the machine-readable code, per the API error contract. */
export function renderErrorBanner(err: ApiError): string {
  return `<div class="error-banner" data-code="${escapeHtml(err.code)}">
    <strong>${err.status} ${escapeHtml(err.code)}</strong>
    ${escapeHtml(err.message)}</div>`;
}

// -- map view ------------------------------------------------------------------

const MARKER_COLORS: Record<string, string> = {
  Verification: "#f59e0b",
  Verified: "#22c55e",
  Staging: "#ef4444",
};

export function markerColor(state: string): string {
  return MARKER_COLORS[state] ?? "#94a3b8";
}

export function filterMarkers(markers: MapMarker[], verdictFilter: string): MapMarker[] {
  if (!verdictFilter) return markers;
  if (verdictFilter === "none") return markers.filter((m) => m.verdict === null);
  return markers.filter((m) => m.verdict === verdictFilter);
}

/**
 * Geo scatter: lat/lon scaled into the viewport with 8% padding, latitude
 * increasing upward. Only geo-tagged images reach this renderer (the API
 * already excludes the rest).
 */
export function renderMap(
  markers: MapMarker[],
  width = 800,
  height = 520,
): string {
  if (markers.length === 0) {
    return renderEmptyState("No geo-tagged images yet.");
  }
  const lats = markers.map((m) => m.lat);
  const lons = markers.map((m) => m.lon);
  const latSpan = Math.max(Math.max(...lats) - Math.min(...lats), 1e-6);
  const lonSpan = Math.max(Math.max(...lons) - Math.min(...lons), 1e-6);
  const latMin = Math.min(...lats);
  const lonMin = Math.min(...lons);
  const pad = 0.08;
  const sx = (lon: number) =>
    (pad + ((lon - lonMin) / lonSpan) * (1 - 2 * pad)) * width;
  const sy = (lat: number) =>
    (1 - pad - ((lat - latMin) / latSpan) * (1 - 2 * pad)) * height;
  const dots = markers
    .map(
      (m) => `<circle class="marker" data-image-id="${escapeHtml(m.image_id)}"
        cx="${sx(m.lon).toFixed(1)}" cy="${sy(m.lat).toFixed(1)}" r="7"
        fill="${markerColor(m.state)}" stroke="#fff" stroke-width="1.5">
        <title>${escapeHtml(m.image_id)} (${escapeHtml(m.state)})</title>
      </circle>`,
    )
    .join("");
  const legend = Object.entries(MARKER_COLORS)
    .map(
      ([state, color], i) =>
        `<circle cx="${16}" cy="${18 + i * 18}" r="5" fill="${color}"/>
         <text x="${26}" y="${22 + i * 18}" font-size="11" fill="#475569">${state}</text>`,
    )
    .join("");
  return `<svg class="geo-map" viewBox="0 0 ${width} ${height}">
    <rect width="${width}" height="${height}" fill="#f1f5f9"/>
    ${dots}
    ${legend}
  </svg>`;
}
