/**
 * Detection overlays: boxes and mask polygons rendered as an SVG layer
 * sized to the image's pixel grid. Pure markup generation from the bbox
 * and segmentation data in the detail response; no pixel processing.
 */

import type { Detection } from "./types.js";
import { escapeHtml, shortCategory } from "./format.js";
import { CATEGORY_NAMES } from "./types.js";

export const CATEGORY_COLORS: Record<number, string> = {
  1: "#22c55e", // healthy
  2: "#f97316", // split
  3: "#ef4444", // break
  4: "#a855f7", // decay
};

export function categoryColor(categoryId: number): string {
  return CATEGORY_COLORS[categoryId] ?? "#64748b";
}

export function categoryName(categoryId: number): string {
  return CATEGORY_NAMES[categoryId - 1] ?? `category ${categoryId}`;
}

/** "x1,y1 x2,y2 ..." from a flat [x1, y1, x2, y2, ...] ring. */
export function polygonPoints(ring: number[]): string {
  const pairs: string[] = [];
  for (let i = 0; i + 1 < ring.length; i += 2) {
    pairs.push(`${ring[i]},${ring[i + 1]}`);
  }
  return pairs.join(" ");
}

/**
 * SVG layer with one group per detection: mask polygons (even-odd fill,
 * so hole rings subtract), the bounding box, and a label with the short
 * category name and confidence.
 */
export function detectionOverlay(
  detections: Detection[],
  width: number,
  height: number,
): string {
  const groups = detections.map((det, index) => {
    const color = categoryColor(det.category_id);
    const [x, y, w, h] = det.bbox;
    const polys = det.segmentation
      .map((ring) => `<polygon points="${polygonPoints(ring)}"/>`)
      .join("");
    const label = `${shortCategory(categoryName(det.category_id))} ${det.score.toFixed(2)}`;
    const labelY = y > 12 ? y - 4 : y + h + 12;
    return `<g class="det" data-det-index="${index}" style="color:${color}">
      <g fill="currentColor" fill-opacity="0.25" fill-rule="evenodd" stroke="none">${polys}</g>
      <rect x="${x}" y="${y}" width="${w}" height="${h}" fill="none" stroke="currentColor" stroke-width="1.5"/>
      <text x="${x}" y="${labelY}" fill="currentColor" font-size="11">${escapeHtml(label)}</text>
    </g>`;
  });
  return `<svg class="overlay" viewBox="0 0 ${width} ${height}" preserveAspectRatio="none">${groups.join("")}</svg>`;
}
