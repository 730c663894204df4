/** Display formatting helpers shared by the table and map views. */

export function escapeHtml(str: string): string {
  return str
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#039;");
}

/** "0.91 – 0.97", collapsing to one number when min equals max. */
export function confidenceRange(min: number | null, max: number | null): string {
  if (min === null || max === null) return "–";
  const lo = min.toFixed(2);
  const hi = max.toFixed(2);
  return lo === hi ? lo : `${lo} – ${hi}`;
}

/** Humanized duration since the image entered the queue. */
export function timeInQueue(enteredAtMs: number | null, nowMs: number): string {
  if (enteredAtMs === null) return "–";
  const seconds = Math.max(0, Math.floor((nowMs - enteredAtMs) / 1000));
  if (seconds < 60) return `${seconds} s`;
  const minutes = Math.floor(seconds / 60);
  if (minutes < 60) return `${minutes} m`;
  const hours = Math.floor(minutes / 60);
  const rem = minutes % 60;
  return rem ? `${hours} h ${rem} m` : `${hours} h`;
}

export function formatTimestamp(ms: number): string {
  return new Date(ms).toISOString().replace("T", " ").slice(0, 19);
}

/** Short defect label: "crossarm_split" -> "split". */
export function shortCategory(name: string): string {
  return name.startsWith("crossarm_") ? name.slice("crossarm_".length) : name;
}
