/**
 * Application shell: polling, event wiring, and rendering into the page.
 * The layout lives in index.html; this module owns #view, #detail and the
 * header controls.
 */

import { ApiClient, ApiError } from "./api.js";
import type { MapMarker, QueueItem } from "./types.js";
import { LIFECYCLE_STATES, CATEGORY_NAMES } from "./types.js";
import {
  beginDraft,
  clearDraft,
  initialState,
  reconcileSelection,
  select,
  setFilter,
  setView,
  type ViewState,
} from "./state.js";
import {
  filterMarkers,
  renderDetail,
  renderErrorBanner,
  renderHistory,
  renderMap,
  renderQueueRows,
  renderRecordRows,
  renderTable,
} from "./views.js";

const DEFAULT_POLL_MS = 5000;

const api = new ApiClient("");
let state: ViewState = initialState();
let queueCache: QueueItem[] = [];
let markerCache: MapMarker[] = [];

const $ = (sel: string) => document.querySelector(sel) as HTMLElement;

function pollInterval(): number {
  const raw = new URLSearchParams(window.location.search).get("poll");
  const ms = raw ? Number(raw) : NaN;
  return Number.isFinite(ms) && ms >= 250 ? ms : DEFAULT_POLL_MS;
}

// -- rendering ----------------------------------------------------------------

async function refreshTable(): Promise<void> {
  const container = $("#view");
  if (state.filters.state === "Verification") {
    const { items } = await api.verificationQueue();
    queueCache = items;
    // a selected image that left the queue stays valid while the detail
    // panel holds its fetched copy; refreshDetail drops it on 404
    state = reconcileSelection(
      state,
      new Set(items.map((it) => it.image_id)),
      $("#detail").classList.contains("open"),
    );
    const rows = renderQueueRows(items, Date.now(), state.filters.category);
    container.innerHTML = renderTable(rows, "Verification queue is empty.");
  } else {
    const page = await api.listImages(state.filters.state || undefined);
    container.innerHTML = renderTable(
      renderRecordRows(page.items),
      state.filters.state
        ? `No images in ${state.filters.state}.`
        : "No images tracked yet.",
    );
  }
}

async function refreshMap(): Promise<void> {
  markerCache = await api.mapMarkers();
  const visible = filterMarkers(markerCache, state.filters.verdict);
  $("#view").innerHTML = renderMap(visible);
}

async function refreshDetail(): Promise<void> {
  const panel = $("#detail");
  if (!state.selection) {
    panel.innerHTML = "";
    panel.classList.remove("open");
    return;
  }
  try {
    const detail = await api.getImage(state.selection);
    const history = await api.getHistory(state.selection);
    panel.innerHTML =
      renderDetail(detail, api.imageFileUrl(state.selection)) +
      renderHistory(history.events);
    panel.classList.add("open");
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      state = select(state, null);
      panel.innerHTML = "";
      panel.classList.remove("open");
    } else {
      throw err;
    }
  }
}

async function refreshAll(): Promise<void> {
  try {
    if (state.view === "table") await refreshTable();
    else await refreshMap();
    await refreshDetail();
    await refreshSummary();
    $("#conn").textContent = "";
  } catch (err) {
    $("#conn").textContent =
      err instanceof ApiError
        ? `${err.status} ${err.code}`
        : "service unreachable";
  }
}

async function refreshSummary(): Promise<void> {
  const s = await api.metricsSummary();
  const acc = s.verification_accuracy;
  const accText =
    acc.accuracy === null ? "–" : `${(acc.accuracy * 100).toFixed(0)}%`;
  $("#summary").textContent =
    `${s.census["Verification"] ?? 0} queued · ` +
    `${s.census["Staging"] ?? 0} staged · accuracy ${accText} ` +
    `(${acc.correct}/${acc.total})`;
}

// -- verdict submission ---------------------------------------------------------

async function submitVerdict(imageId: string, verdict: "correct" | "incorrect") {
  state = beginDraft(state, imageId, verdict);
  const draft = state.draft!;
  const reviewer =
    ($("#reviewer") as HTMLInputElement).value.trim() || "reviewer";
  const slot = document.querySelector("#detail .error-slot");
  try {
    await api.submitVerdict(imageId, verdict, reviewer, draft.key);
    state = clearDraft(state);
    await refreshAll();
  } catch (err) {
    if (err instanceof ApiError) {
      // 409: someone else decided first, or the row went stale; show the
      // machine-readable code inline and refetch, leaving the row as the
      // server has it
      if (slot) slot.innerHTML = renderErrorBanner(err);
      state = clearDraft(state);
      if (err.status === 409) await refreshAll();
    } else {
      // network trouble: keep the draft so a retry reuses the same key
      if (slot)
        slot.innerHTML = `<div class="error-banner">service unreachable, retry will reuse this submission</div>`;
    }
  }
}

// -- event wiring ----------------------------------------------------------------

function wireEvents(): void {
  $("#view").addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    const row = target.closest("[data-image-id]") as HTMLElement | null;
    if (row?.dataset.imageId) {
      state = select(state, row.dataset.imageId);
      void refreshDetail();
    }
  });

  $("#detail").addEventListener("click", (ev) => {
    const target = (ev.target as HTMLElement).closest(
      "[data-action]",
    ) as HTMLElement | null;
    if (!target) return;
    if (target.dataset.action === "close") {
      state = select(state, null);
      void refreshDetail();
    } else if (target.dataset.action === "verdict") {
      void submitVerdict(
        target.dataset.imageId!,
        target.dataset.verdict as "correct" | "incorrect",
      );
    }
  });

  $("#view-table").addEventListener("click", () => {
    state = setView(state, "table");
    void refreshAll();
  });
  $("#view-map").addEventListener("click", () => {
    state = setView(state, "map");
    void refreshAll();
  });

  ($("#filter-state") as HTMLSelectElement).addEventListener("change", (ev) => {
    state = setFilter(state, {
      state: (ev.target as HTMLSelectElement).value,
    });
    void refreshAll();
  });
  ($("#filter-category") as HTMLSelectElement).addEventListener(
    "change",
    (ev) => {
      state = setFilter(state, {
        category: (ev.target as HTMLSelectElement).value,
      });
      void refreshAll();
    },
  );
  ($("#filter-verdict") as HTMLSelectElement).addEventListener(
    "change",
    (ev) => {
      state = setFilter(state, {
        verdict: (ev.target as HTMLSelectElement).value,
      });
      void refreshAll();
    },
  );
}

function populateFilters(): void {
  const stateSel = $("#filter-state") as HTMLSelectElement;
  stateSel.innerHTML =
    `<option value="">All states</option>` +
    LIFECYCLE_STATES.map(
      (s) =>
        `<option value="${s}"${s === "Verification" ? " selected" : ""}>${s}</option>`,
    ).join("");
  const catSel = $("#filter-category") as HTMLSelectElement;
  catSel.innerHTML =
    `<option value="">All categories</option>` +
    CATEGORY_NAMES.map((c) => `<option value="${c}">${c}</option>`).join("");
}

function start(): void {
  populateFilters();
  wireEvents();
  void refreshAll();
  window.setInterval(() => void refreshAll(), pollInterval());
}

start();

export { queueCache, markerCache };
