/**
 * Client view state. Holds only presentation concerns (active view,
 * filters, selection, in-flight verdict draft); every lifecycle fact is
 * fetched from the API.
 */

import { newIdempotencyKey } from "./api.js";

export type ActiveView = "table" | "map";

export interface Filters {
  /** Lifecycle state shown in the table; "Verification" uses the queue endpoint. */
  state: string;
  /** Category name filter over queue rows, "" for all. */
  category: string;
  /** Verdict filter over map markers: "" | "Correct" | "Incorrect" | "none". */
  verdict: string;
}

export interface VerdictDraft {
  imageId: string;
  verdict: "correct" | "incorrect";
  /** One key per submission; a retry of this submission reuses it. */
  key: string;
}

export interface ViewState {
  view: ActiveView;
  filters: Filters;
  selection: string | null;
  draft: VerdictDraft | null;
}

export function initialState(): ViewState {
  return {
    view: "table",
    filters: { state: "Verification", category: "", verdict: "" },
    selection: null,
    draft: null,
  };
}

export function setView(state: ViewState, view: ActiveView): ViewState {
  return { ...state, view };
}

export function setFilter(state: ViewState, patch: Partial<Filters>): ViewState {
  return { ...state, filters: { ...state.filters, ...patch } };
}

export function select(state: ViewState, imageId: string | null): ViewState {
  return { ...state, selection: imageId };
}

/**
 * Selection must always refer to a fetched item; drop it when the item
 * disappeared from the current listing (decided elsewhere, filtered out).
 * The detail panel keeps its own fetched copy, so a selection that is
 * merely off-page survives via `stillValid`.
 */
export function reconcileSelection(
  state: ViewState,
  fetchedIds: ReadonlySet<string>,
  stillValid = false,
): ViewState {
  if (state.selection === null) return state;
  if (fetchedIds.has(state.selection) || stillValid) return state;
  return { ...state, selection: null, draft: null };
}

/** Begin one verdict submission: fresh idempotency key every time. */
export function beginDraft(
  state: ViewState,
  imageId: string,
  verdict: "correct" | "incorrect",
): ViewState {
  return { ...state, draft: { imageId, verdict, key: newIdempotencyKey() } };
}

/** Cleared after a successful submission (and after a 409: server decided). */
export function clearDraft(state: ViewState): ViewState {
  return { ...state, draft: null };
}
