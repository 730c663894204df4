/** Wire types for the inspection service API. */

export interface ImageRecord {
  image_id: string;
  uri: string;
  sha256: string;
  width: number;
  height: number;
  provenance: string;
  resolution_tier: string;
  geo: [number, number] | null;
  state: string;
  state_version: number;
}

export interface ImagePage {
  items: ImageRecord[];
  page: number;
  page_size: number;
  total: number;
}

export interface Detection {
  image_id: number;
  category_id: number;
  bbox: [number, number, number, number];
  score: number;
  segmentation: number[][];
  tags: string[];
}

export interface VerdictInfo {
  verdict: "Correct" | "Incorrect";
  reviewer: string;
  notes: string;
  at: number;
}

export interface ImageDetail {
  record: ImageRecord;
  detections: { detector: string | null; items: Detection[] };
  verdict: VerdictInfo | null;
}

export interface TransitionEvent {
  image_id: string;
  from: string;
  to: string;
  at: number;
  actor: string;
  reason: string;
  version_after: number;
}

export interface DetectionSummary {
  count: number;
  min_confidence: number | null;
  max_confidence: number | null;
  categories: string[];
}

export interface QueueItem {
  image_id: string;
  thumbnail: string;
  detections: DetectionSummary;
  entered_verification_at: number | null;
}

export interface MapMarker {
  image_id: string;
  lat: number;
  lon: number;
  state: string;
  verdict: "Correct" | "Incorrect" | null;
}

export interface MetricsSummary {
  census: Record<string, number>;
  verification_accuracy: {
    correct: number;
    total: number;
    accuracy: number | null;
  };
}

export const LIFECYCLE_STATES = [
  "Incoming",
  "BatchPrediction",
  "Verification",
  "Verified",
  "Staging",
  "Labeling",
  "TrainingPool",
  "Archived",
] as const;

export const CATEGORY_NAMES = [
  "crossarm_healthy",
  "crossarm_split",
  "crossarm_break",
  "crossarm_decay",
] as const;
