import { test } from "node:test";
import assert from "node:assert/strict";

import {
  filterMarkers,
  markerColor,
  renderDetail,
  renderEmptyState,
  renderErrorBanner,
  renderMap,
  renderQueueRows,
  renderTable,
} from "../src/views.js";
import { detectionOverlay, polygonPoints } from "../src/overlay.js";
import { ApiError } from "../src/api.js";
import type { Detection, ImageDetail, MapMarker, QueueItem } from "../src/types.js";

function queueItem(over: Partial<QueueItem> = {}): QueueItem {
  return {
    image_id: "0000000001000-abcdef123456",
    thumbnail: "/api/images/0000000001000-abcdef123456/file",
    detections: {
      count: 2,
      min_confidence: 0.91,
      max_confidence: 0.97,
      categories: ["crossarm_break", "crossarm_healthy"],
    },
    entered_verification_at: 0,
    ...over,
  };
}

test("queue rows carry every required column", () => {
  const html = renderQueueRows([queueItem()], 65_000);
  assert.match(html, /data-image-id="0000000001000-abcdef123456"/);
  assert.match(html, /img class="thumb" src="\/api\/images\/.*\/file"/);
  assert.match(html, />2</); // detection count
  assert.match(html, /0\.91 – 0\.97/); // confidence range
  assert.match(html, /state-Verification/); // state badge
  assert.match(html, /1 m/); // time in queue
  assert.match(html, /break, healthy/); // category summary
});

test("empty queue renders the empty-state message", () => {
  const html = renderTable(renderQueueRows([], 0), "Verification queue is empty.");
  assert.match(html, /empty-state/);
  assert.match(html, /Verification queue is empty\./);
  assert.doesNotMatch(html, /<table/);
});

test("category filter hides rows without that category", () => {
  const items = [
    queueItem(),
    queueItem({
      image_id: "x2",
      thumbnail: "/api/images/x2/file",
      detections: {
        count: 1,
        min_confidence: 0.5,
        max_confidence: 0.5,
        categories: ["crossarm_decay"],
      },
    }),
  ];
  const html = renderQueueRows(items, 0, "crossarm_decay");
  assert.doesNotMatch(html, /abcdef123456/);
  assert.match(html, /data-image-id="x2"/);
});

test("queue item text is escaped", () => {
  const html = renderQueueRows(
    [queueItem({ image_id: `<script>alert(1)</script>` })],
    0,
  );
  assert.doesNotMatch(html, /<script>alert/);
  assert.match(html, /&lt;script&gt;/);
});

// -- overlays ---------------------------------------------------------------

const det: Detection = {
  image_id: 1,
  category_id: 3,
  bbox: [10, 20, 30, 40],
  score: 0.875,
  segmentation: [
    [10, 20, 40, 20, 40, 60, 10, 60],
    [15, 25, 20, 25, 20, 30, 15, 30],
  ],
  tags: [],
};

test("polygonPoints pairs flat coordinates", () => {
  assert.equal(polygonPoints([1, 2, 3, 4, 5, 6]), "1,2 3,4 5,6");
  assert.equal(polygonPoints([]), "");
});

test("detection overlay draws box, both rings, and a label", () => {
  const svg = detectionOverlay([det], 100, 100);
  assert.match(svg, /viewBox="0 0 100 100"/);
  assert.match(svg, /rect x="10" y="20" width="30" height="40"/);
  assert.match(svg, /polygon points="10,20 40,20 40,60 10,60"/);
  assert.match(svg, /polygon points="15,25 20,25 20,30 15,30"/);
  assert.match(svg, /fill-rule="evenodd"/);
  assert.match(svg, /break 0\.88/);
  assert.match(svg, /#ef4444/); // break renders red
});

test("detail panel shows verdict buttons only in Verification", () => {
  const detail: ImageDetail = {
    record: {
      image_id: "img-9",
      uri: "img-9.png",
      sha256: "0".repeat(64),
      width: 160,
      height: 120,
      provenance: "Real",
      resolution_tier: "r1k",
      geo: [35.1, -120.2],
      state: "Verification",
      state_version: 2,
    },
    detections: { detector: "oracle-v1", items: [det] },
    verdict: null,
  };
  const html = renderDetail(detail, "/api/images/img-9/file");
  assert.match(html, /data-action="verdict" data-verdict="correct"/);
  assert.match(html, /data-action="verdict" data-verdict="incorrect"/);
  assert.match(html, /oracle-v1/);
  assert.match(html, /35\.10000, -120\.20000/);

  const decided = {
    ...detail,
    record: { ...detail.record, state: "Verified" },
    verdict: {
      verdict: "Correct" as const,
      reviewer: "sme1",
      notes: "",
      at: 1700000000000,
    },
  };
  const html2 = renderDetail(decided, "/api/images/img-9/file");
  assert.doesNotMatch(html2, /data-action="verdict"/);
  assert.match(html2, /Correct by sme1/);
});

test("error banner exposes the machine-readable code", () => {
  const html = renderErrorBanner(
    new ApiError(409, "DUPLICATE_DECISION", "image already decided"),
  );
  assert.match(html, /data-code="DUPLICATE_DECISION"/);
  assert.match(html, /409 DUPLICATE_DECISION/);
  assert.match(html, /image already decided/);
});

// -- map ----------------------------------------------------------------------

function marker(over: Partial<MapMarker>): MapMarker {
  return {
    image_id: "m1",
    lat: 35.0,
    lon: -120.0,
    state: "Verification",
    verdict: null,
    ...over,
  };
}

test("marker colors follow the state convention", () => {
  assert.equal(markerColor("Verification"), "#f59e0b"); // amber
  assert.equal(markerColor("Verified"), "#22c55e"); // green
  assert.equal(markerColor("Staging"), "#ef4444"); // red
  assert.equal(markerColor("Labeling"), "#94a3b8"); // anything else: gray
});

test("zero geo-tagged images renders a notice, not a map", () => {
  const html = renderMap([]);
  assert.match(html, /empty-state/);
  assert.match(html, /No geo-tagged images yet\./);
  assert.doesNotMatch(html, /<svg/);
});

test("one marker per state renders three circles with documented colors", () => {
  const html = renderMap([
    marker({ image_id: "a", state: "Verification", lat: 35.0 }),
    marker({ image_id: "b", state: "Verified", lat: 35.1 }),
    marker({ image_id: "c", state: "Staging", lat: 35.2 }),
  ]);
  const circles = html.match(/class="marker"/g) ?? [];
  assert.equal(circles.length, 3);
  assert.match(html, /data-image-id="a"[\s\S]*?fill="#f59e0b"/);
  assert.match(html, /data-image-id="b"[\s\S]*?fill="#22c55e"/);
  assert.match(html, /data-image-id="c"[\s\S]*?fill="#ef4444"/);
});

test("verdict filter narrows markers", () => {
  const markers = [
    marker({ image_id: "a", verdict: "Correct" }),
    marker({ image_id: "b", verdict: "Incorrect" }),
    marker({ image_id: "c", verdict: null }),
  ];
  assert.deepEqual(
    filterMarkers(markers, "Correct").map((m) => m.image_id),
    ["a"],
  );
  assert.deepEqual(
    filterMarkers(markers, "none").map((m) => m.image_id),
    ["c"],
  );
  assert.equal(filterMarkers(markers, "").length, 3);
});

test("empty-state helper escapes its message", () => {
  assert.match(renderEmptyState("<b>hi</b>"), /&lt;b&gt;hi&lt;\/b&gt;/);
});
