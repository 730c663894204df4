import { test } from "node:test";
import assert from "node:assert/strict";

import {
  confidenceRange,
  escapeHtml,
  shortCategory,
  timeInQueue,
} from "../src/format.js";

test("escapeHtml neutralizes markup", () => {
  assert.equal(
    escapeHtml(`<img src="x" onerror='alert(1)'>&`),
    "&lt;img src=&quot;x&quot; onerror=&#039;alert(1)&#039;&gt;&amp;",
  );
  assert.equal(escapeHtml("plain"), "plain");
});

test("confidenceRange formats two decimals and collapses equal ends", () => {
  assert.equal(confidenceRange(0.914, 0.972), "0.91 – 0.97");
  assert.equal(confidenceRange(0.5, 0.5), "0.50");
  assert.equal(confidenceRange(0.501, 0.504), "0.50");
  assert.equal(confidenceRange(null, null), "–");
  assert.equal(confidenceRange(null, 0.9), "–");
});

test("timeInQueue buckets seconds, minutes, hours", () => {
  const now = 10_000_000;
  assert.equal(timeInQueue(now - 5_000, now), "5 s");
  assert.equal(timeInQueue(now - 59_000, now), "59 s");
  assert.equal(timeInQueue(now - 60_000, now), "1 m");
  assert.equal(timeInQueue(now - 59 * 60_000, now), "59 m");
  assert.equal(timeInQueue(now - 60 * 60_000, now), "1 h");
  assert.equal(timeInQueue(now - (2 * 60 + 5) * 60_000, now), "2 h 5 m");
  assert.equal(timeInQueue(null, now), "–");
});

test("timeInQueue clamps clock skew to zero", () => {
  assert.equal(timeInQueue(2_000, 1_000), "0 s");
});

test("shortCategory strips the crossarm prefix only", () => {
  assert.equal(shortCategory("crossarm_split"), "split");
  assert.equal(shortCategory("crossarm_healthy"), "healthy");
  assert.equal(shortCategory("other_label"), "other_label");
});
