/** Contract tests: feedback payloads against the recorded wire schema. */

import { test } from "node:test";
import assert from "node:assert/strict";
import { readFileSync } from "node:fs";

import { validate, type JsonSchema } from "../src/schema.js";

const schema = JSON.parse(
  readFileSync(new URL("../../recorded/feedback.schema.json", import.meta.url), "utf-8"),
) as JsonSchema;

test("recorded schema accepts a candidate-index payload", () => {
  const payload = {
    request_id: "abc123",
    slot: 0,
    profile: "demo",
    chosen: 2,
    source: "annotation-ui",
  };
  assert.deepEqual(validate(payload, schema), []);
});

test("recorded schema accepts a free-text correction payload", () => {
  const payload = {
    request_id: "abc123",
    slot: 1,
    profile: "demo",
    chosen: "my own expansion",
  };
  assert.deepEqual(validate(payload, schema), []);
});

test("missing required fields are violations", () => {
  const violations = validate({ slot: 0, chosen: 1 }, schema);
  assert.ok(violations.some((v) => v.includes("request_id")));
  assert.ok(violations.some((v) => v.includes("profile")));
});

test("wrong types are violations", () => {
  const violations = validate(
    { request_id: 7, slot: "zero", profile: "demo", chosen: 1 },
    schema,
  );
  assert.ok(violations.length >= 2);
});

test("negative slot index is a violation", () => {
  const violations = validate(
    { request_id: "r", slot: -1, profile: "demo", chosen: 0 },
    schema,
  );
  assert.ok(violations.some((v) => v.includes("minimum")));
});

test("chosen accepts neither null nor objects", () => {
  for (const chosen of [null, { index: 1 }, [1]]) {
    const violations = validate(
      { request_id: "r", slot: 0, profile: "demo", chosen },
      schema,
    );
    assert.ok(violations.length > 0, `chosen=${JSON.stringify(chosen)}`);
  }
});
