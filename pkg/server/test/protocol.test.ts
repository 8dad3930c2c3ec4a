/**
 * Conformance against the frozen golden protocol files shared with the
 * client package.  Non-image fields must re-encode byte-for-byte; image
 * fields must decode to the exact fixture pixels (PNG compressors differ
 * across runtimes, so image bytes themselves are not compared).
 */

import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { test } from "node:test";
import { fileURLToPath } from "node:url";

import { decodePng, RawImage } from "../src/png.js";
import {
  decodeMessage,
  detectionsResponse,
  detectRequest,
  encodeMessage,
  errorResponse,
  imageFieldBytes,
  imageResponse,
  upscaleRequest,
  WireDetection,
  WireError,
} from "../src/protocol.js";

const GOLDEN_DIR = join(
  dirname(fileURLToPath(import.meta.url)),
  "../../../tests/golden",
);

function golden(name: string): string {
  return readFileSync(join(GOLDEN_DIR, name), "utf-8");
}

/** The fixture image: 4x4 test card, pixel (x, y) = (60x, 60y, 30(x+y)). */
function testCard(): RawImage {
  const pixels = Buffer.alloc(4 * 4 * 3);
  for (let y = 0; y < 4; y++) {
    for (let x = 0; x < 4; x++) {
      const p = 3 * (y * 4 + x);
      pixels[p] = 60 * x;
      pixels[p + 1] = 60 * y;
      pixels[p + 2] = 30 * (x + y);
    }
  }
  return { width: 4, height: 4, pixels };
}

function nearestX2(img: RawImage): RawImage {
  const pixels = Buffer.alloc(img.width * 2 * img.height * 2 * 3);
  for (let y = 0; y < img.height * 2; y++) {
    for (let x = 0; x < img.width * 2; x++) {
      const src = 3 * ((y >> 1) * img.width + (x >> 1));
      const dst = 3 * (y * img.width * 2 + x);
      img.pixels.copy(pixels, dst, src, src + 3);
    }
  }
  return { width: img.width * 2, height: img.height * 2, pixels };
}

function assertImagesEqual(actual: RawImage, expected: RawImage) {
  assert.equal(actual.width, expected.width);
  assert.equal(actual.height, expected.height);
  assert.ok(actual.pixels.equals(expected.pixels), "pixel data differs");
}

test("detect_request golden decodes and re-encodes", () => {
  const line = golden("detect_request.jsonl");
  const msg = decodeMessage(line);
  assert.equal(msg.type, "detect");
  assert.equal(msg.request_id, 1);
  assert.equal(msg.max_detections, 100);
  assert.equal(msg.min_score, 0.3);
  const img = decodePng(imageFieldBytes(msg.image, "detect"));
  assertImagesEqual(img, testCard());
  // Same payload, same bytes: field order and number form are canonical.
  const rebuilt = detectRequest(msg.image as string, 100, 0.3, 1);
  assert.equal(encodeMessage(rebuilt), line);
});

test("detections_response golden is byte-exact", () => {
  const line = golden("detections_response.jsonl");
  const msg = decodeMessage(line);
  assert.equal(msg.type, "detections");
  const dets = msg.detections as WireDetection[];
  assert.equal(dets.length, 2);
  assert.deepEqual(dets[0], { box: [10, 20, 30, 40], class_id: 3, score: 0.8 });
  assert.deepEqual(dets[1], {
    box: [2.5, 3.5, 7.25, 9.75],
    class_id: 1,
    score: 0.55,
  });
  assert.equal(encodeMessage(detectionsResponse(1, dets)), line);
});

test("upscale_request golden decodes and re-encodes", () => {
  const line = golden("upscale_request.jsonl");
  const msg = decodeMessage(line);
  assert.equal(msg.type, "upscale");
  assert.equal(msg.zoom, 2);
  const img = decodePng(imageFieldBytes(msg.image, "upscale"));
  assertImagesEqual(img, testCard());
  assert.equal(encodeMessage(upscaleRequest(msg.image as string, 2, 2)), line);
});

test("image_response golden decodes and re-encodes", () => {
  const line = golden("image_response.jsonl");
  const msg = decodeMessage(line);
  assert.equal(msg.type, "image");
  const img = decodePng(imageFieldBytes(msg.image, "image"));
  assertImagesEqual(img, nearestX2(testCard()));
  assert.equal(encodeMessage(imageResponse(2, msg.image as string)), line);
});

test("error_response golden is byte-exact", () => {
  const line = golden("error_response.jsonl");
  const msg = decodeMessage(line);
  assert.equal(msg.type, "error");
  assert.equal(msg.error, "unsupported request type 'bogus'");
  assert.equal(encodeMessage(errorResponse(3, msg.error as string)), line);
});

test("decodeMessage rejects structural violations", () => {
  assert.throws(() => decodeMessage(""), WireError);
  assert.throws(() => decodeMessage("   \n"), WireError);
  assert.throws(() => decodeMessage("not json"), WireError);
  assert.throws(() => decodeMessage("[1,2]"), WireError);
  assert.throws(() => decodeMessage('"just a string"'), WireError);
  assert.throws(
    () => decodeMessage('{"v":2,"type":"detect","request_id":1}'),
    WireError,
  );
  assert.throws(() => decodeMessage('{"type":"detect","request_id":1}'), WireError);
  assert.throws(() => decodeMessage('{"v":1,"request_id":1}'), WireError);
  assert.throws(() => decodeMessage('{"v":1,"type":"detect"}'), WireError);
  assert.throws(
    () => decodeMessage('{"v":1,"type":"detect","request_id":1.5}'),
    WireError,
  );
});

test("imageFieldBytes validates base64", () => {
  assert.throws(() => imageFieldBytes(42, "ctx"), WireError);
  assert.throws(() => imageFieldBytes("###", "ctx"), WireError);
  assert.throws(() => imageFieldBytes("abc", "ctx"), WireError); // bad length
  assert.ok(imageFieldBytes("aGVsbG8=", "ctx").equals(Buffer.from("hello")));
});
