/**
 * Newline-delimited JSON wire protocol for detector / upscaler backends.
 *
 * Every message is one UTF-8 line of compact JSON whose fields appear in
 * a fixed order (`v`, `type`, `request_id`, payload), so a given message
 * always serializes to the same bytes.  Images travel as base64-encoded
 * PNG strings.  `JSON.stringify` already writes integral numbers without
 * a fractional part, which is the protocol's canonical number form.
 */

export const PROTOCOL_VERSION = 1;

/** A message violated the protocol (bad JSON, version, or fields). */
export class WireError extends Error {}

export interface WireDetection {
  box: [number, number, number, number];
  class_id: number;
  score: number;
}

export interface Message {
  v: number;
  type: string;
  request_id: number;
  [field: string]: unknown;
}

/** Serialize a message to one compact JSON line (with newline). */
export function encodeMessage(msg: Message): string {
  return JSON.stringify(msg) + "\n";
}

/** Parse one protocol line, checking structure and version. */
export function decodeMessage(line: string): Message {
  const text = line.trim();
  if (text === "") {
    throw new WireError("empty message line");
  }
  let parsed: unknown;
  try {
    parsed = JSON.parse(text);
  } catch (exc) {
    throw new WireError(`message is not valid JSON: ${exc}`);
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    throw new WireError("message must be a JSON object");
  }
  const msg = parsed as Record<string, unknown>;
  if (msg.v !== PROTOCOL_VERSION) {
    throw new WireError(`unsupported protocol version ${JSON.stringify(msg.v)}`);
  }
  if (typeof msg.type !== "string") {
    throw new WireError("message missing string 'type' field");
  }
  if (typeof msg.request_id !== "number" || !Number.isInteger(msg.request_id)) {
    throw new WireError("message missing integer 'request_id' field");
  }
  return msg as Message;
}

export function detectRequest(
  imageB64: string,
  maxDetections: number,
  minScore: number,
  requestId: number,
): Message {
  return {
    v: PROTOCOL_VERSION,
    type: "detect",
    request_id: requestId,
    image: imageB64,
    max_detections: maxDetections,
    min_score: minScore,
  };
}

export function detectionsResponse(
  requestId: number,
  detections: WireDetection[],
): Message {
  return {
    v: PROTOCOL_VERSION,
    type: "detections",
    request_id: requestId,
    detections: detections.map((d) => ({
      box: d.box,
      class_id: d.class_id,
      score: d.score,
    })),
  };
}

export function upscaleRequest(
  imageB64: string,
  zoom: number,
  requestId: number,
): Message {
  return {
    v: PROTOCOL_VERSION,
    type: "upscale",
    request_id: requestId,
    image: imageB64,
    zoom,
  };
}

export function imageResponse(requestId: number, imageB64: string): Message {
  return {
    v: PROTOCOL_VERSION,
    type: "image",
    request_id: requestId,
    image: imageB64,
  };
}

export function errorResponse(requestId: number, message: string): Message {
  return {
    v: PROTOCOL_VERSION,
    type: "error",
    request_id: requestId,
    error: message,
  };
}

const BASE64_RE = /^[A-Za-z0-9+/]*={0,2}$/;

/** Decode a base64 image field, rejecting malformed input loudly. */
export function imageFieldBytes(field: unknown, context: string): Buffer {
  if (typeof field !== "string") {
    throw new WireError(`${context}: image field must be a base64 string`);
  }
  if (field.length % 4 !== 0 || !BASE64_RE.test(field)) {
    throw new WireError(`${context}: invalid base64`);
  }
  return Buffer.from(field, "base64");
}
