/**
 * The serving loop: newline-framed protocol messages over stdio or TCP.
 *
 * Responses are a pure function of the request (the model holds no
 * state), one request is in flight per connection, and malformed input
 * of any kind produces an `error` response on the same connection
 * instead of dropping it.
 */

import * as net from "node:net";
import { Readable, Writable } from "node:stream";

import { DetectorModel } from "./model.js";
import { decodePng, encodePng, PngError, upscaleNearest } from "./png.js";
import {
  decodeMessage,
  detectionsResponse,
  encodeMessage,
  errorResponse,
  imageFieldBytes,
  imageResponse,
  Message,
  WireError,
} from "./protocol.js";

export interface ServerConfig {
  model: DetectorModel;
  maxImageBytes: number;
}

/** Best-effort request id for error replies to unparseable lines. */
function salvageRequestId(line: string): number {
  try {
    const parsed = JSON.parse(line);
    if (
      typeof parsed === "object" &&
      parsed !== null &&
      Number.isInteger((parsed as Record<string, unknown>).request_id)
    ) {
      return (parsed as { request_id: number }).request_id;
    }
  } catch {
    // fall through to the default id
  }
  return 0;
}

function decodeImageField(msg: Message, cfg: ServerConfig) {
  const bytes = imageFieldBytes(msg.image, msg.type);
  if (bytes.length > cfg.maxImageBytes) {
    throw new WireError(
      `image is ${bytes.length} bytes, limit is ${cfg.maxImageBytes}`,
    );
  }
  return decodePng(bytes);
}

/** Answer one request line with one response line. */
export function handleLine(line: string, cfg: ServerConfig): string {
  let msg: Message;
  try {
    msg = decodeMessage(line);
  } catch (exc) {
    const detail = exc instanceof WireError ? exc.message : String(exc);
    return encodeMessage(errorResponse(salvageRequestId(line), detail));
  }
  try {
    switch (msg.type) {
      case "detect": {
        const img = decodeImageField(msg, cfg);
        const maxDetections =
          typeof msg.max_detections === "number" && msg.max_detections >= 0
            ? Math.floor(msg.max_detections)
            : 100;
        const minScore = typeof msg.min_score === "number" ? msg.min_score : 0;
        const detections = cfg.model.detect(img, maxDetections, minScore);
        return encodeMessage(detectionsResponse(msg.request_id, detections));
      }
      case "upscale": {
        const img = decodeImageField(msg, cfg);
        if (
          typeof msg.zoom !== "number" ||
          !Number.isInteger(msg.zoom) ||
          msg.zoom < 1
        ) {
          throw new WireError(`zoom must be a positive integer, got ${msg.zoom}`);
        }
        const up = upscaleNearest(img, msg.zoom);
        return encodeMessage(
          imageResponse(msg.request_id, encodePng(up).toString("base64")),
        );
      }
      default:
        throw new WireError(`unsupported request type '${msg.type}'`);
    }
  } catch (exc) {
    const detail =
      exc instanceof WireError || exc instanceof PngError
        ? exc.message
        : `internal error: ${exc}`;
    return encodeMessage(errorResponse(msg.request_id, detail));
  }
}

/**
 * Feed a byte stream through the line-framed handler.
 *
 * A line longer than the framing limit (the image budget plus base64 and
 * envelope overhead) is answered with one error response and discarded
 * without buffering it, so a runaway client cannot exhaust memory.
 */
export function attach(
  input: Readable,
  output: Writable,
  cfg: ServerConfig,
  onEnd?: () => void,
): void {
  const maxLineBytes = Math.ceil((cfg.maxImageBytes * 4) / 3) + 65536;
  let pending = Buffer.alloc(0);
  let discarding = false;

  input.on("data", (data: Buffer) => {
    let buf = Buffer.concat([pending, data]);
    for (;;) {
      const nl = buf.indexOf(0x0a);
      if (nl === -1) {
        if (buf.length > maxLineBytes) {
          if (!discarding) {
            discarding = true;
            output.write(
              encodeMessage(errorResponse(0, "request line exceeds size limit")),
            );
          }
          buf = Buffer.alloc(0);
        }
        break;
      }
      const line = buf.subarray(0, nl).toString("utf-8");
      buf = buf.subarray(nl + 1);
      if (discarding) {
        discarding = false; // tail of the oversized line; already answered
        continue;
      }
      output.write(handleLine(line, cfg));
    }
    pending = buf;
  });
  input.on("end", () => {
    if (onEnd) onEnd();
  });
  input.on("error", () => {
    if (onEnd) onEnd();
  });
}

/** Serve one client on stdin/stdout (the `exec:` transport). */
export function serveStdio(cfg: ServerConfig): Promise<void> {
  return new Promise((resolve) => {
    attach(process.stdin, process.stdout, cfg, resolve);
  });
}

/** Serve any number of concurrent TCP connections (the `tcp:` transport). */
export function serveTcp(cfg: ServerConfig, port: number, host: string): net.Server {
  const server = net.createServer((socket) => {
    socket.on("error", () => socket.destroy());
    attach(socket, socket, cfg, () => socket.end());
  });
  server.listen(port, host);
  return server;
}
