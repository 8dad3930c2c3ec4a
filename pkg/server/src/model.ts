/**
 * Built-in detection models.
 *
 * The default `blob-v1` model finds connected regions that differ from
 * the dominant background color and reports their bounding boxes as
 * category 3 ("car" in COCO numbering) with a confidence that grows with
 * area.  It is deliberately simple — the point of this server is to
 * exercise the wire protocol end to end; swapping in a real network only
 * means implementing `DetectorModel` differently.
 */

import { RawImage } from "./png.js";
import { WireDetection } from "./protocol.js";

export interface DetectorModel {
  readonly id: string;
  detect(img: RawImage, maxDetections: number, minScore: number): WireDetection[];
}

export interface BlobModelOptions {
  /** Per-channel deviation from the background that marks foreground. */
  colorTolerance?: number;
  /** Components smaller than this many pixels are treated as noise. */
  minPixels?: number;
  /** Area at which the confidence ramp starts (score 0.3). */
  minArea?: number;
}

export class BlobDetector implements DetectorModel {
  readonly id = "blob-v1";
  private readonly tolerance: number;
  private readonly minPixels: number;
  private readonly minArea: number;

  constructor(options: BlobModelOptions = {}) {
    this.tolerance = options.colorTolerance ?? 16;
    this.minPixels = options.minPixels ?? 4;
    this.minArea = options.minArea ?? 100;
  }

  detect(img: RawImage, maxDetections: number, minScore: number): WireDetection[] {
    const { width, height, pixels } = img;
    const bg = dominantColor(img);
    const tol = this.tolerance;

    const foreground = new Uint8Array(width * height);
    for (let p = 0; p < width * height; p++) {
      if (
        Math.abs(pixels[3 * p] - bg[0]) > tol ||
        Math.abs(pixels[3 * p + 1] - bg[1]) > tol ||
        Math.abs(pixels[3 * p + 2] - bg[2]) > tol
      ) {
        foreground[p] = 1;
      }
    }

    const detections: WireDetection[] = [];
    const stack: number[] = [];
    for (let start = 0; start < width * height; start++) {
      if (foreground[start] !== 1) continue;
      // Flood-fill one 4-connected component, tracking its extent.
      let minX = width;
      let minY = height;
      let maxX = 0;
      let maxY = 0;
      let count = 0;
      foreground[start] = 2;
      stack.push(start);
      while (stack.length > 0) {
        const p = stack.pop() as number;
        const x = p % width;
        const y = (p - x) / width;
        count++;
        if (x < minX) minX = x;
        if (y < minY) minY = y;
        if (x > maxX) maxX = x;
        if (y > maxY) maxY = y;
        if (x > 0 && foreground[p - 1] === 1) {
          foreground[p - 1] = 2;
          stack.push(p - 1);
        }
        if (x + 1 < width && foreground[p + 1] === 1) {
          foreground[p + 1] = 2;
          stack.push(p + 1);
        }
        if (y > 0 && foreground[p - width] === 1) {
          foreground[p - width] = 2;
          stack.push(p - width);
        }
        if (y + 1 < height && foreground[p + width] === 1) {
          foreground[p + width] = 2;
          stack.push(p + width);
        }
      }
      if (count < this.minPixels) continue;
      const area = (maxX + 1 - minX) * (maxY + 1 - minY);
      const score = Math.min(0.99, 0.3 + (0.69 * area) / (8 * this.minArea));
      if (score < minScore) continue;
      detections.push({
        box: [minX, minY, maxX + 1, maxY + 1],
        class_id: 3,
        score,
      });
    }

    detections.sort(
      (a, b) =>
        b.score - a.score ||
        a.box[0] - b.box[0] ||
        a.box[1] - b.box[1] ||
        a.box[2] - b.box[2] ||
        a.box[3] - b.box[3],
    );
    return detections.slice(0, maxDetections);
  }
}

/** Most frequent exact color — the uniform background dominates by area. */
function dominantColor(img: RawImage): [number, number, number] {
  const counts = new Map<number, number>();
  const { pixels } = img;
  let best = 0;
  let bestCount = 0;
  for (let p = 0; p < img.width * img.height; p++) {
    const key =
      (pixels[3 * p] << 16) | (pixels[3 * p + 1] << 8) | pixels[3 * p + 2];
    const n = (counts.get(key) ?? 0) + 1;
    counts.set(key, n);
    if (n > bestCount) {
      bestCount = n;
      best = key;
    }
  }
  return [(best >> 16) & 0xff, (best >> 8) & 0xff, best & 0xff];
}

export function createModel(id: string): DetectorModel {
  if (id === "blob-v1") {
    return new BlobDetector();
  }
  throw new Error(`unknown model '${id}' (available: blob-v1)`);
}
