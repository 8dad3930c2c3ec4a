/**
 * Minimal PNG codec for protocol images.
 *
 * Decodes non-interlaced 8-bit grayscale, RGB, and RGBA PNGs (everything
 * a conforming client sends, plus the common variants) into packed RGB;
 * encodes packed RGB back out with filter type 0 on every scanline and a
 * fixed deflate level, mirroring the client's deterministic encoder.
 */

import * as zlib from "node:zlib";

export class PngError extends Error {}

/** Packed 8-bit RGB image, row-major, 3 bytes per pixel. */
export interface RawImage {
  width: number;
  height: number;
  pixels: Buffer;
}

const SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

interface Chunk {
  tag: string;
  data: Buffer;
}

function* chunks(data: Buffer): Generator<Chunk> {
  let pos = SIGNATURE.length;
  while (pos < data.length) {
    if (pos + 12 > data.length) {
      throw new PngError("truncated chunk header");
    }
    const length = data.readUInt32BE(pos);
    const tag = data.toString("latin1", pos + 4, pos + 8);
    if (pos + 12 + length > data.length) {
      throw new PngError(`truncated ${tag} chunk`);
    }
    const payload = data.subarray(pos + 8, pos + 8 + length);
    const crc = data.readUInt32BE(pos + 8 + length);
    if (zlib.crc32(payload, zlib.crc32(data.subarray(pos + 4, pos + 8))) !== crc) {
      throw new PngError(`bad CRC in ${tag} chunk`);
    }
    yield { tag, data: payload };
    pos += 12 + length;
  }
}

export function decodePng(data: Buffer): RawImage {
  if (data.length < SIGNATURE.length || !data.subarray(0, 8).equals(SIGNATURE)) {
    throw new PngError("not a PNG (bad signature)");
  }
  let width = 0;
  let height = 0;
  let channels = 0;
  let sawIhdr = false;
  let sawIend = false;
  const idat: Buffer[] = [];
  for (const chunk of chunks(data)) {
    if (!sawIhdr) {
      if (chunk.tag !== "IHDR" || chunk.data.length !== 13) {
        throw new PngError("first chunk must be a 13-byte IHDR");
      }
      width = chunk.data.readUInt32BE(0);
      height = chunk.data.readUInt32BE(4);
      const bitDepth = chunk.data[8];
      const colorType = chunk.data[9];
      const interlace = chunk.data[12];
      if (width === 0 || height === 0) {
        throw new PngError(`bad dimensions ${width}x${height}`);
      }
      if (bitDepth !== 8) {
        throw new PngError(`unsupported bit depth ${bitDepth} (only 8)`);
      }
      if (colorType === 0) channels = 1;
      else if (colorType === 2) channels = 3;
      else if (colorType === 6) channels = 4;
      else throw new PngError(`unsupported color type ${colorType}`);
      if (interlace !== 0) {
        throw new PngError("interlaced PNGs are not supported");
      }
      sawIhdr = true;
    } else if (chunk.tag === "IDAT") {
      idat.push(chunk.data);
    } else if (chunk.tag === "IEND") {
      sawIend = true;
      break;
    }
    // Ancillary chunks (tEXt, pHYs, ...) are skipped.
  }
  if (!sawIhdr || !sawIend || idat.length === 0) {
    throw new PngError("missing IHDR, IDAT, or IEND chunk");
  }

  let raw: Buffer;
  try {
    raw = zlib.inflateSync(Buffer.concat(idat));
  } catch (exc) {
    throw new PngError(`corrupt image data: ${exc}`);
  }
  const stride = width * channels;
  if (raw.length !== height * (stride + 1)) {
    throw new PngError(
      `image data is ${raw.length} bytes, expected ${height * (stride + 1)}`,
    );
  }

  // Undo per-scanline filtering in place, then expand to RGB.
  const lines = Buffer.alloc(height * stride);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const src = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const out = lines.subarray(y * stride, (y + 1) * stride);
    const prev = y > 0 ? lines.subarray((y - 1) * stride, y * stride) : null;
    for (let i = 0; i < stride; i++) {
      const left = i >= channels ? out[i - channels] : 0;
      const up = prev ? prev[i] : 0;
      const corner = prev && i >= channels ? prev[i - channels] : 0;
      let v = src[i];
      switch (filter) {
        case 0:
          break;
        case 1:
          v += left;
          break;
        case 2:
          v += up;
          break;
        case 3:
          v += (left + up) >> 1;
          break;
        case 4:
          v += paeth(left, up, corner);
          break;
        default:
          throw new PngError(`unknown filter type ${filter} on row ${y}`);
      }
      out[i] = v & 0xff;
    }
  }

  if (channels === 3) {
    return { width, height, pixels: lines };
  }
  const pixels = Buffer.alloc(width * height * 3);
  for (let p = 0; p < width * height; p++) {
    if (channels === 1) {
      pixels[3 * p] = pixels[3 * p + 1] = pixels[3 * p + 2] = lines[p];
    } else {
      pixels[3 * p] = lines[4 * p];
      pixels[3 * p + 1] = lines[4 * p + 1];
      pixels[3 * p + 2] = lines[4 * p + 2];
    }
  }
  return { width, height, pixels };
}

export function encodePng(img: RawImage): Buffer {
  const { width, height, pixels } = img;
  if (pixels.length !== width * height * 3) {
    throw new PngError(
      `pixel buffer is ${pixels.length} bytes, expected ${width * height * 3}`,
    );
  }
  const stride = width * 3;
  const scanlines = Buffer.alloc(height * (stride + 1));
  for (let y = 0; y < height; y++) {
    scanlines[y * (stride + 1)] = 0;
    pixels.copy(scanlines, y * (stride + 1) + 1, y * stride, (y + 1) * stride);
  }
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 2; // color type: RGB
  const idat = zlib.deflateSync(scanlines, { level: 6 });
  return Buffer.concat([
    SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}

function chunk(tag: string, payload: Buffer): Buffer {
  const head = Buffer.alloc(8);
  head.writeUInt32BE(payload.length, 0);
  head.write(tag, 4, "latin1");
  const crc = Buffer.alloc(4);
  crc.writeUInt32BE(zlib.crc32(payload, zlib.crc32(head.subarray(4))), 0);
  return Buffer.concat([head, payload, crc]);
}

/** Nearest-neighbor upscale by an integer factor. */
export function upscaleNearest(img: RawImage, zoom: number): RawImage {
  const width = img.width * zoom;
  const height = img.height * zoom;
  const pixels = Buffer.alloc(width * height * 3);
  for (let y = 0; y < height; y++) {
    const sy = Math.floor(y / zoom);
    for (let x = 0; x < width; x++) {
      const sx = Math.floor(x / zoom);
      const src = 3 * (sy * img.width + sx);
      const dst = 3 * (y * width + x);
      pixels[dst] = img.pixels[src];
      pixels[dst + 1] = img.pixels[src + 1];
      pixels[dst + 2] = img.pixels[src + 2];
    }
  }
  return { width, height, pixels };
}
