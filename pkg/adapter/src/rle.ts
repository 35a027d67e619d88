/** Mask codecs: COCO RLE decoding and toolkit RLE encoding. */

import { CocoRle, ToolkitRle } from "./types";

export type Pixel = [number, number];

/** Decode the compressed COCO counts string into run lengths. */
export function decodeCocoCountsString(s: string): number[] {
  const counts: number[] = [];
  let p = 0;
  while (p < s.length) {
    let x = 0;
    let k = 0;
    let more = true;
    while (more) {
      const c = s.charCodeAt(p) - 48;
      x |= (c & 0x1f) << (5 * k);
      more = (c & 0x20) !== 0;
      p += 1;
      k += 1;
      if (!more && (c & 0x10) !== 0) {
        x |= -1 << (5 * k);
      }
    }
    if (counts.length > 2) {
      x += counts[counts.length - 2];
    }
    counts.push(x);
  }
  return counts;
}

/**
 * Decode a COCO RLE into absolute pixel coordinates.
 *
 * COCO runs are column-major over a [height, width] grid and start with
 * an absent run.
 */
export function decodeCocoRle(rle: CocoRle): Pixel[] {
  const [height, width] = rle.size;
  if (!Number.isInteger(height) || !Number.isInteger(width) || height <= 0 || width <= 0) {
    throw new Error(`invalid RLE size [${height}, ${width}]`);
  }
  const counts =
    typeof rle.counts === "string" ? decodeCocoCountsString(rle.counts) : rle.counts;
  const total = counts.reduce((a, b) => a + b, 0);
  if (total !== height * width) {
    throw new Error(`RLE counts sum to ${total}, expected ${height * width}`);
  }
  const pixels: Pixel[] = [];
  let pos = 0;
  let present = false;
  for (const run of counts) {
    if (run < 0) {
      throw new Error("RLE counts must be non-negative");
    }
    if (present) {
      for (let p = pos; p < pos + run; p++) {
        pixels.push([Math.floor(p / height), p % height]);
      }
    }
    pos += run;
    present = !present;
  }
  return pixels;
}

/**
 * Encode pixels as the toolkit's row-major RLE over their bounding
 * rectangle; counts alternate absent/present starting with absent.
 */
export function encodeToolkitRle(pixels: Pixel[]): ToolkitRle {
  if (pixels.length === 0) {
    throw new Error("cannot encode an empty pixel set");
  }
  let x0 = Infinity;
  let y0 = Infinity;
  let x1 = -Infinity;
  let y1 = -Infinity;
  for (const [x, y] of pixels) {
    x0 = Math.min(x0, x);
    y0 = Math.min(y0, y);
    x1 = Math.max(x1, x);
    y1 = Math.max(y1, y);
  }
  const width = x1 - x0 + 1;
  const height = y1 - y0 + 1;
  const member = new Set(pixels.map(([x, y]) => (y - y0) * width + (x - x0)));

  const counts: number[] = [];
  let current = false;
  let run = 0;
  for (let p = 0; p < width * height; p++) {
    const value = member.has(p);
    if (value === current) {
      run += 1;
    } else {
      counts.push(run);
      current = value;
      run = 1;
    }
  }
  counts.push(run);
  return { x0, y0, width, height, counts };
}

/** Inclusive pixel-index span [first, last] of centers inside [lo, hi]. */
export function pixelSpan(lo: number, hi: number): [number, number] {
  let first = Math.ceil(lo - 0.5);
  if (first - 1 + 0.5 >= lo) first -= 1;
  if (first + 0.5 < lo) first += 1;
  let last = Math.floor(hi - 0.5);
  if (last + 1 + 0.5 <= hi) last += 1;
  if (last + 0.5 > hi) last -= 1;
  // + 0 folds Math.ceil's negative zero back to ordinary zero
  return [first + 0, last + 0];
}
