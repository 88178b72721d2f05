/** Extract a plane slice of the decoded mask in slice-image orientation
 * (pixel (row, col) matches coords.voxelFromPixel). */

import { planeShape, voxelFromPixel } from "./coords.js";
import { maskAt } from "./rle.js";
import type { Plane } from "./types.js";

export interface OverlaySlice {
  rows: number;
  cols: number;
  data: Uint8Array; // row-major rows x cols, 0/1
}

export function overlaySlice(
  flat: Uint8Array,
  dims: [number, number, number],
  plane: Plane,
  slice: number,
): OverlaySlice {
  const { rows, cols } = planeShape(plane, dims);
  const data = new Uint8Array(rows * cols);
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const v = voxelFromPixel(plane, r, c, slice);
      data[r * cols + c] = maskAt(flat, dims, v.x, v.y, v.z);
    }
  }
  return { rows, cols, data };
}

/** RGBA buffer for a canvas ImageData: fixed color at 50% opacity. */
export function overlayToRgba(
  slice: OverlaySlice,
  rgb: [number, number, number] = [255, 80, 40],
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(slice.rows * slice.cols * 4);
  for (let i = 0; i < slice.data.length; i++) {
    if (slice.data[i]) {
      out[4 * i] = rgb[0];
      out[4 * i + 1] = rgb[1];
      out[4 * i + 2] = rgb[2];
      out[4 * i + 3] = 128;
    }
  }
  return out;
}
