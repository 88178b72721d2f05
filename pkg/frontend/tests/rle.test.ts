import { describe, expect, it } from "vitest";

import { overlaySlice } from "../src/overlay.js";
import { maskAt, rleDecode, rleVoxelCount } from "../src/rle.js";

describe("rle", () => {
  it("decodes foreground runs over x-fastest order", () => {
    const dims: [number, number, number] = [3, 2, 2];
    // flat index = x + 3*(y + 2*z)
    const flat = rleDecode(
      [
        [0, 2],
        [7, 3],
      ],
      dims,
    );
    expect(Array.from(flat)).toEqual([1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 0, 0]);
    expect(maskAt(flat, dims, 0, 0, 0)).toBe(1);
    expect(maskAt(flat, dims, 1, 0, 0)).toBe(1);
    expect(maskAt(flat, dims, 2, 0, 0)).toBe(0);
    expect(maskAt(flat, dims, 1, 0, 1)).toBe(1); // flat 1 + 3*(0 + 2*1) = 7
  });

  it("counts voxels without decoding", () => {
    expect(rleVoxelCount([[0, 2], [7, 3]])).toBe(5);
    expect(rleVoxelCount([])).toBe(0);
  });

  it("rejects runs outside the volume", () => {
    expect(() => rleDecode([[10, 5]], [2, 2, 2])).toThrow();
  });

  it("overlay slice picks the right voxels per plane", () => {
    const dims: [number, number, number] = [4, 3, 2];
    const flat = new Uint8Array(4 * 3 * 2);
    // mark voxel (2, 1, 1)
    flat[2 + 4 * (1 + 3 * 1)] = 1;
    const axial = overlaySlice(flat, dims, "axial", 1);
    expect(axial.rows).toBe(3);
    expect(axial.cols).toBe(4);
    expect(axial.data[1 * 4 + 2]).toBe(1); // row y=1, col x=2
    expect(axial.data.reduce((a, b) => a + b, 0)).toBe(1);
    const coronal = overlaySlice(flat, dims, "coronal", 1);
    expect(coronal.data[1 * 4 + 2]).toBe(1); // row z=1, col x=2
    const sagittal = overlaySlice(flat, dims, "sagittal", 2);
    expect(sagittal.data[1 * 3 + 1]).toBe(1); // row z=1, col y=1
  });
});
