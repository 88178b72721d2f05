/**
 * Screen <-> voxel mapping. Must mirror the server's slice layout exactly:
 * pixel (row, col) of a rendered slice maps to
 *   axial    (fixed z=k): voxel (x=col, y=row, z=k)
 *   coronal  (fixed y=k): voxel (x=col, y=k,   z=row)
 *   sagittal (fixed x=k): voxel (x=k,   y=col, z=row)
 */

import type { Plane, Voxel } from "./types.js";

export interface ViewTransform {
  zoom: number;
  panX: number;
  panY: number;
}

export function planeShape(
  plane: Plane,
  dims: [number, number, number],
): { rows: number; cols: number; slices: number } {
  const [nx, ny, nz] = dims;
  switch (plane) {
    case "axial":
      return { rows: ny, cols: nx, slices: nz };
    case "coronal":
      return { rows: nz, cols: nx, slices: ny };
    case "sagittal":
      return { rows: nz, cols: ny, slices: nx };
  }
}

export function voxelFromPixel(
  plane: Plane,
  row: number,
  col: number,
  slice: number,
): Voxel {
  switch (plane) {
    case "axial":
      return { x: col, y: row, z: slice };
    case "coronal":
      return { x: col, y: slice, z: row };
    case "sagittal":
      return { x: slice, y: col, z: row };
  }
}

export function pixelFromVoxel(
  plane: Plane,
  v: Voxel,
): { row: number; col: number; slice: number } {
  switch (plane) {
    case "axial":
      return { row: v.y, col: v.x, slice: v.z };
    case "coronal":
      return { row: v.z, col: v.x, slice: v.y };
    case "sagittal":
      return { row: v.z, col: v.y, slice: v.x };
  }
}

/** Canvas pixel of an image pixel's top-left corner under zoom/pan. */
export function screenFromPixel(
  view: ViewTransform,
  row: number,
  col: number,
): { sx: number; sy: number } {
  return { sx: view.panX + col * view.zoom, sy: view.panY + row * view.zoom };
}

/**
 * Inverse of the slice rendering: a canvas click lands on the image pixel
 * whose cell contains it. Returns null outside the image bounds.
 */
export function voxelFromScreen(
  plane: Plane,
  sx: number,
  sy: number,
  slice: number,
  view: ViewTransform,
  dims: [number, number, number],
): Voxel | null {
  const col = Math.floor((sx - view.panX) / view.zoom);
  const row = Math.floor((sy - view.panY) / view.zoom);
  const { rows, cols, slices } = planeShape(plane, dims);
  if (row < 0 || row >= rows || col < 0 || col >= cols) return null;
  if (slice < 0 || slice >= slices) return null;
  return voxelFromPixel(plane, row, col, slice);
}

export function screenFromVoxel(
  plane: Plane,
  v: Voxel,
  view: ViewTransform,
): { sx: number; sy: number; slice: number } {
  const { row, col, slice } = pixelFromVoxel(plane, v);
  const { sx, sy } = screenFromPixel(view, row, col);
  // report the cell center so markers sit on the clicked pixel at any zoom
  return { sx: sx + view.zoom / 2, sy: sy + view.zoom / 2, slice };
}

/** Fixed axis of each plane: the two clicks of a plane mark that axis's
 * extreme interior margin points. */
export function planeAxis(plane: Plane): "x" | "y" | "z" {
  switch (plane) {
    case "axial":
      return "z";
    case "coronal":
      return "y";
    case "sagittal":
      return "x";
  }
}
