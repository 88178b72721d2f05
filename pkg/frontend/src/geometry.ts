/** World <-> voxel transforms from the server's /meta geometry. */

import type { Voxel, VolumeMeta } from "./types.js";

export function worldFromVoxel(
  meta: Pick<VolumeMeta, "spacing" | "origin" | "direction">,
  v: Voxel,
): [number, number, number] {
  const s = meta.spacing;
  const d = meta.direction;
  const local = [v.x * s[0], v.y * s[1], v.z * s[2]];
  const out: [number, number, number] = [0, 0, 0];
  for (let i = 0; i < 3; i++) {
    out[i] =
      meta.origin[i] +
      d[i][0] * local[0] +
      d[i][1] * local[1] +
      d[i][2] * local[2];
  }
  return out;
}

export function voxelFromWorld(
  meta: Pick<VolumeMeta, "spacing" | "origin" | "direction">,
  p: [number, number, number],
): [number, number, number] {
  const d = meta.direction;
  const rel = [
    p[0] - meta.origin[0],
    p[1] - meta.origin[1],
    p[2] - meta.origin[2],
  ];
  const out: [number, number, number] = [0, 0, 0];
  for (let i = 0; i < 3; i++) {
    // orthonormal direction: inverse is the transpose
    out[i] =
      (d[0][i] * rel[0] + d[1][i] * rel[1] + d[2][i] * rel[2]) /
      meta.spacing[i];
  }
  return out;
}
