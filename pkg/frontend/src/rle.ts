/**
 * Run-length mask decoding. The service encodes foreground runs as
 * [start, length] pairs over x-fastest flat scan order:
 * flat index = x + nx * (y + ny * z).
 */

export function rleDecode(
  runs: [number, number][],
  dims: [number, number, number],
): Uint8Array {
  const total = dims[0] * dims[1] * dims[2];
  const flat = new Uint8Array(total);
  for (const [start, length] of runs) {
    if (start < 0 || start + length > total) {
      throw new Error(`run [${start}, ${length}] outside volume of ${total}`);
    }
    flat.fill(1, start, start + length);
  }
  return flat;
}

export function rleVoxelCount(runs: [number, number][]): number {
  let n = 0;
  for (const [, length] of runs) n += length;
  return n;
}

export function maskAt(
  flat: Uint8Array,
  dims: [number, number, number],
  x: number,
  y: number,
  z: number,
): number {
  return flat[x + dims[0] * (y + dims[1] * z)];
}
