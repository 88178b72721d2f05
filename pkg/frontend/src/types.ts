export type Plane = "axial" | "coronal" | "sagittal";

export interface Voxel {
  x: number;
  y: number;
  z: number;
}

export interface VolumeMeta {
  volume_id: string;
  dims: [number, number, number];
  spacing: [number, number, number];
  origin: [number, number, number];
  direction: number[][]; // row-major 3x3
  modality: string;
  intensity: { min: number; max: number };
}

export interface ClickOut {
  space: "world";
  coords: [number, number, number];
  axis: "x" | "y" | "z";
  side: "min" | "max";
}

export interface JobDoc {
  id: string;
  volume_id: string;
  state: string;
  timings: Record<string, number | null>;
  quality_score: string | null;
  mask?: { dims: [number, number, number]; runs: [number, number][] };
  error?: string;
}

/** UI labels shown to the user -> wire values the service stores. */
export const SCORE_OPTIONS: ReadonlyArray<{ label: string; value: string }> = [
  { label: "Excellent", value: "Excellent" },
  { label: "Sufficient", value: "Sufficient" },
  { label: "Insufficient", value: "Insufficient" },
  { label: "Incorrect", value: "Incorrect" },
  { label: "Cannot locate tumor", value: "CannotLocate" },
];
