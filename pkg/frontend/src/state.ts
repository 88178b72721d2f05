/**
 * Session state machine for the interaction loop:
 * idle -> annotating (annotation timer starts at the first point)
 *      -> submitted  (exactly 6 points; annotation seconds reported)
 *      -> reviewing  (job done, overlay shown, evaluation timer starts)
 *      -> scored     (score + evaluation seconds posted).
 * Clearing the points before submission returns to idle and resets timers.
 *
 * Each plane view contributes the two extreme interior margin points of its
 * fixed axis (axial -> z, coronal -> y, sagittal -> x); within a plane the
 * point on the lower slice is the "min" click.
 */

import { planeAxis } from "./coords.js";
import { worldFromVoxel } from "./geometry.js";
import type { ClickOut, Plane, Voxel, VolumeMeta } from "./types.js";

export type SessionPhase =
  | "idle"
  | "annotating"
  | "submitted"
  | "reviewing"
  | "scored";

export interface PlacedPoint {
  plane: Plane;
  voxel: Voxel;
}

export type Clock = () => number; // milliseconds

export class SessionError extends Error {}

export class ViewerSession {
  phase: SessionPhase = "idle";
  meta: VolumeMeta | null = null;
  points: PlacedPoint[] = [];
  jobId: string | null = null;
  overlayVisible = true;
  annotationStart: number | null = null;
  annotationSeconds: number | null = null;
  evaluationStart: number | null = null;
  evaluationSeconds: number | null = null;
  private readonly clock: Clock;

  constructor(clock: Clock = () => Date.now()) {
    this.clock = clock;
  }

  loadVolume(meta: VolumeMeta): void {
    this.meta = meta;
    this.reset();
  }

  reset(): void {
    this.phase = "idle";
    this.points = [];
    this.jobId = null;
    this.annotationStart = null;
    this.annotationSeconds = null;
    this.evaluationStart = null;
    this.evaluationSeconds = null;
  }

  pointsInPlane(plane: Plane): PlacedPoint[] {
    return this.points.filter((p) => p.plane === plane);
  }

  placePoint(plane: Plane, voxel: Voxel): boolean {
    if (this.phase !== "idle" && this.phase !== "annotating") {
      return false; // no edits after submission
    }
    if (this.pointsInPlane(plane).length >= 2) return false;
    if (this.points.length === 0) {
      this.annotationStart = this.clock();
    }
    this.points.push({ plane, voxel });
    this.phase = "annotating";
    return true;
  }

  clearPoints(): void {
    if (this.phase === "idle" || this.phase === "annotating") {
      this.reset();
    }
  }

  canSubmit(): boolean {
    if (this.phase !== "annotating" || this.points.length !== 6) return false;
    return (["axial", "coronal", "sagittal"] as Plane[]).every(
      (p) => this.pointsInPlane(p).length === 2,
    );
  }

  /** World-space click payload; the lower-slice point of a plane is "min". */
  buildClicks(): ClickOut[] {
    if (!this.meta) throw new SessionError("no volume loaded");
    if (!this.canSubmit()) {
      throw new SessionError("need exactly 6 points, two per plane");
    }
    const out: ClickOut[] = [];
    for (const plane of ["axial", "coronal", "sagittal"] as Plane[]) {
      const axis = planeAxis(plane);
      const pair = [...this.pointsInPlane(plane)];
      pair.sort((a, b) => a.voxel[axis] - b.voxel[axis]);
      out.push(
        {
          space: "world",
          coords: worldFromVoxel(this.meta, pair[0].voxel),
          axis,
          side: "min",
        },
        {
          space: "world",
          coords: worldFromVoxel(this.meta, pair[1].voxel),
          axis,
          side: "max",
        },
      );
    }
    return out;
  }

  markSubmitted(jobId: string): { annotationSeconds: number } {
    if (!this.canSubmit()) {
      throw new SessionError("cannot submit without 6 valid points");
    }
    this.annotationSeconds =
      (this.clock() - (this.annotationStart ?? this.clock())) / 1000;
    this.jobId = jobId;
    this.phase = "submitted";
    return { annotationSeconds: this.annotationSeconds };
  }

  /** Annotation seconds measured up to now (for inclusion in the job POST). */
  annotationSecondsNow(): number {
    if (this.annotationStart === null) return 0;
    return (this.clock() - this.annotationStart) / 1000;
  }

  markJobDone(): void {
    if (this.phase !== "submitted") {
      throw new SessionError(`job finished while phase=${this.phase}`);
    }
    this.phase = "reviewing";
    this.evaluationStart = this.clock();
  }

  markScored(): { evaluationSeconds: number } {
    if (this.phase !== "reviewing") {
      throw new SessionError("score is only available while reviewing");
    }
    this.evaluationSeconds =
      (this.clock() - (this.evaluationStart ?? this.clock())) / 1000;
    this.phase = "scored";
    return { evaluationSeconds: this.evaluationSeconds };
  }
}
