import { describe, expect, it } from "vitest";

import { voxelFromWorld, worldFromVoxel } from "../src/geometry.js";
import { SessionError, ViewerSession } from "../src/state.js";
import { SCORE_OPTIONS, type VolumeMeta } from "../src/types.js";

const META: VolumeMeta = {
  volume_id: "v1",
  dims: [32, 24, 16],
  spacing: [1, 1, 4],
  origin: [5, -3, 10],
  direction: [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
  ],
  modality: "SYNTH",
  intensity: { min: 0, max: 1 },
};

function makeClock(): { now: () => number; advance: (ms: number) => void } {
  let t = 1000;
  return {
    now: () => t,
    advance: (ms) => {
      t += ms;
    },
  };
}

function placeSix(s: ViewerSession): void {
  s.placePoint("axial", { x: 10, y: 10, z: 3 });
  s.placePoint("axial", { x: 11, y: 9, z: 12 });
  s.placePoint("coronal", { x: 10, y: 4, z: 8 });
  s.placePoint("coronal", { x: 9, y: 20, z: 8 });
  s.placePoint("sagittal", { x: 2, y: 10, z: 8 });
  s.placePoint("sagittal", { x: 29, y: 11, z: 7 });
}

describe("geometry", () => {
  it("world/voxel round trip with spacing and origin", () => {
    const w = worldFromVoxel(META, { x: 3, y: 4, z: 5 });
    expect(w).toEqual([8, 1, 30]);
    expect(voxelFromWorld(META, w)).toEqual([3, 4, 5]);
  });

  it("handles a rotated direction matrix", () => {
    const meta = {
      ...META,
      direction: [
        [0, -1, 0],
        [1, 0, 0],
        [0, 0, 1],
      ],
      origin: [0, 0, 0] as [number, number, number],
    };
    const w = worldFromVoxel(meta, { x: 1, y: 0, z: 1 });
    expect(w[0]).toBeCloseTo(0, 12);
    expect(w[1]).toBeCloseTo(1, 12);
    expect(w[2]).toBeCloseTo(4, 12);
    const back = voxelFromWorld(meta, w);
    expect(back[0]).toBeCloseTo(1, 12);
    expect(back[1]).toBeCloseTo(0, 12);
    expect(back[2]).toBeCloseTo(1, 12);
  });
});

describe("session flow", () => {
  it("runs idle -> annotating -> submitted -> reviewing -> scored", () => {
    const clock = makeClock();
    const s = new ViewerSession(clock.now);
    s.loadVolume(META);
    expect(s.phase).toBe("idle");
    expect(s.canSubmit()).toBe(false);

    s.placePoint("axial", { x: 10, y: 10, z: 3 });
    expect(s.phase).toBe("annotating");
    clock.advance(4000);
    placeSix(new ViewerSession()); // unrelated session does not interfere
    s.placePoint("axial", { x: 11, y: 9, z: 12 });
    s.placePoint("coronal", { x: 10, y: 4, z: 8 });
    s.placePoint("coronal", { x: 9, y: 20, z: 8 });
    s.placePoint("sagittal", { x: 2, y: 10, z: 8 });
    expect(s.canSubmit()).toBe(false); // five points
    s.placePoint("sagittal", { x: 29, y: 11, z: 7 });
    expect(s.canSubmit()).toBe(true);

    const clicks = s.buildClicks();
    expect(clicks).toHaveLength(6);
    const byTag = new Map(clicks.map((c) => [`${c.axis}:${c.side}`, c]));
    expect(byTag.size).toBe(6);
    // axial pair tags the z axis; lower slice index is "min"
    expect(byTag.get("z:min")!.coords).toEqual(
      worldFromVoxel(META, { x: 10, y: 10, z: 3 }),
    );
    expect(byTag.get("z:max")!.coords).toEqual(
      worldFromVoxel(META, { x: 11, y: 9, z: 12 }),
    );
    expect(byTag.get("x:min")!.coords).toEqual(
      worldFromVoxel(META, { x: 2, y: 10, z: 8 }),
    );

    expect(s.annotationSecondsNow()).toBeCloseTo(4, 9);
    const { annotationSeconds } = s.markSubmitted("job1");
    expect(annotationSeconds).toBeCloseTo(4, 9);
    expect(s.phase).toBe("submitted");

    clock.advance(2500);
    s.markJobDone();
    expect(s.phase).toBe("reviewing");
    clock.advance(7000);
    const { evaluationSeconds } = s.markScored();
    expect(evaluationSeconds).toBeCloseTo(7, 9);
    expect(s.phase).toBe("scored");
  });

  it("caps points at two per plane", () => {
    const s = new ViewerSession();
    s.loadVolume(META);
    expect(s.placePoint("axial", { x: 1, y: 1, z: 1 })).toBe(true);
    expect(s.placePoint("axial", { x: 2, y: 2, z: 2 })).toBe(true);
    expect(s.placePoint("axial", { x: 3, y: 3, z: 3 })).toBe(false);
    expect(s.points).toHaveLength(2);
  });

  it("blocks submission without one pair per plane", () => {
    const s = new ViewerSession();
    s.loadVolume(META);
    s.placePoint("axial", { x: 1, y: 1, z: 1 });
    s.placePoint("axial", { x: 2, y: 2, z: 2 });
    s.placePoint("coronal", { x: 3, y: 3, z: 3 });
    s.placePoint("coronal", { x: 4, y: 4, z: 4 });
    s.placePoint("sagittal", { x: 5, y: 5, z: 5 });
    expect(s.canSubmit()).toBe(false);
    expect(() => s.buildClicks()).toThrow(SessionError);
  });

  it("clear-points resets the timer state", () => {
    const clock = makeClock();
    const s = new ViewerSession(clock.now);
    s.loadVolume(META);
    s.placePoint("axial", { x: 1, y: 1, z: 1 });
    clock.advance(9000);
    s.clearPoints();
    expect(s.phase).toBe("idle");
    expect(s.annotationStart).toBeNull();
    s.placePoint("axial", { x: 1, y: 1, z: 1 });
    expect(s.annotationSecondsNow()).toBe(0);
  });

  it("refuses edits after submission", () => {
    const s = new ViewerSession();
    s.loadVolume(META);
    placeSix(s);
    s.markSubmitted("j");
    expect(s.placePoint("axial", { x: 9, y: 9, z: 9 })).toBe(false);
    s.clearPoints();
    expect(s.phase).toBe("submitted"); // clearing only works pre-submission
  });

  it("score options match the service vocabulary", () => {
    expect(SCORE_OPTIONS.map((o) => o.label)).toEqual([
      "Excellent",
      "Sufficient",
      "Insufficient",
      "Incorrect",
      "Cannot locate tumor",
    ]);
    expect(SCORE_OPTIONS.map((o) => o.value)).toContain("CannotLocate");
  });
});
