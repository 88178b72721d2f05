"""Build the end-to-end test workspace: a tiny trained ensemble the service
can serve, one upload-ready volume blob, and the intended click voxels.

Idempotent: skips work if frontend/.e2e/ is already populated.
"""

import json
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(os.path.dirname(HERE))
OUT = os.path.join(HERE, "..", ".e2e")

sys.path.insert(0, os.path.join(ROOT, "src"))

from extremeseg.interactions import synth_extreme_points  # noqa: E402
from extremeseg.nn import TrainConfig, save_ensemble, train_fold  # noqa: E402
from extremeseg.nn import training_case_from_preprocessed  # noqa: E402
from extremeseg.phantom import PhantomConfig, generate_dataset  # noqa: E402
from extremeseg.planner import derive_plan, fingerprint_dataset  # noqa: E402
from extremeseg.preprocess import preprocess_case  # noqa: E402
from extremeseg.service import mvol_wire_frame  # noqa: E402


def main():
    out = os.path.abspath(OUT)
    marker = os.path.join(out, "ready.json")
    if os.path.exists(marker):
        print(f"e2e workspace already prepared at {out}")
        return
    os.makedirs(out, exist_ok=True)
    cfg = PhantomConfig(dims=(32, 32, 16), spacing=(1.0, 1.0, 4.0),
                        n_ellipsoids=1, noise_sigma=0.05, blur_sigma_vox=0.5,
                        seed=0)
    cases = generate_dataset(4, cfg, seed=700)
    plan = derive_plan(fingerprint_dataset([(c.image, c.mask) for c in cases]))
    pres = []
    for c in cases:
        clicks = synth_extreme_points(c.mask)
        pres.append(preprocess_case(c.image, plan, clicks=clicks, mask=c.mask))
    tcases = [training_case_from_preprocessed(p, case_id=str(i))
              for i, p in enumerate(pres)]
    model = train_fold(tcases, 0, plan, TrainConfig(epochs=3, folds=2, seed=2))
    save_ensemble(os.path.join(out, "models"), [model], plan)

    target = cases[0]
    with open(os.path.join(out, "upload.bin"), "wb") as f:
        f.write(mvol_wire_frame(target.image))
    points = synth_extreme_points(target.mask)
    with open(os.path.join(out, "points.json"), "w") as f:
        json.dump([{"voxel": [int(v) for v in p.coords],
                    "axis": p.axis, "side": p.side}
                   for p in points.points], f, indent=1)
    with open(marker, "w") as f:
        json.dump({"dims": list(target.image.geometry.dims)}, f)
    print(f"e2e workspace prepared at {out}")


if __name__ == "__main__":
    main()
