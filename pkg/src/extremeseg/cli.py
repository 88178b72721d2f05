"""Single executable exposing the pipeline as subcommands.

Subcommands: phantom, simulate-clicks, plan, preprocess, train, infer, eval,
serve. All outputs are written atomically (temp file + rename). Flag
precedence: command line > --config JSON > defaults. EXTREMESEG_DATA_DIR
serves as the default data root for relative manifest paths.
"""

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .evalstats import build_report, case_metrics, write_report_csv
from .inference import (predict_case, predict_roi_mask, restore_to_original,
                        select_postprocessing)
from .interactions import InteractionSet, synth_extreme_points
from .mvol import _atomic_write, read_mvol, write_mvol
from .nifti import read_nifti1
from .nn import (TrainConfig, load_ensemble, save_ensemble, train_fold,
                 training_case_from_preprocessed)
from .nn.train import fold_split
from .phantom import PhantomConfig, generate_dataset
from .planner import PipelinePlan, derive_plan, fingerprint_dataset
from .preprocess import preprocess_case


def data_root() -> str:
    return os.environ.get("EXTREMESEG_DATA_DIR", ".")


def _resolve(path: str) -> str:
    if os.path.isabs(path) or os.path.exists(path):
        return path
    rooted = os.path.join(data_root(), path)
    return rooted if os.path.exists(rooted) else path


def _write_json(path, obj) -> None:
    _atomic_write(str(path), (json.dumps(obj, indent=1, sort_keys=True)
                              + "\n").encode())


def _read_case_volume(path):
    if str(path).endswith(".nii"):
        return read_nifti1(path)
    return read_mvol(path)


def _load_manifest(path):
    with open(_resolve(path)) as f:
        manifest = json.load(f)
    if "cases" not in manifest:
        raise ValueError(f"manifest {path} has no 'cases' list")
    return manifest


def _manifest_cases(manifest, manifest_path, with_masks=True):
    base = os.path.dirname(os.path.abspath(_resolve(manifest_path)))

    def find(rel):
        return rel if os.path.isabs(rel) else os.path.join(base, rel)

    out = []
    for entry in manifest["cases"]:
        vol = read_mvol(find(entry["image"]))
        mask = read_mvol(find(entry["mask"])) if with_masks and "mask" in entry \
            else None
        out.append((entry["id"], vol, mask, entry))
    return out


def cmd_phantom(args) -> int:
    cfg = PhantomConfig(
        dims=tuple(args.dims), spacing=tuple(args.spacing),
        n_ellipsoids=args.n_ellipsoids, contrast=args.contrast,
        noise_sigma=args.noise_sigma, blur_sigma_vox=args.blur_sigma,
        distractor=args.distractor, seed=args.seed)
    cases = generate_dataset(args.n, cfg, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    entries = []
    for i, case in enumerate(cases):
        cid = f"case{i:04d}"
        write_mvol(os.path.join(args.out, f"{cid}_image.mvol"), case.image)
        write_mvol(os.path.join(args.out, f"{cid}_mask.mvol"), case.mask)
        entry = {"id": cid, "seed": case.seed,
                 "image": f"{cid}_image.mvol", "mask": f"{cid}_mask.mvol"}
        if args.distractor:
            write_mvol(os.path.join(args.out, f"{cid}_distractor.mvol"),
                       case.distractor_mask)
            entry["distractor_mask"] = f"{cid}_distractor.mvol"
        entries.append(entry)
    _write_json(os.path.join(args.out, "manifest.json"), {
        "format": "extremeseg-manifest",
        "seed": args.seed,
        "config": {"dims": list(cfg.dims), "spacing": list(cfg.spacing),
                   "n_ellipsoids": cfg.n_ellipsoids, "contrast": cfg.contrast,
                   "noise_sigma": cfg.noise_sigma,
                   "blur_sigma_vox": cfg.blur_sigma_vox,
                   "distractor": cfg.distractor},
        "cases": entries,
    })
    print(f"wrote {len(entries)} cases to {args.out}")
    return 0


def cmd_simulate_clicks(args) -> int:
    mask = read_mvol(_resolve(args.mask))
    points = synth_extreme_points(mask)
    if args.space == "world":
        from .geometry import _world_from_voxel_unchecked
        from .interactions import ClickPoint
        pts = tuple(ClickPoint(
            space="world",
            coords=tuple(_world_from_voxel_unchecked(mask.geometry, p.coords)),
            axis=p.axis, side=p.side) for p in points.points)
        points = InteractionSet(points=pts)
    _atomic_write(args.out, (points.to_json() + "\n").encode())
    print(f"wrote clicks to {args.out}")
    return 0


def cmd_plan(args) -> int:
    manifest = _load_manifest(args.data)
    cases = _manifest_cases(manifest, args.data)
    missing = [cid for cid, _, mask, _ in cases if mask is None]
    if missing:
        raise ValueError(f"plan requires masks; missing for {missing[0]}")
    fp = fingerprint_dataset([(v, m) for _, v, m, _ in cases])
    egd = {}
    if args.egd_lambda is not None:
        egd["lam"] = args.egd_lambda
    if args.egd_nu is not None:
        egd["nu"] = args.egd_nu
    plan = derive_plan(fp, egd_params=egd or None, mode=args.mode,
                       auto_budget_voxels=args.auto_budget)
    _atomic_write(args.out, (plan.to_json() + "\n").encode())
    print(f"wrote plan to {args.out} "
          f"(levels={plan.levels}, divisors={plan.divisors})")
    return 0


def _load_plan(path) -> PipelinePlan:
    with open(_resolve(path)) as f:
        return PipelinePlan.from_json(f.read())


def _load_clicks(path) -> InteractionSet:
    with open(_resolve(path)) as f:
        return InteractionSet.from_json(f.read())


def cmd_preprocess(args) -> int:
    plan = _load_plan(args.plan)
    volume = _read_case_volume(_resolve(args.case))
    clicks = _load_clicks(args.clicks) if args.clicks else None
    case = preprocess_case(volume, plan, clicks=clicks)
    os.makedirs(args.out, exist_ok=True)
    write_mvol(os.path.join(args.out, "image_roi.mvol"), case.image_roi,
               dtype="f32")
    if case.egd_roi is not None:
        from .volume import Volume3D
        egd_vol = Volume3D(geometry=case.image_roi.geometry,
                           values=case.egd_roi.values.astype(np.float32),
                           modality=volume.modality)
        write_mvol(os.path.join(args.out, "egd_roi.mvol"), egd_vol, dtype="f32")
    _atomic_write(os.path.join(args.out, "inverse_map.json"),
                  (case.inverse_map.to_json() + "\n").encode())
    print(f"preprocessed case into {args.out} "
          f"(roi size {case.roi.padded_size})")
    return 0


def cmd_train(args) -> int:
    plan = _load_plan(args.plan)
    manifest = _load_manifest(args.data)
    raw_cases = _manifest_cases(manifest, args.data)
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed, folds=args.folds,
                      lr0=args.lr0)
    if args.no_jitter:
        cfg = replace(cfg, jitter=False)
    pres = []
    refs = []
    for cid, vol, mask, _ in raw_cases:
        if mask is None:
            raise ValueError(f"training case {cid} lacks a mask")
        clicks = synth_extreme_points(mask) if plan.mode == "interactive" \
            else None
        pres.append(preprocess_case(vol, plan, clicks=clicks, mask=mask))
        refs.append(mask)
    tcases = [training_case_from_preprocessed(p, case_id=raw_cases[i][0])
              for i, p in enumerate(pres)]
    models = []
    for fold in range(cfg.folds):
        model = train_fold(tcases, fold, plan, cfg)
        models.append(model)
        print(f"fold {fold}: final loss "
              f"{model.trace[-1]['loss']:.4f}")
    pairs = []
    for fold, model in enumerate(models):
        _, val = fold_split(len(tcases), fold, cfg)
        for i in val:
            roi_mask = predict_roi_mask(pres[i], [model])
            pairs.append((restore_to_original(roi_mask, pres[i].inverse_map),
                          refs[i]))
    choice = select_postprocessing(pairs)
    plan = plan.with_postproc(choice)
    save_ensemble(args.out, models, plan)
    print(f"saved {len(models)} folds to {args.out} (postproc={choice})")
    return 0


def cmd_infer(args) -> int:
    models, plan = load_ensemble(args.models)
    if args.plan:
        plan = _load_plan(args.plan).with_postproc(plan.postproc)
    if args.automatic and plan.mode != "automatic":
        raise ValueError("--automatic requires models trained with an "
                         "automatic-mode plan")
    volume = _read_case_volume(_resolve(args.case))
    clicks = None
    if plan.mode == "interactive":
        if not args.clicks:
            raise ValueError("interactive inference requires --clicks")
        clicks = _load_clicks(args.clicks)
    case = preprocess_case(volume, plan, clicks=clicks)
    mask = predict_case(case, models, plan)
    write_mvol(args.out, mask)
    print(f"wrote mask to {args.out} ({int(mask.labels.sum())} voxels)")
    return 0


def cmd_eval(args) -> int:
    pred_dir, ref_dir = args.pred, args.ref
    preds = sorted(f for f in os.listdir(pred_dir) if f.endswith(".mvol"))
    refs = sorted(f for f in os.listdir(ref_dir) if f.endswith(".mvol"))
    if set(preds) != set(refs):
        missing = sorted(set(preds) ^ set(refs))
        raise ValueError(f"case lists differ between pred and ref: "
                         f"{missing[0]} (and "
                         f"{max(len(missing) - 1, 0)} more)")
    if not preds:
        raise ValueError("no .mvol cases found to evaluate")
    rows = []
    for name in preds:
        pred = read_mvol(os.path.join(pred_dir, name))
        ref = read_mvol(os.path.join(ref_dir, name))
        rows.append(case_metrics(name, pred, ref))
    report = build_report(rows)
    _write_json(args.out, report)
    if args.csv:
        write_report_csv(args.csv, rows)
    agg = report["aggregates"]
    print(f"evaluated {agg['n']} cases: mean DSC {agg['dsc_mean']:.4f} "
          f"sd {agg['dsc_sd']:.4f}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    models, plan = load_ensemble(args.models)
    if args.plan:
        plan = _load_plan(args.plan).with_postproc(plan.postproc)
    app = create_app(plan, models, max_upload_bytes=args.max_upload)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _add_common(p):
    p.add_argument("--config", help="JSON file with default flag values")
    p.add_argument("--threads", type=int, default=0,
                   help="numba thread cap (0 = library default)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extremeseg",
        description="Minimally interactive 3D tumor segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate synthetic cases + manifest")
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--out", required=True)
    p.add_argument("--dims", type=int, nargs=3, default=[48, 48, 24])
    p.add_argument("--spacing", type=float, nargs=3, default=[1.0, 1.0, 4.0])
    p.add_argument("--n-ellipsoids", type=int, default=2)
    p.add_argument("--contrast", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--blur-sigma", type=float, default=1.0)
    p.add_argument("--distractor", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("simulate-clicks",
                       help="emit the six synthetic extreme clicks for a mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--space", choices=["voxel", "world"], default="voxel")
    _add_common(p)
    p.set_defaults(func=cmd_simulate_clicks)

    p = sub.add_parser("plan", help="derive the rule-based pipeline plan")
    p.add_argument("--data", required=True, help="manifest JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["interactive", "automatic"],
                   default="interactive")
    p.add_argument("--auto-budget", type=int, default=64 ** 3,
                   help="max voxels for automatic whole-volume input")
    p.add_argument("--egd-lambda", type=float, default=None)
    p.add_argument("--egd-nu", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("preprocess", help="run the preprocessing chain once")
    p.add_argument("--plan", required=True)
    p.add_argument("--case", required=True, help="image MVOL (or .nii)")
    p.add_argument("--clicks", help="clicks JSON (interactive mode)")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the k-fold ensemble")
    p.add_argument("--plan", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr0", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-jitter", action="store_true",
                   help="disable training-time click jitter")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="segment one case with the ensemble")
    p.add_argument("--plan", help="override plan (postproc kept from models)")
    p.add_argument("--models", required=True)
    p.add_argument("--case", required=True)
    p.add_argument("--clicks")
    p.add_argument("--out", required=True)
    p.add_argument("--automatic", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="compare predictions against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--plan")
    p.add_argument("--models", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-upload", type=int, default=256 * 1024 * 1024)
    _add_common(p)
    p.set_defaults(func=cmd_serve)
    return parser


def _apply_config_defaults(parser, argv):
    """--config JSON supplies defaults; explicit flags still win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    try:
        path = argv[idx + 1]
    except IndexError:
        return argv
    with open(path) as f:
        cfg = json.load(f)
    extra = []
    for key, value in cfg.items():
        flag = "--" + key.replace("_", "-")
        if flag in argv:
            continue
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        elif isinstance(value, list):
            extra.append(flag)
            extra.extend(str(v) for v in value)
        else:
            extra.extend([flag, str(value)])
    # insert after the subcommand so argparse scopes them correctly
    return argv[:1] + extra + argv[1:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if argv and not argv[0].startswith("-"):
        argv = _apply_config_defaults(parser, argv)
    args = parser.parse_args(argv)
    if args.threads:
        try:
            import numba
            numba.set_num_threads(args.threads)
        except (ImportError, ValueError):
            pass
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as e:  # runtime failure -> exit 1 with a clear message
        if getattr(args, "verbose", False):
            raise
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
