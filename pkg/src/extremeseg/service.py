"""HTTP facade over the engine for the slice-viewer UI.

Endpoints: volume upload (MVOL wire frame or NIfTI), geometry/meta, windowed
PNG slices, segmentation jobs with per-stage timings (annotation and
evaluation seconds are client-reported; preprocessing, model inference, and
postprocessing are measured server-side), quality scoring, health.

Jobs on one volume run FIFO on that volume's worker thread; distinct volumes
proceed concurrently. Masks travel as run-length-encoded foreground runs
over x-fastest flat scan order.
"""

import io
import json
import os
import queue
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response

from .evalstats import QUALITY_SCORES, TIMING_STAGES
from .geometry import voxel_from_world
from .inference import apply_postproc, predict_roi_mask, restore_to_original
from .interactions import ClickPoint, InteractionError, InteractionSet
from .mvol import MvolError, read_mvol, write_mvol
from .nifti import NiftiError, read_nifti1
from .preprocess import preprocess_case
from .volume import Volume3D

MVOL_FRAME_SEPARATOR = b"\x00"

PLANES = {
    # plane -> (row axis, col axis, fixed axis); pixel (r, c) at slice k
    # maps to the voxel with col on the col axis and row on the row axis.
    "axial": (1, 0, 2),      # rows y, cols x, fixed z
    "coronal": (2, 0, 1),    # rows z, cols x, fixed y
    "sagittal": (2, 1, 0),   # rows z, cols y, fixed x
}


def rle_encode(labels) -> list:
    """Foreground runs [[start, length], ...] over F-order flat indices."""
    flat = np.asarray(labels).ravel(order="F").astype(bool)
    if not flat.any():
        return []
    edges = np.flatnonzero(np.diff(np.concatenate(([False], flat, [False]))))
    starts = edges[0::2]
    ends = edges[1::2]
    return [[int(s), int(e - s)] for s, e in zip(starts, ends)]


def rle_decode(runs, dims) -> np.ndarray:
    flat = np.zeros(int(np.prod(dims)), dtype=np.uint8)
    for start, length in runs:
        flat[start:start + length] = 1
    return flat.reshape(tuple(dims), order="F")


@dataclass
class SegJob:
    id: str
    volume_id: str
    clicks: InteractionSet
    state: str = "queued"
    timings: dict = field(default_factory=dict)
    mask: object = None
    quality_score: str | None = None
    error: str | None = None

    def to_json_dict(self):
        doc = {
            "id": self.id,
            "volume_id": self.volume_id,
            "state": self.state,
            "timings": {k: self.timings.get(k) for k in TIMING_STAGES},
            "quality_score": self.quality_score,
        }
        if self.error:
            doc["error"] = self.error
        if self.state == "done" and self.mask is not None:
            doc["mask"] = {"dims": list(self.mask.geometry.dims),
                           "runs": rle_encode(self.mask.labels)}
        return doc


class Engine:
    """Owns the plan, the built fold networks, volumes, and job queues."""

    def __init__(self, plan, models):
        self.plan = plan
        self.nets = [m.build() if hasattr(m, "build") else m for m in models]
        self.volumes = {}
        self.jobs = {}
        self.lock = threading.Lock()
        self._queues = {}

    def add_volume(self, volume: Volume3D) -> str:
        vid = uuid.uuid4().hex[:12]
        with self.lock:
            self.volumes[vid] = volume
            q = queue.Queue()
            self._queues[vid] = q
            worker = threading.Thread(target=self._worker, args=(vid, q),
                                      daemon=True)
            worker.start()
        return vid

    def submit_job(self, vid: str, clicks: InteractionSet,
                   annotation_seconds=None) -> str:
        jid = uuid.uuid4().hex[:12]
        job = SegJob(id=jid, volume_id=vid, clicks=clicks)
        if annotation_seconds is not None:
            job.timings["annotation"] = float(annotation_seconds)
        with self.lock:
            self.jobs[jid] = job
        self._queues[vid].put(jid)
        return jid

    def segment(self, volume: Volume3D, clicks: InteractionSet, timings: dict,
                on_stage=None):
        """The direct engine call; the job worker goes through this too."""
        def stage(name):
            if on_stage:
                on_stage(name)
        stage("preprocessing")
        t0 = time.perf_counter()
        case = preprocess_case(volume, self.plan, clicks=clicks)
        t1 = time.perf_counter()
        timings["preprocessing"] = t1 - t0
        stage("inferring")
        roi_mask = predict_roi_mask(case, self.nets)
        t2 = time.perf_counter()
        timings["model_inference"] = t2 - t1
        stage("postprocessing")
        restored = restore_to_original(roi_mask, case.inverse_map)
        final = apply_postproc(restored, self.plan.postproc)
        timings["postprocessing"] = time.perf_counter() - t2
        return final

    def _worker(self, vid: str, q: queue.Queue):
        while True:
            jid = q.get()
            if jid is None:
                return
            job = self.jobs[jid]
            volume = self.volumes[vid]
            try:
                timings = {}

                def advance(stage):
                    job.state = stage
                final = self.segment(volume, job.clicks, timings, advance)
                with self.lock:
                    job.timings.update(timings)
                    job.timings.setdefault("annotation", None)
                    job.timings.setdefault("evaluation", None)
                    job.mask = final
                    job.state = "done"
            except Exception as e:  # job failure is a state, not a crash
                with self.lock:
                    job.error = str(e)
                    job.state = "failed"


def _parse_upload(body: bytes):
    if body[:2] == b"\x1f\x8b":
        raise HTTPException(400, "gzip uploads are not supported")
    if body[:1] == b"{":
        sep = body.find(MVOL_FRAME_SEPARATOR)
        if sep < 0:
            raise HTTPException(400, "MVOL frame lacks the header separator")
        header, payload = body[:sep], body[sep + 1:]
        with tempfile.TemporaryDirectory() as d:
            hp = os.path.join(d, "upload.mvol")
            with open(hp, "wb") as f:
                f.write(header)
            with open(hp + ".raw", "wb") as f:
                f.write(payload)
            try:
                obj = read_mvol(hp)
            except MvolError as e:
                raise HTTPException(400, f"bad MVOL upload: {e}") from e
        if not isinstance(obj, Volume3D):
            raise HTTPException(400, "expected an image MVOL, got a mask")
        return obj
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "upload.nii")
        with open(path, "wb") as f:
            f.write(body)
        try:
            return read_nifti1(path)
        except NiftiError as e:
            raise HTTPException(400, f"unrecognized upload: {e}") from e


def _clicks_from_body(doc, volume: Volume3D) -> InteractionSet:
    clicks = doc.get("clicks")
    if not isinstance(clicks, list) or len(clicks) != 6:
        n = len(clicks) if isinstance(clicks, list) else 0
        raise HTTPException(400, f"expected 6 points, got {n}")
    pts = []
    try:
        for c in clicks:
            pts.append(ClickPoint(space=c.get("space", "world"),
                                  coords=tuple(c["coords"]),
                                  axis=c["axis"], side=c["side"]))
        iset = InteractionSet(points=tuple(pts))
    except (InteractionError, KeyError, TypeError) as e:
        raise HTTPException(400, f"malformed clicks: {e}") from e
    g = volume.geometry
    hi = np.asarray(g.dims) - 1
    for p in iset.points:
        vox = np.asarray(p.coords) if p.space == "voxel" \
            else voxel_from_world(g, p.coords)
        if np.any(np.rint(vox) < 0) or np.any(np.rint(vox) > hi):
            raise HTTPException(400, f"point {p.coords} is outside the volume")
    return iset


def create_app(plan, models, max_upload_bytes: int = 256 * 1024 * 1024):
    from PIL import Image

    app = FastAPI(title="extremeseg service")
    engine = Engine(plan, models)
    app.state.engine = engine

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/volumes")
    async def upload_volume(request: Request):
        body = await request.body()
        if len(body) > max_upload_bytes:
            raise HTTPException(413, "upload exceeds the configured limit")
        volume = _parse_upload(body)
        vid = engine.add_volume(volume)
        return {"volume_id": vid}

    def _volume_or_404(vid) -> Volume3D:
        vol = engine.volumes.get(vid)
        if vol is None:
            raise HTTPException(404, f"unknown volume {vid}")
        return vol

    @app.get("/volumes/{vid}/meta")
    def volume_meta(vid: str):
        vol = _volume_or_404(vid)
        g = vol.geometry
        return {
            "volume_id": vid,
            "dims": list(g.dims),
            "spacing": list(g.spacing),
            "origin": list(g.origin),
            "direction": [list(r) for r in g.direction.tolist()],
            "modality": vol.modality,
            "intensity": {"min": float(vol.values.min()),
                          "max": float(vol.values.max())},
        }

    @app.get("/volumes/{vid}/slice")
    def volume_slice(vid: str, plane: str, index: int,
                     center: float | None = None, width: float | None = None):
        vol = _volume_or_404(vid)
        if plane not in PLANES:
            raise HTTPException(400, f"unknown plane {plane!r}")
        row_ax, col_ax, fix_ax = PLANES[plane]
        if not 0 <= index < vol.geometry.dims[fix_ax]:
            raise HTTPException(400, f"slice index {index} out of range")
        sl = [slice(None)] * 3
        sl[fix_ax] = index
        plane_arr = vol.values[tuple(sl)]
        # after fixing one axis the remaining axes keep their relative order;
        # orient so pixel (r, c) indexes (row axis, col axis)
        if row_ax > col_ax:
            plane_arr = plane_arr.T
        if center is None or width is None:
            vmin = float(vol.values.min())
            vmax = float(vol.values.max())
            center = (vmax + vmin) / 2.0
            width = max(vmax - vmin, 1e-6)
        lo = center - width / 2.0
        pix = np.clip((plane_arr.astype(np.float64) - lo) / max(width, 1e-12),
                      0.0, 1.0)
        img = Image.fromarray(np.rint(pix * 255).astype(np.uint8), mode="L")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/volumes/{vid}/jobs")
    async def submit_job(vid: str, request: Request):
        vol = _volume_or_404(vid)
        try:
            doc = json.loads(await request.body())
        except json.JSONDecodeError as e:
            raise HTTPException(400, f"body is not JSON: {e}") from e
        clicks = _clicks_from_body(doc, vol)
        jid = engine.submit_job(vid, clicks,
                                annotation_seconds=doc.get("annotation_seconds"))
        return {"job_id": jid}

    @app.get("/jobs/{jid}")
    def get_job(jid: str):
        job = engine.jobs.get(jid)
        if job is None:
            raise HTTPException(404, f"unknown job {jid}")
        with engine.lock:
            return job.to_json_dict()

    @app.post("/jobs/{jid}/score")
    async def score_job(jid: str, request: Request):
        job = engine.jobs.get(jid)
        if job is None:
            raise HTTPException(404, f"unknown job {jid}")
        try:
            doc = json.loads(await request.body())
        except json.JSONDecodeError as e:
            raise HTTPException(400, f"body is not JSON: {e}") from e
        score = doc.get("score")
        if score not in QUALITY_SCORES:
            raise HTTPException(400, f"score must be one of {QUALITY_SCORES}")
        with engine.lock:
            if job.state != "done":
                raise HTTPException(409, f"job is {job.state}, not done")
            job.quality_score = score
            if doc.get("evaluation_seconds") is not None:
                job.timings["evaluation"] = float(doc["evaluation_seconds"])
        return Response(status_code=204)

    return app


def mvol_wire_frame(volume) -> bytes:
    """Serialize a volume/mask into the single-body upload framing."""
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "v.mvol")
        write_mvol(path, volume)
        with open(path, "rb") as f:
            header = f.read()
        with open(path + ".raw", "rb") as f:
            payload = f.read()
    return header.rstrip(b"\n") + MVOL_FRAME_SEPARATOR + payload
