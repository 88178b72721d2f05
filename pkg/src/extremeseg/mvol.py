"""Native MVOL format: a JSON header file plus a raw little-endian payload.

``case.mvol`` holds the header; the payload lives beside it in
``case.mvol.raw``, x fastest-varying. f32 payloads round-trip bit-exactly;
i16/u8 payloads round-trip bit-exactly because their values are exactly
representable in the internal float32 storage.
"""

import json
import os
import tempfile

import numpy as np

from .geometry import Geometry
from .volume import Mask3D, Volume3D

_DTYPES = {"f32": np.dtype("<f4"), "i16": np.dtype("<i2"), "u8": np.dtype("<u1")}


class MvolError(ValueError):
    pass


def payload_path(path: str) -> str:
    return str(path) + ".raw"


def _atomic_write(path: str, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-mvol-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_mvol(path, obj, dtype=None) -> None:
    """Write a Volume3D or Mask3D; header JSON at path, payload at path.raw."""
    if isinstance(obj, Mask3D):
        kind = "mask"
        dtype = dtype or "u8"
        data = obj.labels
        modality = None
    elif isinstance(obj, Volume3D):
        kind = "image"
        dtype = dtype or obj.source_dtype
        data = obj.values
        modality = obj.modality
    else:
        raise MvolError(f"cannot write object of type {type(obj).__name__}")
    if dtype not in _DTYPES:
        raise MvolError(f"unsupported dtype {dtype!r}")
    flat = np.asarray(data).ravel(order="F")
    cast = flat.astype(_DTYPES[dtype])
    if dtype != "f32" and not np.array_equal(cast.astype(flat.dtype), flat):
        raise MvolError(f"values not exactly representable as {dtype}")
    g = obj.geometry
    header = {
        "format": "mvol",
        "version": 1,
        "kind": kind,
        "dims": list(g.dims),
        "spacing": list(g.spacing),
        "origin": list(g.origin),
        "direction": [list(row) for row in g.direction.tolist()],
        "dtype": dtype,
        "order": "little-endian",
    }
    if modality is not None:
        header["modality"] = modality
    _atomic_write(payload_path(path), cast.tobytes())
    _atomic_write(str(path), (json.dumps(header, indent=1) + "\n").encode())


def read_mvol(path):
    """Read a Volume3D or Mask3D pair of header + payload files."""
    try:
        with open(path, "rb") as f:
            header = json.loads(f.read().decode())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MvolError(f"malformed MVOL header {path}: {e}") from e
    if not isinstance(header, dict) or header.get("format") != "mvol":
        raise MvolError(f"{path} is not an MVOL header")
    try:
        kind = header["kind"]
        dims = tuple(int(d) for d in header["dims"])
        geometry = Geometry(dims=dims, spacing=tuple(header["spacing"]),
                            origin=tuple(header["origin"]),
                            direction=np.asarray(header["direction"]))
        dtype = header["dtype"]
    except (KeyError, TypeError, ValueError) as e:
        raise MvolError(f"malformed MVOL header {path}: {e}") from e
    if kind not in ("image", "mask"):
        raise MvolError(f"unknown MVOL kind {kind!r}")
    if dtype not in _DTYPES:
        raise MvolError(f"unsupported dtype {dtype!r}")
    if header.get("order", "little-endian") != "little-endian":
        raise MvolError("only little-endian payloads are supported")
    with open(payload_path(path), "rb") as f:
        raw = f.read()
    expected = geometry.voxel_count * _DTYPES[dtype].itemsize
    if len(raw) != expected:
        raise MvolError(
            f"payload size {len(raw)} != expected {expected} for dims {dims}")
    flat = np.frombuffer(raw, dtype=_DTYPES[dtype])
    arr = flat.reshape(dims, order="F")
    if kind == "mask":
        if np.any((arr != 0) & (arr != 1)):
            raise MvolError("mask payload contains labels outside {0, 1}")
        return Mask3D(geometry=geometry, labels=arr.astype(np.uint8))
    return Volume3D(geometry=geometry, values=arr.astype(np.float32),
                    modality=header.get("modality", "SYNTH"),
                    source_dtype=dtype)
