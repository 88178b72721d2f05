"""Minimal NIfTI-1 reader: single-file, uncompressed, sform-only, 3-D.

Anything the parser cannot map onto a clean Geometry is rejected loudly;
there is deliberately no guessing (no qform fallback, no gzip, no 4-D).
"""

import struct

import numpy as np

from .geometry import Geometry, GeometryError
from .volume import Mask3D, Volume3D

_DATATYPES = {
    2: np.dtype("u1"),    # uint8
    4: np.dtype("i2"),    # int16
    8: np.dtype("i4"),    # int32
    16: np.dtype("f4"),   # float32
    64: np.dtype("f8"),   # float64
}

HEADER_SIZE = 348


class NiftiError(ValueError):
    pass


def _parse_header(hdr: bytes):
    if len(hdr) < HEADER_SIZE:
        raise NiftiError("file shorter than the 348-byte NIfTI-1 header")
    for endian in ("<", ">"):
        (sizeof_hdr,) = struct.unpack_from(endian + "i", hdr, 0)
        if sizeof_hdr == HEADER_SIZE:
            break
    else:
        raise NiftiError("sizeof_hdr != 348; not a NIfTI-1 file")
    magic = hdr[344:348]
    if magic == b"ni1\x00":
        raise NiftiError("detached-header NIfTI ('ni1') is not supported")
    if magic not in (b"n+1\x00",):
        raise NiftiError(f"bad magic {magic!r}; expected 'n+1'")
    dim = struct.unpack_from(endian + "8h", hdr, 40)
    if dim[0] != 3:
        raise NiftiError(f"only 3-D images supported, got dim[0]={dim[0]}")
    datatype, _bitpix = struct.unpack_from(endian + "2h", hdr, 70)
    if datatype not in _DATATYPES:
        raise NiftiError(f"unsupported datatype code {datatype}")
    (vox_offset,) = struct.unpack_from(endian + "f", hdr, 108)
    scl_slope, scl_inter = struct.unpack_from(endian + "2f", hdr, 112)
    _qform, sform = struct.unpack_from(endian + "2h", hdr, 252)
    if sform <= 0:
        raise NiftiError("sform_code <= 0; qform-only files are not supported")
    srow = struct.unpack_from(endian + "12f", hdr, 280)
    return {
        "endian": endian,
        "dims": (int(dim[1]), int(dim[2]), int(dim[3])),
        "dtype": _DATATYPES[datatype],
        "vox_offset": int(vox_offset),
        "scl": (scl_slope, scl_inter),
        "srow": np.asarray(srow, dtype=np.float64).reshape(3, 4),
    }


def _geometry_from_sform(dims, srow) -> Geometry:
    m = srow[:, :3]
    origin = srow[:, 3]
    spacing = np.linalg.norm(m, axis=0)
    if np.any(spacing <= 0):
        raise NiftiError("sform has a zero-length column; cannot derive spacing")
    direction = m / spacing[None, :]
    try:
        return Geometry(dims=dims, spacing=tuple(spacing),
                        origin=tuple(origin), direction=direction)
    except GeometryError as e:
        raise NiftiError(f"sform does not decompose into a valid geometry: {e}") from e


def read_nifti1(path, kind="image", modality="SYNTH"):
    """Read an uncompressed single-file NIfTI-1 volume.

    kind="mask" validates {0,1} content and returns a Mask3D.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:2] == b"\x1f\x8b":
        raise NiftiError("gzip-compressed NIfTI is explicitly unsupported")
    info = _parse_header(blob)
    geometry = _geometry_from_sform(info["dims"], info["srow"])
    dtype = info["dtype"].newbyteorder(info["endian"])
    offset = max(info["vox_offset"], HEADER_SIZE)
    nbytes = geometry.voxel_count * dtype.itemsize
    body = blob[offset:offset + nbytes]
    if len(body) != nbytes:
        raise NiftiError(
            f"payload truncated: need {nbytes} bytes at offset {offset}")
    arr = np.frombuffer(body, dtype=dtype).reshape(geometry.dims, order="F")
    arr = arr.astype(np.float32)
    slope, inter = info["scl"]
    if np.isfinite(slope) and slope != 0.0 and (slope, inter) != (1.0, 0.0):
        arr = arr * np.float32(slope) + np.float32(inter)
    if kind == "mask":
        if np.any((arr != 0) & (arr != 1)):
            raise NiftiError("mask file contains labels outside {0, 1}")
        return Mask3D(geometry=geometry, labels=arr.astype(np.uint8))
    if kind != "image":
        raise NiftiError(f"unknown kind {kind!r}")
    try:
        return Volume3D(geometry=geometry, values=arr, modality=modality)
    except ValueError as e:
        raise NiftiError(str(e)) from e
