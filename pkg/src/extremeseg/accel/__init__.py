"""Hot numeric kernels with two interchangeable backends.

The numba backend (default) JIT-compiles the inner loops; the pure-numpy
backend is selected by setting ``EXTREMESEG_NO_NUMBA=1`` (or automatically
when numba is not importable). Both backends implement the same low-level
contracts and are exercised by the same test suite; ``benchmarks/bench_kernels.py``
compares their throughput.

Array conventions: volumes are C-contiguous ``(channels, x, y, z)`` float
arrays; convolution weights are ``(out_ch, in_ch, kx, ky, kz)``; transposed
convolution weights are ``(in_ch, out_ch, sx, sy, sz)`` with kernel == stride.
"""

import os

import numpy as np

_flag = os.environ.get("EXTREMESEG_NO_NUMBA", "").strip().lower()
USE_NUMBA = _flag not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from . import _numba_impl as _impl
    except ImportError:  # pragma: no cover - numba present in normal installs
        USE_NUMBA = False
        from . import _numpy_impl as _impl
else:
    from . import _numpy_impl as _impl


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def conv3d_forward(x, w, b, stride):
    """Zero-padded 3D convolution, padding = kernel//2 per axis.

    x: (C, X, Y, Z); w: (F, C, kx, ky, kz); b: (F,); stride: (sx, sy, sz).
    Returns (F, ceil(X/sx), ceil(Y/sy), ceil(Z/sz)) for odd kernels.
    """
    kx, ky, kz = w.shape[2:]
    px, py, pz = kx // 2, ky // 2, kz // 2
    xp = np.pad(x, ((0, 0), (px, px), (py, py), (pz, pz)))
    sx, sy, sz = stride
    ox = (xp.shape[1] - kx) // sx + 1
    oy = (xp.shape[2] - ky) // sy + 1
    oz = (xp.shape[3] - kz) // sz + 1
    out = np.empty((w.shape[0], ox, oy, oz), dtype=x.dtype)
    _impl.conv_fwd(xp, w, b, sx, sy, sz, out)
    return out


def conv3d_backward_w(x, gy, kshape, stride):
    """Gradient of conv3d_forward w.r.t. the weights."""
    kx, ky, kz = kshape
    px, py, pz = kx // 2, ky // 2, kz // 2
    xp = np.pad(x, ((0, 0), (px, px), (py, py), (pz, pz)))
    gw = np.zeros((gy.shape[0], x.shape[0], kx, ky, kz), dtype=x.dtype)
    _impl.conv_bwd_w(xp, gy, stride[0], stride[1], stride[2], gw)
    return gw


def conv3d_backward_x(gy, w, xshape, stride):
    """Gradient of conv3d_forward w.r.t. the input.

    Implemented as a stride-1 convolution of the stride-dilated, re-padded
    output gradient with the flipped, channel-swapped weights.
    """
    f, c, kx, ky, kz = w.shape
    px, py, pz = kx // 2, ky // 2, kz // 2
    sx, sy, sz = stride
    x_, y_, z_ = xshape[1:]
    xp_x, xp_y, xp_z = x_ + 2 * px, y_ + 2 * py, z_ + 2 * pz
    # dilate gy by the stride, then pad (k-1 left, padded-input remainder
    # right) so a plain stride-1 correlation with the flipped weights
    # yields the gradient on the padded input grid
    dx = (gy.shape[1] - 1) * sx + 1
    dy = (gy.shape[2] - 1) * sy + 1
    dz = (gy.shape[3] - 1) * sz + 1
    gyd = np.zeros((f, xp_x + kx - 1, xp_y + ky - 1, xp_z + kz - 1),
                   dtype=gy.dtype)
    gyd[:, kx - 1:kx - 1 + dx:sx, ky - 1:ky - 1 + dy:sy,
        kz - 1:kz - 1 + dz:sz] = gy
    wflip = np.ascontiguousarray(
        np.transpose(w[:, :, ::-1, ::-1, ::-1], (1, 0, 2, 3, 4)))
    gxp = np.empty((c, xp_x, xp_y, xp_z), dtype=gy.dtype)
    zero = np.zeros(c, dtype=gy.dtype)
    _impl.conv_fwd(gyd, wflip, zero, 1, 1, 1, gxp)
    return np.ascontiguousarray(
        gxp[:, px:px + x_, py:py + y_, pz:pz + z_])


def tconv3d_forward(x, wt, b, stride):
    """Transposed convolution with kernel == stride (exact upsampling)."""
    sx, sy, sz = stride
    c, f = wt.shape[:2]
    out = np.empty((f, x.shape[1] * sx, x.shape[2] * sy, x.shape[3] * sz),
                   dtype=x.dtype)
    _impl.tconv_fwd(x, wt, b, out)
    return out


def tconv3d_backward_x(gy, wt):
    sx, sy, sz = wt.shape[2:]
    c = wt.shape[0]
    gx = np.zeros((c, gy.shape[1] // sx, gy.shape[2] // sy, gy.shape[3] // sz),
                  dtype=gy.dtype)
    _impl.tconv_bwd_x(gy, wt, gx)
    return gx


def tconv3d_backward_w(x, gy, stride):
    sx, sy, sz = stride
    gwt = np.zeros((x.shape[0], gy.shape[0], sx, sy, sz), dtype=x.dtype)
    _impl.tconv_bwd_w(x, gy, gwt)
    return gwt


def geodesic_distance(image, spacing, seeds, lam):
    """Exact 6-connected Dijkstra distance from the seed voxels.

    Edge weight between neighbors i, j: (1-lam)*dist_mm + lam*|I(i)-I(j)|.
    image: (X, Y, Z); seeds: (n, 3) int voxel indices. Returns float64 field.
    """
    img = np.ascontiguousarray(image, dtype=np.float64)
    sp = np.asarray(spacing, dtype=np.float64)
    sd = np.ascontiguousarray(seeds, dtype=np.int64)
    if sd.ndim != 2 or sd.shape[1] != 3:
        raise ValueError("seeds must be (n, 3)")
    for axis in range(3):
        if np.any(sd[:, axis] < 0) or np.any(sd[:, axis] >= img.shape[axis]):
            raise ValueError("seed outside the image grid")
    return _impl.dijkstra3d(img, sp, sd, float(lam))


def affine_sample(src, mat, offset, out_shape, order, cval=0.0):
    """Resample src at out voxel v from input location mat @ v + offset.

    order 0 = nearest neighbor, order 1 = trilinear; cval fills out-of-grid.
    """
    m = np.ascontiguousarray(mat, dtype=np.float64)
    t = np.ascontiguousarray(offset, dtype=np.float64)
    out = np.empty(tuple(out_shape), dtype=src.dtype)
    if order == 0:
        _impl.affine_nearest(src, m, t, src.dtype.type(cval), out)
    elif order == 1:
        _impl.affine_trilinear(src, m, t, src.dtype.type(cval), out)
    else:
        raise ValueError(f"unsupported order {order}")
    return out
