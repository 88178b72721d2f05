"""Pure-numpy fallback kernels (EXTREMESEG_NO_NUMBA=1).

Convolutions go through sliding_window_view + einsum so BLAS does the
contraction; Dijkstra falls back to heapq. Same contracts as _numba_impl.
"""

import heapq

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_fwd(xp, w, b, sx, sy, sz, out):
    windows = sliding_window_view(xp, w.shape[2:], axis=(1, 2, 3))
    windows = windows[:, ::sx, ::sy, ::sz]
    np.einsum("cxyzijk,fcijk->fxyz", windows, w, out=out, optimize=True)
    out += b[:, None, None, None]


def conv_bwd_w(xp, gy, sx, sy, sz, gw):
    windows = sliding_window_view(xp, gw.shape[2:], axis=(1, 2, 3))
    windows = windows[:, ::sx, ::sy, ::sz]
    np.einsum("cxyzijk,fxyz->fcijk", windows, gy, out=gw, optimize=True)


def tconv_fwd(x, wt, b, out):
    cin, f, sx, sy, sz = wt.shape
    _, nx, ny, nz = x.shape
    tmp = np.einsum("cxyz,cfijk->fxiyjzk", x, wt, optimize=True)
    out[:] = tmp.reshape(f, nx * sx, ny * sy, nz * sz)
    out += b[:, None, None, None]


def tconv_bwd_x(gy, wt, gx):
    cin, f, sx, sy, sz = wt.shape
    _, nx, ny, nz = gx.shape
    gyr = gy.reshape(f, nx, sx, ny, sy, nz, sz)
    np.einsum("fxiyjzk,cfijk->cxyz", gyr, wt, out=gx, optimize=True)


def tconv_bwd_w(x, gy, gwt):
    cin, f, sx, sy, sz = gwt.shape
    _, nx, ny, nz = x.shape
    gyr = gy.reshape(f, nx, sx, ny, sy, nz, sz)
    np.einsum("cxyz,fxiyjzk->cfijk", x, gyr, out=gwt, optimize=True)


def dijkstra3d(img, spacing, seeds, lam):
    nx, ny, nz = img.shape
    flat = img.ravel()
    dist = np.full(flat.size, np.inf)
    done = np.zeros(flat.size, dtype=bool)
    heap = []
    for s in seeds:
        fi = (s[0] * ny + s[1]) * nz + s[2]
        if dist[fi] > 0.0:
            dist[fi] = 0.0
            heapq.heappush(heap, (0.0, fi))
    steps = ((-ny * nz, spacing[0]), (ny * nz, spacing[0]),
             (-nz, spacing[1]), (nz, spacing[1]),
             (-1, spacing[2]), (1, spacing[2]))
    while heap:
        key, idx = heapq.heappop(heap)
        if done[idx]:
            continue
        done[idx] = True
        z = idx % nz
        y = (idx // nz) % ny
        x = idx // (nz * ny)
        val = flat[idx]
        for a, (off, step) in enumerate(steps):
            if a == 0 and x == 0:
                continue
            if a == 1 and x == nx - 1:
                continue
            if a == 2 and y == 0:
                continue
            if a == 3 and y == ny - 1:
                continue
            if a == 4 and z == 0:
                continue
            if a == 5 and z == nz - 1:
                continue
            nidx = idx + off
            if done[nidx]:
                continue
            alt = key + (1.0 - lam) * step + lam * abs(flat[nidx] - val)
            if alt < dist[nidx]:
                dist[nidx] = alt
                heapq.heappush(heap, (alt, nidx))
    return dist.reshape(nx, ny, nz)


def _output_coords(mat, offset, out_shape):
    grid = np.indices(out_shape, dtype=np.float64).reshape(3, -1)
    return mat @ grid + np.asarray(offset, dtype=np.float64)[:, None]


def affine_trilinear(src, mat, offset, cval, out):
    nx, ny, nz = src.shape
    coords = _output_coords(mat, offset, out.shape)
    base = np.floor(coords).astype(np.int64)
    frac = coords - base
    acc = np.zeros(coords.shape[1], dtype=np.float64)
    for dx in range(2):
        for dy in range(2):
            for dz in range(2):
                wgt = (np.where(dx, frac[0], 1.0 - frac[0])
                       * np.where(dy, frac[1], 1.0 - frac[1])
                       * np.where(dz, frac[2], 1.0 - frac[2]))
                xi = base[0] + dx
                yj = base[1] + dy
                zk = base[2] + dz
                inside = ((xi >= 0) & (xi < nx) & (yj >= 0) & (yj < ny)
                          & (zk >= 0) & (zk < nz))
                vals = np.where(
                    inside,
                    src[np.clip(xi, 0, nx - 1), np.clip(yj, 0, ny - 1),
                        np.clip(zk, 0, nz - 1)],
                    cval)
                acc += wgt * vals
    out[:] = acc.reshape(out.shape).astype(src.dtype, copy=False)


def affine_nearest(src, mat, offset, cval, out):
    nx, ny, nz = src.shape
    coords = _output_coords(mat, offset, out.shape)
    idx = np.floor(coords + 0.5).astype(np.int64)
    inside = ((idx[0] >= 0) & (idx[0] < nx) & (idx[1] >= 0) & (idx[1] < ny)
              & (idx[2] >= 0) & (idx[2] < nz))
    vals = np.where(
        inside,
        src[np.clip(idx[0], 0, nx - 1), np.clip(idx[1], 0, ny - 1),
            np.clip(idx[2], 0, nz - 1)],
        cval)
    out[:] = vals.reshape(out.shape).astype(src.dtype, copy=False)
