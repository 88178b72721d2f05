"""numba nopython kernels. Serial on purpose: bitwise-reproducible results
regardless of thread count, and the build targets single-core boxes."""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def conv_fwd(xp, w, b, sx, sy, sz, out):
    """Tap-outer loop order: the innermost z loop is a contiguous saxpy on
    the output row, which LLVM vectorizes."""
    cin, _, _, _ = xp.shape
    f, _, kx, ky, kz = w.shape
    _, ox, oy, oz = out.shape
    for fi in range(f):
        out[fi, :, :, :] = b[fi]
    for fi in range(f):
        for c in range(cin):
            for a in range(kx):
                for bb in range(ky):
                    for cc in range(kz):
                        wv = w[fi, c, a, bb, cc]
                        for i in range(ox):
                            xrow2 = xp[c, i * sx + a]
                            orow2 = out[fi, i]
                            for j in range(oy):
                                xrow = xrow2[j * sy + bb]
                                orow = orow2[j]
                                if sz == 1:
                                    for k in range(oz):
                                        orow[k] += wv * xrow[k + cc]
                                else:
                                    for k in range(oz):
                                        orow[k] += wv * xrow[k * sz + cc]


@njit(cache=True, fastmath=True)
def conv_bwd_w(xp, gy, sx, sy, sz, gw):
    """Per-tap reduction: inner z loop is a contiguous dot product."""
    f, cin, kx, ky, kz = gw.shape
    _, ox, oy, oz = gy.shape
    for fi in range(f):
        for c in range(cin):
            for a in range(kx):
                for bb in range(ky):
                    for cc in range(kz):
                        acc = 0.0
                        for i in range(ox):
                            xrow2 = xp[c, i * sx + a]
                            grow2 = gy[fi, i]
                            for j in range(oy):
                                xrow = xrow2[j * sy + bb]
                                grow = grow2[j]
                                if sz == 1:
                                    for k in range(oz):
                                        acc += grow[k] * xrow[k + cc]
                                else:
                                    for k in range(oz):
                                        acc += grow[k] * xrow[k * sz + cc]
                        gw[fi, c, a, bb, cc] = acc


@njit(cache=True, fastmath=True)
def tconv_fwd(x, wt, b, out):
    cin, f, sx, sy, sz = wt.shape
    _, nx, ny, nz = x.shape
    for fi in range(f):
        out[fi, :, :, :] = b[fi]
    for c in range(cin):
        for fi in range(f):
            for a in range(sx):
                for bb in range(sy):
                    for cc in range(sz):
                        wv = wt[c, fi, a, bb, cc]
                        for i in range(nx):
                            for j in range(ny):
                                xrow = x[c, i, j]
                                orow = out[fi, i * sx + a, j * sy + bb]
                                for k in range(nz):
                                    orow[k * sz + cc] += wv * xrow[k]


@njit(cache=True, fastmath=True)
def tconv_bwd_x(gy, wt, gx):
    cin, f, sx, sy, sz = wt.shape
    _, nx, ny, nz = gx.shape
    for c in range(cin):
        for fi in range(f):
            for a in range(sx):
                for bb in range(sy):
                    for cc in range(sz):
                        wv = wt[c, fi, a, bb, cc]
                        for i in range(nx):
                            for j in range(ny):
                                grow = gy[fi, i * sx + a, j * sy + bb]
                                xrow = gx[c, i, j]
                                for k in range(nz):
                                    xrow[k] += wv * grow[k * sz + cc]


@njit(cache=True, fastmath=True)
def tconv_bwd_w(x, gy, gwt):
    cin, f, sx, sy, sz = gwt.shape
    _, nx, ny, nz = x.shape
    for c in range(cin):
        for fi in range(f):
            for a in range(sx):
                for bb in range(sy):
                    for cc in range(sz):
                        acc = 0.0
                        for i in range(nx):
                            for j in range(ny):
                                xrow = x[c, i, j]
                                grow = gy[fi, i * sx + a, j * sy + bb]
                                for k in range(nz):
                                    acc += xrow[k] * grow[k * sz + cc]
                        gwt[c, fi, a, bb, cc] = acc


@njit(cache=True)
def _heap_push(keys, idxs, size, key, idx):
    pos = size
    keys[pos] = key
    idxs[pos] = idx
    while pos > 0:
        parent = (pos - 1) // 2
        if keys[parent] <= keys[pos]:
            break
        keys[parent], keys[pos] = keys[pos], keys[parent]
        idxs[parent], idxs[pos] = idxs[pos], idxs[parent]
        pos = parent
    return size + 1


@njit(cache=True)
def _heap_pop(keys, idxs, size):
    key = keys[0]
    idx = idxs[0]
    size -= 1
    keys[0] = keys[size]
    idxs[0] = idxs[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        right = left + 1
        if right < size and keys[right] < keys[left]:
            child = right
        if keys[pos] <= keys[child]:
            break
        keys[pos], keys[child] = keys[child], keys[pos]
        idxs[pos], idxs[child] = idxs[child], idxs[pos]
        pos = child
    return key, idx, size


@njit(cache=True)
def dijkstra3d(img, spacing, seeds, lam):
    nx, ny, nz = img.shape
    n = nx * ny * nz
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.uint8)
    # lazy-deletion binary heap; each relaxation may push a duplicate
    cap = 8 * n + 8
    keys = np.empty(cap)
    idxs = np.empty(cap, dtype=np.int64)
    size = 0
    flat = img.ravel()
    for s in range(seeds.shape[0]):
        fi = (seeds[s, 0] * ny + seeds[s, 1]) * nz + seeds[s, 2]
        if dist[fi] > 0.0:
            dist[fi] = 0.0
            size = _heap_push(keys, idxs, size, 0.0, fi)
    sx = spacing[0]
    sy = spacing[1]
    sz = spacing[2]
    while size > 0:
        key, idx, size = _heap_pop(keys, idxs, size)
        if done[idx]:
            continue
        done[idx] = 1
        z = idx % nz
        y = (idx // nz) % ny
        x = idx // (nz * ny)
        val = flat[idx]
        for a in range(6):
            if a == 0:
                ox, oy, oz, step = x - 1, y, z, sx
            elif a == 1:
                ox, oy, oz, step = x + 1, y, z, sx
            elif a == 2:
                ox, oy, oz, step = x, y - 1, z, sy
            elif a == 3:
                ox, oy, oz, step = x, y + 1, z, sy
            elif a == 4:
                ox, oy, oz, step = x, y, z - 1, sz
            else:
                ox, oy, oz, step = x, y, z + 1, sz
            if ox < 0 or ox >= nx or oy < 0 or oy >= ny or oz < 0 or oz >= nz:
                continue
            nidx = (ox * ny + oy) * nz + oz
            if done[nidx]:
                continue
            diff = flat[nidx] - val
            if diff < 0.0:
                diff = -diff
            alt = key + (1.0 - lam) * step + lam * diff
            if alt < dist[nidx]:
                dist[nidx] = alt
                if size >= cap:  # pragma: no cover - capacity is generous
                    raise RuntimeError("heap overflow")
                size = _heap_push(keys, idxs, size, alt, nidx)
    return dist.reshape(nx, ny, nz)


@njit(cache=True, fastmath=True)
def affine_trilinear(src, mat, offset, cval, out):
    nx, ny, nz = src.shape
    ox, oy, oz = out.shape
    for i in range(ox):
        for j in range(oy):
            for k in range(oz):
                px = mat[0, 0] * i + mat[0, 1] * j + mat[0, 2] * k + offset[0]
                py = mat[1, 0] * i + mat[1, 1] * j + mat[1, 2] * k + offset[1]
                pz = mat[2, 0] * i + mat[2, 1] * j + mat[2, 2] * k + offset[2]
                x0 = int(np.floor(px))
                y0 = int(np.floor(py))
                z0 = int(np.floor(pz))
                fx = px - x0
                fy = py - y0
                fz = pz - z0
                acc = 0.0
                for dx in range(2):
                    wx = fx if dx == 1 else 1.0 - fx
                    xi = x0 + dx
                    for dy in range(2):
                        wy = fy if dy == 1 else 1.0 - fy
                        yj = y0 + dy
                        for dz in range(2):
                            wz = fz if dz == 1 else 1.0 - fz
                            zk = z0 + dz
                            wgt = wx * wy * wz
                            if wgt == 0.0:
                                continue
                            if (0 <= xi < nx) and (0 <= yj < ny) and (0 <= zk < nz):
                                acc += wgt * src[xi, yj, zk]
                            else:
                                acc += wgt * cval
                out[i, j, k] = acc


@njit(cache=True)
def affine_nearest(src, mat, offset, cval, out):
    nx, ny, nz = src.shape
    ox, oy, oz = out.shape
    for i in range(ox):
        for j in range(oy):
            for k in range(oz):
                px = mat[0, 0] * i + mat[0, 1] * j + mat[0, 2] * k + offset[0]
                py = mat[1, 0] * i + mat[1, 1] * j + mat[1, 2] * k + offset[1]
                pz = mat[2, 0] * i + mat[2, 1] * j + mat[2, 2] * k + offset[2]
                xi = int(np.floor(px + 0.5))
                yj = int(np.floor(py + 0.5))
                zk = int(np.floor(pz + 0.5))
                if (0 <= xi < nx) and (0 <= yj < ny) and (0 <= zk < nz):
                    out[i, j, k] = src[xi, yj, zk]
                else:
                    out[i, j, k] = cval
