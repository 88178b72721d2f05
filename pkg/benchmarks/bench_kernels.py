"""Throughput comparison of the numba and pure-numpy kernel backends.

Run both in one process by importing the implementation modules directly
(the EXTREMESEG_NO_NUMBA flag only controls which one the package uses):

    python3 benchmarks/bench_kernels.py
"""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

from extremeseg.accel import _numba_impl, _numpy_impl  # noqa: E402


def timeit(fn, *args, repeat=5, warmup=2):
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_conv(impl, shape=(8, 32, 32, 16), cout=16, kernel=(3, 3, 3),
               stride=(1, 1, 1)):
    rng = np.random.default_rng(0)
    x = rng.normal(size=shape).astype(np.float32)
    w = rng.normal(size=(cout, shape[0], *kernel)).astype(np.float32)
    b = np.zeros(cout, dtype=np.float32)
    k = np.asarray(kernel)
    p = k // 2
    xp = np.pad(x, ((0, 0), (p[0], p[0]), (p[1], p[1]), (p[2], p[2])))
    out_shape = tuple((np.asarray(xp.shape[1:]) - k) // np.asarray(stride) + 1)
    out = np.empty((cout, *out_shape), dtype=np.float32)
    dt = timeit(impl.conv_fwd, xp, w, b, *stride, out)
    macs = np.prod(out.shape) * shape[0] * np.prod(kernel)
    return dt, 2 * macs / dt / 1e9


def bench_conv_bwd_w(impl, shape=(8, 32, 32, 16), cout=16):
    rng = np.random.default_rng(0)
    x = rng.normal(size=shape).astype(np.float32)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (1, 1)))
    gy = rng.normal(size=(cout, *shape[1:])).astype(np.float32)
    gw = np.zeros((cout, shape[0], 3, 3, 3), dtype=np.float32)
    dt = timeit(impl.conv_bwd_w, xp, gy, 1, 1, 1, gw)
    macs = np.prod(gy.shape) * shape[0] * 27
    return dt, 2 * macs / dt / 1e9


def bench_dijkstra(impl, shape=(32, 32, 16)):
    rng = np.random.default_rng(0)
    img = rng.normal(size=shape)
    seeds = np.array([[0, 0, 0], [shape[0] // 2] * 2 + [shape[2] // 2]],
                     dtype=np.int64)
    sp = np.array([1.0, 1.0, 1.0])
    dt = timeit(impl.dijkstra3d, img, sp, seeds, 1.0)
    return dt, np.prod(shape) / dt / 1e6


def bench_affine(impl, shape=(32, 32, 16)):
    rng = np.random.default_rng(0)
    src = rng.normal(size=shape).astype(np.float32)
    mat = np.eye(3) * 1.05
    off = np.zeros(3)
    out = np.empty(shape, dtype=np.float32)
    dt = timeit(impl.affine_trilinear, src, mat, off, np.float32(0), out)
    return dt, np.prod(shape) / dt / 1e6


def main():
    rows = []
    for name, fn, unit in [
        ("conv3d fwd 8->16 @32x32x16", bench_conv, "GFLOP/s"),
        ("conv3d bwd_w 8->16 @32x32x16", bench_conv_bwd_w, "GFLOP/s"),
        ("dijkstra 6-conn @32x32x16", bench_dijkstra, "Mvox/s"),
        ("affine trilinear @32x32x16", bench_affine, "Mvox/s"),
    ]:
        t_nb, r_nb = fn(_numba_impl)
        t_np, r_np = fn(_numpy_impl)
        rows.append((name, t_nb, r_nb, t_np, r_np, unit))
    print(f"{'kernel':34s} {'numba':>12s} {'numpy':>12s} {'speedup':>8s}")
    for name, t_nb, r_nb, t_np, r_np, unit in rows:
        print(f"{name:34s} {t_nb*1e3:9.2f} ms {t_np*1e3:9.2f} ms "
              f"{t_np/t_nb:7.1f}x   ({r_nb:.2f} vs {r_np:.2f} {unit})")


if __name__ == "__main__":
    main()
