#!/usr/bin/env python3
"""Time the numba and numpy kernel backends against each other.

Runs the tiled encoder forward pass and the raw matmul-accumulate kernel on
both backends and prints a side-by-side table.  Results are bit-identical by
construction; only the wall time differs.

Usage:
    python benchmarks/bench_backends.py [--d-model 256] [--heads 8]
                                        [--seq-len 64] [--layers 2] [--iters 3]
"""

import argparse
import time

import numpy as np

from protea_sim.config import HardwareConfig, ModelConfig, Q4_4
from protea_sim.engines import EngineState
from protea_sim.kernels import _NUMPY_IMPL, _build_numba_impl
from protea_sim.weights import generate_input, generate_weights


def time_fn(fn, iters):
    best = float("inf")
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(iters):
    try:
        nb = _build_numba_impl()
    except ImportError:
        print("numba unavailable; kernel comparison skipped")
        return
    rng = np.random.default_rng(0)
    a = rng.integers(-128, 128, size=(64, 768)).astype(np.int64)
    b = rng.integers(-128, 128, size=(768, 96)).astype(np.int64)
    acc = np.zeros((64, 96), dtype=np.int64)
    nb["matmul_accum"](a, b, acc)  # compile outside the timed region
    rows = []
    for name, impl in (("numba", nb["matmul_accum"]),
                       ("numpy", _NUMPY_IMPL["matmul_accum"])):
        acc[:] = 0
        t = time_fn(lambda: impl(a, b, acc), iters)
        rows.append((name, t))
    print("\nmatmul_accum 64x768x96 int64 (best of %d):" % iters)
    for name, t in rows:
        print("  %-6s %8.3f ms" % (name, t * 1e3))


def bench_forward(m, hw, iters):
    import protea_sim.kernels as kernels
    results = {}
    for backend in ("numba", "numpy"):
        try:
            impl = _build_numba_impl() if backend == "numba" else _NUMPY_IMPL
        except ImportError:
            continue
        saved = dict(kernels._IMPL)
        kernels._IMPL.update(impl)
        kernels.matmul_accum = impl["matmul_accum"]
        kernels.matmul_abt_accum = impl["matmul_abt_accum"]
        kernels.requant_shift = impl["requant_shift"]
        kernels.sat_add = impl["sat_add"]
        try:
            w = generate_weights(1, m, hw.fx_format)
            x = generate_input(2, m, hw.fx_format)
            state = EngineState(hw, m)
            state.forward(x, w)  # warm-up (jit compile, caches)
            t = time_fn(lambda: state.forward(x, w), iters)
            out, _ = state.forward(x, w)
            results[backend] = (t, out.raw.sum())
        finally:
            kernels._IMPL.update(saved)
            kernels.matmul_accum = saved["matmul_accum"]
            kernels.matmul_abt_accum = saved["matmul_abt_accum"]
            kernels.requant_shift = saved["requant_shift"]
            kernels.sat_add = saved["sat_add"]
    print("\nencoder forward d=%d h=%d SL=%d N=%d (best of %d):"
          % (m.d_model, m.num_heads, m.seq_len, m.num_layers, iters))
    for backend, (t, checksum) in results.items():
        print("  %-6s %8.1f ms   (output checksum %d)" % (backend, t * 1e3, checksum))
    if len(results) == 2:
        sums = {c for _, c in results.values()}
        assert len(sums) == 1, "backends disagree"
        print("  outputs identical across backends")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d-model", type=int, default=256)
    ap.add_argument("--heads", type=int, default=8)
    ap.add_argument("--seq-len", type=int, default=64)
    ap.add_argument("--layers", type=int, default=2)
    ap.add_argument("--ts-mha", type=int, default=64)
    ap.add_argument("--ts-ffn", type=int, default=64)
    ap.add_argument("--iters", type=int, default=3)
    args = ap.parse_args()
    m = ModelConfig(d_model=args.d_model, num_heads=args.heads,
                    num_layers=args.layers, seq_len=args.seq_len)
    hw = HardwareConfig(ts_mha=args.ts_mha, ts_ffn=args.ts_ffn, clock_mhz=200.0,
                        fx_format=Q4_4, max_model=m)
    bench_kernels(args.iters)
    bench_forward(m, hw, args.iters)


if __name__ == "__main__":
    main()
