"""Time the compiled pairwise critic kernel against the numpy fallback.

Runs forward and backward for a ReLU first layer at the benchmark's native
shape (N=128 rows per side, d=128 inputs per side, 256 hidden units) and
checks that both backends agree before timing them.

    python3 benchmarks/bench_pair_kernel.py [--N 128] [--d 128] [--hidden 256] [--repeat 20]
"""

import argparse
import sys
import timeit

import numpy as np

from mi_lab import kernels


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=128)
    ap.add_argument("--d", type=int, default=128)
    ap.add_argument("--hidden", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    if kernels.compiled_pair_forward is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1

    rng = np.random.default_rng(0)
    # first-layer projections of the x and y halves, as the critic computes them
    A = rng.normal(size=(args.N, args.hidden))
    B = rng.normal(size=(args.N, args.hidden))
    w = rng.normal(size=args.hidden) / np.sqrt(args.hidden)
    b = 0.1
    G = rng.normal(size=(args.N, args.N))
    relu = kernels.ACT_CODES["relu"]

    backends = {
        "compiled": (kernels.compiled_pair_forward, kernels.compiled_pair_backward),
        "python": (kernels.py_pair_forward, kernels.py_pair_backward),
    }
    ref_f = kernels.py_pair_forward(A, B, w, b, relu)
    ref_b = kernels.py_pair_backward(A, B, w, G, relu)
    for name, (fwd, bwd) in backends.items():
        np.testing.assert_allclose(fwd(A, B, w, b, relu), ref_f, rtol=1e-10, atol=1e-10)
        for got, want in zip(bwd(A, B, w, G, relu), ref_b):
            np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-10)

    print(f"pair kernel, N={args.N}, hidden={args.hidden}, best of {args.repeat} (ms)")
    print(f"{'backend':<10} {'forward':>9} {'backward':>9}")
    times = {}
    for name, (fwd, bwd) in backends.items():
        tf = min(timeit.repeat(lambda: fwd(A, B, w, b, relu), number=1, repeat=args.repeat))
        tb = min(timeit.repeat(lambda: bwd(A, B, w, G, relu), number=1, repeat=args.repeat))
        times[name] = (tf, tb)
        print(f"{name:<10} {1e3 * tf:9.3f} {1e3 * tb:9.3f}")
    (cf, cb), (pf, pb) = times["compiled"], times["python"]
    print(f"speedup    {pf / cf:8.2f}x {pb / cb:8.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
