"""Time the numba and pure-numpy paths of each kernel on desk-scale inputs.

    python3 benchmarks/bench_kernels.py [--repeat 200]

Prints one row per kernel: median microseconds per call for each path and
the speed-up. Both paths are checked to agree before timing.
"""

import argparse
import timeit

import numpy as np

from rafm import _kernels as k


def cases(rng):
    feats = rng.normal(size=(256, 16))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    q = feats[17].copy()
    img = rng.uniform(-1, 1, size=(16, 16))
    a, b = np.sort(rng.normal(size=2000)), np.sort(rng.normal(size=1500) + 0.5)
    return {
        "top1_scan (K=256, F=16)": ((feats, 100, 256, q), k.top1_scan_jit, k.top1_scan_numpy),
        "box_mean (16x16, w=7)": ((img, 7), k.box_mean_jit, k.box_mean_numpy),
        "w2_sorted (2000 vs 1500)": ((a, b), k.w2_sorted_jit, k.w2_sorted_numpy),
        "patch_mean (16x16, p=2)": ((img, 2), k.patch_mean_jit, k.patch_mean_numpy),
    }


def median_us(fn, args, repeat):
    times = timeit.repeat(lambda: fn(*args), number=1, repeat=repeat)
    return 1e6 * float(np.median(times))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    args = p.parse_args(argv)
    if not k.HAS_NUMBA:
        print("numba is not installed; only the numpy path exists")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numba us':>12}{'numpy us':>12}{'speed-up':>10}")
    for name, (inputs, jit, ref) in cases(rng).items():
        # first call compiles; also confirms the two paths agree
        got, want = jit(*inputs), ref(*inputs)
        if isinstance(want, tuple):
            assert int(got[0]) == int(want[0]), name
        else:
            np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-13, err_msg=name)
        t_jit, t_ref = median_us(jit, inputs, args.repeat), median_us(ref, inputs, args.repeat)
        print(f"{name:<28}{t_jit:>12.1f}{t_ref:>12.1f}{t_ref / t_jit:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
