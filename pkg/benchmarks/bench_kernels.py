"""Compare the numba kernels against the pure-numpy fallback.

The backend is fixed at import time by ``SEGAUG_NUMBA``, so each backend is
timed in its own subprocess and the parent prints a side-by-side table::

    python3 benchmarks/bench_kernels.py --repeat 5
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best_of(fn, repeat):
    fn()  # warm-up (triggers JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run_child(repeat: int, size: int) -> dict:
    from segaug import _kernels
    from segaug.autodiff import Tensor
    from segaug.autodiff.ops import conv2d

    rng = np.random.default_rng(0)
    out = {"backend": _kernels.backend()}

    n, c, k = 4, 32, 3
    xp = rng.standard_normal((n, c, size + 2, size + 2)).astype(np.float32)
    cols = _kernels.im2col(xp, k, k, 1, size, size)
    out["im2col"] = _best_of(lambda: _kernels.im2col(xp, k, k, 1, size, size), repeat)
    out["col2im"] = _best_of(lambda: _kernels.col2im(cols, xp.shape, k, k, 1, size, size), repeat)

    x = Tensor(rng.standard_normal((n, c, size, size)).astype(np.float32), requires_grad=True)
    w = Tensor(0.1 * rng.standard_normal((c, c, k, k)).astype(np.float32), requires_grad=True)

    def conv_step():
        y = conv2d(x, w, padding=1)
        y.sum().backward()

    out["conv2d fwd+bwd"] = _best_of(conv_step, repeat)

    ranks2 = 2 * np.arange(1, 21, dtype=np.int64)
    out["wilcoxon n=20"] = _best_of(lambda: _kernels.count_sign_assignments(ranks2, 120), repeat)
    return out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--size", type=int, default=64, help="spatial size of the conv benchmark")
    p.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args(argv)

    if args.child:
        print(json.dumps(run_child(args.repeat, args.size)))
        return 0

    results = {}
    for flag in ("1", "0"):
        env = dict(os.environ, SEGAUG_NUMBA=flag)
        cmd = [sys.executable, __file__, "--child", "--repeat", str(args.repeat), "--size", str(args.size)]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        res = json.loads(proc.stdout.strip().splitlines()[-1])
        results[res.pop("backend")] = res

    if "numba" not in results:
        print("numba is unavailable; only the numpy backend was timed")
    names = list(next(iter(results.values())))
    print(f"{'kernel':<18}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name in names:
        nb = results.get("numba", {}).get(name, float("nan"))
        npy = results["numpy"][name]
        print(f"{name:<18}{nb * 1e3:12.2f}{npy * 1e3:12.2f}{npy / nb:10.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
