"""Time the numba and numpy variants of the dynamic-programming kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both variants are imported directly, so the AUD_DISABLE_NUMBA flag does not
matter here. The first numba call (compilation) is excluded from the timings.
"""
import argparse
import time

import numpy as np

from aud import kernels


def _time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _cases(rng):
    a = rng.normal(size=(80, 39))
    b = rng.normal(size=(95, 39))
    cost = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    yield "dtw 80x95 symmetric2", kernels.dtw_jit, kernels.dtw_numpy, (cost, 2, 20)

    N = 3 * 30 + 1
    logb = rng.normal(size=(400, N))
    p = rng.uniform(0.3, 0.9, N)
    ls, ln = np.log(p), np.log1p(-p)
    yield "viterbi chain T=400 N=91", kernels.viterbi_chain_jit, kernels.viterbi_chain_numpy, \
        (logb, ls, ln)

    first = np.append(np.arange(0, N - 1, 3), N - 1).astype(np.int64)
    last = np.append(np.arange(2, N - 1, 3), N - 1).astype(np.int64)
    yield "viterbi loop T=400 31 units", kernels.viterbi_network_jit, \
        kernels.viterbi_network_numpy, (logb, ls, ln, first, last, -1.0)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':30s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}  same")
    for name, jit, ref, inputs in _cases(rng):
        jit(*inputs)  # compile
        tj, oj = _time(jit, inputs, args.repeat)
        tn, on = _time(ref, inputs, args.repeat)
        same = all(np.array_equal(x, y) for x, y in zip(oj, on))
        print(f"{name:30s} {tj * 1e3:10.3f} {tn * 1e3:10.3f} {tn / tj:8.1f}x  {same}")


if __name__ == "__main__":
    main()
