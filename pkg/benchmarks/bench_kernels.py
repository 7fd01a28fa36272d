"""Benchmark the compiled kernels against the pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from chargerank._kernels import load_backend


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_clip(backend, rng, n_pairs=2000):
    from scipy.spatial import ConvexHull

    pairs = []
    for _ in range(n_pairs):
        a = rng.normal(size=(12, 2))
        b = rng.normal(size=(10, 2)) + rng.normal(scale=0.4, size=2)
        pairs.append((np.ascontiguousarray(a[ConvexHull(a).vertices]),
                      np.ascontiguousarray(b[ConvexHull(b).vertices])))

    def run():
        total = 0.0
        for a, b in pairs:
            total += backend.convex_clip_area(a, b)
        return total

    return run


def bench_split(backend, rng, n=1200, p=120, n_nodes=200):
    X = np.asfortranarray(rng.normal(size=(n, p)))
    sort_idx = np.asfortranarray(np.argsort(X, axis=0, kind="stable"),
                                 dtype=np.int32)
    y = rng.normal(size=n)
    counts = np.ones(n)
    feats = np.arange(p, dtype=np.int64)
    masks = [(rng.random(n) < 0.5).astype(np.uint8) for _ in range(n_nodes)]
    stats = []
    for mask in masks:
        rows = np.nonzero((mask != 0) & (counts > 0))[0]
        cnt = counts[rows]
        total = float(np.cumsum(cnt)[-1])
        s = float(np.cumsum(cnt * y[rows])[-1])
        stats.append((total, s, s * s / total))

    def run():
        for mask, (total, s, parent) in zip(masks, stats):
            backend.best_split(X, sort_idx, mask, y, counts, feats,
                               total, s, parent, 5.0)

    return run


def bench_lasso(backend, rng, n=864, p=150):
    X = rng.normal(size=(n, p))
    X[:, :20] += rng.normal(size=(n, 1)) * 0.5
    X = np.asfortranarray((X - X.mean(0)) / X.std(0))
    beta = np.zeros(p)
    beta[rng.choice(p, 10, replace=False)] = rng.normal(0, 1.5, 10)
    y = (rng.random(n) < 1 / (1 + np.exp(-(X @ beta)))).astype(float)
    lams = np.ascontiguousarray(
        np.array([10.0 ** (-4 + 0.015 * i) for i in range(201)])[::-1])

    def run():
        backend.logistic_lasso_path(X, y, lams, obj_tol=1e-5, max_sweeps=100)

    return run


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = {}
    for name in ("pure", "compiled"):
        try:
            backends[name] = load_backend(name)
        except ImportError:
            print(f"{name} backend unavailable, skipping")
    cases = {
        "convex_clip_area (2000 polygon pairs)": bench_clip,
        "best_split (200 nodes, n=1200, p=120)": bench_split,
        "logistic_lasso_path (201-lambda CV path, n=864, p=150)": bench_lasso,
    }
    print(f"{'kernel':55s}  {'pure':>10s}  {'compiled':>10s}  {'speedup':>8s}")
    for label, factory in cases.items():
        times = {}
        for name, backend in backends.items():
            rng = np.random.default_rng(0)
            times[name] = _time(factory(backend, rng), args.repeat)
        pure_t = times.get("pure", float("nan"))
        comp_t = times.get("compiled", float("nan"))
        speedup = pure_t / comp_t if comp_t == comp_t and comp_t > 0 else float("nan")
        print(f"{label:55s}  {pure_t:9.3f}s  {comp_t:9.3f}s  {speedup:7.1f}x")


if __name__ == "__main__":
    main()
