#!/usr/bin/env python3
"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is fixed at
import time (``FSD_DISABLE_NUMBA``).  Numba timings exclude compilation:
every kernel is warmed up on a small input first.

    python3 benchmarks/bench_kernels.py --points 10000 --queries 1000
"""
import argparse
import json
import os
import subprocess
import sys
import time


def _time(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def worker(points: int, queries: int, seed: int) -> dict:
    import numpy as np

    from fsd.geomatch import BACKEND, RTree, query_boxes
    from fsd.geomatch import _kernels as K

    rng = np.random.default_rng(seed)
    lats = rng.uniform(32.0, 32.2, points)
    lons = rng.uniform(34.7, 34.9, points)
    qlat = rng.uniform(32.0, 32.2, queries)
    qlon = rng.uniform(34.7, 34.9, queries)
    radius = rng.uniform(100.0, 2000.0, queries)
    out = np.empty(points, np.int64)
    out_d = np.empty(points, np.float64)

    def build():
        t = RTree()
        for la, lo in zip(lats.tolist(), lons.tolist()):
            t.add((lo, la, lo, la))
        return t

    # warm-up (compiles under numba)
    small = RTree()
    small.add((0.0, 0.0, 0.0, 0.0))
    small.query_within(query_boxes(0.0, 0.0, 10.0), 0.0, 0.0, 10.0)
    small.remove(0)
    K.scan_within(0.0, 0.0, lats[:4], lons[:4], 1.0, out, out_d)

    tree = build()
    boxes = [query_boxes(a, b, r) for a, b, r in zip(qlat.tolist(), qlon.tolist(), radius.tolist())]

    def tree_queries():
        for i in range(queries):
            tree.query_within(boxes[i], qlat[i], qlon[i], radius[i])

    def scans():
        for i in range(queries):
            K.scan_within(qlat[i], qlon[i], lats, lons, radius[i], out, out_d)

    def moves():
        for slot in range(min(points, 2000)):
            la, lo = lats[slot] + 1e-3, lons[slot] - 1e-3
            tree.move(slot, (lo, la, lo, la))

    return {
        "backend": BACKEND,
        "points": points,
        "queries": queries,
        "build_s": _time(build, 1),
        "tree_query_s": _time(tree_queries),
        "scan_query_s": _time(scans),
        "move_2000_s": _time(moves, 1),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=10_000)
    ap.add_argument("--queries", type=int, default=1_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", action="store_true", help="print raw JSON results")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.worker:
        print(json.dumps(worker(args.points, args.queries, args.seed)))
        return

    results = []
    for disable in ("0", "1"):
        env = dict(os.environ, FSD_DISABLE_NUMBA=disable)
        cmd = [sys.executable, __file__, "--worker", "--points", str(args.points),
               "--queries", str(args.queries), "--seed", str(args.seed)]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        results.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    if args.json:
        print(json.dumps(results, indent=2))
        return
    keys = ["build_s", "tree_query_s", "scan_query_s", "move_2000_s"]
    print(f"{args.points} points, {args.queries} queries")
    print(f"{'metric':<16}" + "".join(f"{r['backend']:>12}" for r in results) + f"{'speedup':>10}")
    for k in keys:
        a, b = results[0][k], results[1][k]
        print(f"{k:<16}{a:>12.4f}{b:>12.4f}{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
