#!/usr/bin/env python3
"""Benchmark the numba-compiled kernels against the pure-Python fallback.

Runs the hot kernels (s-t max flow, per-polygon quality scoring, kernel
clipping) on synthetic workloads in this process, then re-executes itself
with POLYAGG_NO_NUMBA=1 so the fallback lane is timed under identical
conditions, and prints the comparison.

Usage: python benchmarks/bench_kernels.py [--inner]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def synth_polygons(n_polys, rng):
    polys = []
    for _ in range(n_polys):
        n = int(rng.integers(4, 12))
        ang = np.sort(rng.random(n) * 2 * np.pi)
        rad = 0.4 + rng.random(n)
        polys.append(
            np.ascontiguousarray(
                np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
            )
        )
    return polys


def synth_cut_problems(n_probs, rng):
    probs = []
    for _ in range(n_probs):
        n = int(rng.integers(2, 40))
        cap_s = rng.integers(0, 1000, n).astype(np.int64)
        cap_t = rng.integers(0, 1000, n).astype(np.int64)
        m = 2 * n
        eu = rng.integers(0, n, m).astype(np.int64)
        ev = rng.integers(0, n, m).astype(np.int64)
        keep = eu != ev
        probs.append(
            (cap_s, cap_t, eu[keep], ev[keep],
             rng.integers(0, 500, int(keep.sum())).astype(np.int64))
        )
    return probs


def run_benchmarks():
    from polyagg import _kernels

    rng = np.random.default_rng(7)
    polys = synth_polygons(2000, rng)
    probs = synth_cut_problems(3000, rng)

    # warm-up triggers JIT compilation outside the timed region
    _kernels.quality_scores(polys[0], 1e-9, 1e-14)
    _kernels.kernel_polygon(polys[0], 1e-12)
    _kernels.maxflow(*probs[0])

    out = {"numba": bool(_kernels.NUMBA_ENABLED)}

    t0 = time.perf_counter()
    acc = 0.0
    for p in polys:
        acc += _kernels.quality_scores(p, 1e-9, 1e-14)[4]
    out["quality_scores_ms"] = 1000 * (time.perf_counter() - t0)
    out["quality_checksum"] = acc

    t0 = time.perf_counter()
    acc = 0.0
    for p in polys:
        kern = _kernels.kernel_polygon(p, 1e-12)
        if len(kern) >= 3:
            acc += _kernels.signed_area(kern)
    out["kernel_clip_ms"] = 1000 * (time.perf_counter() - t0)
    out["kernel_checksum"] = acc

    t0 = time.perf_counter()
    total = 0
    for args in probs:
        flow, _ = _kernels.maxflow(*args)
        total += int(flow)
    out["maxflow_ms"] = 1000 * (time.perf_counter() - t0)
    out["maxflow_checksum"] = total
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--inner", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    res = run_benchmarks()
    if args.inner:
        print(json.dumps(res))
        return

    env = dict(os.environ, POLYAGG_NO_NUMBA="1")
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--inner"],
        env=env, capture_output=True, text=True, check=True,
    )
    fallback = json.loads(proc.stdout.strip().splitlines()[-1])

    for check in ("quality_checksum", "kernel_checksum", "maxflow_checksum"):
        if res[check] != fallback[check]:
            raise SystemExit(f"lane mismatch on {check}: "
                             f"{res[check]} vs {fallback[check]}")

    lane = "numba" if res["numba"] else "python"
    print(f"primary lane: {lane}; fallback lane: python "
          f"(checksums identical)\n")
    print(f"{'kernel':<18}{lane + ' [ms]':>14}{'python [ms]':>14}{'speedup':>10}")
    for name in ("quality_scores", "kernel_clip", "maxflow"):
        a = res[f"{name}_ms"]
        b = fallback[f"{name}_ms"]
        print(f"{name:<18}{a:>14.1f}{b:>14.1f}{b / a:>10.1f}x")


if __name__ == "__main__":
    main()
