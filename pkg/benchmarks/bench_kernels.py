"""Benchmark the compiled kernel backend against the pure-numpy reference.

Times the three hot kernels (GRU cell forward/backward, temporal-neighbor
gathering, isolation-forest traversal) by importing both backend modules
directly, after asserting they agree on the benchmark inputs.  With
``--fit`` it also times a full detector fit end-to-end in two fresh
subprocesses, selecting the backend via ``TGNSVDD_PURE_PY``.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--fit]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from tgnsvdd.baselines.iforest import fit_iforest
from tgnsvdd.kernels import pyref

try:
    from tgnsvdd.kernels import _cyext
except ImportError:  # pragma: no cover - benchmark still works uncompiled
    _cyext = None


def best_of(fn, repeat: int) -> float:
    """Best wall time over ``repeat`` runs, in seconds."""
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def make_workloads(rng):
    B, H, IN, NBR = 512, 64, 160, 10
    x = rng.normal(0, 1, (B, IN))
    h = rng.normal(0, 1, (B, H))
    w_ih = rng.normal(0, 0.1, (3 * H, IN))
    w_hh = rng.normal(0, 0.1, (3 * H, H))
    b_ih = rng.normal(0, 0.1, 3 * H)
    b_hh = rng.normal(0, 0.1, 3 * H)
    g = rng.normal(0, 1, (B, H))

    # random time-sorted CSR adjacency over 1000 nodes
    n_nodes, n_edges = 1000, 50_000
    counts = rng.multinomial(n_edges, np.full(n_nodes, 1.0 / n_nodes))
    ptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    nbr = rng.integers(0, n_nodes, n_edges)
    times = np.empty(n_edges)
    for v in range(n_nodes):
        times[ptr[v]:ptr[v + 1]] = np.sort(rng.uniform(0, 1000, counts[v]))
    eidx = rng.integers(0, n_edges, n_edges)
    nodes = rng.integers(0, n_nodes, B)
    t_query = rng.uniform(0, 1000, B)

    forest = fit_iforest(rng.normal(0, 1, (2048, 8)), seed=0)
    score_rows = np.ascontiguousarray(rng.normal(0, 1, (2000, 8)))

    return {
        "gru_forward": lambda K: K.gru_forward(x, h, w_ih, w_hh, b_ih, b_hh),
        "gru_backward": lambda K: K.gru_backward(
            K.gru_forward(x, h, w_ih, w_hh, b_ih, b_hh)[1], w_ih, w_hh, g
        ),
        "gather_neighbors": lambda K: K.gather_neighbors(
            ptr, nbr, times, eidx, nodes, t_query, NBR
        ),
        "ifor_paths": lambda K: K.ifor_paths(
            score_rows, forest.feature, forest.threshold,
            forest.left, forest.right, forest.adjust, forest.roots,
        ),
    }


def check_agreement(workloads) -> None:
    for name, call in workloads.items():
        a, b = call(pyref), call(_cyext)
        flat_a = a if isinstance(a, tuple) else (a,)
        flat_b = b if isinstance(b, tuple) else (b,)
        ok = all(
            np.allclose(u, v, rtol=1e-12, atol=1e-12)
            for u, v in zip(_arrays(flat_a), _arrays(flat_b))
        )
        status = "agree" if ok else "DISAGREE"
        print(f"  {name:<18} backends {status}")
        if not ok:
            raise SystemExit(f"backend mismatch in {name}")


def _arrays(objs):
    for obj in objs:
        if isinstance(obj, tuple):
            yield from _arrays(obj)
        else:
            yield np.asarray(obj)


FIT_SNIPPET = """
import time
import numpy as np
from tgnsvdd import svdd
from tgnsvdd.dataio import SynthConfig, synth_generate
from tgnsvdd.encoder import EncoderDims
from tgnsvdd.kernels import BACKEND

stream, _ = synth_generate(SynthConfig(
    n_nodes=30, n_benign_events=800, n_attack_events=0, seed=3))
cfg = svdd.FitConfig(dims=EncoderDims(d_m=32, d_t=16, p=16, d_e=8, heads=2),
                     epochs=5, batch_size=100, n_neighbors=10, seed=0)
t0 = time.perf_counter()
model = svdd.fit(stream, cfg)
dt = time.perf_counter() - t0
print(f"{BACKEND}: fit 800 events x 5 epochs in {dt:.2f}s "
      f"(final mean score {model.history['epoch_mean_score'][-1]:.6f})")
"""


def bench_fit() -> None:
    print("\nend-to-end fit (fresh subprocess per backend):")
    for env_val in ("", "1"):
        env = dict(os.environ)
        env.pop("TGNSVDD_PURE_PY", None)
        if env_val:
            env["TGNSVDD_PURE_PY"] = env_val
        out = subprocess.run(
            [sys.executable, "-c", FIT_SNIPPET], env=env, capture_output=True, text=True
        )
        sys.stdout.write("  " + (out.stdout.strip() or out.stderr.strip()) + "\n")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5, help="runs per kernel (best-of)")
    ap.add_argument("--fit", action="store_true", help="also time a full fit per backend")
    args = ap.parse_args(argv)

    workloads = make_workloads(np.random.default_rng(0))
    if _cyext is None:
        print("compiled backend unavailable; timing pure backend only")
        for name, call in workloads.items():
            t = best_of(lambda: call(pyref), args.repeat)
            print(f"  {name:<18} pure {t * 1e3:8.3f} ms")
        return 0

    print("agreement check:")
    check_agreement(workloads)

    print(f"\nkernel timings (best of {args.repeat}):")
    print(f"  {'kernel':<18} {'pure (ms)':>10} {'compiled (ms)':>14} {'speedup':>8}")
    for name, call in workloads.items():
        t_pure = best_of(lambda: call(pyref), args.repeat)
        t_comp = best_of(lambda: call(_cyext), args.repeat)
        print(f"  {name:<18} {t_pure * 1e3:10.3f} {t_comp * 1e3:14.3f} "
              f"{t_pure / t_comp:7.2f}x")

    if args.fit:
        bench_fit()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
