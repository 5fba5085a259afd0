"""Time the boosted-tree kernels: compiled path against the numpy twin.

Both paths are imported directly, so one process times both no matter
which one the library itself selected (that choice follows the
STRATDTE_NO_NUMBA environment variable at import). The script first
checks the two paths produce bit-identical trees and predictions on
every workload, then reports wall times.

Usage: python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from stratdte import _kernels

# (label, training rows, features, query rows) sized like the per-cell
# fits the cross-fitting loop actually issues
WORKLOADS = (
    ("small cell", 60, 20, 60),
    ("n=1000 cell", 250, 20, 250),
    ("n=5000 cell", 1250, 20, 1250),
)

N_ROUNDS = 100
MAX_DEPTH = 2
NU = 0.1
MIN_LEAF = 5


def _make_problem(rng, m, d, nq):
    x = rng.standard_normal((m, d))
    logits = x[:, 0] - 0.5 * x[:, 1] + 0.25 * x[:, 2] * x[:, 3]
    y = (rng.random(m) < 1.0 / (1.0 + np.exp(-logits))).astype(np.float64)
    xq = rng.standard_normal((nq, d))
    return x, y, xq


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timing repeats, best kept")
    args = parser.parse_args()

    if not _kernels.HAS_NUMBA:
        print("numba unavailable; only the numpy path can run here")
        return

    rng = np.random.default_rng(42)
    # trigger compilation outside the timed region
    x, y, xq = _make_problem(rng, 32, 4, 8)
    order = _kernels.presort(x)
    base, trees = _kernels.boost_fit_numba(x, order, y, 5, MAX_DEPTH, NU, MIN_LEAF)
    _kernels.boost_predict_numba(base, trees, NU, xq)

    rows = []
    for label, m, d, nq in WORKLOADS:
        x, y, xq = _make_problem(rng, m, d, nq)
        order = _kernels.presort(x)

        fit_nb, (base_nb, trees_nb) = _time(
            lambda: _kernels.boost_fit_numba(x, order, y, N_ROUNDS, MAX_DEPTH, NU, MIN_LEAF),
            args.repeats,
        )
        fit_np, (base_np, trees_np) = _time(
            lambda: _kernels.boost_fit_numpy(x, order, y, N_ROUNDS, MAX_DEPTH, NU, MIN_LEAF),
            args.repeats,
        )
        if base_nb != base_np or not np.array_equal(trees_nb, trees_np):
            raise SystemExit(f"{label}: fitted trees differ between paths")

        pred_nb, out_nb = _time(
            lambda: _kernels.boost_predict_numba(base_nb, trees_nb, NU, xq), args.repeats
        )
        pred_np, out_np = _time(
            lambda: _kernels.boost_predict_numpy(base_np, trees_np, NU, xq), args.repeats
        )
        if not np.array_equal(out_nb, out_np):
            raise SystemExit(f"{label}: predictions differ between paths")

        rows.append((label, m, fit_nb, fit_np, pred_nb, pred_np))

    print("paths agree bit for bit on every workload\n")
    header = f"{'workload':<14}{'rows':>6}{'fit numba':>12}{'fit numpy':>12}{'ratio':>8}{'pred numba':>12}{'pred numpy':>12}{'ratio':>8}"
    print(header)
    print("-" * len(header))
    for label, m, fnb, fnp, pnb, pnp in rows:
        print(
            f"{label:<14}{m:>6}{fnb * 1e3:>10.2f} ms{fnp * 1e3:>10.2f} ms"
            f"{fnp / fnb:>7.1f}x{pnb * 1e3:>10.3f} ms{pnp * 1e3:>10.3f} ms{pnp / pnb:>7.1f}x"
        )


if __name__ == "__main__":
    main()
