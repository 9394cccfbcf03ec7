"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--points 50] [--repeat 3]

Each row times one kernel over the same inputs on both backends and reports
the speedup plus the largest output difference.
"""

import argparse
import time

import numpy as np

from boundprint import kernels
from boundprint.nn import init_network


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(net, points, rng):
    X = rng.random((points, net.input_dim))
    dz = rng.standard_normal((points, net.num_classes))
    pairs = []
    for x in X:
        z = kernels.backend_module("python").forward(net.packed, x)
        i = int(np.argmax(z))
        pairs.append((i, int(np.argmin(z)) if int(np.argmin(z)) != i else (i + 1) % len(z)))
    p = net.packed
    return {
        "forward": lambda m: [m.forward(p, x) for x in X],
        "grad_input": lambda m: [m.grad_input(p, x, g) for x, g in zip(X, dz)],
        "ipguard_descend": lambda m: [m.ipguard_descend(p, x, i, j, 0.5, 0.001, 1000, 0.9, 0.999, 1e-8)[0]
                                      for x, (i, j) in zip(X, pairs)],
        "igsm_attack": lambda m: [m.igsm_attack(p, x, j, 0.1, 1 / 255, 100)[0] for x, (_, j) in zip(X, pairs)],
        "cw_attack": lambda m: [m.cw_attack(p, x, j, 0.0, 0.01, 100, 3, 1.0, 0.9, 0.999, 1e-8)[0]
                                for x, (_, j) in zip(X[:max(1, len(X) // 5)], pairs)],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sizes", default="8,32,32,4", help="comma-separated layer sizes")
    args = ap.parse_args()

    try:
        compiled = kernels.backend_module("compiled")
    except ImportError:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    python = kernels.backend_module("python")
    net = init_network([int(s) for s in args.sizes.split(",")], seed=0)
    rng = np.random.default_rng(0)

    print(f"network {net.layer_sizes}, {args.points} points, best of {args.repeat}")
    print(f"{'kernel':<16} {'python s':>10} {'compiled s':>11} {'speedup':>8} {'max |diff|':>11}")
    for name, run in cases(net, args.points, rng).items():
        t_py, out_py = best_of(lambda: run(python), args.repeat)
        t_cc, out_cc = best_of(lambda: run(compiled), args.repeat)
        diff = max(float(np.max(np.abs(a - b))) for a, b in zip(out_py, out_cc))
        print(f"{name:<16} {t_py:>10.4f} {t_cc:>11.4f} {t_py / t_cc:>7.1f}x {diff:>11.1e}")


if __name__ == "__main__":
    main()
