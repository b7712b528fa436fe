"""Times the compiled Q-network kernels against the numpy fallback.

Run:  python3 benchmarks/bench_backends.py [--repeats 200]

Covers the three hot paths: single-state q-value lookup (the per-window
policy call), batched forward, and the fused loss/gradient step.
"""

import argparse
import time

import numpy as np

from adaptq.backend import available_backends, load_backend
from adaptq.qnet import QNetwork


def timeit(fn, repeats: int) -> float:
    fn()  # warm up (first call may JIT-load the extension)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--feature-dim", type=int, default=32)
    parser.add_argument("--actions", type=int, default=64)
    parser.add_argument("--batch", type=int, default=1000)
    args = parser.parse_args()

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend unavailable; timing numpy only")

    net = QNetwork(args.feature_dim, args.actions, seed=0)
    rng = np.random.default_rng(1)
    state = rng.normal(size=args.feature_dim)
    X = rng.normal(size=(args.batch, args.feature_dim))
    actions = rng.integers(0, args.actions, size=args.batch)
    targets = rng.normal(size=args.batch)

    cases = {
        "q_values (1 state)": lambda b: b.forward(state[None, :], *net.params),
        f"forward (batch {args.batch})": lambda b: b.forward(X, *net.params),
        f"train_grads (batch {args.batch})": lambda b: b.train_grads(
            X, actions, targets, *net.params, 1.0
        ),
    }

    results: dict[str, dict[str, float]] = {}
    for name in backends:
        backend = load_backend(name)
        results[name] = {
            case: timeit(lambda b=backend, f=fn: f(b), args.repeats)
            for case, fn in cases.items()
        }

    width = max(len(c) for c in cases)
    header = f"{'kernel':<{width}}" + "".join(f"  {n:>12}" for n in backends)
    if len(backends) > 1:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for case in cases:
        row = f"{case:<{width}}"
        for name in backends:
            row += f"  {results[name][case] * 1e6:>10.1f}us"
        if len(backends) > 1:
            row += f"  {results['numpy'][case] / results['cython'][case]:>7.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
