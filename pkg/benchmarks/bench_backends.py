"""Benchmark the compiled core against the pure-numpy fallback.

Run: python3 benchmarks/bench_backends.py
"""

import time

import numpy as np

from wncs._core import _pure, available_backends
from wncs.plant import mountain_car


def _timeit(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_rollout(impl, n_episodes=200, horizon=200):
    model = mountain_car()
    rng = np.random.default_rng(0)
    Wm = np.array([[-0.4, -0.8, 0.0]])
    sigma = np.ones(1)
    lo, hi = np.array([-10.0]), np.array([10.0])
    wn = rng.standard_normal((horizon, 2)) * np.sqrt(0.02)
    an = rng.standard_normal((horizon, 1))
    x0 = np.array([-1.5, 0.0])

    def run():
        for _ in range(n_episodes):
            impl.policy_rollout(
                model.A, model.B, model.Q, model.Y, model.eta, False,
                Wm, sigma, lo, hi, x0, wn, an, 100.0,
            )

    steps = n_episodes * horizon
    return steps / _timeit(run)


def bench_kernel(impl, n_calls=2000, n=10):
    ta = np.arange(float(n))

    def run():
        for _ in range(n_calls):
            impl.periodic_kernel_matrix(ta, ta, 1.0, 1.0, 20.0)

    return n_calls / _timeit(run)


def main():
    impls = [("python", _pure)]
    if "cython" in available_backends():
        from wncs._core import _speedups

        impls.insert(0, ("cython", _speedups))

    print(f"{'backend':>8} {'rollout steps/s':>18} {'kernel matrices/s':>20}")
    rates = {}
    for name, impl in impls:
        r = bench_rollout(impl)
        k = bench_kernel(impl)
        rates[name] = (r, k)
        print(f"{name:>8} {r:>18.3g} {k:>20.3g}")
    if len(rates) == 2:
        cy, py = rates["cython"], rates["python"]
        print(f"\nspeedup: rollout x{cy[0] / py[0]:.1f}, kernel x{cy[1] / py[1]:.1f}")


if __name__ == "__main__":
    main()
