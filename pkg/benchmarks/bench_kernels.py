"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each row reports the best-of-``repeat`` wall time per call for both
backends and the speed-up. Kernel rows call the kernel directly; the
``end-to-end`` rows run the library routine that spends most of its time in
that kernel, with the package-level kernel names pointed at one backend.
"""

from __future__ import annotations

import argparse
import contextlib
import timeit

import numpy as np

from ivsforecast import dynamics, kernels, mcs, tree

KERNEL_NAMES = ("ets_filter", "ets_sse_grad", "arma_css", "best_split", "block_bootstrap_means")


@contextlib.contextmanager
def routed(backend: str):
    """Point ``ivsforecast.kernels`` at one backend for the duration of the block."""
    mod = kernels.backend_module(backend)
    saved = {name: getattr(kernels, name) for name in KERNEL_NAMES}
    try:
        for name in KERNEL_NAMES:
            setattr(kernels, name, getattr(mod, name))
        yield mod
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def kernel_cases(n: int, rng: np.random.Generator) -> dict:
    y = np.cumsum(rng.standard_normal(n)) * 0.01 + 0.3
    u = rng.standard_normal(n)
    x = np.sort(rng.uniform(85, 115, n))
    resp = rng.standard_normal(n)
    losses = rng.chisquare(2, size=(500, 11))
    starts = rng.integers(0, 496, size=(1000, 100))
    return {
        "ets_filter": lambda k: k.ets_filter(y, 0.3, 0.1, 0.95, y[0], 0.0, 2),
        "ets_sse_grad": lambda k: k.ets_sse_grad(y, 0.3, 0.1, 0.95, y[0], 0.0, 2),
        "arma_css": lambda k: k.arma_css(u, np.array([0.5, -0.2]), np.array([0.3]), True, True),
        "best_split": lambda k: k.best_split(x, resp - resp.mean(), 5),
        "block_bootstrap_means": lambda k: k.block_bootstrap_means(losses, starts, 5),
    }


def end_to_end_cases(n: int, rng: np.random.Generator) -> dict:
    y = np.cumsum(rng.standard_normal(n)) * 0.01 + 0.3
    m = rng.uniform(85, 115, 1200)
    tau = rng.uniform(1 / 12, 2, 1200)
    iv = 0.3 + 0.0002 * (m - 100) ** 2 + 0.05 * tau + 0.01 * rng.standard_normal(1200)
    losses = mcs.LossMatrix(rng.chisquare(2, size=(500, 11)) * 0.1, tuple(f"M{i}" for i in range(11)))
    return {
        "fit_ets": lambda: dynamics.fit_ets(y),
        "fit_arima": lambda: dynamics.fit_arima(y, 3, 2, 1),
        "grow_tree": lambda: tree.grow_tree((m, tau, iv)),
        "run_mcs (1000 reps)": lambda: mcs.run_mcs(losses, n_boot=1000, seed=0, block_len=3),
    }


def best_time(fn, repeat: int) -> float:
    number = max(1, int(0.2 / max(min(timeit.repeat(fn, number=1, repeat=2)), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--n", type=int, default=1000, help="series length for the kernel inputs")
    parser.add_argument("--quick", action="store_true", help="kernels only, skip end-to-end rows")
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not importable; timing the numpy fallback only")
    print(f"default backend: {kernels.BACKEND}")
    header = f"{'case':<28}" + "".join(f"{b + ' (ms)':>16}" for b in backends)
    header += f"{'speed-up':>12}" if len(backends) > 1 else ""
    print(header)
    print("-" * len(header))

    def row(name, times):
        line = f"{name:<28}" + "".join(f"{1e3 * t:>16.4f}" for t in times)
        if len(times) > 1:
            line += f"{times[-1] / times[0]:>11.1f}x"
        print(line)

    for name, call in kernel_cases(args.n, np.random.default_rng(0)).items():
        row(name, [best_time(lambda: call(kernels.backend_module(b)), args.repeat) for b in backends])
    if args.quick:
        return
    for name, call in end_to_end_cases(args.n, np.random.default_rng(1)).items():
        times = []
        for b in backends:
            with routed(b):
                times.append(best_time(call, min(args.repeat, 3)))
        row(f"end-to-end {name}", times)


if __name__ == "__main__":
    main()
