"""Time the compiled kernels against the pure-numpy fallback.

Runs the three hot kernels (forward noising, per-point loss reduction, and
the fused diagonal-Gaussian scorer) on classification-shaped batches and
prints per-call times plus the compiled/fallback speedup.  Agreement
between the backends is asserted before timing.

    python3 benchmarks/bench_kernels.py [--repeats 7] [--number 200]
"""

import argparse
import timeit

import numpy as np

from diffusion_classifier._kernels import LOSS_SQUARED_L2, _fallback

try:
    from diffusion_classifier._kernels import _core
except ImportError:
    _core = None


def _case(n, d, seed=42):
    rng = np.random.default_rng(seed)
    return {
        "x": rng.standard_normal(d),
        "mu": rng.standard_normal(d),
        "var": rng.uniform(0.2, 2.0, size=d),
        "ab": rng.uniform(0.01, 0.99, size=n),
        "eps": rng.standard_normal((n, d)),
        "eps_hat": rng.standard_normal((n, d)),
    }


def _calls(mod, c):
    return {
        "forward_noise_batch": lambda: mod.forward_noise_batch(
            c["x"], c["eps"], c["ab"]),
        "loss_points": lambda: mod.loss_points(
            c["eps"], c["eps_hat"], LOSS_SQUARED_L2),
        "diag_gauss_loss_points": lambda: mod.diag_gauss_loss_points(
            c["x"], c["mu"], c["var"], c["ab"], c["eps"], LOSS_SQUARED_L2),
    }


def _best_us(fn, repeats, number):
    times = timeit.repeat(fn, repeat=repeats, number=number)
    return 1e6 * min(times) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--number", type=int, default=200,
                    help="calls per timed repeat")
    args = ap.parse_args()

    if _core is None:
        print("compiled extension unavailable; timing the fallback only")
    shapes = [(64, 64), (256, 64), (64, 784), (1024, 784)]
    header = f"{'kernel':<24} {'N x d':>12} {'fallback':>12} " \
             f"{'compiled':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n, d in shapes:
        c = _case(n, d)
        fb = _calls(_fallback, c)
        co = _calls(_core, c) if _core is not None else None
        for name in fb:
            if co is not None:
                a, b = fb[name](), co[name]()
                assert np.allclose(a, b, rtol=1e-13, atol=1e-13), name
            t_fb = _best_us(fb[name], args.repeats, args.number)
            if co is None:
                print(f"{name:<24} {f'{n}x{d}':>12} {t_fb:>10.1f}us "
                      f"{'-':>12} {'-':>8}")
            else:
                t_co = _best_us(co[name], args.repeats, args.number)
                print(f"{name:<24} {f'{n}x{d}':>12} {t_fb:>10.1f}us "
                      f"{t_co:>10.1f}us {t_fb / t_co:>7.2f}x")


if __name__ == "__main__":
    main()
