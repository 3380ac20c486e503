"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Compilation is excluded: each numba kernel is called once before timing.
"""
import argparse
import time

import numpy as np

from mvtorus import kernels
from mvtorus.particles import SdeConfig
from mvtorus.pde import PdeConfig, default_initial, _to_spectrum
from mvtorus.potentials import FourierPotential


def best_of(fn, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)


def cases():
    W = FourierPotential((-1.0, -2.0))
    cfg = PdeConfig(beta=2.0, W=W)
    E, P = kernels.etd_factors(cfg.K, cfg.beta, cfg.dt)
    vhat, wfac = kernels.velocity_factors(cfg.V.coeffs, W.coeffs, 1.0)
    c = _to_spectrum(default_initial(cfg.G), cfg.K)
    yield "pde_advance G=256 x1000 steps", lambda b: kernels.pde_advance(c, 1000, E, P, vhat, wfac, cfg.G, b)

    rng = np.random.default_rng(0)
    N = 500
    scfg = SdeConfig(beta=3.0, W=FourierPotential((-1.0,)), N=N)
    kv, ka = kernels.drift_factors(scfg.V.coeffs, scfg.W.coeffs, 1.0, N)
    x = rng.uniform(0, 2 * np.pi, N)
    noise = rng.standard_normal((2000, N))
    yield "em_advance N=500 x2000 steps", lambda b: kernels.em_advance(x, noise, scfg.dt, scfg.sigma, kv, ka, b)

    xs = rng.uniform(0, 2 * np.pi, 5000)
    yield "kde N=5000 G=256", lambda b: kernels.wrapped_gaussian_kde(xs, 256, 2 * np.pi / np.sqrt(5000), b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'kernel':34s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, fn in cases():
        fn("numba")  # compile
        tn = best_of(lambda: fn("numba"), args.repeat)
        tp = best_of(lambda: fn("numpy"), args.repeat)
        print(f"{name:34s} {tn:10.4f} {tp:10.4f} {tp / tn:8.1f}")


if __name__ == "__main__":
    main()
