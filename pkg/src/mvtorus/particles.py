"""Interacting diffusions on the torus and their empirical densities.

    dx_i = -V'(x_i) dt - (kappa/N) sum_j W'(x_i - x_j) dt + sqrt(2/beta) dB_i

integrated with Euler-Maruyama. Every run owns a Philox stream keyed by its
seed; the initial draw and then the increments are taken from it in a fixed
order, so a run is a pure function of ``(config, seed, rho0)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import NonPositiveDensity
from .field import DEFAULT_GRID, TorusDensity, TWO_PI, grid
from .potentials import ZERO, FourierPotential

NOISE_CHUNK = 1 << 20  # normals drawn per block


@dataclass(frozen=True)
class SdeConfig:
    beta: float
    W: FourierPotential
    V: FourierPotential = ZERO
    kappa: float = 1.0
    N: int = 500
    dt: float = 0.01
    t_final: float = 200.0
    seed: int = 0
    n_runs: int = 1
    snapshot_times: tuple = ()

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("need at least two particles")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        object.__setattr__(self, "snapshot_times", tuple(sorted(float(t) for t in self.snapshot_times)))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def sigma(self) -> float:
        return float(np.sqrt(2.0 * self.dt / self.beta))

    def to_dict(self) -> dict:
        return {"beta": self.beta, "kappa": self.kappa, "W": list(self.W.coeffs),
                "V": list(self.V.coeffs), "N": self.N, "dt": self.dt, "t_final": self.t_final,
                "seed": self.seed, "n_runs": self.n_runs, "snapshot_times": list(self.snapshot_times)}


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray
    time: float = 0.0
    seed: int = 0
    step_count: int = 0

    def __post_init__(self):
        x = np.mod(np.asarray(self.positions, dtype=float), TWO_PI)
        x[x >= TWO_PI] -= TWO_PI
        x.setflags(write=False)
        object.__setattr__(self, "positions", x)

    @property
    def N(self) -> int:
        return self.positions.size

    def to_csv(self, path) -> None:
        from .field import write_csv
        write_csv(path, ("i", "x"), np.column_stack([np.arange(self.N), self.positions]))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


def _draw(rho0: TorusDensity, N: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw from the piecewise-linear interpolant of the grid samples."""
    v = rho0.values
    if np.any(v < 0):
        raise NonPositiveDensity("initial density has negative samples")
    G = v.size
    h = TWO_PI / G
    left = v
    right = np.roll(v, -1)
    cell = 0.5 * (left + right) * h
    cdf = np.concatenate([[0.0], np.cumsum(cell)])
    total = cdf[-1]
    if total <= 0:
        raise NonPositiveDensity("initial density has zero mass")
    u = rng.random(N) * total
    j = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, G - 1)
    # solve the quadratic for the position inside a cell with linear density
    a, b = left[j], right[j]
    target = u - cdf[j]
    slope = (b - a) / h
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = np.sqrt(np.maximum(a * a + 2.0 * slope * target, 0.0))
        s_lin = np.where(np.abs(slope) > 1e-14 * np.maximum(a, 1e-300),
                         (disc - a) / slope, target / np.where(a > 0, a, 1.0))
    s = np.clip(np.nan_to_num(s_lin), 0.0, h)
    return grid(G)[j] + s


def sample_initial(rho0: TorusDensity, N: int, seed: int = 0) -> ParticleEnsemble:
    """``N`` independent draws from ``rho0``; deterministic in ``seed``."""
    return ParticleEnsemble(_draw(rho0, N, make_rng(seed)), 0.0, seed, 0)


def _factors(cfg: SdeConfig, N: int):
    return kernels.drift_factors(cfg.V.coeffs, cfg.W.coeffs, cfg.kappa, N)


def drift(x, cfg: SdeConfig, backend=None) -> np.ndarray:
    """Deterministic drift for positions ``x`` (moment identity, ``O(N * modes)``)."""
    x = np.asarray(x, dtype=float)
    kv, ka = _factors(cfg, x.size)
    return kernels.particle_drift(x, kv, ka, backend)


def naive_drift(x, cfg: SdeConfig) -> np.ndarray:
    """Reference ``O(N^2)`` drift evaluated pair by pair."""
    x = np.asarray(x, dtype=float)
    diff = x[:, None] - x[None, :]
    inter = cfg.W.derivative(diff).sum(axis=1)
    return -cfg.V.derivative(x) - cfg.kappa / x.size * inter


def em_step(e: ParticleEnsemble, cfg: SdeConfig, noise=None, rng=None,
            backend=None) -> ParticleEnsemble:
    """One Euler-Maruyama step.

    ``noise`` supplies the ``N`` standard normals directly; otherwise they come
    from ``rng`` or, failing that, from a stream keyed by ``(seed, step_count)``.
    """
    if noise is None:
        if rng is None:
            rng = np.random.Generator(np.random.Philox(key=int(e.seed), counter=int(e.step_count)))
        noise = rng.standard_normal(e.N)
    noise = np.asarray(noise, dtype=float).reshape(1, e.N)
    kv, ka = _factors(cfg, e.N)
    x = kernels.em_advance(e.positions, noise, cfg.dt, cfg.sigma, kv, ka, backend)
    return ParticleEnsemble(x, e.time + cfg.dt, e.seed, e.step_count + 1)


def run(cfg: SdeConfig, rho0: TorusDensity, seed: int | None = None, backend=None) -> list:
    """Simulate one run; returns snapshots at ``cfg.snapshot_times`` plus the final state.

    Snapshot times are rounded to the nearest step. The initial ensemble is
    included when ``0`` is among the snapshot times.
    """
    seed = cfg.seed if seed is None else seed
    rng = make_rng(seed)
    N = cfg.N
    x = _draw(rho0, N, rng)
    kv, ka = _factors(cfg, N)
    total = cfg.n_steps
    stops = sorted({min(total, max(0, int(round(t / cfg.dt)))) for t in cfg.snapshot_times} | {total})
    chunk = max(1, NOISE_CHUNK // N)
    out = []
    done = 0
    for stop in stops:
        while done < stop:
            k = min(chunk, stop - done)
            noise = rng.standard_normal((k, N))
            x = kernels.em_advance(x, noise, cfg.dt, cfg.sigma, kv, ka, backend)
            done += k
        snap = ParticleEnsemble(x, done * cfg.dt, seed, done)
        if not out or out[-1].step_count != done:
            out.append(snap)
    return out


def empirical_density(e, G: int = DEFAULT_GRID, bandwidth: float | None = None,
                      backend=None) -> TorusDensity:
    """Wrapped-Gaussian kernel density estimate, bandwidth ``2pi/sqrt(N)`` by default."""
    x = e.positions if isinstance(e, ParticleEnsemble) else np.asarray(e, dtype=float)
    h = TWO_PI / np.sqrt(x.size) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    vals = kernels.wrapped_gaussian_kde(x, G, h, backend)
    return TorusDensity.from_values(vals)


def ensemble_average(cfg: SdeConfig, rho0: TorusDensity, seeds=None, G: int = DEFAULT_GRID,
                     bandwidth: float | None = None, backend=None) -> TorusDensity:
    """Mean of the final empirical densities of runs seeded ``1..n_runs`` (or ``seeds``).

    The default bandwidth is ``2pi/sqrt(N R)`` for ``R`` runs: the average pools
    ``N R`` samples, and the per-run width would dominate the error through bias.
    """
    seeds = list(range(1, cfg.n_runs + 1) if seeds is None else seeds)
    if bandwidth is None and seeds:
        bandwidth = TWO_PI / np.sqrt(cfg.N * len(seeds))
    final_only = replace(cfg, snapshot_times=())
    acc = np.zeros(G)
    n = 0
    for s in seeds:
        last = run(final_only, rho0, seed=s, backend=backend)[-1]
        acc += empirical_density(last, G, bandwidth, backend).values
        n += 1
    if n == 0:
        raise ValueError("need at least one seed")
    # an average of normalised densities is already normalised
    return TorusDensity.from_values(acc / n, normalize=False)
