"""Spectral time integration of the McKean-Vlasov equation on the torus.

    d rho/dt = beta^-1 rho'' + (V' rho)' + kappa ((W' * rho) rho)'

The state is the truncated Fourier spectrum ``|k| <= G/3`` (2/3 rule). Each
step is exponential Euler: diffusion is integrated exactly, the transport
term is explicit. Because the velocity has only a few modes the dealiased
pseudospectral product is exact, and the numba kernel evaluates the same
product as a banded convolution of coefficients.
"""
from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import BlowUp
from .field import DEFAULT_GRID, TorusDensity, UNIFORM_LEVEL, grid, trapezoid
from .potentials import ZERO, FourierPotential, convolve, sample

log = logging.getLogger(__name__)

DEFAULT_DT = 1e-3
TOL_STEADY = 1e-9
PROBE_INTERVAL = 1.0
BLOWUP_LEVEL = 1e6
# spectral truncation undershoots where the density is exponentially small;
# dips below -NEG_TOL * max are instability, smaller ones are clamped
NEG_TOL = 1e-6
MAX_HALVINGS = 10


@dataclass(frozen=True)
class PdeConfig:
    beta: float
    W: FourierPotential
    V: FourierPotential = ZERO
    kappa: float = 1.0
    G: int = DEFAULT_GRID
    dt: float = DEFAULT_DT
    t_final: float = 100.0
    snapshot_times: tuple = ()
    probe_interval: float = PROBE_INTERVAL
    tol_steady: float = TOL_STEADY
    stop_when_steady: bool = True

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least dt")
        if self.G < 32 or self.G % 2:
            raise ValueError("G must be even and >= 32")
        if self.n_velocity_modes > self.G // 2 - 1 - self.K:
            raise ValueError(f"potentials with {self.n_velocity_modes} modes need a larger grid than G={self.G}")
        object.__setattr__(self, "snapshot_times", tuple(sorted(float(t) for t in self.snapshot_times)))

    @property
    def K(self) -> int:
        """Highest retained Fourier mode."""
        return self.G // 3

    @property
    def n_velocity_modes(self) -> int:
        return max(self.V.n_modes, self.W.n_modes)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "kappa": self.kappa, "W": list(self.W.coeffs),
                "V": list(self.V.coeffs), "G": self.G, "dt": self.dt, "t_final": self.t_final,
                "snapshot_times": list(self.snapshot_times), "probe_interval": self.probe_interval,
                "tol_steady": self.tol_steady, "stop_when_steady": self.stop_when_steady}


@dataclass
class Trajectory:
    snapshots: list = field(default_factory=list)
    free_energy_series: list = field(default_factory=list)
    converged: bool = False
    steady_state: TorusDensity | None = None
    t_converged: float | None = None
    t_end: float = 0.0
    final: TorusDensity | None = None
    dt_used: float = DEFAULT_DT
    wall_time: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])

    def snapshot_at(self, t: float) -> TorusDensity:
        times = self.times
        return self.snapshots[int(np.argmin(np.abs(times - t)))][1]

    def manifest(self) -> dict:
        return {"converged": self.converged, "t_converged": self.t_converged, "t_end": self.t_end,
                "dt_used": self.dt_used, "wall_time": self.wall_time,
                "n_snapshots": len(self.snapshots)}


def default_initial(G: int = DEFAULT_GRID) -> TorusDensity:
    """``1/2pi + 0.01 sin(x - pi/2)``; the perturbation puts the first peak at ``pi``."""
    x = grid(G)
    return TorusDensity.from_values(UNIFORM_LEVEL + 0.01 * np.sin(x - np.pi / 2))


def free_energy(rho: TorusDensity, V, W: FourierPotential, beta: float, kappa: float = 1.0) -> float:
    """``beta^-1 int rho log rho + int V rho + kappa/2 int (W * rho) rho`` with ``0 log 0 = 0``."""
    v = rho.values
    ent = np.zeros_like(v)
    pos = v > 0
    ent[pos] = v[pos] * np.log(v[pos])
    G = rho.G
    energy = sample(V, G) + 0.5 * kappa * convolve(W, rho).on_grid(G)
    return float(trapezoid(ent) / beta + trapezoid(energy * v))


def _to_spectrum(rho: TorusDensity, K: int) -> np.ndarray:
    return np.array(rho.coefficients()[: K + 1], dtype=np.complex128)


def _to_density(c: np.ndarray, G: int, normalize: bool = True) -> TorusDensity:
    spec = np.zeros(G // 2 + 1, dtype=complex)
    spec[: c.size] = c
    vals = np.fft.irfft(spec, n=G) * G
    return TorusDensity.from_values(vals, normalize=normalize, eps_pos=NEG_TOL * np.max(np.abs(vals)))


def _grid_values(c, G):
    spec = np.zeros(G // 2 + 1, dtype=complex)
    spec[: c.size] = c
    return np.fft.irfft(spec, n=G) * G


class _Stepper:
    """Holds the precomputed factors for one ``(config, dt)`` pair."""

    def __init__(self, cfg: PdeConfig, dt: float, backend=None):
        self.cfg = cfg
        self.dt = dt
        self.backend = backend
        self.E, self.P = kernels.etd_factors(cfg.K, cfg.beta, dt)
        self.vhat, self.wfac = kernels.velocity_factors(cfg.V.coeffs, cfg.W.coeffs, cfg.kappa)

    def advance(self, c, nsteps):
        return kernels.pde_advance(c, nsteps, self.E, self.P, self.vhat, self.wfac,
                                   self.cfg.G, backend=self.backend)


def _blown_up(values) -> bool:
    if not np.all(np.isfinite(values)):
        return True
    top = np.max(np.abs(values))
    return top > BLOWUP_LEVEL or values.min() < -NEG_TOL * top


def _unresolved(c) -> bool:
    """Top tenth of the retained modes still carries more than 1e-10 of the mass mode."""
    if not np.all(np.isfinite(c)):
        return False
    tail = np.abs(c[-max(1, c.size // 10):]).max()
    return tail > 1e-10 * abs(c[0])


def _density(values) -> TorusDensity:
    return TorusDensity.from_values(values, eps_pos=NEG_TOL * np.max(np.abs(values)))


def step(rho: TorusDensity, cfg: PdeConfig, backend=None) -> TorusDensity:
    """Advance ``rho`` by one time step ``cfg.dt``."""
    if rho.G != cfg.G:
        rho = rho.with_grid(cfg.G)
    c = _to_spectrum(rho, cfg.K)
    new, done = _Stepper(cfg, cfg.dt, backend).advance(c, 1)
    vals = _grid_values(new, cfg.G)
    if done < 1 or _blown_up(vals):
        raise BlowUp("state blew up after one step", time=cfg.dt)
    return _density(vals)


def _checkpoints(cfg: PdeConfig):
    """Sorted event times: probes, snapshots and the horizon."""
    probes = np.arange(cfg.probe_interval, cfg.t_final + 1e-12, cfg.probe_interval)
    times = set(np.round(probes, 12).tolist())
    times.update(t for t in cfg.snapshot_times if 0.0 < t <= cfg.t_final)
    times.add(round(cfg.t_final, 12))
    return sorted(times)


def evolve(rho0: TorusDensity, cfg: PdeConfig, backend=None) -> Trajectory:
    """Integrate from ``rho0`` to ``cfg.t_final``.

    Free energy is recorded at every probe and snapshot time. The run is
    declared converged once ``|rho(t + d) - rho(t)|_inf / d < tol_steady`` for
    the probe interval ``d``; with ``stop_when_steady`` it then stops early.
    If the state blows up the time step is halved (up to ten times) and the
    offending interval repeated; after that :class:`BlowUp` is raised.
    """
    t0 = _time.perf_counter()
    G, K = cfg.G, cfg.K
    if rho0.G != G:
        rho0 = rho0.with_grid(G)
    dt = cfg.dt
    stepper = _Stepper(cfg, dt, backend)
    c = _to_spectrum(rho0, K)
    traj = Trajectory(dt_used=dt)
    snap_set = {round(t, 12) for t in cfg.snapshot_times}

    def record(t, c, rho=None):
        rho = rho if rho is not None else _to_density(c, G)
        traj.free_energy_series.append((t, free_energy(rho, cfg.V, cfg.W, cfg.beta, cfg.kappa)))
        return rho

    rho = record(0.0, c, rho0)
    if 0.0 in snap_set:
        traj.snapshots.append((0.0, rho0))
    probe_vals = rho0.values.copy()
    probe_t = 0.0
    t = 0.0
    halvings = 0
    for target in _checkpoints(cfg):
        while True:
            nsteps = max(1, int(round((target - t) / stepper.dt)))
            new, done = stepper.advance(c, nsteps)
            vals = _grid_values(new, G) if done == nsteps else None
            if vals is not None and not _blown_up(vals):
                break
            halvings += 1
            if halvings > MAX_HALVINGS:
                hint = "; spectrum unresolved, increase G" if _unresolved(new) else ""
                raise BlowUp(f"solution blew up near t={t:.6g} even with dt={stepper.dt:.3g}{hint}", time=t)
            log.warning("blow-up near t=%.6g, halving dt to %.3g", t, stepper.dt / 2)
            stepper = _Stepper(cfg, stepper.dt / 2, backend)
            traj.dt_used = stepper.dt
        c = new
        t = target
        rho = _density(vals)
        record(t, c, rho)
        if t in snap_set:
            traj.snapshots.append((t, rho))
        if t - probe_t >= cfg.probe_interval - 1e-9:
            rate = np.max(np.abs(vals - probe_vals)) / (t - probe_t)
            probe_vals = vals
            probe_t = t
            if not traj.converged and rate < cfg.tol_steady:
                traj.converged = True
                traj.t_converged = t
                traj.steady_state = rho
                if cfg.stop_when_steady:
                    break
    traj.t_end = t
    traj.final = rho
    if traj.converged and traj.steady_state is None:
        traj.steady_state = rho
    traj.wall_time = _time.perf_counter() - t0
    return traj


def evolve_many(rho0: TorusDensity, cfgs, backend=None) -> list:
    """Independent runs for a parameter sweep (sequential; each run is self-contained)."""
    return [evolve(rho0, cfg, backend=backend) for cfg in cfgs]


def with_beta(cfg: PdeConfig, beta: float) -> PdeConfig:
    return replace(cfg, beta=beta)
