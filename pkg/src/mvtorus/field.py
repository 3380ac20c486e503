"""Probability densities on the uniform torus grid.

Grid points are ``x_j = 2 pi j / G``. Every integral is the composite
trapezoidal rule, which on a periodic grid is ``(2 pi / G) * sum`` and is
spectrally accurate for smooth integrands.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, GridTooSmall, NonPositiveDensity, OverflowRisk
from .potentials import FourierPotential, TWO_PI, mean_field, sample

DEFAULT_GRID = 256
EPS_POS = 1e-10
PEAK_THRESHOLD = 0.05
EXPONENT_LIMIT = 700.0
UNIFORM_LEVEL = 1.0 / TWO_PI


def grid(G: int) -> np.ndarray:
    return TWO_PI * np.arange(G) / G


def trapezoid(values, axis=-1) -> np.ndarray:
    values = np.asarray(values)
    return TWO_PI * values.mean(axis=axis)


@dataclass(frozen=True, eq=False)
class TorusDensity:
    """Normalised density sampled on the uniform ``G`` grid.

    Construct through :meth:`from_values`, which clamps roundoff-level
    negativity, rejects genuinely negative samples and renormalises.
    """

    values: np.ndarray
    _rfft: np.ndarray

    @classmethod
    def from_values(cls, values, normalize: bool = True, eps_pos: float = EPS_POS) -> "TorusDensity":
        v = np.array(values, dtype=float)
        if v.ndim != 1:
            raise ValueError("density samples must be one-dimensional")
        G = v.size
        if G < 8 or G % 2:
            raise GridTooSmall(f"grid size must be even and >= 8, got {G}")
        if not np.all(np.isfinite(v)):
            raise ValueError("density has non-finite samples")
        if np.any(v < -eps_pos):
            raise NonPositiveDensity(f"density has samples below -{eps_pos:g} (min {v.min():.3e})")
        v[v < 0.0] = 0.0
        mass = trapezoid(v)
        if mass <= 0.0:
            raise NonPositiveDensity("density has zero mass")
        if normalize:
            v /= mass
        v.setflags(write=False)
        spec = np.fft.rfft(v)
        spec.setflags(write=False)
        return cls(v, spec)

    @property
    def G(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        return grid(self.G)

    @property
    def k_max(self) -> int:
        return self.G // 2 - 1

    @property
    def mass(self) -> float:
        return float(trapezoid(self.values))

    def coefficients(self) -> np.ndarray:
        """Complex Fourier coefficients ``(1/2pi) int rho e^{-ikx}`` for ``k = 0..G/2``."""
        return self._rfft / self.G

    def moments(self, k_max: int | None = None):
        """Cosine and sine moments ``C_k = int cos(kx) rho``, ``S_k = int sin(kx) rho``.

        Returned for ``k = 1..k_max`` (default ``G/2 - 1``).
        """
        if k_max is None:
            k_max = self.k_max
        if k_max > self.k_max:
            raise ValueError(f"moments available up to k={self.k_max} on this grid")
        h = TWO_PI / self.G
        spec = self._rfft[1: k_max + 1]
        return h * spec.real, -h * spec.imag

    def cos_moments(self, k_max: int) -> np.ndarray:
        return self.moments(k_max)[0]

    def integrate(self, f) -> float:
        """``int f(x) rho(x) dx`` for grid samples ``f``."""
        return float(trapezoid(np.asarray(f) * self.values))

    def shifted(self, steps: int) -> "TorusDensity":
        """Density translated by ``steps`` grid cells: ``rho(x - steps * h)``."""
        return TorusDensity.from_values(np.roll(self.values, steps), normalize=False)

    def with_grid(self, G: int) -> "TorusDensity":
        """Trigonometric interpolation onto another even grid."""
        if G == self.G:
            return self
        c = self.coefficients()
        # the Nyquist mode of the coarser grid is ambiguous and is dropped
        m = min(self.G, G) // 2
        out = np.zeros(G // 2 + 1, dtype=complex)
        out[:m] = c[:m]
        return TorusDensity.from_values(np.fft.irfft(out * G, n=G))

    def to_csv(self, path) -> None:
        write_csv(path, ("x", "rho"), np.column_stack([self.x, self.values]))

    def to_json(self, k_max: int = 16) -> dict:
        k_max = min(k_max, self.k_max)
        C, S = self.moments(k_max)
        return {"G": self.G, "x": self.x.tolist(), "rho": self.values.tolist(),
                "cos_moments": C.tolist(), "sin_moments": S.tolist()}

    @classmethod
    def from_csv(cls, path) -> "TorusDensity":
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        return cls.from_values(data[:, 1], normalize=False)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.atleast_2d(rows):
            w.writerow([f"{v:.17g}" for v in row])


def from_coefficients(mean: float, C, S, G: int = DEFAULT_GRID) -> TorusDensity:
    """Synthesize ``mean + (1/pi) sum_k (C_k cos kx + S_k sin kx)``.

    With ``mean = 1/2pi`` this inverts :meth:`TorusDensity.moments`.
    """
    x = grid(G)
    C = np.asarray(C, dtype=float)
    S = np.asarray(S, dtype=float)
    k = np.arange(1, C.size + 1)
    kx = np.multiply.outer(x, k)
    vals = mean + (np.cos(kx) @ C + np.sin(kx) @ S) / np.pi
    return TorusDensity.from_values(vals, normalize=False)


def uniform(G: int = DEFAULT_GRID) -> TorusDensity:
    if G < 8 or G % 2:
        raise GridTooSmall(f"grid size must be even and >= 8, got {G}")
    return TorusDensity.from_values(np.full(G, UNIFORM_LEVEL), normalize=False)


def boltzmann(potential_values, beta: float) -> TorusDensity:
    """Normalised ``exp(-beta * U)`` for grid samples ``U``."""
    U = np.asarray(potential_values, dtype=float)
    expo = -beta * (U - U.min())
    return TorusDensity.from_values(np.exp(expo))


def gibbs(V, W: FourierPotential, r, beta: float, kappa: float = 1.0,
          G: int = DEFAULT_GRID) -> TorusDensity:
    """Gibbs state ``exp(-beta (V + kappa sum_k a_k r_k cos kx)) / Z``.

    ``r`` holds the cosine order parameters. Raises :class:`OverflowRisk` when
    ``beta`` times the sup norm of the effective potential exceeds 700.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    U = sample(V, G) + mean_field(W, r, kappa).on_grid(G)
    if beta * np.max(np.abs(U)) > EXPONENT_LIMIT:
        raise OverflowRisk(f"beta * |U|_inf = {beta * np.max(np.abs(U)):.1f} exceeds {EXPONENT_LIMIT}")
    return boltzmann(U, beta)


def _check_same_grid(a: TorusDensity, b: TorusDensity):
    if a.G != b.G:
        raise GridMismatch(f"grids differ: {a.G} vs {b.G}")


def distance_l1(a: TorusDensity, b: TorusDensity) -> float:
    _check_same_grid(a, b)
    return float(trapezoid(np.abs(a.values - b.values)))


def distance_l2(a: TorusDensity, b: TorusDensity) -> float:
    _check_same_grid(a, b)
    return float(np.sqrt(trapezoid((a.values - b.values) ** 2)))


def distance_linf(a: TorusDensity, b: TorusDensity) -> float:
    _check_same_grid(a, b)
    return float(np.max(np.abs(a.values - b.values)))


def _prominences(v: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Topographic prominence of the local maxima ``idx`` of a periodic signal."""
    G = v.size
    out = np.empty(idx.size)
    vmin = v.min()
    for n, i in enumerate(idx):
        h = v[i]
        bases = []
        for step in (1, -1):
            lowest = h
            j = i
            for _ in range(G - 1):
                j = (j + step) % G
                if v[j] > h:
                    break
                lowest = min(lowest, v[j])
            else:
                lowest = vmin
            bases.append(lowest)
        out[n] = h - max(bases)
    return out


def peaks(rho: TorusDensity, threshold: float = PEAK_THRESHOLD):
    """Local maxima of ``rho`` that rise above ``(1 + threshold) / 2pi``.

    Maxima are found on the periodic grid; a maximum only counts if its
    prominence is at least ``threshold / 2pi`` too, which removes grid-level
    and sampling wiggles. Returns ``[(position, height), ...]`` sorted by
    position.
    """
    v = rho.values
    left = np.roll(v, 1)
    right = np.roll(v, -1)
    is_max = (v > left) & (v >= right)
    level = UNIFORM_LEVEL * (1.0 + threshold)
    idx = np.flatnonzero(is_max & (v > level))
    if idx.size == 0:
        return []
    prom = _prominences(v, idx)
    keep = idx[prom >= threshold * UNIFORM_LEVEL]
    x = rho.x
    return [(float(x[i]), float(v[i])) for i in sorted(keep)]


def align(a: TorusDensity, b: TorusDensity):
    """Best on-grid translation of ``b`` onto ``a``.

    Returns ``(shift, distance)`` where ``b(x + shift)`` maximises the circular
    cross-correlation with ``a(x)`` and ``distance`` is the L1 distance after
    shifting. ``shift`` lies in ``[0, 2pi)``.
    """
    _check_same_grid(a, b)
    G = a.G
    # corr[m] = sum_j a_j b_{j+m}
    corr = np.fft.irfft(np.conj(np.fft.rfft(a.values)) * np.fft.rfft(b.values), n=G)
    m = int(np.argmax(np.round(corr, 12)))
    moved = np.roll(b.values, -m)
    dist = float(trapezoid(np.abs(a.values - moved)))
    return TWO_PI * m / G, dist


def circular_variance(rho: TorusDensity) -> float:
    C, S = rho.moments(1)
    return float(1.0 - np.hypot(C[0], S[0]))


def save_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, FourierPotential):
        return list(obj.coeffs)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return str(obj)
