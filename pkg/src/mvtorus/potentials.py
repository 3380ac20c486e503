"""Even cosine-series potentials on the torus and their exact convolutions.

A potential ``p(x) = sum_k c_k cos(k x)`` is stored by its mode coefficients
``c_1..c_n``; the constant mode is dropped since only gradients enter the
dynamics. Convolving an even potential with a density that is not itself even
produces sine terms as well, which is why :func:`convolve` returns a
:class:`TrigSeries` rather than another :class:`FourierPotential`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveDensity

TWO_PI = 2.0 * np.pi


def _as_coeffs(values) -> tuple:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise ValueError("coefficients must be a flat sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coefficients must be finite")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class TrigSeries:
    """``x -> sum_k cos_coeffs[k-1] cos(kx) + sin_coeffs[k-1] sin(kx)``."""

    cos_coeffs: tuple = ()
    sin_coeffs: tuple = ()

    def __post_init__(self):
        c = _as_coeffs(self.cos_coeffs) if len(self.cos_coeffs) else ()
        s = _as_coeffs(self.sin_coeffs) if len(self.sin_coeffs) else ()
        n = max(len(c), len(s))
        c = c + (0.0,) * (n - len(c))
        s = s + (0.0,) * (n - len(s))
        object.__setattr__(self, "cos_coeffs", c)
        object.__setattr__(self, "sin_coeffs", s)

    @property
    def n_modes(self) -> int:
        return len(self.cos_coeffs)

    def _modes(self):
        k = np.arange(1, self.n_modes + 1, dtype=float)
        return k, np.asarray(self.cos_coeffs), np.asarray(self.sin_coeffs)

    def __call__(self, x):
        return self.derivative(x, order=0)

    def derivative(self, x, order: int = 1):
        """``order``-th analytic derivative evaluated at ``x``."""
        x = np.asarray(x, dtype=float)
        if self.n_modes == 0:
            return np.zeros_like(x)
        k, a, b = self._modes()
        kx = np.multiply.outer(np.mod(x, TWO_PI), k)
        cos_kx, sin_kx = np.cos(kx), np.sin(kx)
        scale = k ** order
        # derivatives cycle cos -> -sin -> -cos -> sin with period 4
        sign_c, sign_s = [(1, 1), (-1, 1), (-1, -1), (1, -1)][order % 4]
        if order % 2 == 0:
            return sign_c * (cos_kx @ (a * scale)) + sign_s * (sin_kx @ (b * scale))
        return sign_c * (sin_kx @ (a * scale)) + sign_s * (cos_kx @ (b * scale))

    def second_derivative(self, x):
        return self.derivative(x, order=2)

    def on_grid(self, G: int) -> np.ndarray:
        return self(TWO_PI * np.arange(G) / G)

    def is_even(self) -> bool:
        return not any(self.sin_coeffs)

    def to_potential(self) -> "FourierPotential":
        if not self.is_even():
            raise ValueError("series has sine terms; not an even potential")
        return FourierPotential(self.cos_coeffs)

    def __add__(self, other):
        other = as_series(other)
        n = max(self.n_modes, other.n_modes)
        c = np.zeros(n)
        s = np.zeros(n)
        c[: self.n_modes] += self.cos_coeffs
        s[: self.n_modes] += self.sin_coeffs
        c[: other.n_modes] += other.cos_coeffs
        s[: other.n_modes] += other.sin_coeffs
        return TrigSeries(tuple(c), tuple(s))

    def scaled(self, factor: float) -> "TrigSeries":
        return TrigSeries(tuple(factor * np.asarray(self.cos_coeffs)),
                          tuple(factor * np.asarray(self.sin_coeffs)))


@dataclass(frozen=True)
class FourierPotential:
    """Even trigonometric polynomial ``sum_k coeffs[k-1] cos(k x)``.

    Used for both the confining potential V and the interaction kernel W.
    ``FourierPotential(())`` is the zero potential.
    """

    coeffs: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs) if len(self.coeffs) else ())

    @classmethod
    def parse(cls, text: str) -> "FourierPotential":
        """Parse a comma separated coefficient list such as ``"-1,-0.5"``."""
        text = text.strip()
        if text in ("", "0", "none"):
            return cls(())
        if text.startswith("["):
            return cls.from_json(text)
        return cls(tuple(float(tok) for tok in text.split(",") if tok.strip()))

    @classmethod
    def from_json(cls, text: str) -> "FourierPotential":
        return cls(tuple(json.loads(text)))

    @classmethod
    def mode(cls, k: int, amplitude: float = 1.0) -> "FourierPotential":
        """Single-mode potential ``amplitude * cos(k x)``."""
        c = [0.0] * k
        c[k - 1] = amplitude
        return cls(tuple(c))

    def to_json(self) -> str:
        return json.dumps(list(self.coeffs))

    def __str__(self):
        return ",".join(repr(c) for c in self.coeffs) or "0"

    @property
    def n_modes(self) -> int:
        return len(self.coeffs)

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float)

    def coefficient(self, k: int) -> float:
        return self.coeffs[k - 1] if 1 <= k <= self.n_modes else 0.0

    def padded(self, m: int) -> np.ndarray:
        """Coefficients as an array of length ``m`` (zero-padded or truncated)."""
        out = np.zeros(m)
        n = min(m, self.n_modes)
        out[:n] = self.coeffs[:n]
        return out

    @property
    def is_zero(self) -> bool:
        return not any(self.coeffs)

    @property
    def is_h_stable(self) -> bool:
        return all(c >= 0.0 for c in self.coeffs)

    def as_series(self) -> TrigSeries:
        return TrigSeries(self.coeffs, ())

    def __call__(self, x):
        return evaluate(self, x)

    def derivative(self, x, order: int = 1):
        return self.as_series().derivative(x, order)

    def second_derivative(self, x):
        return self.as_series().derivative(x, 2)

    def on_grid(self, G: int) -> np.ndarray:
        return self(TWO_PI * np.arange(G) / G)

    def __add__(self, other):
        if isinstance(other, FourierPotential):
            n = max(self.n_modes, other.n_modes)
            return FourierPotential(tuple(self.padded(n) + other.padded(n)))
        return self.as_series() + other

    def scaled(self, factor: float) -> "FourierPotential":
        return FourierPotential(tuple(factor * self.c))


ZERO = FourierPotential(())


def as_series(p) -> TrigSeries:
    if isinstance(p, TrigSeries):
        return p
    if isinstance(p, FourierPotential):
        return p.as_series()
    if p is None:
        return TrigSeries()
    raise TypeError(f"cannot interpret {type(p).__name__} as a trigonometric series")


def evaluate(p: FourierPotential, x):
    """``sum_k c_k cos(k x)``; ``x`` is wrapped into ``[0, 2pi)`` first."""
    x = np.asarray(x, dtype=float)
    if p.n_modes == 0:
        return np.zeros_like(x)[()]
    k = np.arange(1, p.n_modes + 1)
    # cos is even: wrapping |x| makes p(x) == p(-x) bit for bit
    xw = np.mod(np.abs(x), TWO_PI)
    xw = np.where(xw > np.pi, TWO_PI - xw, xw)
    return (np.cos(np.multiply.outer(xw, k)) @ p.c)[()]


def derivative(p: FourierPotential, x):
    """Analytic derivative ``-sum_k k c_k sin(k x)``."""
    return p.derivative(x)[()]


def sample(p, G: int) -> np.ndarray:
    """Values of a potential-like object on the uniform ``G`` grid.

    Accepts a :class:`FourierPotential`, :class:`TrigSeries`,
    :class:`GridPotential`, a raw array of grid samples, or ``None`` (zero).
    """
    if p is None:
        return np.zeros(G)
    if isinstance(p, (FourierPotential, TrigSeries)):
        return p.on_grid(G)
    if isinstance(p, GridPotential):
        return p.resampled(G)
    arr = np.asarray(p, dtype=float)
    if arr.shape != (G,):
        raise ValueError(f"grid potential has shape {arr.shape}, expected ({G},)")
    return arr


def convolve(W: FourierPotential, rho) -> TrigSeries:
    """Exact periodic convolution ``(W * rho)(x) = int W(x - y) rho(y) dy``.

    Only the first ``W.n_modes`` cosine/sine moments of ``rho`` enter, so the
    result is exact up to the quadrature error of those moments.
    """
    n = W.n_modes
    if n == 0:
        return TrigSeries()
    C, S = rho.moments(n)
    a = W.c
    return TrigSeries(tuple(a * C), tuple(a * S))


def mean_field(W: FourierPotential, r, kappa: float = 1.0) -> FourierPotential:
    """Convolution of ``kappa * W`` with an even density whose cosine moments are ``r``."""
    r = np.asarray(r, dtype=float)
    m = max(W.n_modes, r.size)
    rr = np.zeros(m)
    rr[: r.size] = r
    return FourierPotential(tuple(kappa * W.padded(m) * rr))


@dataclass(frozen=True, eq=False)
class GridPotential:
    """A potential known only through samples on the uniform grid.

    Derivatives are spectral. Returned by :func:`design_confinement`, whose
    output is generally not band-limited.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def G(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        return TWO_PI * np.arange(self.G) / self.G

    def _spectral(self, order):
        G = self.G
        k = np.fft.rfftfreq(G, 1.0 / G)
        vh = np.fft.rfft(self.values)
        if G % 2 == 0 and order % 2 == 1:
            vh[-1] = 0.0
        return np.fft.irfft(vh * (1j * k) ** order, n=G)

    def on_grid(self, G: int) -> np.ndarray:
        return self.resampled(G)

    def resampled(self, G: int) -> np.ndarray:
        if G == self.G:
            return self.values.copy()
        vh = np.fft.rfft(self.values) / self.G
        m = min(vh.size, G // 2 + 1)
        out = np.zeros(G // 2 + 1, dtype=complex)
        out[:m] = vh[:m]
        return np.fft.irfft(out * G, n=G)

    def derivative_on_grid(self, order: int = 1) -> np.ndarray:
        return self._spectral(order)

    def project(self, M: int):
        """Truncate to the first ``M`` Fourier modes.

        Returns ``(series, error)`` where ``error`` is the sup-norm distance on
        the grid between the truncated series (plus the dropped mean) and the
        samples.
        """
        G = self.G
        vh = np.fft.rfft(self.values) / G
        M = min(M, G // 2 - 1)
        cos_c = 2.0 * vh[1: M + 1].real
        sin_c = -2.0 * vh[1: M + 1].imag
        series = TrigSeries(tuple(cos_c), tuple(sin_c))
        err = float(np.max(np.abs(series.on_grid(G) + vh[0].real - self.values)))
        return series, err


def design_confinement(target, W: FourierPotential, beta: float, kappa: float = 1.0) -> GridPotential:
    """Confining potential that makes ``target`` a stationary state.

    ``V = -log(target)/beta - kappa * (W * target) + c`` with ``c`` fixing a
    zero mean. Raises :class:`NonPositiveDensity` if the target touches zero.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    rho = target.values
    if np.any(rho <= 0.0):
        raise NonPositiveDensity("target density must be strictly positive on the grid")
    G = rho.size
    V = -np.log(rho) / beta - kappa * convolve(W, target).on_grid(G)
    return GridPotential(V - V.mean())
