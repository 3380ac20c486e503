"""Linear stability of uniform and peaked stationary states.

Three views of the same question:

* closed forms at the uniform state: the critical inverse temperature, the
  Fourier growth rates of the linearised PDE and the eigenvalues of the
  second variation of the free energy;
* the ground-state transformed linearisation ``H f = f'' - Phi f`` with
  ``Phi = beta^2/4 U'^2 - beta/2 U''`` around a stationary density, discretised
  spectrally and diagonalised;
* small-amplitude perturbation formulas for the leading eigenvalues of ``H``
  just above the transition.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InsufficientData, NotStationaryWarning
from .field import DEFAULT_GRID, TorusDensity, UNIFORM_LEVEL, save_json, write_csv
from .potentials import (ZERO, FourierPotential, GridPotential, TrigSeries, as_series,
                         convolve, mean_field)
from .selfconsistency import bichromatic_r_approx, harmonic_r_approx, kuramoto_r_approx, stationary_residual

STATIONARY_WARN = 1e-4
LINEAR_REGIME = 0.05
AMPLITUDE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    """Eigenvalues of a linear operator, largest first.

    ``modes`` gives the Fourier index of each eigenvalue when the operator is
    diagonal in Fourier space; ``eigenvectors`` (columns, grid samples) is
    filled on request for discretised operators.
    """

    eigenvalues: np.ndarray
    operator_tag: str
    params: dict = field(default_factory=dict)
    modes: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if not np.all(np.isfinite(ev)):
            raise ValueError("eigenvalues must be finite")
        order = np.argsort(-ev, kind="stable")
        object.__setattr__(self, "eigenvalues", ev[order])
        if self.modes is not None:
            object.__setattr__(self, "modes", np.asarray(self.modes)[order])
        if self.eigenvectors is not None:
            object.__setattr__(self, "eigenvectors", np.asarray(self.eigenvectors)[:, order])

    def __len__(self):
        return self.eigenvalues.size

    def top(self, k: int) -> np.ndarray:
        return self.eigenvalues[:k]

    def by_mode(self, s: int) -> float:
        if self.modes is None:
            raise ValueError("report carries no mode labels")
        hit = np.flatnonzero(self.modes == s)
        if hit.size == 0:
            raise KeyError(s)
        return float(self.eigenvalues[hit[0]])

    def to_dict(self) -> dict:
        out = {"operator_tag": self.operator_tag, "eigenvalues": self.eigenvalues.tolist(),
               "params": self.params}
        if self.modes is not None:
            out["modes"] = self.modes.tolist()
        return out

    def to_csv(self, path) -> None:
        idx = self.modes if self.modes is not None else np.arange(len(self))
        write_csv(path, ("index", "eigenvalue"), np.column_stack([idx, self.eigenvalues]))

    def to_json(self, path) -> None:
        save_json(path, self.to_dict())


# ---------------------------------------------------------------------------
# Uniform state: closed forms
# ---------------------------------------------------------------------------

def _exact(value) -> Fraction:
    """Shortest decimal rational of a float (``-0.1 -> -1/10``); exact inputs pass through."""
    if isinstance(value, (Fraction, int)):
        return Fraction(value)
    return Fraction(repr(float(value)))


def critical_beta(W: FourierPotential):
    """``min(-2/a_k)`` over the negative modes of ``W`` as an exact fraction, or ``None``.

    Positive modes are ignored; an H-stable kernel (no negative mode) has no
    transition and gives ``None``.
    """
    cands = [Fraction(-2) / _exact(a) for a in W.coeffs if a < 0]
    return min(cands) if cands else None


def growth_rates(W: FourierPotential, beta, j_max: int, exact: bool | None = None):
    """``gamma_j = j^2 (-a_j/2 - 1/beta)`` for ``j = 1..j_max``; positive means unstable.

    With a :class:`~fractions.Fraction` ``beta`` (as returned by
    :func:`critical_beta`) the rates are computed in exact rational arithmetic
    and returned as a list of fractions; otherwise as a float array.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    exact = isinstance(beta, Fraction) if exact is None else exact
    if exact:
        b = _exact(beta)
        return [j * j * (-_exact(W.coefficient(j)) / 2 - 1 / b) for j in range(1, j_max + 1)]
    j = np.arange(1, j_max + 1, dtype=float)
    a = W.padded(j_max)
    return j ** 2 * (-a / 2.0 - 1.0 / float(beta))


def growth_report(W: FourierPotential, beta, j_max: int) -> SpectrumReport:
    rates = np.array([float(g) for g in growth_rates(W, beta, j_max)])
    return SpectrumReport(rates, "linearized_growth",
                          {"beta": float(beta), "W": list(W.coeffs), "convention": "j^2 (-a_j/2 - 1/beta)"},
                          modes=np.arange(1, j_max + 1))


def second_variation_spectrum(W: FourierPotential, beta, s_max: int) -> SpectrumReport:
    """Eigenvalues of the free-energy Hessian at the uniform state.

    ``lambda_s = (pi s^2 / 2)(2 + beta a_s)`` for modes carried by ``W`` and
    ``pi s^2`` beyond; positive means stable.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    s = np.arange(1, s_max + 1, dtype=float)
    a = W.padded(s_max)
    lam = np.where(s <= W.n_modes, 0.5 * np.pi * s ** 2 * (2.0 + float(beta) * a), np.pi * s ** 2)
    return SpectrumReport(lam, "second_variation", {"beta": float(beta), "W": list(W.coeffs)},
                          modes=np.arange(1, s_max + 1))


def second_variation_exact(W: FourierPotential, beta, s: int) -> Fraction:
    """``lambda_s / pi`` in exact arithmetic, for sign checks at criticality."""
    if s <= W.n_modes:
        return Fraction(s * s, 2) * (2 + _exact(beta) * _exact(W.coefficient(s)))
    return Fraction(s * s)


# ---------------------------------------------------------------------------
# Ground-state transformed operator
# ---------------------------------------------------------------------------

def second_difference_matrix(G: int) -> np.ndarray:
    """Spectral second derivative on the ``G`` grid as a symmetric circulant."""
    k = np.fft.fftfreq(G, 1.0 / G)
    col = np.fft.ifft(-(k ** 2)).real
    idx = np.arange(G)
    return col[(idx[:, None] - idx[None, :]) % G]


def _derivatives(U, G: int):
    if isinstance(U, GridPotential):
        return U.derivative_on_grid(1) if U.G == G else GridPotential(U.resampled(G)).derivative_on_grid(1), \
            GridPotential(U.resampled(G)).derivative_on_grid(2)
    if isinstance(U, (FourierPotential, TrigSeries)) or U is None:
        s = as_series(U)
        x = 2.0 * np.pi * np.arange(G) / G
        return s.derivative(x, 1), s.derivative(x, 2)
    g = GridPotential(np.asarray(U, dtype=float))
    return _derivatives(g, G)


def schroedinger_potential(U, beta: float, G: int = DEFAULT_GRID) -> np.ndarray:
    """``Phi = beta^2/4 U'^2 - beta/2 U''`` on the grid."""
    d1, d2 = _derivatives(U, G)
    return 0.25 * beta * beta * d1 * d1 - 0.5 * beta * d2


def schroedinger_matrix(U, beta: float, G: int = DEFAULT_GRID) -> np.ndarray:
    """Dense symmetric discretisation of ``f -> f'' - Phi f`` for effective potential ``U``.

    ``U`` is a potential series, a :class:`GridPotential` or grid samples.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    H = second_difference_matrix(G)
    H[np.diag_indices(G)] -= schroedinger_potential(U, beta, G)
    return 0.5 * (H + H.T)


def effective_potential(rho: TorusDensity, W: FourierPotential, V=None, kappa: float = 1.0):
    """``V + kappa W * rho`` as a trigonometric series (or grid samples if ``V`` is)."""
    conv = convolve(W, rho).scaled(kappa)
    if V is None or (isinstance(V, FourierPotential) and V.is_zero):
        return conv
    if isinstance(V, (FourierPotential, TrigSeries)):
        return as_series(V) + conv
    vals = V.resampled(rho.G) if isinstance(V, GridPotential) else np.asarray(V, dtype=float)
    return GridPotential(vals + conv.on_grid(rho.G))


def schroedinger_operator(rho_inf: TorusDensity, W: FourierPotential, beta: float, V=None,
                          kappa: float = 1.0, G: int | None = None) -> np.ndarray:
    """Linearisation around ``rho_inf`` after the ground-state transformation.

    Warns with :class:`NotStationaryWarning` when ``rho_inf`` has a stationary
    residual above ``1e-4``; the matrix is built regardless.
    """
    res = stationary_residual(rho_inf, ZERO if V is None else V, W, beta, kappa)
    if res > STATIONARY_WARN:
        warnings.warn(f"density is not stationary (residual {res:.2e}); spectrum is not meaningful",
                      NotStationaryWarning, stacklevel=2)
    G = rho_inf.G if G is None else G
    return schroedinger_matrix(effective_potential(rho_inf, W, V, kappa), beta, G)


def schroedinger_operator_from_order(r, W: FourierPotential, beta: float, V=None,
                                     kappa: float = 1.0, G: int = DEFAULT_GRID) -> np.ndarray:
    """Same operator with ``U = V + kappa sum_k a_k r_k cos(kx)`` built from order parameters.

    This is the path used with the analytic order-parameter approximations,
    where no density is solved for.
    """
    U = mean_field(W, r, kappa)
    if V is not None:
        U = V + U if isinstance(V, FourierPotential) else GridPotential(
            (V.resampled(G) if isinstance(V, GridPotential) else np.asarray(V)) + U.on_grid(G))
    return schroedinger_matrix(U, beta, G)


def parity_basis(G: int, sector: str) -> np.ndarray:
    """Orthonormal basis of even (``f(-x) = f(x)``) or odd grid functions, as columns."""
    half = G // 2
    s = 1.0 / np.sqrt(2.0)
    if sector == "even":
        Q = np.zeros((G, half + 1))
        Q[0, 0] = 1.0
        Q[half, half] = 1.0
        for j in range(1, half):
            Q[j, j] = s
            Q[G - j, j] = s
        return Q
    if sector == "odd":
        Q = np.zeros((G, half - 1))
        for j in range(1, half):
            Q[j, j - 1] = s
            Q[G - j, j - 1] = -s
        return Q
    raise ValueError(f"unknown sector {sector!r}")


def schroedinger_spectrum(H: np.ndarray, k_eigs: int | None = None, sector: str = "all",
                          params: dict | None = None, vectors: bool = False) -> SpectrumReport:
    """Leading eigenvalues of a discretised operator, optionally within a parity sector.

    ``sector="even"`` or ``"odd"`` restricts ``H`` to functions symmetric or
    antisymmetric about ``x = 0`` by projecting onto an exact parity basis;
    valid when the potential is even, which is the case for all even
    stationary states.
    """
    H = np.asarray(H, dtype=float)
    if sector == "all":
        w, v = np.linalg.eigh(H)
    else:
        Q = parity_basis(H.shape[0], sector)
        w, v = np.linalg.eigh(Q.T @ H @ Q)
        v = Q @ v
    order = np.argsort(-w)
    if k_eigs is not None:
        order = order[:k_eigs]
    meta = dict(params or {})
    meta["sector"] = sector
    return SpectrumReport(w[order], "schroedinger", meta, eigenvectors=v[:, order] if vectors else None)


def kuramoto_state(delta: float):
    """``(W, beta, r)`` for the Kuramoto branch peaked at ``pi`` with ``beta = 2(1 + delta^2)``."""
    beta = 2.0 * (1.0 + delta * delta)
    return FourierPotential((-1.0,)), beta, np.array([-kuramoto_r_approx(beta)])


def harmonic_state(n: int, delta: float):
    """``(W, beta, r)`` for ``W = -cos(nx)`` with peaks at ``pi/n + 2 pi j/n``.

    Uses the second-order amplitude ``delta / (1 + delta^2)``, which makes the
    potential of ``H`` exactly ``delta n^2 cos(nx) + delta^2 n^2 sin^2(nx)``.
    """
    beta = 2.0 * (1.0 + delta * delta)
    r = np.zeros(n)
    r[n - 1] = -harmonic_r_approx(beta)
    return FourierPotential.mode(n, -1.0), beta, r


def bichromatic_state(eta: float):
    """``(W, beta, r)`` for ``W = -cos x - cos(2x)/2`` with ``beta = 2(1 + eta^4)``, peaked at ``pi``."""
    beta = 2.0 * (1.0 + eta ** 4)
    r1, r2 = bichromatic_r_approx(beta)
    return FourierPotential((-1.0, -0.5)), beta, np.array([-r1, r2])


def branch_spectrum(kind: str, param: float, k_eigs: int = 4, G: int = DEFAULT_GRID,
                    n: int = 1, sector: str = "even") -> SpectrumReport:
    """Even-sector spectrum of ``H`` on an analytically approximated branch.

    ``kind`` is ``"kuramoto"`` (``param = delta``), ``"harmonic"`` (``param =
    delta``, interaction mode ``n``) or ``"bichromatic"`` (``param = eta``).
    The zero eigenvalue of the ground state is dropped only when it is
    numerically zero, so ``k_eigs`` counts the decaying modes.
    """
    if kind == "kuramoto":
        W, beta, r = kuramoto_state(param)
    elif kind == "harmonic":
        W, beta, r = harmonic_state(n, param)
    elif kind == "bichromatic":
        W, beta, r = bichromatic_state(param)
    else:
        raise ValueError(f"unknown branch kind {kind!r}")
    H = schroedinger_operator_from_order(r, W, beta, G=G)
    rep = schroedinger_spectrum(H, None, sector)
    ev = rep.eigenvalues
    ev = ev[np.abs(ev) > 1e-9] if np.isclose(ev[0], 0.0, atol=1e-9) else ev
    # the approximate branch is not exactly stationary, so the top mode is small but nonzero
    return SpectrumReport(ev[:k_eigs], "schroedinger",
                          {"kind": kind, "param": param, "n": n, "beta": beta, "r": r.tolist(),
                           "W": list(W.coeffs), "G": G, "sector": sector})


# ---------------------------------------------------------------------------
# Perturbation formulas near the transition
# ---------------------------------------------------------------------------

def perturbation_eigenvalue_kuramoto(m: int, delta: float) -> float:
    """``-m^2 + delta^2 E2(m)`` with ``E2(1) = -2/3`` and ``E2(m) = -1/(2(4m^2-1)) - 1/2``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    e2 = -2.0 / 3.0 if m == 1 else -1.0 / (2.0 * (4 * m * m - 1)) - 0.5
    return -m * m + delta * delta * e2


def perturbation_eigenvalue_harmonic(n: int, m: int, delta: float, variant: str = "printed") -> float:
    """Leading-order eigenvalues of ``H`` for ``W = -cos(nx)``.

    * ``m = n/2`` (``n`` even): ``-(n^2/2)(1/2 + delta)``;
    * ``m = n``: ``-n^2 - c delta^2`` with ``c = n^2/6`` (``variant="printed"``)
      or ``c = 2n^2/3`` (``variant="derived"``, the value a direct second-order
      computation gives and the one consistent with the ``n = 1`` Kuramoto case);
    * otherwise ``-m^2 + delta^2 (n^4 / (2(n^2 - 4m^2)) - n^2/2)``.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    if n % 2 == 0 and 2 * m == n:
        return -0.5 * n * n * (0.5 + delta)
    if m == n:
        if variant == "printed":
            c = n * n / 6.0
        elif variant == "derived":
            c = 2.0 * n * n / 3.0
        else:
            raise ValueError(f"unknown variant {variant!r}")
        return -n * n - c * delta * delta
    return -m * m + delta * delta * (n ** 4 / (2.0 * (n * n - 4 * m * m)) - n * n / 2.0)


def perturbation_eigenvalue_bichromatic(m: int, eta: float) -> float:
    """Eigenvalues of ``H`` for ``W = -cos x - cos(2x)/2`` with ``beta = 2(1 + eta^4)``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return -1.0 - eta * eta * (36.0 ** 0.25 / 12.0 + 1.5 * math.sqrt(1.5))
    return -m * m - eta * eta * 0.5 * math.sqrt(1.5) * (1.0 / (4 * m * m - 1) + 1.0)


# ---------------------------------------------------------------------------
# Rates observed in a trajectory
# ---------------------------------------------------------------------------

def mode_amplitude(rho: TorusDensity, j: int) -> float:
    """``|int e^{-ijx} rho dx|``, the magnitude of Fourier mode ``j``."""
    return float(2.0 * np.pi * np.abs(rho.coefficients()[j]))


def extract_decay_rate(traj, j: int, max_deviation: float = LINEAR_REGIME,
                       floor: float = AMPLITUDE_FLOOR, min_points: int = 3) -> float:
    """Least-squares slope of ``log |mode j|`` against time in the near-linear regime.

    Uses the leading run of snapshots whose sup deviation from uniform stays
    below ``max_deviation`` and whose mode amplitude stays above ``floor``.
    Raises :class:`InsufficientData` if fewer than ``min_points`` qualify.
    """
    snaps = traj.snapshots if hasattr(traj, "snapshots") else traj
    t, amp = [], []
    for time, rho in snaps:
        a = mode_amplitude(rho, j)
        if np.max(np.abs(rho.values - UNIFORM_LEVEL)) >= max_deviation or a <= floor:
            break
        t.append(time)
        amp.append(a)
    if len(t) < min_points:
        raise InsufficientData(f"only {len(t)} snapshots in the linear regime for mode {j}")
    slope, _ = np.polyfit(np.asarray(t), np.log(amp), 1)
    return float(slope)
