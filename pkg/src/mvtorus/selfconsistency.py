"""Order-parameter fixed points of the Kirkwood-Monroe equation.

For ``W = sum a_k cos(kx)`` and ``V = sum v_k cos(kx)`` every even stationary
state is a Gibbs density ``exp(-beta sum_k (v_k + kappa a_k r_k) cos kx) / Z``
whose cosine moments reproduce ``r``. Order parameters are plain numpy
vectors ``r = (r_1..r_m)`` with ``m = max(len(V), len(W))``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NoConvergence
from .field import (DEFAULT_GRID, PEAK_THRESHOLD, TorusDensity, UNIFORM_LEVEL, align,
                    boltzmann, distance_l1, gibbs, peaks)
from .potentials import ZERO, FourierPotential, convolve, sample

log = logging.getLogger(__name__)

TOL_SC = 1e-12
MAX_ITERS = 10_000
PICARD_DAMPING = 0.5
NEWTON_STEP = 1e-6
DEDUP_TOL = 1e-4


def n_order_parameters(V, W: FourierPotential) -> int:
    nv = V.n_modes if isinstance(V, FourierPotential) else 0
    return max(nv, W.n_modes)


def _pad(r, m):
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros(m)
    out[: min(m, r.size)] = r[:m]
    return out


def sc_map(r, V, W: FourierPotential, beta: float, kappa: float = 1.0,
           G: int = DEFAULT_GRID) -> np.ndarray:
    """One application of the self-consistency map: moments of the Gibbs state for ``r``."""
    V = ZERO if V is None else V
    m = n_order_parameters(V, W)
    rho = gibbs(V, W, _pad(r, m), beta, kappa, G)
    return rho.cos_moments(m)


@dataclass(frozen=True, eq=False)
class SelfConsistencySolution:
    r: np.ndarray
    residual: float
    density: TorusDensity
    branch_label: str
    iterations: int = 0
    method: str = "newton"
    beta: float = float("nan")
    kappa: float = 1.0
    V: FourierPotential = field(default=ZERO)
    W: FourierPotential = field(default=ZERO)

    @property
    def n_peaks(self) -> int:
        return len(peaks(self.density))

    def to_dict(self) -> dict:
        return {"r": [float(v) for v in self.r], "residual": self.residual,
                "branch_label": self.branch_label, "beta": self.beta, "kappa": self.kappa,
                "W": list(self.W.coeffs), "V": list(self.V.coeffs),
                "iterations": self.iterations, "method": self.method}


def branch_label(rho: TorusDensity, threshold: float = PEAK_THRESHOLD) -> str:
    n = len(peaks(rho, threshold))
    if n == 1:
        return "single_peak"
    if n > 1:
        return "multi_peak"
    if np.max(np.abs(rho.values - UNIFORM_LEVEL)) <= threshold * UNIFORM_LEVEL:
        return "uniform"
    return "other"


def _picard(r, F, tol, max_iter, damping):
    for it in range(1, max_iter + 1):
        fr = F(r)
        res = np.max(np.abs(fr - r)) if r.size else 0.0
        if res < tol:
            return r, it
        r = (1.0 - damping) * r + damping * fr
    raise NoConvergence(f"Picard iteration did not converge in {max_iter} iterations "
                        f"(residual {res:.3e})", max_iter, res)


def _newton(r, F, tol, max_iter, h):
    m = r.size
    defect = lambda s: F(s) - s  # noqa: E731
    g = defect(r)
    res = np.max(np.abs(g)) if m else 0.0
    for it in range(1, max_iter + 1):
        if res < tol:
            return r, it
        J = np.empty((m, m))
        for i in range(m):
            e = np.zeros(m)
            e[i] = h
            J[:, i] = (defect(r + e) - defect(r - e)) / (2.0 * h)
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -g, rcond=None)[0]
        # backtrack on the sup-norm defect; order parameters stay in [-1, 1]
        lam = 1.0
        while True:
            trial = np.clip(r + lam * step, -1.0, 1.0)
            gt = defect(trial)
            rt = np.max(np.abs(gt))
            if rt < res or lam < 1e-4:
                break
            lam *= 0.5
        if rt >= res and res > 1e3 * tol:
            raise NoConvergence(f"Newton stalled at residual {res:.3e}", it, res)
        r, g, res = trial, gt, rt
    raise NoConvergence(f"Newton did not converge in {max_iter} iterations "
                        f"(residual {res:.3e})", max_iter, res)


def solve_fixed_point(V, W: FourierPotential, beta: float, kappa: float = 1.0, r_init=None,
                      method: str = "newton", tol: float = TOL_SC, max_iter: int = MAX_ITERS,
                      damping: float = PICARD_DAMPING, h: float = NEWTON_STEP,
                      G: int = DEFAULT_GRID) -> SelfConsistencySolution:
    """Solve ``sc_map(r) = r`` to sup-norm tolerance ``tol``.

    ``method="picard"`` iterates ``r <- (1 - damping) r + damping sc_map(r)``;
    ``method="newton"`` uses a central finite-difference Jacobian with step
    ``h`` and a backtracking line search. Either may land on an unstable
    branch. Raises :class:`NoConvergence`.
    """
    V = ZERO if V is None else V
    m = n_order_parameters(V, W)
    r0 = _pad(np.full(m, 0.5) if r_init is None else r_init, m)
    if not np.all(np.isfinite(r0)):
        raise ValueError("r_init must be finite")
    F = lambda r: sc_map(r, V, W, beta, kappa, G)  # noqa: E731
    if method == "picard":
        r, it = _picard(r0, F, tol, max_iter, damping)
    elif method == "newton":
        r, it = _newton(r0, F, tol, min(max_iter, 200), h)
    else:
        raise ValueError(f"unknown method {method!r}")
    rho = gibbs(V, W, r, beta, kappa, G)
    res = float(np.max(np.abs(F(r) - r))) if m else 0.0
    return SelfConsistencySolution(r=r, residual=res, density=rho, branch_label=branch_label(rho),
                                   iterations=it, method=method, beta=beta, kappa=kappa, V=V, W=W)


def standard_seeds(m: int) -> list:
    """Zero, ``0.5 e_k`` for every mode, all ``+0.5`` and all ``-0.5``."""
    seeds = [np.zeros(m)]
    for k in range(m):
        e = np.zeros(m)
        e[k] = 0.5
        seeds.append(e)
    seeds.append(np.full(m, 0.5))
    seeds.append(np.full(m, -0.5))
    return seeds


def _same_branch(a: TorusDensity, b: TorusDensity, translation_invariant: bool, tol: float) -> bool:
    if translation_invariant:
        return align(a, b)[1] <= tol
    return distance_l1(a, b) <= tol


def enumerate_branches(V, W: FourierPotential, beta: float, kappa: float = 1.0, seeds=None,
                       dedup_tol: float = DEDUP_TOL, method: str = "picard",
                       G: int = DEFAULT_GRID) -> list:
    """Distinct stationary branches reached from a set of seeds.

    Seeds that fail to converge are skipped. With ``V = 0`` solutions are
    compared modulo on-grid translations.
    """
    V = ZERO if V is None else V
    m = n_order_parameters(V, W)
    seeds = standard_seeds(m) if seeds is None else seeds
    translation_invariant = V.is_zero
    found = []
    for seed in seeds:
        try:
            sol = solve_fixed_point(V, W, beta, kappa, r_init=seed, method=method, G=G)
        except NoConvergence as exc:
            log.debug("seed %s skipped: %s", seed, exc)
            continue
        if not any(_same_branch(sol.density, s.density, translation_invariant, dedup_tol) for s in found):
            found.append(sol)
    return found


def stationary_residual(rho: TorusDensity, V, W: FourierPotential, beta: float,
                        kappa: float = 1.0) -> float:
    """Sup-norm defect of the Kirkwood-Monroe equation ``rho = exp(-beta (V + kappa W * rho)) / Z``."""
    G = rho.G
    U = sample(V, G) + kappa * convolve(W, rho).on_grid(G)
    return float(np.max(np.abs(rho.values - boltzmann(U, beta).values)))


def kuramoto_r_approx(beta: float) -> float:
    """``sqrt(1 - 2/beta)``, the small-amplitude Kuramoto order parameter."""
    if beta < 2:
        raise DomainError("the approximation needs beta >= 2")
    return float(np.sqrt(1.0 - 2.0 / beta))


def harmonic_r_approx(beta: float) -> float:
    """``sqrt(eps) / (1 + eps)`` with ``beta = 2 (1 + eps)``.

    Second-order expansion of the self-consistency equation for
    ``W = -cos(nx)``; independent of ``n``.
    """
    if beta < 2:
        raise DomainError("the approximation needs beta >= 2")
    eps = beta / 2.0 - 1.0
    return float(np.sqrt(eps) / (1.0 + eps))


def bichromatic_r_approx(beta: float):
    """``(r1, r2)`` near the transition of ``W = -cos x - cos(2x)/2``.

    ``r2 = sqrt(3/2 - 3/beta)`` and ``r1 = sqrt(r2 (r2 + 2/beta))``.
    """
    if beta < 2:
        raise DomainError("the approximation needs beta >= 2")
    r2 = float(np.sqrt(max(1.5 - 3.0 / beta, 0.0)))
    r1 = float(np.sqrt(r2 * (r2 + 2.0 / beta)))
    return r1, r2
