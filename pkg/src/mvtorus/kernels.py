"""Hot loops, each in a numba and a pure-numpy flavour.

The two flavours of a kernel compute the same arithmetic up to roundoff, so
tests compare them directly. Pick one with ``backend="numba"|"numpy"`` or
globally with the ``MVTORUS_BACKEND`` environment variable.

Spectral conventions: a real field is held by its coefficients
``c_k = (1/2pi) int f e^{-ikx}`` for ``k = 0..K``; negative modes are
conjugates.
"""
import numpy as np

from . import _backend
from ._backend import njit

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# McKean-Vlasov PDE: exponential-Euler steps on the truncated spectrum
# ---------------------------------------------------------------------------

def etd_factors(K: int, beta: float, dt: float):
    """``E_k = exp(-k^2 dt / beta)`` and ``P_k = (E_k - 1) / (-k^2 / beta)``."""
    k = np.arange(K + 1, dtype=float)
    lam = -(k ** 2) / beta
    E = np.exp(lam * dt)
    P = np.empty_like(E)
    P[0] = dt
    # expm1 keeps P accurate for small |lam dt|
    P[1:] = np.expm1(lam[1:] * dt) / lam[1:]
    return E, P


def velocity_factors(v_coeffs, w_coeffs, kappa: float):
    """Pieces of the drift ``u = V' + kappa W' * rho`` in coefficient space.

    ``u_j = vhat_j + wfac_j * c_j`` for ``j = 1..M``.
    """
    M = max(len(v_coeffs), len(w_coeffs))
    v = np.zeros(M)
    a = np.zeros(M)
    v[: len(v_coeffs)] = v_coeffs
    a[: len(w_coeffs)] = w_coeffs
    j = np.arange(1, M + 1, dtype=float)
    vhat = 1j * j * v / 2.0
    wfac = 1j * j * np.pi * kappa * a
    return vhat.astype(np.complex128), wfac.astype(np.complex128)


@njit
def _pde_advance_numba(c, nsteps, E, P, vhat, wfac):
    K = c.size - 1
    M = vhat.size
    cur = c.copy()
    nxt = np.empty_like(cur)
    u = np.zeros(M + 1, dtype=np.complex128)
    for step in range(nsteps):
        for j in range(1, M + 1):
            if j <= K:
                u[j] = vhat[j - 1] + wfac[j - 1] * cur[j]
            else:
                u[j] = vhat[j - 1]
        for k in range(K + 1):
            acc = 0j
            for j in range(1, M + 1):
                q = k - j
                if q >= 0:
                    acc += u[j] * cur[q]
                else:
                    acc += u[j] * np.conj(cur[-q])
                q = k + j
                if q <= K:
                    acc += np.conj(u[j]) * cur[q]
            nxt[k] = E[k] * cur[k] + P[k] * (1j * k * acc)
        cur, nxt = nxt, cur
        if (step & 63) == 63 and not np.isfinite(cur[1].real + cur[K].real):
            return cur, step + 1
    return cur, nsteps


def _pde_advance_numpy(c, nsteps, E, P, vhat, wfac, G):
    K = c.size - 1
    M = vhat.size
    half = G // 2 + 1
    ik = 1j * np.arange(K + 1)
    spec = np.zeros(half, dtype=complex)
    uspec = np.zeros(half, dtype=complex)
    cur = c.copy()
    for step in range(nsteps):
        spec[: K + 1] = cur
        rho = np.fft.irfft(spec, n=G) * G
        m = min(M, K)
        uspec[1: M + 1] = vhat
        uspec[1: m + 1] += wfac[:m] * cur[1: m + 1]
        u = np.fft.irfft(uspec, n=G) * G
        # alias free: product modes reach K + M <= G/2 - 1
        flux = np.fft.rfft(u * rho)[: K + 1] / G
        cur = E * cur + P * (ik * flux)
        if (step & 63) == 63 and not np.isfinite(cur[1].real + cur[K].real):
            return cur, step + 1
    return cur, nsteps


def pde_advance(c, nsteps, E, P, vhat, wfac, G, backend=None):
    """Advance spectral coefficients ``c`` by ``nsteps`` exponential-Euler steps.

    Returns ``(c_new, steps_done)``; ``steps_done < nsteps`` means the state
    went non-finite and the loop stopped early.
    """
    c = np.ascontiguousarray(c, dtype=np.complex128)
    if _backend.resolve(backend) == "numba":
        return _pde_advance_numba(c, int(nsteps), E, P, vhat, wfac)
    return _pde_advance_numpy(c, int(nsteps), E, P, vhat, wfac, G)


# ---------------------------------------------------------------------------
# Interacting particles: Euler-Maruyama with the O(N * modes) mean field
# ---------------------------------------------------------------------------

def drift_factors(v_coeffs, w_coeffs, kappa: float, N: int):
    """``kv_k = k v_k`` and ``ka_k = (kappa / N) k a_k`` for ``k = 1..M``."""
    M = max(len(v_coeffs), len(w_coeffs))
    v = np.zeros(M)
    a = np.zeros(M)
    v[: len(v_coeffs)] = v_coeffs
    a[: len(w_coeffs)] = w_coeffs
    k = np.arange(1, M + 1, dtype=float)
    return k * v, kappa / N * k * a


@njit
def _drift_numba(x, kv, ka, out):
    N = x.size
    M = kv.size
    cs = np.empty((M, N))
    sn = np.empty((M, N))
    for i in range(N):
        c1 = np.cos(x[i])
        s1 = np.sin(x[i])
        ck = c1
        sk = s1
        for m in range(M):
            cs[m, i] = ck
            sn[m, i] = sk
            ck, sk = ck * c1 - sk * s1, sk * c1 + ck * s1
    sumc = np.zeros(M)
    sums = np.zeros(M)
    for m in range(M):
        accc = 0.0
        accs = 0.0
        for i in range(N):
            accc += cs[m, i]
            accs += sn[m, i]
        sumc[m] = accc
        sums[m] = accs
    for i in range(N):
        d = 0.0
        for m in range(M):
            d += kv[m] * sn[m, i] + ka[m] * (sn[m, i] * sumc[m] - cs[m, i] * sums[m])
        out[i] = d
    return out


def _drift_numpy(x, kv, ka):
    M = kv.size
    k = np.arange(1, M + 1, dtype=float)
    kx = np.multiply.outer(k, x)
    cs = np.cos(kx)
    sn = np.sin(kx)
    sumc = cs.sum(axis=1)
    sums = sn.sum(axis=1)
    return kv @ sn + (ka * sumc) @ sn - (ka * sums) @ cs


def particle_drift(x, kv, ka, backend=None):
    """Drift ``-V'(x_i) - (kappa/N) sum_j W'(x_i - x_j)`` for every particle.

    Uses ``sum_j sin(k(x_i - x_j)) = sin(kx_i) sum_j cos(kx_j) - cos(kx_i) sum_j sin(kx_j)``.
    """
    x = np.ascontiguousarray(x, dtype=float)
    if kv.size == 0:
        return np.zeros_like(x)
    if _backend.resolve(backend) == "numba":
        return _drift_numba(x, kv, ka, np.empty_like(x))
    return _drift_numpy(x, kv, ka)


@njit
def _em_advance_numba(x, noise, dt, sigma, kv, ka):
    N = x.size
    cur = x.copy()
    drift = np.empty(N)
    for s in range(noise.shape[0]):
        if kv.size > 0:
            _drift_numba(cur, kv, ka, drift)
        else:
            drift[:] = 0.0
        for i in range(N):
            y = cur[i] + drift[i] * dt + sigma * noise[s, i]
            y = y % TWO_PI
            if y >= TWO_PI:
                y -= TWO_PI
            cur[i] = y
    return cur


def _em_advance_numpy(x, noise, dt, sigma, kv, ka):
    cur = x.copy()
    for s in range(noise.shape[0]):
        drift = _drift_numpy(cur, kv, ka) if kv.size else 0.0
        cur = np.mod(cur + drift * dt + sigma * noise[s], TWO_PI)
        cur[cur >= TWO_PI] -= TWO_PI
    return cur


def em_advance(x, noise, dt, sigma, kv, ka, backend=None):
    """Run ``noise.shape[0]`` Euler-Maruyama steps; ``noise`` holds standard normals."""
    x = np.ascontiguousarray(x, dtype=float)
    noise = np.ascontiguousarray(noise, dtype=float)
    if _backend.resolve(backend) == "numba":
        return _em_advance_numba(x, noise, float(dt), float(sigma), kv, ka)
    return _em_advance_numpy(x, noise, dt, sigma, kv, ka)


# ---------------------------------------------------------------------------
# Wrapped-Gaussian kernel density estimate
# ---------------------------------------------------------------------------

@njit
def _kde_numba(x, G, h, wraps):
    out = np.zeros(G)
    dxg = TWO_PI / G
    inv2h2 = 0.5 / (h * h)
    for i in range(x.size):
        for g in range(G):
            d = g * dxg - x[i]
            acc = 0.0
            for w in range(-wraps, wraps + 1):
                z = d + w * TWO_PI
                acc += np.exp(-z * z * inv2h2)
            out[g] += acc
    return out


def _kde_numpy(x, G, h, wraps):
    xg = TWO_PI * np.arange(G) / G
    out = np.zeros(G)
    shifts = TWO_PI * np.arange(-wraps, wraps + 1)
    for start in range(0, x.size, 2048):
        d = xg[None, :] - x[start: start + 2048, None]
        z = d[:, :, None] + shifts
        out += np.exp(-0.5 * (z / h) ** 2).sum(axis=(0, 2))
    return out


def wrapped_gaussian_kde(x, G, h, backend=None):
    """Unnormalised sum of wrapped Gaussians of width ``h`` on the ``G`` grid."""
    x = np.ascontiguousarray(np.mod(x, TWO_PI), dtype=float)
    # distances are taken from x in [0, 2pi) to grid points in [0, 2pi)
    wraps = int(np.ceil(6.0 * h / TWO_PI)) + 1
    if _backend.resolve(backend) == "numba":
        return _kde_numba(x, int(G), float(h), wraps)
    return _kde_numpy(x, int(G), float(h), wraps)
