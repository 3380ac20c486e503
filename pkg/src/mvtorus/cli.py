"""Command line experiment runner.

Every invocation resolves its parameters from built-in defaults, then an
optional TOML file (top-level keys plus a table named after the
subcommand), then explicit flags. Results go to a fresh directory under the
output root (``--out``, else ``$MVTORUS_OUTPUT``, else ``./mvtorus-runs``)
together with a ``manifest.json`` that is enough to replay the run with
``--from-manifest``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, _backend
from . import particles as sde
from . import pde, stability
from .errors import ConfigError, MVTorusError, UnknownTarget
from .field import (DEFAULT_GRID, TorusDensity, UNIFORM_LEVEL, align, distance_l1,
                    grid, peaks, save_json, uniform, write_csv)
from .potentials import ZERO, FourierPotential, design_confinement
from .selfconsistency import enumerate_branches, solve_fixed_point, stationary_residual

log = logging.getLogger("mvtorus")

OUTPUT_ENV = "MVTORUS_OUTPUT"
DEFAULT_ROOT = "mvtorus-runs"

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_TARGET = 4

COMMON = {"W": "-1", "V": "0", "beta": 3.0, "kappa": 1.0, "G": DEFAULT_GRID}
DEFAULTS = {
    "critical": {"W": "-1"},
    "branches": dict(COMMON, method="picard"),
    "evolve": dict(COMMON, dt=pde.DEFAULT_DT, T=100.0, snapshots=None, init="default",
                   perturb=None, tol_steady=pde.TOL_STEADY, run_to_end=False),
    "particles": dict(COMMON, N=500, dt=0.01, T=200.0, seed=1, runs=1, bandwidth=None,
                      snapshots=None, init="default"),
    "spectrum": dict(COMMON, kind="kuramoto", delta=0.1, eta=0.5, n=1, k=6, sector="even",
                     r_init=None, density=None),
    "perturb": {"family": "kuramoto", "delta": 0.1, "eta": 0.5, "n": 1, "m_max": 4,
                "G": DEFAULT_GRID, "variant": "printed"},
    "design-v": dict(COMMON, beta=2.0, target="gibbs:1", modes=8),
    "reproduce": {"target": None, "beta": None, "T": None, "N": None, "runs": None, "seed": 1,
                  "alpha": 1.0, "gamma": 1.0, "G": DEFAULT_GRID, "dt": None},
}


# ---------------------------------------------------------------------------
# Parameter plumbing
# ---------------------------------------------------------------------------

def potential(value) -> FourierPotential:
    if isinstance(value, FourierPotential):
        return value
    if value is None:
        return ZERO
    if isinstance(value, (list, tuple)):
        return FourierPotential(tuple(value))
    if isinstance(value, (int, float)):
        return FourierPotential(()) if value == 0 else FourierPotential((float(value),))
    try:
        return FourierPotential.parse(str(value))
    except ValueError as exc:
        raise ConfigError(f"cannot parse potential {value!r}: {exc}") from None


def float_list(value):
    if value is None or value == "":
        return None
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(tok) for tok in str(value).split(",") if tok.strip()]


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None


def resolve(command: str, file_cfg: dict, flags: dict) -> dict:
    """Defaults, then the TOML file, then flags that were given explicitly."""
    cfg = dict(DEFAULTS[command])
    for key, val in file_cfg.items():
        if not isinstance(val, dict):
            cfg[key.replace("-", "_")] = val
    for key, val in file_cfg.get(command, {}).items():
        cfg[key.replace("-", "_")] = val
    unknown = set(cfg) - set(DEFAULTS[command])
    if unknown:
        raise ConfigError(f"unknown keys for {command}: {', '.join(sorted(unknown))}")
    cfg.update({k: v for k, v in flags.items() if v is not None and k in DEFAULTS[command]})
    return cfg


def _jsonable(cfg: dict) -> dict:
    return json.loads(json.dumps(cfg, default=str))


def run_directory(root: Path, command: str, cfg: dict) -> Path:
    """A new directory named by command and config hash; never reuses an existing one."""
    digest = hashlib.sha1(json.dumps(_jsonable(cfg), sort_keys=True).encode()).hexdigest()[:8]
    stem = f"{command}-{cfg['target']}" if command == "reproduce" else command
    path = root / f"{stem}-{digest}"
    n = 1
    while path.exists():
        n += 1
        path = root / f"{stem}-{digest}-{n}"
    path.mkdir(parents=True)
    return path


def _emit(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def initial_density(spec: str, G: int, perturb=None) -> TorusDensity:
    """``default``, ``uniform`` or ``file:<csv>``, plus ``[(k, amplitude), ...]`` cosine seeds."""
    if spec == "default":
        rho = pde.default_initial(G)
    elif spec == "uniform":
        rho = uniform(G)
    elif str(spec).startswith("file:"):
        rho = TorusDensity.from_csv(spec[5:]).with_grid(G)
    else:
        raise ConfigError(f"unknown initial condition {spec!r}")
    if perturb:
        x = grid(G)
        extra = sum(float(a) * np.cos(int(k) * x) for k, a in _pairs(perturb))
        rho = TorusDensity.from_values(rho.values + extra)
    return rho


def _pairs(perturb):
    if isinstance(perturb, str):
        out = []
        for tok in perturb.split(","):
            k, a = tok.split(":")
            out.append((int(k), float(a)))
        return out
    return [(int(k), float(a)) for k, a in perturb]


def _pde_config(cfg, W, V, beta, T, snapshots=(), stop=True) -> pde.PdeConfig:
    return pde.PdeConfig(beta=float(beta), W=W, V=V, kappa=float(cfg.get("kappa", 1.0)),
                         G=int(cfg["G"]), dt=float(cfg.get("dt") or pde.DEFAULT_DT), t_final=float(T),
                         snapshot_times=tuple(snapshots), tol_steady=float(cfg.get("tol_steady", pde.TOL_STEADY)),
                         stop_when_steady=stop)


def _write_trajectory(out: Path, traj: pde.Trajectory, prefix: str = "") -> dict:
    for t, rho in traj.snapshots:
        rho.to_csv(out / f"{prefix}snapshot_t={t:g}.csv")
    write_csv(out / f"{prefix}free_energy.csv", ("t", "F"), np.array(traj.free_energy_series))
    traj.final.to_csv(out / f"{prefix}final.csv")
    return traj.manifest()


def _density_summary(rho: TorusDensity) -> dict:
    pk = peaks(rho)
    return {"n_peaks": len(pk), "peaks": pk, "linf_from_uniform": float(np.max(np.abs(rho.values - UNIFORM_LEVEL)))}


def _default_snapshots(T: float):
    return sorted({0.0, T / 100, T / 10, T / 2, T})


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_critical(cfg, out: Path) -> dict:
    W = potential(cfg["W"])
    bc = stability.critical_beta(W)
    rows = [(k, a, -2.0 / a if a < 0 else float("nan")) for k, a in enumerate(W.coeffs, 1)]
    write_csv(out / "critical.csv", ("k", "a_k", "minus_two_over_a_k"), np.array(rows) if rows else np.empty((0, 3)))
    if bc is None:
        _emit("beta_c = none (no negative Fourier mode: no phase transition)")
        return {"beta_c": None, "h_stable": W.is_h_stable}
    rates = stability.growth_rates(W, bc, max(W.n_modes, 1))
    _emit(f"beta_c = {bc}")
    return {"beta_c": str(bc), "beta_c_float": float(bc), "h_stable": W.is_h_stable,
            "growth_rates_at_beta_c": [str(g) for g in rates]}


def cmd_branches(cfg, out: Path) -> dict:
    W, V = potential(cfg["W"]), potential(cfg["V"])
    sols = enumerate_branches(V, W, float(cfg["beta"]), float(cfg["kappa"]), method=cfg["method"], G=int(cfg["G"]))
    m = max((s.r.size for s in sols), default=0)
    rows = []
    for i, s in enumerate(sols):
        s.density.to_csv(out / f"branch_{i}.csv")
        rows.append([i, s.n_peaks, s.residual, *s.r])
        _emit(f"branch {i}: {s.branch_label:<12} r = {np.array2string(s.r, precision=6)}  residual = {s.residual:.2e}")
    write_csv(out / "branches.csv", ("branch", "n_peaks", "residual", *[f"r{k}" for k in range(1, m + 1)]),
              np.array(rows) if rows else np.empty((0, 3 + m)))
    save_json(out / "branches.json", [s.to_dict() for s in sols])
    return {"n_branches": len(sols), "labels": [s.branch_label for s in sols]}


def cmd_evolve(cfg, out: Path, backend=None) -> dict:
    W, V = potential(cfg["W"]), potential(cfg["V"])
    T = float(cfg["T"])
    snaps = float_list(cfg["snapshots"]) or _default_snapshots(T)
    rho0 = initial_density(cfg["init"], int(cfg["G"]), cfg["perturb"])
    pc = _pde_config(cfg, W, V, cfg["beta"], T, snaps, stop=not cfg["run_to_end"])
    traj = pde.evolve(rho0, pc, backend=backend)
    info = _write_trajectory(out, traj)
    info.update(_density_summary(traj.final))
    info["stationary_residual"] = stationary_residual(traj.final, V, W, pc.beta, pc.kappa)
    _emit(f"t_end = {traj.t_end:g}  converged = {traj.converged}  peaks = {info['n_peaks']}  "
          f"|rho - 1/2pi|_inf = {info['linf_from_uniform']:.3e}")
    return info


def _sde_config(cfg, W, V, beta, T, N, runs, seed, snapshots=()) -> sde.SdeConfig:
    return sde.SdeConfig(beta=float(beta), W=W, V=V, kappa=float(cfg.get("kappa", 1.0)), N=int(N),
                         dt=float(cfg.get("dt") or 0.01), t_final=float(T), seed=int(seed),
                         n_runs=int(runs), snapshot_times=tuple(snapshots))


def _ensemble(cfg: sde.SdeConfig, rho0, G, bandwidth, out: Path | None, backend=None, tag="run"):
    """Final ensembles of runs seeded ``seed .. seed + n_runs - 1`` and their averaged density."""
    seeds = list(range(cfg.seed, cfg.seed + cfg.n_runs))
    h = bandwidth if bandwidth is not None else 2.0 * np.pi / np.sqrt(cfg.N * cfg.n_runs)
    acc = np.zeros(G)
    finals = []
    for s in seeds:
        snaps = sde.run(cfg, rho0, seed=s, backend=backend)
        if out is not None:
            for e in snaps:
                e.to_csv(out / f"{tag}{s}_positions_t={e.time:g}.csv")
        finals.append(snaps[-1])
        acc += sde.empirical_density(snaps[-1], G, h, backend).values
    return finals, TorusDensity.from_values(acc / len(seeds)), seeds, h


def cmd_particles(cfg, out: Path, backend=None) -> dict:
    W, V = potential(cfg["W"]), potential(cfg["V"])
    G = int(cfg["G"])
    sc = _sde_config(cfg, W, V, cfg["beta"], cfg["T"], cfg["N"], cfg["runs"], cfg["seed"],
                     float_list(cfg["snapshots"]) or ())
    rho0 = initial_density(cfg["init"], G)
    bw = None if cfg["bandwidth"] is None else float(cfg["bandwidth"])
    _, dens, seeds, h = _ensemble(sc, rho0, G, bw, out, backend)
    dens.to_csv(out / "density.csv")
    info = {"seeds": seeds, "bandwidth": h}
    info.update(_density_summary(dens))
    _emit(f"{len(seeds)} run(s), N = {sc.N}: peaks = {info['n_peaks']}  "
          f"|rho - 1/2pi|_inf = {info['linf_from_uniform']:.3e}")
    return info


def cmd_spectrum(cfg, out: Path) -> dict:
    kind, G, k = cfg["kind"], int(cfg["G"]), int(cfg["k"])
    if kind in ("kuramoto", "harmonic"):
        rep = stability.branch_spectrum(kind, float(cfg["delta"]), k, G, n=int(cfg["n"]), sector=cfg["sector"])
    elif kind == "bichromatic":
        rep = stability.branch_spectrum(kind, float(cfg["eta"]), k, G, sector=cfg["sector"])
    elif kind in ("branch", "density"):
        W, V = potential(cfg["W"]), potential(cfg["V"])
        beta, kappa = float(cfg["beta"]), float(cfg["kappa"])
        if kind == "branch":
            rho = solve_fixed_point(V, W, beta, kappa, r_init=float_list(cfg["r_init"]), G=G).density
        else:
            if not cfg["density"]:
                raise ConfigError("kind=density needs --density <csv>")
            rho = TorusDensity.from_csv(cfg["density"])
        H = stability.schroedinger_operator(rho, W, beta, V, kappa)
        rep = stability.schroedinger_spectrum(H, k, cfg["sector"],
                                              {"kind": kind, "beta": beta, "W": list(W.coeffs)})
    else:
        raise ConfigError(f"unknown spectrum kind {kind!r}")
    rep.to_csv(out / "spectrum.csv")
    rep.to_json(out / "spectrum.json")
    _emit("eigenvalues: " + ", ".join(f"{e:.6f}" for e in rep.eigenvalues))
    return {"eigenvalues": rep.eigenvalues.tolist()}


def perturbation_table(family: str, param: float, n: int = 1, m_max: int = 4, G: int = DEFAULT_GRID,
                       variant: str = "printed"):
    """Rows ``(m, closed form, diagonalised)`` for one perturbative family."""
    if family == "kuramoto":
        closed = [stability.perturbation_eigenvalue_kuramoto(m, param) for m in range(1, m_max + 1)]
        rep = stability.branch_spectrum("kuramoto", param, m_max, G)
    elif family == "harmonic":
        closed = [stability.perturbation_eigenvalue_harmonic(n, m, param, variant) for m in range(1, m_max + 1)]
        rep = stability.branch_spectrum("harmonic", param, m_max, G, n=n)
    elif family == "bichromatic":
        closed = [stability.perturbation_eigenvalue_bichromatic(m, param) for m in range(1, m_max + 1)]
        rep = stability.branch_spectrum("bichromatic", param, m_max, G)
    else:
        raise ConfigError(f"unknown family {family!r}")
    return np.column_stack([np.arange(1, m_max + 1), closed, rep.eigenvalues[:m_max]])


def cmd_perturb(cfg, out: Path) -> dict:
    fam = cfg["family"]
    param = float(cfg["eta"] if fam == "bichromatic" else cfg["delta"])
    rows = perturbation_table(fam, param, int(cfg["n"]), int(cfg["m_max"]), int(cfg["G"]), cfg["variant"])
    write_csv(out / "perturb.csv", ("m", "perturbation", "numerical"), rows)
    for m, a, b in rows:
        _emit(f"m = {int(m)}: perturbation {a:.6f}   numerical {b:.6f}")
    return {"rows": rows.tolist()}


def target_density(spec: str, G: int) -> TorusDensity:
    """``gibbs:b1,b2,...`` for ``exp(sum b_k cos kx)/Z`` or ``file:<csv>``."""
    if spec.startswith("gibbs:"):
        b = FourierPotential.parse(spec[6:])
        return TorusDensity.from_values(np.exp(b.on_grid(G)))
    if spec.startswith("file:"):
        return TorusDensity.from_csv(spec[5:]).with_grid(G)
    raise ConfigError(f"unknown target {spec!r}; use gibbs:<coeffs> or file:<csv>")


def cmd_design_v(cfg, out: Path) -> dict:
    W = potential(cfg["W"])
    G, beta, kappa = int(cfg["G"]), float(cfg["beta"]), float(cfg["kappa"])
    rho = target_density(str(cfg["target"]), G)
    V = design_confinement(rho, W, beta, kappa)
    res = stationary_residual(rho, V, W, beta, kappa)
    series, err = V.project(int(cfg["modes"]))
    write_csv(out / "V.csv", ("x", "V"), np.column_stack([V.x, V.values]))
    rho.to_csv(out / "target.csv")
    save_json(out / "design.json", {"residual": res, "projection_modes": int(cfg["modes"]),
                                    "projection_error": err, "projection_cos": series.cos_coeffs,
                                    "projection_sin": series.sin_coeffs})
    _emit(f"stationary residual = {res:.3e}  projection error ({cfg['modes']} modes) = {err:.3e}")
    return {"residual": res, "projection_error": err}


# ---------------------------------------------------------------------------
# Reproduction targets
# ---------------------------------------------------------------------------

def _long_time_figure(W, betas, t_short, t_long, notes):
    def run(cfg, out, backend):
        W_ = potential(W)
        T_long = float(cfg["T"] or t_long)
        betas_ = [float(cfg["beta"])] if cfg["beta"] else betas
        rho0 = pde.default_initial(int(cfg["G"]))
        summary = {"W": list(W_.coeffs), "betas": betas_, "beta_c": str(stability.critical_beta(W_)),
                   "T_short": t_short, "T_long": T_long, "notes": notes}
        rows = []
        for beta in betas_:
            pc = _pde_config(cfg, W_, ZERO, beta, T_long, sorted({0.0, t_short, T_long}))
            traj = pde.evolve(rho0, pc, backend=backend)
            info = _write_trajectory(out, traj, prefix=f"beta={beta:g}_")
            s = _density_summary(traj.final)
            rows.append([beta, traj.t_end, float(traj.converged), s["n_peaks"], s["linf_from_uniform"]])
            _emit(f"beta = {beta:g}: t_end = {traj.t_end:g} converged = {traj.converged} peaks = {s['n_peaks']}")
        write_csv(out / "summary.csv", ("beta", "t_end", "converged", "n_peaks", "linf_from_uniform"), rows)
        return summary
    return run


def _fig1(cfg, out, backend):
    W = FourierPotential((-1.0, -1.0))
    betas = [float(cfg["beta"])] if cfg["beta"] else [3.0, 10.0]
    info = {}
    for beta in betas:
        sols = enumerate_branches(ZERO, W, beta)
        for i, s in enumerate(sols):
            s.density.to_csv(out / f"beta={beta:g}_branch_{i}_{s.branch_label}.csv")
        write_csv(out / f"beta={beta:g}_order_parameters.csv", ("branch", "r1", "r2", "residual"),
                  [[i, *s.r, s.residual] for i, s in enumerate(sols)])
        info[f"{beta:g}"] = [s.to_dict() for s in sols]
        _emit(f"beta = {beta:g}: {len(sols)} branches " + ", ".join(s.branch_label for s in sols))
    return info


def _fig2(cfg, out, backend):
    deltas = np.linspace(0.0, 0.5, 26)
    rows = [[d, stability.perturbation_eigenvalue_kuramoto(1, d),
             stability.branch_spectrum("kuramoto", d, 1, int(cfg["G"])).eigenvalues[0]] for d in deltas]
    write_csv(out / "first_eigenvalue.csv", ("delta", "asymptotic", "numerical"), rows)
    return {"max_abs_difference": float(np.max(np.abs(np.diff(np.array(rows)[:, 1:], axis=1))))}


def _fig2b(cfg, out, backend):
    etas = np.linspace(0.0, 0.6, 25)
    rows = [[e, stability.perturbation_eigenvalue_bichromatic(1, e),
             stability.branch_spectrum("bichromatic", e, 1, int(cfg["G"])).eigenvalues[0]] for e in etas]
    write_csv(out / "first_eigenvalue.csv", ("eta", "perturbation", "numerical"), rows)
    return {"note": "closed form evaluated as printed; numerical column is the diagonalised operator"}


def _table(n):
    def run(cfg, out, backend):
        rows = perturbation_table("harmonic", 0.1, n, 4, int(cfg["G"]))
        alt = [stability.perturbation_eigenvalue_harmonic(n, m, 0.1, "derived") for m in range(1, 5)]
        rows = np.column_stack([rows, alt])
        write_csv(out / f"table{n - 1}.csv", ("m", "perturbation", "numerical", "perturbation_derived"), rows)
        for m, a, b, c in rows:
            _emit(f"m = {int(m)}: perturbation {a:.4f}   numerical {b:.4f}")
        return {"n": n, "delta": 0.1, "rows": rows.tolist(),
                "perturbation_derived": "m = n term with coefficient 2 n^2 / 3"}
    return run


def _pde_sde_figure(W, V, beta, T, N, runs, single=True, average=True, pde_perturb=None, notes=""):
    def run(cfg, out, backend):
        W_, V_ = potential(W), potential(V)
        G = int(cfg["G"])
        beta_ = float(cfg["beta"] or beta)
        T_ = float(cfg["T"] or T)
        N_ = int(cfg["N"] or N)
        runs_ = int(cfg["runs"] or runs)
        seed = int(cfg["seed"])
        rho0 = pde.default_initial(G)
        pde0 = initial_density("default", G, pde_perturb)
        traj = pde.evolve(pde0, _pde_config(cfg, W_, V_, beta_, T_, (0.0, T_), stop=False), backend=backend)
        traj.final.to_csv(out / "pde.csv")
        info = {"W": list(W_.coeffs), "V": list(V_.coeffs), "beta": beta_, "T": T_, "N": N_,
                "seed": seed, "pde_initial_perturbation": pde_perturb, "notes": notes,
                "pde": _density_summary(traj.final)}
        if average:
            sc = _sde_config(cfg, W_, V_, beta_, T_, N_, runs_, seed)
            _, avg, seeds, h = _ensemble(sc, rho0, G, None, None, backend)
            avg.to_csv(out / "sde_average.csv")
            info["average"] = {"runs": runs_, "seeds": seeds, "bandwidth": h,
                               "l1_to_pde": distance_l1(avg, traj.final),
                               "linf_to_uniform": float(np.max(np.abs(avg.values - UNIFORM_LEVEL)))}
            _emit(f"{runs_}-run average: L1 to PDE = {info['average']['l1_to_pde']:.4f}  "
                  f"|rho - 1/2pi|_inf = {info['average']['linf_to_uniform']:.4f}")
        if single:
            sc = _sde_config(cfg, W_, V_, beta_, T_, N_, 1, seed)
            finals, dens, _, h = _ensemble(sc, rho0, G, None, out, backend, tag="single_seed")
            shift, dist = align(traj.final, dens)
            moved = TorusDensity.from_values(np.roll(dens.values, -int(round(shift / (2 * np.pi) * G))))
            dens.to_csv(out / "sde_single.csv")
            moved.to_csv(out / "sde_single_aligned.csv")
            info["single"] = {"bandwidth": h, "shift": shift, "aligned_l1_to_pde": dist,
                              "l1_to_pde": distance_l1(dens, traj.final), "n_peaks": len(peaks(dens))}
            _emit(f"single run: aligned L1 to PDE = {dist:.4f} (shift {shift:.4f})  peaks = {info['single']['n_peaks']}")
        return info
    return run


def _snapshots(cfg, out, backend):
    G = int(cfg["G"])
    times = [0.0, 1.0, 5.0, 10.0, 20.0, 50.0]
    info = {}
    # 0.2 cos(x - pi/2) is not even; both solvers run in coordinates rotated by pi/2
    for name, W, v in (("left", (-1.0, -0.5), 0.0), ("right", (-1.0,), 0.2)):
        quarter = G // 4 if v else 0
        W_ = FourierPotential(W)
        V_ = FourierPotential((v,)) if v else ZERO
        rho0 = pde.default_initial(G).shifted(-quarter)
        traj = pde.evolve(rho0, _pde_config(cfg, W_, V_, 3.0, times[-1], times, stop=False), backend=backend)
        sc = _sde_config(cfg, W_, V_, 3.0, times[-1], cfg["N"] or 500, 1, cfg["seed"], times)
        snaps = sde.run(sc, rho0, backend=backend)
        rows = []
        for (t, rho), e in zip(traj.snapshots, snaps):
            rho = rho.shifted(quarter)
            rho.to_csv(out / f"{name}_pde_t={t:g}.csv")
            d = sde.empirical_density(e.positions + quarter * 2 * np.pi / G, G, backend=backend)
            d.to_csv(out / f"{name}_sde_t={t:g}.csv")
            rows.append([t, distance_l1(d, rho)])
        write_csv(out / f"{name}_l1.csv", ("t", "l1"), rows)
        info[name] = {"W": list(W), "V": "0.2 cos(x - pi/2)" if v else "0", "l1": rows}
        _emit(f"{name}: L1 by time " + ", ".join(f"{t:g}:{d:.3f}" for t, d in rows))
    return info


def _hkb(cfg, out, backend):
    a, g = float(cfg["alpha"]), float(cfg["gamma"])
    beta = float(cfg["beta"] or 3.0)
    # -alpha cos(x + pi) - gamma cos(2(x + pi)) = alpha cos x - gamma cos 2x
    V = FourierPotential((a, -g))
    W = FourierPotential((-1.0,))
    T = float(cfg["T"] or 1000.0)
    traj = pde.evolve(pde.default_initial(int(cfg["G"])), _pde_config(cfg, W, V, beta, T, (0.0, T)), backend=backend)
    traj.final.to_csv(out / "stationary.csv")
    s = _density_summary(traj.final)
    _emit(f"HKB alpha = {a:g} gamma = {g:g} beta = {beta:g}: peaks = {s['n_peaks']} converged = {traj.converged}")
    return {"alpha": a, "gamma": g, "beta": beta, "V": list(V.coeffs), **s, **traj.manifest()}


LONG_NOTE = "paper horizon 1e6 is run to 1e4 (or until steady)"

TARGETS = {
    "fig1": _fig1,
    "fig2": _fig2,
    "fig2b": _fig2b,
    "fig3": _long_time_figure((-3, -1), [0.5, 1.0, 2.0, 5.0], 5.0, 1e3, ""),
    "fig3a": _long_time_figure((-3, -1), [0.5, 1.0, 2.0, 5.0], 5.0, 1e3, ""),
    "fig3b": _long_time_figure((-3, -1, -1), [0.5, 1.0, 2.0, 5.0], 5.0, 1e3, ""),
    "fig4a": _long_time_figure((-1, -2), [0.5, 1.5, 2.0, 5.0], 1e3, 1e4, LONG_NOTE),
    "fig4b": _long_time_figure((-1, -1, -3), [0.5, 1.0, 2.0, 5.0], 1e3, 1e4, LONG_NOTE),
    "fig5": _pde_sde_figure((-1, -0.5), (), 3.0, 200.0, 500, 100),
    "fig6": _pde_sde_figure((0, 0, 0, -0.25, 0, -1 / 6), (), 10.0, 200.0, 500, 1, average=False,
                            pde_perturb=[(4, 1e-3)],
                            notes="the kernel has no mode 1, so the PDE is seeded with 1e-3 cos(4x)"),
    "fig7": _pde_sde_figure((-1, 0.5), (), 3.0, 200.0, 100, 1, average=False),
    "fig8": _pde_sde_figure((-1,), (-0.2,), 3.0, 1000.0, 500, 10, single=False),
    "fig9": _pde_sde_figure((0, -2), (-1,), 3.0, 7000.0, 500, 10, single=False),
    "fig10": _hkb,
    "hkb": _hkb,
    "snapshots": _snapshots,
    "table1": _table(2),
    "table2": _table(3),
    "table3": _table(4),
}


def cmd_reproduce(cfg, out: Path, backend=None) -> dict:
    target = cfg["target"]
    if target not in TARGETS:
        raise UnknownTarget(f"unknown target {target!r}; choose from {', '.join(TARGETS)}")
    return TARGETS[target](cfg, out, backend)


COMMANDS = {
    "critical": cmd_critical,
    "branches": cmd_branches,
    "evolve": cmd_evolve,
    "particles": cmd_particles,
    "spectrum": cmd_spectrum,
    "perturb": cmd_perturb,
    "design-v": cmd_design_v,
    "reproduce": cmd_reproduce,
}
USES_BACKEND = {"evolve", "particles", "reproduce"}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_physics(p, *names):
    opts = {
        "W": dict(help="interaction coefficients a_1,a_2,... (e.g. -1,-0.5)"),
        "V": dict(help="confinement coefficients v_1,v_2,... (0 for none)"),
        "beta": dict(type=float, help="inverse temperature"),
        "kappa": dict(type=float, help="interaction strength"),
        "G": dict(type=int, help="grid size"),
        "dt": dict(type=float, help="time step"),
        "T": dict(type=float, help="final time"),
        "N": dict(type=int, help="particles per run"),
        "seed": dict(type=int, help="first RNG seed"),
        "runs": dict(type=int, help="number of independent runs"),
    }
    for n in names:
        p.add_argument(f"--{n}", dest=n, default=None, **opts[n])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvtorus", description="McKean-Vlasov dynamics on the circle.")
    p.add_argument("--version", action="version", version=f"mvtorus {__version__}")
    p.add_argument("--config", help="TOML file with parameters")
    p.add_argument("--from-manifest", help="replay the run recorded in a manifest.json")
    p.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./{DEFAULT_ROOT})")
    p.add_argument("--backend", choices=["numba", "numpy"], help="kernel backend")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("critical", help="critical inverse temperature of W")
    _add_physics(s, "W")

    s = sub.add_parser("branches", help="stationary branches of the self-consistency equations")
    _add_physics(s, "W", "V", "beta", "kappa", "G")
    s.add_argument("--method", choices=["picard", "newton"], default=None)

    s = sub.add_parser("evolve", help="integrate the PDE")
    _add_physics(s, "W", "V", "beta", "kappa", "G", "dt", "T")
    s.add_argument("--snapshots", help="comma separated snapshot times")
    s.add_argument("--init", help="default | uniform | file:<csv>")
    s.add_argument("--perturb", help="extra cosine seeds k:amp,k:amp")
    s.add_argument("--tol-steady", dest="tol_steady", type=float, default=None)
    s.add_argument("--run-to-end", dest="run_to_end", action="store_const", const=True, default=None,
                   help="keep integrating after the steady-state test passes")

    s = sub.add_parser("particles", help="simulate the interacting particle system")
    _add_physics(s, "W", "V", "beta", "kappa", "G", "dt", "T", "N", "seed", "runs")
    s.add_argument("--bandwidth", type=float, default=None)
    s.add_argument("--snapshots", help="comma separated snapshot times")
    s.add_argument("--init", help="default | uniform | file:<csv>")

    s = sub.add_parser("spectrum", help="spectrum of the ground-state transformed linearisation")
    _add_physics(s, "W", "V", "beta", "kappa", "G")
    s.add_argument("--kind", choices=["kuramoto", "harmonic", "bichromatic", "branch", "density"], default=None)
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--eta", type=float, default=None)
    s.add_argument("--n", type=int, default=None, help="interaction mode for kind=harmonic")
    s.add_argument("--k", type=int, default=None, help="number of eigenvalues")
    s.add_argument("--sector", choices=["all", "even", "odd"], default=None)
    s.add_argument("--r-init", dest="r_init", default=None)
    s.add_argument("--density", default=None, help="CSV (x, rho) for kind=density")

    s = sub.add_parser("perturb", help="closed-form perturbation eigenvalues next to numerics")
    s.add_argument("--family", choices=["kuramoto", "harmonic", "bichromatic"], default=None)
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--eta", type=float, default=None)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--m-max", dest="m_max", type=int, default=None)
    s.add_argument("--variant", choices=["printed", "derived"], default=None)
    _add_physics(s, "G")

    s = sub.add_parser("design-v", help="confinement that makes a target density stationary")
    _add_physics(s, "W", "beta", "kappa", "G")
    s.add_argument("--target", default=None, help="gibbs:b1,b2,... or file:<csv>")
    s.add_argument("--modes", type=int, default=None)

    s = sub.add_parser("reproduce", help="canonical figure and table pipelines")
    s.add_argument("target", help=", ".join(TARGETS))
    _add_physics(s, "beta", "T", "N", "runs", "seed", "G", "dt")
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--gamma", type=float, default=None)
    return p


def _seeds(cfg: dict, result) -> list | None:
    if isinstance(result, dict) and "seeds" in result:
        return result["seeds"]
    return None if cfg.get("seed") is None else [cfg["seed"]]


def _error_record(exc: Exception) -> dict:
    msg = exc.args[0] if len(exc.args) == 1 else str(exc)
    rec = {"status": "error", "error_type": type(exc).__name__, "message": str(msg)}
    for attr in ("time", "iterations", "residual"):
        if hasattr(exc, attr):
            rec[attr] = getattr(exc, attr)
    return rec


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = None
    t0 = time.perf_counter()
    try:
        if args.from_manifest:
            with open(args.from_manifest) as fh:
                recorded = json.load(fh)
            command, cfg = recorded["command"], recorded["config"]
            backend = args.backend or recorded.get("backend")
        else:
            if args.command is None:
                parser.print_help(sys.stderr)
                return EXIT_CONFIG
            command = args.command
            file_cfg = load_toml(args.config) if args.config else {}
            cfg = resolve(command, file_cfg, vars(args))
            backend = args.backend
        backend = _backend.resolve(backend)
        if command == "reproduce" and cfg.get("target") not in TARGETS:
            raise UnknownTarget(f"unknown target {cfg.get('target')!r}; choose from {', '.join(TARGETS)}")
        root = Path(args.out or os.environ.get(OUTPUT_ENV, DEFAULT_ROOT))
        out_dir = run_directory(root, command, cfg)
        fn = COMMANDS[command]
        result = fn(cfg, out_dir, backend) if command in USES_BACKEND else fn(cfg, out_dir)
        manifest = {"status": "ok", "command": command, "config": _jsonable(cfg), "version": __version__,
                    "backend": backend, "seeds": _seeds(cfg, result), "wall_time": time.perf_counter() - t0,
                    "outputs": sorted(p.name for p in out_dir.iterdir()), "result": result}
        save_json(out_dir / "manifest.json", manifest)
        _emit(f"output: {out_dir}")
        return 0
    except (ConfigError, UnknownTarget, KeyError, ValueError, FloatingPointError, MVTorusError,
            OSError, json.JSONDecodeError) as exc:
        rec = _error_record(exc)
        if out_dir is not None:
            save_json(out_dir / "manifest.json", {**rec, "wall_time": time.perf_counter() - t0})
        print(json.dumps(rec, default=str), file=sys.stderr)
        if isinstance(exc, UnknownTarget):
            return EXIT_TARGET
        if isinstance(exc, (ConfigError, KeyError, OSError, json.JSONDecodeError)):
            return EXIT_CONFIG
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
