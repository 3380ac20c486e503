import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from mvtorus import pde
from mvtorus.errors import BlowUp
from mvtorus.field import TorusDensity, distance_linf, from_coefficients, gibbs, peaks, uniform
from mvtorus.pde import PdeConfig, default_initial, evolve, free_energy, step
from mvtorus.potentials import ZERO, FourierPotential
from mvtorus.selfconsistency import solve_fixed_point, stationary_residual

LOG_UNIFORM = -1.8378770664093453  # log(1/2pi)


def test_default_initial():
    rho = default_initial(256)
    assert rho.values[64] == pytest.approx(1 / (2 * np.pi), abs=1e-16)   # x = pi/2
    assert rho.values[128] == pytest.approx(1 / (2 * np.pi) + 0.01, abs=1e-16)
    assert rho.mass == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("kwargs", [dict(beta=0), dict(dt=-1), dict(G=30), dict(G=33),
                                    dict(t_final=1e-5), dict(W=FourierPotential.mode(40, -1.0), G=64)])
def test_config_validation(kwargs):
    base = dict(beta=2.0, W=FourierPotential((-1.0,)))
    base.update(kwargs)
    with pytest.raises(ValueError):
        PdeConfig(**base)


def test_free_energy_examples(kuramoto):
    assert free_energy(uniform(), ZERO, ZERO, 1.0) == pytest.approx(LOG_UNIFORM, abs=1e-14)
    for kappa in (0.5, 1.0, 3.0):
        assert free_energy(uniform(), ZERO, kuramoto, 1.0, kappa) == pytest.approx(LOG_UNIFORM, abs=1e-14)
    peak = solve_fixed_point(ZERO, kuramoto, 3.0).density
    assert free_energy(peak, ZERO, kuramoto, 3.0) < free_energy(uniform(), ZERO, kuramoto, 3.0)


def test_free_energy_kuramoto_closed_form(kuramoto):
    # F = (1/beta)(beta r m - log Z ...) checked against direct double quadrature
    rho = gibbs(ZERO, kuramoto, [0.5], 2.0, G=128)
    x = rho.x
    v = rho.values
    h = 2 * np.pi / 128
    ent = np.sum(v * np.log(v)) * h / 2.0
    inter = 0.5 * np.sum(-np.cos(x[:, None] - x[None, :]) * v[:, None] * v[None, :]) * h * h
    assert free_energy(rho, ZERO, kuramoto, 2.0) == pytest.approx(ent + inter, abs=1e-13)


def test_step_keeps_uniform(backend):
    cfg = PdeConfig(beta=3.0, W=FourierPotential((-1.0, -2.0, 0.5)))
    assert distance_linf(step(uniform(), cfg, backend), uniform()) < 1e-13


def test_step_keeps_stationary_state(kuramoto, backend):
    sol = solve_fixed_point(ZERO, kuramoto, 3.0)
    cfg = PdeConfig(beta=3.0, W=kuramoto)
    assert distance_linf(step(sol.density, cfg, backend), sol.density) < 1e-8


def test_step_blowup():
    cfg = PdeConfig(beta=1.0, W=FourierPotential((-1e5,)), dt=1.0)
    with pytest.raises(BlowUp):
        rho = default_initial()
        for _ in range(20):
            rho = step(rho, cfg)


def test_subcritical_perturbation_decays_monotonically(kuramoto):
    cfg = PdeConfig(beta=1.0, W=kuramoto, t_final=10.0, snapshot_times=tuple(np.arange(0, 10.01, 0.5)),
                    stop_when_steady=False)
    traj = evolve(default_initial(), cfg)
    dev = [distance_linf(r, uniform()) for _, r in traj.snapshots]
    assert np.all(np.diff(dev) < 0)


def test_subcritical_converges_to_uniform():
    cfg = PdeConfig(beta=0.5, W=FourierPotential((-3.0, -1.0)), t_final=1000.0)
    traj = evolve(default_initial(), cfg)
    assert traj.converged and traj.t_converged < 1000
    assert distance_linf(traj.steady_state, uniform()) < 1e-4


def test_supercritical_single_peak():
    W = FourierPotential((-3.0, -1.0))
    cfg = PdeConfig(beta=2.0, W=W, t_final=1000.0)
    traj = evolve(default_initial(), cfg)
    assert traj.converged
    assert len(peaks(traj.steady_state)) == 1
    assert stationary_residual(traj.steady_state, ZERO, W, 2.0) < 1e-6


def test_trajectory_bookkeeping(kuramoto):
    cfg = PdeConfig(beta=3.0, W=kuramoto, t_final=5.0, snapshot_times=(0.0, 0.25, 2.0, 5.0))
    traj = evolve(default_initial(), cfg)
    assert list(traj.times) == [0.0, 0.25, 2.0, 5.0]
    t = [s for s, _ in traj.free_energy_series]
    assert np.all(np.diff(t) > 0) and t[0] == 0.0 and t[-1] == 5.0
    assert traj.final is traj.snapshots[-1][1]
    assert traj.snapshot_at(2.1) is traj.snapshots[2][1]
    m = traj.manifest()
    assert m["converged"] is False and m["t_end"] == 5.0


def test_backends_agree(kuramoto):
    cfg = PdeConfig(beta=3.0, W=FourierPotential((-1.0, -0.5)), V=FourierPotential((0.1,)),
                    t_final=3.0, snapshot_times=(3.0,))
    a = evolve(default_initial(), cfg, backend="numba").final
    b = evolve(default_initial(), cfg, backend="numpy").final
    assert distance_linf(a, b) < 1e-12


def test_blowup_halves_dt(caplog):
    # explicit transport at dt = 0.5 is unstable once the peak forms; halving rescues it
    cfg = PdeConfig(beta=4.0, W=FourierPotential((-2.0,)), dt=0.5, t_final=20.0)
    traj = evolve(default_initial(), cfg)
    assert traj.dt_used == 0.125
    assert traj.converged
    assert "halving dt" in caplog.text


def test_blowup_gives_up_after_ten_halvings():
    cfg = PdeConfig(beta=1.0, W=FourierPotential((-1e6,)), dt=1.0, t_final=2.0)
    with pytest.raises(BlowUp) as info:
        evolve(default_initial(), cfg)
    assert info.value.time == 0.0


def test_unresolved_grid_is_reported():
    # W=-3cos 3x at beta=3 needs more than the 42 modes of G=128: the truncation
    # undershoot is a resolution problem that no time step fixes
    cfg = PdeConfig(beta=3.0, W=FourierPotential((0.0, 0.0, -3.0)), V=FourierPotential((0.5,)),
                    G=128, t_final=3.0, probe_interval=0.1)
    with pytest.raises(BlowUp, match="increase G"):
        evolve(uniform(128), cfg)
    ok = evolve(uniform(256), PdeConfig(beta=3.0, W=cfg.W, V=cfg.V, G=256, t_final=3.0))
    assert ok.final.values.min() > 0


@st.composite
def scenarios(draw):
    n = draw(st.integers(1, 3))
    a = draw(st.lists(st.floats(-3.0, 1.0), min_size=n, max_size=n))
    v = draw(st.lists(st.floats(-0.5, 0.5), min_size=0, max_size=2))
    beta = draw(st.floats(0.3, 6.0))
    amps = draw(st.lists(st.floats(-0.04, 0.04), min_size=3, max_size=3))
    # keep the Gibbs-like states resolved by the 85 modes of G=256
    strength = beta * (sum(abs(c) for c in a) + 2 * sum(abs(c) for c in v))
    assume(n * (strength + 3 * np.sqrt(strength) + 5) <= 85)
    return FourierPotential(a), FourierPotential(v), beta, amps


@given(scenarios())
@settings(max_examples=15, deadline=None)
def test_mass_and_free_energy(sc):
    W, V, beta, amps = sc
    rho0 = from_coefficients(1 / (2 * np.pi), amps, [0.0, amps[0], -amps[1]], G=256)
    cfg = PdeConfig(beta=beta, W=W, V=V, G=256, t_final=3.0, probe_interval=0.1,
                    snapshot_times=tuple(np.round(np.arange(0.1, 3.01, 0.1), 10)), stop_when_steady=False)
    traj = evolve(rho0, cfg)
    for _, rho in traj.snapshots:
        assert abs(rho.mass - 1) < 1e-12
    F = np.array([f for _, f in traj.free_energy_series])
    assert np.all(np.diff(F) <= 1e-9)


def test_mass_defect_before_normalisation(kuramoto):
    cfg = PdeConfig(beta=4.0, W=FourierPotential((-1.0, -1.0)))
    st_ = pde._Stepper(cfg, cfg.dt)
    c = pde._to_spectrum(default_initial(), cfg.K)
    c2, _ = st_.advance(c, 2000)
    raw = pde._grid_values(c2, cfg.G)
    assert abs(np.mean(raw) * 2 * np.pi - 1) < 1e-10


def test_evolve_many_and_with_beta(kuramoto):
    base = PdeConfig(beta=1.0, W=kuramoto, t_final=2.0)
    cfgs = [pde.with_beta(base, b) for b in (0.5, 1.0)]
    out = pde.evolve_many(default_initial(), cfgs)
    assert [t.t_end for t in out] == [2.0, 2.0]


def test_grid_change_on_input(kuramoto):
    cfg = PdeConfig(beta=1.0, W=kuramoto, G=64, t_final=1.0)
    traj = evolve(default_initial(256), cfg)
    assert traj.final.G == 64
