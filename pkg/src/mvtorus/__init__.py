"""Stationary states, phase transitions and dynamics of McKean-Vlasov equations on the circle."""
__version__ = "0.1.0"

from .errors import (BlowUp, ConfigError, DomainError, GridMismatch, GridTooSmall, InsufficientData,
                     MVTorusError, NoConvergence, NonPositiveDensity, NotStationaryWarning,
                     OverflowRisk, UnknownTarget)
from .field import (TorusDensity, align, boltzmann, distance_l1, distance_l2, distance_linf,
                    from_coefficients, gibbs, peaks, uniform)
from .potentials import (ZERO, FourierPotential, GridPotential, TrigSeries, convolve, derivative,
                         design_confinement, evaluate)
from .selfconsistency import (SelfConsistencySolution, bichromatic_r_approx, enumerate_branches,
                              harmonic_r_approx, kuramoto_r_approx, sc_map, solve_fixed_point,
                              stationary_residual)
from .pde import PdeConfig, Trajectory, default_initial, evolve, free_energy, step
from .particles import (ParticleEnsemble, SdeConfig, em_step, empirical_density, ensemble_average,
                        run, sample_initial)
from .stability import (SpectrumReport, critical_beta, extract_decay_rate, growth_rates,
                        perturbation_eigenvalue_bichromatic, perturbation_eigenvalue_harmonic,
                        perturbation_eigenvalue_kuramoto, schroedinger_operator,
                        schroedinger_spectrum, second_variation_spectrum)
