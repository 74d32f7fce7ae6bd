"""Numerical laboratory for the attractive Hartree equation.

Spectral time propagation, variational ground states, soliton stability and
blow-up diagnostics, the point-particle limit, and a desk-scale exact
N-boson validator of the mean-field description.
"""

__version__ = "0.1.0"

from .grid import (Field, Lattice, SpectralPlan, convolve, forward, gradient,
                   integrate, inverse, laplacian, read_snapshot,
                   set_fft_workers, write_snapshot)
from .potentials import (ExternalPotential, KineticKind, TwoBodyPotential,
                         is_subcritical, kernel_symbol, mean_field_potential,
                         sample_V)
from .observables import (angular_momentum, centroid, charge,
                          com_inertia_residual, energy, manifold_distance,
                          momentum, variance, variance_identity_residual)
from .propagator import PropagatorConfig, TrajectoryLog, boost, evolve, step
from .ground_state import (EnergyCurve, GroundState, check_subadditivity,
                           critical_point, dual_slope_check, e0, energy_curve,
                           minimize, scaling_exponent, symmetry_check,
                           virial_check)
from .linearization import LinearizedOperator, low_spectrum, null_residuals
from .linearization import apply as linearized_apply
from .newtonian import (NewtonConfig, SolitonBody, build_initial, compare,
                        harmonic_orbit_test, newton_ode, track_centers)
from .many_body import (FockBasis, ManyBodyHamiltonian, build_hamiltonian,
                        coherent_state, conjecture_probe, evolve_exact,
                        ground_energy_scaling, mean_field_deviation,
                        reduced_density)
