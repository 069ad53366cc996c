"""mrtlab: magnetic Rayleigh-Taylor stability laboratory.

Linear stability (critical field strength, growth rates) and nonlinear
Lagrangian time integration for a viscous, non-resistive MHD fluid in a
horizontally periodic 2D slab with slip walls.
"""

__version__ = "0.1.0"

from .profiles import (DensityProfile, EquilibriumState, build_affine_profile,
                       build_tanh_profile, check_rt_condition,
                       eval_gravity_term, hydrostatic_pressure, load_profile)
from .spectral import (Field, SlabGrid, VectorField, ddy1, ddy2,
                       helmholtz_solve, project_div_free, solve_stokes_navier,
                       transform)
from .linstab import (CriticalField, DispersionCurve, LinearMode,
                      StabilityOperator, alpha_of_s, compute_mc,
                      dispersion_curve, fastest_mode, growth_rate,
                      potential_energy)
from .dynamics import (FlowState, RunResult, SimConfig, Stepper, build_A,
                       run, seed_initial_data, to_eulerian)
from .energetics import (DecayFit, EnergyReport, EnergyReporter,
                         detect_escape_time, drift_limit, fit_rate,
                         monitor_energy_inequality, sobolev_norm,
                         total_energy_and_dissipation, weighted_functionals)
