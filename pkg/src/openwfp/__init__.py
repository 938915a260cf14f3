"""Frozen Gaussian sampling and reference solvers for dissipative
phase-space dynamics.

The package has three solver layers plus an experiment harness:

* ``dynamics`` evolves a single Gaussian packet (center, shape matrix,
  amplitude) under the open-system flow.
* ``sampling`` draws packet ensembles, evolves them in bulk, estimates
  observables with sampling-error bars, and reconstructs the phase-space
  field on demand.
* ``reference_gaussian`` and ``reference_grid`` are the two independent
  benchmarks: a closed-form moment flow for quadratic potentials and a
  split-step spectral solver for everything else.
* ``harness`` turns a config file into error tables, epsilon scans,
  long-time stability comparisons, and steady-state detection, all
  seed-reproducible and worker-count independent.

``openwfp`` on the command line (or ``python -m openwfp``) drives the
same machinery from versioned config files.
"""

from .core import (DissipationParams, DoubleWellPotential, GaussianState,
                   HarmonicPotential, NumericalError, Potential,
                   TripleWellPotential, ValidationError)
from .dynamics import (IntegratorConfig, PacketTrajectory,
                       PositiveDefinitenessLost, Wavepacket, evolve,
                       packet_mass, rhs_closed, rhs_open, rhs_sigma, rk4_step)
from .sampling import (EnsembleEstimate, GridFunction, Linear, PacketEnsemble,
                       Quadratic, SamplingConfig, WignerField,
                       ensemble_observable, evolve_ensemble, make_ensemble,
                       packet_masses, packet_values, reconstruct)
from .reference_gaussian import (MomentState, integrate_moments,
                                 reference_observable)
from .reference_grid import (GridSolverConfig, GridTrajectory,
                             ImaginaryResidue, boundary_mass_fraction,
                             field_observable, grid_mass, solve_grid)
from .harness import (EpsilonReport, ErrorTable, ExperimentSpec,
                      RmseEstimate, StabilityReport, StabilitySettings,
                      SteadyStateReport, SteadyStateSettings,
                      convergence_table, convergence_tables,
                      epsilon_independence_report, estimate_rmse,
                      reference_value, reference_values, stability_study,
                      steady_state_study)
from .configio import load_config, observable_from_name
from .formats import (read_grid_dump, read_table_csv, write_grid_dump,
                      write_table_csv)

__version__ = "0.1.0"

__all__ = [
    "DissipationParams", "DoubleWellPotential", "GaussianState",
    "HarmonicPotential", "NumericalError", "Potential",
    "TripleWellPotential", "ValidationError",
    "IntegratorConfig", "PacketTrajectory", "PositiveDefinitenessLost",
    "Wavepacket", "evolve", "packet_mass", "rhs_closed", "rhs_open",
    "rhs_sigma", "rk4_step",
    "EnsembleEstimate", "GridFunction", "Linear", "PacketEnsemble",
    "Quadratic", "SamplingConfig", "WignerField", "ensemble_observable",
    "evolve_ensemble", "make_ensemble", "packet_masses", "packet_values",
    "reconstruct",
    "MomentState", "integrate_moments", "reference_observable",
    "GridSolverConfig", "GridTrajectory", "ImaginaryResidue",
    "boundary_mass_fraction", "field_observable", "grid_mass", "solve_grid",
    "EpsilonReport", "ErrorTable", "ExperimentSpec", "RmseEstimate",
    "StabilityReport", "StabilitySettings", "SteadyStateReport",
    "SteadyStateSettings", "convergence_table", "convergence_tables",
    "epsilon_independence_report", "estimate_rmse", "reference_value",
    "reference_values", "stability_study", "steady_state_study",
    "load_config", "observable_from_name",
    "read_grid_dump", "read_table_csv", "write_grid_dump",
    "write_table_csv",
    "__version__",
]
