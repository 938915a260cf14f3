#!/usr/bin/env python3
"""Watch a dissipative ensemble settle into its stationary profile.

An ensemble starts between the two wells of a bistable potential under a
strongly contractive environment.  The field is reconstructed on a fixed
grid at a ladder of checkpoint times and consecutive snapshots are
compared in relative L2.  The differences fall steadily; once the final
one sits below the threshold the profile has stopped moving and the run
is declared converged.

This is a trimmed version of the shipped steady-state configurations
(fewer samples, shorter horizon).  The triple-well configuration in
configs/ shows the slow counterpart: its central well is so soft that
the same ladder needs t = 20 to flatten out.
"""

import numpy as np

from openwfp import (DissipationParams, DoubleWellPotential, GaussianState,
                     ExperimentSpec, IntegratorConfig, SteadyStateSettings,
                     observable_from_name, steady_state_study)

spec = ExperimentSpec(
    name="double-well-demo",
    potential=DoubleWellPotential(),
    dissipation=DissipationParams(dim=1, epsilon=1 / 32, alpha=[0.4],
                                  beta=[0.1], gamma=[-1j], mu=[1.0]),
    init=GaussianState(dim=1, mean=[0.0, 0.0], cov=np.diag([1.0, 1.0])),
    observables=(("x", observable_from_name("x")),),
    sample_sizes=(1600,),
    epsilons=(1 / 32,),
    t_final=8.0,
    integrator=IntegratorConfig(dt=1e-3, pd_check_interval=0),
    n_repeat=2,
    reference="none",
    seed=17,
)
settings = SteadyStateSettings(checkpoints=(2.0, 4.0, 6.0, 8.0),
                               threshold=0.05,
                               grid=((-4.0, 4.0, 128), (-4.0, 4.0, 128)))

report = steady_state_study(spec, settings)
print(f"{'interval':>14} {'rel L2 diff':>12}")
for t0, t1, diff in report.rows():
    print(f"  [{t0:4.1f}, {t1:4.1f}] {diff:12.5f}")
print(f"\nconverged below {report.threshold}: {report.converged}")
