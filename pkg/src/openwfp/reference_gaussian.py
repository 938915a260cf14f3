"""Semi-analytic reference for quadratic potentials.

Under a quadratic potential the phase-space density stays Gaussian for all
time, so its mean and full covariance obey a closed linear ODE system.
Integrating that system at a fine step gives reference observable values
whose error is negligible next to Monte Carlo sampling error.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .core import (
    DissipationParams,
    GaussianState,
    HarmonicPotential,
    ValidationError,
    build_aux_matrices,
)
from .sampling import GridFunction, Linear, Quadratic

__all__ = [
    "MomentState",
    "moment_rhs",
    "integrate_moments",
    "reference_observable",
]


@dataclasses.dataclass(frozen=True)
class MomentState:
    """Mean and full (un-rescaled) covariance of the phase-space Gaussian."""

    mean: np.ndarray
    cov: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValidationError("cov shape must match the mean length")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValidationError("cov must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))
        object.__setattr__(self, "time", float(self.time))


def _require_quadratic(pot):
    if not isinstance(pot, HarmonicPotential):
        raise ValidationError(
            "moment reference requires an exactly quadratic potential; use "
            "the grid reference for anharmonic ones")


def _drift_pieces(pot, params):
    aux = build_aux_matrices(params, pot.a2)
    F = aux.cmat - aux.gamma2 - aux.mtilde
    source = params.epsilon * (aux.bmat - aux.gamma1)
    f = np.concatenate([np.zeros(params.dim), -pot.a1])
    return F, f, source


def moment_rhs(ms, pot, params):
    """Time derivative (dmean, dcov) of the Gaussian moments."""
    _require_quadratic(pot)
    F, f, source = _drift_pieces(pot, params)
    dmean = F @ ms.mean + f
    dcov = F @ ms.cov + ms.cov @ F.T + source
    return dmean, 0.5 * (dcov + dcov.T)


def integrate_moments(init, pot, params, t_final, dt=1e-4):
    """RK4-integrate the moment system from the initial Gaussian to t_final."""
    _require_quadratic(pot)
    if t_final < 0.0:
        raise ValidationError("t_final must be nonnegative")
    F, f, source = _drift_pieces(pot, params)

    def rhs(m, S):
        return F @ m + f, F @ S + S @ F.T + source

    m = np.array(init.mean, dtype=float)
    S = np.array(init.cov, dtype=float)
    n_full = int(np.floor(t_final / dt + 1e-9))
    rem = t_final - n_full * dt
    if rem < dt * 1e-9:
        rem = 0.0
    steps = [dt] * n_full + ([rem] if rem > 0.0 else [])
    for h in steps:
        k1m, k1s = rhs(m, S)
        k2m, k2s = rhs(m + 0.5 * h * k1m, S + 0.5 * h * k1s)
        k3m, k3s = rhs(m + 0.5 * h * k2m, S + 0.5 * h * k2s)
        k4m, k4s = rhs(m + h * k3m, S + h * k3s)
        m = m + h / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
        S = S + h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
        S = 0.5 * (S + S.T)
    return MomentState(mean=m, cov=S, time=t_final)


def reference_observable(init, pot, params, t, obs, dt=1e-4):
    """Exact Gaussian expectation of the observable at time t."""
    ms = integrate_moments(init, pot, params, t, dt=dt)
    if isinstance(obs, Linear):
        return float(obs.b @ ms.mean) + obs.c
    if isinstance(obs, Quadratic):
        return (float(ms.mean @ obs.Q @ ms.mean) + float(obs.b @ ms.mean)
                + obs.c + float(np.trace(obs.Q @ ms.cov)))
    if isinstance(obs, GridFunction):
        raise ValidationError(
            "the moment reference evaluates Linear and Quadratic "
            "observables only")
    raise ValidationError(f"unsupported observable type {type(obs).__name__}")
