"""Moment-ODE reference: drift structure, duality, and exactness checks."""

from __future__ import annotations

import numpy as np
import pytest

from openwfp.core import (
    DissipationParams,
    DoubleWellPotential,
    GaussianState,
    HarmonicPotential,
    ValidationError,
)
from openwfp.dynamics import IntegratorConfig, Wavepacket, rhs_open, rhs_sigma
from openwfp.reference_gaussian import (
    MomentState,
    integrate_moments,
    moment_rhs,
    reference_observable,
)
from openwfp.sampling import (
    GridFunction,
    Linear,
    Quadratic,
    SamplingConfig,
    ensemble_observable,
    evolve_ensemble,
    make_ensemble,
)

EPS = 1.0 / 16


def std_params(eps=EPS):
    return DissipationParams(dim=1, epsilon=eps, alpha=[0.4], beta=[0.1],
                             gamma=[1j], mu=[-1.0])


def zero_params():
    return DissipationParams(dim=1, epsilon=0.5, alpha=[0.0], beta=[0.0],
                             gamma=[0.0], mu=[0.0])


def harmonic():
    return HarmonicPotential([[1.0]], [1.0])


def init_state():
    return GaussianState(dim=1, mean=[-0.1, 0.2], cov=np.diag([5.0, 5.0]))


def test_closed_harmonic_equilibrium():
    ms = MomentState(mean=[1.0, 0.0], cov=np.eye(2))
    dmean, dcov = moment_rhs(ms, HarmonicPotential([[1.0]]), zero_params())
    assert np.allclose(dmean, [0.0, -1.0], atol=1e-15)
    assert np.allclose(dcov, 0.0, atol=1e-15)


def test_drift_matrix_structure():
    # standard dissipative set with V = x^2/2 + x: dmean = F m + f with
    # F = [[0, 1], [-1, 2]] and f = (0, -1), read off column by column
    params = std_params()
    pot = harmonic()
    d0, _ = moment_rhs(MomentState(mean=[0.0, 0.0], cov=np.eye(2)), pot, params)
    d1, _ = moment_rhs(MomentState(mean=[1.0, 0.0], cov=np.eye(2)), pot, params)
    d2, _ = moment_rhs(MomentState(mean=[0.0, 1.0], cov=np.eye(2)), pot, params)
    assert np.allclose(d0, [0.0, -1.0], atol=1e-15)           # f
    assert np.allclose(d1 - d0, [0.0, -1.0], atol=1e-15)      # F column 1
    assert np.allclose(d2 - d0, [1.0, 2.0], atol=1e-15)       # F column 2


def test_mean_drift_matches_packet_center_flow():
    params = std_params()
    pot = harmonic()
    wp = Wavepacket(dim=1, q=[-0.1], p=[0.2], G=0.2 * np.eye(2), A=1.0)
    d = rhs_open(wp, pot, params)
    dmean, _ = moment_rhs(MomentState(mean=[-0.1, 0.2], cov=np.eye(2)),
                          pot, params)
    assert dmean[0] == pytest.approx(d.dq[0], abs=1e-15)
    assert dmean[1] == pytest.approx(d.dp[0], abs=1e-15)


def test_covariance_flow_is_rescaled_shape_flow():
    # with S = eps * Sigma the full-covariance flow is eps times the shape
    # flow, including the inhomogeneity
    params = std_params()
    pot = harmonic()
    sigma = np.diag([5.0, 5.0])
    _, dcov = moment_rhs(MomentState(mean=[0.0, 0.0], cov=EPS * sigma),
                         pot, params)
    dsig = rhs_sigma(sigma, pot, params, [0.0])
    assert np.max(np.abs(dcov - EPS * dsig)) < 1e-12
    assert np.allclose(dcov, EPS * np.array([[0.1, 0.0], [0.0, 20.4]]),
                       atol=1e-12)


def test_reference_initial_time_is_exact():
    val = reference_observable(init_state(), harmonic(), std_params(), 0.0,
                               Linear(b=[1.0, 0.0]))
    assert val == pytest.approx(-0.1, abs=1e-15)


def test_reference_half_period_rotation():
    init = GaussianState(dim=1, mean=[1.0, 0.0], cov=np.eye(2))
    val = reference_observable(init, HarmonicPotential([[1.0]]), zero_params(),
                               np.pi, Linear(b=[1.0, 0.0]))
    assert abs(val + 1.0) < 1e-10


def test_reference_step_refinement():
    args = (init_state(), harmonic(), std_params(), 1.0, Linear(b=[1.0, 0.0]))
    a = reference_observable(*args, dt=1e-4)
    b = reference_observable(*args, dt=5e-5)
    assert abs(a - b) < 1e-10


def test_closed_flow_preserves_phase_space_volume():
    init = GaussianState(dim=1, mean=[0.3, -0.2], cov=np.diag([2.0, 0.5]))
    pot = HarmonicPotential([[1.0]])
    d0 = np.linalg.det(init.cov)
    for t in (1.0, 3.0, 10.0):
        ms = integrate_moments(init, pot, zero_params(), t, dt=1e-3)
        assert abs(np.linalg.det(ms.cov) - d0) / d0 < 1e-8


def test_covariance_stays_spd():
    for t in (0.5, 2.0, 5.0, 10.0):
        ms = integrate_moments(init_state(), harmonic(), std_params(), t,
                               dt=1e-3)
        assert np.linalg.eigvalsh(ms.cov).min() > 0.0


def test_non_quadratic_rejected():
    with pytest.raises(ValidationError):
        moment_rhs(MomentState(mean=[0.0, 0.0], cov=np.eye(2)),
                   DoubleWellPotential(), std_params())
    with pytest.raises(ValidationError):
        reference_observable(init_state(), DoubleWellPotential(), std_params(),
                             1.0, Linear(b=[1.0, 0.0]))
    with pytest.raises(ValidationError):
        reference_observable(init_state(), harmonic(), std_params(), 1.0,
                             GridFunction(lambda x, xi: x))


def test_monte_carlo_agrees_with_reference():
    # quadratic potential: the sampled estimator carries no systematic bias,
    # only Monte Carlo noise, so 4 standard errors bounds the gap
    params = std_params()
    pot = harmonic()
    init = init_state()
    obs_list = [
        Linear(b=[1.0, 0.0]),
        Linear(b=[0.0, 1.0]),
        Quadratic(Q=np.diag([1.0, 0.0])),
        Quadratic(Q=np.diag([0.0, 1.0])),
    ]
    ens = make_ensemble(init, params, SamplingConfig(100_000, seed=77))
    for t in (0.5, 1.0):
        ens = evolve_ensemble(ens, pot, IntegratorConfig(dt=0.01), t)
        for obs in obs_list:
            est, std = ensemble_observable(ens, obs)
            ref = reference_observable(init, pot, params, t, obs)
            assert abs(est - ref) < 4.0 * std, (t, obs, est, ref, std)
