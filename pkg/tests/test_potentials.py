"""Potential evaluators and the auxiliary-matrix assembly."""

from __future__ import annotations

import numpy as np
import pytest

from openwfp.core import (
    CustomPotential,
    DissipationParams,
    DoubleWellPotential,
    GaussianState,
    HarmonicPotential,
    NearHarmonicPotential,
    NumericalError,
    TripleWellPotential,
    ValidationError,
    build_aux_matrices,
    potential_eval,
)

ALL_BUILTINS = [
    HarmonicPotential([[1.0]], [1.0], 0.0),
    DoubleWellPotential(),
    TripleWellPotential(),
    NearHarmonicPotential(),
]


def test_double_well_at_origin():
    v, g, h = potential_eval(DoubleWellPotential(), [0.0])
    assert v == 1.0
    assert g[0] == 0.0
    assert h[0, 0] == -4.0


def test_harmonic_example_point():
    # V(x) = x^2/2 + x at x = -0.1
    pot = HarmonicPotential([[1.0]], [1.0])
    v, g, h = potential_eval(pot, [-0.1])
    assert v == pytest.approx(-0.095, abs=1e-15)
    assert g[0] == pytest.approx(0.9, abs=1e-15)
    assert h[0, 0] == 1.0


def test_triple_well_hand_values():
    # V = 0.08 x^2 (x^2-2)^2; at x=1: V=0.08, V'=-0.16, V''=-0.8
    v, g, h = potential_eval(TripleWellPotential(), [1.0])
    assert v == pytest.approx(0.08, rel=1e-14)
    assert g[0] == pytest.approx(-0.16, rel=1e-14)
    assert h[0, 0] == pytest.approx(-0.8, rel=1e-13)


def test_near_harmonic_hand_values():
    v, g, h = potential_eval(NearHarmonicPotential(), [0.0])
    assert v == 0.0
    assert g[0] == 2.0  # 2x + 1 + cos(x) at 0
    assert h[0, 0] == 2.0  # 2 - sin(x) at 0


@pytest.mark.parametrize("pot", ALL_BUILTINS, ids=lambda p: type(p).__name__)
def test_derivatives_match_finite_differences(pot):
    rng = np.random.default_rng(7)
    step = 1e-5
    for x0 in rng.uniform(-10, 10, size=12):
        x = np.array([x0])
        _, g, h = potential_eval(pot, x)
        vp = pot.value(x + step)
        vm = pot.value(x - step)
        fd_grad = (vp - vm) / (2 * step)
        scale = max(1.0, abs(g[0]))
        assert abs(fd_grad - g[0]) / scale < 1e-6
        gp = pot.grad(np.array([x0 + step]))[0]
        gm = pot.grad(np.array([x0 - step]))[0]
        fd_hess = (gp - gm) / (2 * step)
        scale = max(1.0, abs(h[0, 0]))
        assert abs(fd_hess - h[0, 0]) / scale < 1e-6


@pytest.mark.parametrize("pot", ALL_BUILTINS, ids=lambda p: type(p).__name__)
def test_batched_evaluation_matches_pointwise(pot):
    xs = np.linspace(-3, 3, 11)[:, None]
    vals = pot.value(xs)
    grads = pot.grad(xs)
    hesses = pot.hess(xs)
    assert vals.shape == (11,)
    assert grads.shape == (11, 1)
    assert hesses.shape == (11, 1, 1)
    for i, x in enumerate(xs):
        v, g, h = potential_eval(pot, x)
        assert vals[i] == v
        assert grads[i, 0] == g[0]
        assert hesses[i, 0, 0] == h[0, 0]


def test_custom_potential_delegates():
    pot = CustomPotential(
        dim=1,
        value=lambda x: float(np.cosh(x[0])),
        grad=lambda x: np.sinh(x[:1]),
        hess=lambda x: np.cosh(x[:1])[:, None],
    )
    v, g, h = potential_eval(pot, [0.3])
    assert v == pytest.approx(np.cosh(0.3))
    assert g[0] == pytest.approx(np.sinh(0.3))
    assert h[0, 0] == pytest.approx(np.cosh(0.3))
    with pytest.raises(ValidationError):
        CustomPotential(dim=1, value=None, grad=None, hess=None)


def test_non_finite_point_raises():
    with pytest.raises(NumericalError):
        potential_eval(DoubleWellPotential(), [np.inf])
    pot = CustomPotential(dim=1, value=lambda x: np.nan,
                          grad=lambda x: [0.0], hess=lambda x: [[0.0]])
    with pytest.raises(NumericalError):
        potential_eval(pot, [0.0])


def std_params():
    return DissipationParams(dim=1, epsilon=1.0 / 16, alpha=[0.4], beta=[0.1],
                             gamma=[1j], mu=[-1.0])


def test_aux_matrices_standard_set():
    aux = build_aux_matrices(std_params(), [[1.0]])
    assert np.array_equal(aux.gamma1, np.zeros((2, 2)))
    assert np.array_equal(aux.gamma2, np.diag([-1.0, -1.0]))
    assert np.array_equal(aux.bmat, np.diag([0.1, 0.4]))
    assert np.array_equal(aux.mtilde, np.diag([1.0, -1.0]))
    assert np.array_equal(aux.cmat, np.array([[0.0, 1.0], [-1.0, 0.0]]))


def test_aux_matrices_all_zero():
    p = DissipationParams(dim=1, epsilon=0.5, alpha=[0.0], beta=[0.0],
                          gamma=[0.0], mu=[0.0])
    aux = build_aux_matrices(p, [[0.0]])
    assert np.array_equal(aux.cmat, np.array([[0.0, 1.0], [0.0, 0.0]]))
    for m in (aux.gamma1, aux.gamma2, aux.bmat, aux.mtilde):
        assert np.array_equal(m, np.zeros((2, 2)))


def test_aux_matrices_real_gamma():
    p = DissipationParams(dim=1, epsilon=0.5, alpha=[1.0], beta=[1.0],
                          gamma=[0.5], mu=[0.0])
    aux = build_aux_matrices(p, [[0.0]])
    assert np.array_equal(aux.gamma2, np.zeros((2, 2)))
    assert aux.gamma1[0, 1] == 0.5 and aux.gamma1[1, 0] == 0.5
    assert aux.gamma1[0, 0] == 0.0 and aux.gamma1[1, 1] == 0.0


def test_aux_matrices_two_dimensional_layout():
    p = DissipationParams(dim=2, epsilon=0.1, alpha=[1.0, 2.0], beta=[3.0, 4.0],
                          gamma=[0.5 + 1j, 0.25 - 2j], mu=[0.1, -0.2])
    hess = np.array([[2.0, 0.5], [0.5, 3.0]])
    aux = build_aux_matrices(p, hess)
    assert np.array_equal(np.diag(aux.bmat), [3.0, 4.0, 1.0, 2.0])
    assert np.array_equal(np.diag(aux.gamma2), [-1.0, 2.0, -1.0, 2.0])
    assert np.array_equal(np.diag(aux.mtilde), [-0.1, 0.2, 0.1, -0.2])
    assert np.array_equal(aux.gamma1[:2, 2:], np.diag([0.5, 0.25]))
    assert np.array_equal(aux.cmat[:2, 2:], np.eye(2))
    assert np.array_equal(aux.cmat[2:, :2], -hess)


def test_gaussian_state_validation():
    GaussianState(dim=1, mean=[0.0, 0.0], cov=np.diag([5.0, 5.0]))
    with pytest.raises(ValidationError):
        GaussianState(dim=1, mean=[0.0, 0.0], cov=np.diag([1.0, -1.0]))
    with pytest.raises(ValidationError):
        GaussianState(dim=1, mean=[0.0, 0.0],
                      cov=np.array([[1.0, 0.5], [0.0, 1.0]]))
