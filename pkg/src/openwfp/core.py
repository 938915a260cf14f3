"""Domain types, parameter validation, potentials, and auxiliary matrices.

Everything downstream (packet dynamics, sampling, reference solvers) consumes
the types defined here.  All quantities are dimensionless.  Phase-space points
are ordered (x, xi): position coordinates first, momentum coordinates second,
so every 2n-by-2n matrix in this module uses that block convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ValidationError",
    "NumericalError",
    "DissipationParams",
    "JumpOperatorSet",
    "Potential",
    "HarmonicPotential",
    "DoubleWellPotential",
    "TripleWellPotential",
    "NearHarmonicPotential",
    "CustomPotential",
    "AuxMatrices",
    "GaussianState",
    "ValidationReport",
    "coefficients_from_jump_operators",
    "validate_params",
    "require_valid",
    "potential_eval",
    "build_aux_matrices",
]


class ValidationError(ValueError):
    """Raised when inputs fail structural or physical validation."""


class NumericalError(RuntimeError):
    """Raised when a computation leaves the numerically meaningful regime."""


def _as_float_vector(v, n: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.shape != (n,):
        raise ValidationError(f"{name} must have shape ({n},), got {arr.shape}")
    return arr


def _as_complex_vector(v, n: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=complex))
    if arr.shape != (n,):
        raise ValidationError(f"{name} must have shape ({n},), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class DissipationParams:
    """Environment coefficients for one dissipative channel per dimension.

    Parameters
    ----------
    dim : int
        Spatial dimension n.  Phase space has dimension 2n.
    epsilon : float
        Rescaled Planck constant, must lie in (0, 1).
    alpha, beta : array_like, shape (n,)
        Momentum and position diffusion strengths (each nonnegative).
    gamma : array_like, shape (n,), complex
        Cross coupling; the real part enters the diffusion matrix, the
        imaginary part drives phase-space drift.
    mu : array_like, shape (n,)
        Renormalization strengths entering the corrected Hamiltonian.

    Construction only checks shapes.  Physical admissibility is the job of
    :func:`validate_params`, so that invalid parameter sets can still be
    constructed, inspected, and reported on.
    """

    dim: int
    epsilon: float
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValidationError("dim must be a positive integer")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "alpha", _as_float_vector(self.alpha, self.dim, "alpha"))
        object.__setattr__(self, "beta", _as_float_vector(self.beta, self.dim, "beta"))
        object.__setattr__(self, "gamma", _as_complex_vector(self.gamma, self.dim, "gamma"))
        object.__setattr__(self, "mu", _as_float_vector(self.mu, self.dim, "mu"))


@dataclass(frozen=True)
class JumpOperatorSet:
    """Linear position/momentum couplings to the environment.

    ``coeffs[k]`` lists the complex pairs (a, b) of channel k, one pair per
    elementary operator a*x_k + b*p_k.  Every channel needs at least one pair
    (possibly (0, 0) for a decoupled direction).
    """

    dim: int
    coeffs: tuple

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValidationError("dim must be a positive integer")
        object.__setattr__(self, "dim", int(self.dim))
        if len(self.coeffs) != self.dim:
            raise ValidationError(
                f"coeffs must list {self.dim} channels, got {len(self.coeffs)}")
        norm = []
        for k, pairs in enumerate(self.coeffs):
            pairs = tuple((complex(a), complex(b)) for a, b in pairs)
            if not pairs:
                raise ValidationError(f"channel {k} has no coefficient pairs")
            norm.append(pairs)
        object.__setattr__(self, "coeffs", tuple(norm))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a physical-parameter check: hard errors and soft warnings."""

    ok: bool
    errors: tuple
    warnings: tuple

    def __str__(self):
        lines = []
        for e in self.errors:
            lines.append(f"error: {e}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        if not lines:
            lines.append("ok")
        return "\n".join(lines)


def coefficients_from_jump_operators(jumps: JumpOperatorSet, epsilon: float,
                                     mu) -> DissipationParams:
    """Collapse jump-operator pairs into drift/diffusion coefficients.

    For channel k with pairs (a, b): alpha_k is the sum of |a|^2, beta_k the
    sum of |b|^2, and gamma_k the sum of a * conj(b).  The Cauchy-Schwarz
    inequality then guarantees |gamma_k| <= sqrt(alpha_k beta_k), so the
    result always passes :func:`validate_params` without warnings.
    """
    epsilon = float(epsilon)
    if not (0.0 < epsilon < 1.0):
        raise ValidationError(f"epsilon must lie in (0, 1), got {epsilon}")
    n = jumps.dim
    alpha = np.zeros(n)
    beta = np.zeros(n)
    gamma = np.zeros(n, dtype=complex)
    for k, pairs in enumerate(jumps.coeffs):
        a = np.array([p[0] for p in pairs])
        b = np.array([p[1] for p in pairs])
        alpha[k] = np.sum(np.abs(a) ** 2)
        beta[k] = np.sum(np.abs(b) ** 2)
        gamma[k] = np.sum(a * np.conj(b))
    return DissipationParams(dim=n, epsilon=epsilon, alpha=alpha, beta=beta,
                             gamma=gamma, mu=_as_float_vector(mu, n, "mu"))


def validate_params(params: DissipationParams) -> ValidationReport:
    """Check a parameter set at the level the equations of motion require.

    Hard errors (the flow itself would be ill-posed or the sampling step
    undefined): negative alpha or beta, epsilon outside (0, 1), or
    alpha_k * beta_k < (Re gamma_k)^2, which makes the diffusion matrix
    indefinite.  The stricter bound |gamma_k| <= sqrt(alpha_k beta_k), which
    holds whenever the coefficients come from actual jump operators, is only
    a warning: parameter sets violating it still yield a well-posed flow as
    long as the real-part bound holds.
    """
    errors = []
    warnings = []
    if not (0.0 < params.epsilon < 1.0):
        errors.append(f"epsilon must lie in (0, 1), got {params.epsilon}")
    for k in range(params.dim):
        a, b = params.alpha[k], params.beta[k]
        g = params.gamma[k]
        if a < 0:
            errors.append(f"alpha[{k}] = {a} is negative")
        if b < 0:
            errors.append(f"beta[{k}] = {b} is negative")
        if a >= 0 and b >= 0:
            # Machine-epsilon slack: coefficients assembled from jump
            # operators can sit exactly on the Cauchy-Schwarz boundary, where
            # independent roundings of a*b and (Re g)^2 differ by a few ulp.
            slack = 4.0 * np.finfo(float).eps * (a * b + g.real ** 2)
            if a * b < g.real ** 2 - slack:
                errors.append(
                    f"channel {k}: alpha*beta = {a * b:g} < (Re gamma)^2 = "
                    f"{g.real ** 2:g}; diffusion matrix indefinite")
            elif abs(g) ** 2 > a * b + 1e-15 * max(1.0, a * b):
                warnings.append(
                    f"channel {k}: |gamma| = {abs(g):g} exceeds "
                    f"sqrt(alpha*beta) = {np.sqrt(a * b):g}; no jump-operator "
                    "set produces these coefficients, but the flow remains "
                    "well-posed because the real-part bound holds")
    return ValidationReport(ok=not errors, errors=tuple(errors),
                            warnings=tuple(warnings))


def require_valid(params: DissipationParams) -> ValidationReport:
    """Validate and raise ValidationError on any hard error."""
    report = validate_params(params)
    if not report.ok:
        raise ValidationError("; ".join(report.errors))
    return report


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

class Potential:
    """Evaluator interface for V, grad V, and the Hessian of V.

    Subclasses implement ``value``, ``grad``, and ``hess`` accepting either a
    single point of shape (n,) or a batch of shape (B, n), returning arrays
    with matching leading shape.  ``constant_hess`` marks potentials whose
    Hessian does not depend on the evaluation point (exactly quadratic ones),
    which unlocks closed-form reference solutions and a cheaper shared-shape
    evolution path.
    """

    dim: int = 1
    constant_hess: bool = False

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError


class HarmonicPotential(Potential):
    """Quadratic potential V(x) = x.A2.x / 2 + a1.x + a0."""

    constant_hess = True

    def __init__(self, a2, a1=None, a0=0.0):
        a2 = np.atleast_2d(np.asarray(a2, dtype=float))
        if a2.shape[0] != a2.shape[1]:
            raise ValidationError(f"A2 must be square, got {a2.shape}")
        if not np.allclose(a2, a2.T):
            raise ValidationError("A2 must be symmetric")
        self.dim = a2.shape[0]
        self.a2 = a2
        self.a1 = (np.zeros(self.dim) if a1 is None
                   else _as_float_vector(a1, self.dim, "a1"))
        self.a0 = float(a0)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        quad = 0.5 * np.einsum("...i,ij,...j->...", x, self.a2, x)
        return quad + x @ self.a1 + self.a0

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.a2 + self.a1

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.a2.copy()
        return np.broadcast_to(self.a2, x.shape[:-1] + self.a2.shape).copy()


class _Scalar1DPotential(Potential):
    """Shared plumbing for the built-in one-dimensional families."""

    dim = 1

    def _v(self, s):
        raise NotImplementedError

    def _dv(self, s):
        raise NotImplementedError

    def _d2v(self, s):
        raise NotImplementedError

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self._v(x[..., 0])

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return self._dv(x[..., 0])[..., None]

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        return self._d2v(x[..., 0])[..., None, None]


class DoubleWellPotential(_Scalar1DPotential):
    """V(x) = (x^2 - 1)^2, minima at x = -1 and x = +1."""

    def _v(self, s):
        return (s * s - 1.0) ** 2

    def _dv(self, s):
        return 4.0 * s * (s * s - 1.0)

    def _d2v(self, s):
        return 12.0 * s * s - 4.0


class TripleWellPotential(_Scalar1DPotential):
    """V(x) = 0.08 x^2 (x^2 - 2)^2, a symmetric sextic with three minima."""

    def _v(self, s):
        return 0.08 * s * s * (s * s - 2.0) ** 2

    def _dv(self, s):
        # d/dx of 0.08 x^2 (x^2-2)^2 = 0.16 x (x^2-2)(3x^2-2)
        return 0.16 * s * (s * s - 2.0) * (3.0 * s * s - 2.0)

    def _d2v(self, s):
        s2 = s * s
        return 0.16 * (15.0 * s2 * s2 - 24.0 * s2 + 4.0)


class NearHarmonicPotential(_Scalar1DPotential):
    """V(x) = x^2 + x + sin(x), a bounded perturbation of a quadratic trap."""

    def _v(self, s):
        return s * s + s + np.sin(s)

    def _dv(self, s):
        return 2.0 * s + 1.0 + np.cos(s)

    def _d2v(self, s):
        return 2.0 - np.sin(s)


class CustomPotential(Potential):
    """User-supplied callbacks for value, gradient, and Hessian.

    All three callbacks are required and must accept a single point (n,).
    Batches are handled here by looping, so built-in families are preferred
    for large ensembles.
    """

    def __init__(self, dim: int, value: Callable, grad: Callable, hess: Callable):
        if value is None or grad is None or hess is None:
            raise ValidationError("custom potential needs value, grad, and hess callbacks")
        self.dim = int(dim)
        self._value = value
        self._grad = grad
        self._hess = hess

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(self._value(x))
        return np.array([float(self._value(p)) for p in x])

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.asarray(self._grad(x), dtype=float).reshape(self.dim)
        return np.stack([np.asarray(self._grad(p), dtype=float).reshape(self.dim)
                         for p in x])

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.asarray(self._hess(x), dtype=float).reshape(self.dim, self.dim)
        return np.stack([np.asarray(self._hess(p), dtype=float).reshape(self.dim, self.dim)
                         for p in x])


def potential_eval(pot: Potential, x):
    """Evaluate (V, grad V, hess V) at a single point x of shape (n,).

    Non-finite inputs or outputs raise :class:`NumericalError`; silent NaN
    propagation into the equations of motion is never acceptable.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (pot.dim,):
        raise ValidationError(f"x must have shape ({pot.dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"potential queried at non-finite point {x}")
    v = float(pot.value(x))
    g = np.asarray(pot.grad(x), dtype=float).reshape(pot.dim)
    h = np.asarray(pot.hess(x), dtype=float).reshape(pot.dim, pot.dim)
    if not (np.isfinite(v) and np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
        raise NumericalError(f"potential returned non-finite derivatives at {x}")
    return v, g, h


# ---------------------------------------------------------------------------
# Auxiliary matrices and Gaussian states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuxMatrices:
    """The constant and state-dependent matrices entering the packet flow.

    gamma1 couples position and momentum blocks through Re(gamma); gamma2 and
    mtilde are the diagonal drift generators; bmat is the diffusion diagonal;
    cmat carries the identity and the negated Hessian in its off-diagonal
    blocks and is the only piece that changes along a trajectory.
    """

    gamma1: np.ndarray
    gamma2: np.ndarray
    bmat: np.ndarray
    mtilde: np.ndarray
    cmat: np.ndarray


def build_aux_matrices(params: DissipationParams, hess_at_q) -> AuxMatrices:
    """Assemble the 2n-by-2n auxiliary matrices for a given local Hessian."""
    n = params.dim
    hess_at_q = np.atleast_2d(np.asarray(hess_at_q, dtype=float))
    if hess_at_q.shape != (n, n):
        raise ValidationError(
            f"hess_at_q must have shape ({n}, {n}), got {hess_at_q.shape}")
    re_g = np.real(params.gamma)
    im_g = np.imag(params.gamma)

    gamma1 = np.zeros((2 * n, 2 * n))
    gamma1[:n, n:] = np.diag(re_g)
    gamma1[n:, :n] = np.diag(re_g)

    gamma2 = np.diag(np.concatenate([-im_g, -im_g]))
    bmat = np.diag(np.concatenate([params.beta, params.alpha]))
    mtilde = np.diag(np.concatenate([-params.mu, params.mu]))

    cmat = np.zeros((2 * n, 2 * n))
    cmat[:n, n:] = np.eye(n)
    cmat[n:, :n] = -hess_at_q
    return AuxMatrices(gamma1=gamma1, gamma2=gamma2, bmat=bmat,
                       mtilde=mtilde, cmat=cmat)


@dataclass(frozen=True)
class GaussianState:
    """A Gaussian phase-space profile: mean (x0, xi0) and full covariance."""

    dim: int
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        n = int(self.dim)
        if n < 1:
            raise ValidationError("dim must be a positive integer")
        object.__setattr__(self, "dim", n)
        mean = np.asarray(self.mean, dtype=float).reshape(2 * n)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (2 * n, 2 * n):
            raise ValidationError(
                f"cov must have shape ({2 * n}, {2 * n}), got {cov.shape}")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValidationError("cov must be symmetric")
        eigs = np.linalg.eigvalsh(0.5 * (cov + cov.T))
        if np.min(eigs) <= 0:
            raise ValidationError(
                f"cov must be positive definite; min eigenvalue {np.min(eigs):g}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))
