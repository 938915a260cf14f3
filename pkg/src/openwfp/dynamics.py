"""Packet parameter flows and their fixed-step integrator.

A packet is the tuple (q, p, G, A): phase-space center, inverse shape matrix,
and amplitude.  The open-system flow is

    dq/dt = p + (Im gamma + mu) q
    dp/dt = -grad V(q) + (Im gamma - mu) p
    dG/dt = (Gamma2 + Mtilde - C^T) G + G (Gamma2 + Mtilde - C) + G (Gamma1 - B) G
    dA/dt = Tr(Gamma2 - (B - Gamma1) G / 2) A

with the auxiliary matrices of :mod:`openwfp.core`.  The closed-system flow is
the zero-dissipation special case.  Everything here is written over arrays
with a leading batch axis so that one packet and an ensemble of packets run
through literally the same arithmetic; the public single-packet operations
wrap the batch kernel with a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    DissipationParams,
    NumericalError,
    Potential,
    ValidationError,
    build_aux_matrices,
)

__all__ = [
    "Wavepacket",
    "PacketDerivative",
    "IntegratorConfig",
    "PacketTrajectory",
    "PositiveDefinitenessLost",
    "rhs_open",
    "rhs_closed",
    "rhs_sigma",
    "rk4_step",
    "evolve",
    "packet_mass",
]


class PositiveDefinitenessLost(NumericalError):
    """The shape matrix G left the positive-definite cone.

    The exact flow preserves positive definiteness, so this always signals a
    numerical fault (usually a step size too large for the local stiffness)
    rather than physics.  ``time`` is the integration time of the offending
    step and ``indices`` the batch indices that failed.
    """

    def __init__(self, time, indices=()):
        self.time = float(time)
        self.indices = tuple(int(i) for i in indices)
        which = f" for packets {list(self.indices)}" if self.indices else ""
        super().__init__(
            f"shape matrix lost positive definiteness at t = {self.time:g}{which}")


@dataclass(frozen=True)
class Wavepacket:
    """One Gaussian packet: centers q, p, inverse shape G, amplitude A, time t."""

    dim: int
    q: np.ndarray
    p: np.ndarray
    G: np.ndarray
    A: float
    t: float = 0.0

    def __post_init__(self):
        n = int(self.dim)
        object.__setattr__(self, "dim", n)
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(n))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(n))
        G = np.asarray(self.G, dtype=float)
        if G.shape != (2 * n, 2 * n):
            raise ValidationError(f"G must have shape ({2*n}, {2*n}), got {G.shape}")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "A", float(self.A))
        object.__setattr__(self, "t", float(self.t))

    @property
    def sigma(self):
        """Rescaled covariance, the inverse of G."""
        return np.linalg.inv(self.G)


class PacketDerivative(NamedTuple):
    dq: np.ndarray
    dp: np.ndarray
    dG: np.ndarray
    dA: float


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration settings.

    The scheme is classical fourth-order Runge-Kutta; the field exists so a
    config file can say so explicitly, and any other value is rejected.
    ``pd_check_interval`` is the number of steps between positive-definiteness
    checks of G (0 disables the monitor); ``pd_tolerance`` is the smallest
    eigenvalue of G the monitor accepts.  ``hess_bound``, when set, makes the
    integrator fail loudly if the potential's Hessian norm ever exceeds it
    along a trajectory (a runtime proxy for the subquadratic growth the error
    analysis of the sampling method assumes).
    """

    dt: float = 0.01
    scheme: str = "rk4"
    pd_check_interval: int = 1
    pd_tolerance: float = 1e-12
    hess_bound: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.scheme != "rk4":
            raise ValidationError(f"unsupported scheme {self.scheme!r}")
        if self.pd_check_interval < 0:
            raise ValidationError("pd_check_interval must be >= 0")


@dataclass(frozen=True)
class PacketTrajectory:
    final: Wavepacket
    checkpoints: tuple


# ---------------------------------------------------------------------------
# Flow context: everything about (params, pot) that stays fixed along a run
# ---------------------------------------------------------------------------

class _FlowContext:
    __slots__ = ("n", "drift_plus", "drift_minus", "dvec", "g1mb", "bmg1",
                 "tr_gamma2", "pot")

    def __init__(self, pot: Potential, params: DissipationParams):
        if pot.dim != params.dim:
            raise ValidationError(
                f"potential dim {pot.dim} != params dim {params.dim}")
        n = params.dim
        aux = build_aux_matrices(params, np.zeros((n, n)))
        im_g = np.imag(params.gamma)
        self.n = n
        self.pot = pot
        self.drift_plus = im_g + params.mu        # enters dq
        self.drift_minus = im_g - params.mu       # enters dp
        # diag of Gamma2 + Mtilde, kept as a vector since both are diagonal
        self.dvec = np.concatenate([-self.drift_plus, -self.drift_minus])
        self.g1mb = aux.gamma1 - aux.bmat
        self.bmg1 = aux.bmat - aux.gamma1
        self.tr_gamma2 = float(np.trace(aux.gamma2))

    def cmat_batch(self, q):
        """C at each row of q: upper-right identity, lower-left -hess."""
        n = self.n
        hess = self.pot.hess(q)
        B = hess.shape[0]
        c = np.zeros((B, 2 * n, 2 * n))
        c[:, :n, n:] = np.eye(n)
        c[:, n:, :n] = -hess
        return c


def _zero_context(pot: Potential) -> _FlowContext:
    n = pot.dim
    params = DissipationParams(dim=n, epsilon=0.5, alpha=np.zeros(n),
                               beta=np.zeros(n), gamma=np.zeros(n),
                               mu=np.zeros(n))
    return _FlowContext(pot, params)


def _rhs_batch(ctx: _FlowContext, q, p, G, A):
    """Batched right-hand side.

    q and p have shape (B, n).  G has shape (Bg, 2n, 2n) and A shape (Bg,)
    where Bg is either B or 1; Bg = 1 is the shared-shape fast path, valid
    only for potentials with a constant Hessian, where every packet's G and A
    follow the identical trajectory and are computed once.
    """
    dq = p + ctx.drift_plus * q
    dp = -ctx.pot.grad(q) + ctx.drift_minus * p

    shared = G.shape[0] == 1 and q.shape[0] != 1
    c = ctx.cmat_batch(q[:1] if shared else q)
    d = ctx.dvec
    # (Gamma2+Mtilde) G + G (Gamma2+Mtilde): diagonal scaling of rows/columns
    raw = d[:, None] * G + G * d[None, :]
    raw = raw - np.matmul(c.swapaxes(-1, -2), G) - np.matmul(G, c)
    raw = raw + np.matmul(np.matmul(G, ctx.g1mb), G)
    dG = 0.5 * (raw + raw.swapaxes(-1, -2))
    dA = (ctx.tr_gamma2 - 0.5 * np.einsum("ij,bji->b", ctx.bmg1, G)) * A
    return dq, dp, dG, dA


def _rk4_batch(ctx: _FlowContext, q, p, G, A, dt):
    """One classical Runge-Kutta step of the coupled (q, p, G, A) system."""
    h2 = 0.5 * dt
    k1 = _rhs_batch(ctx, q, p, G, A)
    k2 = _rhs_batch(ctx, q + h2 * k1[0], p + h2 * k1[1], G + h2 * k1[2], A + h2 * k1[3])
    k3 = _rhs_batch(ctx, q + h2 * k2[0], p + h2 * k2[1], G + h2 * k2[2], A + h2 * k2[3])
    k4 = _rhs_batch(ctx, q + dt * k3[0], p + dt * k3[1], G + dt * k3[2], A + dt * k3[3])
    w = dt / 6.0
    q = q + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    p = p + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    G = G + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    A = A + w * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    return q, p, G, A


def _check_pd(G, tol, t_now):
    """Cholesky-based test that every G in the batch has min eigenvalue > tol."""
    shifted = G - tol * np.eye(G.shape[-1]) if tol != 0.0 else G
    try:
        np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError:
        eigs = np.linalg.eigvalsh(0.5 * (G + G.swapaxes(-1, -2)))
        bad = np.nonzero(eigs.min(axis=-1) <= tol)[0]
        raise PositiveDefinitenessLost(t_now, bad) from None
    if not np.all(np.isfinite(G)):
        bad = np.nonzero(~np.isfinite(G).all(axis=(-1, -2)))[0]
        raise NumericalError(
            f"shape matrix became non-finite at t = {t_now:g} for packets {list(bad)}")


def _evolve_batch(ctx, q, p, G, A, t0, cfg: IntegratorConfig, t_final,
                  checkpoint_times=None):
    """Advance a batch to t_final, landing exactly on every breakpoint.

    Returns the final arrays plus a list of (time, (q, p, G, A)) snapshots,
    one per requested checkpoint time in ascending order.
    """
    t_final = float(t_final)
    if t_final < t0 - 1e-12:
        raise ValidationError(f"t_final = {t_final} lies before t = {t0}")
    wanted = sorted(set(float(c) for c in (checkpoint_times or ())))
    for c in wanted:
        if c < t0 - 1e-12 or c > t_final + 1e-12:
            raise ValidationError(
                f"checkpoint time {c} outside [{t0}, {t_final}]")

    snapshots = []
    breakpoints = sorted(set(wanted + [t_final]))
    dt = cfg.dt
    steps_done = 0
    t_now = t0
    for bp in breakpoints:
        remaining = bp - t_now
        n_full = int(np.floor(remaining / dt + 1e-9))
        rem = remaining - n_full * dt
        if rem < dt * 1e-9:
            rem = 0.0
        for i in range(n_full):
            q, p, G, A = _rk4_batch(ctx, q, p, G, A, dt)
            steps_done += 1
            t_now = t_now + dt
            if cfg.pd_check_interval and steps_done % cfg.pd_check_interval == 0:
                _check_pd(G, cfg.pd_tolerance, t_now)
                _check_hess_bound(ctx, cfg, q, t_now)
        if rem > 0.0:
            q, p, G, A = _rk4_batch(ctx, q, p, G, A, rem)
            steps_done += 1
            if cfg.pd_check_interval:
                _check_pd(G, cfg.pd_tolerance, bp)
                _check_hess_bound(ctx, cfg, q, bp)
        t_now = bp
        if bp in wanted:
            snapshots.append((bp, (q.copy(), p.copy(), G.copy(), A.copy())))
    if cfg.pd_check_interval:
        _check_pd(G, cfg.pd_tolerance, t_now)
    return q, p, G, A, t_now, snapshots


def _check_hess_bound(ctx, cfg, q, t_now):
    if cfg.hess_bound is None:
        return
    hess = ctx.pot.hess(q)
    worst = np.max(np.abs(hess))
    if worst > cfg.hess_bound:
        raise NumericalError(
            f"Hessian norm {worst:g} exceeded the configured bound "
            f"{cfg.hess_bound:g} at t = {t_now:g}")


# ---------------------------------------------------------------------------
# Public single-packet operations
# ---------------------------------------------------------------------------

def _wp_arrays(wp: Wavepacket):
    return (wp.q[None, :].copy(), wp.p[None, :].copy(),
            wp.G[None, :, :].copy(), np.array([wp.A]))


def rhs_open(wp: Wavepacket, pot: Potential, params: DissipationParams) -> PacketDerivative:
    """Time derivative of one packet under the dissipative flow."""
    ctx = _FlowContext(pot, params)
    q, p, G, A = _wp_arrays(wp)
    dq, dp, dG, dA = _rhs_batch(ctx, q, p, G, A)
    return PacketDerivative(dq[0], dp[0], dG[0], float(dA[0]))


def rhs_closed(wp: Wavepacket, pot: Potential) -> PacketDerivative:
    """Zero-dissipation flow: classical centers, Lyapunov shape transport.

    Implemented by running the open-system kernel with every environment
    coefficient set to zero, so the reduction is structural rather than a
    second formula that could drift out of sync.
    """
    ctx = _zero_context(pot)
    q, p, G, A = _wp_arrays(wp)
    dq, dp, dG, dA = _rhs_batch(ctx, q, p, G, A)
    return PacketDerivative(dq[0], dp[0], dG[0], float(dA[0]))


def rhs_sigma(sigma, pot: Potential, params: DissipationParams, q):
    """Derivative of the rescaled covariance Sigma = G^{-1} along the flow.

    dSigma/dt = -Sigma (Gamma2 + Mtilde - C^T) - (Gamma2 + Mtilde - C) Sigma
                - (Gamma1 - B),
    the dual of the G flow; propagating both and comparing is a cross-check
    used by the property tests, not a second integration path.
    """
    ctx = _FlowContext(pot, params)
    n = ctx.n
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (2 * n, 2 * n):
        raise ValidationError(
            f"sigma must have shape ({2*n}, {2*n}), got {sigma.shape}")
    q = np.asarray(q, dtype=float).reshape(1, n)
    c = ctx.cmat_batch(q)[0]
    dmat = np.diag(ctx.dvec)
    raw = -sigma @ (dmat - c.T) - (dmat - c) @ sigma - ctx.g1mb
    return 0.5 * (raw + raw.T)


def rk4_step(wp: Wavepacket, pot: Potential, params: DissipationParams,
             dt: float) -> Wavepacket:
    """One fixed step; raises PositiveDefinitenessLost if G degenerates."""
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    ctx = _FlowContext(pot, params)
    q, p, G, A = _wp_arrays(wp)
    q, p, G, A = _rk4_batch(ctx, q, p, G, A, dt)
    _check_pd(G, 1e-12, wp.t + dt)
    return Wavepacket(dim=wp.dim, q=q[0], p=p[0], G=G[0], A=float(A[0]),
                      t=wp.t + dt)


def evolve(wp: Wavepacket, pot: Potential, params: DissipationParams,
           cfg: IntegratorConfig, t_final: float,
           checkpoints: Sequence[float] | None = None) -> PacketTrajectory:
    """Integrate one packet to t_final with optional checkpoint snapshots.

    The final (possibly partial) step is shortened to land exactly on
    t_final, and likewise on every checkpoint time.
    """
    ctx = _FlowContext(pot, params)
    q, p, G, A = _wp_arrays(wp)
    q, p, G, A, t_now, snaps = _evolve_batch(
        ctx, q, p, G, A, wp.t, cfg, t_final, checkpoints)
    final = Wavepacket(dim=wp.dim, q=q[0], p=p[0], G=G[0], A=float(A[0]), t=t_now)
    cps = tuple(
        Wavepacket(dim=wp.dim, q=sq[0], p=sp[0], G=sG[0], A=float(sA[0]), t=ct)
        for ct, (sq, sp, sG, sA) in snaps)
    return PacketTrajectory(final=final, checkpoints=cps)


def packet_mass(wp: Wavepacket, epsilon: float) -> float:
    """Phase-space integral of one packet: A (2 pi eps)^n sqrt(det Sigma)."""
    det_g = np.linalg.det(wp.G)
    if det_g <= 0:
        raise NumericalError(f"det G = {det_g:g} is not positive")
    return wp.A * (2.0 * np.pi * epsilon) ** wp.dim / np.sqrt(det_g)
