"""Split-step spectral solver for the dissipative phase-space equation in one
spatial dimension.

Transport and potential substeps are spectrally exact on the periodic grid;
the diffusion-drift (Fokker-Planck) substep uses centered finite differences
in flux form, so the semi-discrete operator conserves the discrete mass
identically.  A Strang composition stitches the substeps together:

    half FP, half transport, full potential, half transport, half FP.

Grid node convention: a domain (a, b, N) places nodes a + i*(b-a)/N for
i = 0..N-1 (the right endpoint is the periodic image of the left one); the
emitted fields record (first node, last node, N).
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .core import (
    DissipationParams,
    GaussianState,
    NumericalError,
    Potential,
    ValidationError,
)
from .sampling import GridFunction, Linear, Quadratic, WignerField

__all__ = [
    "ImaginaryResidue",
    "GridSolverConfig",
    "GridTrajectory",
    "initial_field",
    "step_transport",
    "step_potential",
    "step_fokker_planck",
    "solve_grid",
    "check_stability",
    "field_observable",
    "grid_mass",
    "boundary_mass_fraction",
]

RESIDUE_THRESHOLD = 1e-10


class ImaginaryResidue(NumericalError):
    """The potential substep produced a non-negligible imaginary part.

    The substep is exactly real-preserving for fields resolved on the grid;
    a residue means significant content at the unpaired highest mode, i.e.
    the field is under-resolved or has wrapped around the domain.
    """

    def __init__(self, rel):
        self.rel = float(rel)
        super().__init__(
            f"imaginary residue {self.rel:.3e} of the field norm after the "
            f"potential substep; refine the grid or enlarge the domain")


def _is_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


@dataclasses.dataclass(frozen=True)
class GridSolverConfig:
    """Domain, resolution, and step size for the grid solver.

    domain holds ((x_min, x_max, N_x), (xi_min, xi_max, N_xi)) with the
    max values being the periodic images of the min values (nodes stop one
    spacing short of them).
    """

    domain: tuple
    dt: float
    t_final: float
    boundary: str = "periodic"
    residue_threshold: float = RESIDUE_THRESHOLD

    def __post_init__(self):
        domain = tuple((float(a), float(b), int(m)) for a, b, m in self.domain)
        if len(domain) != 2:
            raise ValidationError("domain must give (x) and (xi) axes")
        for a, b, m in domain:
            if not b > a:
                raise ValidationError("domain max must exceed min")
            if not _is_pow2(m):
                raise ValidationError(
                    f"grid sizes must be powers of two, got {m}")
        if not self.dt > 0.0:
            raise ValidationError("dt must be positive")
        if self.t_final < 0.0:
            raise ValidationError("t_final must be nonnegative")
        if self.boundary != "periodic":
            raise ValidationError("only periodic boundaries are supported")
        if not self.residue_threshold > 0.0:
            raise ValidationError("residue_threshold must be positive")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t_final", float(self.t_final))
        object.__setattr__(self, "residue_threshold",
                           float(self.residue_threshold))

    @property
    def spacings(self):
        (xa, xb, nx), (va, vb, nv) = self.domain
        return (xb - xa) / nx, (vb - va) / nv

    @property
    def nodes(self):
        (xa, xb, nx), (va, vb, nv) = self.domain
        dx, dv = self.spacings
        return xa + dx * np.arange(nx), va + dv * np.arange(nv)


@dataclasses.dataclass(frozen=True)
class GridTrajectory:
    final: WignerField
    checkpoints: tuple


def _field_geometry(field):
    """Node arrays and spacings of a stored field."""
    x, xi = field.axes
    dx = x[1] - x[0]
    dv = xi[1] - xi[0]
    return x, xi, dx, dv


def _wrap(field, values):
    return WignerField(grid=field.grid, values=values, time=field.time)


def initial_field(init, cfg):
    """Evaluate the initial Gaussian on the solver grid."""
    if init.mean.size != 2:
        raise ValidationError("the grid solver handles one spatial dimension")
    x, xi = cfg.nodes
    X, V = np.meshgrid(x, xi, indexing="ij")
    d = np.stack([X - init.mean[0], V - init.mean[1]], axis=-1)
    P = np.linalg.inv(init.cov)
    quad = np.einsum("xvi,ij,xvj->xv", d, P, d)
    norm = 1.0 / (2.0 * np.pi * np.sqrt(np.linalg.det(init.cov)))
    grid = ((x[0], x[-1], x.size), (xi[0], xi[-1], xi.size))
    return WignerField(grid=grid, values=norm * np.exp(-0.5 * quad), time=0.0)


# ---------------------------------------------------------------------------
# substeps


def _transport_multiplier(field, dt):
    x, xi, dx, _ = _field_geometry(field)
    kx = 2.0 * np.pi * np.fft.fftfreq(x.size, d=dx)
    return np.exp(-1j * dt * kx[:, None] * xi[None, :])


def step_transport(field, dt):
    """Exact advection x <- x + xi*dt via the x-spectrum."""
    mult = _transport_multiplier(field, dt)
    spec = np.fft.fft(field.values, axis=0)
    out = np.fft.ifft(mult * spec, axis=0).real
    return _wrap(field, out)


def _potential_multiplier(field, pot, epsilon, dt):
    x, xi, _, dv = _field_geometry(field)
    k = 2.0 * np.pi * np.fft.fftfreq(xi.size, d=dv)
    y = -0.5 * epsilon * k
    Xp = (x[:, None] + y[None, :]).reshape(-1, 1)
    Xm = (x[:, None] - y[None, :]).reshape(-1, 1)
    dV = (pot.value(Xp) - pot.value(Xm)).reshape(x.size, y.size)
    return np.exp(-1j * dt / epsilon * dV)


def step_potential(field, pot, epsilon, dt, residue_threshold=RESIDUE_THRESHOLD):
    """Exact nonlocal potential substep in the mixed representation."""
    mult = _potential_multiplier(field, pot, epsilon, dt)
    spec = np.fft.fft(field.values, axis=1)
    out = np.fft.ifft(mult * spec, axis=1)
    norm = np.linalg.norm(field.values)
    if norm > 0.0:
        rel = np.linalg.norm(out.imag) / norm
        if rel > residue_threshold:
            raise ImaginaryResidue(rel)
    return _wrap(field, out.real)


def _drift_coefficients(params):
    im_g = float(params.gamma.imag[0])
    mu = float(params.mu[0])
    return im_g + mu, im_g - mu


def _fp_operator(field, params):
    """Return L(W) for the diffusion-drift substep as a closure."""
    x, xi, dx, dv = _field_geometry(field)
    eps = params.epsilon
    alpha = float(params.alpha[0])
    beta = float(params.beta[0])
    re_g = float(params.gamma.real[0])
    cx, cv = _drift_coefficients(params)
    X = x[:, None]
    V = xi[None, :]

    def L(W):
        out = np.zeros_like(W)
        if alpha != 0.0:
            out += (0.5 * eps * alpha / dv ** 2) * (
                np.roll(W, -1, axis=1) - 2.0 * W + np.roll(W, 1, axis=1))
        if beta != 0.0:
            out += (0.5 * eps * beta / dx ** 2) * (
                np.roll(W, -1, axis=0) - 2.0 * W + np.roll(W, 1, axis=0))
        if re_g != 0.0:
            dxW = (np.roll(W, -1, axis=0) - np.roll(W, 1, axis=0)) / (2.0 * dx)
            out -= (eps * re_g / dv) * 0.5 * (
                np.roll(dxW, -1, axis=1) - np.roll(dxW, 1, axis=1))
        if cx != 0.0:
            F = X * W
            out -= cx * (np.roll(F, -1, axis=0) - np.roll(F, 1, axis=0)) / (2.0 * dx)
        if cv != 0.0:
            F = V * W
            out -= cv * (np.roll(F, -1, axis=1) - np.roll(F, 1, axis=1)) / (2.0 * dv)
        return out

    return L


def _fp_rate(field, params):
    """Explicit-step rate bound for the diffusion-drift operator."""
    x, xi, dx, dv = _field_geometry(field)
    eps = params.epsilon
    alpha = float(params.alpha[0])
    beta = float(params.beta[0])
    re_g = float(abs(params.gamma.real[0]))
    cx, cv = _drift_coefficients(params)
    rate = 2.0 * eps * (alpha / dv ** 2 + beta / dx ** 2 + re_g / (dx * dv))
    rate += abs(cx) * (np.max(np.abs(x)) / dx + 1.0)
    rate += abs(cv) * (np.max(np.abs(xi)) / dv + 1.0)
    return rate


def step_fokker_planck(field, params, dt):
    """One explicit second-order (Heun) step of the diffusion-drift part."""
    rate = _fp_rate(field, params)
    if dt * rate > 1.0:
        raise ValidationError(
            f"diffusion-drift substep unstable: dt*rate = {dt * rate:.3g} "
            f"exceeds 1; reduce dt below {1.0 / rate:.3e}")
    L = _fp_operator(field, params)
    W = field.values
    k1 = L(W)
    k2 = L(W + dt * k1)
    return _wrap(field, W + 0.5 * dt * (k1 + k2))


def _dissipation_active(params):
    return (np.any(params.alpha != 0.0) or np.any(params.beta != 0.0)
            or np.any(params.gamma != 0.0) or np.any(params.mu != 0.0))


def check_stability(cfg, params):
    """Validate the step size against the substep stability bound."""
    probe = WignerField(
        grid=tuple((a, a + (m - 1) * s, m)
                   for (a, _, m), s in zip(cfg.domain, cfg.spacings)),
        values=np.zeros((cfg.domain[0][2], cfg.domain[1][2])), time=0.0)
    rate = _fp_rate(probe, params)
    half = 0.5 * cfg.dt
    if half * rate > 1.0:
        raise ValidationError(
            f"grid step dt = {cfg.dt:g} violates the stability bound; "
            f"require dt < {2.0 / rate:.3e} on this grid")


# ---------------------------------------------------------------------------
# full solver


def solve_grid(init, pot, params, cfg, checkpoint_times=()):
    """Strang-split integration to cfg.t_final with optional checkpoints."""
    check_stability(cfg, params)
    field = initial_field(init, cfg)
    dissipative = _dissipation_active(params)

    wanted = sorted(set(float(c) for c in checkpoint_times))
    for c in wanted:
        if c < 0.0 or c > cfg.t_final + 1e-12:
            raise ValidationError(
                f"checkpoint time {c} outside [0, {cfg.t_final}]")
    snapshots = []

    # cached spectral multipliers for the repeated full-size step
    t_mult_half = _transport_multiplier(field, 0.5 * cfg.dt)
    v_mult_full = _potential_multiplier(field, pot, params.epsilon, cfg.dt)

    def strang(f, dt, t_half, v_full):
        if dissipative:
            f = step_fokker_planck(f, params, 0.5 * dt)
        spec = np.fft.fft(f.values, axis=0)
        vals = np.fft.ifft(t_half * spec, axis=0).real
        spec = np.fft.fft(vals, axis=1)
        out = np.fft.ifft(v_full * spec, axis=1)
        norm = np.linalg.norm(vals)
        if norm > 0.0:
            rel = np.linalg.norm(out.imag) / norm
            if rel > cfg.residue_threshold:
                raise ImaginaryResidue(rel)
        vals = out.real
        spec = np.fft.fft(vals, axis=0)
        vals = np.fft.ifft(t_half * spec, axis=0).real
        f = _wrap(f, vals)
        if dissipative:
            f = step_fokker_planck(f, params, 0.5 * dt)
        return f

    t_now = 0.0
    field = dataclasses.replace(field, time=t_now)
    breakpoints = sorted(set(wanted + [cfg.t_final]))
    for bp in breakpoints:
        remaining = bp - t_now
        n_full = int(np.floor(remaining / cfg.dt + 1e-9))
        rem = remaining - n_full * cfg.dt
        if rem < cfg.dt * 1e-9:
            rem = 0.0
        for _ in range(n_full):
            field = strang(field, cfg.dt, t_mult_half, v_mult_full)
            t_now += cfg.dt
        if rem > 0.0:
            field = strang(
                field, rem, _transport_multiplier(field, 0.5 * rem),
                _potential_multiplier(field, pot, params.epsilon, rem))
        t_now = bp
        field = dataclasses.replace(field, time=t_now)
        if bp in wanted:
            snapshots.append(field)
    return GridTrajectory(final=field, checkpoints=tuple(snapshots))


# ---------------------------------------------------------------------------
# diagnostics


def grid_mass(field):
    _, _, dx, dv = _field_geometry(field)
    return float(np.sum(field.values) * dx * dv)


def field_observable(field, obs):
    """Trapezoid-quadrature expectation of the observable over the field."""
    x, xi, _, _ = _field_geometry(field)
    X, V = np.meshgrid(x, xi, indexing="ij")
    if isinstance(obs, Linear):
        a = obs.b[0] * X + obs.b[1] * V + obs.c
    elif isinstance(obs, Quadratic):
        a = (obs.Q[0, 0] * X ** 2 + 2.0 * obs.Q[0, 1] * X * V
             + obs.Q[1, 1] * V ** 2 + obs.b[0] * X + obs.b[1] * V + obs.c)
    elif isinstance(obs, GridFunction):
        a = np.asarray(obs.func(X.ravel(), V.ravel()), dtype=float)
        a = a.reshape(X.shape)
    else:
        raise ValidationError(f"unsupported observable type {type(obs).__name__}")
    integrand = a * field.values
    return float(np.trapezoid(np.trapezoid(integrand, xi, axis=1), x))


def boundary_mass_fraction(field, cells=3):
    """Fraction of the field's absolute mass within `cells` of the edge."""
    W = np.abs(field.values)
    total = float(np.sum(W))
    if total == 0.0:
        return 0.0
    inner = W[cells:-cells, cells:-cells]
    return float((total - np.sum(inner)) / total)
