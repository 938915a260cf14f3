"""Monte Carlo packet ensembles: initial sampling, evolution, reconstruction,
and observable evaluation.

A Gaussian phase-space density with covariance Sigma0 splits exactly into a
population of fixed-shape Gaussian kernels of covariance eps*Sigma0 whose
centers are drawn from the complementary Gaussian with covariance
(1-eps)*Sigma0.  Ensembles evolve packet-wise and are reduced back to fields
or scalar observables.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import math

import numpy as np

from .core import (
    DissipationParams,
    GaussianState,
    NumericalError,
    Potential,
    ValidationError,
)
from .dynamics import (
    IntegratorConfig,
    PositiveDefinitenessLost,
    Wavepacket,
    _evolve_batch,
    _FlowContext,
)

__all__ = [
    "SamplingConfig",
    "PacketEnsemble",
    "WignerField",
    "Linear",
    "Quadratic",
    "GridFunction",
    "EnsembleEstimate",
    "sample_initial_centers",
    "make_ensemble",
    "evolve_ensemble",
    "reconstruct",
    "packet_observable",
    "ensemble_observable",
]


@dataclasses.dataclass(frozen=True)
class SamplingConfig:
    """Monte Carlo population size, RNG seed, and parallel lane count."""

    num_samples: int
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if int(self.num_samples) < 1:
            raise ValidationError("num_samples must be at least 1")
        if int(self.workers) < 1:
            raise ValidationError("workers must be at least 1")
        s = int(self.seed)
        if s < 0 or s >= 2 ** 64:
            raise ValidationError("seed must fit in an unsigned 64-bit word")
        object.__setattr__(self, "num_samples", int(self.num_samples))
        object.__setattr__(self, "seed", s)
        object.__setattr__(self, "workers", int(self.workers))


# ---------------------------------------------------------------------------
# observables


@dataclasses.dataclass(frozen=True)
class Linear:
    """Observable a(z) = b . z + c on phase space z = (x, xi)."""

    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "c", float(self.c))


@dataclasses.dataclass(frozen=True)
class Quadratic:
    """Observable a(z) = z^T Q z + b . z + c with symmetric Q."""

    Q: np.ndarray
    b: np.ndarray | None = None
    c: float = 0.0

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValidationError("Q must be a square matrix")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ValidationError("Q must be symmetric")
        b = self.b
        if b is None:
            b = np.zeros(Q.shape[0])
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "b", np.asarray(b, dtype=float).reshape(-1))
        object.__setattr__(self, "c", float(self.c))


@dataclasses.dataclass(frozen=True)
class GridFunction:
    """Observable given as a callback a(x, xi).

    The callback receives arrays of evaluation points (flat arrays for
    one-dimensional systems, (K, n) arrays otherwise) and must return the
    matching array of values.
    """

    func: object

    def __post_init__(self):
        if not callable(self.func):
            raise ValidationError("GridFunction requires a callable")


Observable = (Linear, Quadratic, GridFunction)


@dataclasses.dataclass(frozen=True)
class EnsembleEstimate:
    """Monte Carlo estimate with its standard error."""

    estimate: float
    sample_std: float
    degenerate: bool = False

    def __iter__(self):
        return iter((self.estimate, self.sample_std))


# ---------------------------------------------------------------------------
# ensemble container


@dataclasses.dataclass(frozen=True)
class PacketEnsemble:
    """A population of Gaussian packets stored as stacked arrays.

    The shape arrays G and A may carry a leading axis of either M or 1; a
    leading 1 means every packet currently shares the same shape and
    amplitude (true at t=0, and preserved under quadratic potentials), which
    the evolution exploits.
    """

    dim: int
    params: DissipationParams
    q: np.ndarray
    p: np.ndarray
    G: np.ndarray
    A: np.ndarray
    t: float
    init: GaussianState | None = None
    sampling: SamplingConfig | None = None
    potential_name: str | None = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        G = np.asarray(self.G, dtype=float)
        A = np.asarray(self.A, dtype=float).reshape(-1)
        n = int(self.dim)
        if q.ndim != 2 or q.shape[1] != n or p.shape != q.shape:
            raise ValidationError("center arrays must have shape (M, dim)")
        if G.ndim != 3 or G.shape[1:] != (2 * n, 2 * n):
            raise ValidationError("G must have shape (M or 1, 2n, 2n)")
        if G.shape[0] not in (1, q.shape[0]) or A.shape[0] != G.shape[0]:
            raise ValidationError("G/A leading axis must be M or 1")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "t", float(self.t))

    def __len__(self):
        return self.q.shape[0]

    @property
    def num_samples(self):
        return self.q.shape[0]

    @property
    def shared_shape(self):
        return self.G.shape[0] == 1 and self.q.shape[0] != 1

    def packet(self, j):
        """Materialize packet j as a Wavepacket."""
        k = 0 if self.G.shape[0] == 1 else j
        return Wavepacket(dim=self.dim, q=self.q[j], p=self.p[j],
                          G=self.G[k], A=float(self.A[k]), t=self.t)

    @property
    def packets(self):
        return [self.packet(j) for j in range(len(self))]

    def expanded(self):
        """Return an equivalent ensemble with per-packet G and A arrays."""
        if self.G.shape[0] == len(self):
            return self
        M = len(self)
        return dataclasses.replace(
            self, G=np.repeat(self.G, M, axis=0), A=np.repeat(self.A, M))


@dataclasses.dataclass(frozen=True)
class WignerField:
    """Phase-space field values on a rectangular grid.

    grid holds one (min, max, points) triple per phase-space axis.
    """

    grid: tuple
    values: np.ndarray
    time: float

    def __post_init__(self):
        grid = tuple((float(a), float(b), int(m)) for a, b, m in self.grid)
        values = np.asarray(self.values, dtype=float)
        for a, b, m in grid:
            if m < 2 or not b > a:
                raise ValidationError("each grid axis needs points >= 2 and max > min")
        if values.shape != tuple(m for _, _, m in grid):
            raise ValidationError("values shape must match the grid spec")
        if not np.all(np.isfinite(values)):
            raise ValidationError("field values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time", float(self.time))

    @property
    def axes(self):
        return tuple(np.linspace(a, b, m) for a, b, m in self.grid)


# ---------------------------------------------------------------------------
# sampling and evolution


def _center_distribution(init, params):
    cov = (1.0 - params.epsilon) * init.cov
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "center covariance is not positive definite") from exc
    return init.mean, L


def sample_initial_centers(init, params, cfg):
    """Draw the M packet centers for the initial decomposition.

    Draw j is a fixed function of (seed, j): the whole block of standard
    normals comes from one counter-based stream, so a longer run reproduces a
    shorter run's draws as its prefix and worker count never matters.
    """
    mean, L = _center_distribution(init, params)
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    u = rng.standard_normal((cfg.num_samples, mean.size))
    return mean[None, :] + u @ L.T


def make_ensemble(init, params, cfg, pot=None):
    """Decompose the initial Gaussian into a packet population at t=0."""
    n = params.dim
    if init.mean.size != 2 * n:
        raise ValidationError("initial state dimension does not match params")
    centers = sample_initial_centers(init, params, cfg)
    G0 = np.linalg.inv(init.cov)
    G0 = 0.5 * (G0 + G0.T)
    det0 = np.linalg.det(init.cov)
    A0 = 1.0 / ((2.0 * np.pi * params.epsilon) ** n * math.sqrt(det0))
    return PacketEnsemble(
        dim=n, params=params,
        q=centers[:, :n].copy(), p=centers[:, n:].copy(),
        G=G0[None, :, :], A=np.array([A0]), t=0.0,
        init=init, sampling=cfg,
        potential_name=type(pot).__name__ if pot is not None else None)


def _evolve_slice(ctx, q, p, G, A, t0, cfg, t_final):
    q, p, G, A, t, _ = _evolve_batch(ctx, q, p, G, A, t0, cfg, t_final, ())
    return q, p, G, A, t


def evolve_ensemble(ens, pot, cfg, t_final):
    """Advance every packet to t_final.

    Packets are integrated in batch; when all packets share one shape matrix
    and the potential has constant curvature the shared shape is integrated
    once.  A positivity failure in any packet aborts the whole run with the
    offending packet indices attached.
    """
    if t_final < ens.t:
        raise ValidationError("t_final precedes the ensemble time")
    if t_final == ens.t:
        return ens
    ctx = _FlowContext(pot, ens.params)
    workers = ens.sampling.workers if ens.sampling is not None else 1

    if ens.shared_shape and not pot.constant_hess:
        ens = ens.expanded()

    M = len(ens)
    if ens.shared_shape:
        try:
            q, p, G, A, t = _evolve_slice(ctx, ens.q, ens.p, ens.G, ens.A,
                                          ens.t, cfg, t_final)
        except PositiveDefinitenessLost as exc:
            # the shape is shared, so every packet fails together
            raise PositiveDefinitenessLost(
                exc.time, indices=tuple(range(M))) from exc
        return dataclasses.replace(ens, q=q, p=p, G=G, A=A, t=t)
    if workers == 1 or M < 256:
        q, p, G, A, t = _evolve_slice(ctx, ens.q, ens.p, ens.G, ens.A,
                                      ens.t, cfg, t_final)
        return dataclasses.replace(ens, q=q, p=p, G=G, A=A, t=t)

    n_chunks = min(workers * 4, max(1, M // 64))
    bounds = np.linspace(0, M, n_chunks + 1).astype(int)
    results = [None] * n_chunks
    failures = []

    def run(i):
        lo, hi = bounds[i], bounds[i + 1]
        try:
            results[i] = _evolve_slice(ctx, ens.q[lo:hi], ens.p[lo:hi],
                                       ens.G[lo:hi], ens.A[lo:hi],
                                       ens.t, cfg, t_final)
        except PositiveDefinitenessLost as exc:
            failures.append((exc.time, tuple(lo + k for k in exc.indices)))

    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(run, range(n_chunks)))

    if failures:
        t_first = min(f[0] for f in failures)
        idx = tuple(sorted(set(i for f in failures for i in f[1])))
        raise PositiveDefinitenessLost(t_first, indices=idx)
    q = np.concatenate([r[0] for r in results])
    p = np.concatenate([r[1] for r in results])
    G = np.concatenate([r[2] for r in results])
    A = np.concatenate([r[3] for r in results])
    return dataclasses.replace(ens, q=q, p=p, G=G, A=A, t=t_final)


# ---------------------------------------------------------------------------
# reconstruction


def reconstruct(ens, grid, cutoff=70.0):
    """Assemble the phase-space field from the packet population.

    Each packet contributes A_j exp(-T_j/(2 eps)) with T_j its quadratic
    form; points with T_j/(2 eps) beyond the cutoff exponent contribute
    exactly zero, which changes the field by less than e^-cutoff per packet.
    """
    n = ens.dim
    grid = tuple(grid)
    if len(grid) != 2 * n:
        raise ValidationError("grid must specify one axis per phase-space "
                              "coordinate")
    axes = [np.linspace(float(a), float(b), int(m)) for a, b, m in grid]
    for ax in axes:
        if ax.size < 2:
            raise ValidationError("each grid axis needs points >= 2")
    mesh = np.meshgrid(*axes, indexing="ij")
    Z = np.stack([m.ravel() for m in mesh], axis=-1)
    eps = ens.params.epsilon
    t_max = 2.0 * eps * float(cutoff)

    M = len(ens)
    total = np.zeros(Z.shape[0])
    centers = np.concatenate([ens.q, ens.p], axis=1)
    for j in range(M):
        k = 0 if ens.G.shape[0] == 1 else j
        d = Z - centers[j]
        T = np.einsum("pi,ij,pj->p", d, ens.G[k], d)
        mask = T < t_max
        if not np.any(mask):
            continue
        total[mask] += ens.A[k] * np.exp(-T[mask] / (2.0 * eps))
    if not np.isfinite(total).all():
        raise NumericalError(
            "reconstructed field is not finite; the ensemble has diverged")
    shape = tuple(int(m) for _, _, m in grid)
    return WignerField(grid=grid, values=(total / M).reshape(shape),
                       time=ens.t)


# ---------------------------------------------------------------------------
# observables


def packet_masses(ens):
    """Per-packet phase-space integrals (1 for every packet at t=0)."""
    eps = ens.params.epsilon
    n = ens.dim
    det = np.linalg.det(ens.G)
    if np.any(det <= 0.0):
        raise NumericalError("shape matrix has non-positive determinant")
    return ens.A * (2.0 * np.pi * eps) ** n / np.sqrt(det)


def _quadrature_nodes(dim):
    eta, w = np.polynomial.hermite.hermgauss(20)
    grids = np.meshgrid(*([eta] * (2 * dim)), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(nodes.shape[0])
    for g in np.meshgrid(*([w] * (2 * dim)), indexing="ij"):
        weights = weights * g.ravel()
    return nodes, weights / np.pi ** dim


def _grid_function_value(wp, func, epsilon):
    if wp.dim > 2:
        raise ValidationError(
            "quadrature observables are limited to dim <= 2; use Linear or "
            "Quadratic forms for higher dimensions")
    sigma = wp.sigma
    dvals, V = np.linalg.eigh(sigma)
    if np.any(dvals <= 0.0):
        raise NumericalError("packet covariance is not positive definite")
    nodes, weights = _quadrature_nodes(wp.dim)
    scale = V @ np.diag(np.sqrt(2.0 * epsilon * dvals))
    Z = np.concatenate([wp.q, wp.p])[None, :] + nodes @ scale.T
    x, xi = Z[:, : wp.dim], Z[:, wp.dim:]
    if wp.dim == 1:
        x, xi = x[:, 0], xi[:, 0]
    vals = np.asarray(func(x, xi), dtype=float)
    return float(np.sum(weights * vals))


def packet_observable(wp, obs, epsilon):
    """Expectation of the observable over a single packet (mass-weighted)."""
    from .dynamics import packet_mass

    m = packet_mass(wp, epsilon)
    z = np.concatenate([wp.q, wp.p])
    if isinstance(obs, Linear):
        return m * (float(obs.b @ z) + obs.c)
    if isinstance(obs, Quadratic):
        sigma = wp.sigma
        val = float(z @ obs.Q @ z) + float(obs.b @ z) + obs.c
        return m * (val + epsilon * float(np.trace(obs.Q @ sigma)))
    if isinstance(obs, GridFunction):
        return m * _grid_function_value(wp, obs.func, epsilon)
    raise ValidationError(f"unsupported observable type {type(obs).__name__}")


def packet_values(ens, obs):
    """Mass-weighted per-packet contributions to an observable estimate."""
    eps = ens.params.epsilon
    masses = packet_masses(ens)
    z = np.concatenate([ens.q, ens.p], axis=1)
    if isinstance(obs, Linear):
        return masses * (z @ obs.b + obs.c)
    if isinstance(obs, Quadratic):
        quad = np.einsum("mi,ij,mj->m", z, obs.Q, z)
        sigma = np.linalg.inv(ens.G)
        tr = np.einsum("ij,mji->m", obs.Q, sigma)
        return masses * (quad + z @ obs.b + obs.c + eps * tr)
    if isinstance(obs, GridFunction):
        return np.array([packet_observable(ens.packet(j), obs, eps)
                         for j in range(len(ens))])
    raise ValidationError(f"unsupported observable type {type(obs).__name__}")


def ensemble_observable(ens, obs):
    """Sample mean of the per-packet observable values with its standard
    error (sample standard deviation over sqrt(M))."""
    vals = packet_values(ens, obs)
    M = len(ens)
    estimate = float(np.mean(vals))
    if M == 1:
        return EnsembleEstimate(estimate, 0.0, degenerate=True)
    std = float(np.std(vals, ddof=1) / math.sqrt(M))
    return EnsembleEstimate(estimate, std)
