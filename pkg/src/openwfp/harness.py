"""Experiment orchestration: RMSE tables, epsilon scans, long-time studies.

Everything here is deterministic given an ExperimentSpec.  Repeat r of an
RMSE estimate draws its samples from seed ``master ^ r``, so repeats are
independent yet reproducible, and outputs do not depend on worker count.
CSV artifacts are written through the fixed-precision writer so reruns
produce byte-identical files.
"""

from __future__ import annotations

import dataclasses
import os

import numpy as np

from .configio import (build_grid_config, build_initial, build_integrator,
                       build_observables, build_params, build_potential,
                       build_reconstruction_grid, observable_from_name,
                       reference_kind, require)
from .core import (DissipationParams, GaussianState, NumericalError,
                   Potential, ValidationError)
from .dynamics import IntegratorConfig, PositiveDefinitenessLost
from .formats import write_grid_dump, write_table_csv
from .reference_gaussian import reference_observable
from .reference_grid import (GridSolverConfig, boundary_mass_fraction,
                             field_observable, solve_grid)
from .sampling import (GridFunction, Linear, PacketEnsemble, Quadratic,
                       SamplingConfig, ensemble_observable, evolve_ensemble,
                       make_ensemble, packet_values,
                       reconstruct)

_REFERENCE_CHOICES = ("gaussian", "grid", "none")


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    """Complete description of one experiment family.

    The dissipation field stores the channel coefficients; its epsilon
    entry is only a default, and params(eps) stamps in the value actually
    used for a run.
    """

    name: str
    potential: Potential
    dissipation: DissipationParams
    init: GaussianState
    observables: tuple
    sample_sizes: tuple
    epsilons: tuple
    t_final: float
    integrator: IntegratorConfig
    n_repeat: int
    reference: str
    seed: int = 0
    workers: int = 1
    output: str | None = None
    grid: GridSolverConfig | None = None

    def __post_init__(self):
        object.__setattr__(self, "observables", tuple(self.observables))
        object.__setattr__(self, "sample_sizes",
                           tuple(int(m) for m in self.sample_sizes))
        object.__setattr__(self, "epsilons",
                           tuple(float(e) for e in self.epsilons))
        if not self.sample_sizes or min(self.sample_sizes) < 1:
            raise ValidationError("sample_sizes must be positive integers")
        if not self.epsilons:
            raise ValidationError("at least one epsilon is required")
        for eps in self.epsilons:
            if not 0.0 < eps < 1.0:
                raise ValidationError(f"epsilon must lie in (0, 1), got {eps}")
        if self.n_repeat < 2:
            raise ValidationError("n_repeat must be at least 2 (jackknife)")
        if self.reference not in _REFERENCE_CHOICES:
            raise ValidationError(
                f"reference must be one of {list(_REFERENCE_CHOICES)}")
        if self.t_final < 0.0:
            raise ValidationError("t_final must be nonnegative")
        if self.reference == "grid" and self.grid is None:
            raise ValidationError(
                "reference=grid needs a [grid] section (domain, points, dt)")

    def params(self, eps: float) -> DissipationParams:
        return dataclasses.replace(self.dissipation, epsilon=float(eps))

    @classmethod
    def from_config(cls, config: dict) -> "ExperimentSpec":
        exp = config.get("experiment", {})
        epsilons = tuple(require(config, "experiment", "epsilon"))
        t_final = float(exp.get("t_final", 1.0))
        reference = reference_kind(config)
        grid = None
        if "grid" in config or reference == "grid":
            grid = build_grid_config(config, t_final=t_final)
        return cls(
            name=exp.get("name", "experiment"),
            potential=build_potential(config),
            dissipation=build_params(config, epsilons[0]),
            init=build_initial(config),
            observables=tuple(build_observables(config)),
            sample_sizes=tuple(require(config, "experiment", "samples")),
            epsilons=epsilons,
            t_final=t_final,
            integrator=build_integrator(config),
            n_repeat=int(exp.get("repeats", 100)),
            reference=reference,
            seed=int(exp.get("seed", 0)),
            workers=int(exp.get("workers", 1)),
            output=exp.get("output"),
            grid=grid)


@dataclasses.dataclass(frozen=True)
class RmseEstimate:
    rmse: float
    stderr: float

    def __iter__(self):
        return iter((self.rmse, self.stderr))


@dataclasses.dataclass(frozen=True)
class ErrorTable:
    """RMSE of one observable on the sample-size x epsilon grid."""

    observable: str
    sample_sizes: tuple
    epsilons: tuple
    rmse: np.ndarray
    stderr: np.ndarray
    slopes: np.ndarray

    def rows(self):
        """CSV rows: M-major, epsilon-minor, slope repeated per column."""
        for i, m in enumerate(self.sample_sizes):
            for j, eps in enumerate(self.epsilons):
                yield (m, eps, self.rmse[i, j], self.stderr[i, j],
                       self.slopes[j])

    def write_csv(self, path):
        write_table_csv(path, ("M", "eps", "rmse", "stderr", "slope_hint"),
                        self.rows())


@dataclasses.dataclass(frozen=True)
class EpsilonReport:
    """Per-M spread across epsilon plus the sqrt(1-eps) trend check."""

    observable: str
    sample_sizes: tuple
    epsilons: tuple
    spreads: np.ndarray
    flagged: tuple
    ratios: np.ndarray
    predicted_ratio: float

    def rows(self):
        for i, m in enumerate(self.sample_sizes):
            yield (m, self.spreads[i], self.ratios[i], self.predicted_ratio)

    def write_csv(self, path):
        write_table_csv(path, ("M", "spread", "ratio", "predicted_ratio"),
                        self.rows())


@dataclasses.dataclass(frozen=True)
class StabilityReport:
    """Boundary-contamination comparison between grid runs and packets."""

    small_metric: float
    large_metric: float
    mass_min: float
    mass_max: float
    observables: tuple
    artifacts: tuple = ()


@dataclasses.dataclass(frozen=True)
class SteadyStateReport:
    checkpoint_times: tuple
    diffs: tuple
    converged: bool
    threshold: float

    def rows(self):
        for k, d in enumerate(self.diffs):
            yield (self.checkpoint_times[k], self.checkpoint_times[k + 1], d)

    def write_csv(self, path):
        write_table_csv(path, ("t_from", "t_to", "rel_l2_diff"), self.rows())


# ---------------------------------------------------------------------------
# observables and reference values


def resolve_observable(spec: ExperimentSpec, obs):
    """Accept an observable object, a token name, or None (first in spec)."""
    if obs is None:
        if not spec.observables:
            raise ValidationError("spec lists no observables")
        return spec.observables[0]
    if isinstance(obs, str):
        for name, ob in spec.observables:
            if name == obs:
                return name, ob
        return obs, observable_from_name(obs)
    if isinstance(obs, (Linear, Quadratic, GridFunction)):
        return "custom", obs
    raise ValidationError(f"cannot interpret observable {obs!r}")


def initial_moment(init: GaussianState, obs) -> float:
    """Exact expectation of a polynomial observable under the initial
    profile."""
    mean, cov = init.mean, init.cov
    if isinstance(obs, Linear):
        return float(obs.b @ mean + obs.c)
    if isinstance(obs, Quadratic):
        return float(mean @ obs.Q @ mean + obs.b @ mean + obs.c
                     + np.trace(obs.Q @ cov))
    raise ValidationError(
        "initial moments are only available for polynomial observables")


def reference_values(spec: ExperimentSpec, pairs, eps: float) -> list:
    """Ground-truth values for several (name, observable) pairs at once.

    The grid reference solves the evolution a single time and reads every
    observable off the final field, so batching is much cheaper than
    repeated reference_value calls.
    """
    if spec.reference == "none":
        return [initial_moment(spec.init, ob) for _, ob in pairs]
    params = spec.params(eps)
    if spec.reference == "gaussian":
        return [reference_observable(spec.init, spec.potential, params,
                                     spec.t_final, ob) for _, ob in pairs]
    traj = solve_grid(spec.init, spec.potential, params, spec.grid)
    return [field_observable(traj.final, ob) for _, ob in pairs]


def reference_value(spec: ExperimentSpec, obs, eps: float) -> float:
    """Ground-truth observable value per the spec's reference choice."""
    pair = resolve_observable(spec, obs)
    return reference_values(spec, [pair], eps)[0]


# ---------------------------------------------------------------------------
# RMSE estimation


def _fused_repeats(spec: ExperimentSpec, params, m: int) -> PacketEnsemble:
    """Stack n_repeat independent M-sample populations into one ensemble."""
    blocks_q, blocks_p = [], []
    template = None
    for r in range(spec.n_repeat):
        cfg = SamplingConfig(num_samples=m, seed=spec.seed ^ r,
                             workers=spec.workers)
        ens = make_ensemble(spec.init, params, cfg)
        blocks_q.append(ens.q)
        blocks_p.append(ens.p)
        template = ens
    fused_cfg = SamplingConfig(num_samples=spec.n_repeat * m, seed=spec.seed,
                               workers=spec.workers)
    return PacketEnsemble(
        dim=template.dim, params=params, q=np.vstack(blocks_q),
        p=np.vstack(blocks_p), G=template.G, A=template.A, t=0.0,
        init=spec.init, sampling=fused_cfg)


def _evolved_repeats(spec: ExperimentSpec, params, m: int) -> PacketEnsemble:
    """Fused repeats pushed to t_final, with PD loss reported per repeat."""
    fused = _fused_repeats(spec, params, m)
    try:
        return evolve_ensemble(fused, spec.potential, spec.integrator,
                               spec.t_final)
    except PositiveDefinitenessLost as exc:
        pairs = sorted({(g // m, g % m) for g in exc.indices})
        shown = ", ".join(f"(repeat {r}, packet {j})" for r, j in pairs[:6])
        more = "" if len(pairs) <= 6 else f" and {len(pairs) - 6} more"
        raise NumericalError(
            f"shape positivity lost at t={exc.time:.6g} in {shown}{more}"
        ) from exc


def _rmse_of(values: np.ndarray, ref: float) -> RmseEstimate:
    """RMSE of per-repeat means against ref, with jackknife stderr."""
    errors = values.mean(axis=1) - ref
    total = float(np.sum(errors ** 2))
    n_rep = values.shape[0]
    rmse = np.sqrt(total / n_rep)
    leave_one_out = np.sqrt((total - errors ** 2) / (n_rep - 1))
    stderr = np.sqrt((n_rep - 1) / n_rep
                     * np.sum((leave_one_out - leave_one_out.mean()) ** 2))
    return RmseEstimate(float(rmse), float(stderr))


def estimate_rmse(spec: ExperimentSpec, m: int, eps: float, obs=None,
                  ref=None) -> RmseEstimate:
    """Root-mean-square error of the M-sample estimator over n_repeat
    independent repeats, with its jackknife standard error.

    ref short-circuits the reference computation when the caller already
    holds the ground-truth value (convergence_tables computes it once per
    epsilon column).
    """
    _, ob = resolve_observable(spec, obs)
    if ref is None:
        ref = reference_value(spec, ob, eps)
    fused = _evolved_repeats(spec, spec.params(eps), m)
    values = packet_values(fused, ob).reshape(spec.n_repeat, m)
    return _rmse_of(values, ref)


def convergence_tables(spec: ExperimentSpec, observables=None,
                       out_dir=None) -> dict:
    """Fill the M x epsilon RMSE grid for several observables at once.

    Each (M, epsilon) cell evolves one fused ensemble and reads every
    requested observable off it, and each epsilon column computes its
    reference values in a single batch, so the heavy work is shared
    instead of repeated per observable.  The estimates are identical to
    running each observable on its own.  observables=None takes the full
    list from the spec; entries may be token names, observable objects,
    or None for the spec's first entry.  Returns {name: ErrorTable}.
    """
    if observables is None:
        if not spec.observables:
            raise ValidationError("spec lists no observables")
        pairs = list(spec.observables)
    else:
        pairs = [resolve_observable(spec, ob) for ob in observables]
    names = [name for name, _ in pairs]
    if len(set(names)) != len(names):
        raise ValidationError("observable names must be distinct: "
                              + ", ".join(names))
    n_m, n_eps = len(spec.sample_sizes), len(spec.epsilons)
    rmse = {name: np.empty((n_m, n_eps)) for name in names}
    stderr = {name: np.empty((n_m, n_eps)) for name in names}
    for j, eps in enumerate(spec.epsilons):
        refs = reference_values(spec, pairs, eps)
        params = spec.params(eps)
        for i, m in enumerate(spec.sample_sizes):
            fused = _evolved_repeats(spec, params, m)
            for (name, ob), ref in zip(pairs, refs):
                values = packet_values(fused, ob).reshape(spec.n_repeat, m)
                cell = _rmse_of(values, ref)
                rmse[name][i, j] = cell.rmse
                stderr[name][i, j] = cell.stderr
    log_m = np.log(np.asarray(spec.sample_sizes, dtype=float))
    tables = {}
    for name in names:
        slopes = np.array([np.polyfit(log_m, np.log(rmse[name][:, j]), 1)[0]
                           for j in range(n_eps)])
        table = ErrorTable(observable=name, sample_sizes=spec.sample_sizes,
                           epsilons=spec.epsilons, rmse=rmse[name],
                           stderr=stderr[name], slopes=slopes)
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            table.write_csv(os.path.join(out_dir,
                                         f"{spec.name}-{name}-table.csv"))
        tables[name] = table
    return tables


def convergence_table(spec: ExperimentSpec, obs=None,
                      out_dir=None) -> ErrorTable:
    """Fill the full M x epsilon RMSE grid for one observable.

    The reference value is computed once per epsilon column.  With out_dir
    set, the table lands in ``{name}-{observable}-table.csv``.
    """
    name, _ = resolve_observable(spec, obs)
    return convergence_tables(spec, [obs], out_dir=out_dir)[name]


def epsilon_independence_report(table: ErrorTable,
                                out_dir=None, name="experiment"):
    """Quantify how flat each M-row is across epsilon.

    spread = (max - min)/min per row; rows above 10% are flagged.  The
    ratio column compares first to last epsilon against the predicted
    sqrt((1-eps_first)/(1-eps_last)) factor.
    """
    rmse = table.rmse
    spreads = rmse.max(axis=1) / rmse.min(axis=1) - 1.0
    flagged = tuple(int(table.sample_sizes[i])
                    for i in np.nonzero(spreads > 0.10)[0])
    ratios = rmse[:, 0] / rmse[:, -1]
    predicted = float(np.sqrt((1.0 - table.epsilons[0])
                              / (1.0 - table.epsilons[-1])))
    report = EpsilonReport(observable=table.observable,
                           sample_sizes=table.sample_sizes,
                           epsilons=table.epsilons, spreads=spreads,
                           flagged=flagged, ratios=ratios,
                           predicted_ratio=predicted)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        report.write_csv(os.path.join(
            out_dir, f"{name}-{table.observable}-epsilon-report.csv"))
    return report


# ---------------------------------------------------------------------------
# long-time studies


@dataclasses.dataclass(frozen=True)
class StabilitySettings:
    """Grid-domain comparison knobs for the long-time contamination study.

    The small-domain run is expected to corrupt itself, so the spectral
    consistency threshold is deliberately loose for these runs.
    """

    small_domain: tuple = ((-5.0, 5.0), (-5.0, 5.0))
    large_domain: tuple = ((-8.0, 8.0), (-8.0, 8.0))
    points: int = 256
    dt: float = 2e-3
    edge_cells: int = 3
    residue_threshold: float = 1e-3


def _axes_pair(values, where):
    if len(values) == 2:
        return ((values[0], values[1]), (values[0], values[1]))
    if len(values) == 4:
        return ((values[0], values[1]), (values[2], values[3]))
    raise ValidationError(f"{where} needs 2 or 4 values")


def stability_settings_from_config(config: dict) -> StabilitySettings:
    section = config.get("stability", {})
    kwargs = {}
    if "small_domain" in section:
        kwargs["small_domain"] = _axes_pair(section["small_domain"],
                                            "stability.small_domain")
    if "large_domain" in section:
        kwargs["large_domain"] = _axes_pair(section["large_domain"],
                                            "stability.large_domain")
    for key in ("points", "dt", "edge_cells", "residue_threshold"):
        if key in section:
            kwargs[key] = section[key]
    return StabilitySettings(**kwargs)


def stability_study(spec: ExperimentSpec,
                    settings: StabilitySettings | None = None,
                    out_dir=None) -> StabilityReport:
    """Contrast grid runs on two domains with the mesh-free ensemble.

    The boundary-mass metric is the fraction of |W| within edge_cells of
    the domain edge at t_final; contamination that has wrapped around the
    periodic boundary shows up there.  Packet evolution has no domain, so
    its per-packet masses staying at 1 is the matching health check.
    """
    if settings is None:
        settings = StabilitySettings()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    eps = spec.epsilons[0]
    params = spec.params(eps)
    metrics = {}
    artifacts = []
    for label, (x_axis, v_axis) in (("small", settings.small_domain),
                                    ("large", settings.large_domain)):
        cfg = GridSolverConfig(
            domain=((x_axis[0], x_axis[1], settings.points),
                    (v_axis[0], v_axis[1], settings.points)),
            dt=settings.dt, t_final=spec.t_final,
            residue_threshold=settings.residue_threshold)
        traj = solve_grid(spec.init, spec.potential, params, cfg)
        metrics[label] = boundary_mass_fraction(traj.final,
                                                cells=settings.edge_cells)
        if out_dir is not None:
            dump = f"{spec.name}-{label}-grid.wfg"
            write_grid_dump(os.path.join(out_dir, dump), traj.final)
            artifacts.append(dump)

    cfg = SamplingConfig(num_samples=spec.sample_sizes[0], seed=spec.seed,
                         workers=spec.workers)
    ens = make_ensemble(spec.init, params, cfg)
    ens = evolve_ensemble(ens, spec.potential, spec.integrator, spec.t_final)
    # This is a diagnostic: a packet whose shape matrix has degenerated
    # must show up in the report as a broken mass, not abort the study
    # after the grid metrics are already in hand.
    det = np.linalg.det(ens.G)
    masses = np.where(det > 0.0,
                      ens.A * (2.0 * np.pi * params.epsilon) ** ens.dim
                      / np.sqrt(np.where(det > 0.0, det, 1.0)),
                      np.inf)
    healthy = bool(np.isfinite(masses).all())
    if healthy:
        observables = tuple((name,
                             float(ensemble_observable(ens, ob).estimate))
                            for name, ob in spec.observables)
    else:
        # Degenerate packets have no well-defined density, so neither the
        # ensemble averages nor the reconstructed field mean anything;
        # the broken masses in the report carry the finding.
        observables = tuple((name, float("nan"))
                            for name, ob in spec.observables)
    if out_dir is not None and healthy:
        (xa, xb), (va, vb) = settings.large_domain
        grid = ((xa, xb, settings.points), (va, vb, settings.points))
        field = reconstruct(ens, grid)
        dump = f"{spec.name}-packets-grid.wfg"
        write_grid_dump(os.path.join(out_dir, dump), field)
        artifacts.append(dump)

    report = StabilityReport(
        small_metric=float(metrics["small"]),
        large_metric=float(metrics["large"]),
        mass_min=float(masses.min()), mass_max=float(masses.max()),
        observables=observables, artifacts=tuple(artifacts))
    if out_dir is not None:
        rows = [("small_boundary_mass", report.small_metric),
                ("large_boundary_mass", report.large_metric),
                ("packet_mass_min", report.mass_min),
                ("packet_mass_max", report.mass_max)]
        rows += [(f"mean_{name}", value) for name, value in observables]
        write_table_csv(os.path.join(out_dir, f"{spec.name}-stability.csv"),
                        ("quantity", "value"), rows)
    return report


@dataclasses.dataclass(frozen=True)
class SteadyStateSettings:
    checkpoints: tuple = (5.0, 10.0, 15.0, 20.0)
    threshold: float = 0.05
    grid: tuple = ((-4.0, 4.0, 128), (-4.0, 4.0, 128))
    cutoff: float = 70.0

    def __post_init__(self):
        times = tuple(float(t) for t in self.checkpoints)
        if len(times) < 3 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError(
                "checkpoints must be at least three increasing times")
        object.__setattr__(self, "checkpoints", times)


def steady_state_settings_from_config(config: dict) -> SteadyStateSettings:
    section = config.get("steady_state", {})
    kwargs = {}
    if "checkpoints" in section:
        kwargs["checkpoints"] = tuple(section["checkpoints"])
    if "threshold" in section:
        kwargs["threshold"] = section["threshold"]
    if "reconstruction" in config:
        kwargs["grid"] = build_reconstruction_grid(config)
        if "cutoff" in config["reconstruction"]:
            kwargs["cutoff"] = config["reconstruction"]["cutoff"]
    return SteadyStateSettings(**kwargs)


def steady_state_study(spec: ExperimentSpec,
                       settings: SteadyStateSettings | None = None,
                       out_dir=None) -> SteadyStateReport:
    """Detect relaxation by comparing reconstructions at checkpoints.

    The ensemble evolves through the checkpoint times sequentially; at
    each one the field is rebuilt on a fixed grid and compared to the
    previous checkpoint by relative L2 difference.  Converged means the
    final difference sits under the threshold and the differences did not
    grow over the last two intervals.
    """
    if settings is None:
        settings = SteadyStateSettings()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    eps = spec.epsilons[0]
    params = spec.params(eps)
    cfg = SamplingConfig(num_samples=spec.sample_sizes[0], seed=spec.seed,
                         workers=spec.workers)
    ens = make_ensemble(spec.init, params, cfg)
    fields = []
    for t_k in settings.checkpoints:
        ens = evolve_ensemble(ens, spec.potential, spec.integrator, t_k)
        field = reconstruct(ens, settings.grid, cutoff=settings.cutoff)
        fields.append(field)
        if out_dir is not None:
            write_grid_dump(
                os.path.join(out_dir, f"{spec.name}-t{t_k:g}.wfg"), field)
    diffs = []
    for prev, cur in zip(fields, fields[1:]):
        denom = np.linalg.norm(prev.values)
        if denom == 0.0:
            raise NumericalError("checkpoint field vanished")
        diffs.append(float(np.linalg.norm(cur.values - prev.values) / denom))
    converged = diffs[-1] < settings.threshold and diffs[-2] >= diffs[-1]
    report = SteadyStateReport(checkpoint_times=settings.checkpoints,
                               diffs=tuple(diffs), converged=converged,
                               threshold=settings.threshold)
    if out_dir is not None:
        report.write_csv(os.path.join(out_dir,
                                      f"{spec.name}-steady-state.csv"))
    return report
