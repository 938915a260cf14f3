"""Command-line front end for config-driven runs.

Every subcommand reads one config file, applies ``--set`` overrides, and
writes its artifacts plus a ``run-manifest.json`` into the output
directory.  The manifest records the resolved config (minus the worker
count, which never affects results), the seed, and the package version,
so identical invocations produce identical manifests byte for byte.

Exit codes: 0 success, 1 validation error (bad config, bad flags),
2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

from . import __version__
from .configio import build_reconstruction_grid, load_config
from .core import NumericalError, ValidationError, validate_params
from .formats import (write_ensemble_snapshot, write_grid_csv,
                      write_grid_dump, write_table_csv)
from .harness import (ExperimentSpec, convergence_tables,
                      epsilon_independence_report, initial_moment,
                      stability_settings_from_config, stability_study,
                      steady_state_settings_from_config, steady_state_study)
from .reference_gaussian import reference_observable
from .reference_grid import check_stability, field_observable, solve_grid
from .sampling import (SamplingConfig, ensemble_observable, evolve_ensemble,
                       make_ensemble, packet_masses, reconstruct)

_SUBCOMMANDS = ("evolve", "reconstruct", "observe", "table", "stability",
                "steady-state", "reference", "validate")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors surface as validation errors."""

    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="openwfp",
                     description="Phase-space packet solver toolkit")
    parser.add_argument("subcommand", choices=_SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="config file path")
    parser.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="KEY=VALUE",
                        help="override a config key (section.key=value)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override experiment.seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: WFP_FGS_WORKERS or "
                             "config)")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true")
    verbosity.add_argument("--verbose", action="store_true")
    return parser


class _Run:
    """Resolved invocation state shared by the subcommand handlers."""

    def __init__(self, args):
        self.args = args
        config = load_config(args.config, overrides=args.overrides)
        if args.seed is not None:
            config.setdefault("experiment", {})["seed"] = args.seed
        workers = args.workers
        if workers is None:
            env = os.environ.get("WFP_FGS_WORKERS")
            if env is not None:
                try:
                    workers = int(env)
                except ValueError:
                    raise ValidationError(
                        f"WFP_FGS_WORKERS must be an integer, got {env!r}")
        if workers is not None:
            config.setdefault("experiment", {})["workers"] = workers
        self.config = config
        self.spec = ExperimentSpec.from_config(config)
        out = args.out or self.spec.output or "."
        os.makedirs(out, exist_ok=True)
        self.out = out
        self.artifacts = []

    def info(self, message):
        if not self.args.quiet:
            print(message)

    def detail(self, message):
        if self.args.verbose:
            print(message)

    def path(self, name):
        self.artifacts.append(name)
        return os.path.join(self.out, name)

    def write_manifest(self, subcommand):
        config = copy.deepcopy(self.config)
        config.get("experiment", {}).pop("workers", None)
        manifest = {
            "command": subcommand,
            "config": config,
            "seed": self.spec.seed,
            "version": __version__,
            "artifacts": sorted(self.artifacts),
        }
        payload = json.dumps(manifest, sort_keys=True, indent=2,
                             default=_json_scalar) + "\n"
        with open(os.path.join(self.out, "run-manifest.json"), "w") as fh:
            fh.write(payload)


def _json_scalar(value):
    if isinstance(value, complex):
        return repr(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _base_ensemble(run: _Run):
    spec = run.spec
    params = spec.params(spec.epsilons[0])
    cfg = SamplingConfig(num_samples=spec.sample_sizes[0], seed=spec.seed,
                         workers=spec.workers)
    return make_ensemble(spec.init, params, cfg)


def _evolved_ensemble(run: _Run):
    spec = run.spec
    ens = _base_ensemble(run)
    return evolve_ensemble(ens, spec.potential, spec.integrator,
                           spec.t_final)


def cmd_validate(run: _Run) -> int:
    spec = run.spec
    report = validate_params(spec.params(spec.epsilons[-1]))
    for eps in spec.epsilons[:-1]:
        extra = validate_params(spec.params(eps))
        if not extra.ok:
            report = extra
            break
    print(str(report))
    if spec.grid is not None:
        check_stability(spec.grid, spec.params(min(spec.epsilons)))
        run.detail("grid step-size bound satisfied")
    if not report.ok:
        raise ValidationError("parameter set failed validation")
    run.info(f"config ok: {spec.name} ({len(spec.sample_sizes)} sample "
             f"sizes, {len(spec.epsilons)} epsilon values)")
    return 0


def cmd_evolve(run: _Run) -> int:
    ens = _evolved_ensemble(run)
    masses = packet_masses(ens)
    write_ensemble_snapshot(run.path(f"{run.spec.name}-ensemble.wfe"), ens)
    run.info(f"evolved {len(ens)} packets to t={ens.t:g}; "
             f"mass range [{masses.min():.9g}, {masses.max():.9g}]")
    return 0


def cmd_reconstruct(run: _Run) -> int:
    ens = _evolved_ensemble(run)
    grid = build_reconstruction_grid(run.config)
    cutoff = run.config.get("reconstruction", {}).get("cutoff", 70.0)
    field = reconstruct(ens, grid, cutoff=cutoff)
    write_grid_dump(run.path(f"{run.spec.name}-field.wfg"), field)
    write_grid_csv(run.path(f"{run.spec.name}-field.csv"), field)
    run.info(f"reconstructed {len(ens)} packets on "
             f"{grid[0][2]}x{grid[1][2]} nodes at t={ens.t:g}")
    return 0


def cmd_observe(run: _Run) -> int:
    ens = _evolved_ensemble(run)
    rows = []
    for name, ob in run.spec.observables:
        est = ensemble_observable(ens, ob)
        rows.append((name, est.estimate, est.sample_std))
        run.info(f"{name}: {est.estimate:.9g} (sample std "
                 f"{est.sample_std:.9g})")
    write_table_csv(run.path(f"{run.spec.name}-observables.csv"),
                    ("observable", "estimate", "sample_std"), rows)
    return 0


def cmd_table(run: _Run) -> int:
    spec = run.spec
    tables = convergence_tables(spec, out_dir=run.out)
    for name, table in tables.items():
        run.artifacts.append(f"{spec.name}-{name}-table.csv")
        report = epsilon_independence_report(table, out_dir=run.out,
                                             name=spec.name)
        run.artifacts.append(f"{spec.name}-{name}-epsilon-report.csv")
        slopes = ", ".join(f"{s:.3f}" for s in table.slopes)
        run.info(f"{name}: slopes per epsilon [{slopes}]")
        if report.flagged:
            run.info(f"{name}: epsilon spread above 10% at M={report.flagged}")
        else:
            run.info(f"{name}: epsilon spread within 10% on every row")
    return 0


def cmd_stability(run: _Run) -> int:
    settings = stability_settings_from_config(run.config)
    report = stability_study(run.spec, settings, out_dir=run.out)
    run.artifacts.extend(report.artifacts)
    run.artifacts.append(f"{run.spec.name}-stability.csv")
    run.info(f"small-domain boundary mass {report.small_metric:.3e}, "
             f"large-domain {report.large_metric:.3e}")
    run.info(f"packet mass range [{report.mass_min:.9g}, "
             f"{report.mass_max:.9g}]")
    return 0


def cmd_steady_state(run: _Run) -> int:
    settings = steady_state_settings_from_config(run.config)
    report = steady_state_study(run.spec, settings, out_dir=run.out)
    for t in settings.checkpoints:
        run.artifacts.append(f"{run.spec.name}-t{t:g}.wfg")
    run.artifacts.append(f"{run.spec.name}-steady-state.csv")
    diffs = ", ".join(f"{d:.4f}" for d in report.diffs)
    run.info(f"checkpoint differences [{diffs}] against threshold "
             f"{report.threshold:g}")
    run.info("converged" if report.converged else "not converged")
    return 0


def cmd_reference(run: _Run) -> int:
    spec = run.spec
    params = spec.params(spec.epsilons[0])
    rows = []
    if spec.reference == "grid":
        traj = solve_grid(spec.init, spec.potential, params, spec.grid)
        for name, ob in spec.observables:
            rows.append((name, field_observable(traj.final, ob)))
        write_grid_dump(run.path(f"{spec.name}-reference-grid.wfg"),
                        traj.final)
    elif spec.reference == "gaussian":
        for name, ob in spec.observables:
            rows.append((name, reference_observable(
                spec.init, spec.potential, params, spec.t_final, ob)))
    else:
        for name, ob in spec.observables:
            rows.append((name, initial_moment(spec.init, ob)))
    for name, value in rows:
        run.info(f"{name}: {value:.9g}")
    write_table_csv(run.path(f"{spec.name}-reference.csv"),
                    ("observable", "value"), rows)
    return 0


_HANDLERS = {
    "validate": cmd_validate,
    "evolve": cmd_evolve,
    "reconstruct": cmd_reconstruct,
    "observe": cmd_observe,
    "table": cmd_table,
    "stability": cmd_stability,
    "steady-state": cmd_steady_state,
    "reference": cmd_reference,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        run = _Run(args)
        status = _HANDLERS[args.subcommand](run)
        run.write_manifest(args.subcommand)
        return status
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
