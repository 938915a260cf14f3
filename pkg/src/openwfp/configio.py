"""Plain-text experiment configuration: schema, parsing, object builders.

Config files use INI-style sections.  Every key is schema-checked; unknown
sections or keys are hard errors so typos cannot silently change a run.
Numbers accept fraction notation ("1/16") anywhere a float is expected,
and complex values use Python's j-notation ("1j", "0.05-0.5j").

The full schema:

[experiment]      name, observables, samples, epsilon, repeats, t_final,
                  reference (gaussian|grid|none), seed, workers, output
[potential]       kind (harmonic|double-well|triple-well|near-harmonic),
                  a2, a1, a0 (harmonic only)
[dissipation]     alpha, beta, gamma, mu        (one channel, 1D system)
[initial]         mean (2 values), cov (2 diagonal values or 4 row-major)
[integration]     dt, scheme, pd_check_interval, pd_tolerance, hess_bound
[grid]            domain (2 or 4 values), points, dt, residue_threshold
[reconstruction]  domain (2 or 4 values), points, cutoff
[stability]       small_domain, large_domain, points, dt, edge_cells,
                  residue_threshold
[steady_state]    checkpoints, threshold

Overrides use dotted keys, e.g. ``experiment.repeats=50``; they pass
through the same schema checks as file values.
"""

from __future__ import annotations

import configparser

import numpy as np

from .core import (DissipationParams, DoubleWellPotential, GaussianState,
                   HarmonicPotential, NearHarmonicPotential, Potential,
                   TripleWellPotential, ValidationError)
from .dynamics import IntegratorConfig
from .reference_grid import GridSolverConfig
from .sampling import Linear, Quadratic

_POTENTIALS = {
    "harmonic": HarmonicPotential,
    "double-well": DoubleWellPotential,
    "triple-well": TripleWellPotential,
    "near-harmonic": NearHarmonicPotential,
}

_REFERENCES = ("gaussian", "grid", "none")

_SCHEMA = {
    "experiment": {
        "name": "str",
        "observables": "str_list",
        "samples": "int_list",
        "epsilon": "float_list",
        "repeats": "int",
        "t_final": "float",
        "reference": "str",
        "seed": "int",
        "workers": "int",
        "output": "str",
    },
    "potential": {
        "kind": "str",
        "a2": "float",
        "a1": "float",
        "a0": "float",
    },
    "dissipation": {
        "alpha": "float",
        "beta": "float",
        "gamma": "complex",
        "mu": "float",
    },
    "initial": {
        "mean": "float_list",
        "cov": "float_list",
    },
    "integration": {
        "dt": "float",
        "scheme": "str",
        "pd_check_interval": "int",
        "pd_tolerance": "float",
        "hess_bound": "float",
    },
    "grid": {
        "domain": "float_list",
        "points": "int",
        "dt": "float",
        "residue_threshold": "float",
    },
    "reconstruction": {
        "domain": "float_list",
        "points": "int",
        "cutoff": "float",
    },
    "stability": {
        "small_domain": "float_list",
        "large_domain": "float_list",
        "points": "int",
        "dt": "float",
        "edge_cells": "int",
        "residue_threshold": "float",
    },
    "steady_state": {
        "checkpoints": "float_list",
        "threshold": "float",
    },
}


def _parse_float(raw: str, where: str) -> float:
    s = raw.strip()
    try:
        if "/" in s:
            num, den = s.split("/")
            return float(num) / float(den)
        return float(s)
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"bad numeric value for {where}: {raw!r}")


def _parse_int(raw: str, where: str) -> int:
    try:
        return int(raw.strip(), 0)
    except ValueError:
        raise ValidationError(f"bad integer value for {where}: {raw!r}")


def _parse_complex(raw: str, where: str) -> complex:
    s = raw.strip().replace(" ", "")
    try:
        return complex(s)
    except ValueError:
        raise ValidationError(f"bad complex value for {where}: {raw!r}")


def _split_list(raw: str):
    items = [part.strip() for part in raw.replace(",", " ").split()]
    return [part for part in items if part]


def _parse_value(kind: str, raw: str, where: str):
    if kind == "str":
        return raw.strip()
    if kind == "int":
        return _parse_int(raw, where)
    if kind == "float":
        return _parse_float(raw, where)
    if kind == "complex":
        return _parse_complex(raw, where)
    if kind == "int_list":
        return [_parse_int(part, where) for part in _split_list(raw)]
    if kind == "float_list":
        return [_parse_float(part, where) for part in _split_list(raw)]
    if kind == "str_list":
        return _split_list(raw)
    raise AssertionError(f"unknown schema kind {kind}")


def load_config(path, overrides=()):
    """Parse and schema-check a config file, then apply dotted overrides.

    Returns a nested {section: {key: parsed value}} dict.  Unknown
    sections, unknown keys, and unparseable values raise ValidationError
    naming the offender; missing files raise OSError.
    """
    parser = configparser.ConfigParser(
        interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    with open(path, "r") as fh:
        try:
            parser.read_file(fh, source=str(path))
        except configparser.Error as exc:
            raise ValidationError(f"cannot parse config {path}: {exc}")
    config: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ValidationError(f"unknown config section [{section}]")
        config[section] = {}
        for key, raw in parser.items(section):
            kind = _SCHEMA[section].get(key)
            if kind is None:
                raise ValidationError(f"unknown config key {section}.{key}")
            config[section][key] = _parse_value(kind, raw, f"{section}.{key}")
    apply_overrides(config, overrides)
    return config


def apply_overrides(config: dict, assignments):
    """Apply ``section.key=value`` strings in place, schema-checked."""
    for text in assignments:
        if "=" not in text:
            raise ValidationError(
                f"override must look like section.key=value, got {text!r}")
        dotted, raw = text.split("=", 1)
        dotted = dotted.strip()
        if dotted.count(".") != 1:
            raise ValidationError(
                f"override key must be section.key, got {dotted!r}")
        section, key = dotted.split(".")
        kind = _SCHEMA.get(section, {}).get(key)
        if kind is None:
            raise ValidationError(f"unknown config key {section}.{key}")
        config.setdefault(section, {})[key] = _parse_value(
            kind, raw, f"{section}.{key}")
    return config


def require(config: dict, section: str, key: str):
    """Fetch a key that the requested run cannot proceed without."""
    try:
        return config[section][key]
    except KeyError:
        raise ValidationError(f"missing config key {section}.{key}")


# ---------------------------------------------------------------------------
# object builders (1D experiment configs)


def build_potential(config: dict) -> Potential:
    kind = require(config, "potential", "kind")
    cls = _POTENTIALS.get(kind)
    if cls is None:
        raise ValidationError(
            f"unknown potential.kind {kind!r}; choose from "
            f"{sorted(_POTENTIALS)}")
    section = config.get("potential", {})
    coefficients = {k: section[k] for k in ("a2", "a1", "a0") if k in section}
    if cls is HarmonicPotential:
        a2 = coefficients.get("a2", 1.0)
        return HarmonicPotential(a2=[[a2]],
                                 a1=[coefficients.get("a1", 0.0)],
                                 a0=coefficients.get("a0", 0.0))
    if coefficients:
        raise ValidationError(
            f"potential coefficients {sorted(coefficients)} only apply to "
            f"kind=harmonic, not {kind!r}")
    return cls()


def build_params(config: dict, epsilon: float) -> DissipationParams:
    section = config.get("dissipation", {})
    return DissipationParams(
        dim=1, epsilon=epsilon,
        alpha=[section.get("alpha", 0.0)],
        beta=[section.get("beta", 0.0)],
        gamma=[section.get("gamma", 0.0)],
        mu=[section.get("mu", 0.0)])


def build_initial(config: dict) -> GaussianState:
    mean = require(config, "initial", "mean")
    cov = require(config, "initial", "cov")
    if len(mean) != 2:
        raise ValidationError(
            f"initial.mean needs 2 values (x0, xi0), got {len(mean)}")
    if len(cov) == 2:
        matrix = np.diag(cov)
    elif len(cov) == 4:
        matrix = np.asarray(cov, dtype=float).reshape(2, 2)
    else:
        raise ValidationError(
            "initial.cov needs 2 (diagonal) or 4 (row-major) values, "
            f"got {len(cov)}")
    return GaussianState(dim=1, mean=mean, cov=matrix)


def build_integrator(config: dict) -> IntegratorConfig:
    section = config.get("integration", {})
    kwargs = {}
    for key in ("dt", "scheme", "pd_check_interval", "pd_tolerance",
                "hess_bound"):
        if key in section:
            kwargs[key] = section[key]
    return IntegratorConfig(**kwargs)


def observable_from_name(name: str):
    """Map an observable token to its phase-space form (1D system)."""
    if name == "x":
        return Linear(b=[1.0, 0.0])
    if name == "xi":
        return Linear(b=[0.0, 1.0])
    if name == "x2":
        return Quadratic(Q=[[1.0, 0.0], [0.0, 0.0]])
    if name == "xi2":
        return Quadratic(Q=[[0.0, 0.0], [0.0, 1.0]])
    raise ValidationError(
        f"unknown observable {name!r}; choose from ['x', 'xi', 'x2', 'xi2']")


def build_observables(config: dict):
    names = config.get("experiment", {}).get("observables", ["x"])
    return [(name, observable_from_name(name)) for name in names]


def _domain_axes(values, where: str):
    if len(values) == 2:
        return (values[0], values[1]), (values[0], values[1])
    if len(values) == 4:
        return (values[0], values[1]), (values[2], values[3])
    raise ValidationError(
        f"{where} needs 2 (square) or 4 (x then xi) values, "
        f"got {len(values)}")


def build_grid_config(config: dict, t_final: float,
                      section: str = "grid",
                      domain_key: str = "domain") -> GridSolverConfig:
    """Assemble grid-solver settings from a config section."""
    values = config.get(section, {})
    domain = require(config, section, domain_key)
    (xa, xb), (va, vb) = _domain_axes(domain, f"{section}.{domain_key}")
    points = values.get("points", 256)
    kwargs = {}
    if "residue_threshold" in values:
        kwargs["residue_threshold"] = values["residue_threshold"]
    return GridSolverConfig(
        domain=((xa, xb, points), (va, vb, points)),
        dt=values.get("dt", 1e-3), t_final=t_final, **kwargs)


def build_reconstruction_grid(config: dict):
    """Grid triples for density reconstruction; defaults to [-4,4]^2, 128."""
    section = config.get("reconstruction", {})
    domain = section.get("domain", [-4.0, 4.0])
    (xa, xb), (va, vb) = _domain_axes(domain, "reconstruction.domain")
    points = section.get("points", 128)
    return ((xa, xb, points), (va, vb, points))


def reference_kind(config: dict) -> str:
    kind = config.get("experiment", {}).get("reference", "none")
    if kind not in _REFERENCES:
        raise ValidationError(
            f"experiment.reference must be one of {list(_REFERENCES)}, "
            f"got {kind!r}")
    return kind
