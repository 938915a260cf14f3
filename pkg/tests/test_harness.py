"""Experiment harness: RMSE estimation, tables, studies."""

from __future__ import annotations

import numpy as np
import pytest

from openwfp.core import (DissipationParams, GaussianState, NumericalError,
                          HarmonicPotential, ValidationError)
from openwfp.dynamics import IntegratorConfig
from openwfp.formats import read_table_csv
from openwfp.harness import (EpsilonReport, ErrorTable, ExperimentSpec,
                             StabilitySettings, SteadyStateSettings,
                             convergence_table, convergence_tables,
                             epsilon_independence_report,
                             estimate_rmse, initial_moment, reference_value,
                             resolve_observable, stability_study,
                             steady_state_study)
from openwfp.configio import load_config, observable_from_name
from openwfp.sampling import Linear, Quadratic


def spec_51(m_list=(100,), eps_list=(1 / 16,), t_final=1.0, repeats=100,
            reference="gaussian", seed=7, workers=1, dt=0.01):
    """Anti-damped harmonic configuration used across the table tests."""
    return ExperimentSpec(
        name="tables",
        potential=HarmonicPotential(a2=[[1.0]], a1=[1.0]),
        dissipation=DissipationParams(dim=1, epsilon=eps_list[0],
                                      alpha=[0.4], beta=[0.1], gamma=[1j],
                                      mu=[-1.0]),
        init=GaussianState(dim=1, mean=[-0.1, 0.2], cov=np.diag([5.0, 5.0])),
        observables=(("x", observable_from_name("x")),
                     ("xi", observable_from_name("xi"))),
        sample_sizes=m_list, epsilons=eps_list, t_final=t_final,
        integrator=IntegratorConfig(dt=dt), n_repeat=repeats,
        reference=reference, seed=seed, workers=workers)


CONFIG_TEXT = """
[experiment]
name = demo
observables = x
samples = 100, 400
epsilon = 1/16, 1/32
repeats = 50
t_final = 1.0
reference = gaussian
seed = 3

[potential]
kind = harmonic
a2 = 1.0
a1 = 1.0

[dissipation]
alpha = 0.4
beta = 0.1
gamma = 1j
mu = -1.0

[initial]
mean = -0.1, 0.2
cov = 5.0, 5.0

[integration]
dt = 0.01
"""


def test_spec_from_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(CONFIG_TEXT)
    spec = ExperimentSpec.from_config(load_config(path))
    assert spec.name == "demo"
    assert spec.sample_sizes == (100, 400)
    assert spec.epsilons == (1 / 16, 1 / 32)
    assert spec.n_repeat == 50
    assert spec.reference == "gaussian"
    assert spec.integrator.dt == 0.01
    assert spec.params(1 / 32).epsilon == 1 / 32
    assert spec.params(1 / 32).gamma[0] == 1j


def test_spec_validation():
    with pytest.raises(ValidationError, match="reference"):
        spec_51(reference="tarot")
    with pytest.raises(ValidationError, match="n_repeat"):
        spec_51(repeats=1)
    with pytest.raises(ValidationError, match="epsilon"):
        spec_51(eps_list=(1.5,))
    with pytest.raises(ValidationError, match="grid"):
        spec_51(reference="grid")


def test_resolve_observable():
    spec = spec_51()
    name, ob = resolve_observable(spec, None)
    assert name == "x" and isinstance(ob, Linear)
    name, ob = resolve_observable(spec, "xi")
    assert name == "xi" and ob.b[1] == 1.0
    name, ob = resolve_observable(spec, "x2")
    assert name == "x2" and isinstance(ob, Quadratic)
    name, ob = resolve_observable(spec, Linear(b=[2.0, 0.0]))
    assert name == "custom"
    with pytest.raises(ValidationError):
        resolve_observable(spec, 3.5)


def test_initial_moment_hand_values():
    init = GaussianState(dim=1, mean=[-0.1, 0.2], cov=np.diag([5.0, 5.0]))
    assert initial_moment(init, observable_from_name("x")) == pytest.approx(-0.1)
    assert initial_moment(init, observable_from_name("xi")) == pytest.approx(0.2)
    assert initial_moment(init, observable_from_name("x2")) == pytest.approx(5.01)
    assert initial_moment(init, observable_from_name("xi2")) == pytest.approx(5.04)


def test_reference_value_choices():
    spec = spec_51(t_final=0.0, reference="none")
    assert reference_value(spec, "x", 1 / 16) == pytest.approx(-0.1)
    spec = spec_51(t_final=0.0, reference="gaussian")
    # the moment flow at t=0 must return the exact initial moment
    assert reference_value(spec, "x", 1 / 16) == pytest.approx(-0.1, abs=1e-12)


def test_rmse_at_t0_matches_sampling_statistics():
    # with no evolution the estimator error is pure initial-draw noise, so
    # the RMSE must reproduce sqrt((1-eps) * cov_xx / M)
    spec = spec_51(m_list=(100,), t_final=0.0, reference="none", repeats=200)
    rmse, stderr = estimate_rmse(spec, 100, 1 / 16, "x")
    expected = np.sqrt((1 - 1 / 16) * 5.0 / 100)
    assert stderr > 0.0
    assert abs(rmse - expected) < 3.0 * stderr


def test_rmse_sample_size_scaling():
    # quadrupling M should halve the error
    spec = spec_51(m_list=(100, 400, 1600), t_final=0.0, reference="none",
                   repeats=300)
    cells = [estimate_rmse(spec, m, 1 / 16, "x").rmse for m in (100, 400, 1600)]
    assert 1.7 < cells[0] / cells[1] < 2.3
    assert 1.7 < cells[1] / cells[2] < 2.3


def test_rmse_evolved_matches_linear_flow_prediction():
    # under a quadratic potential the packet centers follow the linear flow
    # dz = F z + f with F = [[0, 1], [-1, 2]] here, so the estimator noise
    # at t=1 is the initial center covariance pushed through expm(F).
    # (F - I) is nilpotent, hence expm(F) = e * (I + (F - I)) = e * F.
    spec = spec_51(m_list=(64,), repeats=400)
    rmse, stderr = estimate_rmse(spec, 64, 1 / 16, "x")
    flow = np.e * np.array([[0.0, 1.0], [-1.0, 2.0]])
    center_cov = flow @ ((1 - 1 / 16) * np.diag([5.0, 5.0])) @ flow.T
    predicted = np.sqrt(center_cov[0, 0] / 64)
    assert abs(rmse - predicted) < 4.0 * stderr
    assert stderr < 0.15 * rmse


def test_rmse_deterministic_and_worker_independent():
    first = estimate_rmse(spec_51(m_list=(300,), t_final=0.5, repeats=50),
                          300, 1 / 16, "x")
    again = estimate_rmse(spec_51(m_list=(300,), t_final=0.5, repeats=50),
                          300, 1 / 16, "x")
    threaded = estimate_rmse(
        spec_51(m_list=(300,), t_final=0.5, repeats=50, workers=4),
        300, 1 / 16, "x")
    assert first.rmse == again.rmse and first.stderr == again.stderr
    assert first.rmse == threaded.rmse and first.stderr == threaded.stderr


def test_rmse_propagates_failures_with_repeat_and_packet():
    spec = spec_51(m_list=(4,), repeats=3)
    spec = ExperimentSpec(**{**{f.name: getattr(spec, f.name)
                                for f in spec.__dataclass_fields__.values()},
                             "integrator": IntegratorConfig(
                                 dt=0.01, pd_tolerance=10.0)})
    with pytest.raises(NumericalError, match=r"repeat 0, packet 0"):
        estimate_rmse(spec, 4, 1 / 16, "x")


def test_convergence_table_slopes_and_csv(tmp_path):
    spec = spec_51(m_list=(100, 400, 1600), eps_list=(1 / 16, 1 / 32),
                   t_final=0.0, reference="none", repeats=500)
    table = convergence_table(spec, "x", out_dir=tmp_path)
    assert table.rmse.shape == (3, 2)
    assert np.all(table.rmse > 0)
    for slope in table.slopes:
        assert -0.6 < slope < -0.4
    header, rows = read_table_csv(tmp_path / "tables-x-table.csv")
    assert header == ["M", "eps", "rmse", "stderr", "slope_hint"]
    assert len(rows) == 6
    assert rows[0][0] == "100" and rows[0][1] == "0.0625"
    assert rows[5][0] == "1600" and rows[5][1] == "0.03125"


def test_convergence_tables_match_per_observable_runs(tmp_path):
    spec = spec_51(m_list=(50, 200), eps_list=(1 / 16, 1 / 32),
                   t_final=0.5, repeats=60)
    batched = convergence_tables(spec, out_dir=tmp_path)
    assert set(batched) == {"x", "xi"}
    for name in ("x", "xi"):
        single = convergence_table(spec, name)
        assert np.array_equal(batched[name].rmse, single.rmse)
        assert np.array_equal(batched[name].stderr, single.stderr)
        assert np.array_equal(batched[name].slopes, single.slopes)
        assert (tmp_path / f"tables-{name}-table.csv").exists()


def test_convergence_tables_reject_duplicate_names():
    spec = spec_51()
    with pytest.raises(ValidationError, match="distinct"):
        convergence_tables(spec, ["x", "x"])


def test_convergence_table_rerun_bytes_identical(tmp_path):
    spec = spec_51(m_list=(50, 200), eps_list=(1 / 16,), t_final=0.0,
                   reference="none", repeats=100)
    first, second = tmp_path / "a", tmp_path / "b"
    first.mkdir(), second.mkdir()
    convergence_table(spec, "x", out_dir=first)
    convergence_table(spec, "x", out_dir=second)
    assert ((first / "tables-x-table.csv").read_bytes()
            == (second / "tables-x-table.csv").read_bytes())


def test_epsilon_report_flat_rows_pass():
    spec = spec_51(m_list=(100, 400), eps_list=(1 / 16, 1 / 32, 1 / 64),
                   t_final=0.0, reference="none", repeats=400)
    table = convergence_table(spec, "x")
    report = epsilon_independence_report(table)
    assert report.flagged == ()
    assert report.predicted_ratio == pytest.approx(
        np.sqrt((15 / 16) / (63 / 64)))
    assert np.all(np.abs(report.ratios - report.predicted_ratio) < 0.15)


def test_epsilon_report_flags_constructed_violation():
    eps = (1 / 16, 1 / 32, 1 / 64)
    rmse = np.array([[1.0 / e for e in eps], [0.5 / e for e in eps]])
    table = ErrorTable(observable="x", sample_sizes=(100, 400), epsilons=eps,
                       rmse=rmse, stderr=0.01 * rmse,
                       slopes=np.array([-0.5] * 3))
    report = epsilon_independence_report(table)
    assert report.flagged == (100, 400)


def stability_surrogate_spec():
    """Free streaming with no dissipation: a shear flow that wraps a small
    periodic box quickly while leaving a large one untouched."""
    return ExperimentSpec(
        name="drift",
        potential=HarmonicPotential(a2=[[0.0]]),
        dissipation=DissipationParams(dim=1, epsilon=0.25, alpha=[0.0],
                                      beta=[0.0], gamma=[0.0], mu=[0.0]),
        init=GaussianState(dim=1, mean=[0.0, 0.4],
                           cov=np.diag([0.25, 0.09])),
        observables=(("x", observable_from_name("x")),),
        sample_sizes=(128,), epsilons=(0.25,), t_final=2.0,
        integrator=IntegratorConfig(dt=0.01), n_repeat=2,
        reference="none", seed=11)


def test_stability_study_detects_wraparound(tmp_path):
    settings = StabilitySettings(small_domain=((-2.0, 2.0), (-2.0, 2.0)),
                                 large_domain=((-8.0, 8.0), (-8.0, 8.0)),
                                 points=64, dt=0.05, edge_cells=3,
                                 residue_threshold=1e-6)
    report = stability_study(stability_surrogate_spec(), settings,
                             out_dir=tmp_path)
    assert report.small_metric > 1e-3
    assert report.large_metric < 1e-4
    assert abs(report.mass_min - 1.0) < 1e-9
    assert abs(report.mass_max - 1.0) < 1e-9
    names = dict(report.observables)
    assert abs(names["x"] - 0.8) < 0.25
    for artifact in report.artifacts:
        assert (tmp_path / artifact).exists()
    assert (tmp_path / "drift-stability.csv").exists()


def test_stability_study_rerun_bytes_identical(tmp_path):
    settings = StabilitySettings(small_domain=((-2.0, 2.0), (-2.0, 2.0)),
                                 large_domain=((-8.0, 8.0), (-8.0, 8.0)),
                                 points=32, dt=0.1)
    first, second = tmp_path / "a", tmp_path / "b"
    first.mkdir(), second.mkdir()
    stability_study(stability_surrogate_spec(), settings, out_dir=first)
    stability_study(stability_surrogate_spec(), settings, out_dir=second)
    for name in ("drift-stability.csv", "drift-small-grid.wfg",
                 "drift-packets-grid.wfg"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def damped_relaxation_spec():
    return ExperimentSpec(
        name="relax",
        potential=HarmonicPotential(a2=[[1.0]], a1=[1.0]),
        dissipation=DissipationParams(dim=1, epsilon=0.25, alpha=[0.4],
                                      beta=[0.1], gamma=[0.05 - 0.5j],
                                      mu=[0.0]),
        init=GaussianState(dim=1, mean=[1.0, 0.0], cov=np.diag([1.0, 1.0])),
        observables=(("x", observable_from_name("x")),),
        sample_sizes=(256,), epsilons=(0.25,), t_final=16.0,
        integrator=IntegratorConfig(dt=0.01), n_repeat=2,
        reference="none", seed=4)


def test_steady_state_detects_relaxation(tmp_path):
    settings = SteadyStateSettings(checkpoints=(4.0, 8.0, 12.0, 16.0),
                                   threshold=0.05,
                                   grid=((-4.0, 4.0, 96), (-4.0, 4.0, 96)))
    report = steady_state_study(damped_relaxation_spec(), settings,
                                out_dir=tmp_path)
    assert len(report.diffs) == 3
    assert all(d >= 0 for d in report.diffs)
    assert report.converged
    assert report.diffs[-1] < 0.05
    assert report.diffs[-1] <= report.diffs[0]
    assert (tmp_path / "relax-steady-state.csv").exists()
    assert (tmp_path / "relax-t8.wfg").exists()


def test_steady_state_rejects_perpetual_rotation():
    # a closed harmonic system never relaxes: the profile keeps circling
    spec = ExperimentSpec(
        name="spin",
        potential=HarmonicPotential(a2=[[1.0]]),
        dissipation=DissipationParams(dim=1, epsilon=0.25, alpha=[0.0],
                                      beta=[0.0], gamma=[0.0], mu=[0.0]),
        init=GaussianState(dim=1, mean=[1.5, 0.0], cov=np.diag([0.5, 0.5])),
        observables=(("x", observable_from_name("x")),),
        sample_sizes=(256,), epsilons=(0.25,), t_final=7.0,
        integrator=IntegratorConfig(dt=0.01), n_repeat=2,
        reference="none", seed=4)
    settings = SteadyStateSettings(
        checkpoints=(np.pi / 2, np.pi, 3 * np.pi / 2, 2 * np.pi),
        grid=((-4.0, 4.0, 64), (-4.0, 4.0, 64)))
    report = steady_state_study(spec, settings)
    assert not report.converged
    assert report.diffs[-1] > 0.05


def test_steady_state_settings_validation():
    with pytest.raises(ValidationError, match="checkpoints"):
        SteadyStateSettings(checkpoints=(5.0, 4.0, 3.0))
    with pytest.raises(ValidationError, match="checkpoints"):
        SteadyStateSettings(checkpoints=(5.0, 10.0))
