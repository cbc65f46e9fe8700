import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linktrace.designs import DesignConfig, run_design
from linktrace.netgraph import PopulationGraph, SyntheticPopulationConfig
from linktrace.resampler import ResampleConfig
from linktrace.simharness import (
    ExperimentConfig,
    OutcomeSpaceTooLarge,
    PopulationSpec,
    Record,
    augment_complements,
    build_report,
    complement_points,
    coverage_table,
    enumerate_exact_inclusion,
    export_annotated,
    fit_parabola,
    read_estimates_log,
    relative_bias,
    relative_efficiency,
    report_from_log,
    run_experiment,
    summarize,
    write_estimates_log,
    write_report,
)
from linktrace.simharness.oracle import outcome_space

from conftest import path_graph


def test_summarize_examples():
    s = summarize([3.0, 3.0, 3.0], 3.0)
    assert (s.bias, s.sd, s.mse) == (0.0, 0.0, 0.0)
    s = summarize([0.4, 0.6], 0.5)
    assert s.bias == pytest.approx(0.0, abs=1e-15)
    assert s.sd == pytest.approx(0.1, rel=1e-12)
    assert s.mse == pytest.approx(0.01, rel=1e-12)
    with pytest.raises(ValueError):
        summarize([], 1.0)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50), st.floats(-1e3, 1e3))
@settings(max_examples=200, deadline=None)
def test_mse_decomposition(xs, actual):
    s = summarize(xs, actual)
    assert s.mse == pytest.approx(s.sd**2 + s.bias**2, rel=1e-9, abs=1e-9)


def test_relative_efficiency_values():
    assert relative_efficiency(2.5, 2.5) == 1.0
    assert round(relative_efficiency(6.034435, 0.209982), 2) == 28.74
    assert relative_efficiency(0.034946, 0.000486) == 0.034946 / 0.000486
    # the published 71.86 comes from unrounded mse values; it lies inside the
    # range allowed by rounding both inputs to six decimals
    lo = relative_efficiency(0.0349455, 0.0004865)
    hi = relative_efficiency(0.0349465, 0.0004855)
    assert lo <= 71.86 <= hi
    assert relative_efficiency(1.0, 0.0) == math.inf


def test_published_degree_row_is_consistent():
    # current-estimator degree row: bias -2.447003, sd 0.215896, mse 6.034435
    bias, sd, mse = -2.447003, 0.215896, 6.034435
    assert bias**2 == pytest.approx(5.99, abs=0.005)
    assert sd**2 + bias**2 == pytest.approx(mse, abs=1e-5)


def test_relative_bias():
    assert relative_bias(-0.2, 0.1) == pytest.approx(2.0)
    assert relative_bias(0.3, 0.0) == math.inf


def test_coverage_all_and_none():
    c = coverage_table([0, 0, 0], [1, 1, 1], 0.5)
    assert c.coverage == 1.0 and c.halfwidth == 0.5 and c.n == 3
    assert coverage_table([0.6, 0.7], [0.9, 0.8], 0.5).coverage == 0.0


def test_complements():
    names = [f"a{i}" for i in range(13)] + ["deg2plus"]
    rng = np.random.default_rng(0)
    variables = {n: rng.integers(0, 2, 50).astype(float) for n in names}
    out = augment_complements(variables)
    assert len(out) == 28
    assert np.array_equal(out["not_a0"], 1 - variables["a0"])
    back = augment_complements({"not_a0": out["not_a0"]})
    assert np.array_equal(back["a0"], variables["a0"])
    pts = complement_points([(0.24, 0.01)])
    assert pts[1] == (pytest.approx(0.76), 0.01)
    with pytest.raises(ValueError, match="binary"):
        augment_complements({"degree": np.array([1.0, 3.0])})


def test_parabola():
    assert fit_parabola([(0.5, 0.25)]) == 1.0
    pts = [(0.1, 0.02), (0.3, 0.05), (0.6, 0.04)]
    a = fit_parabola(pts)
    assert a == pytest.approx(sum(m for _, m in pts) / sum(p * (1 - p) for p, _ in pts), rel=1e-15)
    # complement points leave the height unchanged
    assert fit_parabola(complement_points(pts)) == pytest.approx(a, rel=1e-15)
    with pytest.raises(ValueError):
        fit_parabola([(0.0, 0.1), (1.0, 0.2)])


def test_oracle_examples():
    one = PopulationGraph.from_edges(1, [])
    assert enumerate_exact_inclusion(one, 1.0, 0.5).phi.tolist() == [1.0]
    edge = PopulationGraph.from_edges(2, [(0, 1)])
    assert enumerate_exact_inclusion(edge, 0.5, 1.0).phi == pytest.approx([0.75, 0.75], abs=1e-15)
    res = enumerate_exact_inclusion(path_graph(3), 0.5, 0.5)
    assert res.phi == pytest.approx([0.625, 0.71875, 0.625], abs=1e-15)
    assert res.distribution.sum() == pytest.approx(1.0, abs=1e-12)
    assert res.joint(0, 2) <= min(res.phi[0], res.phi[2])


def test_oracle_refuses_large_graphs():
    big = path_graph(20)
    with pytest.raises(OutcomeSpaceTooLarge) as info:
        enumerate_exact_inclusion(big, 0.5, 0.5)
    assert info.value.size == outcome_space(20, 1)
    assert "3.49e+09" in str(info.value)


def small_config(**kw):
    pop = PopulationSpec(
        synthetic=SyntheticPopulationConfig(nodes=400, mean_degree=6.0, component_fractions=(0.8, 0.2), seed=3),
        prevalences=(0.3, 0.1),
    )
    designs = (DesignConfig(coupons=3, n=80, seeds=16, name="RDS"), DesignConfig(coupons=15, n=80, seeds=16, name="SB"))
    base = dict(population=pop, designs=designs, resample=ResampleConfig(iterations=300, n_target=30, burn_in=50),
                replications=3, seed=42)
    base.update(kw)
    return ExperimentConfig(**base)


def test_small_experiment_is_deterministic(tmp_path):
    a = run_experiment(small_config(replications=1))
    b = run_experiment(small_config(replications=1))
    write_report(a, tmp_path / "a.csv")
    write_report(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.records == b.records


def test_report_contents_and_log_round_trip(tmp_path):
    rep = run_experiment(small_config())
    variables = {r.variable for r in rep.rows}
    assert {"degree", "deg2plus"} <= variables
    assert {r.estimator for r in rep.rows} == {"new", "current", "mean"}
    assert all(r.eff == 1.0 for r in rep.rows if r.estimator == "new")
    assert len(rep.records) == 2 * 3 * 3 * len(variables)
    # binaries: two attributes plus deg2plus, each with a complement
    assert {p.points for p in rep.parabola} == {6}
    paths = [tmp_path / n for n in ("r.csv", "c.csv", "p.csv", "r.json")]
    write_report(rep, *paths)
    write_estimates_log(rep.records, tmp_path / "log.csv")
    assert read_estimates_log(tmp_path / "log.csv") == rep.records
    again = report_from_log(tmp_path / "log.csv", binary=rep.meta["binary"])
    write_report(again, *(p.with_name("2" + p.name) for p in paths))
    for p in paths:
        assert p.read_bytes() == p.with_name("2" + p.name).read_bytes()


def test_workers_give_identical_records():
    a = run_experiment(small_config(replications=2))
    b = run_experiment(small_config(replications=2, workers=2))
    assert a.records == b.records


def test_config_validation():
    with pytest.raises(ValueError, match="replications"):
        small_config(replications=0).validate()
    with pytest.raises(ValueError, match="JOINT_FULL"):
        small_config(variant="JOINT_FULL").validate()
    with pytest.raises(ValueError, match="estimator"):
        small_config(estimators=("new", "best")).validate()


def test_report_infinite_markers(tmp_path):
    recs = [Record("D", r, "x", e, 0.5, 0.5, 0.0, 0.5, 0.5) for r in range(2) for e in ("new", "mean")]
    rep = build_report(recs)
    row = rep.row("D", "mean", "x")
    assert row.eff == math.inf and row.rbias == math.inf
    write_report(rep, tmp_path / "r.csv")
    assert ",inf,inf" in (tmp_path / "r.csv").read_text()


def test_export_annotated(tmp_path):
    g = path_graph(30)
    net = run_design(g, None, DesignConfig(n=12, seeds=3), np.random.default_rng(2))
    f = np.linspace(0.1, 0.9, len(net))
    export_annotated(net, f, tmp_path / "a.csv", edges_path=tmp_path / "e.csv")
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert rows[0] == "id,f,degree,component" and len(rows) == 13
    assert rows[1].split(",")[1] == repr(0.1)
    assert rows[1].split(",")[3] == "0"
    edges = (tmp_path / "e.csv").read_text().splitlines()
    assert edges[0] == "u,v" and len(edges) - 1 == len(net.edges("ties"))
    with pytest.raises(ValueError):
        export_annotated(net, f[:-1], tmp_path / "b.csv")
