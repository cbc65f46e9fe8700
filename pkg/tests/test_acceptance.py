"""Acceptance criteria, one test each, with a pass/fail line per criterion.

Set LINKTRACE_P90_DIR to a directory holding ``edges.csv`` and
``attributes.csv`` to run the optional full-protocol check on the
restricted study network.
"""

import math
import os
import time
from collections import deque
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from linktrace.cli import main
from linktrace.designs import RDS, SNOWBALL, SampleNetwork
from linktrace.estimators import estimate_mean_f
from linktrace.resampler import ResampleConfig, process_resamples, repeated_resamples
from linktrace.simharness import (
    ExperimentConfig,
    PopulationSpec,
    Record,
    build_report,
    run_experiment,
)
from linktrace.simharness.experiment import REFERENCE_PREVALENCES
from linktrace.simharness.oracle import enumerate_exact_inclusion

P90 = os.environ.get("LINKTRACE_P90_DIR")


def report(number, ok, detail, seconds):
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} ({seconds:.1f} s) {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def desk_report(desk_population):
    config = ExperimentConfig(
        population=PopulationSpec(),
        designs=(RDS, SNOWBALL),
        resample=ResampleConfig(iterations=10_000),
        replications=200,
        seed=2024,
    )
    t0 = time.perf_counter()
    rep = run_experiment(config, population=desk_population)
    return rep, time.perf_counter() - t0


def test_criterion_1_scale_invariance():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        y = rng.uniform(0.1, 100.0, 1000)
        f = rng.uniform(1e-3, 1.0, 1000)
        c = 10.0 * (1.0 - rng.random())  # in (0, 10]
        a, b = estimate_mean_f(y, f), estimate_mean_f(y, c * f)
        worst = max(worst, abs(a - b) / abs(a))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 1.0
    assert report(1, ok, f"max relative difference {worst:.2e}", dt)


def test_criterion_2_complement_identity():
    rng = np.random.default_rng(102)
    t0 = time.perf_counter()
    exact = 0
    for _ in range(100):
        n = int(rng.integers(2, 1000))
        y = rng.integers(0, 2, n).astype(float)
        f = rng.uniform(1e-3, 1.0, n)
        exact += estimate_mean_f(y, f) + estimate_mean_f(1.0 - y, f) == 1.0
    dt = time.perf_counter() - t0
    ok = exact == 100 and dt < 1.0
    assert report(2, ok, f"{exact}/100 instances sum to exactly 1", dt)


def random_sample_network(rng, n, p):
    """A connected-or-not random graph laid out as a recruitment forest plus ties."""
    adj = [set() for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                adj[i].add(j)
                adj[j].add(i)
    order, parent, seen = [], {}, set()
    for root in range(n):
        if root in seen:
            continue
        seen.add(root)
        parent[root] = -1
        queue = deque([root])
        while queue:
            u = queue.popleft()
            order.append(u)
            for v in sorted(adj[u]):
                if v not in seen:
                    seen.add(v)
                    parent[v] = u
                    queue.append(v)
    pos = {u: k for k, u in enumerate(order)}
    rec = np.array([pos[parent[u]] if parent[u] >= 0 else -1 for u in order], dtype=np.int64)
    tree = {(min(k, r), max(k, r)) for k, r in enumerate(rec.tolist()) if r >= 0}
    ties = sorted({(min(pos[u], pos[v]), max(pos[u], pos[v])) for u in range(n) for v in adj[u]} - tree)
    return SampleNetwork(
        node=np.arange(n, dtype=np.int64),
        recruiter=rec,
        seed_flag=(rec < 0).astype(np.int64),
        day=np.zeros(n, dtype=np.int64),
        degree=np.array([len(adj[u]) for u in order], dtype=np.int64),
        ties=np.array(ties, dtype=np.int64).reshape(-1, 2),
    )


def test_criterion_3_oracle_equivalence():
    rng = np.random.default_rng(103)
    T = 1_000_000
    t0 = time.perf_counter()
    within = total = 0
    worst = 0.0
    for g in range(20):
        n = int(rng.integers(3, 11))
        net = random_sample_network(rng, n, float(rng.uniform(0.15, 0.6)))
        p_seed, p_trace = float(rng.uniform(0.1, 0.6)), float(rng.uniform(0.1, 0.9))
        phi = enumerate_exact_inclusion(net, p_seed, p_trace, waves=1).phi
        cfg = ResampleConfig(mode="repeated", iterations=T, n_target=None, p_seed=p_seed, p_trace=p_trace,
                             p_reseed=0.0, waves=1)
        f = repeated_resamples(net, cfg, 5000 + g).f
        se = np.sqrt(phi * (1 - phi) / T)
        z = np.abs(f - phi) / se
        within += int(np.sum(z <= 3))
        total += n
        worst = max(worst, float(z.max()))
    dt = time.perf_counter() - t0
    share = within / total
    ok = share >= 0.95 and dt < 120
    assert report(3, ok, f"{within}/{total} nodes within 3 SE ({share:.3f}); max |z| {worst:.2f}", dt)


def test_criterion_4_stationarity_and_mixing(rds_sample):
    cfg = ResampleConfig(iterations=100_000, burn_in=1000, n_target=400)
    t0 = time.perf_counter()
    a = process_resamples(rds_sample, cfg, 41)
    b = process_resamples(rds_sample, cfg, 42)
    dt = time.perf_counter() - t0
    gap = float(np.max(np.abs(a.f - b.f)))
    sizes = (a.mean_size, b.mean_size)
    ok = gap <= 0.02 and all(abs(s - 400) <= 40 for s in sizes) and dt < 60
    assert report(4, ok, f"max |f_a - f_b| {gap:.4f}; mean sizes {sizes[0]:.1f}, {sizes[1]:.1f}", dt)


def test_criterion_5_directional_bias_and_efficiency(desk_report):
    rep, dt = desk_report
    parts, ok = [], dt < 900
    for design in ("RDS", "SB"):
        for var in ("degree", "deg2plus"):
            new, cur = rep.row(design, "new", var), rep.row(design, "current", var)
            ok &= abs(new.bias) < abs(cur.bias)
            parts.append(f"{design} {var} |bias| new {abs(new.bias):.4f} < current {abs(cur.bias):.4f}")
        eff = rep.row(design, "current", "degree").eff
        ok &= eff >= 5
        parts.append(f"{design} degree eff {eff:.2f}")
    assert report(5, ok, "; ".join(parts), dt)


def test_criterion_6_coverage(desk_report):
    rep, dt = desk_report
    names = [f"attr{k + 1:02d}" for k in range(len(REFERENCE_PREVALENCES))]
    parts, ok = [], True
    for design in ("RDS", "SB"):
        cov = [rep.coverage_of(design, name, "new").coverage for name in names]
        good = sum(0.88 <= c <= 0.99 for c in cov)
        ok &= good >= 10
        parts.append(f"{design} {good}/13 in [0.88, 0.99], median {np.median(cov):.3f}")
    assert report(6, ok, "; ".join(parts), 0.0)


def random_report():
    rng = np.random.default_rng(107)
    recs = []
    for rep in range(50):
        for k, p in enumerate((0.1, 0.3, 0.55)):
            for est, spread in (("new", 0.02), ("current", 0.05), ("mean", 0.04)):
                point = p + rng.normal(0.01, spread)
                recs.append(Record("D", rep, f"b{k}", est, p, point, 1e-3, point - 0.05, point + 0.05))
        recs.append(Record("D", rep, "degree", "new", 7.9, 7.9 + rng.normal(), 0.1, 7.0, 9.0))
        recs.append(Record("D", rep, "degree", "current", 7.9, 5.4 + rng.normal(), 0.1, 5.0, 6.0))
        recs.append(Record("D", rep, "degree", "mean", 7.9, 14.0 + rng.normal(), 0.1, 13.0, 15.0))
    return build_report(recs, binary=("b0", "b1", "b2"))


def parabola_check(rep, binary):
    worst = 0.0
    designs = {r.design for r in rep.rows}
    for d in designs:
        for est in ("current", "mean"):
            ratio = rep.height(d, est) / rep.height(d, "new")
            mse = [rep.row(d, est, v).mse for v in binary]
            ref = [rep.row(d, "new", v).mse for v in binary]
            worst = max(worst, abs(ratio / (math.fsum(mse) / math.fsum(ref)) - 1))
    return worst


def test_criterion_7_parabola_identity(desk_report):
    t0 = time.perf_counter()
    rnd = random_report()
    worst = parabola_check(rnd, ("b0", "b1", "b2"))
    desk, _ = desk_report
    worst = max(worst, parabola_check(desk, desk.meta["binary"]))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 1.0
    assert report(7, ok, f"max relative deviation {worst:.2e}", dt)


def test_criterion_8_table_arithmetic(desk_report):
    t0 = time.perf_counter()
    worst, ref_ok = 0.0, True
    for rep in (random_report(), desk_report[0]):
        for r in rep.rows:
            target = r.sd**2 + r.bias**2
            if r.mse != target:
                worst = max(worst, abs(r.mse - target) / abs(r.mse))
            if r.estimator == rep.meta["reference"]:
                ref_ok &= r.eff == 1.0
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and ref_ok and dt < 1.0
    assert report(8, ok, f"max relative |mse - sd^2 - bias^2| {worst:.2e}; reference eff all 1: {ref_ok}", dt)


@pytest.mark.skipif(P90 is None, reason="set LINKTRACE_P90_DIR to run the full protocol on the study network")
def test_criterion_9_full_protocol():
    d = Path(P90)
    config = ExperimentConfig(
        population=PopulationSpec(edges=str(d / "edges.csv"), attributes=str(d / "attributes.csv")),
        designs=(RDS,),
        resample=ResampleConfig(iterations=10_000),
        replications=1000,
        seed=90,
        workers=os.cpu_count() or 1,
    )
    t0 = time.perf_counter()
    rep = run_experiment(config)
    dt = time.perf_counter() - t0
    new, cur = rep.row("RDS", "new", "degree"), rep.row("RDS", "current", "degree")
    eff_d, eff_c = cur.eff, rep.row("RDS", "current", "deg2plus").eff
    ok = (abs(new.e_est - 8.21) <= 0.10 and abs(cur.e_est - 5.44) <= 0.10
          and abs(eff_d / 28.74 - 1) <= 0.3 and abs(eff_c / 71.86 - 1) <= 0.3)
    detail = f"E.est new {new.e_est:.3f} current {cur.e_est:.3f}; eff degree {eff_d:.2f} deg2plus {eff_c:.2f}"
    assert report(9, ok, detail, dt)


def test_criterion_9_marker():
    if P90 is None:
        line = "CRITERION 9: SKIPPED (optional; needs LINKTRACE_P90_DIR with the study network)"
        ACCEPTANCE_LINES.append(line)
        print(line)


def test_criterion_10_determinism(tmp_path):
    text = """seed = 5
workers = {workers}

[population]
nodes = 1500
mean_degree = 7.9
component_fractions = [0.8, 0.15, 0.05]

[design]
n = 300
seeds = 60

[resampler]
iterations = 3000
n_target = 100
burn_in = 300

[experiment]
replications = 8
"""
    t0 = time.perf_counter()
    outputs = []
    for k, workers in enumerate((1, 2, 1)):
        cfg = tmp_path / f"c{k}.toml"
        cfg.write_text(text.format(workers=workers), encoding="utf-8")
        out = tmp_path / f"out{k}"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        outputs.append((out / "report.csv").read_bytes())
    dt = time.perf_counter() - t0
    same = outputs[0] == outputs[1] == outputs[2]
    ok = same and dt < 120
    assert report(10, ok, f"report.csv identical across workers 1, 2 and a rerun: {same}", dt)
