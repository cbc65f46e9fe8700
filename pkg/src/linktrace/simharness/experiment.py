"""Replicated design x estimator experiments and their reports.

Every replication draws a fresh sample with the real-world design, runs
the resampling process on it and computes each estimator for each
variable. Replication ``r`` of design ``d`` uses a generator seeded from
``SeedSequence(seed, spawn_key=(d, r))``, so results do not depend on how
replications are spread over workers. The per-replication estimates are
kept as records; the report is a pure function of those records, so it
can be rebuilt bit for bit from the estimates log.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from ..designs import RDS, SNOWBALL, SampleNetwork, run_design
from ..estimators import NegativeVarianceWarning, VarianceVariant, estimate
from ..netgraph import (
    AttributeTable,
    PopulationGraph,
    SyntheticPopulationConfig,
    generate_synthetic,
    load_attributes,
    load_edge_list,
    synthetic_attributes,
)
from ..resampler import ResampleConfig, resample
from .summary import (
    complement_points,
    coverage_table,
    fit_parabola,
    relative_bias,
    relative_efficiency,
    summarize,
)

log = logging.getLogger(__name__)

DERIVED = ("degree", "deg2plus")
ESTIMATORS = ("new", "current", "mean")

# population proportions of the 13 binary attributes in the reference study
REFERENCE_PREVALENCES = (0.24, 0.43, 0.05, 0.02, 0.09, 0.06, 0.01, 0.02, 0.03, 0.06, 0.04, 0.16, 0.01)


@dataclass(frozen=True)
class PopulationSpec:
    """Where the population comes from: files, or a synthetic generator.

    With ``edges`` set the graph is read from that edge list (and the
    optional ``attributes`` table); otherwise ``synthetic`` is generated and
    given binary attributes with the listed ``prevalences``.
    """

    synthetic: SyntheticPopulationConfig | None = None
    prevalences: tuple = REFERENCE_PREVALENCES
    degree_effects: tuple | None = None
    edges: str | None = None
    node_ids: str | None = None
    attributes: str | None = None
    binary: tuple | None = None


def default_synthetic(seed: int = 1) -> SyntheticPopulationConfig:
    return SyntheticPopulationConfig(nodes=5000, mean_degree=7.9, component_fractions=(0.8, 0.15, 0.05), seed=seed)


def build_population(spec: PopulationSpec) -> tuple[PopulationGraph, AttributeTable]:
    if spec.edges is not None:
        graph = load_edge_list(spec.edges, spec.node_ids)
        if spec.attributes is None:
            return graph, AttributeTable.from_columns({})
        return graph, load_attributes(spec.attributes, graph, spec.binary)
    cfg = spec.synthetic if spec.synthetic is not None else default_synthetic()
    graph = generate_synthetic(cfg)
    # attributes get their own stream so changing them leaves the graph alone
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    attrs = synthetic_attributes(graph, rng, spec.prevalences, spec.degree_effects)
    return graph, attrs


@dataclass(frozen=True)
class ExperimentConfig:
    population: PopulationSpec = field(default_factory=PopulationSpec)
    designs: tuple = (RDS, SNOWBALL)
    resample: ResampleConfig = field(default_factory=ResampleConfig)
    replications: int = 200
    variables: tuple | None = None
    estimators: tuple = ESTIMATORS
    variant: str = "V2"
    alpha: float = 0.05
    seed: int = 0
    workers: int = 1

    def validate(self, attrs: AttributeTable | None = None):
        errors = []
        if self.replications < 1:
            errors.append("replications must be >= 1")
        if not self.designs:
            errors.append("at least one design is needed")
        names = [d.name for d in self.designs]
        if len(set(names)) != len(names):
            errors.append(f"design names must be distinct, got {names}")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            errors.append(f"unknown estimator(s) {bad}; choose from {ESTIMATORS}")
        if not self.estimators:
            errors.append("at least one estimator is needed")
        try:
            v = VarianceVariant(self.variant)
        except ValueError:
            errors.append(f"unknown variance variant {self.variant!r}")
        else:
            if v is VarianceVariant.JOINT_FULL and self.resample.pairs != "all":
                errors.append("JOINT_FULL needs resample pairs = 'all'")
            if v is VarianceVariant.JOINT_EDGES and self.resample.pairs == "none":
                errors.append("JOINT_EDGES needs resample pairs = 'edges' or 'all'")
        if not 0.0 < self.alpha < 1.0:
            errors.append("alpha must be in (0, 1)")
        if self.workers < 1:
            errors.append("workers must be >= 1")
        if attrs is not None and self.variables is not None:
            unknown = [v for v in self.variables if v not in DERIVED and v not in attrs.names]
            if unknown:
                errors.append(f"unknown variable(s) {unknown}")
        if errors:
            raise ValueError("; ".join(errors))


def resolve_variables(config: ExperimentConfig, attrs: AttributeTable) -> tuple:
    if config.variables is not None:
        return tuple(config.variables)
    return ("degree", *attrs.names, "deg2plus")


def population_values(name: str, graph: PopulationGraph, attrs: AttributeTable) -> np.ndarray:
    if name == "degree":
        return graph.degree.astype(float)
    if name == "deg2plus":
        return (graph.degree >= 2).astype(float)
    return attrs.values[name]


def sample_values(name: str, net: SampleNetwork) -> np.ndarray:
    if name == "degree":
        return net.degree.astype(float)
    if name == "deg2plus":
        return (net.degree >= 2).astype(float)
    return np.asarray(net.attrs[name], dtype=float)


def is_binary(name: str, attrs: AttributeTable) -> bool:
    return name == "deg2plus" or name in attrs.binary


class Record(NamedTuple):
    design: str
    rep: int
    variable: str
    estimator: str
    actual: float
    point: float
    variance: float
    lower: float
    upper: float


LOG_FIELDS = Record._fields


def replication_rng(seed: int, design_index: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(design_index, rep)))


def run_replication(graph, attrs, config: ExperimentConfig, design_index: int, rep: int, actuals: dict) -> list[Record]:
    design = config.designs[design_index]
    rng = replication_rng(config.seed, design_index, rep)
    net = run_design(graph, attrs, design, rng)
    freqs = resample(net, config.resample, rng).require_positive()
    weights = {"new": freqs.f, "current": net.degree.astype(float), "mean": None}
    joint = None
    variant = VarianceVariant(config.variant)
    if variant in (VarianceVariant.JOINT_FULL, VarianceVariant.JOINT_EDGES, VarianceVariant.DIAGONAL):
        joint = {"pairs": freqs.pairs, "fij": freqs.fij}
        if variant is VarianceVariant.JOINT_EDGES:
            joint["edges"] = net.edges(config.resample.network)
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeVarianceWarning)
        for est in config.estimators:
            # the chosen variant applies to the new estimator; the others
            # get the simple variance with their own weights
            v, j = (variant, joint) if est == "new" else (VarianceVariant.V2, None)
            for name in actuals:
                y = sample_values(name, net)
                r = estimate(y, weights[est], variable=name, estimator=est, variant=v, alpha=config.alpha, joint=j)
                out.append(Record(design.name, rep, name, est, actuals[name], r.point, r.variance, r.lower, r.upper))
    return out


_WORKER = {}


def _init_worker(graph, attrs, config, actuals):
    _WORKER.update(graph=graph, attrs=attrs, config=config, actuals=actuals)


def _work(task):
    d, r = task
    w = _WORKER
    return run_replication(w["graph"], w["attrs"], w["config"], d, r, w["actuals"])


def run_experiment(config: ExperimentConfig, population=None) -> "SimulationReport":
    """Run every replication of every design and summarize.

    ``population`` may pass a prebuilt ``(graph, attrs)`` pair.
    """
    t0 = time.perf_counter()
    graph, attrs = build_population(config.population) if population is None else population
    config.validate(attrs)
    names = resolve_variables(config, attrs)
    actuals = {v: float(np.mean(population_values(v, graph, attrs))) for v in names}
    tasks = [(d, r) for d in range(len(config.designs)) for r in range(config.replications)]
    if config.workers == 1:
        _init_worker(graph, attrs, config, actuals)
        chunks = [_work(t) for t in tasks]
    else:
        with ProcessPoolExecutor(config.workers, initializer=_init_worker, initargs=(graph, attrs, config, actuals)) as ex:
            chunks = list(ex.map(_work, tasks, chunksize=max(1, len(tasks) // (4 * config.workers))))
    records = [rec for chunk in chunks for rec in chunk]
    binary = tuple(v for v in names if is_binary(v, attrs))
    report = build_report(records, binary=binary)
    report.meta.update(runtime_seconds=time.perf_counter() - t0, seed=config.seed, replications=config.replications)
    log.info("%d replications in %.1f s", len(tasks), report.meta["runtime_seconds"])
    return report


@dataclass
class ReportRow:
    design: str
    estimator: str
    variable: str
    actual: float
    e_est: float
    bias: float
    sd: float
    mse: float
    eff: float
    rbias: float


@dataclass
class CoverageEntry:
    design: str
    estimator: str
    name: str
    actual: float
    halfwidth: float
    coverage: float


@dataclass
class ParabolaEntry:
    design: str
    estimator: str
    a: float
    points: int


@dataclass
class SimulationReport:
    rows: list
    coverage: list
    parabola: list
    records: list
    meta: dict = field(default_factory=dict)

    def row(self, design, estimator, variable) -> ReportRow:
        for r in self.rows:
            if (r.design, r.estimator, r.variable) == (design, estimator, variable):
                return r
        raise KeyError((design, estimator, variable))

    def coverage_of(self, design, name, estimator="new") -> CoverageEntry:
        for c in self.coverage:
            if (c.design, c.estimator, c.name) == (design, estimator, name):
                return c
        raise KeyError((design, estimator, name))

    def height(self, design, estimator) -> float:
        for p in self.parabola:
            if (p.design, p.estimator) == (design, estimator):
                return p.a
        raise KeyError((design, estimator))


def _ordered(values):
    return list(dict.fromkeys(values))


def build_report(records, binary=(), reference: str = "new") -> SimulationReport:
    """Summaries of per-replication records.

    ``eff`` and ``rbias`` compare each estimator with ``reference`` (or
    the first estimator present if the reference is absent).
    """
    records = sorted(records, key=lambda r: r.rep)
    designs = _ordered(r.design for r in records)
    estimators = _ordered(r.estimator for r in records)
    variables = _ordered(r.variable for r in records)
    ref = reference if reference in estimators else estimators[0]
    groups: dict = {}
    for r in records:
        groups.setdefault((r.design, r.estimator, r.variable), []).append(r)

    rows, cov, para = [], [], []
    for d in designs:
        stats = {}
        for e in estimators:
            for v in variables:
                g = groups.get((d, e, v))
                if g:
                    stats[e, v] = summarize([x.point for x in g], g[0].actual)
        for e in estimators:
            for v in variables:
                if (e, v) not in stats:
                    continue
                s, base = stats[e, v], stats.get((ref, v))
                eff = relative_efficiency(s.mse, base.mse) if base else math.nan
                rb = relative_bias(s.bias, base.bias) if base else math.nan
                rows.append(ReportRow(d, e, v, s.actual, s.e_est, s.bias, s.sd, s.mse, eff, rb))
        for e in estimators:
            for v in variables:
                g = groups.get((d, e, v))
                if g:
                    c = coverage_table([x.lower for x in g], [x.upper for x in g], g[0].actual)
                    cov.append(CoverageEntry(d, e, v, c.actual, c.halfwidth, c.coverage))
            pts = [(stats[e, v].actual, stats[e, v].mse) for v in variables if v in binary and (e, v) in stats]
            if pts and any(0 < p < 1 for p, _ in pts):
                pts = complement_points(pts)
                para.append(ParabolaEntry(d, e, fit_parabola(pts), len(pts)))
    return SimulationReport(rows, cov, para, records, meta={"binary": list(binary), "reference": ref})


def _num(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


REPORT_FIELDS = ("design", "estimator", "variable", "actual", "E.est", "bias", "sd", "mse", "eff", "rbias")
COVERAGE_FIELDS = ("design", "estimator", "name", "actual", "halfwidth", "coverage")
PARABOLA_FIELDS = ("design", "estimator", "a", "points")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_report(report: SimulationReport, report_path, coverage_path=None, parabola_path=None, json_path=None) -> None:
    _write_csv(report_path, REPORT_FIELDS, [
        [r.design, r.estimator, r.variable, *(_num(x) for x in (r.actual, r.e_est, r.bias, r.sd, r.mse, r.eff, r.rbias))]
        for r in report.rows
    ])
    if coverage_path is not None:
        _write_csv(coverage_path, COVERAGE_FIELDS, [
            [c.design, c.estimator, c.name, _num(c.actual), _num(c.halfwidth), _num(c.coverage)] for c in report.coverage
        ])
    if parabola_path is not None:
        _write_csv(parabola_path, PARABOLA_FIELDS, [[p.design, p.estimator, _num(p.a), p.points] for p in report.parabola])
    if json_path is not None:
        def clean(d):
            return {k: (_num(v) if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}

        doc = {
            "rows": [clean(asdict(r)) for r in report.rows],
            "coverage": [clean(asdict(c)) for c in report.coverage],
            "parabola": [clean(asdict(p)) for p in report.parabola],
            "binary": report.meta.get("binary", []),
            "reference": report.meta.get("reference"),
        }
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


def write_estimates_log(records, path) -> None:
    _write_csv(path, LOG_FIELDS, [
        [r.design, r.rep, r.variable, r.estimator, *(_num(x) for x in r[4:])] for r in records
    ])


def read_estimates_log(path) -> list[Record]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != LOG_FIELDS:
            raise ValueError(f"{path}: unexpected header {header}")
        return [Record(r[0], int(r[1]), r[2], r[3], *(float(x) for x in r[4:])) for r in reader if r]


def report_from_log(path, binary=(), reference: str = "new") -> SimulationReport:
    """Rebuild a report from a persisted estimates log."""
    return build_report(read_estimates_log(path), binary=binary, reference=reference)
