"""Command-line front end.

    linktrace <command> [--config run.toml] [flags]

Commands: ingest, generate, sample, resample, estimate, simulate, oracle,
export. Flags override config keys. Outputs go to ``--out`` under fixed
names; files are staged in a temporary directory and moved into place
only when the command succeeds. Failures print one JSON line on stderr
and exit nonzero (2 for configuration errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, describe_schema, parse_config, tomllib
from .designs import SampleNetwork, read_sample, run_design, write_sample
from .estimators import VarianceVariant, estimate, write_results
from .netgraph import components, write_attributes, write_edge_list
from .resampler import ZeroFrequencyError, read_frequencies, resample, write_frequencies
from .simharness.experiment import (
    build_population,
    report_from_log,
    run_experiment,
    sample_values,
    write_estimates_log,
    write_report,
)
from .simharness.export import export_annotated
from .simharness.oracle import enumerate_exact_inclusion

log = logging.getLogger("linktrace")

SAMPLE_FILES = ("sample_nodes.csv", "sample_edges.csv", "sample_ties.csv")

# the enumerable design: Bernoulli seeds, one wave of tracing, no size cap
ONE_WAVE = {
    "resampler.mode": "repeated",
    "resampler.waves": 1,
    "resampler.n_target": "none",
    "resampler.p_seed": 0.5,
    "resampler.p_trace": 0.5,
    "resampler.p_reseed": 0.0,
}


class Staged:
    """Collect output files in a temporary directory, then move them in."""

    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out))
        self.names = []

    def path(self, name) -> Path:
        self.names.append(name)
        return self.tmp / name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                for name in self.names:
                    if (self.tmp / name).exists():
                        os.replace(self.tmp / name, self.out / name)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def _versions() -> dict:
    import numba
    import scipy

    return {
        "linktrace": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def write_manifest(path, command, cfg, extra=None) -> None:
    lines = [
        "linktrace run manifest",
        f"command: {command}",
        f"seed: {cfg.seed}",
        "versions: " + ", ".join(f"{k} {v}" for k, v in _versions().items()),
    ]
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {v}")
    lines.append("config:")
    lines.append(json.dumps(cfg.resolved, indent=1, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _overrides(args) -> dict:
    ov = {}
    if getattr(args, "design_preset", None) == "one-wave":
        ov.update(ONE_WAVE)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError([f"--set expects KEY=VALUE, got {item!r}"])
        k, v = item.split("=", 1)
        ov[k.strip()] = _parse_value(v.strip())
    for dest, key in FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is not None:
            ov[key] = v
    return ov


FLAG_KEYS = {
    "seed": "seed",
    "out": "out",
    "workers": "workers",
    "edges": "population.edges",
    "node_ids": "population.node_ids",
    "attributes": "population.attributes",
    "coupons": "design.coupons",
    "sample_size": "design.n",
    "seeds": "design.seeds",
    "design_name": "design.name",
    "mode": "resampler.mode",
    "iterations": "resampler.iterations",
    "n_target": "resampler.n_target",
    "p_seed": "resampler.p_seed",
    "p_trace": "resampler.p_trace",
    "p_reseed": "resampler.p_reseed",
    "burn_in": "resampler.burn_in",
    "waves": "resampler.waves",
    "chains": "resampler.chains",
    "pairs": "resampler.pairs",
    "network": "resampler.network",
    "variant": "estimators.variant",
    "alpha": "estimators.alpha",
    "replications": "experiment.replications",
}


def _config(args, required):
    ov = _overrides(args)
    if args.config is None:
        # without a file, flags alone define the run; the seed defaults to 0
        ov.setdefault("seed", 0)
        required = ()
    return parse_config(args.config, ov, required)


def _load_sample(directory) -> SampleNetwork:
    d = Path(directory)
    nodes, edges, ties = (d / n for n in SAMPLE_FILES)
    for p in (nodes, edges):
        if not p.exists():
            raise FileNotFoundError(f"sample file not found: {p}")
    return read_sample(nodes, edges, ties if ties.exists() else None)


def _need_population(cfg):
    if cfg.population is None:
        raise ConfigError(["population: give edges (a data file) or nodes (a synthetic population)"])
    return build_population(cfg.population)


def cmd_ingest(args):
    cfg = _config(args, ())
    if cfg.population is None or cfg.population.edges is None:
        raise ConfigError(["population.edges: an edge list is required for ingest"])
    graph, attrs = build_population(cfg.population)
    with Staged(cfg.out) as st:
        _write_population(st, graph, attrs)
        write_manifest(st.path("manifest.txt"), "ingest", cfg, {"duplicates_dropped": graph.duplicates_dropped})
    comps = components(graph)
    print(f"nodes {graph.n} edges {graph.n_edges} duplicates_dropped {graph.duplicates_dropped} "
          f"components {len(comps)} largest {comps[0][1] if comps else 0}")


def _write_population(st, graph, attrs):
    write_edge_list(graph, st.path("population_edges.csv"))
    if len(attrs):
        write_attributes(graph, attrs, st.path("population_attributes.csv"))
    with open(st.path("components.csv"), "w", encoding="utf-8") as fh:
        fh.write("component,size\n")
        for c, s in components(graph):
            fh.write(f"{c},{s}\n")


def cmd_generate(args):
    cfg = _config(args, ("seed", "population"))
    if cfg.population is None or cfg.population.synthetic is None:
        raise ConfigError(["population: generate needs a synthetic population (nodes and mean_degree or degrees)"])
    graph, attrs = build_population(cfg.population)
    with Staged(cfg.out) as st:
        _write_population(st, graph, attrs)
        write_manifest(st.path("manifest.txt"), "generate", cfg)
    print(f"nodes {graph.n} edges {graph.n_edges} mean_degree {2 * graph.n_edges / graph.n:.4f}")


def cmd_sample(args):
    cfg = _config(args, ("seed", "population"))
    graph, attrs = _need_population(cfg)
    net = run_design(graph, attrs, cfg.design, np.random.default_rng(cfg.seed))
    with Staged(cfg.out) as st:
        write_sample(net, *(st.path(n) for n in SAMPLE_FILES))
        write_manifest(st.path("manifest.txt"), "sample", cfg, {"sample_size": len(net), "reseeds": net.n_reseeds})
    print(f"sampled {len(net)} nodes, {len(net) - net.n_components()} recruitment links, "
          f"{0 if net.ties is None else len(net.ties)} other known ties, {net.n_reseeds} re-seeds")


def _compare(path, f, ids, iterations) -> bool:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    phi_of = {int(i): p for i, p in rows}
    phi = np.asarray([phi_of[int(i)] for i in ids])
    se = np.sqrt(phi * (1 - phi) / iterations)
    ok = np.where(se > 0, np.abs(f - phi) <= 3 * se, f == phi)
    z = np.divide(np.abs(f - phi), se, out=np.zeros_like(se), where=se > 0)
    share = float(np.mean(ok))
    print(f"compare: {int(ok.sum())}/{len(ok)} nodes within 3 standard errors of the exact probabilities "
          f"(max |z| {z.max():.2f}, max |f - phi| {np.abs(f - phi).max():.3g})")
    return share >= 0.95


def cmd_resample(args):
    cfg = _config(args, ("seed",))
    net = _load_sample(args.sample)
    freqs = resample(net, cfg.resample, np.random.default_rng(cfg.seed))
    freqs.require_positive()
    with Staged(cfg.out) as st:
        pairs = st.path("pairs.csv") if cfg.resample.pairs != "none" else None
        write_frequencies(freqs, st.path("frequencies.csv"), ids=net.node, pairs_path=pairs)
        write_manifest(st.path("manifest.txt"), "resample", cfg, {"sample": args.sample, "mean_size": repr(freqs.mean_size)})
    f = freqs.f
    print(f"{len(f)} nodes: f min {f.min():.4g} mean {f.mean():.4g} max {f.max():.4g}; mean resample size {freqs.mean_size:.1f}")
    if args.compare and not _compare(args.compare, f, net.node, cfg.resample.iterations):
        raise ComparisonFailed("fewer than 95% of nodes within 3 standard errors of the exact probabilities")


class ComparisonFailed(RuntimeError):
    pass


def _read_pairs(path, net):
    pos = {int(v): k for k, v in enumerate(net.node)}
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    pairs = np.asarray([(pos[int(a)], pos[int(b)]) for a, b, _ in rows], dtype=np.int64).reshape(-1, 2)
    return pairs, rows[:, 2] if len(rows) else np.zeros(0)


def cmd_estimate(args):
    cfg = _config(args, ())
    net = _load_sample(args.sample)
    fpath = Path(args.frequencies or Path(args.sample) / "frequencies.csv")
    f = read_frequencies(fpath, ids=net.node)
    variant = VarianceVariant(cfg.variant)
    joint = None
    if variant in (VarianceVariant.JOINT_FULL, VarianceVariant.JOINT_EDGES, VarianceVariant.DIAGONAL):
        ppath = fpath.with_name("pairs.csv")
        pairs, fij = _read_pairs(ppath, net) if ppath.exists() else (np.zeros((0, 2), dtype=np.int64), np.zeros(0))
        joint = {"pairs": pairs, "fij": fij}
        if variant is VarianceVariant.JOINT_EDGES:
            joint["edges"] = net.edges(cfg.resample.network)
    names = cfg.variables or ("degree", *net.attrs, "deg2plus")
    weights = {"new": f, "current": net.degree.astype(float), "mean": None}
    results = []
    for est in cfg.estimators:
        v, j = (variant, joint) if est == "new" else (VarianceVariant.V2, None)
        for name in names:
            results.append(estimate(sample_values(name, net), weights[est], variable=name, estimator=est,
                                    variant=v, alpha=cfg.alpha, joint=j))
    with Staged(cfg.out) as st:
        write_results(results, st.path("estimates.csv"))
        write_manifest(st.path("manifest.txt"), "estimate", cfg, {"sample": args.sample, "frequencies": str(fpath)})
    for r in results:
        print(f"{r.variable:>12} {r.estimator:>7} {r.point:.6g} [{r.lower:.6g}, {r.upper:.6g}]")


def cmd_simulate(args):
    cfg = _config(args, ("seed", "population"))
    if args.from_log:
        manifest = json.loads(Path(args.from_log).with_name("report.json").read_text(encoding="utf-8")) \
            if Path(args.from_log).with_name("report.json").exists() else {}
        report = report_from_log(args.from_log, binary=tuple(manifest.get("binary", ())))
    else:
        exp = cfg.experiment()
        if exp.population is None:
            raise ConfigError(["population: give edges (a data file) or nodes (a synthetic population)"])
        report = run_experiment(exp)
    with Staged(cfg.out) as st:
        write_report(report, st.path("report.csv"), st.path("coverage.csv"), st.path("parabola.csv"), st.path("report.json"))
        if not args.from_log:
            write_estimates_log(report.records, st.path("replications.csv"))
        write_manifest(st.path("manifest.txt"), "simulate", cfg)
    for p in report.parabola:
        print(f"{p.design} {p.estimator}: parabola height {p.a:.6g}")


def _oracle_network(kind, n, rng) -> SampleNetwork:
    if kind == "path":
        rec = np.arange(-1, n - 1)
    elif kind == "random-tree":
        rec = np.asarray([-1] + [int(rng.integers(k)) for k in range(1, n)])
    elif kind == "star":
        rec = np.asarray([-1] + [0] * (n - 1))
    else:
        raise ValueError(f"unknown graph {kind!r}; choose path, random-tree or star")
    return SampleNetwork(
        node=np.arange(n, dtype=np.int64),
        recruiter=rec.astype(np.int64),
        seed_flag=(rec < 0).astype(np.int64),
        day=np.zeros(n, dtype=np.int64),
        degree=np.bincount(np.concatenate([rec[rec >= 0], np.flatnonzero(rec >= 0)]), minlength=n).astype(np.int64),
        ties=np.zeros((0, 2), dtype=np.int64),
    )


def cmd_oracle(args):
    cfg = _config(args, ())
    rc = cfg.resample
    if args.sample:
        net = _load_sample(args.sample)
    else:
        if args.nodes is None or args.nodes < 1:
            raise ConfigError(["--nodes: a positive node count (or --sample DIR) is required"])
        net = _oracle_network(args.graph, args.nodes, np.random.default_rng(cfg.seed))
    waves = 1 if rc.waves is None else rc.waves
    res = enumerate_exact_inclusion(net, rc.p_seed, rc.p_trace, waves=waves, p_reseed=rc.p_reseed or 0.0)
    with Staged(cfg.out) as st:
        if not args.sample:
            write_sample(net, *(st.path(n) for n in SAMPLE_FILES))
        with open(st.path("oracle.csv"), "w", encoding="utf-8") as fh:
            fh.write("id,phi\n")
            for i, p in zip(net.node.tolist(), res.phi.tolist()):
                fh.write(f"{i},{p!r}\n")
        write_manifest(st.path("manifest.txt"), "oracle", cfg, {"outcomes": res.outcomes, "waves": waves})
    print("phi: " + " ".join(f"{p:.6g}" for p in res.phi))


def cmd_export(args):
    cfg = _config(args, ())
    net = _load_sample(args.sample)
    f = read_frequencies(Path(args.frequencies or Path(args.sample) / "frequencies.csv"), ids=net.node)
    with Staged(cfg.out) as st:
        export_annotated(net, f, st.path("annotated.csv"), cfg.resample.network, st.path("annotated_edges.csv"))
        write_manifest(st.path("manifest.txt"), "export", cfg, {"sample": args.sample})
    print(f"exported {len(net)} nodes")


def _common(p):
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key, e.g. resampler.iterations=500")
    p.add_argument("--debug", action="store_true", help="show tracebacks")
    p.add_argument("-v", "--verbose", action="store_true")


def _resampler_flags(p):
    p.add_argument("--mode", choices=["process", "repeated", "process-with-replacement"])
    p.add_argument("-T", "--iterations", type=int)
    p.add_argument("--n-target", type=_parse_value)
    p.add_argument("--p-seed", type=float)
    p.add_argument("--p-trace", type=float)
    p.add_argument("--p-reseed", type=float)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--waves", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--pairs", choices=["none", "edges", "all"])
    p.add_argument("--network", choices=["forest", "ties"])
    p.add_argument("--design", dest="design_preset", choices=["one-wave"], help="preset enumerable design")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linktrace", description="Link-tracing sample simulation and inclusion-frequency estimation.")
    parser.add_argument("--version", action="version", version=f"linktrace {__version__}")
    parser.add_argument("--schema", action="store_true", help="list every config key and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="validate and normalize population data files")
    _common(p)
    p.add_argument("--edges")
    p.add_argument("--node-ids")
    p.add_argument("--attributes")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("generate", help="write a synthetic population")
    _common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sample", help="run one link-tracing design on the population")
    _common(p)
    p.add_argument("--coupons", type=int)
    p.add_argument("--n", dest="sample_size", type=int)
    p.add_argument("--seeds", type=int)
    p.add_argument("--name", dest="design_name")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("resample", help="inclusion frequencies for a stored sample")
    _common(p)
    _resampler_flags(p)
    p.add_argument("--sample", required=True, help="directory with sample_nodes.csv and sample_edges.csv")
    p.add_argument("--compare", help="oracle.csv to compare the frequencies against")
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("estimate", help="estimates and intervals from a sample and its frequencies")
    _common(p)
    p.add_argument("--sample", required=True)
    p.add_argument("--frequencies", help="id,f file (default: SAMPLE/frequencies.csv)")
    p.add_argument("--variant", choices=[v.value for v in VarianceVariant])
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="run the Monte Carlo comparison")
    _common(p)
    p.add_argument("--workers", type=int)
    p.add_argument("-R", "--replications", type=int)
    p.add_argument("--from-log", help="rebuild the report from a replications.csv log")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="exact inclusion probabilities for a tiny network")
    _common(p)
    _resampler_flags(p)
    p.add_argument("--nodes", type=int)
    p.add_argument("--graph", choices=["path", "random-tree", "star"], default="path")
    p.add_argument("--sample", help="use a stored sample network instead of a generated one")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("export", help="write the frequency-annotated sample network")
    _common(p)
    p.add_argument("--sample", required=True)
    p.add_argument("--frequencies")
    p.add_argument("--network", choices=["forest", "ties"])
    p.set_defaults(func=cmd_export)
    return parser


def _fail(command, exc, code):
    doc = {"error": type(exc).__name__, "command": command, "message": str(exc)}
    if isinstance(exc, ConfigError):
        doc["errors"] = exc.errors
    if isinstance(exc, ZeroFrequencyError):
        doc["nodes"] = [int(x) for x in exc.nodes[:50]]
    sys.stderr.write(json.dumps(doc) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.schema:
        print(describe_schema())
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
    except ConfigError as exc:
        if args.debug:
            raise
        return _fail(args.command, exc, 2)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one diagnostic line
        if args.debug:
            raise
        return _fail(args.command, exc, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
