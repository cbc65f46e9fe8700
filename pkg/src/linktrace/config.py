"""Run configuration: a TOML file with one section per module.

Every key, its type, default and meaning is listed in ``SCHEMA``. Parsing
collects every problem (unknown keys with the nearest valid spelling,
type mismatches, missing required keys) before reporting.
"""

from __future__ import annotations

import difflib
import sys
from dataclasses import dataclass, field, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .designs import RDS, SNOWBALL, DesignConfig
from .estimators import VarianceVariant
from .netgraph import SyntheticPopulationConfig
from .resampler import MODES, PAIR_MODES, ResampleConfig
from .simharness.experiment import ESTIMATORS, REFERENCE_PREVALENCES, ExperimentConfig, PopulationSpec

REQUIRED = object()

# section -> key -> (type, default, description)
SCHEMA = {
    "": {
        "seed": ("int", REQUIRED, "master seed; every random stream derives from it"),
        "out": ("str", "out", "output directory"),
        "workers": ("int", 1, "worker processes for replications"),
    },
    "population": {
        "nodes": ("int", None, "synthetic population size"),
        "mean_degree": ("float", None, "synthetic target mean degree"),
        "degrees": ("list[int]", None, "explicit synthetic degree sequence (instead of mean_degree)"),
        "component_fractions": ("list[float]", [1.0], "synthetic component size fractions, summing to 1"),
        "degree_dispersion": ("float", 1.0, "log-scale spread of synthetic degrees"),
        "seed": ("int", None, "synthetic population seed (default: the master seed)"),
        "prevalences": ("list[float]", list(REFERENCE_PREVALENCES), "population proportions of synthetic binary attributes"),
        "degree_effects": ("list[float]", None, "log-odds slope on centered log degree per synthetic attribute"),
        "edges": ("str", None, "edge list file (u,v per line) instead of a synthetic population"),
        "node_ids": ("str", None, "optional file of node ids, one per line, to keep isolated nodes"),
        "attributes": ("str", None, "attribute table with header id,var1,..."),
        "binary": ("list[str]", None, "attribute columns to validate as binary (default: inferred)"),
    },
    "design": {
        "coupons": ("int", 3, "coupon limit per respondent (3 RDS, 15 snowball)"),
        "n": ("int", 1200, "target sample size, seeds included"),
        "seeds": ("int", 240, "number of uniformly drawn seeds"),
        "seed_rate": ("float", None, "Bernoulli seed rate, instead of a seed count"),
        "expiry_days": ("int", 28, "days until an unredeemed coupon expires"),
        "p_use": ("float", 0.15, "per-day coupon redemption probability"),
        "name": ("str", "RDS", "label used in reports"),
    },
    "resampler": {
        "mode": ("str", "process", f"one of {', '.join(MODES)}"),
        "iterations": ("int", 10_000, "number of resamples T"),
        "n_target": ("int|none", 400, "target resample size; \"none\" for no cap (repeated mode)"),
        "p_seed": ("float", 0.0167, "initial seeding rate (repeated mode)"),
        "p_trace": ("float", 0.05, "per-link tracing rate"),
        "p_reseed": ("float", None, "re-seeding rate (default 0.01 process, 0.001 repeated)"),
        "burn_in": ("int", 1000, "process steps discarded before counting"),
        "waves": ("int", None, "wave limit (repeated mode)"),
        "chains": ("int", 1, "independent chains sharing the iterations"),
        "pairs": ("str", "none", f"joint frequencies to accumulate: {', '.join(PAIR_MODES)}"),
        "network": ("str", "ties", "resampling network: forest (recruitment links) or ties (all known links)"),
    },
    "estimators": {
        "variant": ("str", "V2", "variance estimator: V1, V2, JOINT_FULL, JOINT_EDGES, DIAGONAL"),
        "alpha": ("float", 0.05, "interval level is 1 - alpha"),
        "estimators": ("list[str]", list(ESTIMATORS), "estimators to report: new, current, mean"),
        "variables": ("list[str]", None, "variables (attributes, degree, deg2plus); default all"),
    },
    "experiment": {
        "designs": ("list[str]", ["RDS", "SB"], "designs to compare: RDS, SB, or design (the [design] section)"),
        "replications": ("int", 200, "Monte Carlo replications per design"),
    },
}

REQUIRED_KEYS = ("seed", "population")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _check_type(kind, value):
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "str":
        return isinstance(value, str)
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "int|none":
        return value == "none" or _check_type("int", value)
    if kind.startswith("list["):
        inner = kind[5:-1]
        return isinstance(value, list) and all(_check_type(inner, v) for v in value)
    raise AssertionError(kind)


def _suggest(key, valid):
    close = difflib.get_close_matches(key, valid, n=1, cutoff=0.6)
    return f" (did you mean {close[0]!r}?)" if close else ""


def validate_raw(raw: dict, required=REQUIRED_KEYS) -> dict:
    """Check keys and types; return the document with defaults filled in.

    Raises ConfigError listing every problem found.
    """
    errors = []
    for key in required:
        if key not in raw:
            errors.append(f"missing required key {key!r}")
    sections = [s for s in SCHEMA if s]
    resolved = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            if key not in SCHEMA or key == "":
                errors.append(f"unknown section [{key}]{_suggest(key, sections)}")
                continue
        elif key not in SCHEMA[""]:
            where = "unknown key" if key not in sections else "expected a section for"
            errors.append(f"{where} {key!r}{_suggest(key, list(SCHEMA['']) + sections) if key not in sections else ''}")
            continue
    for key, (kind, default, _) in SCHEMA[""].items():
        if key in raw and not isinstance(raw[key], dict):
            if not _check_type(kind, raw[key]):
                errors.append(f"{key}: expected {kind}, got {type(raw[key]).__name__}")
            resolved[key] = raw[key]
        elif default is not REQUIRED:
            resolved[key] = default
    for section in sections:
        given = raw.get(section, {})
        if not isinstance(given, dict):
            continue
        out = {}
        for key, value in given.items():
            if key not in SCHEMA[section]:
                errors.append(f"{section}: unknown key {key!r}{_suggest(key, list(SCHEMA[section]))}")
                continue
            kind = SCHEMA[section][key][0]
            if not _check_type(kind, value):
                errors.append(f"{section}.{key}: expected {kind}, got {type(value).__name__} {value!r}")
                continue
            out[key] = value
        for key, (_, default, _) in SCHEMA[section].items():
            out.setdefault(key, list(default) if isinstance(default, list) else default)
        resolved[section] = out
    if errors:
        raise ConfigError(errors)
    return resolved


def read_toml(path) -> dict:
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"{path}: {exc}"]) from None


@dataclass(frozen=True)
class RunConfig:
    seed: int | None
    out: str
    workers: int
    population: PopulationSpec | None
    design: DesignConfig
    resample: ResampleConfig
    variant: str
    alpha: float
    estimators: tuple
    variables: tuple | None
    designs: tuple
    replications: int
    resolved: dict = field(default_factory=dict, compare=False)

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            population=self.population,
            designs=self.designs,
            resample=self.resample,
            replications=self.replications,
            variables=self.variables,
            estimators=self.estimators,
            variant=self.variant,
            alpha=self.alpha,
            seed=self.seed,
            workers=self.workers,
        )


def _population(p: dict, seed) -> PopulationSpec | None:
    if p["edges"] is not None:
        return PopulationSpec(
            edges=p["edges"],
            node_ids=p["node_ids"],
            attributes=p["attributes"],
            binary=tuple(p["binary"]) if p["binary"] is not None else None,
        )
    if p["nodes"] is None:
        return None
    syn = SyntheticPopulationConfig(
        nodes=p["nodes"],
        mean_degree=p["mean_degree"],
        degrees=p["degrees"],
        component_fractions=tuple(p["component_fractions"]),
        degree_dispersion=p["degree_dispersion"],
        seed=p["seed"] if p["seed"] is not None else (seed or 0),
    )
    return PopulationSpec(
        synthetic=syn,
        prevalences=tuple(p["prevalences"]),
        degree_effects=tuple(p["degree_effects"]) if p["degree_effects"] is not None else None,
    )


def build(resolved: dict) -> RunConfig:
    """Turn a validated document into typed configs; semantic errors are collected."""
    errors = []
    seed = resolved.get("seed")
    p = resolved["population"]
    if p["edges"] is None and p["nodes"] is not None and (p["mean_degree"] is None) == (p["degrees"] is None):
        errors.append("population: give exactly one of mean_degree or degrees")
    if p["edges"] is not None and p["nodes"] is not None:
        errors.append("population: give either edges or nodes, not both")
    population = None
    if not errors:
        population = _population(p, seed)
        if population is not None and population.synthetic is not None:
            try:
                population.synthetic.validate()
            except ValueError as exc:
                errors.append(f"population: {exc}")

    d = resolved["design"]
    design = DesignConfig(**d)
    try:
        design.validate()
    except ValueError as exc:
        errors.append(f"design: {exc}")

    r = dict(resolved["resampler"])
    if r["n_target"] == "none":
        r["n_target"] = None
    resample = ResampleConfig(**r)
    try:
        resample.validate()
    except ValueError as exc:
        errors.append(f"resampler: {exc}")

    e = resolved["estimators"]
    try:
        VarianceVariant(e["variant"])
    except ValueError:
        errors.append(f"estimators.variant: unknown variant {e['variant']!r}")
    if not 0.0 < e["alpha"] < 1.0:
        errors.append("estimators.alpha: must be in (0, 1)")
    bad = [x for x in e["estimators"] if x not in ESTIMATORS]
    if bad:
        errors.append(f"estimators.estimators: unknown {bad}; choose from {list(ESTIMATORS)}")

    x = resolved["experiment"]
    shared = {k: d[k] for k in ("n", "seeds", "seed_rate", "expiry_days", "p_use")}
    designs = []
    for name in x["designs"]:
        if name == "RDS":
            designs.append(replace(RDS, **shared))
        elif name == "SB":
            designs.append(replace(SNOWBALL, **shared))
        elif name == "design":
            designs.append(design)
        else:
            errors.append(f"experiment.designs: unknown design {name!r}{_suggest(name, ['RDS', 'SB', 'design'])}")
    if x["replications"] < 1:
        errors.append("experiment.replications: must be >= 1")
    if resolved.get("workers", 1) < 1:
        errors.append("workers: must be >= 1")
    if errors:
        raise ConfigError(errors)
    return RunConfig(
        seed=seed,
        out=resolved["out"],
        workers=resolved["workers"],
        population=population,
        design=design,
        resample=resample,
        variant=e["variant"],
        alpha=e["alpha"],
        estimators=tuple(e["estimators"]),
        variables=tuple(e["variables"]) if e["variables"] is not None else None,
        designs=tuple(designs),
        replications=x["replications"],
        resolved=resolved,
    )


def apply_overrides(raw: dict, overrides: dict) -> dict:
    """Set dotted keys (``"resampler.iterations"``) on a copy of ``raw``."""
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    for dotted, value in overrides.items():
        if value is None:
            continue
        *path, key = dotted.split(".")
        node = out
        for part in path:
            node = node.setdefault(part, {})
        node[key] = value
    return out


def parse_config(path=None, overrides=None, required=REQUIRED_KEYS) -> RunConfig:
    """Read, merge flag overrides into, validate and build a run config."""
    raw = read_toml(path) if path is not None else {}
    raw = apply_overrides(raw, overrides or {})
    return build(validate_raw(raw, required))


def describe_schema() -> str:
    """Plain-text listing of every key with its type and default."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]" if section else "(top level)")
        for key, (kind, default, doc) in keys.items():
            shown = "required" if default is REQUIRED else f"default {default!r}"
            lines.append(f"  {key} ({kind}, {shown}): {doc}")
    return "\n".join(lines)
