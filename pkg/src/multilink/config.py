"""Run configuration: one YAML file describing data, comparisons, prior, sampler and estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .comparison import ComparatorSpec, default_comparators
from .datastore import Schema
from .estimator import LossSpec
from .likelihood import DirichletHyper
from .prior import (ClusterCountPrior, ClusterSizePrior, PriorConfig, alpha_from_patterns, default_alpha,
                    flat_cells, informative_alpha, negbin_params, sparse_cells)
from .sampler import GibbsConfig
from .simlab.distort import DistortionModel
from .simlab.generate import SIM_SCHEMA
from .simlab.scenarios import OverlapScenario, scenario_presets


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _section(raw: dict, name: str) -> dict:
    val = raw.get(name) or {}
    if not isinstance(val, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return val


def _unknown(d: dict, allowed: set, where: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")


@dataclass
class DataSettings:
    files: list[str] = field(default_factory=list)
    names: list[str] | None = None
    duplicate_free: list[bool] = field(default_factory=list)
    schema: Schema = SIM_SCHEMA
    missing_token: str = "NA"
    truth: str | None = None


@dataclass
class CandidateSettings:
    method: str = "none"                     # none | block | disjunction
    block_fields: list[str] = field(default_factory=list)
    rules: list[dict] = field(default_factory=list)
    closure: bool = True


@dataclass
class PriorSettings:
    flat: bool = False
    cluster_count: dict = field(default_factory=lambda: {"kind": "uniform"})
    alpha: Any = None
    sizes: Any = None                        # None: point mass for duplicate-free files, Poisson(1) on 1..10 otherwise

    def build(self, K: int, r: int, duplicate_free: list[bool]) -> PriorConfig:
        cc = dict(self.cluster_count)
        kind = cc.pop("kind", "uniform")
        try:
            if kind == "negbin" and "a" not in cc:
                a, q = negbin_params(r)
                count = ClusterCountPrior("negbin", a=a, q=q)
            else:
                count = ClusterCountPrior(kind, **{k: (tuple(v) if k == "probs" else v) for k, v in cc.items()})
            alpha = self._alpha(K)
            sizes = self._sizes(K, duplicate_free)
            return PriorConfig(tuple(sizes), count, alpha, bool(self.flat))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"prior: {exc}") from None

    def _alpha(self, K: int):
        a = self.alpha
        if a is None:
            return default_alpha(K)
        if a == "flat-cells":
            return flat_cells(K)
        if a == "sparse-cells":
            return sparse_cells(K)
        if isinstance(a, dict) and "kappa" in a:
            return informative_alpha(a["p"], float(a["kappa"]), K)
        if isinstance(a, dict):
            alpha = alpha_from_patterns(a, K)
            if np.any(alpha[1:] <= 0):
                raise ValueError("alpha must list every inclusion pattern with a positive value")
            return alpha
        raise ValueError(f"cannot interpret alpha {a!r}")

    def _sizes(self, K: int, duplicate_free: list[bool]) -> list[ClusterSizePrior]:
        spec = self.sizes
        if spec is None:
            return [ClusterSizePrior("point") if d else ClusterSizePrior("poisson", 1.0, 10)
                    for d in duplicate_free]
        if isinstance(spec, dict):
            spec = [spec] * K
        if len(spec) != K:
            raise ValueError(f"need one size prior per file ({K}), got {len(spec)}")
        out = []
        for d, s in zip(duplicate_free, spec):
            s = dict(s)
            kind = s.pop("kind", "poisson")
            if d:
                out.append(ClusterSizePrior("point"))
            elif kind == "pmf":
                out.append(ClusterSizePrior("pmf", probs=tuple(s["probs"])))
            else:
                out.append(ClusterSizePrior(kind, float(s.get("mean", 1.0)), int(s.get("upper", 10))))
        return out


@dataclass
class EstimateSettings:
    loss: LossSpec = LossSpec()
    max_component: int | None = None
    delta: float | None = None


@dataclass
class SimulateSettings:
    scenario: OverlapScenario = field(default_factory=lambda: scenario_presets(100)["high"])
    errors: list[int] = field(default_factory=lambda: [1])
    plan: str = "equal"
    replicates: int = 1


@dataclass
class Variant:
    name: str
    prior: PriorSettings
    loss: LossSpec
    single_model: bool = False


@dataclass
class RunConfig:
    seed: int = 0
    out: Path = Path("out")
    data: DataSettings = field(default_factory=DataSettings)
    comparators: list[ComparatorSpec] = field(default_factory=default_comparators)
    candidates: CandidateSettings = field(default_factory=CandidateSettings)
    prior: PriorSettings = field(default_factory=PriorSettings)
    hyper: DirichletHyper = DirichletHyper()
    single_model: bool = False
    gibbs: GibbsConfig = GibbsConfig()
    estimate: EstimateSettings = field(default_factory=EstimateSettings)
    simulate: SimulateSettings = field(default_factory=SimulateSettings)
    variants: list[Variant] = field(default_factory=list)
    source: Path | None = None

    def path(self, name: str) -> Path:
        return self.out / name

    def all_variants(self) -> list[Variant]:
        return self.variants or [Variant("structured", self.prior, self.estimate.loss, self.single_model)]


# ---------------------------------------------------------------------------
# parsing


def _loss(d: dict | None, base: LossSpec = LossSpec()) -> LossSpec:
    if not d:
        return base
    _unknown(d, {"fnm", "fm1", "fm2", "abstain"}, "loss")
    vals = {k: (math.inf if v in (None, "inf", "infinity") else float(v)) for k, v in d.items()}
    try:
        return replace(base, **vals)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _prior(d: dict, base: PriorSettings | None = None) -> PriorSettings:
    _unknown(d, {"flat", "cluster_count", "alpha", "sizes"}, "prior")
    base = base or PriorSettings()
    return PriorSettings(flat=bool(d.get("flat", base.flat)),
                         cluster_count=d.get("cluster_count", base.cluster_count),
                         alpha=d.get("alpha", base.alpha), sizes=d.get("sizes", base.sizes))


def _schema(d) -> Schema:
    try:
        if d is None:
            return SIM_SCHEMA
        return Schema.from_pairs([(f["name"], f.get("kind", "string")) for f in d])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"data.schema: {exc}") from None


def _scenario(d: dict) -> OverlapScenario:
    n = int(d.get("n", 100))
    dup = d.get("duplicate_mean")
    name = d.get("scenario", "high")
    try:
        if isinstance(name, dict):
            scen = OverlapScenario("custom", {str(k): float(v) for k, v in name.items()}, n,
                                   None if dup is None else float(dup))
        else:
            presets = scenario_presets(n, 0.1 if dup is None else float(dup))
            if name not in presets:
                raise ConfigError(f"simulate.scenario: unknown preset {name!r} (known: {sorted(presets)})")
            scen = presets[name]
            if dup is not None and scen.duplicate_free:
                scen = OverlapScenario(scen.name, dict(scen.p), n, float(dup))
        if "max_duplicates" in d:
            scen = OverlapScenario(scen.name, dict(scen.p), n, scen.duplicate_mean, int(d["max_duplicates"]))
        return scen
    except ValueError as exc:
        raise ConfigError(f"simulate: {exc}") from None


def parse_config(raw: dict, source: Path | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    _unknown(raw, {"seed", "out", "data", "comparison", "prior", "likelihood", "gibbs", "estimate",
                   "simulate", "variants"}, "config")
    cfg = RunConfig(source=source)
    cfg.seed = int(raw.get("seed", 0))
    if "out" in raw:
        cfg.out = Path(raw["out"])
    base = source.parent if source else Path(".")
    if not cfg.out.is_absolute():
        cfg.out = base / cfg.out

    d = _section(raw, "data")
    _unknown(d, {"files", "names", "duplicate_free", "schema", "missing_token", "truth"}, "data")
    files = [str(base / p) for p in d.get("files", [])]
    dup = d.get("duplicate_free", [True] * len(files))
    if isinstance(dup, bool):
        dup = [dup] * len(files)
    if len(dup) != len(files):
        raise ConfigError("data.duplicate_free needs one flag per file")
    cfg.data = DataSettings(files, d.get("names"), [bool(x) for x in dup], _schema(d.get("schema")),
                            str(d.get("missing_token", "NA")),
                            str(base / d["truth"]) if d.get("truth") else None)

    c = _section(raw, "comparison")
    _unknown(c, {"fields", "candidates"}, "comparison")
    names = set(cfg.data.schema.names)
    if "fields" in c:
        for f in c["fields"] or []:
            if isinstance(f, dict) and f.get("field") not in names:
                raise ConfigError(f"comparison field {f.get('field')!r} is not in the schema")
        try:
            cfg.comparators = [ComparatorSpec(f["field"], f.get("method", "normalized_edit_distance"),
                                              tuple(f.get("breakpoints", ()))) for f in c["fields"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"comparison.fields: {exc}") from None
    for spec in cfg.comparators:
        if spec.field not in names:
            raise ConfigError(f"comparison field {spec.field!r} is not in the schema")
    cand = c.get("candidates") or {}
    _unknown(cand, {"method", "block_fields", "rules", "closure"}, "comparison.candidates")
    cs = CandidateSettings(cand.get("method", "none"), list(cand.get("block_fields", [])),
                           [dict(r) for r in cand.get("rules", [])], bool(cand.get("closure", True)))
    if cs.method not in ("none", "block", "disjunction"):
        raise ConfigError(f"unknown candidate method {cs.method!r}")
    for f in cs.block_fields:
        if f not in names:
            raise ConfigError(f"blocking field {f!r} is not in the schema")
    compared = {s.field for s in cfg.comparators}
    for rule in cs.rules:
        for f in rule:
            if f not in compared:
                raise ConfigError(f"indexing field {f!r} has no comparator")
    if cs.method == "block" and not cs.block_fields:
        raise ConfigError("blocking needs block_fields")
    if cs.method == "disjunction" and not cs.rules:
        raise ConfigError("disjunction indexing needs at least one rule")
    cfg.candidates = cs

    cfg.prior = _prior(_section(raw, "prior"))

    lk = _section(raw, "likelihood")
    _unknown(lk, {"mu", "nu", "single_model"}, "likelihood")
    mu, nu = lk.get("mu", 1.0), lk.get("nu", 1.0)
    if np.any(np.asarray(mu, dtype=float) <= 0) or np.any(np.asarray(nu, dtype=float) <= 0):
        raise ConfigError("likelihood: mu and nu must be positive")
    cfg.hyper = DirichletHyper(np.asarray(mu, dtype=float), np.asarray(nu, dtype=float))
    cfg.single_model = bool(lk.get("single_model", False))

    g = _section(raw, "gibbs")
    _unknown(g, {"iterations", "burn_in", "thin", "init", "random_order", "trace", "keep_params",
                 "checkpoint_every"}, "gibbs")
    try:
        cfg.gibbs = GibbsConfig(**{k: v for k, v in g.items()}, seed=cfg.seed,
                                single_model=cfg.single_model)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"gibbs: {exc}") from None

    e = _section(raw, "estimate")
    _unknown(e, {"loss", "max_component", "delta"}, "estimate")
    cfg.estimate = EstimateSettings(_loss(e.get("loss")), e.get("max_component"), e.get("delta"))

    s = _section(raw, "simulate")
    _unknown(s, {"scenario", "n", "errors", "plan", "replicates", "duplicate_mean", "max_duplicates"},
             "simulate")
    errors = s.get("errors", [1])
    errors = [int(x) for x in (errors if isinstance(errors, list) else [errors])]
    plan = s.get("plan", "equal")
    try:
        for E in errors:
            DistortionModel(E, plan=plan)
    except ValueError as exc:
        raise ConfigError(f"simulate: {exc}") from None
    reps = int(s.get("replicates", 1))
    if reps < 1:
        raise ConfigError("simulate.replicates must be >= 1")
    cfg.simulate = SimulateSettings(_scenario(s), errors, plan, reps)

    variants = raw.get("variants") or []
    for v in variants:
        if "name" not in v:
            raise ConfigError("every variant needs a name")
        _unknown(v, {"name", "prior", "loss", "single_model"}, f"variant {v['name']}")
        cfg.variants.append(Variant(str(v["name"]), _prior(v.get("prior") or {}, cfg.prior),
                                    _loss(v.get("loss"), cfg.estimate.loss),
                                    bool(v.get("single_model", cfg.single_model))))
    if len({v.name for v in cfg.variants}) != len(cfg.variants):
        raise ConfigError("variant names must be unique")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    return parse_config(raw or {}, path)
