"""End-to-end steps shared by the command line and the simulation harness."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import seeds
from .comparison import (ComparisonData, Pairs, block, build_comparisons, compare_pairs, enumerate_pairs,
                         index_by_rules, transitive_closure)
from .config import CandidateSettings, RunConfig
from .datastore import DataError, FileCollection, load_files
from .estimator import LinkageEstimate, LossSpec, bayes_estimate
from .likelihood import DirichletHyper
from .prior import PriorConfig
from .sampler import GibbsConfig, PosteriorSamples, run_chain
from .simlab import DistortionModel, SimulatedData, distort, generate_truth, score
from .simlab.scenarios import OverlapScenario

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# single pipeline pieces


def candidate_pairs(files: FileCollection, specs, settings: CandidateSettings) -> tuple[Pairs | None, Pairs | None]:
    """(candidates, universe) for the configured indexing; ``None`` means all pairs."""
    if settings.method == "none":
        return None, None
    if settings.method == "block":
        cands = block(files, settings.block_fields)
        # cross-block pairs are never compared, so the modeled universe is the blocks
        return cands, cands
    universe = enumerate_pairs(files)
    levels = compare_pairs(files, specs, universe)
    kept = index_by_rules(files, specs, settings.rules, universe, levels)
    if settings.closure:
        kept = transitive_closure(kept, files.r, files.file_of, files.duplicate_free)
    return kept, None


def compare(files: FileCollection, specs, settings: CandidateSettings) -> ComparisonData:
    cands, universe = candidate_pairs(files, specs, settings)
    return build_comparisons(files, specs, candidates=cands, universe=universe)


def fit(data: ComparisonData, prior: PriorConfig, gibbs: GibbsConfig, hyper: DirichletHyper,
        rng: np.random.Generator) -> PosteriorSamples:
    return run_chain(gibbs, data, prior, hyper, rng=rng)


def estimate(samples: PosteriorSamples, cfg_loss: LossSpec, max_component=None, delta=None) -> LinkageEstimate:
    return bayes_estimate(samples, cfg_loss, max_component=max_component, delta=delta)


def simulate(scenario: OverlapScenario, errors: int, plan: str, master: int, replicate: int) -> SimulatedData:
    sim = generate_truth(scenario, seeds.stream(master, "truth", replicate))
    files = distort(sim.files, DistortionModel(errors, plan=plan), seeds.stream(master, "distortion", replicate))
    return SimulatedData(files, sim.truth, sim.patterns, sim.n_entities)


def load_data(cfg: RunConfig) -> FileCollection:
    files = cfg.data.files
    if not files:
        sim_dir = cfg.path("data")
        files = sorted(str(p) for p in sim_dir.glob("file*.csv"))
        dup = [cfg.simulate.scenario.duplicate_free] * len(files)
        if not files:
            raise DataError(f"no data files configured and none simulated under {sim_dir}")
        return load_files(files, cfg.data.schema, dup, missing_token=cfg.data.missing_token)
    return load_files(files, cfg.data.schema, cfg.data.duplicate_free, cfg.data.names, cfg.data.missing_token)


def write_truth(path, truth: np.ndarray, file_of: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["global_index", "file", "entity"])
        for g, (z, k) in enumerate(zip(truth.tolist(), np.asarray(file_of).tolist())):
            w.writerow([g + 1, k + 1, z + 1])


def read_truth(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([int(r["entity"]) - 1 for r in csv.DictReader(fh)], dtype=np.int64)


# ---------------------------------------------------------------------------
# replicate harness


@dataclass(frozen=True)
class ReplicateTask:
    scenario: OverlapScenario
    errors: int
    plan: str
    master: int
    replicate: int
    comparators: tuple
    candidates: CandidateSettings
    hyper: DirichletHyper
    gibbs: GibbsConfig
    variants: tuple
    max_component: int | None = None


def run_replicate(task: ReplicateTask) -> list[dict]:
    """Simulate one data set and score every variant on it.

    A variant with an abstain cost is scored twice: its full estimate
    (abstention disallowed) and its partial estimate.
    """
    t0 = time.perf_counter()
    sim = simulate(task.scenario, task.errors, task.plan, task.master, task.replicate)
    data = compare(sim.files, list(task.comparators), task.candidates)
    rows = []
    for v in task.variants:
        prior = v.prior.build(sim.files.K, sim.files.r, sim.files.duplicate_free)
        gcfg = GibbsConfig(**{**task.gibbs.__dict__, "single_model": v.single_model})
        samples = fit(data, prior, gcfg, task.hyper, seeds.stream(task.master, "chain", task.replicate))
        losses = [("full", LossSpec(v.loss.fnm, v.loss.fm1, v.loss.fm2))]
        if v.loss.partial:
            losses.append(("partial", v.loss))
        for kind, spec in losses:
            est = estimate(samples, spec, task.max_component)
            m = score(sim.truth, est.labels)
            rows.append({"variant": v.name, "estimate": kind, "errors": task.errors,
                         "replicate": task.replicate, "records": sim.files.r,
                         "candidate_pairs": data.n_pairs, "delta": est.delta, **m.row()})
    log.info("replicate %d (E=%d) done in %.1fs", task.replicate, task.errors, time.perf_counter() - t0)
    return rows


def replicate_tasks(cfg: RunConfig) -> list[ReplicateTask]:
    sim = cfg.simulate
    return [ReplicateTask(sim.scenario, E, sim.plan, cfg.seed, rep, tuple(cfg.comparators), cfg.candidates,
                          cfg.hyper, cfg.gibbs, tuple(cfg.all_variants()), cfg.estimate.max_component)
            for E in sim.errors for rep in range(sim.replicates)]


def run_replicates(tasks: list[ReplicateTask], workers: int = 1) -> list[dict]:
    if workers <= 1:
        out = [run_replicate(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(run_replicate, tasks))
    return [row for rows in out for row in rows]


def summarize(rows: list[dict]) -> list[dict]:
    """Percentile bands per (variant, estimate kind, error level)."""
    from .simlab import aggregate
    keys = sorted({(r["variant"], r["estimate"], r["errors"]) for r in rows},
                  key=lambda k: (k[0], k[1], k[2]))
    out = []
    for variant, kind, E in keys:
        sel = [r for r in rows if (r["variant"], r["estimate"], r["errors"]) == (variant, kind, E)]
        agg = aggregate(sel)
        flat = {"variant": variant, "estimate": kind, "errors": E, "replicates": agg["replicates"],
                "n_bias": agg["n_bias"], "n_mse": agg["n_mse"]}
        for metric in ("precision", "recall", "abstention"):
            for band, val in agg[metric].items():
                flat[f"{metric}_{band}"] = val
        out.append(flat)
    return out


def write_rows(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def _fmt(v):
    if isinstance(v, float):
        return "NA" if np.isnan(v) else repr(round(v, 10))
    return v


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")
