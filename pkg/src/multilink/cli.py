"""Command-line entry point: ``multilink <command> --config run.yaml``.

Exit status is 0 on success, 1 for configuration errors and 2 for data errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline, seeds
from .comparison import ComparisonData, file_digest
from .config import ConfigError, RunConfig, load_config
from .datastore import DataError, write_files
from .estimator import read_estimate
from .plotting import report_figures
from .sampler import PosteriorSamples
from .simlab import score

log = logging.getLogger("multilink")

COMPARISONS = "comparisons.npz"
SAMPLES = "samples.txt"
TRACE = "trace.txt"
ESTIMATE = "estimate.csv"


def _need(path: Path, made_by: str) -> Path:
    if not path.exists():
        raise DataError(f"{path} not found (run '{made_by}' first)")
    return path


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    sim_cfg = cfg.simulate
    E = sim_cfg.errors[0]
    if len(sim_cfg.errors) > 1:
        log.warning("simulate writes one data set; using the first error level (%d)", E)
    sim = pipeline.simulate(sim_cfg.scenario, E, sim_cfg.plan, cfg.seed, 0)
    paths = write_files(sim.files, cfg.path("data"), cfg.data.missing_token)
    truth = cfg.path("data") / "truth.csv"
    pipeline.write_truth(truth, sim.truth, sim.files.file_of)
    return paths + [truth]


def cmd_compare(cfg: RunConfig) -> list[Path]:
    files = pipeline.load_data(cfg)
    data = pipeline.compare(files, cfg.comparators, cfg.candidates)
    cfg.out.mkdir(parents=True, exist_ok=True)
    npz, delim = cfg.path(COMPARISONS), cfg.path("comparisons.csv")
    data.save(npz)
    data.write_delimited(delim)
    inputs = cfg.data.files or sorted(str(p) for p in cfg.path("data").glob("file*.csv"))
    pipeline.write_json(cfg.path("comparisons.json"), {
        "records": data.r, "candidate_pairs": data.n_pairs, "universe_pairs": data.universe_size,
        "candidate_method": cfg.candidates.method,
        "inputs": {Path(p).name: file_digest(p) for p in inputs},
    })
    return [npz, delim]


def _load_comparisons(cfg: RunConfig) -> ComparisonData:
    try:
        return ComparisonData.load(_need(cfg.path(COMPARISONS), "compare"))
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read comparison artifact: {exc}") from None


def cmd_sample(cfg: RunConfig) -> list[Path]:
    data = _load_comparisons(cfg)
    prior = cfg.prior.build(data.K, data.r, data.duplicate_free)
    samples = pipeline.fit(data, prior, replace(cfg.gibbs, seed=cfg.seed), cfg.hyper,
                           seeds.stream(cfg.seed, "chain"))
    sp, tp = cfg.path(SAMPLES), cfg.path(TRACE)
    samples.write_samples(sp)
    samples.write_trace(tp)
    pipeline.write_json(cfg.path("sample_meta.json"), {
        **samples.meta, "stored": samples.T, "records": samples.r,
        "comparisons_sha256": file_digest(cfg.path(COMPARISONS)),
    })
    log.info("chain finished in %.1fs", samples.seconds)
    return [sp, tp]


def cmd_estimate(cfg: RunConfig) -> list[Path]:
    data = _load_comparisons(cfg)
    try:
        samples = PosteriorSamples.read(_need(cfg.path(SAMPLES), "sample"), data.file_of)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    est = pipeline.estimate(samples, cfg.estimate.loss, cfg.estimate.max_component, cfg.estimate.delta)
    est.meta["samples_sha256"] = file_digest(cfg.path(SAMPLES))
    out = [cfg.path(ESTIMATE), cfg.path("estimate_summary.json")]
    est.write_csv(out[0], data.file_of)
    est.write_summary(out[1])
    if cfg.estimate.loss.partial:
        offsets = [sum(data.file_sizes[:k]) for k in range(data.K)]
        out.append(cfg.path("abstain_worklist.csv"))
        est.write_worklist(out[-1], data.file_of, offsets)
    return out


def cmd_evaluate(cfg: RunConfig) -> list[Path]:
    truth_path = Path(cfg.data.truth) if cfg.data.truth else cfg.path("data") / "truth.csv"
    try:
        truth = pipeline.read_truth(_need(truth_path, "simulate"))
        decisions = read_estimate(_need(cfg.path(ESTIMATE), "estimate"))
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed truth or estimate file: {exc}") from None
    if len(truth) != len(decisions):
        raise DataError(f"truth has {len(truth)} records but the estimate has {len(decisions)}")
    path = cfg.path("metrics.csv")
    pipeline.write_rows(path, [score(truth, decisions).row()])
    return [path]


def cmd_replicate(cfg: RunConfig, workers: int = 1) -> list[Path]:
    tasks = pipeline.replicate_tasks(cfg)
    rows = pipeline.run_replicates(tasks, workers)
    summary = pipeline.summarize(rows)
    cfg.out.mkdir(parents=True, exist_ok=True)
    out = [cfg.path("replicates.csv"), cfg.path("report.csv"), cfg.path("report.json")]
    pipeline.write_rows(out[0], rows)
    pipeline.write_rows(out[1], summary)
    pipeline.write_json(out[2], {"scenario": cfg.simulate.scenario.name, "n": cfg.simulate.scenario.n,
                                 "seed": cfg.seed, "summary": summary})
    figdir = cfg.path("figures")
    figdir.mkdir(exist_ok=True)
    return out + report_figures(summary, figdir)


COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "replicate": cmd_replicate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="multilink", description="Bayesian multifile record linkage.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--workers", type=int, default=1, help="parallel replicates (replicate only)")
    return ap


def _setup_logging() -> None:
    level = os.environ.get("MULTILINK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.gibbs = replace(cfg.gibbs, seed=args.seed)
        if args.out:
            cfg.out = Path(args.out)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg.out.mkdir(parents=True, exist_ok=True)
        fn = COMMANDS[args.command]
        paths = fn(cfg, args.workers) if args.command == "replicate" else fn(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
