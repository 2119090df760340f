"""Gibbs sampler over multifile partitions.

Each iteration draws the m/u parameters given the current partition, then
reassigns every record in turn.  A record may only join a cluster whose
members are all candidate neighbours of it.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .comparison import ComparisonData, Pairs, record_components
from .likelihood import (CountSummaries, DirichletHyper, ModelParams, count_summaries,
                         pair_loglik_ratio, sample_params)
from .partition import NEW, MultifilePartition
from .prior import PriorConfig, assignment_log_weights

log = logging.getLogger(__name__)

INIT_STRATEGIES = ("singletons", "random-matching")


@dataclass(frozen=True)
class GibbsConfig:
    iterations: int = 1000
    burn_in: int = 100
    seed: int = 0
    thin: int = 1
    init: str = "singletons"
    random_order: bool = False
    trace: str = "all"          # "all" keeps n for every iteration, "kept" only stored ones
    keep_params: bool = False
    single_model: bool = False
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.iterations < 1 or not 0 <= self.burn_in < self.iterations:
            raise ValueError(f"need 0 <= burn_in < iterations, got {self.burn_in}, {self.iterations}")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.init not in INIT_STRATEGIES:
            raise ValueError(f"unknown initialization {self.init!r}")
        if self.trace not in ("all", "kept"):
            raise ValueError(f"unknown trace retention {self.trace!r}")


@dataclass
class PosteriorSamples:
    labels: np.ndarray              # (T_kept, r) canonical labels
    n_trace: np.ndarray
    file_of: np.ndarray
    iterations: np.ndarray          # iteration number of each stored sample (1-based)
    m_trace: np.ndarray | None = None
    u_trace: np.ndarray | None = None
    seconds: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.labels.shape[0]

    @property
    def r(self) -> int:
        return self.labels.shape[1]

    def write_samples(self, path) -> None:
        with open(path, "w") as fh:
            for row in self.labels:
                fh.write(" ".join(map(str, (row + 1).tolist())) + "\n")

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("".join(f"{int(v)}\n" for v in self.n_trace))

    @classmethod
    def read(cls, samples_path, file_of, trace_path=None) -> "PosteriorSamples":
        rows = []
        with open(samples_path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                vals = np.array(line.split(), dtype=np.int64) - 1
                if len(vals) != len(file_of):
                    raise ValueError(f"{samples_path}:{lineno}: expected {len(file_of)} labels, got {len(vals)}")
                rows.append(vals)
        if not rows:
            raise ValueError(f"{samples_path}: no stored samples")
        labels = np.vstack(rows)
        trace = np.loadtxt(trace_path, dtype=np.int64, ndmin=1) if trace_path else labels.max(1) + 1
        return cls(labels, trace, np.asarray(file_of), np.arange(1, len(rows) + 1))


# ---------------------------------------------------------------------------
# initialization


def init_singletons(file_of, K: int, size_bounds=None) -> MultifilePartition:
    return MultifilePartition.singletons(file_of, K, size_bounds)


def init_random_matching(file_of, K: int, candidates: Pairs, rng: np.random.Generator,
                         size_bounds=None) -> MultifilePartition:
    """Random K-way matching inside each connected block of the candidate graph.

    Records of each file in a block are shuffled and the t-th record of every
    file goes to the t-th cluster, so no cluster holds two records of a file.
    Because candidate sets here are closed under transitivity, every pair in a
    block is a candidate and the result respects the candidate restriction.
    """
    file_of = np.asarray(file_of)
    r = len(file_of)
    labels = np.arange(r)
    if len(candidates):
        comp = record_components(candidates, r)
        nxt = r
        for block in np.split(np.argsort(comp, kind="stable"),
                              np.flatnonzero(np.diff(np.sort(comp, kind="stable"))) + 1):
            if len(block) < 2:
                continue
            base = nxt
            for k in range(K):
                recs = block[file_of[block] == k]
                labels[rng.permutation(recs)] = base + np.arange(len(recs))
            nxt = base + len(block)
    return MultifilePartition.from_labels(labels, file_of, K, size_bounds)


# ---------------------------------------------------------------------------
# state


def neighbour_csr(r: int, pair_i: np.ndarray, pair_j: np.ndarray):
    """CSR adjacency of the candidate graph; each entry also records its pair index."""
    P = len(pair_i)
    src = np.concatenate([pair_i, pair_j])
    dst = np.concatenate([pair_j, pair_i])
    pid = np.concatenate([np.arange(P), np.arange(P)])
    order = np.lexsort((dst, src))
    ptr = np.zeros(r + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=r), out=ptr[1:])
    return ptr, dst[order].astype(np.int64), pid[order].astype(np.int64)


class GibbsState:
    """Mutable chain state backed by flat arrays for the compiled sweep."""

    def __init__(self, data: ComparisonData, prior: PriorConfig, init: MultifilePartition):
        if prior.K != data.K:
            raise ValueError(f"prior has {prior.K} files, data has {data.K}")
        r, K = data.r, data.K
        self.data = data
        self.prior = prior
        self.file_of = data.file_of.astype(np.int64)
        self.nbr_ptr, self.nbr_idx, self.nbr_pair = neighbour_csr(r, data.pair_i, data.pair_j)
        self.levels = data.levels.astype(np.int64)
        self.pair_fp = data.pair_fp.astype(np.int64)

        labels = init.canonical().astype(np.int64)
        self._check_candidates(labels)
        self.labels = labels
        self.cl_size = np.bincount(labels, minlength=r).astype(np.int64)
        self.cl_fcount = np.zeros((r, K), dtype=np.int64)
        np.add.at(self.cl_fcount, (labels, self.file_of), 1)
        used = self.cl_size > 0
        self.free_stack = np.zeros(r, dtype=np.int64)
        free = np.flatnonzero(~used)[::-1]
        self.free_stack[:len(free)] = free
        self.free_top = np.array([len(free)], dtype=np.int64)
        self.n_clusters = np.array([int(used.sum())], dtype=np.int64)
        self.n_h = np.zeros(2 ** K, dtype=np.int64)
        pats = (self.cl_fcount[used] > 0) @ (1 << np.arange(K))
        np.add.at(self.n_h, pats, 1)
        self.a_counts = count_summaries(data, labels).a.copy()

        bounds = np.array(prior.size_bounds, dtype=np.int64)
        for k, dup_free in enumerate(data.duplicate_free):
            if dup_free and bounds[k] != 1:
                raise ValueError(f"file {k + 1} is duplicate-free but its size prior allows duplicates")
        if np.any(self.cl_fcount.max(0) > bounds):
            raise ValueError("initial partition violates a within-file size bound")
        self.bounds = bounds
        self.log_pn = prior.cluster_count.log_pmf_table(r)
        width = int(bounds.max()) + 2
        self.log_pk = np.vstack([s.log_pmf_table(width - 1) for s in prior.sizes])
        self.alpha = np.asarray(prior.alpha, dtype=np.float64)
        self.alpha0 = prior.alpha0

        self.scratch_cnt = np.zeros(r, dtype=np.int64)
        self.scratch_L = np.zeros(r, dtype=np.float64)
        deg = int(np.diff(self.nbr_ptr).max()) if r else 0
        self.touched = np.zeros(deg + 1, dtype=np.int64)
        self.weights = np.zeros(deg + 2, dtype=np.float64)
        self.targets = np.zeros(deg + 2, dtype=np.int64)
        self.canon_scratch = -np.ones(r, dtype=np.int64)

    def _check_candidates(self, labels: np.ndarray) -> None:
        """Every co-clustered pair must be a candidate pair."""
        r = len(labels)
        sizes = np.bincount(labels, minlength=r)
        same = labels[self.data.pair_i] == labels[self.data.pair_j]
        need = int((sizes * (sizes - 1) // 2).sum())
        if int(same.sum()) != need:
            raise ValueError("initial partition links records outside the candidate set")

    @property
    def n(self) -> int:
        return int(self.n_clusters[0])

    def counts(self) -> CountSummaries:
        return CountSummaries(self.a_counts.copy(), self.data.totals - self.a_counts)

    def canonical(self) -> np.ndarray:
        return _kernels.canonicalize(self.labels, self.canon_scratch)

    def check_counts(self) -> None:
        full = count_summaries(self.data, self.labels).a
        if not np.array_equal(full, self.a_counts):
            raise RuntimeError("incremental comparison counts drifted from a full recount")

    def sweep(self, pair_L: np.ndarray, order: np.ndarray, uniforms: np.ndarray) -> None:
        _kernels.sweep(self.labels, self.file_of, order, uniforms,
                       self.nbr_ptr, self.nbr_idx, self.nbr_pair, pair_L, self.pair_fp, self.levels,
                       self.a_counts, self.cl_size, self.cl_fcount, self.free_stack, self.free_top,
                       self.n_h, self.n_clusters, self.log_pn, self.log_pk, self.alpha, self.alpha0,
                       self.bounds, self.prior.flat, self.scratch_cnt, self.scratch_L, self.touched,
                       self.weights, self.targets)


def gibbs_iteration(state: GibbsState, hyper: DirichletHyper, rng: np.random.Generator,
                    random_order: bool = False, single_model: bool = False) -> ModelParams:
    """Draw parameters from the current counts, then sweep all records once."""
    params = sample_params(state.counts(), hyper, state.data.n_levels, rng, single_model)
    pair_L = pair_loglik_ratio(state.data, params)
    r = state.data.r
    uniforms = rng.random(r)
    order = rng.permutation(r) if random_order else np.arange(r)
    state.sweep(pair_L, order.astype(np.int64), uniforms)
    return params


def run_chain(cfg: GibbsConfig, data: ComparisonData, prior: PriorConfig,
              hyper: DirichletHyper | None = None, rng: np.random.Generator | None = None,
              init: MultifilePartition | None = None) -> PosteriorSamples:
    """Run one chain and return the thinned post-burn-in samples.

    ``rng`` overrides the generator seeded from ``cfg.seed``.
    """
    hyper = hyper or DirichletHyper()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    if init is None:
        if cfg.init == "singletons":
            init = init_singletons(data.file_of, data.K, prior.size_bounds)
        else:
            init = init_random_matching(data.file_of, data.K, data.candidates, rng, prior.size_bounds)
    state = GibbsState(data, prior, init)

    kept = [t for t in range(cfg.burn_in + 1, cfg.iterations + 1) if (t - cfg.burn_in - 1) % cfg.thin == 0]
    samples = np.zeros((len(kept), data.r), dtype=np.int32)
    trace = []
    m_tr, u_tr = [], []
    s = 0
    for t in range(1, cfg.iterations + 1):
        params = gibbs_iteration(state, hyper, rng, cfg.random_order, cfg.single_model)
        if cfg.checkpoint_every and t % cfg.checkpoint_every == 0:
            state.check_counts()
        store = s < len(kept) and kept[s] == t
        if cfg.trace == "all" or store:
            trace.append(state.n)
        if store:
            samples[s] = state.canonical()
            if cfg.keep_params:
                m_tr.append(params.m)
                u_tr.append(params.u)
            s += 1
        if t % 100 == 0:
            log.debug("iteration %d: n=%d", t, state.n)
    seconds = time.perf_counter() - t0
    log.info("%d iterations on %d records in %.1fs", cfg.iterations, data.r, seconds)
    return PosteriorSamples(samples, np.array(trace, dtype=np.int64), data.file_of.copy(),
                            np.array(kept, dtype=np.int64),
                            np.array(m_tr) if cfg.keep_params else None,
                            np.array(u_tr) if cfg.keep_params else None,
                            seconds, {"iterations": cfg.iterations, "burn_in": cfg.burn_in,
                                      "thin": cfg.thin, "seed": cfg.seed, "init": cfg.init})


# ---------------------------------------------------------------------------
# slow reference sweep, used to cross-check the compiled kernel


def reference_sweep(part: MultifilePartition, data: ComparisonData, prior: PriorConfig,
                    pair_L: np.ndarray, order, uniforms) -> None:
    """Pure-Python sweep built on the prior's assignment weights.

    Scores targets in the same order as the compiled sweep so that equal
    uniforms give equal partitions.
    """
    ptr, idx, pid = neighbour_csr(data.r, data.pair_i, data.pair_j)
    for step, j in enumerate(order):
        j = int(j)
        part.remove_record(j)
        nbrs = idx[ptr[j]:ptr[j + 1]]
        Ls = pair_L[pid[ptr[j]:ptr[j + 1]]]
        nbr_set = set(nbrs.tolist())
        prior_w = assignment_log_weights(part, j, prior, allowed=lambda i, jj: i in nbr_set)
        targets, weights = [NEW], [prior_w[NEW]]
        seen = {}
        for i, L in zip(nbrs.tolist(), Ls.tolist()):
            c = int(part.labels[i])
            if c not in seen:
                seen[c] = 0.0
                targets.append(c)
            seen[c] += L
        for c in targets[1:]:
            weights.append(prior_w[c] + seen[c] if prior_w[c] > -np.inf else -np.inf)
        w = np.array(weights)
        keep = w > w.max() - _kernels.PRUNE
        p = np.where(keep, np.exp(w - w.max()), 0.0)
        cum = np.cumsum(p)
        choice = int(np.searchsorted(cum, uniforms[step] * cum[-1], side="right"))
        part.add_record(j, targets[min(choice, len(targets) - 1)])
