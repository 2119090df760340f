"""Structured prior over multifile partitions.

The prior is built from a prior on the number of clusters, a
Dirichlet-multinomial prior on the overlap table, per-file priors on
within-file cluster sizes, uniform within-file partitions given the sizes and
a uniform K-partite matching given the overlap table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .partition import NEW, MultifilePartition, pattern_string

NEG_INF = -np.inf


# ---------------------------------------------------------------------------
# component priors


@dataclass(frozen=True)
class ClusterCountPrior:
    """Prior on the number of clusters ``n``.

    kind ``"uniform"`` is uniform on ``1..upper`` (``upper=None`` means the
    total record count), ``"negbin"`` is a negative binomial with parameters
    ``a``, ``q`` truncated to the positive integers, and ``"pmf"`` takes
    explicit probabilities for ``n = 1, 2, ...``.
    """

    kind: str = "uniform"
    upper: int | None = None
    a: float | None = None
    q: float | None = None
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("uniform", "negbin", "pmf"):
            raise ValueError(f"unknown cluster-count prior {self.kind!r}")
        if self.kind == "negbin":
            if self.a is None or self.q is None or self.a <= 0 or not 0 < self.q < 1:
                raise ValueError("negative-binomial prior needs a > 0 and 0 < q < 1")
        if self.kind == "pmf":
            p = np.asarray(self.probs, dtype=float)
            if p.size == 0 or np.any(p < 0) or p.sum() <= 0:
                raise ValueError("pmf prior needs nonnegative probabilities with positive sum")

    @classmethod
    def negbin_for(cls, r: int) -> "ClusterCountPrior":
        a, q = negbin_params(r)
        return cls("negbin", a=a, q=q)

    def log_pmf(self, n: int, r: int) -> float:
        """log P(n); ``r`` resolves the default uniform upper bound."""
        if n < 1:
            return NEG_INF
        if self.kind == "uniform":
            U = self.upper if self.upper is not None else r
            return -math.log(U) if n <= U else NEG_INF
        if self.kind == "negbin":
            a, q = self.a, self.q
            log_norm = math.log1p(-(1 - q) ** a)
            return (math.lgamma(n + a) - math.lgamma(n + 1) - math.lgamma(a)
                    + a * math.log1p(-q) + n * math.log(q) - log_norm)
        p = np.asarray(self.probs, dtype=float)
        p = p / p.sum()
        return math.log(p[n - 1]) if n <= len(p) and p[n - 1] > 0 else NEG_INF

    def log_pmf_table(self, r: int) -> np.ndarray:
        """log P(n) for n = 0 .. r + 1."""
        return np.array([self.log_pmf(n, r) for n in range(r + 2)])

    def support_max(self, r: int | None = None) -> int | None:
        if self.kind == "uniform":
            return self.upper if self.upper is not None else r
        if self.kind == "pmf":
            return len(self.probs)
        return None

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "negbin":
            while True:
                n = int(rng.negative_binomial(self.a, 1 - self.q))
                if n >= 1:
                    return n
        if self.kind == "uniform":
            if self.upper is None:
                raise ValueError("sampling a uniform cluster-count prior needs an explicit upper bound")
            return int(rng.integers(1, self.upper + 1))
        p = np.asarray(self.probs, dtype=float)
        return int(rng.choice(len(p), p=p / p.sum())) + 1


def negbin_params(r: int) -> tuple[float, float]:
    """(a, q) whose untruncated negative binomial has mean = sd = r / 2."""
    if r <= 2:
        raise ValueError(f"negative-binomial moment matching needs r > 2, got r={r}")
    return r / (r - 2), 1 - 2 / r


@dataclass(frozen=True)
class ClusterSizePrior:
    """Within-file cluster-size distribution on ``1..upper``.

    ``"point"`` puts all mass on size one (a duplicate-free file),
    ``"poisson"`` is a Poisson(``mean``) truncated to ``1..upper`` and
    ``"pmf"`` takes probabilities for sizes ``1..len(probs)``.
    """

    kind: str = "point"
    mean: float = 1.0
    upper: int = 1
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "point":
            object.__setattr__(self, "upper", 1)
        elif self.kind == "poisson":
            if self.mean <= 0 or self.upper < 1:
                raise ValueError("truncated Poisson needs mean > 0 and upper >= 1")
        elif self.kind == "pmf":
            p = np.asarray(self.probs, dtype=float)
            if p.size == 0 or np.any(p < 0) or p[0] <= 0:
                raise ValueError("size pmf needs nonnegative probabilities with p(1) > 0")
            object.__setattr__(self, "upper", len(p))
        else:
            raise ValueError(f"unknown cluster-size prior {self.kind!r}")

    @property
    def duplicate_free(self) -> bool:
        return self.upper == 1

    def pmf(self) -> np.ndarray:
        """Probabilities of sizes ``1..upper``."""
        if self.kind == "point":
            return np.array([1.0])
        if self.kind == "poisson":
            s = np.arange(1, self.upper + 1)
            logw = s * math.log(self.mean) - gammaln(s + 1)
            w = np.exp(logw - logw.max())
            return w / w.sum()
        p = np.asarray(self.probs, dtype=float)
        return p / p.sum()

    def log_pmf_table(self, size: int) -> np.ndarray:
        """log p(s) for s = 0 .. size (-inf outside the support)."""
        out = np.full(size + 1, NEG_INF)
        p = self.pmf()
        with np.errstate(divide="ignore"):
            lp = np.log(p)
        m = min(size, self.upper)
        out[1:m + 1] = lp[:m]
        return out


def flat_cells(K: int) -> np.ndarray:
    alpha = np.ones(2 ** K)
    alpha[0] = 0.0
    return alpha


def sparse_cells(K: int) -> np.ndarray:
    alpha = np.full(2 ** K, 1.0 / (2 ** K - 1))
    alpha[0] = 0.0
    return alpha


def default_alpha(K: int) -> np.ndarray:
    return flat_cells(K) if K <= 3 else sparse_cells(K)


def alpha_from_patterns(values: Mapping[str, float], K: int) -> np.ndarray:
    """Overlap hyperparameters from ``{'101': 2.0, ...}`` style pattern keys."""
    alpha = np.zeros(2 ** K)
    for key, v in values.items():
        if len(key) != K or set(key) - {"0", "1"} or "1" not in key:
            raise ValueError(f"bad inclusion pattern {key!r} for K={K}")
        alpha[sum(1 << k for k, ch in enumerate(key) if ch == "1")] = float(v)
    return alpha


def informative_alpha(p: Mapping[str, float], kappa: float, K: int) -> np.ndarray:
    """``kappa * p_h`` per cell; cells with ``p_h = 0`` get a prior count of one."""
    alpha = alpha_from_patterns(p, K) * kappa
    alpha[1:][alpha[1:] == 0] = 1.0
    return alpha


@dataclass(frozen=True)
class PriorConfig:
    """Complete prior configuration.  ``alpha[h]`` is indexed by integer pattern (alpha[0] unused)."""

    sizes: tuple[ClusterSizePrior, ...]
    cluster_count: ClusterCountPrior = ClusterCountPrior()
    alpha: np.ndarray | None = None
    flat: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(self.sizes))
        K = len(self.sizes)
        alpha = default_alpha(K) if self.alpha is None else np.asarray(self.alpha, dtype=float)
        if alpha.shape != (2 ** K,):
            raise ValueError(f"alpha needs {2 ** K - 1} cells for K={K}")
        if np.any(alpha[1:] <= 0):
            raise ValueError("overlap-table hyperparameters must be strictly positive")
        alpha = alpha.copy()
        alpha[0] = 0.0
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def duplicate_free(cls, K: int, **kw) -> "PriorConfig":
        return cls(tuple(ClusterSizePrior("point") for _ in range(K)), **kw)

    @property
    def K(self) -> int:
        return len(self.sizes)

    @property
    def alpha0(self) -> float:
        return float(self.alpha[1:].sum())

    @property
    def size_bounds(self) -> list[int]:
        return [s.upper for s in self.sizes]


# ---------------------------------------------------------------------------
# density and counting


def count_kpartite(n_table: Mapping[int, int] | Sequence[int], K: int | None = None) -> int:
    """Number of K-partite matchings with the given overlap table (exact integer).

    ``n_table`` maps integer inclusion patterns to counts, or is a sequence
    indexed by pattern.
    """
    table = dict(n_table) if isinstance(n_table, Mapping) else dict(enumerate(n_table))
    if K is None:
        K = max(max(table, default=1).bit_length(), 1)
    num = 1
    for k in range(K):
        n_k = sum(c for h, c in table.items() if h >> k & 1)
        num *= math.factorial(n_k)
    den = 1
    for h, c in table.items():
        if h:
            den *= math.factorial(c)
    return num // den


def log_count_kpartite(n_h: np.ndarray, K: int) -> float:
    h = np.arange(len(n_h))
    n_k = np.array([n_h[(h >> k) & 1 == 1].sum() for k in range(K)])
    return float(gammaln(n_k + 1).sum() - gammaln(n_h[1:] + 1).sum())


def log_prior_density(C: MultifilePartition, cfg: PriorConfig) -> float:
    """log of the structured prior density of ``C`` (including the 1/r_k! terms)."""
    if C.K != cfg.K:
        raise ValueError("partition and prior disagree on the number of files")
    log_p = [s.log_pmf_table(max(C.r, 1)) for s in cfg.sizes]
    for fc in C.fcount.values():
        for k in range(C.K):
            if fc[k] > cfg.sizes[k].upper:
                return NEG_INF
    if cfg.flat:
        return 0.0
    n = C.n
    lp = cfg.cluster_count.log_pmf(n, C.r)
    if lp == NEG_INF:
        return NEG_INF
    a = cfg.alpha
    lp += math.lgamma(n + 1) + math.lgamma(cfg.alpha0) - math.lgamma(n + cfg.alpha0)
    lp += float(np.sum(gammaln(C.n_h[1:] + a[1:]) - gammaln(a[1:])))
    for k, r_k in enumerate(C.file_sizes()):
        lp -= math.lgamma(r_k + 1)
        for fc in C.fcount.values():
            d = int(fc[k])
            if d:
                lp += math.lgamma(d + 1) + log_p[k][d]
    return float(lp)


def log_dm_pmf(n_h: Sequence[int], alpha: np.ndarray) -> float:
    """Dirichlet-multinomial log pmf of an overlap table (index 0 ignored)."""
    n_h = np.asarray(n_h, dtype=float)[1:]
    a = np.asarray(alpha, dtype=float)[1:]
    n = n_h.sum()
    return float(math.lgamma(n + 1) + math.lgamma(a.sum()) - math.lgamma(n + a.sum())
                 + np.sum(gammaln(n_h + a) - gammaln(n_h + 1) - gammaln(a)))


def _tables(n: int, cells: int):
    """All tuples of ``cells`` nonnegative integers summing to ``n``."""
    if cells == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _tables(n - first, cells - 1):
            yield (first,) + rest


def log_size_marginal(file_sizes: Sequence[int], cfg: PriorConfig) -> float:
    """log P(r'_1 = r_1, ..., r'_K = r_K) under the generative process.

    Sums over the number of clusters, all overlap tables and the convolution
    powers of each size distribution.  Exponential in the record count; meant
    for small normalisation checks.
    """
    K = cfg.K
    r = int(sum(file_sizes))
    # conv[k][m][s]: P(sum of m iid sizes == s) for s <= r_k
    conv = []
    for k in range(K):
        rk = file_sizes[k]
        p = np.zeros(rk + 1)
        pm = cfg.sizes[k].pmf()
        p[1:min(rk, len(pm)) + 1] = pm[:rk]
        rows = [np.eye(1, rk + 1, 0)[0]]
        for _ in range(rk):
            rows.append(np.convolve(rows[-1], p)[:rk + 1])
        conv.append(rows)
    total = 0.0
    for n in range(1, r + 1):
        lpn = cfg.cluster_count.log_pmf(n, r)
        if lpn == NEG_INF:
            continue
        for t in _tables(n, 2 ** K - 1):
            n_h = (0,) + t
            prob = 1.0
            for k in range(K):
                n_k = sum(n_h[h] for h in range(1, 2 ** K) if h >> k & 1)
                prob *= conv[k][n_k][file_sizes[k]] if n_k <= file_sizes[k] else 0.0
                if prob == 0.0:
                    break
            if prob > 0:
                total += math.exp(lpn + log_dm_pmf(n_h, cfg.alpha)) * prob
    return math.log(total) if total > 0 else NEG_INF


# ---------------------------------------------------------------------------
# generative sampling


def sample_prior(cfg: PriorConfig, rng: np.random.Generator, n: int | None = None) -> MultifilePartition:
    """Draw a multifile partition (of a random number of records) from the prior.

    ``n`` fixes the number of clusters instead of drawing it.
    """
    K = cfg.K
    if n is None:
        n = cfg.cluster_count.sample(rng)
    H = np.arange(1, 2 ** K)
    q = rng.dirichlet(cfg.alpha[1:])
    n_h = np.zeros(2 ** K, dtype=np.int64)
    n_h[1:] = rng.multinomial(n, q)

    # within-file cluster sizes and random allocation of records to them
    file_clusters = []
    offset = 0
    file_of = []
    for k in range(K):
        n_k = int(n_h[1:][(H >> k) & 1 == 1].sum())
        pm = cfg.sizes[k].pmf()
        d = rng.choice(len(pm), size=n_k, p=pm) + 1 if n_k else np.zeros(0, dtype=np.int64)
        r_k = int(d.sum())
        perm = offset + rng.permutation(r_k)
        chunks = np.split(perm, np.cumsum(d)[:-1]) if n_k else []
        file_clusters.append(chunks)
        file_of.extend([k] * r_k)
        offset += r_k

    # uniform K-partite matching with overlap table n_h
    labels = np.empty(offset, dtype=np.int64)
    slots = {}  # (h, position) -> entity id
    for k in range(K):
        order = rng.permutation(len(file_clusters[k]))
        pos = 0
        for h in H:
            if not h >> k & 1:
                continue
            for t in range(n_h[h]):
                ent = slots.setdefault((int(h), t), len(slots))
                labels[file_clusters[k][order[pos]]] = ent
                pos += 1
    bounds = cfg.size_bounds
    return MultifilePartition.from_labels(labels, np.array(file_of, dtype=np.int64), K, bounds)


# ---------------------------------------------------------------------------
# Gibbs assignment weights


def assignment_log_weights(C: MultifilePartition, j: int, cfg: PriorConfig,
                           allowed=None) -> dict[int, float]:
    """Unnormalised log prior weights for placing removed record ``j``.

    Keys are existing cluster ids plus ``NEW``.  ``allowed(i, j)`` may veto
    joining any cluster containing a record ``i``.
    """
    if C.labels[j] != NEW:
        raise ValueError(f"record {j} must be removed first")
    k = int(C.file_of[j])
    size_k = cfg.sizes[k]
    log_p = size_k.log_pmf_table(size_k.upper + 1)
    bit = 1 << k
    a = cfg.alpha
    n = C.n
    out: dict[int, float] = {}

    if cfg.flat:
        out[NEW] = 0.0
    else:
        r = C.r
        if n == 0:
            ratio = 0.0
        else:
            lo, hi = cfg.cluster_count.log_pmf(n, r), cfg.cluster_count.log_pmf(n + 1, r)
            ratio = hi - lo if hi > NEG_INF else NEG_INF
        out[NEW] = (ratio + math.log(n + 1) + math.log(C.n_h[bit] + a[bit])
                    - math.log(n + cfg.alpha0) + log_p[1])

    for c, fc in C.fcount.items():
        if allowed is not None and not all(allowed(i, j) for i in C.members[c]):
            out[c] = NEG_INF
            continue
        m = int(fc[k])
        if m + 1 > size_k.upper:
            out[c] = NEG_INF
        elif cfg.flat:
            out[c] = 0.0
        elif m == 0:
            h = C.pattern[c]
            out[c] = math.log(C.n_h[h | bit] + a[h | bit]) - math.log(C.n_h[h] + a[h] - 1) + log_p[1]
        else:
            out[c] = math.log(m + 1) + log_p[m + 1] - log_p[m]
    return out


def describe(cfg: PriorConfig) -> dict:
    """Plain-dict summary for run metadata."""
    return {
        "flat": cfg.flat,
        "cluster_count": {"kind": cfg.cluster_count.kind, "upper": cfg.cluster_count.upper,
                          "a": cfg.cluster_count.a, "q": cfg.cluster_count.q},
        "alpha": {pattern_string(h, cfg.K): float(cfg.alpha[h]) for h in range(1, 2 ** cfg.K)},
        "sizes": [{"kind": s.kind, "mean": s.mean, "upper": s.upper} for s in cfg.sizes],
    }
