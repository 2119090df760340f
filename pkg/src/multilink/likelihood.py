"""Comparison-data likelihood with per-file-pair m/u level probabilities.

Count arrays have shape ``(n_file_pairs, F, L_max)``.  Fields with fewer than
``L_max`` levels leave the trailing slots at zero count; their parameter
entries are padding and never enter a likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .comparison import ComparisonData, level_histogram

_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class DirichletHyper:
    """Dirichlet prior parameters for m (``mu``) and u (``nu``).

    Scalars broadcast everywhere; arrays of shape ``(F, L_max)`` are
    broadcast across file pairs.
    """

    mu: float | np.ndarray = 1.0
    nu: float | np.ndarray = 1.0

    def arrays(self, shape: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray]:
        mu = np.broadcast_to(np.asarray(self.mu, dtype=float), shape).copy()
        nu = np.broadcast_to(np.asarray(self.nu, dtype=float), shape).copy()
        if np.any(mu <= 0) or np.any(nu <= 0):
            raise ValueError("Dirichlet hyperparameters must be positive")
        return mu, nu


@dataclass
class CountSummaries:
    a: np.ndarray   # observed level counts among coreferent pairs
    b: np.ndarray   # ... among non-coreferent pairs


@dataclass
class ModelParams:
    m: np.ndarray
    u: np.ndarray
    single_model: bool = False

    def log_ratio(self) -> np.ndarray:
        return np.log(self.m) - np.log(self.u)


def level_mask(n_levels: np.ndarray, max_levels: int) -> np.ndarray:
    """(F, L_max) boolean mask of the levels each field actually has."""
    return np.arange(max_levels)[None, :] < np.asarray(n_levels)[:, None]


def coreferent_mask(data: ComparisonData, labels) -> np.ndarray:
    labels = np.asarray(labels)
    return labels[data.pair_i] == labels[data.pair_j]


def count_summaries(data: ComparisonData, labels) -> CountSummaries:
    """a/b level counts under the partition given by ``labels``.

    Only candidate pairs can be coreferent; every other modeled pair enters
    through the precomputed totals and so lands in ``b``.
    """
    same = coreferent_mask(data, labels)
    a = level_histogram(data.pair_fp[same], data.levels[same], len(data.file_pairs), data.max_levels)
    return CountSummaries(a, data.totals - a)


def log_likelihood(counts: CountSummaries, params: ModelParams) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        la = np.where(counts.a > 0, counts.a * np.log(params.m), 0.0)
        lb = np.where(counts.b > 0, counts.b * np.log(params.u), 0.0)
    return float(la.sum() + lb.sum())


def _dirichlet(alpha: np.ndarray, mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Normalized gamma draws along the last axis, restricted to ``mask``."""
    g = rng.standard_gamma(np.where(mask, alpha, 1.0))
    g = np.where(mask, np.maximum(g, _TINY), 0.0)
    out = g / g.sum(axis=-1, keepdims=True)
    out = np.where(mask, np.maximum(out, _TINY), 1.0)
    return out


def sample_params(counts: CountSummaries, hyper: DirichletHyper, n_levels: np.ndarray,
                  rng: np.random.Generator, single_model: bool = False) -> ModelParams:
    """Draw m ~ Dir(a + mu) and u ~ Dir(b + nu) independently per file pair and field.

    Padding slots of fields with fewer levels are set to 1 so their log is 0.
    """
    a, b = counts.a, counts.b
    mu, nu = hyper.arrays(a.shape)
    if single_model:
        a = a.sum(axis=0, keepdims=True)
        b = b.sum(axis=0, keepdims=True)
        mu, nu = mu[:1], nu[:1]
    mask = np.broadcast_to(level_mask(n_levels, a.shape[-1]), a.shape)
    m = _dirichlet(a + mu, mask, rng)
    u = _dirichlet(b + nu, mask, rng)
    if single_model:
        m = np.repeat(m, counts.a.shape[0], axis=0)
        u = np.repeat(u, counts.a.shape[0], axis=0)
    return ModelParams(m, u, single_model)


def pair_loglik_ratio(data: ComparisonData, params: ModelParams) -> np.ndarray:
    """log L_ij for every candidate pair: sum over observed fields of log(m/u) at the observed level."""
    lr = params.log_ratio()
    out = np.zeros(data.n_pairs)
    for f in range(data.F):
        lv = data.levels[:, f].astype(np.int64)
        obs = lv >= 0
        out[obs] += lr[data.pair_fp[obs], f, lv[obs]]
    return out


def _log_beta(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Multivariate log-beta along the last axis, over masked entries."""
    return (np.where(mask, gammaln(np.where(mask, x, 1.0)), 0.0).sum(-1)
            - gammaln(np.where(mask, x, 0.0).sum(-1)))


def integrated_log_marginal(counts: CountSummaries, hyper: DirichletHyper, n_levels: np.ndarray,
                            single_model: bool = False) -> float:
    """log p(comparisons | partition) with m and u integrated out."""
    a, b = counts.a, counts.b
    mu, nu = hyper.arrays(a.shape)
    if single_model:
        a, b = a.sum(0, keepdims=True), b.sum(0, keepdims=True)
        mu, nu = mu[:1], nu[:1]
    mask = np.broadcast_to(level_mask(n_levels, a.shape[-1]), a.shape)
    total = (_log_beta(a + mu, mask) - _log_beta(mu, mask)
             + _log_beta(b + nu, mask) - _log_beta(nu, mask))
    return float(total.sum())
