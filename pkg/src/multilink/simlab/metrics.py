"""Pairwise precision/recall, abstention and cluster-count error of an estimate."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

ABSTAIN = -1


def _pairs_within(keys: np.ndarray) -> int:
    if len(keys) == 0:
        return 0
    _, cnt = np.unique(keys, axis=0, return_counts=True)
    return int((cnt * (cnt - 1) // 2).sum())


@dataclass
class Metrics:
    precision: float      # nan when no pair is declared coreferent
    recall: float         # nan when no decided pair is truly coreferent
    abstention: float
    n_hat: int
    n_true: int
    true_matches: int
    false_matches: int
    false_non_matches: int

    @property
    def n_error(self) -> int:
        return self.n_hat - self.n_true

    def row(self) -> dict:
        d = asdict(self)
        d["n_error"] = self.n_error
        return d


def score(Z, Zhat) -> Metrics:
    """Compare decision vector ``Zhat`` (``-1`` = abstain) with true labels ``Z``.

    Pair counts run over pairs of non-abstained records.
    """
    Z = np.asarray(Z)
    Zhat = np.asarray(Zhat)
    dec = Zhat != ABSTAIN
    z, zh = Z[dec], Zhat[dec]
    tm = _pairs_within(np.column_stack([z, zh]))
    declared = _pairs_within(zh[:, None])
    true = _pairs_within(z[:, None])
    return Metrics(
        precision=tm / declared if declared else math.nan,
        recall=tm / true if true else math.nan,
        abstention=float(np.mean(~dec)) if len(Z) else 0.0,
        n_hat=int(len(np.unique(zh))),
        n_true=int(len(np.unique(Z))),
        true_matches=tm,
        false_matches=declared - tm,
        false_non_matches=true - tm,
    )


def percentiles(values) -> dict:
    """Median, 2nd and 98th percentiles over the non-missing values."""
    v = np.asarray([x for x in values if x is not None and not math.isnan(x)], dtype=float)
    if v.size == 0:
        return {"median": math.nan, "p02": math.nan, "p98": math.nan, "count": 0}
    p02, med, p98 = np.percentile(v, [2, 50, 98])
    return {"median": float(med), "p02": float(p02), "p98": float(p98), "count": int(v.size)}


def aggregate(rows: list[dict]) -> dict:
    """Replicate summary: percentile bands per metric plus mean error and mean squared error of n-hat."""
    out = {k: percentiles([r[k] for r in rows]) for k in ("precision", "recall", "abstention")}
    err = np.array([r["n_error"] for r in rows], dtype=float)
    out["n_bias"] = float(err.mean()) if err.size else math.nan
    out["n_mse"] = float((err ** 2).mean()) if err.size else math.nan
    out["replicates"] = len(rows)
    return out
