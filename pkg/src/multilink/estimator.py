"""Loss-based point estimates of the coreference partition, with an abstain option.

Decisions are label vectors where ``-1`` marks an abstained record.  For a
decided record ``i`` the loss looks only at other decided records: if ``i``
is left unlinked it costs ``fnm`` when it truly has a partner; if it is
linked it costs ``fm1`` when it truly has no partner and ``fm2`` when some
true partner was left out of its estimated cluster.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from numba import njit

from .comparison import Pairs, record_components
from .sampler import PosteriorSamples

ABSTAIN = -1
TIE_TOL = 1e-9
EXHAUSTIVE_MAX = 12


@dataclass(frozen=True)
class LossSpec:
    fnm: float = 1.0
    fm1: float = 1.0
    fm2: float = 2.0
    abstain: float = math.inf

    def __post_init__(self):
        for name in ("fnm", "fm1", "fm2", "abstain"):
            if not getattr(self, name) > 0:
                raise ValueError(f"loss weight {name} must be positive")

    @property
    def partial(self) -> bool:
        return math.isfinite(self.abstain)


# ---------------------------------------------------------------------------
# loss and expected loss


def _group_sizes(keys: np.ndarray) -> np.ndarray:
    """For each row, how many rows share its key (itself included)."""
    _, inv, cnt = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    return cnt[inv.reshape(-1)]


def record_losses(Z, Zhat, spec: LossSpec) -> np.ndarray:
    """Per-record loss of decision ``Zhat`` against truth ``Z``."""
    Z = np.asarray(Z)
    Zhat = np.asarray(Zhat)
    out = np.where(Zhat == ABSTAIN, spec.abstain, 0.0)
    dec = np.flatnonzero(Zhat != ABSTAIN)
    if len(dec) == 0:
        return out
    z, zh = Z[dec], Zhat[dec]
    est = _group_sizes(zh[:, None]) > 1
    tru = _group_sizes(z[:, None]) > 1
    both = _group_sizes(np.column_stack([z, zh]))
    missed = _group_sizes(z[:, None]) > both
    li = np.where(~est, spec.fnm * tru, spec.fm1 * ~tru + spec.fm2 * missed)
    out[dec] = li
    return out


def loss(Z, Zhat, spec: LossSpec = LossSpec()) -> float:
    return float(record_losses(Z, Zhat, spec).sum())


def expected_loss(Zhat, samples, spec: LossSpec = LossSpec()) -> float:
    """Posterior expected loss of ``Zhat`` approximated by the stored samples.

    ``samples`` is a :class:`PosteriorSamples` or a (T, r) label array.
    """
    labels = samples.labels if isinstance(samples, PosteriorSamples) else np.asarray(samples)
    if labels.shape[0] == 0:
        raise ValueError("no stored samples")
    return float(np.mean([loss(z, Zhat, spec) for z in labels]))


# ---------------------------------------------------------------------------
# coreference probabilities and components


def coclustered_pairs(labels: np.ndarray) -> Pairs:
    """Every pair of records sharing a cluster in at least one sample."""
    seen = set()
    for row in labels:
        order = np.argsort(row, kind="stable")
        srt = row[order]
        for grp in np.split(order, np.flatnonzero(np.diff(srt)) + 1):
            if len(grp) > 1:
                grp = np.sort(grp)
                seen.update(combinations(grp.tolist(), 2))
    return Pairs.from_iterable(seen)


def pairwise_probs(samples, pairs: Pairs | None = None, chunk: int = 200_000) -> tuple[Pairs, np.ndarray]:
    """Sample frequency of ``Z_i == Z_j`` for each pair (default: all pairs ever co-clustered)."""
    labels = samples.labels if isinstance(samples, PosteriorSamples) else np.asarray(samples)
    if pairs is None:
        pairs = coclustered_pairs(labels)
    probs = np.zeros(len(pairs))
    for s in range(0, len(pairs), chunk):
        i, j = pairs.i[s:s + chunk], pairs.j[s:s + chunk]
        probs[s:s + chunk] = (labels[:, i] == labels[:, j]).mean(axis=0)
    return pairs, probs


def components(pairs: Pairs, probs: np.ndarray, r: int, delta: float) -> np.ndarray:
    """Component label per record for the graph with edges ``prob > delta``."""
    keep = probs > delta
    return record_components(Pairs(pairs.i[keep], pairs.j[keep]), r)


def _largest(pairs: Pairs, probs: np.ndarray, r: int, delta: float) -> int:
    return int(np.bincount(components(pairs, probs, r, delta)).max()) if r else 0


def select_delta(pairs: Pairs, probs: np.ndarray, r: int, max_component: int) -> float:
    """Smallest value in {0} and the observed probabilities keeping every component within the bound."""
    if max_component < 1:
        raise ValueError("component bound must be at least 1")
    cands = np.unique(np.concatenate([[0.0], probs]))
    lo, hi = 0, len(cands) - 1           # the largest candidate always leaves singletons
    while lo < hi:
        mid = (lo + hi) // 2
        if _largest(pairs, probs, r, cands[mid]) <= max_component:
            hi = mid
        else:
            lo = mid + 1
    return float(cands[lo])


# ---------------------------------------------------------------------------
# component search


def partner_masks(sub: np.ndarray) -> np.ndarray:
    """(T, s) bitmasks: bit j of entry (t, i) is set iff i and j share a label in row t (j != i)."""
    T, s = sub.shape
    eq = sub[:, :, None] == sub[:, None, :]
    eq[:, np.arange(s), np.arange(s)] = False
    weights = np.left_shift(np.uint64(1), np.arange(s, dtype=np.uint64))
    return (eq.astype(np.uint64) * weights[None, None, :]).sum(axis=2, dtype=np.uint64)


@njit(cache=True)
def _value(tru, w, est_row, om, s, T, fnm, fm1, fm2, lam_a):
    full = np.uint64(0)
    nab = 0
    for i in range(s):
        if (om >> np.uint64(i)) & np.uint64(1):
            nab += 1
        else:
            full |= np.uint64(1) << np.uint64(i)
    tot = 0.0
    for u in range(tru.shape[0]):
        l = 0.0
        for i in range(s):
            if not (full >> np.uint64(i)) & np.uint64(1):
                continue
            e = est_row[i] & full
            tp = tru[u, i] & full
            if e == 0:
                if tp != 0:
                    l += fnm
            elif tp == 0:
                l += fm1
            elif tp & ~e:
                l += fm2
        tot += w[u] * l
    return lam_a * nab + tot / T


@njit(cache=True)
def _search(tru, w, est, omegas, s, T, fnm, fm1, fm2, lam_a):
    best = np.inf
    be, bo = 0, 0
    for e in range(est.shape[0]):
        for mi in range(omegas.shape[0]):
            v = _value(tru, w, est[e], omegas[mi], s, T, fnm, fm1, fm2, lam_a)
            if v < best - 1e-9:
                best, be, bo = v, e, mi
    return best, be, bo


def _value_py(tru, w, est_row, om, s, T, spec: LossSpec, lam_a: float) -> float:
    """Arbitrary-width version of the compiled evaluation (Python ints as bitsets)."""
    full = ((1 << s) - 1) & ~om
    tot = 0.0
    for row, wt in zip(tru, w):
        l = 0.0
        for i in range(s):
            if not full >> i & 1:
                continue
            e, tp = est_row[i] & full, row[i] & full
            if e == 0:
                l += spec.fnm if tp else 0.0
            elif tp == 0:
                l += spec.fm1
            elif tp & ~e:
                l += spec.fm2
        tot += wt * l
    return lam_a * bin(om).count("1") + tot / T


def abstain_subsets(s: int) -> list[int]:
    """Bitmasks of all subsets of ``range(s)`` by size, then lexicographically."""
    out = []
    for k in range(s + 1):
        for combo in combinations(range(s), k):
            out.append(sum(1 << i for i in combo))
    return out


@dataclass
class ComponentResult:
    members: np.ndarray
    labels: np.ndarray        # local cluster ids, -1 = abstain
    value: float
    sample_index: int         # stored-sample row whose restriction was chosen


def _decode(est_row, om: int, s: int) -> np.ndarray:
    out = -np.ones(s, dtype=np.int64)
    nxt = 0
    for i in range(s):
        if om >> i & 1 or out[i] >= 0:
            continue
        out[i] = nxt
        for j in range(i + 1, s):
            if int(est_row[i]) >> j & 1 and not om >> j & 1:
                out[j] = nxt
        nxt += 1
    return out


def minimize_component(sub: np.ndarray, spec: LossSpec) -> ComponentResult:
    """Best restriction of a stored sample (and abstain subset) for one component.

    ``sub`` holds the component's columns of the stored label array.
    """
    T, s = sub.shape
    if s > 64:
        return _minimize_wide(sub, spec)
    masks = partner_masks(sub)
    uniq, first, counts = np.unique(masks, axis=0, return_index=True, return_counts=True)
    order = np.argsort(first, kind="stable")
    est = np.ascontiguousarray(uniq[order])
    first = first[order]
    tru, w = np.ascontiguousarray(uniq), counts.astype(np.float64)
    lam_a = spec.abstain if spec.partial else 0.0
    if not spec.partial:
        omegas = np.zeros(1, dtype=np.uint64)
    elif s <= EXHAUSTIVE_MAX:
        omegas = np.array(abstain_subsets(s), dtype=np.uint64)
    else:
        return _greedy(tru, w, est, first, s, T, spec)
    val, e, o = _search(tru, w, est, omegas, s, T, spec.fnm, spec.fm1, spec.fm2, lam_a)
    om = int(omegas[o])
    return ComponentResult(np.arange(s), _decode(est[e], om, s), float(val), int(first[e]))


def _greedy(tru, w, est, first, s, T, spec: LossSpec) -> ComponentResult:
    """Greedy abstention for components too large to enumerate.

    For each candidate restriction, records are considered in decreasing
    order of their own expected loss and abstained one at a time while the
    total keeps falling.
    """
    lam = spec.abstain
    best = (math.inf, 0, 0)
    for e in range(est.shape[0]):
        om = 0
        cur = _value(tru, w, est[e], np.uint64(0), s, T, spec.fnm, spec.fm1, spec.fm2, lam)
        contrib = np.empty(s)
        for i in range(s):
            contrib[i] = _record_term(tru, w, est[e], i, s, T, spec)
        for i in np.argsort(-contrib, kind="stable"):
            trial = om | (1 << int(i))
            v = _value(tru, w, est[e], np.uint64(trial), s, T, spec.fnm, spec.fm1, spec.fm2, lam)
            if v < cur - TIE_TOL:
                om, cur = trial, v
            else:
                break
        if cur < best[0] - TIE_TOL:
            best = (cur, e, om)
    val, e, om = best
    return ComponentResult(np.arange(s), _decode(est[e], om, s), float(val), int(first[e]))


def _record_term(tru, w, est_row, i, s, T, spec: LossSpec) -> float:
    e = int(est_row[i])
    tot = 0.0
    for row, wt in zip(tru, w):
        tp = int(row[i])
        if e == 0:
            tot += wt * (spec.fnm if tp else 0.0)
        elif tp == 0:
            tot += wt * spec.fm1
        elif tp & ~e:
            tot += wt * spec.fm2
    return tot / T


def _minimize_wide(sub: np.ndarray, spec: LossSpec) -> ComponentResult:
    """Fallback for components wider than 64 records (no abstention search)."""
    T, s = sub.shape
    rows = []
    for t in range(T):
        row = []
        for i in range(s):
            m = 0
            for j in np.flatnonzero(sub[t] == sub[t, i]).tolist():
                if j != i:
                    m |= 1 << j
            row.append(m)
        rows.append(tuple(row))
    counts = Counter(rows)
    tru = list(counts)
    w = [counts[r] for r in tru]
    best, be, bt = math.inf, None, 0
    seen = set()
    for t, row in enumerate(rows):
        if row in seen:
            continue
        seen.add(row)
        v = _value_py(tru, w, row, 0, s, T, spec, 0.0)
        if v < best - TIE_TOL:
            best, be, bt = v, row, t
    labels = -np.ones(s, dtype=np.int64)
    nxt = 0
    for i in range(s):
        if labels[i] < 0:
            labels[i] = nxt
            for j in range(s):
                if be[i] >> j & 1:
                    labels[j] = nxt
            nxt += 1
    return ComponentResult(np.arange(s), labels, float(best), bt)


# ---------------------------------------------------------------------------
# full estimate


@dataclass
class LinkageEstimate:
    labels: np.ndarray                    # canonical labels, -1 = abstain
    delta: float
    expected_loss: float
    component_sizes: list[int]
    loss_spec: LossSpec
    meta: dict = field(default_factory=dict)

    @property
    def abstained(self) -> np.ndarray:
        return np.flatnonzero(self.labels == ABSTAIN)

    @property
    def abstention_rate(self) -> float:
        return float(np.mean(self.labels == ABSTAIN)) if len(self.labels) else 0.0

    def write_csv(self, path, file_of) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["global_index", "file", "decision"])
            for g, (lab, k) in enumerate(zip(self.labels.tolist(), np.asarray(file_of).tolist())):
                w.writerow([g + 1, k + 1, "ABSTAIN" if lab == ABSTAIN else lab + 1])

    def summary(self) -> dict:
        hist = Counter(self.component_sizes)
        return {
            "delta": self.delta,
            "expected_loss": self.expected_loss,
            "component_size_histogram": {str(k): hist[k] for k in sorted(hist)},
            "n_records": int(len(self.labels)),
            "n_abstained": int(len(self.abstained)),
            "n_clusters": int(len(np.unique(self.labels[self.labels != ABSTAIN]))),
            "loss": {"fnm": self.loss_spec.fnm, "fm1": self.loss_spec.fm1, "fm2": self.loss_spec.fm2,
                     "abstain": None if not self.loss_spec.partial else self.loss_spec.abstain},
            **self.meta,
        }

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_worklist(self, path, file_of, offsets) -> None:
        """Abstained records for clerical review: global index, file, row within file (1-based)."""
        file_of = np.asarray(file_of)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["global_index", "file", "row"])
            for g in self.abstained.tolist():
                k = int(file_of[g])
                w.writerow([g + 1, k + 1, g - offsets[k] + 1])


def read_estimate(path) -> np.ndarray:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            d = row["decision"]
            out.append(ABSTAIN if d == "ABSTAIN" else int(d) - 1)
    return np.array(out, dtype=np.int64)


def canonical_decisions(labels: np.ndarray) -> np.ndarray:
    """First-appearance relabelling of the decided records; abstentions stay -1."""
    out = -np.ones(len(labels), dtype=np.int64)
    seen: dict[int, int] = {}
    for i, lab in enumerate(np.asarray(labels).tolist()):
        if lab != ABSTAIN:
            out[i] = seen.setdefault(lab, len(seen))
    return out


def bayes_estimate(samples, spec: LossSpec = LossSpec(), max_component: int | None = None,
                   pairs: Pairs | None = None, delta: float | None = None) -> LinkageEstimate:
    """Component-wise minimisation of the sample-approximated expected loss.

    ``max_component`` defaults to 50 for full and 12 for partial estimates.
    ``delta`` fixes the edge threshold instead of selecting it.
    """
    labels = samples.labels if isinstance(samples, PosteriorSamples) else np.asarray(samples)
    if labels.ndim != 2 or labels.shape[0] == 0:
        raise ValueError("no stored samples")
    r = labels.shape[1]
    if max_component is None:
        max_component = EXHAUSTIVE_MAX if spec.partial else 50
    pairs, probs = pairwise_probs(labels, pairs)
    if delta is None:
        delta = select_delta(pairs, probs, r, max_component)
    comp = components(pairs, probs, r, delta)

    out = -np.ones(r, dtype=np.int64)
    total = 0.0
    sizes = []
    nxt = 0
    order = np.argsort(comp, kind="stable")
    bounds = np.flatnonzero(np.diff(comp[order])) + 1
    groups = sorted(np.split(order, bounds), key=lambda g: int(g.min()))
    for members in groups:
        members = np.sort(members)
        sizes.append(len(members))
        if len(members) == 1:
            out[members[0]] = nxt
            nxt += 1
            continue
        res = minimize_component(labels[:, members], spec)
        total += res.value
        dec = res.labels >= 0
        out[members[dec]] = res.labels[dec] + nxt
        nxt += int(res.labels.max()) + 1 if dec.any() else 0
    return LinkageEstimate(canonical_decisions(out), float(delta), total, sizes, spec)
