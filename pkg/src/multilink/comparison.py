"""Pairwise comparison vectors, pair universes and candidate-pair indexing.

A pair is always stored with ``i < j`` (0-based global indices).  Because
records are indexed file by file, ``file_of[i] <= file_of[j]`` and every pair
belongs to exactly one file pair ``(k, k')`` with ``k <= k'``.  Within-file
pairs only exist for files that may contain duplicates.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from rapidfuzz.distance import Levenshtein
from rapidfuzz.process import cdist
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .datastore import FileCollection

METHODS = ("normalized_edit_distance", "absolute_difference", "binary")
_METHOD_ALIASES = {"levenshtein": "normalized_edit_distance", "edit": "normalized_edit_distance",
                   "abs": "absolute_difference", "binary_agreement": "binary"}

# unique-value similarity matrices above this many entries fall back to per-pair work
_MATRIX_LIMIT = 25_000_000


@dataclass(frozen=True)
class ComparatorSpec:
    """How one field is compared and cut into agreement levels.

    ``breakpoints`` are the right ends of the half-open intervals
    ``[.., b0], (b0, b1], ..., (b_last, inf)``, so ``len(breakpoints) + 1``
    levels result.  Level 0 is the strongest agreement.
    """

    field: str
    method: str = "normalized_edit_distance"
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        method = _METHOD_ALIASES.get(self.method, self.method)
        object.__setattr__(self, "method", method)
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        if method not in METHODS:
            raise ValueError(f"{self.field}: unknown comparison method {self.method!r}")
        if method == "binary":
            if self.breakpoints:
                raise ValueError(f"{self.field}: binary comparison takes no breakpoints")
        else:
            b = np.asarray(self.breakpoints)
            if b.size == 0:
                raise ValueError(f"{self.field}: need at least one breakpoint")
            if np.any(np.diff(b) <= 0):
                raise ValueError(f"{self.field}: breakpoints must be strictly increasing")

    @property
    def n_levels(self) -> int:
        return 2 if self.method == "binary" else len(self.breakpoints) + 1


def default_comparators() -> list[ComparatorSpec]:
    """The seven-field comparison table used by the simulation studies."""
    cuts = (0.0, 0.25, 0.5)
    return [
        ComparatorSpec("sex", "binary"),
        ComparatorSpec("given_name", "normalized_edit_distance", cuts),
        ComparatorSpec("family_name", "normalized_edit_distance", cuts),
        ComparatorSpec("age", "binary"),
        ComparatorSpec("occupation", "binary"),
        ComparatorSpec("postal_code", "normalized_edit_distance", cuts),
        ComparatorSpec("phone", "normalized_edit_distance", cuts),
    ]


def normalized_edit_distance(a: str, b: str) -> float:
    """Levenshtein distance divided by the longer length; 0 means identical."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return Levenshtein.distance(a, b) / longest


def discretize(similarity: float, spec: ComparatorSpec) -> int:
    """Map a dissimilarity value to its agreement level under ``spec``."""
    if spec.method == "binary":
        if similarity not in (0, 1):
            raise ValueError(f"binary comparison value must be 0 or 1, got {similarity}")
        return int(similarity)
    if similarity < 0 or (spec.method == "normalized_edit_distance" and similarity > 1):
        raise ValueError(f"{spec.field}: similarity {similarity} outside comparator range")
    return int(np.searchsorted(spec.breakpoints, similarity, side="left"))


def _discretize_array(values: np.ndarray, spec: ComparatorSpec) -> np.ndarray:
    if spec.method == "binary":
        return values.astype(np.int8)
    return np.searchsorted(np.asarray(spec.breakpoints), values, side="left").astype(np.int8)


class Pairs(NamedTuple):
    i: np.ndarray
    j: np.ndarray

    def __len__(self):
        return len(self.i)

    def as_set(self) -> set[tuple[int, int]]:
        return set(zip(self.i.tolist(), self.j.tolist()))

    @classmethod
    def from_iterable(cls, pairs) -> "Pairs":
        arr = np.array(sorted({(min(a, b), max(a, b)) for a, b in pairs if a != b}),
                       dtype=np.int64).reshape(-1, 2)
        return cls(arr[:, 0].copy(), arr[:, 1].copy())


def _sorted_pairs(i: np.ndarray, j: np.ndarray) -> Pairs:
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    order = np.lexsort((j, i))
    return Pairs(i[order], j[order])


def valid_pair_mask(i: np.ndarray, j: np.ndarray, file_of: np.ndarray,
                    duplicate_free: Sequence[bool]) -> np.ndarray:
    fi = file_of[i]
    dup_free = np.asarray(duplicate_free, dtype=bool)
    return (i != j) & ~((fi == file_of[j]) & dup_free[fi])


def enumerate_pairs(files: FileCollection) -> Pairs:
    """All record pairs that may be coreferent a priori."""
    offs = files.offsets()
    sizes = files.sizes
    iis, jjs = [], []
    for k in range(files.K):
        rk = np.arange(offs[k], offs[k] + sizes[k])
        if not files.files[k].duplicate_free:
            a, b = np.triu_indices(sizes[k], k=1)
            iis.append(rk[a])
            jjs.append(rk[b])
        for kk in range(k + 1, files.K):
            rkk = np.arange(offs[kk], offs[kk] + sizes[kk])
            iis.append(np.repeat(rk, sizes[kk]))
            jjs.append(np.tile(rkk, sizes[k]))
    if not iis:
        return Pairs(np.zeros(0, np.int64), np.zeros(0, np.int64))
    return _sorted_pairs(np.concatenate(iis), np.concatenate(jjs))


def file_pair_table(K: int, duplicate_free: Sequence[bool]) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Valid file pairs ``(k, k')`` and a symmetric K x K lookup (-1 = invalid)."""
    pairs = []
    index = -np.ones((K, K), dtype=np.int64)
    for k in range(K):
        for kk in range(k, K):
            if k == kk and duplicate_free[k]:
                continue
            index[k, kk] = index[kk, k] = len(pairs)
            pairs.append((k, kk))
    return pairs, index


def _field_levels(files: FileCollection, spec: ComparatorSpec, pairs: Pairs) -> np.ndarray:
    """Agreement levels of one field for the given pairs (-1 where unobserved)."""
    col = files.column(spec.field)
    n = len(pairs)
    out = -np.ones(n, dtype=np.int8)
    if n == 0:
        return out
    observed = np.array([v is not None for v in col])
    ok = observed[pairs.i] & observed[pairs.j]
    pi, pj = pairs.i[ok], pairs.j[ok]

    if spec.method == "absolute_difference":
        vals = np.array([v if v is not None else 0 for v in col], dtype=np.float64)
        out[ok] = _discretize_array(np.abs(vals[pi] - vals[pj]), spec)
        return out

    keys = [None if v is None else str(v) for v in col]
    uniq = sorted({k for k in keys if k is not None})
    code_of = {u: c for c, u in enumerate(uniq)}
    codes = np.array([code_of[k] if k is not None else -1 for k in keys], dtype=np.int64)
    ci, cj = codes[pi], codes[pj]

    if spec.method == "binary":
        out[ok] = (ci != cj).astype(np.int8)
        return out

    if len(uniq) ** 2 <= _MATRIX_LIMIT:
        lens = np.array([len(u) for u in uniq], dtype=np.float64)
        table = np.empty((len(uniq), len(uniq)), dtype=np.int8)
        step = 1024
        for s in range(0, len(uniq), step):
            dist = cdist(uniq[s:s + step], uniq, scorer=Levenshtein.distance, dtype=np.int32)
            longest = np.maximum(lens[s:s + step, None], lens[None, :])
            sim = np.divide(dist, longest, out=np.zeros(dist.shape), where=longest > 0)
            table[s:s + step] = _discretize_array(sim, spec)
        out[ok] = table[ci, cj]
    else:
        sims = np.array([normalized_edit_distance(uniq[a], uniq[b]) for a, b in zip(ci, cj)])
        out[ok] = _discretize_array(sims, spec)
    return out


def compare_pairs(files: FileCollection, specs: Sequence[ComparatorSpec], pairs: Pairs) -> np.ndarray:
    """Level matrix of shape (len(pairs), F), -1 for unobserved comparisons."""
    for s in specs:
        files.schema.index(s.field)
    if not specs:
        return np.zeros((len(pairs), 0), dtype=np.int8)
    return np.column_stack([_field_levels(files, s, pairs) for s in specs]).astype(np.int8)


# ---------------------------------------------------------------------------
# candidate sets


def block(files: FileCollection, blocking_fields: Sequence[str]) -> Pairs:
    """Pairs agreeing exactly on every blocking field (missing breaks the block)."""
    cols = [files.column(f) for f in blocking_fields]
    labels = np.empty(files.r, dtype=np.int64)
    seen: dict[tuple, int] = {}
    for idx in range(files.r):
        key = tuple(c[idx] for c in cols)
        if any(v is None for v in key):
            labels[idx] = files.r + idx  # isolated block
            continue
        labels[idx] = seen.setdefault(key, len(seen))
    return pairs_within_blocks(labels, files.file_of, files.duplicate_free)


def pairs_within_blocks(labels: np.ndarray, file_of: np.ndarray, duplicate_free: Sequence[bool]) -> Pairs:
    """All valid pairs whose two records share a block label."""
    labels = np.asarray(labels)
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    bounds = np.flatnonzero(np.diff(sorted_labels)) + 1
    iis, jjs = [], []
    for members in np.split(order, bounds):
        if len(members) < 2:
            continue
        members = np.sort(members)
        a, b = np.triu_indices(len(members), k=1)
        iis.append(members[a])
        jjs.append(members[b])
    if not iis:
        return Pairs(np.zeros(0, np.int64), np.zeros(0, np.int64))
    i, j = np.concatenate(iis), np.concatenate(jjs)
    keep = valid_pair_mask(i, j, file_of, duplicate_free)
    return _sorted_pairs(i[keep], j[keep])


def index_by_disjunction(files: FileCollection, specs: Sequence[ComparatorSpec],
                         thresholds: dict[str, int], universe: Pairs | None = None,
                         levels: np.ndarray | None = None) -> Pairs:
    """Keep a pair unless it disagrees beyond the threshold on every listed field.

    ``thresholds`` maps field name to the largest level still counted as
    agreement.  An unobserved comparison never counts as disagreement.  An
    empty mapping keeps every pair.  ``levels`` may supply the precomputed
    level matrix for ``universe`` (columns ordered as ``specs``).
    """
    universe = enumerate_pairs(files) if universe is None else universe
    if not thresholds:
        return universe
    by_field = {s.field: c for c, s in enumerate(specs)}
    missing = [f for f in thresholds if f not in by_field]
    if missing:
        raise KeyError(f"no comparator for indexing fields {missing}")
    if levels is None:
        chosen = [s for s in specs if s.field in thresholds]
        levels = compare_pairs(files, chosen, universe)
        by_field = {s.field: c for c, s in enumerate(chosen)}
    exceeds_all = np.ones(len(universe), dtype=bool)
    for name, thr in thresholds.items():
        lv = levels[:, by_field[name]]
        exceeds_all &= lv > thr
    keep = ~exceeds_all
    return Pairs(universe.i[keep], universe.j[keep])


def index_by_rules(files: FileCollection, specs: Sequence[ComparatorSpec],
                   rules: Sequence[dict[str, int]], universe: Pairs | None = None,
                   levels: np.ndarray | None = None) -> Pairs:
    """Intersection of several disjunction indexes (one per rule)."""
    universe = enumerate_pairs(files) if universe is None else universe
    keep = np.ones(len(universe), dtype=bool)
    for rule in rules:
        kept = index_by_disjunction(files, specs, rule, universe, levels)
        keep &= np.isin(_pair_keys(universe, files.r), _pair_keys(kept, files.r))
    return Pairs(universe.i[keep], universe.j[keep])


def _pair_keys(p: Pairs, r: int) -> np.ndarray:
    return p.i * r + p.j


def record_components(pairs: Pairs, r: int) -> np.ndarray:
    """Connected-component label of every record under the pair graph."""
    g = coo_matrix((np.ones(len(pairs), dtype=np.int8), (pairs.i, pairs.j)), shape=(r, r))
    _, labels = connected_components(g, directed=False)
    return labels


def transitive_closure(pairs: Pairs, r: int, file_of: np.ndarray | None = None,
                       duplicate_free: Sequence[bool] | None = None) -> Pairs:
    """Close a candidate set under transitivity.

    The result holds every pair of records joined by a path of candidate
    pairs.  When file membership is given, pairs outside the pair universe
    (two records of one duplicate-free file) are dropped again.
    """
    labels = record_components(pairs, r)
    if file_of is None:
        file_of = np.zeros(r, dtype=np.int64)
        duplicate_free = [False]
    return pairs_within_blocks(labels, file_of, duplicate_free)


# ---------------------------------------------------------------------------
# comparison data


@dataclass
class ComparisonData:
    """Comparison vectors for the candidate pairs plus level totals over the modeled universe.

    ``totals[fp, f, l]`` counts observed level-``l`` comparisons of field ``f``
    over every modeled pair of file pair ``fp``, candidate or not.  Pairs
    outside the candidate set are fixed as non-coreferent, so they enter the
    likelihood only through these totals.
    """

    field_names: list[str]
    n_levels: np.ndarray            # (F,)
    file_sizes: list[int]
    duplicate_free: list[bool]
    file_pairs: list[tuple[int, int]]
    pair_i: np.ndarray              # (P*,)
    pair_j: np.ndarray
    levels: np.ndarray              # (P*, F) int8, -1 = unobserved
    totals: np.ndarray              # (n_fp, F, L_max)
    universe_size: int
    file_names: list[str] = field(default_factory=list)
    fp_index: np.ndarray = field(init=False, repr=False)
    file_of: np.ndarray = field(init=False, repr=False)
    pair_fp: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.n_levels = np.asarray(self.n_levels, dtype=np.int64)
        self.pair_i = np.asarray(self.pair_i, dtype=np.int64)
        self.pair_j = np.asarray(self.pair_j, dtype=np.int64)
        self.levels = np.asarray(self.levels, dtype=np.int8).reshape(len(self.pair_i), len(self.field_names))
        self.totals = np.asarray(self.totals, dtype=np.int64)
        K = len(self.file_sizes)
        _, self.fp_index = file_pair_table(K, self.duplicate_free)
        self.file_of = np.repeat(np.arange(K), self.file_sizes).astype(np.int64)
        self.pair_fp = self.fp_index[self.file_of[self.pair_i], self.file_of[self.pair_j]]
        if not self.file_names:
            self.file_names = [f"file{k + 1}" for k in range(K)]

    @property
    def r(self) -> int:
        return int(sum(self.file_sizes))

    @property
    def K(self) -> int:
        return len(self.file_sizes)

    @property
    def F(self) -> int:
        return len(self.field_names)

    @property
    def n_pairs(self) -> int:
        return len(self.pair_i)

    @property
    def max_levels(self) -> int:
        return int(self.n_levels.max()) if self.F else 1

    @property
    def candidates(self) -> Pairs:
        return Pairs(self.pair_i, self.pair_j)

    def candidate_level_counts(self) -> np.ndarray:
        """Level histogram over candidate pairs only, shape like ``totals``."""
        return level_histogram(self.pair_fp, self.levels, len(self.file_pairs), self.max_levels)

    # -- persistence -----------------------------------------------------

    def save(self, path) -> None:
        meta = dict(field_names=self.field_names, file_sizes=self.file_sizes,
                    duplicate_free=self.duplicate_free, file_pairs=self.file_pairs,
                    universe_size=self.universe_size, file_names=self.file_names)
        with open(path, "wb") as fh:
            np.savez_compressed(fh, meta=np.array(json.dumps(meta)), n_levels=self.n_levels,
                                pair_i=self.pair_i, pair_j=self.pair_j, levels=self.levels,
                                totals=self.totals)

    @classmethod
    def load(cls, path) -> "ComparisonData":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            return cls(field_names=meta["field_names"], n_levels=z["n_levels"],
                       file_sizes=meta["file_sizes"], duplicate_free=meta["duplicate_free"],
                       file_pairs=[tuple(p) for p in meta["file_pairs"]], pair_i=z["pair_i"],
                       pair_j=z["pair_j"], levels=z["levels"], totals=z["totals"],
                       universe_size=meta["universe_size"], file_names=meta["file_names"])

    def write_delimited(self, path) -> None:
        """One row per candidate pair: global i, global j (1-based), F level codes."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", *self.field_names])
            for a, b, row in zip(self.pair_i.tolist(), self.pair_j.tolist(), self.levels.tolist()):
                w.writerow([a + 1, b + 1, *row])


def level_histogram(pair_fp: np.ndarray, levels: np.ndarray, n_fp: int, max_levels: int) -> np.ndarray:
    F = levels.shape[1]
    out = np.zeros((n_fp, F, max_levels), dtype=np.int64)
    for f in range(F):
        lv = levels[:, f]
        obs = lv >= 0
        np.add.at(out[:, f, :], (pair_fp[obs], lv[obs].astype(np.int64)), 1)
    return out


def build_comparisons(files: FileCollection, specs: Sequence[ComparatorSpec],
                      candidates: Pairs | None = None, universe: Pairs | None = None,
                      universe_levels: np.ndarray | None = None) -> ComparisonData:
    """Compute comparison vectors for ``candidates`` and level totals over ``universe``.

    With no candidates every pair of the universe is a candidate.  The
    universe defaults to all valid pairs; pass ``universe=candidates`` for
    blocking, where cross-block pairs are never compared.
    """
    if universe is None:
        universe = enumerate_pairs(files)
    if candidates is None:
        candidates = universe
    file_pairs, fp_index = file_pair_table(files.K, files.duplicate_free)
    n_levels = np.array([s.n_levels for s in specs], dtype=np.int64)
    max_levels = int(n_levels.max()) if len(specs) else 1

    if universe_levels is None:
        universe_levels = compare_pairs(files, specs, universe)
    ukeys = _pair_keys(universe, files.r)
    ckeys = _pair_keys(candidates, files.r)
    pos = np.searchsorted(ukeys, ckeys)
    if len(ckeys) and (pos.max() >= len(ukeys) or np.any(ukeys[pos] != ckeys)):
        raise ValueError("candidate pairs must be a subset of the pair universe")
    levels = universe_levels[pos]

    ufp = fp_index[files.file_of[universe.i], files.file_of[universe.j]]
    totals = level_histogram(ufp, universe_levels, len(file_pairs), max_levels)
    return ComparisonData(field_names=[s.field for s in specs], n_levels=n_levels,
                          file_sizes=files.sizes, duplicate_free=files.duplicate_free,
                          file_pairs=file_pairs, pair_i=candidates.i, pair_j=candidates.j,
                          levels=levels, totals=totals, universe_size=len(universe),
                          file_names=[f.name for f in files.files])


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
