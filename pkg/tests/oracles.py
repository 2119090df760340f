"""Brute-force reference implementations used only by the tests.

Each one is written from the definitions, sharing no code with the package,
so agreement between the two routes is meaningful.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np


def edit_distance(a: str, b: str) -> int:
    """Textbook Levenshtein dynamic program."""
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def closure_components(n: int, edges) -> list[int]:
    """Component id per node via boolean reachability matrix squaring."""
    R = np.eye(n, dtype=bool)
    for i, j in edges:
        R[i, j] = R[j, i] = True
    while True:
        nxt = (R.astype(int) @ R.astype(int)) > 0
        if (nxt == R).all():
            break
        R = nxt
    out, seen = [-1] * n, 0
    for i in range(n):
        if out[i] < 0:
            for j in np.flatnonzero(R[i]):
                out[j] = seen
            seen += 1
    return out


def set_partitions(items):
    """All set partitions of a list (as lists of blocks)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for b in range(len(part)):
            yield part[:b] + [[first] + part[b]] + part[b + 1:]
        yield [[first]] + part


def labels_from_blocks(blocks, r: int) -> tuple[int, ...]:
    lab = [0] * r
    for c, blk in enumerate(sorted(blocks, key=min)):
        for i in blk:
            lab[i] = c
    return tuple(lab)


def multifile_partitions(file_of, duplicate_free):
    """Canonical labelings of all partitions with no two records of a duplicate-free file together."""
    r = len(file_of)
    for blocks in set_partitions(range(r)):
        ok = all(sum(1 for i in blk if file_of[i] == k) <= 1
                 for blk in blocks for k in range(len(duplicate_free)) if duplicate_free[k])
        if ok:
            yield labels_from_blocks(blocks, r)


def overlap_of(labels, file_of) -> Counter:
    out = Counter()
    for c in set(labels):
        h = 0
        for i, lab in enumerate(labels):
            if lab == c:
                h |= 1 << int(file_of[i])
        out[h] += 1
    return out


def kpartite_matchings(file_of):
    """Canonical labelings of all partitions keeping every file duplicate-free.

    Grows clusters record by record, so only valid labelings are visited.
    """
    r = len(file_of)
    lab = [0] * r
    used: list[set] = []

    def rec(i):
        if i == r:
            yield tuple(lab)
            return
        k = file_of[i]
        for c, files in enumerate(used):
            if k not in files:
                files.add(k)
                lab[i] = c
                yield from rec(i + 1)
                files.discard(k)
        used.append({k})
        lab[i] = len(used) - 1
        yield from rec(i + 1)
        used.pop()

    yield from rec(0)


def overlap_census(file_sizes) -> Counter:
    """How many K-partite matchings realise each overlap table, for fixed file sizes."""
    file_of = [k for k, m in enumerate(file_sizes) for _ in range(m)]
    census = Counter()
    for lab in kpartite_matchings(file_of):
        census[frozenset(overlap_of(lab, file_of).items())] += 1
    return census


def brute_force_matchings(table: dict[int, int], K: int) -> int:
    """Count K-partite matchings with the given overlap table by enumerating all of them.

    File k gets as many records as there are entities whose pattern contains k.
    """
    file_sizes = [sum(c for h, c in table.items() if h >> k & 1) for k in range(K)]
    file_of = [k for k in range(K) for _ in range(file_sizes[k])]
    target = Counter({h: c for h, c in table.items() if c})
    return sum(1 for lab in multifile_partitions(file_of, [True] * K) if overlap_of(lab, file_of) == target)


# ---------------------------------------------------------------------------
# loss


def _partners(labels, i):
    return {j for j, v in enumerate(labels) if v == labels[i] and j != i}


def loss_by_definition(Z, Zhat, fnm=1.0, fm1=1.0, fm2=2.0, abstain=math.inf) -> float:
    """Record-level loss written out from partner sets; ``-1`` in ``Zhat`` abstains."""
    dec = [j for j in range(len(Z)) if Zhat[j] != -1]
    total = 0.0
    for j in range(len(Z)):
        if Zhat[j] == -1:
            total += abstain
            continue
        true = {i for i in _partners(Z, j) if i in dec}
        est = {i for i in _partners(Zhat, j) if i in dec}
        if not est:
            total += fnm if true else 0.0
        elif not true:
            total += fm1
        elif not true <= est:
            total += fm2
    return total


def exhaustive_component(sub: np.ndarray, fnm, fm1, fm2, abstain, tol=1e-9):
    """Best (restriction of a stored sample, abstain subset) for one component.

    Candidates run over stored samples in order, abstain subsets by size then
    lexicographically; a later candidate replaces the incumbent only if it is
    better by more than ``tol``.
    """
    T, s = sub.shape
    subsets = [set(c) for k in range(s + 1) for c in itertools.combinations(range(s), k)]
    if not math.isfinite(abstain):
        subsets = subsets[:1]
    best, best_lab = math.inf, None
    seen = set()
    for t in range(T):
        key = labels_from_blocks([[i for i in range(s) if sub[t, i] == v] for v in set(sub[t].tolist())], s)
        if key in seen:
            continue
        seen.add(key)
        for om in subsets:
            zhat = [-1 if i in om else key[i] for i in range(s)]
            v = np.mean([loss_by_definition(sub[u].tolist(), zhat, fnm, fm1, fm2, abstain) for u in range(T)])
            if v < best - tol:
                best, best_lab = v, zhat
    return best, best_lab
