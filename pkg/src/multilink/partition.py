"""Multifile coreference partitions.

A partition is held as a label vector plus per-cluster bookkeeping: how many
records each file contributes, the cluster's inclusion pattern (bit ``k`` set
iff file ``k`` is represented) and the overlap table ``n_h`` indexed by that
pattern as an integer.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterator, Sequence

import numpy as np

NEW = -1


class PartitionError(ValueError):
    """An edit would violate a duplicate-free flag or a cluster-size bound."""


def canonical_labels(labels) -> np.ndarray:
    """Relabel clusters 0, 1, 2, ... in order of their smallest member."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    return rank[inverse.reshape(-1)]


def format_labels(labels) -> str:
    """One line of space-separated 1-based canonical labels."""
    return " ".join(str(v + 1) for v in canonical_labels(labels).tolist())


def parse_labels(line: str) -> np.ndarray:
    return canonical_labels(np.array([int(t) for t in line.split()], dtype=np.int64))


def coreference(labels, i, j) -> np.ndarray:
    """Pairwise indicator ``Z_i == Z_j`` for index arrays ``i``, ``j``."""
    labels = np.asarray(labels)
    return labels[np.asarray(i)] == labels[np.asarray(j)]


def pattern_string(h: int, K: int) -> str:
    """Pattern ``h`` written file by file, e.g. ``'101'`` for files 1 and 3."""
    return "".join("1" if h >> k & 1 else "0" for k in range(K))


class MultifilePartition:
    """Partition of ``r`` records that remembers each record's file.

    ``size_bounds[k]`` is the largest allowed ``|c^k|`` (1 for a
    duplicate-free file, ``None`` for unbounded).
    """

    def __init__(self, file_of, K: int | None = None, size_bounds: Sequence[int | None] | None = None):
        self.file_of = np.asarray(file_of, dtype=np.int64)
        self.K = int(K if K is not None else (self.file_of.max() + 1 if len(self.file_of) else 0))
        self.size_bounds = list(size_bounds) if size_bounds is not None else [None] * self.K
        if len(self.size_bounds) != self.K:
            raise ValueError("need one size bound per file")
        self.labels = np.full(len(self.file_of), NEW, dtype=np.int64)
        self.members: dict[int, set[int]] = {}
        self.fcount: dict[int, np.ndarray] = {}
        self.pattern: dict[int, int] = {}
        self.n_h = np.zeros(2 ** self.K, dtype=np.int64)
        self._next = 0

    # -- construction ------------------------------------------------------

    @classmethod
    def from_labels(cls, labels, file_of, K: int | None = None,
                    size_bounds: Sequence[int | None] | None = None) -> "MultifilePartition":
        labels = np.asarray(labels)
        file_of = np.asarray(file_of)
        if labels.shape != file_of.shape:
            raise ValueError(f"label vector has length {len(labels)}, expected {len(file_of)}")
        part = cls(file_of, K, size_bounds)
        canon = canonical_labels(labels) if len(labels) else labels
        for j, c in enumerate(canon.tolist()):
            part.add_record(j, c if c < part._next else NEW)
        return part

    @classmethod
    def singletons(cls, file_of, K=None, size_bounds=None) -> "MultifilePartition":
        return cls.from_labels(np.arange(len(file_of)), file_of, K, size_bounds)

    def copy(self) -> "MultifilePartition":
        return MultifilePartition.from_labels(self.labels, self.file_of, self.K, self.size_bounds)

    # -- edits -----------------------------------------------------------

    def remove_record(self, j: int) -> int:
        """Take record ``j`` out; returns the id of the cluster it left."""
        c = int(self.labels[j])
        if c == NEW:
            raise PartitionError(f"record {j} is not assigned")
        k = int(self.file_of[j])
        self.n_h[self.pattern[c]] -= 1
        self.members[c].discard(j)
        self.fcount[c][k] -= 1
        self.labels[j] = NEW
        if not self.members[c]:
            del self.members[c], self.fcount[c], self.pattern[c]
        else:
            self.pattern[c] = self._pattern_of(c)
            self.n_h[self.pattern[c]] += 1
        return c

    def add_record(self, j: int, target: int = NEW) -> int:
        """Put record ``j`` into cluster ``target`` (or a new cluster)."""
        if self.labels[j] != NEW:
            raise PartitionError(f"record {j} is already assigned")
        k = int(self.file_of[j])
        if target == NEW or target not in self.members:
            if target != NEW:
                raise PartitionError(f"no cluster {target}")
            target = self._next
            self._next += 1
            self.members[target] = set()
            self.fcount[target] = np.zeros(self.K, dtype=np.int64)
        else:
            bound = self.size_bounds[k]
            if bound is not None and self.fcount[target][k] + 1 > bound:
                kind = "duplicate-free" if bound == 1 else f"size bound {bound}"
                raise PartitionError(f"adding record {j} to cluster {target} violates file {k} {kind}")
            self.n_h[self.pattern[target]] -= 1
        self.members[target].add(j)
        self.fcount[target][k] += 1
        self.labels[j] = target
        self.pattern[target] = self._pattern_of(target)
        self.n_h[self.pattern[target]] += 1
        return target

    def _pattern_of(self, c: int) -> int:
        fc = self.fcount[c]
        return int(sum(1 << k for k in range(self.K) if fc[k] > 0))

    # -- summaries ---------------------------------------------------------

    @property
    def r(self) -> int:
        return len(self.file_of)

    @property
    def n(self) -> int:
        return len(self.members)

    @property
    def n_k(self) -> np.ndarray:
        """Number of within-file clusters per file."""
        h = np.arange(len(self.n_h))
        return np.array([int(self.n_h[(h >> k) & 1 == 1].sum()) for k in range(self.K)])

    def overlap_table(self) -> dict[str, int]:
        return {pattern_string(h, self.K): int(self.n_h[h]) for h in range(1, 2 ** self.K)}

    def within_file_sizes(self, k: int) -> list[int]:
        """The multiset d^k as a list ordered by each cluster's smallest member."""
        out = []
        for c in sorted(self.members, key=lambda c: min(self.members[c])):
            if self.fcount[c][k] > 0:
                out.append(int(self.fcount[c][k]))
        return out

    def file_sizes(self) -> list[int]:
        return np.bincount(self.file_of, minlength=self.K).tolist()

    def max_cluster_size(self) -> int:
        return max((len(m) for m in self.members.values()), default=0)

    def clusters(self) -> list[tuple[set[int], ...]]:
        """Clusters as K-tuples of per-file record sets, canonical order."""
        out = []
        for c in sorted(self.members, key=lambda c: min(self.members[c])):
            parts = tuple({i for i in self.members[c] if self.file_of[i] == k} for k in range(self.K))
            out.append(parts)
        return out

    def canonical(self) -> np.ndarray:
        return canonical_labels(self.labels)

    def is_valid(self) -> bool:
        for c, fc in self.fcount.items():
            for k, bound in enumerate(self.size_bounds):
                if bound is not None and fc[k] > bound:
                    return False
        return True

    def recompute(self) -> tuple[np.ndarray, dict[int, np.ndarray]]:
        """Overlap table and per-cluster file counts rebuilt from the labels."""
        n_h = np.zeros_like(self.n_h)
        fcount = {}
        for c in np.unique(self.labels):
            idx = np.flatnonzero(self.labels == c)
            fc = np.bincount(self.file_of[idx], minlength=self.K)
            fcount[int(c)] = fc
            n_h[int(sum(1 << k for k in range(self.K) if fc[k] > 0))] += 1
        return n_h, fcount

    def __eq__(self, other):
        if not isinstance(other, MultifilePartition):
            return NotImplemented
        return (np.array_equal(self.file_of, other.file_of)
                and np.array_equal(self.canonical(), other.canonical()))

    def __repr__(self):
        return f"MultifilePartition(r={self.r}, n={self.n}, labels={format_labels(self.labels)!r})"


def enumerate_labelings(file_of, size_bounds: Sequence[int | None] | None = None,
                        allowed=None, max_records: int = 12) -> Iterator[tuple[int, ...]]:
    """All canonical label vectors respecting size bounds (and an optional pair filter).

    ``allowed(i, j)`` returning False forbids records ``i`` and ``j`` from
    sharing a cluster.
    """
    file_of = np.asarray(file_of)
    r = len(file_of)
    if r > max_records:
        raise ValueError(f"refusing to enumerate partitions of {r} > {max_records} records")
    K = int(file_of.max()) + 1 if r else 0
    bounds = list(size_bounds) if size_bounds is not None else [None] * K
    labels = [0] * r
    counts: list[list[int]] = []
    members: list[list[int]] = []

    def rec(j: int):
        if j == r:
            yield tuple(labels)
            return
        k = int(file_of[j])
        for c in range(len(counts)):
            if bounds[k] is not None and counts[c][k] + 1 > bounds[k]:
                continue
            if allowed is not None and not all(allowed(i, j) for i in members[c]):
                continue
            labels[j] = c
            counts[c][k] += 1
            members[c].append(j)
            yield from rec(j + 1)
            counts[c][k] -= 1
            members[c].pop()
        labels[j] = len(counts)
        counts.append([0] * K)
        counts[-1][k] = 1
        members.append([j])
        yield from rec(j + 1)
        counts.pop()
        members.pop()

    yield from rec(0)


def enumerate_partitions(file_of, size_bounds=None, allowed=None) -> Iterator[MultifilePartition]:
    file_of = np.asarray(file_of)
    K = int(file_of.max()) + 1 if len(file_of) else 0
    for lab in enumerate_labelings(file_of, size_bounds, allowed):
        yield MultifilePartition.from_labels(np.array(lab), file_of, K, size_bounds)


def overlap_counter(labels, file_of, K: int) -> Counter:
    """Overlap table of a label vector as a Counter over integer patterns."""
    labels = np.asarray(labels)
    out: Counter = Counter()
    for c in np.unique(labels):
        files = np.unique(np.asarray(file_of)[labels == c])
        out[int(sum(1 << int(k) for k in files))] += 1
    return out
