import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multilink.partition import (NEW, MultifilePartition, PartitionError, canonical_labels, enumerate_labelings,
                                 format_labels, parse_labels)
from oracles import kpartite_matchings, multifile_partitions

# records 1..5 in file 1, 6..12 in file 2 (shown 0-based)
EXAMPLE = [0, 1, 2, 3, 3, 4, 3, 2, 0, 2, 2, 5]
EXAMPLE_FILES = [0] * 5 + [1] * 7


def _example():
    return MultifilePartition.from_labels(EXAMPLE, EXAMPLE_FILES, 2)


def test_worked_example_summaries():
    C = _example()
    assert C.n == 6
    assert C.overlap_table() == {"11": 3, "10": 1, "01": 2}
    assert sorted(C.within_file_sizes(0)) == sorted([1, 1, 1, 2])
    assert sorted(C.within_file_sizes(1)) == sorted([1, 1, 1, 3, 1])
    assert C.n_k.tolist() == [4, 5]


def test_remove_changes_pattern():
    C = _example()
    C.remove_record(6)                      # record 7 leaves ({4,5},{7})
    C.add_record(6, NEW)
    assert C.overlap_table() == {"11": 2, "10": 2, "01": 3}
    C = _example()
    C.remove_record(6)
    assert C.overlap_table()["11"] == 2 and C.overlap_table()["10"] == 2


def test_remove_readd_restores():
    C = _example()
    target = C.remove_record(2)
    C.add_record(2, target)
    assert C == _example()
    n_before = C.n
    C.remove_record(5)                      # record 6 is a singleton
    assert C.n == n_before - 1


def test_singletons_and_label_invariance():
    C = MultifilePartition.from_labels(np.arange(12), EXAMPLE_FILES, 2)
    assert C.n == 12 and C.max_cluster_size() == 1
    renamed = np.array([[10, 33, 7, 99, -5, 4][v] for v in EXAMPLE])
    assert MultifilePartition.from_labels(renamed, EXAMPLE_FILES, 2) == _example()


def test_add_new_increments_single_file_cell():
    C = MultifilePartition(EXAMPLE_FILES, 2)
    C.add_record(0)
    assert C.n == 1 and C.n_h[1] == 1
    C.add_record(5)
    assert C.n == 2 and C.n_h[2] == 1


def test_length_mismatch():
    with pytest.raises(ValueError):
        MultifilePartition.from_labels([0, 1], [0, 0, 1])


def test_duplicate_free_violation():
    C = MultifilePartition.from_labels([0, 1, 2], [0, 0, 1], 2, [1, 1])
    C.remove_record(1)
    with pytest.raises(PartitionError):
        C.add_record(1, int(C.labels[0]))


@pytest.mark.parametrize("file_of,bounds,expected", [([0, 0, 1, 1], [1, 1], 7), ([0, 1], [1, 1], 2),
                                                     ([0, 0, 0], [None], 5), ([0, 0, 0, 0], [None], 15),
                                                     ([0, 0, 0, 1, 1, 1], [1, 1], 34)])
def test_enumeration_counts(file_of, bounds, expected):
    assert len(list(enumerate_labelings(file_of, bounds))) == expected


@pytest.mark.parametrize("file_of,dup", [([0, 0, 1, 1, 1], [True, False]), ([0, 1, 1, 2], [False, True, True])])
def test_enumeration_matches_set_partition_oracle(file_of, dup):
    bounds = [1 if d else None for d in dup]
    assert set(enumerate_labelings(file_of, bounds)) == set(multifile_partitions(file_of, dup))


def test_enumeration_guard():
    with pytest.raises(ValueError):
        list(enumerate_labelings([0] * 13))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_incremental_matches_recompute(data):
    r = data.draw(st.integers(1, 12))
    K = data.draw(st.integers(1, 3))
    file_of = sorted(data.draw(st.lists(st.integers(0, K - 1), min_size=r, max_size=r)))
    labels = data.draw(st.lists(st.integers(0, 4), min_size=r, max_size=r))
    C = MultifilePartition.from_labels(labels, file_of, K)
    for _ in range(data.draw(st.integers(0, 25))):
        j = data.draw(st.integers(0, r - 1))
        C.remove_record(j)
        ids = sorted(C.members)
        C.add_record(j, data.draw(st.sampled_from(ids + [NEW])))
        n_h, fcount = C.recompute()
        assert np.array_equal(n_h, C.n_h)
        assert all(np.array_equal(fcount[c], C.fcount[c]) for c in C.fcount)
        assert C.n == C.n_h[1:].sum()
        assert sum(C.file_sizes()) == r


@given(st.lists(st.integers(0, 5), min_size=1, max_size=15))
def test_label_serialization(labels):
    canon = canonical_labels(labels)
    assert canon[0] == 0
    assert np.array_equal(parse_labels(format_labels(labels)), canon)
    # coreference is preserved
    lab = np.asarray(labels)
    assert np.array_equal(lab[:, None] == lab[None, :], canon[:, None] == canon[None, :])


@pytest.mark.parametrize("file_of", [[0, 0, 1, 1, 2], [0, 1, 1, 1], [0, 0, 1, 1, 2, 2]])
def test_matching_oracles_agree(file_of):
    K = max(file_of) + 1
    assert sorted(kpartite_matchings(file_of)) == sorted(multifile_partitions(file_of, [True] * K))
    assert set(enumerate_labelings(file_of, [1] * K)) == set(kpartite_matchings(file_of))
