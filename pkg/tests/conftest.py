import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from multilink.comparison import ComparisonData, file_pair_table, level_histogram  # noqa: E402


def make_comparisons(file_sizes, duplicate_free, levels_of, n_levels, candidates=None) -> ComparisonData:
    """ComparisonData over every valid pair with levels given by ``levels_of(i, j)``.

    ``candidates`` restricts the candidate set; all valid pairs stay in the universe.
    """
    K = len(file_sizes)
    file_of = np.repeat(np.arange(K), file_sizes)
    r = len(file_of)
    pairs = [(i, j) for i in range(r) for j in range(i + 1, r)
             if not (file_of[i] == file_of[j] and duplicate_free[file_of[i]])]
    levels = np.array([levels_of(i, j) for i, j in pairs], dtype=np.int8).reshape(len(pairs), len(n_levels))
    file_pairs, fp_index = file_pair_table(K, duplicate_free)
    pi = np.array([p[0] for p in pairs], dtype=np.int64)
    pj = np.array([p[1] for p in pairs], dtype=np.int64)
    totals = level_histogram(fp_index[file_of[pi], file_of[pj]], levels, len(file_pairs), int(max(n_levels)))
    if candidates is not None:
        keep = np.array([(i, j) in candidates for i, j in pairs], dtype=bool)
        pi, pj, levels = pi[keep], pj[keep], levels[keep]
    return ComparisonData(field_names=[f"f{q}" for q in range(len(n_levels))], n_levels=np.array(n_levels),
                          file_sizes=list(file_sizes), duplicate_free=list(duplicate_free),
                          file_pairs=file_pairs, pair_i=pi, pair_j=pj, levels=levels, totals=totals,
                          universe_size=len(pairs))


def random_levels(rng, n_levels, missing=0.0):
    table = {}

    def levels_of(i, j):
        if (i, j) not in table:
            table[(i, j)] = [(-1 if rng.random() < missing else int(rng.integers(L))) for L in n_levels]
        return table[(i, j)]
    return levels_of


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
