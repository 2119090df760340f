import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multilink.datastore import DataFile, FileCollection
from multilink.partition import MultifilePartition
from multilink.simlab import (SIM_SCHEMA, DistortionModel, OverlapScenario, aggregate, distort, generate_truth,
                              scenario_presets, score)
from multilink.simlab.distort import FIELD_ERRORS, apply_error, error_allocation


def test_presets_sum_to_one_and_triples():
    presets = scenario_presets()
    for sc in presets.values():
        assert sum(sc.p.values()) == pytest.approx(1.0)
        assert sc.probability_vector()[1:].sum() == pytest.approx(1.0)
    assert presets["high"].p["111"] == pytest.approx(0.15)
    assert presets["duplicates"].p["111"] == pytest.approx(0.025)
    assert presets["no-three-file"].p["111"] == 0.0
    assert not presets["duplicates"].duplicate_free and presets["high"].duplicate_free


def test_high_overlap_multi_file_share():
    sc = scenario_presets()["high"]
    multi = sum(v for k, v in sc.p.items() if k.count("1") > 1)
    assert multi == pytest.approx(0.60)


def test_scenario_validation():
    with pytest.raises(ValueError):
        OverlapScenario("bad", {"10": 0.5, "01": 0.6})
    with pytest.raises(ValueError):
        OverlapScenario("bad", {"10": 0.5, "011": 0.5})


def test_pattern_frequencies_match_probabilities():
    sc = scenario_presets()["medium"].with_n(10_000)
    sim = generate_truth(sc, np.random.default_rng(0))
    N = sim.n_entities
    p = sc.probability_vector()
    freq = np.bincount(sim.patterns, minlength=len(p)) / N
    for h in range(1, len(p)):
        se = math.sqrt(p[h] * (1 - p[h]) / N)
        assert abs(freq[h] - p[h]) <= 3 * se + 1e-12


def test_concentrated_pattern_gives_one_file():
    sc = OverlapScenario("one", {"010": 1.0, "100": 0.0, "001": 0.0}, n=40)
    sim = generate_truth(sc, np.random.default_rng(1))
    assert sim.files.sizes == [0, 40, 0]
    assert len(set(sim.truth.tolist())) == 40


@pytest.mark.parametrize("name", ["high", "duplicates"])
def test_truth_respects_duplicate_flags(name):
    sc = scenario_presets(n=200, duplicate_mean=0.8)[name]
    sim = generate_truth(sc, np.random.default_rng(2))
    file_of = np.repeat(np.arange(3), sim.files.sizes)
    bounds = [1 if d else None for d in sim.files.duplicate_free]
    C = MultifilePartition.from_labels(sim.truth, file_of, 3, bounds)
    assert C.is_valid()
    assert C.n == sim.n_entities
    if name == "duplicates":
        assert C.max_cluster_size() > 3            # some entity is duplicated within a file


def _collection(n=60, seed=3):
    return generate_truth(OverlapScenario("t", {"100": 1 / 3, "010": 1 / 3, "001": 1 / 3}, n=n),
                          np.random.default_rng(seed)).files


def test_zero_errors_is_identity():
    files = _collection()
    out = distort(files, DistortionModel(errors=0), np.random.default_rng(0))
    assert [f.rows for f in out.files] == [f.rows for f in files.files]


def test_seven_errors_touch_every_field():
    files = _collection()
    before = [list(r) for f in files.files for r in f.rows]
    out = distort(files, DistortionModel(errors=7), np.random.default_rng(1))
    after = [r for f in out.files for r in f.rows]
    for a, b in zip(before, after):
        assert all(x != y for x, y in zip(a, b))
    # the input is left untouched
    assert before == [list(r) for f in files.files for r in f.rows]


def test_sex_only_goes_missing():
    rng = np.random.default_rng(2)
    for _ in range(50):
        value, kind = apply_error("f", "sex", rng)
        assert value is None and kind == "missing"
    assert FIELD_ERRORS["sex"] == ("missing",)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 11), st.integers(0, 10_000))
def test_allocation_caps(E, seed):
    model = DistortionModel(errors=E)
    counts = error_allocation(model, SIM_SCHEMA.names, np.random.default_rng(seed))
    assert counts.sum() == E
    assert (counts > 0).sum() == min(E, len(SIM_SCHEMA.names))
    for name, c in zip(SIM_SCHEMA.names, counts):
        assert c <= model.field_cap(name) <= 2


def test_distortion_bounds_fields_changed():
    files = _collection(80, 4)
    for E in (1, 3, 5):
        out = distort(files, DistortionModel(errors=E), np.random.default_rng(E))
        for f0, f1 in zip(files.files, out.files):
            for a, b in zip(f0.rows, f1.rows):
                assert sum(x != y for x, y in zip(a, b)) <= E


def test_distortion_deterministic():
    files = _collection()
    a = distort(files, DistortionModel(errors=3), np.random.default_rng(7))
    b = distort(files, DistortionModel(errors=3), np.random.default_rng(7))
    assert [f.rows for f in a.files] == [f.rows for f in b.files]


def test_too_many_errors_rejected():
    with pytest.raises(ValueError):
        DistortionModel(errors=12)


def test_score_identity_and_arithmetic():
    m = score([0, 0, 1, 2, 2], [0, 0, 1, 2, 2])
    assert (m.precision, m.recall, m.abstention) == (1.0, 1.0, 0.0)
    # truth {0,1,2},{3}; estimate {0,1},{2,3}: TM=1, FM=1, FNM=2
    m = score([0, 0, 0, 1], [5, 5, 6, 6])
    assert (m.true_matches, m.false_matches, m.false_non_matches) == (1, 1, 2)
    # TM=3, FM=1, FNM=1
    m = score([0, 0, 0, 1, 1, 2], [0, 0, 0, 1, 2, 2])
    assert (m.true_matches, m.false_matches, m.false_non_matches) == (3, 1, 1)
    assert m.precision == 0.75 and m.recall == 0.75


def test_score_edge_cases():
    m = score([0, 0, 1], [0, 1, 2])
    assert math.isnan(m.precision) and m.recall == 0.0
    m = score([0, 0, 1, 1], [0, -1, 1, 1])
    assert m.abstention == 0.25 and m.precision == 1.0 and m.recall == 1.0
    assert m.n_hat == 2 and m.n_true == 2 and m.n_error == 0


@given(st.lists(st.integers(0, 6), min_size=1, max_size=30))
def test_score_perfect_on_itself(z):
    m = score(z, z)
    assert m.abstention == 0.0 and m.n_error == 0
    assert m.precision == 1.0 or math.isnan(m.precision)
    assert m.recall == 1.0 or math.isnan(m.recall)


def test_aggregate():
    rows = [dict(precision=p, recall=1.0, abstention=0.0, n_error=e)
            for p, e in [(0.5, 1), (1.0, -1), (math.nan, 3)]]
    agg = aggregate(rows)
    assert agg["precision"]["median"] == 0.75 and agg["precision"]["count"] == 2
    assert agg["n_bias"] == pytest.approx(1.0) and agg["n_mse"] == pytest.approx(11 / 3)
    assert agg["replicates"] == 3


def test_unequal_plan_blanks_fields():
    files = _collection(30, 5)
    out = distort(files, DistortionModel(plan="unequal"), np.random.default_rng(0))
    age = SIM_SCHEMA.names.index("age")
    assert all(r[age] is None for r in out.files[0].rows)
    assert isinstance(out, FileCollection) and isinstance(out.files[0], DataFile)
