import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from coopsim.metrics import (AVERAGE, EpisodeRecord, MissingExpertTime, aggregate, expert_times,
                             sct, sct_detail, welch_t_test)
from coopsim.world import EpisodeOutcome, Status
from reference import welch_reference


def outcome(status, t=10.0):
    return EpisodeOutcome(Status(status), t, int(round(t * 10)))


def record(family, strategy, status, t=10.0, t_exp=10.0, config=0, seed=0, n_s=6):
    return EpisodeRecord(family, strategy, n_s, 3, config, seed, outcome(status, t), t_exp)


def test_sct_examples():
    assert sct(outcome("Success", 12.5), 10.0) == pytest.approx(0.8)
    assert sct(outcome("Collision", 3.0), 10.0) == 0.0
    assert sct(outcome("Stagnation", 60.0), 10.0) == 0.0
    assert sct(outcome("Success", 10.0), 10.0) == 1.0


def test_sct_cap_is_flagged():
    assert sct_detail(outcome("Success", 8.0), 10.0) == (1.0, True)
    assert sct_detail(outcome("Success", 12.5), 10.0)[1] is False


def test_sct_needs_expert():
    with pytest.raises(MissingExpertTime):
        sct(outcome("Success"), None)
    with pytest.raises(MissingExpertTime):
        sct(outcome("Success"), 0.0)


@given(st.sampled_from(["Success", "Collision", "Stagnation"]), st.floats(0.1, 60),
       st.floats(0.1, 60))
def test_sct_range(status, t, t_exp):
    v = sct(outcome(status, t), t_exp)
    assert 0.0 <= v <= 1.0
    assert (v == 0.0) == (status != "Success")


def test_aggregate_rates():
    recs = [record("A", "Sel", "Success")] * 68 + [record("A", "Sel", "Collision")] * 10 + \
        [record("A", "Sel", "Stagnation")] * 3
    g = aggregate(recs).group("A", "Sel", 6)
    assert g.episodes == 81
    assert round(100 * g.sr, 1) == 84.0
    assert g.sr + g.cr + g.stagnation == pytest.approx(1.0)
    assert (g.successes, g.collisions, g.stagnations) == (68, 10, 3)


def test_aggregate_all_failures_and_single_success():
    res = aggregate([record("A", "Sel", "Collision"), record("B", "Sel", "Success")])
    a, b = res.group("A", "Sel", 6), res.group("B", "Sel", 6)
    assert (a.sr, a.sct) == (0.0, 0.0)
    assert (b.sr, b.cr) == (1.0, 0.0)


def test_average_row_is_unweighted():
    recs = [record("A", "Sel", "Success")] * 3 + [record("B", "Sel", "Collision")]
    avg = aggregate(recs).group(AVERAGE, "Sel", 6)
    assert avg.sr == pytest.approx(0.5)  # not 3 / 4
    assert avg.episodes == 4


def test_missing_family_is_skipped(caplog):
    res = aggregate([record("A", "Sel", "Success")], families=["A", "B"])
    assert [g.family for g in res.groups] == ["A", AVERAGE]
    assert "no episodes for B" in caplog.text


@given(st.lists(st.tuples(st.sampled_from(["A", "B", "C"]), st.sampled_from(["S", "R"]),
                          st.sampled_from(["Success", "Collision", "Stagnation"])), min_size=1))
def test_rates_sum_to_one(rows):
    res = aggregate([record(f, s, o) for f, s, o in rows])
    for g in res.groups:
        assert g.successes + g.collisions + g.stagnations == g.episodes
        assert g.sr + g.cr + g.stagnation == pytest.approx(1.0, abs=1e-12)
        assert all(0.0 <= x <= 1.0 for x in (g.sr, g.cr, g.stagnation, g.sct))


def test_paired_records():
    recs = [record("A", "Sel", "Success", config=c) for c in range(3)] + \
        [record("A", "Ran", "Collision", config=c) for c in (1, 2, 5)]
    pairs = aggregate(recs).paired(("Sel", 6), ("Ran", 6))
    assert [(a.config_index, b.config_index) for a, b in pairs] == [(1, 1), (2, 2)]


def test_expert_times():
    recs = [record("A", "Oracle", "Success", t=7.5), record("A", "Oracle", "Collision", config=1)]
    assert expert_times(recs) == {("A", 0, 0): 7.5}


def test_welch_reference_value():
    a, b = [1, 1, 1, 0], [0, 0, 0, 1]
    t, p = welch_t_test(a, b)
    assert t == pytest.approx(math.sqrt(2), rel=1e-12)
    ref_t, ref_p = welch_reference(a, b)
    assert t == pytest.approx(ref_t, rel=1e-12)
    assert p == pytest.approx(ref_p, rel=1e-9)
    assert p == pytest.approx(0.2070, abs=5e-5)


def test_welch_identical_samples():
    assert welch_t_test([1, 0, 1], [1, 0, 1]) == (0.0, 1.0)
    assert welch_t_test([1, 1], [1, 1]) == (0.0, 1.0)
    with pytest.raises(ValueError):
        welch_t_test([1, 1], [0, 0])
    with pytest.raises(ValueError):
        welch_t_test([1], [0, 1])


samples = st.lists(st.integers(0, 1), min_size=2, max_size=40)


@given(samples, samples)
def test_welch_matches_scipy_and_is_symmetric(a, b):
    try:
        t, p = welch_t_test(a, b)
    except ValueError:
        assert len(set(a)) == len(set(b)) == 1 and a[0] != b[0]
        return
    t2, p2 = welch_t_test(b, a)
    assert t2 == -t and p2 == pytest.approx(p, rel=1e-12)
    if len(set(a)) + len(set(b)) > 2:
        ref_t, ref_p = welch_reference(a, b)
        assert t == pytest.approx(ref_t, rel=1e-9, abs=1e-12)
        assert p == pytest.approx(ref_p, rel=1e-7, abs=1e-12)
