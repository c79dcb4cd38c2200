from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ospo.analysis import (GLOBAL_EDGES, CaseLabel, best_of_n_pair, case_counts, classify_indistinguishable,
                           compare_pipelines, conditional_mean_local, gap_density_report, gap_histogram,
                           indistinguishable_fraction, run_best_of_n, temperature_sweep, write_comparison)
from ospo.backend import CorruptionParams, DecodeParams, SimulatorBackend
from ospo.errors import EmptyManifest, MismatchedQuestionSets
from ospo.prompts import CATEGORIES, generate_base_prompts, parse
from ospo.vqa_scoring import decompose_questions

Y, N = True, False


def test_case_examples():
    assert classify_indistinguishable((Y, Y), (Y, Y)) is CaseLabel.ALL_YES
    assert classify_indistinguishable((N, N, N), (N, N, N)) is CaseLabel.ALL_NO
    assert classify_indistinguishable((Y, N, Y), (Y, N, Y)) is CaseLabel.ALL_SAME
    assert classify_indistinguishable((Y, Y, N), (Y, N, N)) is CaseLabel.DISTINCT
    with pytest.raises(MismatchedQuestionSets):
        classify_indistinguishable((Y,), (Y, N))


answers = st.integers(1, 8).flatmap(lambda n: st.tuples(st.lists(st.booleans(), min_size=n, max_size=n),
                                                        st.lists(st.booleans(), min_size=n, max_size=n)))


@given(answers)
def test_label_properties(pair):
    best, worst = pair
    lab = classify_indistinguishable(best, worst)
    if lab is CaseLabel.ALL_YES:
        assert sum(best) == sum(worst) == len(best)
    if lab is CaseLabel.DISTINCT:
        assert best != worst
    else:
        assert best == worst
    assert lab.indistinguishable == (best == worst)


@given(st.lists(answers, min_size=1, max_size=30))
def test_partition(pairs):
    labels = [classify_indistinguishable(b, w) for b, w in pairs]
    assert sum(case_counts(labels).values()) == len(pairs)
    assert indistinguishable_fraction(labels) == sum(b == w for b, w in pairs) / len(pairs)


def test_500_pairs_per_category(pools):
    sim = SimulatorBackend(pools)
    for cat in CATEGORIES:
        prompts = generate_base_prompts(cat, 500, pools, seed=0)
        res = run_best_of_n(prompts, 10, DecodeParams(), CorruptionParams(0.1, 0.1, 0.05), sim, seed=0)
        assert len(res) == 500
        assert all(r.correct[r.best_index] >= r.correct[r.worst_index] for r in res)
        assert all(r.best_index != r.worst_index for r in res)


def test_zero_corruption_best_equals_worst(pools):
    sim = SimulatorBackend(pools)
    prompts = generate_base_prompts("Complex", 30, pools, seed=2)
    for r in run_best_of_n(prompts, 4, DecodeParams(), CorruptionParams(), sim, seed=0):
        assert r.best_image.payload == r.worst_image.payload
        assert classify_indistinguishable(r.best_answers, r.worst_answers) is CaseLabel.ALL_YES


def test_faithful_is_best(pools):
    sim = SimulatorBackend(pools)
    p = parse("a red car and a blue dog", "Attribute", pools)
    bad = sim.generate_image(p, DecodeParams(), CorruptionParams(p_omit=1.0))
    good = sim.generate_image(p, DecodeParams())
    r = best_of_n_pair(p, [bad, good], decompose_questions(p), sim)
    assert (r.best_index, r.worst_index) == (1, 0)
    r = best_of_n_pair(p, [good, good], decompose_questions(p), sim)
    assert (r.best_index, r.worst_index) == (0, 1)  # ties go to the lower index


def test_compare_zero_corruption(pools):
    sim = SimulatorBackend(pools)
    prompts = generate_base_prompts("Attribute", 40, pools, seed=0)
    rep = compare_pipelines(prompts, CorruptionParams(), sim, seed=0, n=10)
    assert rep.bon_fraction == 1.0
    assert rep.ospo_fraction < 1.0
    assert case_counts(rep.bon_labels)["AllYes"] == 40


def test_temperature_lowers_best_of_n_fraction(pools):
    sim = SimulatorBackend(pools)
    prompts = generate_base_prompts("Attribute", 200, pools, seed=0)
    fr = temperature_sweep(prompts, [1.0, 2.0, 4.0], CorruptionParams(0.05, 0.05, 0.0), sim, seed=0)
    assert fr[1.0] > fr[2.0] > fr[4.0]


def test_histogram_single_pair():
    h = gap_histogram([(0.8, 0.1)])
    assert h.counts.sum() == 1
    g, k = np.argwhere(h.counts)[0]
    assert (GLOBAL_EDGES[g], GLOBAL_EDGES[g + 1]) == (0.0, 0.25)
    assert h.density[g, k] == pytest.approx(1 / 0.2)


def test_histogram_identical_pairs():
    h = gap_histogram([(0.3, -0.6)] * 7)
    assert np.count_nonzero(h.counts) == 1 and h.counts.max() == 7


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=60))
def test_histogram_properties(gaps):
    h = gap_histogram(gaps)
    assert h.counts.sum() == len(gaps)
    assert (h.density >= 0).all()
    width = np.diff(h.local_edges)
    for g in np.nonzero(h.bin_totals)[0]:
        assert (h.density[g] * width).sum() == pytest.approx(1.0)
    assert h.counts.shape == (16, 20)


def test_histogram_rejects_out_of_range():
    with pytest.raises(ValueError):
        gap_histogram([(2.5, 0.0)])
    with pytest.raises(EmptyManifest):
        gap_histogram([])


def test_gap_density_report_from_records(tmp_path):
    recs = [{"sample_id": "a", "stage": "select", "data": {"discarded": False,
                                                             "gap": {"delta_local": 1.0, "delta_global": 0.0}}},
            {"sample_id": "b", "stage": "select", "data": {"discarded": True, "gap": None}},
            {"sample_id": "b", "stage": "score", "data": {}}]
    h = gap_density_report(recs, tmp_path / "g.csv")
    assert h.counts.sum() == 1
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "global_lo,global_hi,local_lo,local_hi,count,density"
    assert len(lines) == 1 + 16 * 20
    with pytest.raises(EmptyManifest):
        gap_density_report(recs[1:])


def test_conditional_mean_local():
    assert conditional_mean_local([(1.0, 0.0), (0.5, 0.4), (2.0, 1.0)]) == 0.75
    assert np.isnan(conditional_mean_local([(1.0, 1.0)]))


def test_write_comparison(tmp_path, pools):
    sim = SimulatorBackend(pools)
    prompts = generate_base_prompts("Attribute", 20, pools, seed=0)
    rep = compare_pipelines(prompts, CorruptionParams(0.2, 0.2), sim, seed=0, n=4)
    s = write_comparison(rep, tmp_path)
    for name in ("report.md", "cases.csv", "gap_density.csv", "gap_density_best_of_n.csv"):
        assert (tmp_path / name).exists()
    assert s["prompts"] == 20 and s["n"] == 4
    assert len(rep.bon_labels) == 20
    assert len(rep.ospo_labels) == 20  # Replace always applies to attribute prompts
