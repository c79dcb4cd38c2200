from __future__ import annotations

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from ospo.errors import NoCandidates
from ospo.perturbation import PerturbKind
from ospo.selection import (EPSILON, NO_POSITIVE_LOCAL_GAP, GapRecord, SelectionResult, compute_gaps, select_pair,
                            t_score)
from ospo.vqa_scoring import ScoreCard

K = (PerturbKind.SWAP, PerturbKind.REPLACE, PerturbKind.DROP)
gap = st.floats(-2.0, 2.0, allow_nan=False)
pos_gap = st.floats(1e-5, 2.0, allow_nan=False)


def gaps(dl, dg):
    return [GapRecord(k, a, b) for k, a, b in zip(K, dl, dg)]


def test_worked_example():
    r = select_pair(gaps((0.8, 0.4, 0.2), (0.4, 0.1, 0.2)))
    assert r.t_scores == pytest.approx((1.0, 2.0, 0.5), abs=1e-12)
    assert r.chosen_index == 2 and r.chosen_kind is PerturbKind.REPLACE
    assert (r.delta_max_local, r.delta_max_global) == (0.8, 0.4)


def test_tie_goes_to_swap():
    r = select_pair(gaps((0.5,) * 3, (0.2,) * 3))
    assert len(set(r.t_scores)) == 1
    assert r.chosen_index == 1


def test_all_non_positive_discarded():
    r = select_pair(gaps((-0.1, -0.3, 0.0), (0.1, 0.1, 0.1)))
    assert r.discarded and r.reason == NO_POSITIVE_LOCAL_GAP
    assert r.chosen_index is None and r.t_scores == (None, None, None)


def test_skipped_slots():
    r = select_pair([None, GapRecord(PerturbKind.REPLACE, 0.5, 0.0), GapRecord(PerturbKind.DROP, 0.5, 0.5)])
    assert r.t_scores[0] is None
    assert r.chosen_index == 2  # zero global gap is floored at epsilon, giving a huge T
    with pytest.raises(NoCandidates):
        select_pair([None, None, None])
    with pytest.raises(ValueError):
        select_pair(gaps((0.1,) * 3, (0.1,) * 3), epsilon=0)


def test_compute_gaps():
    cards = {PerturbKind.DROP: ScoreCard(1.0, 1.0, 0.5, 0.25), PerturbKind.SWAP: None,
             PerturbKind.REPLACE: ScoreCard(0.9, 1.0, 0.1, 1.0)}
    out = compute_gaps(cards)
    assert out[0] is None
    assert out[1] == GapRecord(PerturbKind.REPLACE, pytest.approx(0.8), 0.0)
    assert out[2] == GapRecord(PerturbKind.DROP, 0.5, 0.75)
    assert compute_gaps([None, cards[PerturbKind.REPLACE], cards[PerturbKind.DROP]]) == out


def test_result_round_trip():
    r = select_pair(gaps((0.8, 0.4, 0.2), (0.4, 0.1, 0.2)))
    assert SelectionResult.from_dict(r.to_dict()) == r
    assert r.to_dict()["chosen_kind"] == "replace"


def brute_force(dl, dg, eps=EPSILON):
    ml, mg = max(dl), max(dg)
    ts = [(a / max(ml, eps)) / (max(b, eps) / max(mg, eps)) if a > 0 else None for a, b in zip(dl, dg)]
    best = None
    for i, t in enumerate(ts):
        if t is not None and (best is None or t > ts[best]):
            best = i
    return ts, (None if best is None else best + 1)


@given(st.tuples(gap, gap, gap), st.tuples(gap, gap, gap))
def test_matches_brute_force(dl, dg):
    r = select_pair(gaps(dl, dg))
    ts, idx = brute_force(dl, dg)
    assert r.chosen_index == idx
    assert r.discarded == (idx is None)
    for a, b in zip(r.t_scores, ts):
        assert (a is None and b is None) or a == b


@given(st.tuples(gap, gap, gap), st.tuples(gap, gap, gap))
def test_chosen_has_positive_local_gap(dl, dg):
    r = select_pair(gaps(dl, dg))
    if not r.discarded:
        assert dl[r.chosen_index - 1] > 0


@given(st.tuples(pos_gap, pos_gap, pos_gap), st.tuples(pos_gap, pos_gap, pos_gap), st.floats(0.01, 0.99))
def test_scale_equivariance(dl, dg, c):
    base = select_pair(gaps(dl, dg))
    ts = base.t_scores
    # skip near-ties where rounding may reorder the argmax
    top = sorted(ts, reverse=True)
    assume(top[0] - top[1] > 1e-9 * top[0])
    assume(min(dl) * c > 1e-5 and min(dg) * c > 1e-5)
    assert select_pair(gaps([x * c for x in dl], dg)).chosen_index == base.chosen_index
    assert select_pair(gaps(dl, [x * c for x in dg])).chosen_index == base.chosen_index


@given(pos_gap, pos_gap, pos_gap, st.floats(1.0, 2.0))
def test_monotone_in_gaps(dl, dg, other, bump):
    ml, mg = 2.0, 2.0
    assume(dl * bump < ml and dg * bump < mg and bump > 1.0 + 1e-9)
    assert t_score(dl * bump, dg, ml, mg) > t_score(dl, dg, ml, mg)
    assert t_score(dl, dg * bump, ml, mg) < t_score(dl, dg, ml, mg)


def test_random_selection_is_uniform_over_present():
    rng = np.random.default_rng(0)
    picks = [select_pair(gaps((-0.5, 0.2, 0.3), (0.1, 0.2, 0.3)), rng=rng).chosen_index for _ in range(3000)]
    freq = np.bincount(picks, minlength=4)[1:] / len(picks)
    assert np.allclose(freq, 1 / 3, atol=0.03)
    skipped = [None, GapRecord(PerturbKind.REPLACE, 0.1, 0.1), GapRecord(PerturbKind.DROP, 0.1, 0.1)]
    assert {select_pair(skipped, rng=rng).chosen_index for _ in range(200)} == {2, 3}
