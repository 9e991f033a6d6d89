import csv
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bouncelab import peeling as P
from bouncelab.numerics import derive_stream
from bouncelab.peeling import (BoundaryLedger, BudgetExceeded, Form, FormKind, HalfInt,
                               HorodistanceWalk, LedgerError, Original, c_dis, c_dis_stream,
                               delta_minus, delta_plus, horodistance_oracle, ledger_crosscheck,
                               moment_checks, q_left, q_left_exact, record_masks, rescale_walk,
                               run_walk, sample_forms, side_tail, tau_chain, walk_endpoint)

POLICY_NAMES = sorted(P.POLICIES)


# ---------------------------------------------------------------------------
# jump law


def test_q_left_small_values():
    assert q_left_exact(1) == Fraction(1, 8)
    assert q_left_exact(2) == Fraction(1, 48)
    assert q_left_exact(3) == Fraction(1, 128)


@given(st.integers(1, 150))
def test_q_left_matches_factorials(k):
    assert q_left(k) == pytest.approx(float(q_left_exact(k)), rel=1e-12)


def test_q_left_array_and_errors():
    arr = q_left(np.arange(1, 6))
    assert arr.shape == (5,)
    assert np.all(np.diff(arr) < 0)
    with pytest.raises(ValueError):
        q_left(0)
    with pytest.raises(ValueError):
        q_left_exact(0)


def test_q_left_power_law():
    # q(k) k^{5/2} -> 1 / (4 sqrt(pi))
    k = 10.0 ** 8
    assert q_left(k) * k ** 2.5 == pytest.approx(1 / (4 * math.sqrt(math.pi)), rel=1e-7)


def test_moment_checks():
    m = moment_checks(10**6)
    # sum_{k > K} k q(k) ~ 1 / (2 sqrt(pi K))
    assert m["first_moment"] + 1 / (2 * math.sqrt(math.pi * 1e6)) == pytest.approx(1 / 3,
                                                                                 abs=1e-6)
    assert abs(m["mass"] - 1) < 6e-4
    assert m["mass_tail_corrected"] == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        moment_checks(0)


def test_side_tail_against_sum():
    k = np.arange(1, 200_001)
    exact = 1 / 6 - float(np.sum(q_left(k)))
    assert side_tail(200_000) == pytest.approx(exact, rel=1e-4)


def test_form_frequencies():
    n = 1_000_000
    kinds, ks = sample_forms(derive_stream(30, 0), n)
    for kind, p in [(0, 2 / 3), (1, 1 / 6), (2, 1 / 6)]:
        f = np.mean(kinds == kind)
        assert abs(f - p) < 4 * math.sqrt(p * (1 - p) / n)
    for k in (1, 2, 3, 10):
        p = q_left(k)
        f = np.mean((kinds == 1) & (ks == k))
        assert abs(f - p) < 4 * math.sqrt(p * (1 - p) / n)
    assert np.all(ks[kinds == 0] == 1)


def test_truncated_drift():
    # E[Delta+ ; k <= K] = 1/3 - sum_{k <= K} k q(k), in undoubled units
    n, cut = 1_000_000, 100
    kinds, ks = sample_forms(derive_stream(30, 1), n)
    d = np.where(kinds == 0, 0.5, np.where(kinds == 2, -ks.astype(float), 0.0))
    d[(kinds == 2) & (ks > cut)] = 0.0
    kk = np.arange(1, cut + 1)
    expected = 1 / 3 - float(np.sum(kk * q_left(kk)))
    assert abs(d.mean() - expected) < 4 * d.std() / math.sqrt(n)


def test_tail_draw_conditional_law():
    gen = np.random.default_rng(31)
    k0, n = 5, 100_000
    draws = np.array([P._tail_k(gen, k0) for _ in range(n)])
    assert draws.min() > k0
    tail = 1 / 6 - sum(float(q_left_exact(k)) for k in range(1, k0 + 1))
    for k in (6, 7, 8, 20):
        p = q_left(k) / tail
        assert abs(np.mean(draws == k) - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_sample_form_is_valid():
    f = P.sample_form(derive_stream(32, 0))
    assert isinstance(f, Form) and f.k >= 1


# ---------------------------------------------------------------------------
# forms and increments


def test_form_validation():
    with pytest.raises(ValueError):
        Form.left(0)
    with pytest.raises(ValueError):
        Form(FormKind.CENTER, 2)


def test_half_int_arithmetic():
    assert HalfInt.of(0.5) + HalfInt.of(1) == HalfInt(3)
    assert -HalfInt.of(2) == HalfInt(-4)
    assert float(HalfInt.of(Fraction(-3, 2))) == -1.5
    assert HalfInt.of(1).is_integer() and not HalfInt(1).is_integer()
    with pytest.raises(ValueError):
        HalfInt.of(0.25)


@pytest.mark.parametrize("form,dp,dm", [
    (Form.center(), 0.5, 0.5),
    (Form.left(3), 0.0, -3.0),
    (Form.right(2), -2.0, 0.0),
])
def test_delta_examples(form, dp, dm):
    assert float(delta_plus(form)) == dp
    assert float(delta_minus(form)) == dm


def _walk_from_forms(forms, policy):
    # the first step of a stream is forced by searching seeds
    for seed in range(10_000):
        w = run_walk(len(forms), policy, derive_stream(33, seed))
        if all(w.form(i) == f for i, f in enumerate(forms)):
            return w
    raise AssertionError("no seed produced the requested forms")


def test_percolation_center_white():
    for seed in range(1000):
        w = run_walk(1, "percolation", derive_stream(34, seed))
        if w.kind[0] == 0 and w.coin[0] == 1:
            break
    assert (w.h_plus[1], w.h_minus[1]) == (2, 0)
    assert w.eta_plus[0] == 1


def test_left_jump_example():
    w = _walk_from_forms([Form.left(2)], "predicted-edge")
    assert (w.h_plus[1], w.h_minus[1]) == (0, -4)


@pytest.mark.parametrize("policy", POLICY_NAMES)
def test_walk_invariants(policy):
    w = run_walk(20_000, policy, derive_stream(35, P.POLICIES[policy]))
    assert np.all(w.eta_plus + w.eta_minus == 0)
    odd = (w.eta_plus % 2) != 0
    assert np.array_equal(odd, w.kind == 0)
    expect_dp = np.where(w.kind == 0, 1, np.where(w.kind == 2, -2 * w.k, 0))
    expect_dm = np.where(w.kind == 0, 1, np.where(w.kind == 1, -2 * w.k, 0))
    assert np.array_equal(w.delta_plus(), expect_dp)
    assert np.array_equal(w.delta_minus(), expect_dm)
    assert w.h_plus[0] == 0 and w.h_minus[0] == 0


def test_predicted_edge_eta_sum_bounded():
    w = run_walk(20_000, "predicted-edge", derive_stream(36, 0))
    assert set(np.cumsum(w.eta_plus).tolist()) <= {0, 1}


def test_walk_endpoint_matches_walk():
    for policy in POLICY_NAMES:
        w = run_walk(5000, policy, derive_stream(37, 1))
        sp, sm, hp, hm = walk_endpoint(5000, policy, derive_stream(37, 1))
        assert (sp, sm, hp, hm) == (int(w.delta_plus().sum()), int(w.delta_minus().sum()),
                                    int(w.h_plus[-1]), int(w.h_minus[-1]))


def test_walk_extend_is_continuation():
    whole = run_walk(3000, "percolation", derive_stream(38, 0))
    part = run_walk(1000, "percolation", derive_stream(38, 0)).extend(2000)
    assert np.array_equal(whole.h_plus, part.h_plus)
    assert np.array_equal(whole.h_minus_half, part.h_minus_half)


def test_policy_errors():
    with pytest.raises(ValueError):
        run_walk(10, "bogus", derive_stream(1, 1))
    with pytest.raises(ValueError):
        run_walk(0, "percolation", derive_stream(1, 1))
    with pytest.raises(ValueError):
        walk_endpoint(0, "percolation", derive_stream(1, 1))


# ---------------------------------------------------------------------------
# boundary ledger


@pytest.mark.parametrize("k", range(1, 6))
def test_ledger_right_jump(k):
    ledger = BoundaryLedger()
    rep = ledger.apply(Form.right(k))
    assert rep.right_count == k and rep.left_count == 0
    assert ledger.swallowed_right == k
    hp, hm = horodistance_oracle(ledger)
    assert (float(hp), float(hm)) == (-k, 0.0)


@pytest.mark.parametrize("k", range(1, 6))
def test_ledger_left_jump(k):
    ledger = BoundaryLedger()
    rep = ledger.apply(Form.left(k))
    assert rep.left_count == k and rep.right_count == 0
    hp, hm = horodistance_oracle(ledger)
    assert (float(hp), float(hm)) == (0.0, -k)


def test_ledger_right_one_labels():
    ledger = BoundaryLedger()
    rep = ledger.apply(Form.right(1))
    assert rep.right == [Original(1)]
    assert ledger.labels_unique()


@pytest.mark.parametrize("choice,expected", [("left", (1.0, 0.0)), ("right", (0.0, 1.0))])
def test_ledger_center(choice, expected):
    ledger = BoundaryLedger()
    ledger.apply(Form.center(), choice)
    hp, hm = horodistance_oracle(ledger)
    assert (float(hp), float(hm)) == expected
    assert ledger.length_change == 1


def test_ledger_rejects_swallowed_label():
    ledger = BoundaryLedger()
    ledger.apply(Form.right(2))
    with pytest.raises(LedgerError):
        ledger.set_cursor(Original(1))
    with pytest.raises(LedgerError):
        ledger.set_cursor(Original(50))


def test_ledger_jump_past_window():
    ledger = BoundaryLedger(window=1)
    ledger.apply(Form.right(4))
    assert ledger.swallowed_right == 4
    assert float(horodistance_oracle(ledger)[0]) == -4


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(POLICY_NAMES), st.integers(1, 400))
def test_ledger_crosscheck_clean(seed, policy, n):
    w = run_walk(n, policy, derive_stream(seed, 39))
    assert ledger_crosscheck(w) == {"eta_sum": 0, "parity": 0, "swallow": 0, "oracle": 0,
                                    "unique": 0}


# ---------------------------------------------------------------------------
# record chains and commuting counts


def _hand_walk(hp_half, hm_half):
    hp_half = np.asarray(hp_half, dtype=np.int64)
    hm_half = np.asarray(hm_half, dtype=np.int64)
    n = hp_half.size
    zeros = np.zeros(n + 1, dtype=np.int64)
    return HorodistanceWalk("predicted-edge", np.zeros(n, np.int8), np.ones(n, np.int64),
                            np.zeros(n, np.int8), hp_half, hm_half, zeros, zeros.copy(),
                            P._state0())


def test_tau_chain_constructed():
    w = _hand_walk([2, 4, -4], [2, 4, -4])
    assert tau_chain(w, 0).indices[0] == 2
    assert tau_chain(w, 0).truncated


def test_tau_chain_decreasing_starts_at_start():
    w = _hand_walk([-1, -2, -3, -4], [-1, -2, -3, -4])
    chain = tau_chain(w, 1, max_terms=3)
    assert chain.indices == [1, 2, 3] and not chain.truncated
    with pytest.raises(ValueError):
        tau_chain(w, 4)


def test_record_masks_include_zero_level():
    w = _hand_walk([1, 0, -2], [0, 3, 3])
    rec_p, rec_m = record_masks(w)
    assert rec_p.tolist() == [False, True, True]
    assert rec_m.tolist() == [True, False, False]


def test_cdis_hand_walk():
    w = _hand_walk([-4, 0, -8], [1, -2, -2])
    assert c_dis(w, 0.5, 4) == 3


def test_cdis_one_when_levels_coincide():
    w = run_walk(2000, "predicted-edge", derive_stream(40, 0))
    n = int(-w.min_plus()[-1] // 2)
    assert n >= 1
    assert c_dis(w, 1.0, n) == 1


def test_cdis_odd_and_stream_consistent():
    for policy in POLICY_NAMES:
        for seed in range(6):
            try:
                a = c_dis(run_walk(50, policy, derive_stream(41, seed)), 0.25, 8, 10**6)
            except BudgetExceeded:
                a = None
            try:
                b = c_dis_stream(0.25, 8, policy, derive_stream(41, seed), 10**6)
            except BudgetExceeded:
                b = None
            assert a == b
            assert a is None or a % 2 == 1


def test_cdis_errors():
    w = run_walk(10, "percolation", derive_stream(42, 0))
    with pytest.raises(ValueError):
        c_dis(w, 0.01, 10)
    with pytest.raises(BudgetExceeded):
        c_dis_stream(0.5, 10**6, "percolation", derive_stream(42, 1), budget=100)


# ---------------------------------------------------------------------------
# output helpers


def test_rescale_walk():
    w = run_walk(1000, "percolation", derive_stream(43, 0))
    hp, hm = rescale_walk(w, 1000)
    assert hp.shape == (1001,) and hm.shape == (1001,)
    c = 3 ** (2 / 3) * 1000 ** (-2 / 3) / 2
    assert hp[-1] == pytest.approx(c * w.h_plus[-1])
    p, m = rescale_walk(w, 1000, t=0.5)
    assert p == pytest.approx(c * w.h_plus[500])
    with pytest.raises(ValueError):
        rescale_walk(w, 1001)


def test_walk_to_csv(tmp_path):
    w = run_walk(50, "predicted-edge", derive_stream(44, 0))
    path = tmp_path / "walk.csv"
    w.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["i", "form_kind", "k", "dH_plus_doubled", "dH_minus_doubled",
                       "eta_plus_doubled"]
    assert len(rows) == 51
    assert {r[1] for r in rows[1:]} <= {"C", "L", "R"}
