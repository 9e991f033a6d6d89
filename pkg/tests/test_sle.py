import csv
import math

import mpmath
import numpy as np
import pytest
from scipy import special

from bouncelab import sle
from bouncelab.numerics import derive_stream, ks_distance, mean_stderr
from bouncelab.peeling import BudgetExceeded

# frozen with mpmath: B(1/3, 1/3), the Green function f(1/2) from the 3F2
# form, f(1) = pi / (7 sqrt 3)
LAMBDA = 5.29991625085634987
F_HALF = 0.028233972159631072
F_ONE = 0.25911419489060255


def test_lambda_identities():
    mpmath.mp.dps = 30
    beta = mpmath.beta(mpmath.mpf(1) / 3, mpmath.mpf(1) / 3)
    alt = mpmath.gamma(mpmath.mpf(1) / 6) * mpmath.gamma(mpmath.mpf(1) / 3) / (
        mpmath.mpf(2) ** (mpmath.mpf(2) / 3) * mpmath.sqrt(mpmath.pi))
    assert float(beta) == pytest.approx(LAMBDA, rel=1e-16)
    assert float(alt) == pytest.approx(LAMBDA, rel=1e-16)
    assert sle.LAMBDA == pytest.approx(LAMBDA, rel=1e-14)


def test_rho_checks():
    r = sle.rho_checks()
    assert r["rho_mass"] == pytest.approx(1.0, abs=1e-11)
    assert r["rho_inverse_mean"] == pytest.approx(7.0, abs=1e-10)
    assert r["phi_one"] == pytest.approx(LAMBDA, abs=1e-10)
    assert r["Lambda"] == pytest.approx(LAMBDA, rel=1e-14)


def test_sample_rho_mean_and_law():
    x = sle.sample_rho(derive_stream(70, 0), 200_000)
    m, se = mean_stderr(1 / (x * (1 - x)))
    assert abs(m - 7.0) < 4 * se


def test_phi_round_trip():
    x = np.array([0.0, 1e-6, 0.3, 0.5, 0.9, 1.0])
    assert np.allclose(sle.phi_inv(sle.phi(x)), x, atol=1e-12)
    assert sle.phi(1.0) == pytest.approx(LAMBDA, rel=1e-14)


def test_f_at_one():
    assert sle.f_ode_oracle() == pytest.approx(F_ONE, abs=1e-11)
    assert sle.T1_MEAN == pytest.approx(F_ONE, rel=1e-15)


def test_f_boundary_and_small_x():
    vals = sle.f_ode_solution([0.0, 1e-3])
    assert vals[0] == 0.0
    assert vals[1] / 1e-6 == pytest.approx(0.1, rel=1e-2)


@pytest.mark.parametrize("x", [0.1, 0.5, 0.9])
def test_series_against_ode(x):
    assert sle.f_closed_form(x) == pytest.approx(float(sle.f_ode_solution([x])[0]), abs=1e-10)


def test_series_against_hypergeometric():
    assert sle.f_closed_form(0.5) == pytest.approx(F_HALF, abs=1e-14)
    assert float(sle.f_ode_solution([0.5])[0]) == pytest.approx(F_HALF, abs=1e-11)


# ---------------------------------------------------------------------------
# log-time backend


def test_step_z_invariants():
    state = sle.LogTimeState.start(0.5)
    rng = derive_stream(71, 0)
    prev = state.logDelta
    for _ in range(40):
        sle.step_z(state, 0.25, rng, dr_max=1e-4)
        assert 0.0 <= state.Z <= 1.0
        assert state.logDelta >= prev
        prev = state.logDelta
    assert state.r == pytest.approx(10.0, abs=1e-3)
    sides = [h[0] for h in state.hits]
    assert sides and sides[0] == 1
    assert all(a != b for a, b in zip(sides, sides[1:]))
    times = [h[1] for h in state.hits]
    assert times == sorted(times)
    # log t is nondecreasing along the hits
    assert all(b[2] >= a[2] for a, b in zip(state.hits, state.hits[1:]))


def test_step_z_errors():
    with pytest.raises(ValueError):
        sle.step_z(sle.LogTimeState.start(0.5), 0.0, derive_stream(1, 1))
    with pytest.raises(ValueError):
        sle.LogTimeState.start(1.5)


def test_step_z_symmetric_start():
    # a start at 0 awaiting 1 and a start at 1 awaiting 0 are mirror images
    a = sle.LogTimeState.start(0.0, 1)
    b = sle.LogTimeState.start(1.0, 0)
    sle.step_z(a, 1.0, derive_stream(72, 0), dr_max=1e-4)
    sle.step_z(b, 1.0, derive_stream(72, 0), dr_max=1e-4)
    assert a.Z == pytest.approx(1.0 - b.Z, abs=1e-6)
    assert a.logDelta == pytest.approx(b.logDelta, rel=1e-9)


def test_log_delta_rate():
    # d log Delta / dr averages 14 under the invariant law
    state = sle.LogTimeState.start(0.5)
    sle.step_z(state, 200.0, derive_stream(73, 0), dr_max=1e-4)
    assert state.logDelta / state.r == pytest.approx(14.0, abs=0.7)
    assert state.logT.log_value / state.r == pytest.approx(28.0, abs=1.4)


def test_first_hit_from_half():
    # mean r-time from 1/2 to 1 is f(1) - f(1/2)
    vals = [sle.z_first_hit(0.5, 1, derive_stream(74, i), dr_max=1e-4) for i in range(3000)]
    m, se = mean_stderr(vals)
    assert abs(m - (F_ONE - F_HALF)) < 4 * se


def test_t1_statistics_small():
    m, se = sle.t1_statistics(3000, 1e-4, derive_stream(75, 0))
    assert abs(m - F_ONE) < 4 * se
    m1, se1 = sle.t1_statistics(3000, 1e-4, derive_stream(75, 1), start=1)
    assert abs(m1 - F_ONE) < 4 * se1


def test_first_hit_budget():
    with pytest.raises(BudgetExceeded):
        sle.z_first_hit(0.0, 1, derive_stream(76, 0), max_steps=10)


def test_ergodic_average_small():
    m, se = sle.z_ergodic_average(20.0, 10, derive_stream(77, 0), dr_max=1e-4)
    assert abs(m - 7.0) < 0.5


def test_theta_rate_small_and_errors():
    res = sle.theta_rate(10, derive_stream(78, 0), replicas=20, dr_max=1e-4)
    assert set(res) == {"logT_per_hit", "r_per_hit", "logT_per_r"}
    assert res["logT_per_r"][0] == pytest.approx(28.0, abs=4.0)
    with pytest.raises(ValueError):
        sle.theta_rate(5, derive_stream(78, 0))


def test_z_csv_outputs(tmp_path):
    state = sle.LogTimeState.start(0.5)
    path = tmp_path / "z.csv"
    sle.z_trajectory_csv(state, 1.0, 10, derive_stream(79, 0), path, dr_max=1e-4)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["r", "Z", "logDelta", "logT"] and len(rows) == 12
    tpath = tmp_path / "touch.csv"
    sle.touch_log_csv([(1, 0.1, 2.0), (0, 0.3, 5.0)], tpath)
    rows = list(csv.reader(open(tpath)))
    assert rows == [["index", "side", "r", "logT"], ["1", "1", "0.1", "2.0"],
                    ["2", "0", "0.3", "5.0"]]


# ---------------------------------------------------------------------------
# physical-time triple


def test_bridge_hit_table_monotone():
    lz, pz = sle.bridge_hit_table()
    assert np.all(np.diff(pz) <= 1e-15)
    assert pz[0] == pytest.approx(1.0, abs=1e-2) and pz[-1] < 1e-40


def test_exit_at_one_matches_betainc():
    ztab = sle.natural_scale_tables()[0]
    s = np.array([0.0, 1e-3, 0.05, 0.3, 0.5, 0.77, 0.999, 1.0])
    vals = np.array([sle._exit_at_one(v, ztab) for v in s])
    assert np.allclose(vals, special.betainc(1 / 3, 1 / 3, s), atol=1e-4)


def test_step_triple_basics():
    state = sle.TripleState()
    rng = derive_stream(80, 0)
    sle.step_triple(state, 1e-3, rng)
    assert state.G > 0 and state.D > 0
    assert state.Delta == pytest.approx(math.sqrt(state.G) + math.sqrt(state.D))
    assert state.L < state.U < state.R
    before = (state.G, state.D, state.U)
    sle.step_triple(state, 1e-14, rng)
    assert state.G == pytest.approx(before[0], rel=1e-4)
    assert state.D == pytest.approx(before[1], rel=1e-4)
    with pytest.raises(ValueError):
        sle.step_triple(state, 0.0, rng)


def test_step_triple_swallows_in_order():
    # marked points further right are swallowed no earlier
    order = []
    for seed in range(20):
        state = sle.TripleState()
        rng = derive_stream(81, seed)
        sle.step_triple(state, 1e-4, rng)
        state.marked = [(i, state.R + h) for i, h in enumerate((0.05, 0.2, 0.6))]
        while state.marked and state.t < 5.0:
            sle.step_triple(state, 1e-3 * max(state.t, 1e-2), rng)
        order.append([lab for lab, _ in state.swallowed])
        times = [t for _, t in state.swallowed]
        assert times == sorted(times)
        assert all(t > 0 for t, _ in state.touches)
    for labels in order:
        assert labels == sorted(labels)
    assert any(order)


def test_triple_mean_g():
    # sqrt(G / 6) is a Bessel process of dimension 5/3, so E G_t = 10 t
    g = np.array([sle.triple_observe([1.0], derive_stream(82, i))[0][0] for i in range(2000)])
    m, se = mean_stderr(g)
    assert abs(m - 10.0) < 4 * se


def test_triple_observe_errors():
    with pytest.raises(ValueError):
        sle.triple_observe([1.0, 0.5], derive_stream(1, 1))


def test_comsle_direct_counts():
    xs = [1.0, math.e, math.e ** 2]
    for seed in range(10):
        res = sle.comsle_direct(xs, derive_stream(83, seed))
        c = res.counts
        assert c[0] == 1
        assert np.all(c % 2 == 1) and np.all(np.diff(c) >= 0)
        assert 0.0 <= res.z_at_one <= 1.0 and res.r_first_touch >= 0


def test_comsle_direct_validation():
    with pytest.raises(ValueError):
        sle.comsle_direct([0.5], derive_stream(1, 1))
    with pytest.raises(ValueError):
        sle.comsle_direct([3.0, 2.0], derive_stream(1, 1))
    with pytest.raises(ValueError):
        sle.comsle_direct([math.exp(7.0)], derive_stream(1, 1))
    with pytest.raises(BudgetExceeded):
        sle.comsle_direct([math.e], derive_stream(1, 1), max_substeps=10)


def test_backends_agree_on_first_touch():
    # r-time from Z = 1/2 at t = 1 to the next touch of R+, two backends
    n = 400
    phys = [sle.triple_first_touch(0.5, derive_stream(84, i)) for i in range(n)]
    logt = [sle.z_first_hit(0.5, 1, derive_stream(85, i), dr_max=1e-5) for i in range(n)]
    # two-sample KS critical value at level 1e-3
    assert ks_distance(phys, logt) < 1.95 * math.sqrt(2 / n)
    m, se = mean_stderr(phys)
    assert abs(m - (F_ONE - F_HALF)) < 4 * se
