"""Experiment registry.

Each experiment maps a parameter dict, a master seed and a thread count to
a list of report rows.  Random streams are derived from ``(seed,
task_id(code, part))`` so an experiment gives the same numbers whether it
runs alone or inside ``accept-all``, and whatever the thread count.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import sympy as sp
from scipy import special

from .. import peeling, sle, stable_limits
from ..numerics import (RngStream, batch_means_stderr, derive_stream, ks_distance, mean_stderr,
                        run_replicas, sample_stable32, spawn, task_id)
from ..peeling import BudgetExceeded
from . import report as rp
from .config import ConfigError, ExperimentConfig
from .report import PAPER, Report, estimate, failed

_HALF = sp.Rational(1, 2)
_THIRD = sp.Rational(1, 3)


@dataclass(frozen=True)
class Experiment:
    name: str
    code: int
    defaults: dict
    fn: object
    help: str


REGISTRY: dict[str, Experiment] = {}


def experiment(name, code, help, **defaults):
    def wrap(fn):
        REGISTRY[name] = Experiment(name, code, defaults, fn, help)
        return fn
    return wrap


def _stream(seed, name, part=0) -> RngStream:
    return derive_stream(seed, task_id(REGISTRY[name].code, part))


# ---------------------------------------------------------------------------
# peeling


@experiment("peel-moments", 1, "partial sums of the one-step jump law", k_max=10**6,
            tol_moment=5e-4, tol_mass=6e-4, tol_asymptotic=1e-3)
def peel_moments(p, seed, threads):
    if p["k_max"] < 1:
        raise ConfigError("k_max must be >= 1")
    m = peeling.moment_checks(p["k_max"])
    k = p["k_max"]
    ratio = k ** 2.5 * peeling.q_left(k) * 4.0 * math.sqrt(math.pi)
    return [
        estimate("first_moment", m["first_moment"], _THIRD, p["tol_moment"], provenance=PAPER,
                 criterion=1),
        estimate("mass_tail_corrected", m["mass_tail_corrected"], 1, p["tol_mass"], criterion=1),
        estimate("mass_partial", m["mass"], 1, None, "info"),
        estimate("tail_ratio_at_k_max", ratio, 1, p["tol_asymptotic"], "rel", provenance=PAPER),
    ]


def _peel_ks(p, seed, threads, name, criterion):
    if p["n"] < 1:
        raise ConfigError("n must be >= 1")
    if p["statistic"] not in ("half-step", "full-step"):
        raise ConfigError("statistic must be half-step or full-step")
    if p["policy"] not in peeling.POLICIES:
        raise ConfigError(f"unknown policy {p['policy']!r}")
    n, policy = p["n"], p["policy"]
    ends = np.array(run_replicas(lambda s: peeling.walk_endpoint(n, policy, s),
                                 _stream(seed, name), p["replicas"], threads), dtype=float)
    cols = (0, 1) if p["statistic"] == "half-step" else (2, 3)
    scale = 3.0 ** (2.0 / 3.0) * n ** (-2.0 / 3.0) / 2.0
    plus, minus = scale * ends[:, cols[0]], scale * ends[:, cols[1]]
    ref = sample_stable32(_stream(seed, name, 1), 1.0, p["ref_draws"])
    corr = float(np.corrcoef(plus, minus)[0, 1])
    if p["dump"]:
        peeling.run_walk(min(n, 10**5), policy, _stream(seed, name, 2)).to_csv(p["dump"])
    return [
        estimate("ks_plus", ks_distance(plus, ref), 0, p["tol"], "upper", provenance=PAPER,
                 criterion=criterion),
        estimate("ks_minus", ks_distance(minus, ref), 0, p["tol"], "upper", provenance=PAPER,
                 criterion=criterion),
        estimate("abs_correlation", abs(corr), 0, p["tol_corr"], "upper"),
    ]


@experiment("peel-ks", 2, "rescaled horodistance sums against the 3/2-stable law",
            n=10**4, replicas=10**4, ref_draws=10**5, policy="predicted-edge",
            statistic="half-step", tol=0.03, tol_corr=0.05, dump="")
def peel_ks(p, seed, threads):
    return _peel_ks(p, seed, threads, "peel-ks", 3)


@experiment("perco-ks", 3, "rescaled horodistances of the percolation exploration",
            n=10**4, replicas=10**4, ref_draws=10**5, policy="percolation",
            statistic="full-step", tol=0.03, tol_corr=0.05, dump="")
def perco_ks(p, seed, threads):
    return _peel_ks(p, seed, threads, "perco-ks", 4)


@experiment("ledger-fuzz", 4, "label ledger against the integer walk, all policies",
            seeds=100, steps=400, min_total_steps=10**5)
def ledger_fuzz(p, seed, threads):
    if p["steps"] < 1:
        raise ConfigError("steps must be >= 1")
    policies = sorted(peeling.POLICIES)

    def one(s):
        tot = {}
        for j, pol in enumerate(policies):
            res = peeling.ledger_crosscheck(peeling.run_walk(p["steps"], pol, spawn(s, j)))
            for key, v in res.items():
                tot[key] = tot.get(key, 0) + v
        return tot

    res = run_replicas(one, _stream(seed, "ledger-fuzz"), p["seeds"], threads)
    total_steps = p["seeds"] * len(policies) * p["steps"]
    rows = [estimate("total_steps", total_steps, None,
                     [float(p["min_total_steps"]), math.inf], "range", criterion=5)]
    for key in ("eta_sum", "parity", "swallow", "oracle", "unique"):
        rows.append(estimate(f"violations_{key}", sum(r[key] for r in res), 0, None, "exact",
                             provenance=PAPER, criterion=5))
    return rows


@experiment("cdis", 5, "discrete commuting count between the [eps n] and n levels",
            n=10**6, eps=math.exp(-4.0), replicas=500, policy="predicted-edge",
            budget=10**8, tol_rel=0.25)
def cdis(p, seed, threads):
    if not 0.0 < p["eps"] < 1.0 or p["eps"] * p["n"] < 1:
        raise ConfigError("need 0 < eps < 1 and eps * n >= 1")
    if p["policy"] not in peeling.POLICIES:
        raise ConfigError(f"unknown policy {p['policy']!r}")
    if p["budget"] < 1:
        raise ConfigError("budget must be >= 1")
    vals = run_replicas(lambda s: peeling.c_dis_stream(p["eps"], p["n"], p["policy"], s,
                                                         p["budget"]),
                        _stream(seed, "cdis"), p["replicas"], threads)
    m, se = mean_stderr(vals)
    log_eps = abs(math.log(p["eps"]))
    return [estimate("count_per_log_eps", m / log_eps, rp.COMSTABLE_RATE, p["tol_rel"], "rel",
                     stderr=se / log_eps, provenance=PAPER, criterion=7)]


# ---------------------------------------------------------------------------
# stable side


@experiment("stable-checks", 6, "Laplace transform and scaling of the 3/2-stable sampler",
            draws=10**6, lambdas=[0.5, 1.0, 2.0], tol_stderr=3.0, tol_ks=0.01)
def stable_checks(p, seed, threads):
    rows = []
    s1 = sample_stable32(_stream(seed, "stable-checks"), 1.0, p["draws"])
    for lam in p["lambdas"]:
        m, se = mean_stderr(np.exp(lam * s1))
        lam_s = sp.nsimplify(lam)
        rows.append(estimate(f"laplace_{lam:g}", m, sp.exp(lam_s ** sp.Rational(3, 2)),
                             p["tol_stderr"], "stderr", stderr=se, criterion=2))
    s4 = sample_stable32(_stream(seed, "stable-checks", 1), 4.0, p["draws"])
    s1b = sample_stable32(_stream(seed, "stable-checks", 2), 1.0, p["draws"])
    rows.append(estimate("scaling_ks", ks_distance(s4, 4.0 ** (2.0 / 3.0) * s1b), 0, p["tol_ks"],
                         "upper", criterion=2))
    return rows


@experiment("chain-rate", 7, "long-run mean of the record-gap chain",
            steps=10**6, burn_in=1000, batches=50, tol=0.02, k=1000, rate_replicas=100,
            tol_stderr=3.0, dump="")
def chain_rate(p, seed, threads):
    if p["steps"] < 10 * p["batches"]:
        raise ConfigError("steps too small for the batch count")
    rng = _stream(seed, "chain-rate")
    st = stable_limits.RecordChainState(1.0)
    stable_limits.run_chain(st, p["burn_in"], rng)
    gaps = stable_limits.run_chain(st, p["steps"], rng)
    if p["dump"]:
        stable_limits.chain_to_csv(gaps[: min(gaps.size, 10**5)], p["dump"])
    rows = [estimate("mean_gap", gaps.mean(), rp.XI_RATE, p["tol"],
                     stderr=batch_means_stderr(gaps, p["batches"]), provenance=PAPER,
                     criterion=6)]
    for b in (0.5, 2.0):
        frac = (gaps >= b).astype(float)
        tail = stable_limits.quadrature(stable_limits.varpi_density, b, math.inf, 1e-11)
        rows.append(estimate(f"occupation_above_{b:g}", frac.mean(), sp.Float(tail, 15),
                             p["tol_stderr"], "stderr",
                             stderr=batch_means_stderr(frac, p["batches"])))
    m, se = stable_limits.estimate_xi_rate(p["k"], p["rate_replicas"],
                                           _stream(seed, "chain-rate", 1), threads=threads)
    rows.append(estimate("replica_rate", m, rp.XI_RATE, p["tol"], stderr=se, provenance=PAPER))
    return rows


@experiment("chain-checks", 8, "kernel normalization, reversibility and sampler law",
            xs=[0.1, 1.0, 5.0], pairs=100, ks_draws=10**6, tol_mass=1e-6, tol_rev=1e-10,
            tol_ks=0.005, tol_varpi_mass=1e-8, tol_varpi_mean=1e-6, tol_invariance=1e-6,
            tol_nu=1e-8)
def chain_checks(p, seed, threads):
    rows = []
    for x in p["xs"]:
        rows.append(estimate(f"kernel_mass_{x:g}", stable_limits.kernel_mass(x), 1,
                             p["tol_mass"], criterion=6))
    g = _stream(seed, "chain-checks").generator
    xy = g.uniform(0.01, 10.0, size=(p["pairs"], 2))
    lhs = stable_limits.varpi_density(xy[:, 0]) * stable_limits.kernel_density(xy[:, 0], xy[:, 1])
    rhs = stable_limits.varpi_density(xy[:, 1]) * stable_limits.kernel_density(xy[:, 1], xy[:, 0])
    rows.append(estimate("reversibility_max_rel", float(np.max(np.abs(lhs / rhs - 1.0))), 0,
                         p["tol_rev"], "upper", criterion=6))
    for i, x in enumerate(p["xs"]):
        draws = stable_limits.sample_record_gap(x, _stream(seed, "chain-checks", 1 + i),
                                                p["ks_draws"])
        rows.append(estimate(f"sampler_ks_{x:g}", ks_distance(draws, stable_limits.kernel_cdf(x)),
                             0, p["tol_ks"], "upper", criterion=6))
    vc = stable_limits.varpi_checks()
    rows.append(estimate("varpi_mass", vc["mass"], 1, p["tol_varpi_mass"]))
    rows.append(estimate("varpi_mean", vc["mean"], rp.XI_RATE, p["tol_varpi_mean"],
                         provenance=PAPER))
    for y, r in vc["invariance_residual"].items():
        rows.append(estimate(f"invariance_residual_{y:g}", abs(r), 0, p["tol_invariance"],
                             "upper"))
    for x in (0.1, 1.0, 5.0):
        tail = stable_limits.quadrature(stable_limits.nu_density, x, math.inf, 1e-12)
        rows.append(estimate(f"nu_tail_{x:g}", tail, 3 / (sp.exp(sp.nsimplify(x)) - 1) ** _THIRD,
                             p["tol_nu"], provenance=PAPER))
    return rows


@experiment("comstable", 9, "chain-based commuting count of the stable records",
            log_x=40.0, replicas=10**4, burn_in=1000, tol=0.05)
def comstable(p, seed, threads):
    if p["log_x"] < 1:
        raise ConfigError("log_x must be >= 1")
    m, se = stable_limits.comstable_estimate(p["log_x"], p["replicas"], _stream(seed, "comstable"),
                                             p["burn_in"], threads)
    return [estimate("count_per_log_x", m, rp.COMSTABLE_RATE, p["tol"], stderr=se,
                     provenance=PAPER, criterion=7)]


# ---------------------------------------------------------------------------
# SLE side


@experiment("rho-checks", 10, "quadratures of the invariant law and the scale function",
            tol_mass=1e-8, tol_inverse_mean=1e-6, tol_lambda=1e-8)
def rho_checks(p, seed, threads):
    c = sle.rho_checks()
    return [
        estimate("rho_mass", c["rho_mass"], 1, p["tol_mass"], criterion=8),
        estimate("rho_inverse_mean", c["rho_inverse_mean"], rp.ERGODIC_MEAN,
                 p["tol_inverse_mean"], provenance=PAPER, criterion=8),
        estimate("phi_one", c["phi_one"], rp.LAMBDA, p["tol_lambda"], provenance=PAPER,
                 criterion=8),
    ]


@experiment("z-t1", 11, "mean r-time of the Z diffusion from 0 to 1",
            replicas=20000, dr=1e-5, start=0, tol=0.005, tol_ode=1e-6, tol_series=1e-8)
def z_t1(p, seed, threads):
    if p["start"] not in (0, 1):
        raise ConfigError("start must be 0 or 1")
    if not p["dr"] > 0:
        raise ConfigError("dr must be positive")
    m, se = sle.t1_statistics(p["replicas"], p["dr"], _stream(seed, "z-t1"), p["start"], threads)
    f_half = float(sle.f_ode_solution([0.5])[0])
    return [
        estimate("t1_mean", m, rp.T1_MEAN, p["tol"], stderr=se, provenance=PAPER, criterion=8),
        estimate("ode_f_one", sle.f_ode_oracle(), rp.T1_MEAN, p["tol_ode"], provenance=PAPER,
                 criterion=8),
        estimate("series_minus_ode_half", abs(sle.f_closed_form(0.5) - f_half), 0,
                 p["tol_series"], "upper"),
    ]


@experiment("z-ergodic", 12, "time average of 1/(Z(1-Z)) over r in [0, r_total]",
            r_total=200.0, replicas=10, dr=1e-5, tol=0.1, dump="", dump_points=2000)
def z_ergodic(p, seed, threads):
    if not p["r_total"] > 0 or not p["dr"] > 0:
        raise ConfigError("r_total and dr must be positive")
    m, se = sle.z_ergodic_average(p["r_total"], p["replicas"], _stream(seed, "z-ergodic"),
                                  p["dr"], threads)
    if p["dump"]:
        rng = _stream(seed, "z-ergodic", 1)
        st = sle.LogTimeState.start(float(sle.sample_rho(rng)))
        sle.z_trajectory_csv(st, p["r_total"], p["dump_points"], rng, p["dump"], p["dr"])
    return [estimate("ergodic_average", m, rp.ERGODIC_MEAN, p["tol"], stderr=se, provenance=PAPER,
                     criterion=8)]


@experiment("theta-rate", 13, "log-time growth of the alternated boundary hits",
            n_hits=50, replicas=200, dr=1e-5, tol_logt=0.15, tol_r=0.01, tol_ratio=1.0,
            tol_consistency=0.01, dump="")
def theta_rate(p, seed, threads):
    if p["n_hits"] < 10:
        raise ConfigError("n_hits must be >= 10")
    res = sle.theta_rate(p["n_hits"], _stream(seed, "theta-rate"), p["replicas"], p["dr"], threads)
    (lt, lt_se), (r, r_se), (ratio, ratio_se) = (res["logT_per_hit"], res["r_per_hit"],
                                                  res["logT_per_r"])
    if p["dump"]:
        rng = _stream(seed, "theta-rate", 1)
        st = sle.LogTimeState.start(float(sle.sample_rho(rng)))
        sle.step_z(st, p["n_hits"] * float(rp.T1_MEAN), rng, p["dr"])
        sle.touch_log_csv(st.hits, p["dump"])
    return [
        estimate("logT_per_hit", lt, rp.THETA_RATE, p["tol_logt"], stderr=lt_se,
                 provenance=PAPER, criterion=9),
        estimate("r_per_hit", r, rp.T1_MEAN, p["tol_r"], stderr=r_se, provenance=PAPER,
                 criterion=9),
        estimate("logT_per_r", ratio, rp.LOGT_PER_R, p["tol_ratio"], stderr=ratio_se,
                 provenance=PAPER, criterion=9),
        estimate("comsle_from_theta", 2.0 / lt, rp.COMSLE_RATE, p["tol_consistency"],
                 stderr=2.0 * lt_se / lt ** 2),
    ]


def _comsle_counts(xs, rng, p, tol, replicas, threads):
    def one(s):
        return sle.comsle_direct(xs, s, kappa=p["kappa"], t0=p["t0"], refine=p["refine"],
                                 tol=tol).counts
    return np.array(run_replicas(one, rng, replicas, threads), dtype=float)


@experiment("comsle", 14, "direct commuting counts of SLE6 on marked boundary points",
            log_xs=[3.0, 4.0, 5.0], replicas=2000, kappa=1e-3, t0=1e-4, refine=0.05,
            swallow_tol=1e-6, slope_range=[0.15, 0.45], agree_replicas=2000, agree_logtime=3,
            dr=1e-5, tol_ks=0.05, tol_stderr=3.0, sens_replicas=500, sens_tol=1e-4)
def comsle(p, seed, threads):
    lx = np.asarray(p["log_xs"], dtype=float)
    if lx.size < 2 or np.any(np.diff(lx) <= 0) or lx[0] <= 0 or lx[-1] > 6.0:
        raise ConfigError("log_xs must increase inside (0, 6] with at least two points")
    if len(p["slope_range"]) != 2:
        raise ConfigError("slope_range needs two values")
    xs = np.exp(lx)
    counts = _comsle_counts(xs, _stream(seed, "comsle"), p, p["swallow_tol"], p["replicas"],
                            threads)
    weights = (lx - lx.mean()) / np.sum((lx - lx.mean()) ** 2)
    slope, slope_se = mean_stderr(counts @ weights)
    rows = [estimate("slope", slope, rp.COMSLE_RATE, [float(v) for v in p["slope_range"]],
                     "range", stderr=slope_se, provenance=PAPER, criterion=10)]
    for j, v in enumerate(lx):
        m, se = mean_stderr(counts[:, j])
        rows.append(estimate(f"mean_count_{v:g}", m, None, None, "info", stderr=se))
        one = (counts[:, j] == 1).astype(float)
        m1, se1 = mean_stderr(one)
        # the two points leave together iff the ratio of their distances to
        # U exits (0, 1) at 1, whose scale function is I(1/3, 1/3)
        rows.append(estimate(f"p_count_one_{v:g}", m1,
                             sp.Float(special.betainc(1 / 3, 1 / 3, math.exp(-v)), 15),
                             p["tol_stderr"], "stderr", stderr=se1))

    # backend agreement: r-time from t = 1 to the next touch of R+
    rng = _stream(seed, "comsle", 1)

    def phys(s):
        z0 = float(sle.sample_rho(s))
        return z0, sle.triple_first_touch(z0, s, kappa=p["kappa"], refine=p["refine"])

    res = run_replicas(phys, rng, p["agree_replicas"], threads)
    z0s = np.array([z for z, _ in res])
    r_phys = np.array([r for _, r in res])

    def logtime(i, s):
        return [sle.z_first_hit(z0s[i], 1, spawn(s, j), p["dr"]) for j in range(p["agree_logtime"])]

    r_log = np.concatenate(run_replicas(logtime, _stream(seed, "comsle", 2), p["agree_replicas"],
                                        threads, with_index=True))
    rows.append(estimate("backend_ks", ks_distance(r_phys, r_log), 0, p["tol_ks"], "upper",
                         criterion=10))
    rows.append(estimate("mean_first_touch_physical", r_phys.mean(), None, None, "info",
                         stderr=mean_stderr(r_phys)[1]))
    rows.append(estimate("mean_first_touch_logtime", r_log.mean(), None, None, "info",
                         stderr=mean_stderr(r_log)[1]))

    # swallow tolerance sensitivity on common random numbers
    rng3 = _stream(seed, "comsle", 3)
    base = _comsle_counts(xs, rng3, p, p["swallow_tol"], p["sens_replicas"], threads)
    loose = _comsle_counts(xs, rng3, p, p["sens_tol"], p["sens_replicas"], threads)
    d, d_se = mean_stderr((loose - base) @ weights)
    rows.append(estimate("slope_shift_swallow_tol", d, None, None, "info", stderr=d_se,
                         note=f"swallow_tol {p['sens_tol']:g} minus {p['swallow_tol']:g}"))
    return rows


@experiment("triple-checks", 15, "mean of G_t and growth of Delta_t in the physical backend",
            replicas=10**4, t_mean=[0.5, 1.0, 2.0], t_slope_min=10.0, t_slope_max=1000.0,
            slope_points=9, kappa=1e-3, t0=1e-4, refine=0.05, tol_stderr=3.0, tol_slope=0.05)
def triple_checks(p, seed, threads):
    if not 0 < p["t_slope_min"] < p["t_slope_max"] or p["slope_points"] < 2:
        raise ConfigError("need 0 < t_slope_min < t_slope_max and slope_points >= 2")
    ts_mean = np.asarray(p["t_mean"], dtype=float)
    ts_slope = np.geomspace(p["t_slope_min"], p["t_slope_max"], p["slope_points"])
    ts = np.unique(np.concatenate([ts_mean, ts_slope]))

    def one(s):
        return sle.triple_observe(ts, s, t0=p["t0"], kappa=p["kappa"], refine=p["refine"])

    res = run_replicas(one, _stream(seed, "triple-checks"), p["replicas"], threads)
    g = np.array([a for a, _ in res])
    log_d = np.log(np.array([b for _, b in res]))
    rows = []
    for t in ts_mean:
        j = int(np.searchsorted(ts, t))
        m, se = mean_stderr(g[:, j])
        rows.append(estimate(f"G_mean_{t:g}", m, 10 * sp.nsimplify(t), p["tol_stderr"], "stderr",
                             stderr=se, criterion=11))
    idx = np.searchsorted(ts, ts_slope)
    lt = np.log(ts_slope)
    w = (lt - lt.mean()) / np.sum((lt - lt.mean()) ** 2)
    slope, se = mean_stderr(log_d[:, idx] @ w)
    rows.append(estimate("log_delta_slope", slope, _HALF, p["tol_slope"], stderr=se,
                         provenance=PAPER, criterion=11))
    return rows


# ---------------------------------------------------------------------------
# combination


def _dimension_rows(rate_xi, se_xi, rate_theta, se_theta, p):
    d = rp.dimension_report(rate_xi, rate_theta, se_xi, se_theta)
    exact = rp.dimension_report(rp.XI_RATE, rp.THETA_RATE)
    return [
        estimate("exponent", d["exponent"], 3, [float(v) for v in p["exponent_range"]], "range",
                 stderr=d["exponent_se"], provenance=PAPER, criterion=12),
        estimate("dimension", d["dimension"], _THIRD, [float(v) for v in p["dimension_range"]],
                 "range", stderr=d["dimension_se"], provenance=PAPER, criterion=12),
        estimate("exponent_symbolic", float(exact["exponent"]), 3, None, "exact",
                 provenance=PAPER, criterion=12, note=str(exact["exponent"])),
        estimate("dimension_symbolic", float(exact["dimension"]), _THIRD, None, "exact",
                 provenance=PAPER, criterion=12, note=str(exact["dimension"])),
    ]


@experiment("dimension", 16, "boundary exponent and dimension from the two rates",
            rate_xi=0.0, rate_xi_se=0.0, rate_theta=0.0, rate_theta_se=0.0,
            exponent_range=[2.7, 3.3], dimension_range=[0.30, 0.37])
def dimension(p, seed, threads):
    """Plug-in of given rates; a rate left at 0 is estimated with default settings."""
    if p["rate_xi"] < 0 or p["rate_theta"] < 0:
        raise ConfigError("rates must be positive")
    xi, xi_se = p["rate_xi"], p["rate_xi_se"]
    th, th_se = p["rate_theta"], p["rate_theta_se"]
    if xi == 0:
        row = _run_rows("chain-rate", {}, seed, threads)[0]
        xi, xi_se = row.value, row.stderr
    if th == 0:
        row = _run_rows("theta-rate", {}, seed, threads)[0]
        th, th_se = row.value, row.stderr
    return _dimension_rows(xi, xi_se, th, th_se, p)


def _run_rows(name, overrides, seed, threads):
    exp = REGISTRY[name]
    params = dict(exp.defaults)
    params.update(overrides)
    return exp.fn(params, seed, threads)


ACCEPTANCE_ORDER = ("peel-moments", "stable-checks", "peel-ks", "perco-ks", "ledger-fuzz",
                    "chain-rate", "chain-checks", "comstable", "cdis", "rho-checks", "z-t1",
                    "z-ergodic", "theta-rate", "comsle", "triple-checks")


@experiment("accept-all", 17, "every acceptance experiment at its default settings")
def accept_all(p, seed, threads, timings=None):
    rows = []
    timings = {} if timings is None else timings
    for name in ACCEPTANCE_ORDER:
        t = time.perf_counter()
        try:
            part = _run_rows(name, {}, seed, threads)
        except BudgetExceeded as exc:
            if name == "cdis":
                part = [failed("count_per_log_eps", f"budget overrun: {exc}", criterion=7,
                               target=rp.COMSTABLE_RATE, tol=REGISTRY[name].defaults["tol_rel"],
                               check="rel", provenance=PAPER)]
            else:
                part = [failed("budget", f"budget overrun: {exc}")]
        timings[name] = round(time.perf_counter() - t, 3)
        for r in part:
            r.name = f"{name}/{r.name}"
        rows.extend(part)
    xi = next(r for r in rows if r.name == "chain-rate/mean_gap")
    th = next(r for r in rows if r.name == "theta-rate/logT_per_hit")
    dim = _dimension_rows(xi.value, xi.stderr, th.value, th.stderr,
                          REGISTRY["dimension"].defaults)
    for r in dim:
        r.name = f"dimension/{r.name}"
    rows.extend(dim)
    return rows


def make_config(name, overrides=None, seed=1, threads=1, output_path=None,
                fmt="json") -> ExperimentConfig:
    """Validated config for experiment ``name`` with ``overrides`` on its defaults."""
    if name not in REGISTRY:
        raise ConfigError(f"unknown experiment {name!r}")
    doc = dict(overrides or {})
    doc.update(seed=seed, threads=threads, format=fmt)
    if output_path is not None:
        doc["out"] = output_path
    return ExperimentConfig.from_flat(doc, REGISTRY[name].defaults, experiment=name)


def run(config: ExperimentConfig) -> Report:
    """Execute ``config`` and return its report.

    Raises
    ------
    ConfigError
        Invalid parameters.
    BudgetExceeded
        A stopping time overran its step budget.
    """
    config.validate()
    exp = REGISTRY.get(config.experiment)
    if exp is None:
        raise ConfigError(f"unknown experiment {config.experiment!r}")
    t = time.perf_counter()
    timings = {}
    if exp.name == "accept-all":
        rows = exp.fn(config.params, int(config.master_seed), int(config.threads), timings)
    else:
        rows = exp.fn(config.params, int(config.master_seed), int(config.threads))
    elapsed = round(time.perf_counter() - t, 3)
    return Report(exp.name, config.identity(), config.config_hash(), int(config.master_seed),
                  rows, elapsed, timings)
