"""SLE6 bouncing: physical-time triple and log-time Z diffusion.

With ``dU = sqrt(6) dB`` the gaps ``sqrt(G) = U - L`` and ``sqrt(D) = R - U``
solve ``d sqrt(G) = dU + 2 dt / sqrt(G)`` and ``d sqrt(D) = -dU + 2 dt / sqrt(D)``,
and every marked point ``h`` on the right obeys the same equation as
``sqrt(D)`` in the coordinate ``h - U``.  Each of these coordinates, divided by
``sqrt(6)``, is a Bessel process of dimension 5/3.

The ratio ``Z = sqrt(G) / (sqrt(G) + sqrt(D))`` in the clock
``r(t) = int_1^t ds / Delta_s^2`` is a diffusion on ``[0, 1]`` with generator
``3 f'' + 2 (1/x - 1/(1-x)) f'``.  The log-time backend runs it in natural
scale: ``phi(Z)`` is a time-changed Brownian motion reflected in
``[0, Lambda]``, which is simulated exactly by folding a free Brownian path,
and ``r``, ``log Delta`` and ``log t`` are additive functionals of that path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
from scipy import integrate, special

from .numerics import LogAccumulator, RngStream, mean_stderr, quadrature, run_replicas
from .peeling import BudgetExceeded

BESSEL_DIM = 5.0 / 3.0
LAMBDA = special.gamma(1 / 3) ** 2 / special.gamma(2 / 3)
RHO_NORM = special.gamma(10 / 3) / special.gamma(5 / 3) ** 2
T1_MEAN = math.pi / (7.0 * math.sqrt(3.0))
THETA_RATE = 4.0 * math.pi / math.sqrt(3.0)
COMSLE_RATE = math.sqrt(3.0) / (2.0 * math.pi)
LOGT_PER_R = 28.0
ERGODIC_MEAN = 7.0

# natural-scale integrands: dr = A(beta) dv and d int dr / (Z(1-Z)) = B(beta) dv
A_MAX = 0.25 ** (4.0 / 3.0) / 6.0
_GRID = 1 << 16


def phi(x):
    """Scale function ``int_0^x (u(1-u))^{-2/3} du``."""
    return LAMBDA * special.betainc(1 / 3, 1 / 3, np.asarray(x, dtype=float))


def phi_inv(beta):
    return special.betaincinv(1 / 3, 1 / 3, np.clip(np.asarray(beta, dtype=float) / LAMBDA, 0, 1))


def rho_density(x):
    """Invariant density ``Gamma(10/3)/Gamma(5/3)^2 (x(1-x))^{2/3}`` of Z."""
    x = np.asarray(x, dtype=float)
    return RHO_NORM * (x * (1.0 - x)) ** (2.0 / 3.0)


def sample_rho(rng: RngStream, size=None):
    """Draws from the invariant law, a Beta(5/3, 5/3)."""
    return rng.generator.beta(5 / 3, 5 / 3, size)


def rho_checks(tol: float = 1e-12) -> dict:
    """Quadratures of the invariant density and of the scale function."""
    # all integrands are even about 1/2; integrating over [0, 1/2] keeps
    # 1 - x away from cancellation
    mass = 2.0 * quadrature(rho_density, 0.0, 0.5, tol, singular=(2.0 / 3.0, 0.0))
    inv = 2.0 * quadrature(lambda x: rho_density(x) / (x * (1.0 - x)), 0.0, 0.5, tol,
                           singular=(-1.0 / 3.0, 0.0))
    phi1 = 2.0 * quadrature(lambda x: (x * (1.0 - x)) ** (-2.0 / 3.0), 0.0, 0.5, tol,
                            singular=(-2.0 / 3.0, 0.0))
    lam = special.gamma(1 / 6) * special.gamma(1 / 3) / (2 ** (2 / 3) * math.sqrt(math.pi))
    return {"rho_mass": mass, "rho_inverse_mean": inv, "phi_one": phi1, "Lambda": lam}


def _ode_rhs(v, s):
    # x = v^3 / (v^3 + (1-v)^3) removes both endpoint singularities of
    # f' = h (x(1-x))^{-2/3}, h' = (x(1-x))^{2/3} / 3
    den = v ** 3 + (1.0 - v) ** 3
    return [3.0 * s[1] * den ** (-2.0 / 3.0),
            v ** 4 * (1.0 - v) ** 4 * den ** (-10.0 / 3.0)]


def _v_of_x(x):
    # inverse of x = v^3 / (v^3 + (1-v)^3)
    c = (x / (1.0 - x)) ** (1.0 / 3.0)
    return c / (1.0 + c)


def f_ode_solution(x_eval=(1.0,), rtol: float = 1e-13):
    """Solve ``3 f'' + 2 f' (1/x - 1/(1-x)) = 1``, ``f(0) = f'(0) = 0``.

    The ODE is first order in ``f'``; writing ``h = (x(1-x))^{2/3} f'`` gives
    ``h' = (x(1-x))^{2/3} / 3`` and the pair ``(f, h)`` is integrated in the
    variable ``v`` of :func:`_v_of_x`, where both equations are smooth.  Near
    0 the solution is ``x^2 / 10 + O(x^3)``.
    """
    xs = np.asarray(x_eval, dtype=float)
    vs = np.array([1.0 if x >= 1 else _v_of_x(x) for x in xs])
    order = np.argsort(vs)
    sol = integrate.solve_ivp(_ode_rhs, (0.0, 1.0), [0.0, 0.0], method="DOP853",
                              t_eval=vs[order], rtol=rtol, atol=1e-15)
    if not sol.success:
        raise RuntimeError(f"ODE integration failed: {sol.message}")
    out = np.empty_like(xs)
    out[order] = sol.y[0]
    return out


def f_ode_oracle() -> float:
    """``f(1)``, which equals the mean r-time for Z to go from 0 to 1."""
    return float(f_ode_solution((1.0,))[0])


def f_closed_form(x: float, terms: int = 20000) -> float:
    """``(-x + x^2 + x 3F2(1, 1, 4/3; 5/3, 2; x)) / 14`` by direct summation."""
    # term ratio of the 3F2 series: (n+1)(n+4/3) / ((n+5/3)(n+2)) x
    s = 0.0
    term = 1.0
    for n in range(terms):
        s += term
        term *= (n + 1.0) * (n + 4.0 / 3.0) / ((n + 5.0 / 3.0) * (n + 2.0)) * x
        if abs(term) < 1e-18 * abs(s):
            break
    return (-x + x * x + x * s) / 14.0


@lru_cache(maxsize=None)
def natural_scale_tables(m: int = _GRID):
    """``Z``, ``A`` and ``B`` tabulated on ``beta in [0, Lambda]``.

    ``A = (x(1-x))^{4/3} / 6`` and ``B = (x(1-x))^{1/3} / 6`` at
    ``x = phi^{-1}(beta)``.
    """
    beta = np.linspace(0.0, LAMBDA, m + 1)
    x = phi_inv(beta)
    x[0], x[-1] = 0.0, 1.0
    # symmetrize so the tables are exactly even about Lambda / 2
    x = 0.5 * (x + 1.0 - x[::-1])
    q = x * (1.0 - x)
    return x, q ** (4.0 / 3.0) / 6.0, q ** (1.0 / 3.0) / 6.0


@numba.njit(cache=True, nogil=True)
def _fold(w, lam):
    u = w % (2.0 * lam)
    if u > lam:
        u = 2.0 * lam - u
    return u


@numba.njit(cache=True, nogil=True)
def _interp(tab, beta, h):
    s = beta / h
    j = int(s)
    if j >= tab.size - 1:
        return tab[tab.size - 1]
    f = s - j
    return tab[j] * (1.0 - f) + tab[j + 1] * f


@numba.njit(cache=True, nogil=True)
def _target_bracket(w, lam, target):
    # levels of the unfolded path at which the folded one sits at the target
    # boundary: even multiples of lam for Z = 0, odd multiples for Z = 1
    if target == 1:
        j = math.floor((w + lam) / (2.0 * lam))
        lo = (2.0 * j - 1.0) * lam
    else:
        j = math.floor(w / (2.0 * lam))
        lo = 2.0 * j * lam
    return lo, lo + 2.0 * lam


@numba.njit(cache=True, nogil=True)
def _z_run(gen, st, atab, btab, lam, dv, r_stop, hits_stop, max_steps, track, hit_r, hit_logt):
    """Advance the natural-scale path.

    ``st = [w, r, log_delta, log_t, target, n_hits]``.  Stops when ``r``
    reaches ``r_stop`` (the last substep is shortened) or after ``hits_stop``
    hits.  Hit r-times and log-times are written to the output arrays.  With
    ``track`` false only ``w``, ``r`` and the hits are updated.
    """
    h = lam / (atab.size - 1)
    w = st[0]
    r = st[1]
    ld = st[2]
    target = int(st[4])
    nh = int(st[5])
    # t = exp(ref) * acc, rebased whenever the increments outgrow the scale
    ref = st[3]
    acc = 1.0
    beta = _fold(w, lam)
    a0 = _interp(atab, beta, h)
    b0 = _interp(btab, beta, h) if track else 0.0
    sq = math.sqrt(dv)
    lo, hi = _target_bracket(w, lam, target)
    steps = 0
    while r < r_stop and nh < hits_stop:
        if steps >= max_steps:
            break
        steps += 1
        step = dv
        sd = sq
        if a0 > 0.0 and r + a0 * dv > r_stop:
            step = max((r_stop - r) / a0, 1e-300)
            sd = math.sqrt(step)
        w1 = w + sd * gen.standard_normal()
        beta1 = _fold(w1, lam)
        a1 = _interp(atab, beta1, h)
        dr = 0.5 * (a0 + a1) * step
        if track:
            b1 = _interp(btab, beta1, h)
            di = 0.5 * (b0 + b1) * step
            e = 2.0 * (ld + di) - ref
            if e > 30.0:
                acc = acc * math.exp(-e) + dr
                ref += e
            else:
                acc += math.exp(e) * dr
            ld += 2.0 * di
            b0 = b1
        r += dr
        hit = w1 <= lo or w1 >= hi
        if not hit:
            # Brownian-bridge crossing of either target level
            e_hi = 2.0 * (hi - w) * (hi - w1) / step
            e_lo = 2.0 * (w - lo) * (w1 - lo) / step
            if e_hi < 40.0 or e_lo < 40.0:
                p = math.exp(-e_hi) + math.exp(-e_lo)
                hit = gen.random() < p
        if hit:
            if nh < hit_r.size:
                hit_r[nh] = r
                hit_logt[nh] = ref + math.log(acc)
            nh += 1
            target = 1 - target
            lo, hi = _target_bracket(w1, lam, target)
        w = w1
        a0 = a1
    st[0] = w
    st[1] = r
    st[2] = ld
    st[3] = ref + math.log(acc)
    st[4] = target
    st[5] = nh
    return steps


@numba.njit(cache=True, nogil=True)
def _z_functional(gen, w, atab, btab, lam, dv, r_total):
    # int B dv and int A dv along a path of total r-time r_total
    h = lam / (atab.size - 1)
    beta = _fold(w, lam)
    a0 = _interp(atab, beta, h)
    b0 = _interp(btab, beta, h)
    sq = math.sqrt(dv)
    r = 0.0
    acc = 0.0
    while r < r_total:
        w += sq * gen.standard_normal()
        beta = _fold(w, lam)
        a1 = _interp(atab, beta, h)
        b1 = _interp(btab, beta, h)
        r += 0.5 * (a0 + a1) * dv
        acc += 0.5 * (b0 + b1) * dv
        a0 = a1
        b0 = b1
    return acc, r


def _dv(dr_max):
    return dr_max / A_MAX


@dataclass
class LogTimeState:
    """State of the log-time backend.

    ``target`` is the boundary (1 or 0) whose hit is awaited next; the path
    position ``w`` is the unfolded natural-scale coordinate.
    """

    Z: float
    r: float = 0.0
    logDelta: float = 0.0
    logT: LogAccumulator = field(default_factory=lambda: LogAccumulator(0.0))
    target: int = 1
    w: float = 0.0
    hits: list = field(default_factory=list)

    @property
    def hit_parity(self) -> int:
        return self.target

    @classmethod
    def start(cls, z0: float, target: int = 1) -> "LogTimeState":
        if not 0.0 <= z0 <= 1.0:
            raise ValueError("Z must lie in [0, 1]")
        return cls(Z=float(z0), target=target, w=float(phi(z0)))


def step_z(state: LogTimeState, dr: float, rng: RngStream, dr_max: float = 1e-5) -> LogTimeState:
    """Advance the log-time state by ``dr`` units of r-time.

    Substeps are Brownian increments of the natural-scale coordinate of size
    ``dv = dr_max / max A``, so no substep advances ``r`` by more than
    ``dr_max``; the increments of ``r``, ``log Delta`` and ``log t`` use the
    trapezoid rule along the substep, and boundary hits are detected with
    the exact Brownian-bridge crossing probability.
    """
    if not dr > 0:
        raise ValueError("dr must be positive")
    ztab, atab, btab = natural_scale_tables()
    st = np.array([state.w, state.r, state.logDelta, state.logT.log_value, state.target, 0.0])
    r_stop = state.r + dr
    hit_r = np.empty(256)
    hit_logt = np.empty(256)
    side = state.target
    while st[1] < r_stop:
        # hits come back in batches of at most 256
        st[5] = 0.0
        _z_run(rng.generator, st, atab, btab, LAMBDA, _dv(dr_max), r_stop, hit_r.size, 1 << 62,
               True, hit_r, hit_logt)
        for i in range(int(st[5])):
            state.hits.append((side, float(hit_r[i]), float(hit_logt[i])))
            side = 1 - side
    state.w, state.r, state.logDelta = float(st[0]), float(st[1]), float(st[2])
    state.logT = LogAccumulator(float(st[3]))
    state.target = int(st[4])
    state.Z = float(np.interp(_fold(state.w, LAMBDA), np.linspace(0.0, LAMBDA, ztab.size), ztab))
    return state


def z_trajectory_csv(state: LogTimeState, r_total: float, n_points: int, rng: RngStream, path,
                     dr_max: float = 1e-5) -> None:
    """Dump ``r, Z, logDelta, logT`` on a regular r-grid."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r", "Z", "logDelta", "logT"])
        wr.writerow([state.r, state.Z, state.logDelta, state.logT.log_value])
        for _ in range(n_points):
            step_z(state, r_total / n_points, rng, dr_max)
            wr.writerow([state.r, state.Z, state.logDelta, state.logT.log_value])


def touch_log_csv(events, path) -> None:
    """Write ``index, side, r, logT`` for a list of ``(side, r, logT)`` hits."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "side", "r", "logT"])
        for i, (side, r, lt) in enumerate(events, start=1):
            wr.writerow([i, side, r, lt])


def z_first_hit(z0: float, target: int, rng: RngStream, dr_max: float = 1e-5,
                max_steps: int = 10**9) -> float:
    """r-time for Z started at ``z0`` to hit ``target``."""
    atab, btab = natural_scale_tables()[1:]
    st = np.array([float(phi(z0)), 0.0, 0.0, 0.0, float(target), 0.0])
    hr = np.empty(1)
    hl = np.empty(1)
    _z_run(rng.generator, st, atab, btab, LAMBDA, _dv(dr_max), math.inf, 1, max_steps, False, hr, hl)
    if st[5] < 1:
        raise BudgetExceeded(max_steps)
    return float(hr[0])


def t1_statistics(replicas: int, dr: float, rng: RngStream, start: int = 0, threads: int = 1):
    """Mean r-time to cross from ``start`` to the other boundary, with stderr."""
    target = 1 - start
    vals = run_replicas(lambda r: z_first_hit(float(start), target, r, dr), rng, replicas, threads)
    return mean_stderr(vals)


def z_ergodic_replica(r_total: float, rng: RngStream, dr_max: float = 1e-5):
    """``(int_0^r du / (Z(1-Z)), r)`` from a stationary start."""
    atab, btab = natural_scale_tables()[1:]
    w = float(phi(sample_rho(rng)))
    acc, r = _z_functional(rng.generator, w, atab, btab, LAMBDA, _dv(dr_max), r_total)
    return float(acc), float(r)


def z_ergodic_average(r_total: float, replicas: int, rng: RngStream, dr_max: float = 1e-5,
                      threads: int = 1):
    """Time average of ``1/(Z(1-Z))`` pooled over replicas, with stderr."""
    res = run_replicas(lambda s: z_ergodic_replica(r_total, s, dr_max), rng, replicas, threads)
    acc = np.array([a for a, _ in res])
    r = np.array([b for _, b in res])
    per = acc / r
    m, se = mean_stderr(per)
    return float(acc.sum() / r.sum()), se


def theta_replica(n_hits: int, rng: RngStream, dr_max: float = 1e-5, max_steps: int = 10**10):
    """``(log theta(n), r(theta(n)))`` from a stationary start at t = 1."""
    atab, btab = natural_scale_tables()[1:]
    z0 = float(sample_rho(rng))
    st = np.array([float(phi(z0)), 0.0, 0.0, 0.0, 1.0, 0.0])
    hr = np.empty(n_hits)
    hl = np.empty(n_hits)
    _z_run(rng.generator, st, atab, btab, LAMBDA, _dv(dr_max), math.inf, n_hits, max_steps,
           True, hr, hl)
    if st[5] < n_hits:
        raise BudgetExceeded(max_steps)
    return float(hl[-1]), float(hr[-1])


def theta_rate(n_hits: int, rng: RngStream, replicas: int = 200, dr_max: float = 1e-5,
               threads: int = 1) -> dict:
    """Estimates of ``log theta(n) / n``, ``r(theta(n)) / n`` and ``log theta / r``."""
    if n_hits < 10:
        raise ValueError("n_hits must be at least 10")
    res = run_replicas(lambda s: theta_replica(n_hits, s, dr_max), rng, replicas, threads)
    lt = np.array([a for a, _ in res])
    rr = np.array([b for _, b in res])
    m_lt, se_lt = mean_stderr(lt / n_hits)
    m_r, se_r = mean_stderr(rr / n_hits)
    ratio = lt.sum() / rr.sum()
    # delta method for a ratio of means
    cov = np.cov(lt, rr)
    se_ratio = math.sqrt(max(cov[0, 0] - 2 * ratio * cov[0, 1] + ratio ** 2 * cov[1, 1], 0.0)
                         / len(lt)) / rr.mean()
    return {"logT_per_hit": (m_lt, se_lt), "r_per_hit": (m_r, se_r),
            "logT_per_r": (float(ratio), float(se_ratio))}


# ---------------------------------------------------------------------------
# physical-time triple
#
# All right coordinates (sqrt D and the h_j - U) and the left one (sqrt G)
# solve y' = y -+ dU + 2 dt / y' in drift-implicit form with the same
# driving increment.  Wherever a gap is small against sqrt(dt) the step is
# bisected by drawing the Brownian-bridge midpoint of U, so the driving
# path keeps its exact law and the coupling between R and the marked points
# is never broken.


@lru_cache(maxsize=None)
def bridge_hit_table(n: int = 4096, z_min: float = 1e-8, z_max: float = 60.0):
    """P(a BESQ(5/3) bridge hits 0) as a function of ``log z``, ``z = sqrt(x y) / t``.

    Equal to ``1 - I_{1/6}(z) / I_{-1/6}(z)``, evaluated as
    ``(2/pi) sin(pi/6) K_{1/6}(z) / I_{-1/6}(z)`` to avoid cancellation.
    """
    nu = 1.0 - BESSEL_DIM / 2.0
    lz = np.linspace(math.log(z_min), math.log(z_max), n)
    z = np.exp(lz)
    p = (2.0 / math.pi) * math.sin(math.pi * nu) * special.kve(nu, z) / special.ive(-nu, z) \
        * np.exp(-2.0 * z)
    return lz, np.minimum(p, 1.0)


@numba.njit(cache=True, nogil=True)
def _hit_prob(z, lz, pz):
    if z <= 0.0:
        return 1.0
    l = math.log(z)
    if l >= lz[-1]:
        return 0.0
    if l <= lz[0]:
        return pz[0]
    s = (l - lz[0]) / (lz[1] - lz[0])
    j = int(s)
    f = s - j
    return pz[j] * (1.0 - f) + pz[j + 1] * f


@numba.njit(cache=True, nogil=True)
def _implicit(y, inc, h):
    # root of y1 = y + inc + 2 h / y1, written without cancellation
    a = y + inc
    s = math.sqrt(a * a + 8.0 * h)
    if a >= 0.0:
        return 0.5 * (a + s)
    return 4.0 * h / (s - a)


@numba.njit(cache=True, nogil=True)
def _touched(gen, y0, y1, h, lz, pz):
    # y^2 / 6 is a squared Bessel process; bridge probability of a zero
    z = y0 * y1 / (6.0 * h)
    if z >= 40.0:
        return False
    return gen.random() < _hit_prob(z, lz, pz)


@numba.njit(cache=True, nogil=True)
def _exit_at_one(s, ztab):
    # I_s(1/3, 1/3) from the tabulated inverse; P(ratio -> 1) for the ratio
    # of two right coordinates
    if s >= 1.0:
        return 1.0
    i = np.searchsorted(ztab, s)
    if i == 0:
        return 0.0
    f = (s - ztab[i - 1]) / (ztab[i] - ztab[i - 1])
    return (i - 1 + f) / (ztab.size - 1)


@numba.njit(cache=True, nogil=True)
def _start(gen, y, alive, t0):
    """Move from ``G = D = U = 0`` at time 0 to ``t0``; returns ``U(t0)``."""
    y[0] = math.sqrt(6.0 * t0 * gen.chisquare(BESSEL_DIM))
    y[1] = math.sqrt(6.0 * t0 * gen.chisquare(BESSEL_DIM))
    du = math.sqrt(6.0 * t0) * gen.standard_normal()
    for j in range(alive.size):
        if alive[j]:
            y[j + 2] = _implicit(y[j + 2], -du, t0)
    return du


@numba.njit(cache=True, nogil=True)
def _emit(ev_code, ev_t, ev_r, n, code, t, r):
    if n >= ev_code.size:
        return -1
    ev_code[n] = code
    ev_t[n] = t
    ev_r[n] = r
    return n + 1


@numba.njit(cache=True, nogil=True)
def _base_step(gen, y, alive, armed, blocked, t, dt, du, r, r_on, refine, eta, tol, lz, pz, ztab,
               stack_h, stack_u, ev_code, ev_t, ev_r):
    """Advance ``y = [sqrt G, sqrt D, h_1 - U, ...]`` over ``[t, t + dt]``.

    ``du`` is the increment of U over the whole step.  A marked point whose
    distance to R falls below ``tol (h - U)`` has merged with R and is
    armed, together with the points on its right that are drawn to share
    its fate; armed points are swallowed at the next touch of R+.  Events are
    written in time order: ``2 + j`` when marked point ``j`` is swallowed,
    then 0 and 1 for touches of R- and R+ (repeats of one side collapsed).
    Returns ``(n_events, r, substeps)`` with ``r`` the clock
    ``int ds / Delta^2`` when ``r_on``; ``n_events = -1`` flags an overflow
    of the event buffer.
    """
    floor = eta * (t + dt)
    stack_h[0] = dt
    stack_u[0] = du
    sp = 1
    n = 0
    nsub = 0
    m = alive.size
    while sp > 0:
        sp -= 1
        h = stack_h[sp]
        u = stack_u[sp]
        # an increment that carries a gap across 0 always needs bisection
        g = min(min(y[0], y[1]), max(min(y[0] + u, y[1] - u), 0.0))
        if h > floor and h > refine * g * g and sp + 2 <= stack_h.size:
            u1 = 0.5 * u + math.sqrt(1.5 * h) * gen.standard_normal()
            stack_h[sp] = 0.5 * h
            stack_u[sp] = u - u1
            stack_h[sp + 1] = 0.5 * h
            stack_u[sp + 1] = u1
            sp += 2
            continue
        nsub += 1
        inv0 = 1.0 / (y[0] + y[1]) ** 2
        yg = _implicit(y[0], u, h)
        yd = _implicit(y[1], -u, h)
        hit_g = _touched(gen, y[0], yg, h, lz, pz)
        hit_d = _touched(gen, y[1], yd, h, lz, pz)
        y[0] = yg
        y[1] = yd
        for j in range(m):
            if alive[j]:
                y[j + 2] = _implicit(y[j + 2], -u, h)
        for j in range(m):
            if alive[j] and not armed[j] and not blocked[j] and y[j + 2] - yd <= tol * y[j + 2]:
                # j has merged with R; a point on its right leaves together
                # with it when their distance ratio to U exits at 1.  The
                # events are nested, so one uniform decides them all, and
                # the losers may not arm before j is gone
                armed[j] = True
                v = gen.random()
                lose = False
                for i in range(j + 1, m):
                    if not alive[i] or armed[i]:
                        continue
                    if not lose and v < _exit_at_one(y[j + 2] / y[i + 2], ztab):
                        armed[i] = True
                    else:
                        lose = True
                        blocked[i] = True
                break
        t += h
        if r_on:
            r += 0.5 * h * (inv0 + 1.0 / (yg + yd) ** 2)
        if hit_d:
            for j in range(m):
                if alive[j] and armed[j]:
                    alive[j] = False
                    n = _emit(ev_code, ev_t, ev_r, n, 2 + j, t, r)
                    if n < 0:
                        return -1, r, nsub
                blocked[j] = False
        for code in range(2):
            if (hit_g if code == 0 else hit_d) and (n == 0 or ev_code[n - 1] != code):
                n = _emit(ev_code, ev_t, ev_r, n, code, t, r)
                if n < 0:
                    return -1, r, nsub
    return n, r, nsub


_STACK = 128
_EVENTS = 256


@numba.njit(cache=True, nogil=True)
def _comsle_kernel(gen, xs, t0, kappa, refine, eta, tol, lz, pz, ztab, max_substeps, counts, info):
    """Direct ComSLE counts for marked points ``xs`` (``xs[0] = 1``).

    ``counts[j]`` is the first odd alternated touch index at or after the
    swallowing of ``xs[j]``, the swallowing of 1 being index 1.  ``info``
    receives ``[Z at t = 1, r-time from t = 1 to the next touch of R+,
    status]``; status is 1 on success and 0 on budget overrun.
    """
    m = xs.size
    y = np.empty(m + 2)
    alive = np.ones(m, dtype=np.bool_)
    armed = np.zeros(m, dtype=np.bool_)
    blocked = np.zeros(m, dtype=np.bool_)
    swallow_t = np.full(m, -1.0)
    for j in range(m):
        y[j + 2] = xs[j]
        counts[j] = 0
    stack_h = np.empty(_STACK)
    stack_u = np.empty(_STACK)
    ev_code = np.empty(_EVENTS, dtype=np.int64)
    ev_t = np.empty(_EVENTS)
    ev_r = np.empty(_EVENTS)
    _start(gen, y, alive, t0)
    t = t0
    k = 0
    waiting_left = False
    z1 = -1.0
    r = 0.0
    r_first = -1.0
    pending = m
    used = 0
    info[2] = 0.0
    while used < max_substeps:
        dt = kappa * t
        if t < 1.0 < t + dt:
            dt = 1.0 - t
        du = math.sqrt(6.0 * dt) * gen.standard_normal()
        after_one = z1 >= 0.0
        n, r, nsub = _base_step(gen, y, alive, armed, blocked, t, dt, du, r, after_one, refine, eta, tol,
                                lz, pz, ztab, stack_h, stack_u, ev_code, ev_t, ev_r)
        used += nsub
        if n < 0:
            break
        t += dt
        for e in range(n):
            code = ev_code[e]
            if code >= 2:
                j = code - 2
                swallow_t[j] = ev_t[e]
                if j == 0 and k == 0:
                    k = 1
                    waiting_left = True
                if k >= 1 and swallow_t[j] == swallow_t[0]:
                    counts[j] = 1
                    pending -= 1
            elif code == 0:
                if k >= 1 and waiting_left:
                    k += 1
                    waiting_left = False
            else:
                if after_one and r_first < 0.0:
                    r_first = ev_r[e]
                if k >= 1 and not waiting_left:
                    k += 1
                    waiting_left = True
                    for j in range(m):
                        if swallow_t[j] >= 0.0 and counts[j] == 0:
                            counts[j] = k
                            pending -= 1
        if not after_one and t >= 1.0 - 1e-12:
            z1 = y[0] / (y[0] + y[1])
        if pending == 0 and r_first >= 0.0:
            info[2] = 1.0
            break
    info[0] = z1
    info[1] = r_first
    return used


@dataclass
class TripleState:
    """Physical-time state ``(t, G, U, D)`` with marked right points.

    ``marked`` holds ``(label, h)`` pairs of points not yet swallowed,
    ``armed`` the labels of those due to go at the next touch of R+ and
    ``blocked`` those drawn to outlive the armed ones.
    """

    t: float = 0.0
    G: float = 0.0
    U: float = 0.0
    D: float = 0.0
    marked: list = field(default_factory=list)
    swallowed: list = field(default_factory=list)
    touches: list = field(default_factory=list)
    armed: set = field(default_factory=set)
    blocked: set = field(default_factory=set)

    @property
    def L(self):
        return self.U - math.sqrt(self.G)

    @property
    def R(self):
        return self.U + math.sqrt(self.D)

    @property
    def Delta(self):
        return math.sqrt(self.G) + math.sqrt(self.D)


def step_triple(state: TripleState, dt: float, rng: RngStream, refine: float = 0.05,
                eta: float = 1e-12, tol: float = 1e-6) -> TripleState:
    """Advance the triple and its marked points by ``dt`` with one driving increment.

    The first step out of ``G = D = 0`` draws the two gaps from their exact
    squared-Bessel laws.  Later steps use the bisected drift-implicit
    scheme; touches of R+ (``"+"``) and R- (``"-"``) are appended to
    ``state.touches``.  A point with ``h - R <= tol (h - U)`` is armed and
    is swallowed at the next touch of R+; swallowed points go to
    ``state.swallowed``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    lz, pz = bridge_hit_table()
    m = len(state.marked)
    y = np.empty(m + 2)
    y[0] = math.sqrt(state.G)
    y[1] = math.sqrt(state.D)
    for j, (_, h) in enumerate(state.marked):
        y[j + 2] = h - state.U
    alive = np.ones(m, dtype=np.bool_)
    armed = np.array([label in state.armed for label, _ in state.marked], dtype=np.bool_)
    blocked = np.array([label in state.blocked for label, _ in state.marked], dtype=np.bool_)
    g = rng.generator
    if state.G == 0.0 and state.D == 0.0:
        du = _start(g, y, alive, dt)
        events = []
    else:
        du = math.sqrt(6.0 * dt) * g.standard_normal()
        stack_h = np.empty(_STACK)
        stack_u = np.empty(_STACK)
        ev_code = np.empty(_EVENTS, dtype=np.int64)
        ev_t = np.empty(_EVENTS)
        ev_r = np.empty(_EVENTS)
        n, _, _ = _base_step(g, y, alive, armed, blocked, state.t, dt, du, 0.0, False, refine, eta, tol,
                             lz, pz, natural_scale_tables()[0], stack_h, stack_u, ev_code, ev_t, ev_r)
        if n < 0:
            raise RuntimeError("event buffer overflow")
        events = list(zip(ev_code[:n].tolist(), ev_t[:n].tolist()))
    state.t += dt
    state.U += du
    state.G = y[0] ** 2
    state.D = y[1] ** 2
    labels = [label for label, _ in state.marked]
    for code, te in events:
        if code >= 2:
            state.swallowed.append((labels[code - 2], te))
        else:
            state.touches.append((te, "-" if code == 0 else "+"))
    state.marked = [(labels[j], state.U + y[j + 2]) for j in range(m) if alive[j]]
    state.armed = {labels[j] for j in range(m) if alive[j] and armed[j]}
    state.blocked = {labels[j] for j in range(m) if alive[j] and blocked[j]}
    return state


@numba.njit(cache=True, nogil=True)
def _triple_path(gen, t0, kappa, refine, eta, lz, pz, ztab, t_obs, g_out, delta_out):
    # G and Delta at the increasing observation times t_obs
    y = np.empty(2)
    alive = np.zeros(0, dtype=np.bool_)
    stack_h = np.empty(_STACK)
    stack_u = np.empty(_STACK)
    ev_code = np.empty(_EVENTS, dtype=np.int64)
    ev_t = np.empty(_EVENTS)
    ev_r = np.empty(_EVENTS)
    _start(gen, y, alive, t0)
    t = t0
    i = 0
    while i < t_obs.size and t_obs[i] <= t:
        g_out[i] = y[0] * y[0]
        delta_out[i] = y[0] + y[1]
        i += 1
    while i < t_obs.size:
        dt = min(kappa * t, t_obs[i] - t)
        du = math.sqrt(6.0 * dt) * gen.standard_normal()
        _base_step(gen, y, alive, alive, alive, t, dt, du, 0.0, False, refine, eta, 0.0, lz, pz, ztab,
                   stack_h, stack_u, ev_code, ev_t, ev_r)
        t += dt
        while i < t_obs.size and t >= t_obs[i] * (1.0 - 1e-12):
            g_out[i] = y[0] * y[0]
            delta_out[i] = y[0] + y[1]
            i += 1


def triple_observe(t_obs, rng: RngStream, t0: float = 1e-4, kappa: float = 1e-3,
                   refine: float = 0.05, eta: float = 1e-12):
    """``(G_t, Delta_t)`` at the increasing times ``t_obs``, started from ``G = D = 0``."""
    lz, pz = bridge_hit_table()
    t_obs = np.asarray(t_obs, dtype=float)
    if np.any(np.diff(t_obs) <= 0) or t_obs[0] <= 0:
        raise ValueError("observation times must be positive and increasing")
    g = np.empty(t_obs.size)
    d = np.empty(t_obs.size)
    _triple_path(rng.generator, min(t0, t_obs[0]), kappa, refine, eta, lz, pz,
                 natural_scale_tables()[0], t_obs, g, d)
    return g, d


@dataclass
class ComSLEResult:
    counts: np.ndarray
    z_at_one: float
    r_first_touch: float


def comsle_direct(xs, rng: RngStream, kappa: float = 1e-3, t0: float = 1e-4,
                  refine: float = 0.05, eta: float = 1e-12, tol: float = 1e-6,
                  max_substeps: int = 10**7) -> ComSLEResult:
    """Alternated touch counts between the swallowing of 1 and of each ``x``.

    ``kappa`` is the relative base step ``dt = kappa t``.  The same run also
    reports ``Z`` at ``t = 1`` and the r-time from ``t = 1`` to the next
    touch of R+, which the log-time backend must reproduce.

    Raises
    ------
    BudgetExceeded
        If the run needs more than ``max_substeps`` substeps.
    """
    xs = np.asarray(xs, dtype=float)
    if np.any(xs < 1.0) or np.any(xs > math.exp(6.0) * (1 + 1e-12)) or np.any(np.diff(xs) < 0):
        raise ValueError("xs must be increasing and lie in [1, e^6]")
    grid = np.concatenate([[1.0], xs[xs > 1.0]])
    lz, pz = bridge_hit_table()
    counts = np.zeros(grid.size, dtype=np.int64)
    info = np.zeros(3)
    _comsle_kernel(rng.generator, grid, t0, kappa, refine, eta, tol, lz, pz,
                   natural_scale_tables()[0], max_substeps,
                   counts, info)
    if info[2] != 1.0:
        raise BudgetExceeded(max_substeps)
    out = np.ones(xs.size, dtype=np.int64)
    out[xs > 1.0] = counts[1:]
    return ComSLEResult(out, float(info[0]), float(info[1]))


@numba.njit(cache=True, nogil=True)
def _first_touch_kernel(gen, z0, kappa, refine, eta, lz, pz, ztab, max_substeps, out):
    # from t = 1 with Z = z0, r-time until the next touch of R+
    y = np.empty(2)
    y[0] = z0 * math.sqrt(10.0)
    y[1] = (1.0 - z0) * math.sqrt(10.0)
    alive = np.zeros(0, dtype=np.bool_)
    stack_h = np.empty(_STACK)
    stack_u = np.empty(_STACK)
    ev_code = np.empty(_EVENTS, dtype=np.int64)
    ev_t = np.empty(_EVENTS)
    ev_r = np.empty(_EVENTS)
    t = 1.0
    r = 0.0
    used = 0
    while used < max_substeps:
        dt = kappa * t
        du = math.sqrt(6.0 * dt) * gen.standard_normal()
        n, r, nsub = _base_step(gen, y, alive, alive, alive, t, dt, du, r, True, refine, eta, 0.0, lz,
                                pz, ztab, stack_h, stack_u, ev_code, ev_t, ev_r)
        used += nsub
        t += dt
        for e in range(n):
            if ev_code[e] == 1:
                out[0] = ev_r[e]
                out[1] = used
                return True
    return False


def triple_first_touch(z0: float, rng: RngStream, kappa: float = 1e-3, refine: float = 0.05,
                       eta: float = 1e-12, max_substeps: int = 10**8) -> float:
    """r-time from ``t = 1`` with ``Z = z0`` to the next touch of R+ in physical time."""
    lz, pz = bridge_hit_table()
    out = np.zeros(2)
    if not _first_touch_kernel(rng.generator, float(z0), kappa, refine, eta, lz, pz,
                               natural_scale_tables()[0], max_substeps, out):
        raise BudgetExceeded(max_substeps)
    return float(out[0])
