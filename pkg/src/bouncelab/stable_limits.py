"""Record sets of two independent 3/2-stable processes in logarithmic scale.

The times at which a spectrally negative 3/2-stable process reaches a new
minimum form a regenerative set of index 1/3.  Interlacing the record sets
of two independent copies gives record times ``xi(1) < xi(2) < ...`` whose
log-gaps ``X_n = log xi(n+1) - log xi(n)`` form a reversible Markov chain on
``(0, inf)`` with kernel

    p(x, y) = (sqrt(3) / 2 pi) ((e^x - 1) / (e^x (e^y - 1)))^{1/3} / (1 - e^{-x-y})

and invariant density proportional to ``e^{x/3} (e^x - 1)^{-2/3}`` whose mean
is ``pi / sqrt(3)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import special

from .numerics import RngStream, mean_stderr, quadrature, run_replicas

SQRT3_2PI = math.sqrt(3.0) / (2.0 * math.pi)
VARPI_NORM = 2.0 ** (2.0 / 3.0) * math.sqrt(math.pi) / (special.gamma(1 / 3) * special.gamma(1 / 6))
XI_RATE = math.pi / math.sqrt(3.0)
COMSTABLE_RATE = 3.0 * math.sqrt(3.0) / (2.0 * math.pi)


def kernel_density(x, y):
    """Transition density ``p(x, y)`` of the record-gap chain."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    # (e^x - 1) / e^x = -expm1(-x) and (e^y - 1)^{-1/3} = e^{-y/3} (-expm1(-y))^{-1/3}
    out = (SQRT3_2PI * (-np.expm1(-x) / -np.expm1(-y)) ** (1.0 / 3.0) * np.exp(-y / 3.0)
           / (-np.expm1(-x - y)))
    return out if out.ndim else float(out)


def log_varpi_density(x):
    x = np.asarray(x, dtype=float)
    # log(e^x - 1) = x + log(-expm1(-x))
    out = math.log(VARPI_NORM) + x / 3.0 - 2.0 / 3.0 * (x + np.log(-np.expm1(-x)))
    return out if out.ndim else float(out)


def varpi_density(x):
    """Invariant (and reversible) probability density of the chain."""
    return np.exp(log_varpi_density(x))


def nu_density(x):
    """Density ``e^x / (e^x - 1)^{4/3}`` of the log-scale regenerative measure."""
    x = np.asarray(x, dtype=float)
    return np.exp(x - 4.0 / 3.0 * (x + np.log(-np.expm1(-x))))


def nu_tail(x):
    """``nu[x, inf) = 3 / (e^x - 1)^{1/3}``."""
    return 3.0 / np.expm1(x) ** (1.0 / 3.0)


def _integrate_0_inf(f, tol, singular_exp=None):
    # split at 1 so the power singularity at 0 gets the algebraic weight
    head = quadrature(f, 0.0, 1.0, tol,
                      singular=None if singular_exp is None else (singular_exp, 0.0))
    return head + quadrature(f, 1.0, math.inf, tol)


def varpi_checks(tol: float = 1e-11) -> dict:
    """Quadrature checks of the invariant measure.

    Returns the total mass, the mean, and the one-step invariance residuals
    ``int varpi(x) p(x, y) dx - varpi(y)`` at ``y`` in ``{0.5, 1, 3}``.
    """
    mass = _integrate_0_inf(varpi_density, tol, -2.0 / 3.0)
    mean = _integrate_0_inf(lambda x: x * varpi_density(x), tol, 1.0 / 3.0)
    resid = {}
    for y in (0.5, 1.0, 3.0):
        val = _integrate_0_inf(lambda x, y=y: varpi_density(x) * kernel_density(x, y), tol,
                               -1.0 / 3.0)
        resid[y] = val - varpi_density(y)
    return {"mass": mass, "mean": mean, "invariance_residual": resid}


def kernel_mass(x: float, tol: float = 1e-11) -> float:
    """``int_0^inf p(x, y) dy``."""
    return _integrate_0_inf(lambda y: kernel_density(x, y), tol, -1.0 / 3.0)


def kernel_cdf(x: float, tol: float = 1e-12, grid: int = 4000):
    """Distribution function ``y -> int_0^y p(x, u) du`` as a callable.

    The integral is tabulated by quadrature on a log-spaced grid and the
    table is interpolated linearly in ``log y``; beyond the grid the exact
    tail asymptotics are negligible at the tolerances used here.
    """
    if not x > 0:
        raise ValueError("gap must be positive")
    ys = np.geomspace(1e-12, 80.0, grid)
    pieces = np.empty(grid)
    pieces[0] = quadrature(lambda u: kernel_density(x, u), 0.0, ys[0], tol,
                           singular=(-1.0 / 3.0, 0.0))
    for i in range(1, grid):
        pieces[i] = quadrature(lambda u: kernel_density(x, u), ys[i - 1], ys[i], tol)
    cum = np.cumsum(pieces)
    log_ys = np.log(ys)

    def cdf(y):
        y = np.asarray(y, dtype=float)
        out = np.interp(np.log(np.maximum(y, 1e-300)), log_ys, cum, left=0.0, right=1.0)
        return np.where(y > 0, out, 0.0)

    return cdf


@numba.njit(cache=True, nogil=True)
def _gap_step(gen, x):
    s = gen.beta(1.0 / 3.0, 2.0 / 3.0)
    # c = x - log((e^x - 1) s + 1), written to stay finite for any x > 0
    c = -math.log1p(-(1.0 - s) * (-math.expm1(-x)))
    v = 1.0 - gen.random()
    # y = log(1 + (e^c - 1) / v^3) - c
    return math.log1p(-math.expm1(-c) * (v ** -3.0 - 1.0))


@numba.njit(cache=True, nogil=True)
def _first_gap(gen):
    # gap following a record whose predecessor sits at time 0 (x = inf)
    s = gen.beta(1.0 / 3.0, 2.0 / 3.0)
    v = 1.0 - gen.random()
    return math.log(s + (1.0 - s) * v ** -3.0)


@numba.njit(cache=True, nogil=True)
def _chain_kernel(gen, x, out):
    for i in range(out.size):
        x = _gap_step(gen, x)
        out[i] = x
    return x


@numba.njit(cache=True, nogil=True)
def _gap_samples(gen, x, out):
    for i in range(out.size):
        out[i] = _gap_step(gen, x)


def sample_record_gap(x: float, rng: RngStream, size=None):
    """Exact draw(s) of the next gap given the current gap ``x``.

    Two stages: the last record of the lagging process before the current
    time sits at log-position ``u = log((e^x - 1) s + 1)`` with
    ``s ~ Beta(1/3, 2/3)``; the overshoot past the remaining distance
    ``c = x - u`` is then drawn from ``nu`` conditioned on ``[c, inf)`` by
    inverting ``nu[y, inf) = 3 (e^y - 1)^{-1/3}``.  The returned gap is the
    overshoot measured from the current time, ``a - c``.
    """
    if not x > 0:
        raise ValueError("gap must be positive")
    out = np.empty(1 if size is None else size)
    _gap_samples(rng.generator, float(x), out.reshape(-1))
    return float(out[0]) if size is None else out


@dataclass
class RecordChainState:
    """Current gap, accumulated ``log xi`` and step count."""

    x: float
    log_xi: float = 0.0
    n: int = 0


def run_chain(state: RecordChainState, steps: int, rng: RngStream):
    """Advance the chain ``steps`` times; returns the gaps visited."""
    out = np.empty(steps)
    if steps:
        state.x = float(_chain_kernel(rng.generator, state.x, out))
        state.log_xi += float(out.sum())
        state.n += steps
    return out


def chain_to_csv(gaps, path, log_xi0: float = 0.0) -> None:
    """Write ``n, x, log_xi`` rows for a gap trajectory."""
    log_xi = log_xi0 + np.cumsum(gaps)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "x", "log_xi"])
        for i, (g, lx) in enumerate(zip(gaps, log_xi), start=1):
            w.writerow([i, repr(float(g)), repr(float(lx))])


def xi_rate_replica(k: int, rng: RngStream, burn_in: int = 1000, x0: float = 1.0) -> float:
    """``(1/k) sum X_i`` over ``k`` steps after a burn-in from ``x0``."""
    st = RecordChainState(x0)
    run_chain(st, burn_in, rng)
    return float(run_chain(st, k, rng).mean())


def estimate_xi_rate(k: int, replicas: int, rng: RngStream, burn_in: int = 1000,
                     threads: int = 1):
    """Estimate of ``lim log xi(n) / n`` with its standard error across replicas."""
    if k < 10:
        raise ValueError("k must be at least 10")
    vals = run_replicas(lambda r: xi_rate_replica(k, r, burn_in), rng, replicas, threads)
    return mean_stderr(vals)


@numba.njit(cache=True, nogil=True)
def _comstable_kernel(gen, x, target):
    # smallest odd k with X_1 + ... + X_{k-1} >= target, X_1 = x
    k = 1
    s = 0.0
    while s < target:
        s += x
        k += 1
        x = _gap_step(gen, x)
    if k % 2 == 0:
        k += 1
    return k


def comstable_count(log_x: float, rng: RngStream, burn_in: int = 1000) -> int:
    """Chain-based commuting count between the passages below ``-1`` and ``-x``.

    The log-record distance to cover is ``(3/2) log x``, the first-passage
    time of the minimum scaling like the 3/2 power of the level.  The count
    starts from a gap drawn after ``burn_in`` steps of the chain.
    """
    if log_x < 0:
        raise ValueError("log_x must be nonnegative")
    st = RecordChainState(1.0)
    run_chain(st, burn_in, rng)
    return int(_comstable_kernel(rng.generator, st.x, 1.5 * log_x))


def comstable_estimate(log_x: float, replicas: int, rng: RngStream, burn_in: int = 1000,
                       threads: int = 1):
    """``E[ComStable(1, x)] / log x`` with its standard error."""
    if log_x < 1:
        raise ValueError("log_x must be at least 1")
    vals = run_replicas(lambda r: comstable_count(log_x, r, burn_in), rng, replicas, threads)
    m, se = mean_stderr(vals)
    return m / log_x, se / log_x


@numba.njit(cache=True, nogil=True)
def _interlaced_kernel(gen, n_terms, out):
    # exact linear-scale record times after t = 1 of two regenerative sets
    # of index 1/3 started at 0; side 0 goes first
    last = np.zeros(2)
    t = 1.0
    side = 0
    for i in range(n_terms):
        g = last[side]
        s = gen.beta(1.0 / 3.0, 2.0 / 3.0)
        v = 1.0 - gen.random()
        # last point before t sits at g + (t - g) s; the excursion straddling
        # t has length (t - g)(1 - s) / v^3
        lo = g + (t - g) * s
        t = lo + (t - g) * (1.0 - s) / v ** 3
        out[i] = t
        last[side] = t
        side = 1 - side


def interlaced_records(n_terms: int, rng: RngStream) -> np.ndarray:
    """Record times ``xi(1), ..., xi(n_terms)`` after time 1 in linear scale.

    Independent of the log-gap chain: each process keeps its own last record
    and the next record after the current time is drawn from the
    regenerative set restarted there.
    """
    out = np.empty(n_terms)
    _interlaced_kernel(rng.generator, n_terms, out)
    return out


def first_record_after_one(rng: RngStream, size: int) -> np.ndarray:
    """Draws of ``xi+(1)``, the first record after time 1 of one process."""
    g = rng.generator.beta(1.0 / 3.0, 2.0 / 3.0, size)
    v = 1.0 - rng.generator.random(size)
    return g + (1.0 - g) / v ** 3
