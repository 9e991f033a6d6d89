"""Seeded randomness, special samplers, quadrature and test statistics.

Every random operation takes an :class:`RngStream`.  Streams are derived
from a ``(master_seed, stream_id)`` pair through the Philox counter-based
generator, so replicas can be scheduled on any number of workers and still
reproduce bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

_U64 = (1 << 64) - 1


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature fails to reach the requested tolerance."""


@dataclass
class RngStream:
    """Independent random stream keyed by ``(master_seed, stream_id)``.

    Parameters
    ----------
    master_seed : int
        Experiment-level seed, reduced to 64 bits.
    stream_id : int
        Task identifier, reduced to 64 bits.

    Notes
    -----
    The key of a Philox generator is exactly the pair, so distinct ids give
    disjoint counter streams rather than hashed seeds.  ``generator`` is a
    plain :class:`numpy.random.Generator` and can be handed to numba kernels.
    """

    master_seed: int
    stream_id: int
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.master_seed = int(self.master_seed) & _U64
        self.stream_id = int(self.stream_id) & _U64
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def random(self, size=None):
        return self.generator.random(size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)


def derive_stream(master_seed: int, task_id: int) -> RngStream:
    """Return the stream for ``task_id`` under ``master_seed``."""
    return RngStream(master_seed, task_id)


def spawn(rng: RngStream, index: int) -> RngStream:
    """Child stream number ``index`` of ``rng``.

    The child id mixes the parent id and the index through
    :class:`numpy.random.SeedSequence`; the master seed is kept.
    """
    ss = np.random.SeedSequence([rng.stream_id, int(index)])
    return RngStream(rng.master_seed, int(ss.generate_state(1, np.uint64)[0]))


def run_replicas(fn, rng: RngStream, replicas: int, threads: int = 1,
                 with_index: bool = False) -> list:
    """Apply ``fn`` to the child streams ``0 .. replicas-1`` of ``rng``.

    Results come back in replica order whatever the thread count, so any
    reduction over them is reproducible.  Kernels release the GIL, which is
    what makes threads useful here.  With ``with_index`` the call is
    ``fn(index, stream)``.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    call = (lambda r: fn(r, spawn(rng, r))) if with_index else (lambda r: fn(spawn(rng, r)))
    if threads <= 1:
        return [call(r) for r in range(replicas)]
    from concurrent.futures import ThreadPoolExecutor
    pool = ThreadPoolExecutor(max_workers=threads)
    try:
        return list(pool.map(call, range(replicas)))
    finally:
        # after a failure, replicas not yet started are dropped
        pool.shutdown(wait=True, cancel_futures=True)


def task_id(experiment_code: int, replica: int) -> int:
    """Pack an experiment code and a replica index into one stream id."""
    if replica < 0 or replica >= 1 << 40:
        raise ValueError("replica index out of range")
    return ((int(experiment_code) & 0xFFFFFF) << 40) | int(replica)


def stable32_scale(t: float) -> float:
    """Scale of the S(3/2, -1, 0) law matching ``E exp(lam S_t) = exp(t lam^1.5)``.

    For a totally left-skewed stable law with index ``alpha`` in (1, 2) and
    scale ``sigma`` the Laplace exponent is ``-sigma^alpha / cos(pi alpha / 2)``
    times ``lam^alpha``, and ``-1/cos(3 pi/4) = sqrt(2)``.
    """
    return (t / math.sqrt(2.0)) ** (2.0 / 3.0)


def sample_stable32(rng: RngStream, t: float, size=None):
    """Draw ``S_t`` for the spectrally negative 3/2-stable process.

    Uses the Chambers-Mallows-Stuck construction for ``S(alpha, beta, 0)``
    with ``alpha = 3/2`` and ``beta = -1`` rescaled by :func:`stable32_scale`.

    Parameters
    ----------
    rng : RngStream
    t : float
        Time, must be positive.
    size : int or tuple, optional
        Output shape; a float is returned when omitted.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    alpha, beta = 1.5, -1.0
    g = rng.generator
    v = g.uniform(-0.5 * math.pi, 0.5 * math.pi, size)
    w = g.standard_exponential(size)
    tan_a = math.tan(0.5 * math.pi * alpha)
    shift = math.atan(beta * tan_a) / alpha
    amp = (1.0 + beta * beta * tan_a * tan_a) ** (0.5 / alpha)
    x = (amp * np.sin(alpha * (v + shift)) / np.cos(v) ** (1.0 / alpha)
         * (np.cos(v - alpha * (v + shift)) / w) ** ((1.0 - alpha) / alpha))
    out = stable32_scale(t) * x
    return float(out) if size is None else out


def sample_beta(rng: RngStream, a: float, b: float, size=None):
    """Beta(a, b) draw."""
    if not (a > 0 and b > 0):
        raise ValueError("shape parameters must be positive")
    out = rng.generator.beta(a, b, size)
    return float(out) if size is None else out


def besq_step(rng: RngStream, x, dim: float, dt: float, size=None):
    """Exact transition of a squared Bessel process over ``dt``.

    ``X_dt / dt`` given ``X_0 = x`` is noncentral chi-square with ``dim``
    degrees of freedom and noncentrality ``x / dt``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not dim > 0 or not dt > 0:
        raise ValueError("besq_step needs x >= 0, dim > 0, dt > 0")
    if size is None and x.ndim > 0:
        size = x.shape
    out = dt * rng.generator.noncentral_chisquare(dim, x / dt, size)
    return float(out) if np.ndim(out) == 0 else out


def quadrature(f, a: float, b: float, tol: float = 1e-10, *, singular=None,
               limit: int = 500) -> float:
    """Adaptive integral of ``f`` over ``(a, b)``.

    Parameters
    ----------
    f : callable
    a, b : float
        Limits; either may be infinite.
    tol : float
        Absolute and relative tolerance requested from QUADPACK.
    singular : tuple of float, optional
        Exponents ``(ea, eb)`` of power-type endpoint behaviour
        ``f ~ (x-a)^ea`` and ``f ~ (b-x)^eb`` on a finite interval.  Each half
        of the interval is then mapped by ``x = a + h u^m`` (mirrored at
        ``b``) with ``m = 1 / (1 + e)``, which turns the singular factor into
        a bounded one.
    limit : int
        Subdivision budget.

    Raises
    ------
    QuadratureError
        If QUADPACK reports anything other than success.
    """
    if singular is None:
        return _quad(f, a, b, tol, limit)
    ea, eb = singular
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("endpoint singularities need a finite interval")
    if ea <= -1 or eb <= -1:
        raise ValueError("singularity exponents must exceed -1")
    h = 0.5 * (b - a)
    ma = 1.0 / (1.0 + ea) if ea < 0 else 1.0
    mb = 1.0 / (1.0 + eb) if eb < 0 else 1.0
    left = _quad(lambda u: _near(f, a, b, h * u ** ma, ea) * h * ma * u ** (ma - 1.0),
                 0.0, 1.0, tol, limit)
    right = _quad(lambda u: _near(f, b, a, h * u ** mb, eb) * h * mb * u ** (mb - 1.0),
                  0.0, 1.0, tol, limit)
    return left + right


def _near(f, end, other, dist, e):
    # f at distance ``dist`` from ``end``.  Close to a nonzero endpoint the
    # abscissa rounds, so f is taken at the rounded point and rescaled by
    # the power law it follows there
    x = end + dist if other > end else end - dist
    if x == end:
        x = np.nextafter(end, other)
    gap = abs(x - end)
    val = f(x)
    return val if gap == dist or e == 0 else val * (dist / gap) ** e


def _quad(f, a, b, tol, limit):
    res = integrate.quad(f, a, b, epsabs=tol, epsrel=tol, limit=limit, full_output=1)
    value = res[0]
    if len(res) > 3:
        raise QuadratureError(f"quadrature did not converge: {res[3]}")
    return float(value)


def ks_distance(sample, reference) -> float:
    """Kolmogorov-Smirnov statistic.

    ``reference`` is either a second sample (two-sample statistic) or a
    callable CDF (one-sample statistic).
    """
    sample = np.asarray(sample, dtype=float).ravel()
    if sample.size == 0:
        raise ValueError("empty sample")
    if callable(reference):
        return float(stats.kstest(sample, reference).statistic)
    reference = np.asarray(reference, dtype=float).ravel()
    if reference.size == 0:
        raise ValueError("empty reference sample")
    return float(stats.ks_2samp(sample, reference).statistic)


def batch_means_stderr(x, n_batches: int = 50) -> float:
    """Standard error of the mean of a correlated series by batch means."""
    x = np.asarray(x, dtype=float)
    m = x.size // n_batches
    if m < 2:
        raise ValueError("series too short for the requested batches")
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def mean_stderr(x) -> tuple[float, float]:
    """Sample mean and its standard error for i.i.d. values."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


class LogAccumulator:
    """Running sum of positive terms stored as its logarithm.

    Parameters
    ----------
    log_value : float
        Initial logarithm, ``-inf`` for an empty sum.
    """

    __slots__ = ("log_value",)

    def __init__(self, log_value: float = -math.inf):
        self.log_value = float(log_value)

    def add_log(self, log_term: float) -> "LogAccumulator":
        """Add ``exp(log_term)`` to the sum."""
        self.log_value = float(np.logaddexp(self.log_value, log_term))
        return self

    def add(self, term: float) -> "LogAccumulator":
        if term < 0:
            raise ValueError("only positive terms can be accumulated")
        if term > 0:
            self.add_log(math.log(term))
        return self

    def __float__(self):
        return self.log_value

    def __repr__(self):
        return f"LogAccumulator({self.log_value!r})"
