"""Peeling law of the half-plane triangulation and horodistance walks.

One peeling step reveals a triangle of one of three forms: ``Center`` (a new
inner vertex, probability 2/3) or a ``Left(k)`` / ``Right(k)`` jump that
swallows ``k`` boundary edges on that side, each with probability
``q(k) = (2k-2)! / (4^k (k-1)! (k+1)!)``.

Horodistances are tracked as doubled integers.  Walk generation runs in a
numba kernel over an integer boundary state

``(m_left, m_right, a, b)``

where the boundary reads ``... O(a-1) O(a) | middle | O(b) O(b+1) ...``:
two untouched rays of original edges around a finite middle made of fresh
edges, with ``m_left`` and ``m_right`` middle edges on either side of the
cursor.  In these coordinates ``H+ = m_right - (b - 1)`` and
``H- = m_left + a + 1``.  :class:`BoundaryLedger` keeps explicit labels
instead and serves as the independent oracle for that bookkeeping.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numba
import numpy as np
from scipy import special

from .numerics import RngStream

K_TABLE = 1 << 16
P_CENTER = 2.0 / 3.0
P_SIDE = 1.0 / 6.0

POLICIES = {"predicted-edge": 0, "percolation": 1, "leftmost-exposed": 2}

# unused by the walk: probability that a Left(1)/Right(1) jump encloses
# no inner vertex, kept for reference
ENCLOSED_EMPTY_K1 = Fraction(8, 9)


class BudgetExceeded(RuntimeError):
    """A stopping time did not fire within the configured step budget."""

    def __init__(self, steps):
        super().__init__(f"step budget of {steps} exhausted")
        self.steps = steps


class FormKind(enum.IntEnum):
    CENTER = 0
    LEFT = 1
    RIGHT = 2


@dataclass(frozen=True)
class Form:
    """Outcome of one peeling step."""

    kind: FormKind
    k: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("jump size must be at least 1")
        if self.kind == FormKind.CENTER and self.k != 1:
            raise ValueError("Center has no jump size")

    @classmethod
    def center(cls):
        return cls(FormKind.CENTER, 1)

    @classmethod
    def left(cls, k):
        return cls(FormKind.LEFT, int(k))

    @classmethod
    def right(cls, k):
        return cls(FormKind.RIGHT, int(k))


@dataclass(frozen=True, order=True)
class HalfInt:
    """Exact half-integer stored as twice its value."""

    doubled: int

    @classmethod
    def of(cls, value) -> "HalfInt":
        d = Fraction(value) * 2
        if d.denominator != 1:
            raise ValueError(f"{value} is not a half-integer")
        return cls(int(d))

    def __add__(self, other):
        return HalfInt(self.doubled + HalfInt._coerce(other).doubled)

    __radd__ = __add__

    def __sub__(self, other):
        return HalfInt(self.doubled - HalfInt._coerce(other).doubled)

    def __neg__(self):
        return HalfInt(-self.doubled)

    def __float__(self):
        return self.doubled / 2.0

    def is_integer(self):
        return self.doubled % 2 == 0

    @staticmethod
    def _coerce(x):
        return x if isinstance(x, HalfInt) else HalfInt.of(x)

    def __repr__(self):
        v = Fraction(self.doubled, 2)
        return f"HalfInt({v})"


def q_left(k):
    """Probability of ``Left(k)`` (equal to that of ``Right(k)``).

    Uses ``C(2m, m) / 4^m = Gamma(m + 1/2) / (sqrt(pi) m!)`` with ``m = k - 1``,
    so the value is ``poch(k, -1/2) / (4 sqrt(pi) k (k + 1))`` and never
    forms factorials.  Accepts scalars or integer arrays.
    """
    k_arr = np.asarray(k)
    if np.any(k_arr < 1):
        raise ValueError("k must be >= 1")
    kf = k_arr.astype(float)
    out = special.poch(kf, -0.5) / (4.0 * math.sqrt(math.pi) * kf * (kf + 1.0))
    return float(out) if out.ndim == 0 else out


def q_left_exact(k: int) -> Fraction:
    """Rational value of ``q(k)`` from factorials, for small ``k``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return Fraction(math.factorial(2 * k - 2),
                    4 ** k * math.factorial(k - 1) * math.factorial(k + 1))


def side_tail(k_max: int) -> float:
    """Asymptotic mass ``sum_{k > k_max} q(k)`` of one side."""
    return k_max ** -1.5 / (6.0 * math.sqrt(math.pi)) * (1.0 - 1.5 / k_max)


def moment_checks(k_max: int = 10**6) -> dict:
    """Partial sums of the jump law up to ``k_max``.

    Returns ``first_moment = sum k q(k)``, the raw ``mass`` of the Center
    and both jump sides and ``mass_tail_corrected`` which adds the
    asymptotic tail :func:`side_tail` on each side.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    k = np.arange(k_max, 0, -1)
    q = q_left(k)
    # summed from the small terms up
    first = float(np.sum(k * q))
    mass = P_CENTER + 2.0 * float(np.sum(q))
    return {"first_moment": first, "mass": mass,
            "mass_tail_corrected": mass + 2.0 * side_tail(k_max)}


def _build_table():
    k = np.arange(1, K_TABLE + 1)
    cdf = np.cumsum(q_left(k)) / P_SIDE
    return cdf


_SIDE_CDF = _build_table()


@numba.njit(cache=True)
def _gamma_ratio_sqrt(k):
    # sqrt(k) * Gamma(k - 1/2) / Gamma(k), asymptotic series in 1/k
    w = 1.0 / k
    return 1.0 + w * (3.0 / 8 + w * (25.0 / 128 + w * (105.0 / 1024 + w * (
        1659.0 / 32768 + w * (6237.0 / 262144 + w * 50765.0 / 4194304)))))


@numba.njit(cache=True)
def _tail_k(gen, k0):
    # exact draw of k > k0 with weights q(k): proposal floor(k0 U^{-2/3}) + 1
    while True:
        u = 1.0 - gen.random()
        x = k0 * u ** (-2.0 / 3.0)
        if x > 4.0e18:
            # probability below 1e-20 per tail draw; keeps k inside int64
            continue
        k = np.int64(x) + 1
        kf = float(k)
        ratio = 1.5 * _gamma_ratio_sqrt(kf) / (
            (kf + 1.0) * math.expm1(-1.5 * math.log1p(-1.0 / kf)))
        if gen.random() < ratio:
            return k


@numba.njit(cache=True)
def _draw_jump(gen, cdf):
    v = gen.random()
    if v < cdf[-1]:
        return np.int64(np.searchsorted(cdf, v, side="right") + 1)
    return _tail_k(gen, cdf.size)


@numba.njit(cache=True)
def _peel_step(gen, cdf, policy, st):
    """Advance the integer boundary state by one peeling step.

    ``st`` holds ``[m_left, m_right, a, b, eta_plus_sum_doubled]``.  Returns
    ``(kind, k, coin)`` with ``coin`` the doubled percolation color.
    """
    u = gen.random()
    coin = 0
    if u < 2.0 / 3.0:
        kind = 0
        k = np.int64(1)
        if policy == 1:
            if gen.random() < 0.5:
                coin = 1
                st[1] += 1
            else:
                coin = -1
                st[0] += 1
        elif policy == 0:
            if st[4] == 0:
                st[1] += 1
            else:
                st[0] += 1
        else:
            st[1] += 1
    else:
        k = _draw_jump(gen, cdf)
        if u < 2.0 / 3.0 + 1.0 / 6.0:
            kind = 1
            if k <= st[0]:
                st[0] -= k
            else:
                st[2] -= k - st[0]
                st[0] = 0
        else:
            kind = 2
            if k <= st[1]:
                st[1] -= k
            else:
                st[3] += k - st[1]
                st[1] = 0
    if policy == 2:
        st[1] += st[0]
        st[0] = 0
    return kind, k, coin


@numba.njit(cache=True)
def _walk_kernel(gen, cdf, policy, n, st, hp0, hm0, kinds, ks, coins, hph, hmh, hp, hm):
    hp[0] = hp0
    hm[0] = hm0
    for i in range(n):
        kind, k, coin = _peel_step(gen, cdf, policy, st)
        kinds[i] = kind
        ks[i] = k
        coins[i] = coin
        if kind == 0:
            hph[i] = hp[i] + 1
            hmh[i] = hm[i] + 1
        elif kind == 1:
            hph[i] = hp[i]
            hmh[i] = hm[i] - 2 * k
        else:
            hph[i] = hp[i] - 2 * k
            hmh[i] = hm[i]
        hp[i + 1] = 2 * (st[1] - (st[3] - 1))
        hm[i + 1] = 2 * (st[0] + st[2] + 1)
        st[4] += hp[i + 1] - hph[i]


@numba.njit(cache=True)
def _endpoint_kernel(gen, cdf, policy, n):
    # doubled (sum of Delta+, sum of Delta-, H+(n), H-(n)) from the root
    st = np.array([0, 0, -1, 1, 0], dtype=np.int64)
    dp = np.int64(0)
    dm = np.int64(0)
    for _ in range(n):
        kind, k, coin = _peel_step(gen, cdf, policy, st)
        if kind == 0:
            dp += 1
            dm += 1
        elif kind == 1:
            dm -= 2 * k
        else:
            dp -= 2 * k
        # cumulative eta+ equals H+ minus the half-step sum
        st[4] = 2 * (st[1] - (st[3] - 1)) - dp
    return dp, dm, 2 * (st[1] - (st[3] - 1)), 2 * (st[0] + st[2] + 1)


def _state0():
    return np.array([0, 0, -1, 1, 0], dtype=np.int64)


def policy_code(policy: str) -> int:
    try:
        return POLICIES[policy]
    except KeyError:
        raise ValueError(f"unknown policy {policy!r}; expected one of {sorted(POLICIES)}") from None


def sample_form(rng: RngStream) -> Form:
    """Draw one form from the exact one-step law."""
    kinds, ks = sample_forms(rng, 1)
    return Form(FormKind(int(kinds[0])), int(ks[0]))


@numba.njit(cache=True)
def _forms_kernel(gen, cdf, kinds, ks):
    for i in range(kinds.size):
        u = gen.random()
        if u < 2.0 / 3.0:
            kinds[i] = 0
            ks[i] = 1
        else:
            ks[i] = _draw_jump(gen, cdf)
            kinds[i] = 1 if u < 2.0 / 3.0 + 1.0 / 6.0 else 2


def sample_forms(rng: RngStream, size: int):
    """Draw ``size`` i.i.d. forms; returns ``(kind, k)`` integer arrays."""
    kinds = np.empty(size, dtype=np.int8)
    ks = np.empty(size, dtype=np.int64)
    _forms_kernel(rng.generator, _SIDE_CDF, kinds, ks)
    return kinds, ks


def delta_plus(f: Form) -> HalfInt:
    """Half-step increment of ``H+``."""
    if f.kind == FormKind.CENTER:
        return HalfInt(1)
    if f.kind == FormKind.RIGHT:
        return HalfInt(-2 * f.k)
    return HalfInt(0)


def delta_minus(f: Form) -> HalfInt:
    """Half-step increment of ``H-``."""
    if f.kind == FormKind.CENTER:
        return HalfInt(1)
    if f.kind == FormKind.LEFT:
        return HalfInt(-2 * f.k)
    return HalfInt(0)


@dataclass
class HorodistanceWalk:
    """Horodistance trajectories in doubled units.

    Attributes
    ----------
    policy : str
    kind, k : ndarray, shape (n,)
        Form of each step.
    coin : ndarray, shape (n,)
        Doubled percolation color (``+1`` white, ``-1`` black, ``0`` none).
    h_plus_half, h_minus_half : ndarray, shape (n,)
        ``2 H+(i + 1/2)`` and ``2 H-(i + 1/2)``.
    h_plus, h_minus : ndarray, shape (n + 1,)
        ``2 H+(i)`` and ``2 H-(i)``.
    state : ndarray
        Integer boundary state after the last step, used to extend the walk.
    """

    policy: str
    kind: np.ndarray
    k: np.ndarray
    coin: np.ndarray
    h_plus_half: np.ndarray
    h_minus_half: np.ndarray
    h_plus: np.ndarray
    h_minus: np.ndarray
    state: np.ndarray = field(repr=False)
    rng: RngStream | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return int(self.kind.size)

    @property
    def eta_plus(self) -> np.ndarray:
        """Doubled policy offsets ``2 eta+(i)``."""
        return self.h_plus[1:] - self.h_plus_half

    @property
    def eta_minus(self) -> np.ndarray:
        return self.h_minus[1:] - self.h_minus_half

    def delta_plus(self) -> np.ndarray:
        return self.h_plus_half - self.h_plus[:-1]

    def delta_minus(self) -> np.ndarray:
        return self.h_minus_half - self.h_minus[:-1]

    def min_plus(self) -> np.ndarray:
        """Doubled running minimum ``2 min(0, H+(j + 1/2), j <= i)``."""
        return np.minimum.accumulate(np.minimum(self.h_plus_half, 0))

    def min_minus(self) -> np.ndarray:
        return np.minimum.accumulate(np.minimum(self.h_minus_half, 0))

    def form(self, i: int) -> Form:
        return Form(FormKind(int(self.kind[i])), int(self.k[i]))

    def extend(self, m: int, rng: RngStream | None = None) -> "HorodistanceWalk":
        """Return the walk continued for ``m`` more steps with the same policy."""
        rng = rng or self.rng
        if rng is None:
            raise ValueError("no stream available to extend the walk")
        tail = _run(m, self.policy, rng, self.state.copy(), int(self.h_plus[-1]),
                    int(self.h_minus[-1]))
        return HorodistanceWalk(
            self.policy,
            np.concatenate([self.kind, tail.kind]),
            np.concatenate([self.k, tail.k]),
            np.concatenate([self.coin, tail.coin]),
            np.concatenate([self.h_plus_half, tail.h_plus_half]),
            np.concatenate([self.h_minus_half, tail.h_minus_half]),
            np.concatenate([self.h_plus, tail.h_plus[1:]]),
            np.concatenate([self.h_minus, tail.h_minus[1:]]),
            tail.state, rng)

    def to_csv(self, path) -> None:
        """Write ``i, form_kind, k, dH_plus_doubled, dH_minus_doubled, eta_plus_doubled``."""
        names = ("C", "L", "R")
        dp, dm, eta = self.delta_plus(), self.delta_minus(), self.eta_plus
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "form_kind", "k", "dH_plus_doubled", "dH_minus_doubled",
                        "eta_plus_doubled"])
            for i in range(self.n):
                w.writerow([i, names[self.kind[i]], int(self.k[i]), int(dp[i]), int(dm[i]),
                            int(eta[i])])


def _run(n, policy, rng, state, hp0=0, hm0=0):
    code = policy_code(policy)
    kinds = np.empty(n, dtype=np.int8)
    ks = np.empty(n, dtype=np.int64)
    coins = np.empty(n, dtype=np.int8)
    hph = np.empty(n, dtype=np.int64)
    hmh = np.empty(n, dtype=np.int64)
    hp = np.empty(n + 1, dtype=np.int64)
    hm = np.empty(n + 1, dtype=np.int64)
    _walk_kernel(rng.generator, _SIDE_CDF, code, n, state, hp0, hm0, kinds, ks, coins,
                 hph, hmh, hp, hm)
    return HorodistanceWalk(policy, kinds, ks, coins, hph, hmh, hp, hm, state, rng)


def run_walk(n: int, policy: str, rng: RngStream) -> HorodistanceWalk:
    """Run ``n`` peeling steps from the root edge under ``policy``.

    Policies
    --------
    ``predicted-edge``
        After a jump the fresh edge is peeled next.  After a Center step the
        left or right new edge is taken alternately, so the running sum of
        ``eta+`` stays in ``{0, 1/2}``.
    ``percolation``
        After a Center step a fair color is drawn; white peels the left new
        edge (``eta+ = +1/2``), black the right one.
    ``leftmost-exposed``
        Always peel the leftmost edge of the explored boundary.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return _run(int(n), policy, rng, _state0())


def walk_endpoint(n: int, policy: str, rng: RngStream):
    """Doubled ``(sum Delta+, sum Delta-, H+(n), H-(n))`` without storing the path."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return tuple(int(v) for v in _endpoint_kernel(rng.generator, _SIDE_CDF,
                                                     policy_code(policy), int(n)))


def rescale_walk(walk: HorodistanceWalk, n: int, t=None):
    """Rescaled path ``t -> 3^{2/3} n^{-2/3} (H+([nt]), H-([nt]))``.

    Returns the pair of arrays on the grid ``t = j / n`` for ``j = 0..n`` or,
    when ``t`` is given, the pair evaluated there.
    """
    if n > walk.n:
        raise ValueError("n exceeds the walk length")
    c = 3.0 ** (2.0 / 3.0) * n ** (-2.0 / 3.0) / 2.0
    if t is None:
        return c * walk.h_plus[: n + 1], c * walk.h_minus[: n + 1]
    j = np.floor(np.asarray(t) * n).astype(np.int64)
    return c * walk.h_plus[j], c * walk.h_minus[j]


def _next_true(mask):
    # index of the first True at or after each position, -1 if none
    n = mask.size
    idx = np.where(mask, np.arange(n), n)
    nxt = np.minimum.accumulate(idx[::-1])[::-1]
    return np.where(nxt == n, -1, nxt)


@dataclass
class TauChain:
    """Alternating record times ``tau(1) <= tau(2) <= ...`` found in a walk."""

    indices: list
    truncated: bool


def record_masks(walk: HorodistanceWalk):
    """Boolean masks of steps with ``H(i + 1/2) = min_{j<=i} (H(j + 1/2) ^ 0)``."""
    return (walk.h_plus_half == walk.min_plus(), walk.h_minus_half == walk.min_minus())


def tau_chain(walk: HorodistanceWalk, start: int, max_terms: int | None = None) -> TauChain:
    """Alternating ``+`` then ``-`` record times starting at ``start``.

    The first term is ``tau+(start)``, the first step ``k >= start`` with
    ``H+(k + 1/2)`` equal to its running minimum.  Each later term searches
    strictly after the previous one on the other side; with an inclusive
    search a step where both sides sit at their minima would repeat forever.
    """
    if not 0 <= start < walk.n:
        raise ValueError("start outside the walk")
    rec_p, rec_m = record_masks(walk)
    nxt = (_next_true(rec_p), _next_true(rec_m))
    out = []
    pos = start
    side = 0
    while max_terms is None or len(out) < max_terms:
        if pos >= walk.n:
            return TauChain(out, True)
        j = int(nxt[side][pos])
        if j < 0:
            return TauChain(out, True)
        out.append(j)
        pos = j + 1
        side = 1 - side
    return TauChain(out, False)


@numba.njit(cache=True)
def _cdis_kernel(gen, cdf, policy, st, hp, hm, minp, minm, m_eps, n_target, budget,
                 phase, count):
    """Stream the walk until the commuting count is determined.

    ``phase`` is 0 while waiting for ``min H+ <= -m_eps``; afterwards the
    side whose record is awaited (1 for ``-``, 2 for ``+``).  Returns
    ``(count, steps_used)``; ``count`` is 0 when the budget ran out.
    """
    for step in range(budget):
        kind, k, coin = _peel_step(gen, cdf, policy, st)
        if kind == 0:
            hph = hp + 1
            hmh = hm + 1
        elif kind == 1:
            hph = hp
            hmh = hm - 2 * k
        else:
            hph = hp - 2 * k
            hmh = hm
        if hph < minp:
            minp = hph
        if hmh < minm:
            minm = hmh
        hp = 2 * (st[1] - (st[3] - 1))
        hm = 2 * (st[0] + st[2] + 1)
        st[4] += hp - hph
        if phase == 0:
            if minp <= -2 * m_eps:
                count = 1
                if minp <= -2 * n_target:
                    return count, step + 1
                phase = 1
        elif phase == 1:
            if hmh == minm:
                count += 1
                phase = 2
        else:
            if hph == minp:
                count += 1
                if minp <= -2 * n_target:
                    return count, step + 1
                phase = 1
    return 0, budget


def _cdis_scan(walk, m_eps, n):
    # replay the stored part; returns (count or 0, phase, count so far)
    mp, mm = walk.min_plus(), walk.min_minus()
    rec_p, rec_m = record_masks(walk)
    hits = np.nonzero(mp <= -2 * m_eps)[0]
    if hits.size == 0:
        return 0, 0, 0
    t = int(hits[0])
    if mp[t] <= -2 * n:
        return 1, 1, 1
    chain = tau_chain(walk, t)
    count = 1
    for j, idx in enumerate(chain.indices[1:], start=2):
        count = j
        if j % 2 == 1 and mp[idx] <= -2 * n:
            return j, 2, j
    phase = 1 if count % 2 == 1 else 2
    return 0, phase, count


def c_dis(walk: HorodistanceWalk, eps: float, n: int, budget: int = 10**8) -> int:
    """Number of commutings between ``min H+ <= -[eps n]`` and ``min H+ <= -n``.

    The stored part of ``walk`` is scanned first; if the count is not yet
    determined the walk is continued from its final state with its own
    stream and policy, without storing, for at most ``budget`` total steps.

    Raises
    ------
    BudgetExceeded
        If the stopping condition does not fire within ``budget`` steps.
    """
    m_eps = int(math.floor(eps * n))
    if m_eps < 1:
        raise ValueError("eps * n must be at least 1")
    res, phase, count = _cdis_scan(walk, m_eps, n)
    if res:
        return res
    if walk.n >= budget:
        raise BudgetExceeded(budget)
    if walk.rng is None:
        raise ValueError("walk has no stream to continue from")
    st = walk.state.copy()
    res, used = _cdis_kernel(walk.rng.generator, _SIDE_CDF, policy_code(walk.policy), st,
                             int(walk.h_plus[-1]), int(walk.h_minus[-1]),
                             int(walk.min_plus()[-1]), int(walk.min_minus()[-1]),
                             m_eps, int(n), int(budget - walk.n), phase, count)
    if res == 0:
        raise BudgetExceeded(budget)
    return int(res)


def c_dis_stream(eps: float, n: int, policy: str, rng: RngStream, budget: int = 10**8) -> int:
    """:func:`c_dis` on a fresh walk generated on the fly."""
    m_eps = int(math.floor(eps * n))
    if m_eps < 1:
        raise ValueError("eps * n must be at least 1")
    res, _ = _cdis_kernel(rng.generator, _SIDE_CDF, policy_code(policy), _state0(), 0, 0, 0, 0,
                          m_eps, int(n), int(budget), 0, 0)
    if res == 0:
        raise BudgetExceeded(budget)
    return int(res)


# ---------------------------------------------------------------------------
# Boundary ledger


@dataclass(frozen=True)
class Original:
    j: int


@dataclass(frozen=True)
class Fresh:
    id: int


@dataclass
class SwallowReport:
    left: list
    right: list
    left_count: int
    right_count: int


class LedgerError(RuntimeError):
    """Invalid operation on a boundary ledger."""


class BoundaryLedger:
    """Explicit labeled boundary of the unexplored region.

    The boundary is ``... O(left_next) | seq | O(right_next) ...`` where
    ``seq`` is a materialized window of labels containing the cursor and the
    rays beyond it are untouched original edges, only counted.  Original
    labels are materialized on demand when the cursor scan needs them.
    """

    def __init__(self, window: int = 2):
        self.seq = [Original(j) for j in range(-window, window + 1)]
        self.cursor = window
        self.left_next = -window - 1
        self.right_next = window + 1
        self._fresh = 0
        self.swallowed_left = 0
        self.swallowed_right = 0
        self._dead = set()
        # boundary length change, +1 per Center and -k per jump
        self.length_change = 0

    def cursor_label(self):
        return self.seq[self.cursor]

    def _new(self):
        self._fresh += 1
        return Fresh(self._fresh)

    def set_cursor(self, label) -> None:
        """Move the cursor to ``label``; it must still be on the boundary."""
        if label in self._dead:
            raise LedgerError(f"{label} has been swallowed")
        try:
            self.cursor = self.seq.index(label)
        except ValueError:
            raise LedgerError(f"{label} is not a materialized boundary edge") from None

    def _take_right(self, k):
        removed = []
        take = min(k, len(self.seq) - self.cursor - 1)
        removed.extend(self.seq[self.cursor + 1: self.cursor + 1 + take])
        del self.seq[self.cursor + 1: self.cursor + 1 + take]
        rest = k - take
        ray = 0
        if rest:
            ray = rest
            self.right_next += rest
        return removed, ray

    def _take_left(self, k):
        removed = []
        take = min(k, self.cursor)
        removed.extend(self.seq[self.cursor - take: self.cursor])
        del self.seq[self.cursor - take: self.cursor]
        self.cursor -= take
        rest = k - take
        ray = 0
        if rest:
            ray = rest
            self.left_next -= rest
        return removed, ray

    def apply(self, f: Form, choice: str = "left") -> SwallowReport:
        """Peel the cursor edge with outcome ``f``.

        ``choice`` selects the next cursor: ``"left"`` or ``"right"`` new edge
        after a Center step, or ``"leftmost"`` for the leftmost explored edge
        (any jump leaves a single new edge, which is taken otherwise).
        """
        peeled = self.seq[self.cursor]
        if peeled in self._dead:
            raise LedgerError(f"{peeled} has been swallowed")
        self._dead.add(peeled)
        left, right = [], []
        lray = rray = 0
        if f.kind == FormKind.CENTER:
            e1, e2 = self._new(), self._new()
            self.seq[self.cursor: self.cursor + 1] = [e1, e2]
            if choice == "right":
                self.cursor += 1
            self.length_change += 1
        elif f.kind == FormKind.LEFT:
            removed, lray = self._take_left(f.k)
            left = removed
            self.seq[self.cursor] = self._new()
            self.length_change -= f.k
        else:
            removed, rray = self._take_right(f.k)
            right = removed
            self.seq[self.cursor] = self._new()
            self.length_change -= f.k
        if isinstance(peeled, Original) and peeled.j != 0:
            (left if peeled.j < 0 else right).append(peeled)
        for lab in left + right:
            self._dead.add(lab)
        lo = [x for x in left if isinstance(x, Original)]
        ro = [x for x in right if isinstance(x, Original)]
        self.swallowed_left += len(lo) + lray
        self.swallowed_right += len(ro) + rray
        if choice == "leftmost":
            self.cursor = self._leftmost_index()
        return SwallowReport(lo, ro, len(lo) + lray, len(ro) + rray)

    def _leftmost_index(self):
        for i, lab in enumerate(self.seq):
            if not isinstance(lab, Original):
                return i
        return self.cursor

    def labels_unique(self) -> bool:
        return len(set(self.seq)) == len(self.seq)


def ledger_apply(ledger: BoundaryLedger, f: Form, policy_choice: str = "left") -> SwallowReport:
    """Functional alias of :meth:`BoundaryLedger.apply`."""
    return ledger.apply(f, policy_choice)


def horodistance_oracle(ledger: BoundaryLedger):
    """``(H+, H-)`` of the cursor edge computed from labels alone.

    ``H+`` is the number of edges strictly between the cursor and the first
    surviving original edge ``O(j)`` to its right, minus the ``j - 1``
    original edges ``O(1) .. O(j-1)`` that the root's path would cross.
    """
    seq, c = ledger.seq, ledger.cursor
    scanned = 0
    j_right = None
    for lab in seq[c + 1:]:
        if isinstance(lab, Original) and lab.j > 0:
            j_right = lab.j
            break
        scanned += 1
    if j_right is None:
        j_right = ledger.right_next
    hp = scanned - (j_right - 1)
    scanned = 0
    j_left = None
    for lab in reversed(seq[:c]):
        if isinstance(lab, Original) and lab.j < 0:
            j_left = lab.j
            break
        scanned += 1
    if j_left is None:
        j_left = ledger.left_next
    hm = scanned - (-j_left - 1)
    return HalfInt(2 * hp), HalfInt(2 * hm)


def replay_choices(walk: HorodistanceWalk):
    """Cursor choices that reproduce ``walk`` on a :class:`BoundaryLedger`."""
    if walk.policy == "leftmost-exposed":
        return ["leftmost"] * walk.n
    eta = walk.eta_plus
    return ["left" if (kd == 0 and e > 0) else "right" if kd == 0 else "left"
            for kd, e in zip(walk.kind.tolist(), eta.tolist())]


def ledger_crosscheck(walk: HorodistanceWalk) -> dict:
    """Replay ``walk`` on a fresh :class:`BoundaryLedger` and count violations.

    Checked at every step: ``eta+ + eta- = 0``; ``eta`` is a half-integer
    exactly on Center steps; the swallowed original right edges equal
    ``-min H+``; the label oracle equals the incremental horodistances;
    labels on the ledger stay unique.
    """
    eta_sum = walk.eta_plus + walk.eta_minus
    odd = (walk.eta_plus % 2) != 0
    out = {"eta_sum": int(np.count_nonzero(eta_sum)),
           "parity": int(np.count_nonzero(odd != (walk.kind == FormKind.CENTER))),
           "swallow": 0, "oracle": 0, "unique": 0}
    ledger = BoundaryLedger()
    min_plus, min_minus = walk.min_plus(), walk.min_minus()
    for i, choice in enumerate(replay_choices(walk)):
        ledger.apply(walk.form(i), choice)
        if 2 * ledger.swallowed_right != -min_plus[i] or 2 * ledger.swallowed_left != -min_minus[i]:
            out["swallow"] += 1
        hp, hm = horodistance_oracle(ledger)
        if hp.doubled != walk.h_plus[i + 1] or hm.doubled != walk.h_minus[i + 1]:
            out["oracle"] += 1
        if not ledger.labels_unique():
            out["unique"] += 1
    return out
