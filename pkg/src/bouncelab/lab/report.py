"""Versioned JSON reports, symbolic targets and the dimension combiner."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import sympy as sp

from .. import __version__

SCHEMA_VERSION = 1

# provenance tags: a closed form stated in the source derivation, or a value
# obtained from an independent oracle (quadrature, ODE, exact law)
PAPER = "paper"
DERIVED = "derived"

CHECKS = ("abs", "rel", "stderr", "upper", "range", "exact", "info")

# named closed forms used by more than one experiment
XI_RATE = sp.pi / sp.sqrt(3)
COMSTABLE_RATE = 3 * sp.sqrt(3) / (2 * sp.pi)
THETA_RATE = 4 * sp.pi / sp.sqrt(3)
COMSLE_RATE = sp.sqrt(3) / (2 * sp.pi)
T1_MEAN = sp.pi / (7 * sp.sqrt(3))
LOGT_PER_R = sp.Integer(28)
ERGODIC_MEAN = sp.Integer(7)
LAMBDA = sp.gamma(sp.Rational(1, 6)) * sp.gamma(sp.Rational(1, 3)) / (
    2 ** sp.Rational(2, 3) * sp.sqrt(sp.pi))


def decimal(expr) -> float:
    """``expr`` evaluated at run time and rounded to 9 significant digits."""
    return float(f"{float(sp.N(sp.sympify(expr), 30)):.9g}")


@dataclass
class Estimate:
    """One report row.

    ``check`` says how ``pass`` is decided: ``abs`` (``|value - target| <
    tol``), ``rel`` (relative to the target), ``stderr`` (``tol`` standard
    errors), ``upper`` (``value < tol``), ``range`` (``tol = [lo, hi]``),
    ``exact`` (symbolic equality) or ``info`` (no verdict).
    """

    name: str
    value: float | None
    stderr: float | None
    target: float | None
    target_symbolic: str | None
    tol: float | list | None
    check: str
    provenance: str | None
    passed: bool | None = None
    criterion: int | None = None
    note: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return {k: _clean(v) for k, v in d.items()}


def _clean(v):
    # JSON has no NaN; infinite or missing values become null
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, list):
        return [_clean(x) for x in v]
    return v


def estimate(name, value, target=None, tol=None, check="abs", *, stderr=None,
             provenance=DERIVED, criterion=None, note=None) -> Estimate:
    """Build a row and decide pass/fail against the symbolic ``target``."""
    if check not in CHECKS:
        raise ValueError(f"unknown check {check!r}")
    expr = None if target is None else sp.sympify(target)
    exact = None if expr is None else float(sp.N(expr, 30))
    value = None if value is None else float(value)
    stderr = None if stderr is None else float(stderr)
    passed = _decide(value, stderr, exact, tol, check)
    return Estimate(name, value, stderr, None if expr is None else decimal(expr),
                    None if expr is None else str(expr), tol, check,
                    None if expr is None else provenance, passed, criterion, note)


def _decide(value, stderr, target, tol, check):
    if check == "info":
        return None
    if value is None or not math.isfinite(value):
        return False
    if check == "upper":
        return value < tol
    if check == "range":
        return tol[0] <= value <= tol[1]
    if check == "exact":
        return value == target
    gap = abs(value - target)
    if check == "abs":
        return gap < tol
    if check == "rel":
        return gap < tol * abs(target)
    if stderr is None or not math.isfinite(stderr):
        return False
    return gap < tol * stderr


def failed(name, message, *, criterion=None, target=None, tol=None, check="abs",
           provenance=DERIVED) -> Estimate:
    """Row for an estimator that could not be computed (for example a budget overrun)."""
    row = estimate(name, None, target, tol, check, provenance=provenance, criterion=criterion)
    row.passed = False
    row.note = message
    return row


@dataclass
class Report:
    """Result of one experiment.

    ``elapsed_s`` and ``timings`` are wall-clock data; everything else is a
    deterministic function of the config.
    """

    experiment: str
    config: dict
    config_hash: str
    seed: int
    estimates: list = field(default_factory=list)
    elapsed_s: float = 0.0
    timings: dict = field(default_factory=dict)
    version: int = SCHEMA_VERSION
    code_version: str = __version__

    @property
    def passed(self) -> bool:
        return all(e.passed is not False for e in self.estimates)

    def row(self, name) -> Estimate:
        for e in self.estimates:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"version": self.version, "code_version": self.code_version,
                "experiment": self.experiment, "config": self.config,
                "config_hash": self.config_hash, "seed": self.seed,
                "estimates": [e.to_dict() for e in self.estimates],
                "elapsed_s": self.elapsed_s, "timings": self.timings}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        cols = ["name", "value", "stderr", "target", "target_symbolic", "tol", "check", "pass",
                "provenance", "criterion", "note"]
        buf = io.StringIO()
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        for e in self.estimates:
            d = e.to_dict()
            if isinstance(d["tol"], list):
                d["tol"] = ";".join(repr(t) for t in d["tol"])
            w.writerow({k: d[k] for k in cols})
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        rows = []
        for r in d["estimates"]:
            r = dict(r)
            r["passed"] = r.pop("pass")
            rows.append(Estimate(**r))
        return cls(d["experiment"], d["config"], d["config_hash"], d["seed"], rows,
                   d["elapsed_s"], d["timings"], d["version"], d["code_version"])


def comparable(report_dict: dict) -> dict:
    """Report content without the wall-clock fields."""
    return {k: v for k, v in report_dict.items() if k not in ("elapsed_s", "timings")}


def dimension_report(rate_xi: float, rate_theta: float, se_xi: float = 0.0,
                     se_theta: float = 0.0) -> dict:
    """Boundary exponent and dimension from the two logarithmic rates.

    The commuting constants are ``(3/2) / rate_xi`` on the stable side and
    ``2 / rate_theta`` on the SLE side; their ratio is the exponent
    ``3 rate_theta / (4 rate_xi)`` and the dimension is its inverse.
    Errors are propagated to first order from independent rate errors.
    Accepts sympy expressions, in which case the result is exact.
    """
    symbolic = isinstance(rate_xi, sp.Basic) or isinstance(rate_theta, sp.Basic)
    if symbolic:
        rate_xi, rate_theta = sp.sympify(rate_xi), sp.sympify(rate_theta)
        if not (rate_xi.is_positive and rate_theta.is_positive):
            raise ValueError("rates must be positive")
        exponent = sp.simplify(3 * rate_theta / (4 * rate_xi))
        return {"exponent": exponent, "dimension": sp.simplify(1 / exponent),
                "exponent_se": sp.Integer(0), "dimension_se": sp.Integer(0)}
    if not (rate_xi > 0 and rate_theta > 0):
        raise ValueError("rates must be positive")
    exponent = 3.0 * rate_theta / (4.0 * rate_xi)
    rel = math.hypot(se_xi / rate_xi, se_theta / rate_theta)
    return {"exponent": exponent, "dimension": 1.0 / exponent,
            "exponent_se": exponent * rel, "dimension_se": rel / exponent}
