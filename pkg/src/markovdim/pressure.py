"""Gurevich pressure via increasing compact subsystems.

The pressure of a depth-1 potential p over a finite mixing subsystem equals
log of the Perron root of the weighted transition matrix

    A[i, j] = t(i, j) * exp(p(i)),

and the pressure over the full countable system is the monotone limit of
these finite values along any increasing exhaustion.  Three routes coexist:

* ``perron_pressure``: Perron root of the weighted matrix.  Suffix-row
  (staircase) subsystems use an exact characteristic-function bisection
  that costs O(N) per trial value and is immune to spectral-gap collapse;
  general subsystems use power iteration with residual stopping and a
  dense-eigensolver fallback.
* ``orbit_sum_pressure``: (1/n) log of the weighted count of period-n
  orbits through a base cylinder, an independent finite-n oracle.
* ``closed_form_pressure_sv``: the exact formula for the built-in family.

All weight handling shifts the potential by its maximum first, so only
well-scaled exponentials are formed; the shift is added back at the end.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (CompositionError, ConvergenceError, DomainError, MixingError,
                     WorkLimitError)
from .markov import MarkovMapModel, TruncatedSubsystem, is_primitive, truncate
from .potentials import Potential

#: orbit-sum enumeration caps
ORBIT_SUM_MAX_ALPHABET = 12
ORBIT_SUM_MAX_PERIOD = 30

_POWER_MAX_ITER = 200_000
_DENSE_FALLBACK_MAX_N = 2048


# ---------------------------------------------------------------------------
# Result record
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PressureResult:
    """Pressure estimate with its truncation diagnostics.

    ``per_level`` is the monotone sequence of (N, P_N); ``value`` is the
    last entry and is a lower bound for the true pressure whenever
    ``converged`` is False (the scheme approximates from below, so no
    extrapolation is ever reported).
    """

    value: float
    truncation_used: int
    per_level: tuple[tuple[int, float], ...]
    converged: bool
    method: str  # PERRON | ORBIT_SUM | CLOSED_FORM

    def to_dict(self) -> dict:
        return {"value": self.value, "method": self.method,
                "per_level": [[n, p] for n, p in self.per_level],
                "converged": self.converged}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ---------------------------------------------------------------------------
# Perron roots
# ---------------------------------------------------------------------------
def _staircase_log_rho(log_weights: np.ndarray, rel_tol: float) -> float:
    """Log Perron root of A[i,j] = w_i [j >= max(i-1, 1)] by bisection.

    The matrix is upper Hessenberg, so back-substituting all rows but the
    first against a trial rho costs O(N); the first-row residual changes
    sign exactly at the Perron root, and the sequence of partial sums of a
    candidate eigenvector must stay positive above it.  The predicate
    "trial >= Perron root" is therefore monotone and bisection is exact up
    to the requested relative tolerance, independent of the spectral gap.
    """
    shift = float(np.max(log_weights))
    w = np.exp(log_weights - shift).tolist()
    n = len(w)
    # row i >= 2 covers columns i-1..n: that is n-i+2 entries; row 1 covers all
    counts = [n] + [n - i + 2 for i in range(2, n + 1)]
    hi = max(c * wi for c, wi in zip(counts, w)) * (1.0 + 1e-12)
    lo = max(w) * 0.25

    def at_or_above(rho: float) -> bool:
        r = 0.0
        for k in range(n - 1, 0, -1):
            r = w[k] / (rho * (1.0 - r))
            if not (r < 1.0):
                return False
        return rho * (1.0 - r) - w[0] >= 0.0

    while at_or_above(lo):
        lo *= 0.5
        if lo < 1e-300:
            break
    while not at_or_above(hi):  # row-sum bound is exact; guard roundoff only
        hi *= 2.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if at_or_above(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= rel_tol * hi:
            break
    return math.log(0.5 * (lo + hi)) + shift


def _power_log_rho(matrix: np.ndarray, log_weights: np.ndarray, rel_tol: float) -> float:
    """Log Perron root by power iteration with residual stopping.

    Falls back to a dense eigensolver if the iteration cap is reached
    (possible when the spectral gap is tiny); raises ConvergenceError when
    even that is unavailable.
    """
    shift = float(np.max(log_weights))
    w = np.exp(log_weights - shift)
    a = matrix.astype(float) * w[:, None]
    n = a.shape[0]
    x = np.full(n, 1.0 / n)
    lam = 0.0
    for _ in range(_POWER_MAX_ITER):
        y = a @ x
        lam = float(y.sum())            # L1 Rayleigh quotient for x >= 0, |x|_1 = 1
        if lam <= 0.0:
            raise ConvergenceError("power iteration collapsed to zero vector")
        y /= lam
        if float(np.max(np.abs(a @ y - lam * y))) <= rel_tol * lam:
            return math.log(lam) + shift
        x = y
    if n <= _DENSE_FALLBACK_MAX_N:
        rho = float(np.max(np.abs(np.linalg.eigvals(a))))
        return math.log(rho) + shift
    raise ConvergenceError(f"power iteration did not reach tol={rel_tol} in "
                           f"{_POWER_MAX_ITER} iterations (N={n})")


def perron_pressure(sub: TruncatedSubsystem, p: Potential, tol: float) -> float:
    """log of the Perron root of the weighted transition matrix of ``sub``.

    ``tol`` is the relative eigenvalue tolerance.  Deterministic given its
    inputs.  Raises MixingError on non-primitive subsystems and
    CompositionError when the potential depth exceeds the subsystem depth
    (recode to word symbols first).
    """
    if tol <= 0:
        raise DomainError(f"tolerance must be > 0, got {tol}")
    if p.depth > sub.depth:
        raise CompositionError(
            f"potential depth {p.depth} exceeds subsystem depth {sub.depth}; recode first")
    if not is_primitive(sub):
        raise MixingError("subsystem is not primitive")
    logw = p.values_vector(sub.size)
    if sub.is_sv_staircase and sub.size >= 2:
        return _staircase_log_rho(logw, rel_tol=tol)
    if sub.is_full:
        # rank-one matrix w 1^T: Perron root is the plain weight sum
        shift = float(np.max(logw))
        return math.log(float(np.sum(np.exp(logw - shift)))) + shift
    return _power_log_rho(sub.matrix, logw, rel_tol=tol)


# ---------------------------------------------------------------------------
# Periodic-orbit sums
# ---------------------------------------------------------------------------
def orbit_sum_pressure(sub: TruncatedSubsystem, p: Potential, n: int,
                       base_symbol: int) -> float:
    """(1/n) log Z_n, where Z_n sums exp of the n-step potential total over
    all period-n symbolic orbits through ``base_symbol``.

    The sum runs over closed admissible words of length n starting at the
    base symbol, accumulated exactly (up to floating summation) by dynamic
    programming over (step, current symbol); no spectral machinery, so
    this is an independent check on :func:`perron_pressure`.  Returns -inf
    when no period-n orbit passes through the base symbol.
    """
    if n < 1:
        raise DomainError(f"period must be >= 1, got {n}")
    if not (1 <= base_symbol <= sub.size):
        raise DomainError(f"base symbol {base_symbol} outside alphabet 1..{sub.size}")
    if sub.size > ORBIT_SUM_MAX_ALPHABET or n > ORBIT_SUM_MAX_PERIOD:
        raise WorkLimitError(
            f"orbit sums capped at alphabet <= {ORBIT_SUM_MAX_ALPHABET} and "
            f"period <= {ORBIT_SUM_MAX_PERIOD} (got N={sub.size}, n={n})")
    logw = p.values_vector(sub.size)
    shift = float(np.max(logw))
    w = np.exp(logw - shift)
    m = sub.matrix.astype(float)
    b = base_symbol - 1
    f = np.zeros(sub.size)
    f[b] = w[b]
    for _ in range(n - 1):
        f = (f @ m) * w
    z = float(np.dot(f, m[:, b]))
    if z == 0.0:
        return -math.inf
    return (math.log(z) + n * shift) / n


# ---------------------------------------------------------------------------
# Increasing-subsystem scheme
# ---------------------------------------------------------------------------
def _levels(n_max: int) -> list[int]:
    if n_max < 2:
        return []
    out = []
    n = 2
    while n <= n_max:
        out.append(n)
        n *= 2
    if out[-1] != n_max:
        out.append(n_max)
    return out


def gurevich_pressure(model: MarkovMapModel, p: Potential, tol: float,
                      N_max: int) -> PressureResult:
    """Pressure over the countable system by exhaustion with truncations.

    Evaluates P_N on the doubling schedule N = 2, 4, 8, ... up to N_max and
    reports the monotone sequence.  ``converged`` is set when the last two
    levels differ by less than ``tol``; otherwise the final value is a
    certified lower bound (the sequence increases to the true pressure).
    """
    if tol <= 0:
        raise DomainError(f"tolerance must be > 0, got {tol}")
    if N_max < 2:
        raise DomainError(f"N_max must be >= 2, got {N_max}")
    eig_tol = min(tol * 1e-2, 1e-11)
    if model.alphabet_size is not None:
        N_max = min(N_max, model.alphabet_size)
    per_level: list[tuple[int, float]] = []
    for n in _levels(N_max):
        try:
            sub = truncate(model, n)
        except MixingError:
            continue
        per_level.append((n, perron_pressure(sub, p, eig_tol)))
    if not per_level:
        raise MixingError("no primitive truncation level available")
    for (_, a), (_, b) in zip(per_level, per_level[1:]):
        if b < a - 1e-9:  # larger subsystems can only gain pressure
            raise ConvergenceError(f"per-level pressures not monotone: {a} -> {b}")
    converged = len(per_level) >= 2 and abs(per_level[-1][1] - per_level[-2][1]) < tol
    if model.alphabet_size is not None and per_level[-1][0] == model.alphabet_size:
        converged = True  # the final level is the whole system, not an approximation
    return PressureResult(value=per_level[-1][1], truncation_used=per_level[-1][0],
                          per_level=tuple(per_level), converged=converged, method="PERRON")


# ---------------------------------------------------------------------------
# Closed form for the built-in family
# ---------------------------------------------------------------------------
def sv_critical_exponent(lam: float) -> float:
    """Smallest t for which the closed-form pressure formula is valid."""
    if not (0.5 < lam < 1.0):
        raise DomainError(f"lambda must lie in (1/2, 1), got {lam}")
    return -math.log(2.0) / math.log(lam)


def closed_form_pressure_sv(lam: float, t: float) -> float:
    """Exact pressure of -t log|T'| for the SV family:

        t log(1-lambda) - log(1 - lambda^t),   valid for t >= -log 2 / log lambda.

    Below that threshold the formula is not asserted and a DomainError is
    raised; use :func:`gurevich_pressure` there (lower bounds only).
    """
    t_c = sv_critical_exponent(lam)
    if t < t_c - 1e-15:
        raise DomainError(f"closed form requires t >= {t_c:.6f}, got {t}")
    return t * math.log(1.0 - lam) - math.log(1.0 - lam ** t)
