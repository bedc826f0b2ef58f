"""Multifractal spectra through the pressure characterization.

For a quotient of Birkhoff averages with numerator phi and positive
denominator psi, the dimension of the level set at an interior level alpha
(restricted to the recurrent part) equals

    V(alpha) = sup{ delta : inf_q  P(q (phi - alpha psi) - delta log|T'|) > 0 },

so the engine nests three solved problems: a Perron root per potential, a
convex minimization over q, and a monotone bisection over delta in [0, 1].
All pressures are truncation values, which approximate the countable-system
pressure from below; the resulting dimensions are monotone nondecreasing in
the truncation level.

For the built-in family everything has a closed form: the pressure g(t) of
-t log|T'|, the level parameterization alpha_t = -g'(t), the spectrum value
g(t)/alpha_t + t, and the full-spectrum discontinuity at the tail average,
where the escaping set forces dimension 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import DegenerateError, DomainError, MixingError, UnboundedError
from .markov import MarkovMapModel, TruncatedSubsystem, build_sv_map, truncate
from .potentials import Potential, builtin_log_derivative, constant_potential
from .pressure import (_levels, _power_log_rho, _staircase_log_rho,
                       closed_form_pressure_sv, sv_critical_exponent)

_GOLD = (math.sqrt(5.0) - 1.0) / 2.0
_Q_LIMIT = 1e6


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SpectrumPoint:
    """One sample (alpha, dimension) of a spectrum.

    ``q_star`` is the minimizer of the pressure in q at the critical delta
    (None for closed-form and escape-value points); ``delta_iterations``
    counts the bisection steps that produced the dimension bracket.
    """

    alpha: float
    dimension: float
    q_star: float | None
    delta_iterations: int
    source: str  # VARIATIONAL | CLOSED_FORM | ESCAPE_VALUE

    def __post_init__(self):
        if not (-1e-12 <= self.dimension <= 1.0 + 1e-12):
            raise DomainError(f"dimension {self.dimension} outside [0, 1]")


@dataclass
class SpectrumCurve:
    """Sorted spectrum samples plus any recorded discontinuities.

    Each discontinuity is a triple (alpha, left_limit, value) with
    |value - left_limit| exceeding ten times the dimension tolerance used
    to compute the curve.
    """

    points: list[SpectrumPoint]
    alpha_min: float
    alpha_max: float
    discontinuities: list[tuple[float, float, float]] = field(default_factory=list)
    hypothesis_unverified: bool = False

    def __post_init__(self):
        alphas = [p.alpha for p in self.points]
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise DomainError("spectrum points must be strictly sorted by alpha")


@dataclass(frozen=True)
class BowenReport:
    """Per-level roots s_N of P_N(-s log|T'|) = 0 and their final value."""

    value: float
    truncation_used: int
    per_level: tuple[tuple[int, float], ...]
    converged: bool

    def to_dict(self) -> dict:
        return {"value": self.value, "method": "BOWEN",
                "per_level": [[n, s] for n, s in self.per_level],
                "converged": self.converged}


# ---------------------------------------------------------------------------
# Closed forms for the built-in family
# ---------------------------------------------------------------------------
def sv_alpha_bounds(lam: float) -> tuple[float, float]:
    """Exact Lyapunov-average bounds (-log(1-lambda), -log(lambda(1-lambda)))."""
    if not (0.5 < lam < 1.0):
        raise DomainError(f"lambda must lie in (1/2, 1), got {lam}")
    return (-math.log(1.0 - lam), -math.log(lam * (1.0 - lam)))


def sv_hyperbolic_dimension(lam: float) -> float:
    """Dimension of the recurrent part: -log 4 / log(lambda(1-lambda))."""
    if not (0.5 < lam < 1.0):
        raise DomainError(f"lambda must lie in (1/2, 1), got {lam}")
    return -math.log(4.0) / math.log(lam * (1.0 - lam))


def sv_alpha_of_t(lam: float, t: float) -> float:
    """Level parameterization alpha_t = -log(1-lambda) - lambda^t log(lambda)/(1-lambda^t)."""
    lt = lam ** t
    return -math.log(1.0 - lam) - lt * math.log(lam) / (1.0 - lt)


def lyapunov_closed_form(lam: float, t: float) -> SpectrumPoint:
    """Exact Lyapunov-spectrum point for the built-in family at parameter t.

    Valid for t strictly above the critical exponent -log2/log(lambda);
    the dimension is g(t)/alpha_t + t with g the closed-form pressure.
    """
    t_c = sv_critical_exponent(lam)
    if t <= t_c:
        raise DomainError(f"need t > {t_c:.6f}, got {t}")
    g = closed_form_pressure_sv(lam, t)
    alpha_t = sv_alpha_of_t(lam, t)
    return SpectrumPoint(alpha=alpha_t, dimension=g / alpha_t + t, q_star=None,
                         delta_iterations=0, source="CLOSED_FORM")


def derivative_identity_check(lam: float, t: float, h: float) -> tuple[float, float]:
    """Central difference of the closed-form pressure vs -alpha_t.

    Returns (finite_difference, alpha_t); the caller asserts their sum is
    O(h^2).  The stencil must stay inside the validity region.
    """
    if h <= 0:
        raise DomainError(f"step must be > 0, got {h}")
    t_c = sv_critical_exponent(lam)
    if t - h <= t_c:
        raise DomainError(f"stencil leaves validity region: t-h = {t - h} <= {t_c:.6f}")
    fd = (closed_form_pressure_sv(lam, t + h) - closed_form_pressure_sv(lam, t - h)) / (2.0 * h)
    return fd, sv_alpha_of_t(lam, t)


# ---------------------------------------------------------------------------
# Cycle-mean machinery for alpha bounds
# ---------------------------------------------------------------------------
def _karp_min_cycle_mean(sub: TruncatedSubsystem, cost: np.ndarray) -> float:
    """Minimum cycle mean of source-node costs over the subsystem digraph.

    Karp's formula on shortest k-edge walk weights from node 1.  The suffix
    encoding vectorizes the relaxation as a prefix minimum; dense matrices
    use a masked minimum (only small alphabets take that path).
    """
    n = sub.size
    inf = math.inf
    table = np.empty((n + 1, n))
    table[0] = inf
    table[0, 0] = 0.0
    if sub.row_start is not None:
        # pred(j) = {i : i <= j+1} in 1-based terms for start_i = max(i-1, 1)
        if not sub.is_sv_staircase:
            return _karp_dense(sub.matrix, cost)
        for k in range(1, n + 1):
            t = table[k - 1] + cost
            acc = np.minimum.accumulate(t)
            prev = np.empty(n)
            prev[: n - 1] = acc[1:]     # column j (0-based) sees rows i <= j+1
            prev[n - 1] = acc[n - 1]
            table[k] = prev
        dn = table[n]
    else:
        return _karp_dense(sub.dense, cost)
    return _karp_finish(table, dn, n)


def _karp_dense(m: np.ndarray, cost: np.ndarray) -> float:
    n = m.shape[0]
    inf = math.inf
    table = np.full((n + 1, n), inf)
    table[0, 0] = 0.0
    mask = m.astype(bool)
    for k in range(1, n + 1):
        t = table[k - 1] + cost
        cand = np.where(mask, t[:, None], inf)
        table[k] = cand.min(axis=0)
    return _karp_finish(table, table[n], n)


def _karp_finish(table: np.ndarray, dn: np.ndarray, n: int) -> float:
    best = math.inf
    for j in range(n):
        if not math.isfinite(dn[j]):
            continue
        worst = -math.inf
        for k in range(n):
            if math.isfinite(table[k, j]):
                worst = max(worst, (dn[j] - table[k, j]) / (n - k))
        if worst > -math.inf:
            best = min(best, worst)
    if not math.isfinite(best):
        raise MixingError("no cycle reachable from the base symbol")
    return best


def _extreme_cycle_ratio(sub: TruncatedSubsystem, phi_v: np.ndarray, psi_v: np.ndarray,
                         maximize: bool) -> float:
    """Extreme of (sum phi / sum psi) over cycles, by parametric bisection:
    the min cycle mean of phi - alpha psi crosses zero at the minimal ratio."""
    ratios = phi_v / psi_v
    lo, hi = float(ratios.min()), float(ratios.max())
    if hi - lo <= 1e-15:
        return lo
    sign = -1.0 if maximize else 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        # min cycle mean of phi - mid*psi (or its negation when maximizing):
        # a negative value certifies a cycle on the far side of mid
        mcm = _karp_min_cycle_mean(sub, sign * (phi_v - mid * psi_v))
        if maximize:
            if mcm < 0:      # some cycle has ratio above mid
                lo = mid
            else:
                hi = mid
        else:
            if mcm > 0:      # every cycle has ratio above mid
                lo = mid
            else:
                hi = mid
        if hi - lo <= 1e-13 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def _is_sv_lyapunov_case(model: MarkovMapModel, phi: Potential, psi: Potential) -> bool:
    if model.family != "SV" or not psi.is_constant():
        return False
    if abs(psi.value((1,)) - 1.0) > 1e-15:
        return False
    return (phi.name == "log|T'|" and phi.model_key == ("SV", model.lam))


def alpha_bounds(model: MarkovMapModel, phi: Potential, psi: Potential,
                 N: int) -> tuple[float, float]:
    """Estimates of the extreme Birkhoff quotients (alpha_m, alpha_M).

    Computed as the min/max of cycle quotients sum(phi)/sum(psi) over the
    N-truncation (attained on simple cycles); these are inner estimates
    that grow with N.  For the built-in family with phi = log|T'| and
    psi = 1 the exact endpoints are returned.
    """
    if psi.positivity_floor is None:
        raise DomainError("denominator potential must carry a positivity floor")
    if N < 2:
        raise DomainError(f"N must be >= 2, got {N}")
    if _is_sv_lyapunov_case(model, phi, psi):
        return sv_alpha_bounds(model.lam)
    if phi is psi:
        return (1.0, 1.0)
    sub = truncate(model, N)
    phi_v = phi.values_vector(N)
    psi_v = psi.values_vector(N)
    lo = _extreme_cycle_ratio(sub, phi_v, psi_v, maximize=False)
    hi = _extreme_cycle_ratio(sub, phi_v, psi_v, maximize=True)
    return (lo, hi)


# ---------------------------------------------------------------------------
# Pressure evaluation reused across a (q, delta) search
# ---------------------------------------------------------------------------
class _PressureEvaluator:
    """Caches the truncation and component value vectors for repeated
    evaluations of q (phi - alpha psi) - delta log|T'| pressures."""

    def __init__(self, model: MarkovMapModel, phi: Potential, psi: Potential, N: int,
                 eig_tol: float = 1e-12):
        self.sub = truncate(model, N)
        self.phi_v = phi.values_vector(N)
        self.psi_v = psi.values_vector(N)
        self.logt_v = builtin_log_derivative(model).values_vector(N)
        self.eig_tol = eig_tol
        self._staircase = self.sub.is_sv_staircase
        self._full = self.sub.is_full
        self._dense = None if (self._staircase or self._full) else self.sub.matrix

    def pressure(self, q: float, alpha: float, delta: float) -> float:
        logw = q * (self.phi_v - alpha * self.psi_v) - delta * self.logt_v
        if self._staircase:
            return _staircase_log_rho(logw, rel_tol=self.eig_tol)
        if self._full:
            shift = float(np.max(logw))
            return math.log(float(np.sum(np.exp(logw - shift)))) + shift
        return _power_log_rho(self._dense, logw, rel_tol=self.eig_tol)


def _minimize_over_q(h, tol: float) -> tuple[float, float]:
    """Bracket a minimum of the convex function h by doubling expansion from
    (-1, 0, 1), then golden-section to width ``tol``.  Raises UnboundedError
    if no bracket forms within |q| <= 1e6."""
    a, b, c = -1.0, 0.0, 1.0
    fa, fb, fc = h(a), h(b), h(c)
    span = 1.0
    while fa < fb:
        a, b, c, fb, fc = a - 2.0 * span, a, b, fa, fb
        span *= 2.0
        if abs(a) > _Q_LIMIT:
            raise UnboundedError("no minimum in q within |q| <= 1e6 (alpha at or beyond edge)")
        fa = h(a)
    span = 1.0
    while fc < fb:
        a, b, c, fa, fb = b, c, c + 2.0 * span, fb, fc
        span *= 2.0
        if abs(c) > _Q_LIMIT:
            raise UnboundedError("no minimum in q within |q| <= 1e6 (alpha at or beyond edge)")
        fc = h(c)
    x1 = c - _GOLD * (c - a)
    x2 = a + _GOLD * (c - a)
    f1, f2 = h(x1), h(x2)
    while c - a > tol:
        if f1 <= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - _GOLD * (c - a)
            f1 = h(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLD * (c - a)
            f2 = h(x2)
    q = 0.5 * (a + c)
    return h(q), q


def inf_pressure_over_q(model: MarkovMapModel, phi: Potential, psi: Potential,
                        alpha: float, delta: float, N: int,
                        tol: float) -> tuple[float, float]:
    """Minimum over q of the truncated pressure of q(phi - alpha psi) - delta log|T'|.

    Returns (inf_value, q_star).  The function of q is convex; the minimum
    is located by doubling expansion plus golden section to q-tolerance
    ``tol``.  An UnboundedError signals that alpha sits at or beyond the
    edge of the truncated spectrum.
    """
    if tol <= 0:
        raise DomainError(f"tolerance must be > 0, got {tol}")
    if not (0.0 <= delta <= 1.0):
        raise DomainError(f"delta must lie in [0, 1], got {delta}")
    if psi.positivity_floor is None:
        raise DomainError("denominator potential must carry a positivity floor")
    ev = _PressureEvaluator(model, phi, psi, N)
    return _minimize_over_q(lambda q: ev.pressure(q, alpha, delta), tol)


def variational_dimension(model: MarkovMapModel, phi: Potential, psi: Potential,
                          alpha: float, N: int, tol: float) -> SpectrumPoint:
    """Level-set dimension V(alpha) at truncation N, to bracket width <= tol.

    Bisects delta in [0, 1] on the sign of the q-infimum of the pressure.
    The expansion bound makes that infimum strictly decreasing in delta, so
    the threshold is well-defined; it is approached from below as N grows.
    """
    if tol <= 0:
        raise DomainError(f"tolerance must be > 0, got {tol}")
    lo_a, hi_a = alpha_bounds(model, phi, psi, N)
    if not (lo_a < alpha < hi_a):
        raise DomainError(f"alpha = {alpha} outside the open interval ({lo_a}, {hi_a})")
    ev = _PressureEvaluator(model, phi, psi, N)
    q_tol = max(min(tol * 1e-1, 1e-5), 1e-8)
    lo, hi = 0.0, 1.0
    value, q_star = _minimize_over_q(lambda q: ev.pressure(q, alpha, 0.0), q_tol)
    iterations = 0
    if value <= 0.0:
        # level set invisible at this truncation: dimension estimate 0
        return SpectrumPoint(alpha=alpha, dimension=0.0, q_star=q_star,
                             delta_iterations=iterations, source="VARIATIONAL")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        value, q_star = _minimize_over_q(lambda q: ev.pressure(q, alpha, mid), q_tol)
        if value > 0.0:
            lo = mid
        else:
            hi = mid
        iterations += 1
    return SpectrumPoint(alpha=alpha, dimension=0.5 * (lo + hi), q_star=q_star,
                         delta_iterations=iterations, source="VARIATIONAL")


# ---------------------------------------------------------------------------
# Bowen roots
# ---------------------------------------------------------------------------
def bowen_dimension(model: MarkovMapModel, N_max: int, tol: float) -> BowenReport:
    """Hyperbolic-dimension estimate: per-level Bowen roots of P_N(-s log|T'|).

    P_N is strictly decreasing in s, positive at s = 0 (else the smallest
    level is degenerate), and nonpositive at s = 1 for branches inside a
    bounded interval, so bisection on [0, 1] is safe.  The roots increase
    with N toward the supremum over compact invariant subsets.
    """
    if tol <= 0:
        raise DomainError(f"tolerance must be > 0, got {tol}")
    if N_max < 2:
        raise DomainError(f"N_max must be >= 2, got {N_max}")
    logt = builtin_log_derivative(model)
    eig_tol = min(tol * 1e-3, 1e-12)
    if model.alphabet_size is not None:
        N_max = min(N_max, model.alphabet_size)
    per_level: list[tuple[int, float]] = []
    for n in _levels(N_max):
        sub = truncate(model, n)
        logt_v = logt.values_vector(n)
        staircase = sub.is_sv_staircase

        def pressure_at(s: float) -> float:
            logw = -s * logt_v
            if staircase:
                return _staircase_log_rho(logw, rel_tol=eig_tol)
            if sub.is_full:
                shift = float(np.max(logw))
                return math.log(float(np.sum(np.exp(logw - shift)))) + shift
            return _power_log_rho(sub.matrix, logw, rel_tol=eig_tol)

        if pressure_at(0.0) <= 0.0:
            if not per_level:
                raise DegenerateError(f"pressure at s=0 is nonpositive at level N={n}")
            break
        lo, hi = 0.0, 1.0
        if pressure_at(1.0) > 0.0:
            per_level.append((n, 1.0))  # root clipped at the ambient dimension
            continue
        while hi - lo > tol * 1e-2:
            mid = 0.5 * (lo + hi)
            if pressure_at(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        per_level.append((n, 0.5 * (lo + hi)))
    converged = len(per_level) >= 2 and abs(per_level[-1][1] - per_level[-2][1]) < tol
    if model.alphabet_size is not None and per_level[-1][0] == model.alphabet_size:
        converged = True
    return BowenReport(value=per_level[-1][1], truncation_used=per_level[-1][0],
                       per_level=tuple(per_level), converged=converged)


# ---------------------------------------------------------------------------
# Full Birkhoff spectrum with the escape value
# ---------------------------------------------------------------------------
def full_birkhoff_spectrum_sv(lam: float, phi: Potential, grid,
                              N: int = 128, tol: float = 1e-3,
                              threads: int = 1) -> SpectrumCurve:
    """Birkhoff spectrum of a depth-1 potential with a declared tail limit,
    for the built-in family with denominator 1.

    Away from the tail average ``a`` the curve is the variational value at
    each grid point; at alpha = a the escaping set (dimension 1, carried by
    orbits drifting to 0) forces the value 1, which no pressure computation
    can see.  The point is emitted with source ESCAPE_VALUE and the jump is
    recorded as a discontinuity triple (a, nearby supremum, 1).
    """
    if phi.depth != 1:
        raise DomainError("full-spectrum scan needs a depth-1 potential")
    if phi.tail_limit is None:
        raise DomainError("potential must declare a tail limit")
    model = build_sv_map(lam)
    psi = constant_potential(1.0)
    a = phi.tail_limit
    lo_a, hi_a = alpha_bounds(model, phi, psi, N)

    def interior(x: float) -> bool:
        return lo_a + 1e-12 < x < hi_a - 1e-12 and abs(x - a) > 1e-12

    targets = sorted({float(x) for x in grid if interior(float(x))})
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            pts = list(ex.map(
                lambda x: variational_dimension(model, phi, psi, x, N, tol), targets))
    else:
        pts = [variational_dimension(model, phi, psi, x, N, tol) for x in targets]
    points = sorted(pts, key=lambda p: p.alpha)

    escape = SpectrumPoint(alpha=a, dimension=1.0, q_star=None,
                           delta_iterations=0, source="ESCAPE_VALUE")
    neighbors = [p.dimension for p in points
                 if abs(p.alpha - a) <= max(1e-9, 0.1 * (hi_a - lo_a))]
    left_limit = max(neighbors) if neighbors else max((p.dimension for p in points), default=0.0)
    points = sorted(points + [escape], key=lambda p: p.alpha)
    disc = []
    if abs(1.0 - left_limit) > 10.0 * tol:
        disc.append((a, left_limit, 1.0))
    return SpectrumCurve(points=points, alpha_min=lo_a, alpha_max=hi_a,
                         discontinuities=disc,
                         hypothesis_unverified=not psi.is_constant())


def lyapunov_spectrum_curve(lam: float, points: int = 200,
                            t_max: float = 40.0) -> SpectrumCurve:
    """Closed-form Lyapunov spectrum sweep plus the escape value at alpha_M.

    Samples t geometrically near the critical exponent (where alpha_t
    approaches alpha_M) and linearly beyond, then appends (alpha_M, 1).
    Sampling in t avoids inverting the level parameterization.
    """
    if points < 2:
        raise DomainError(f"need at least 2 points, got {points}")
    t_c = sv_critical_exponent(lam)
    if t_max <= t_c + 1.0:
        raise DomainError(f"t_max must exceed t_c + 1 = {t_c + 1.0:.4f}")
    n_geo = points // 2
    n_lin = points - n_geo
    offsets = np.geomspace(1e-6, 1.0, n_geo)
    ts = np.concatenate([t_c + offsets, np.linspace(t_c + 1.0, t_max, n_lin + 1)[1:]])
    pts = [lyapunov_closed_form(lam, float(t)) for t in ts]
    alpha_m, alpha_M = sv_alpha_bounds(lam)
    pts.append(SpectrumPoint(alpha=alpha_M, dimension=1.0, q_star=None,
                             delta_iterations=0, source="ESCAPE_VALUE"))
    pts.sort(key=lambda p: p.alpha)
    dedup = [pts[0]]
    for p in pts[1:]:
        if p.alpha > dedup[-1].alpha + 1e-15:
            dedup.append(p)
    left = max(p.dimension for p in dedup if p.source == "CLOSED_FORM")
    return SpectrumCurve(points=dedup, alpha_min=alpha_m, alpha_max=alpha_M,
                         discontinuities=[(alpha_M, left, 1.0)])


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------
def curve_to_csv(curve: SpectrumCurve, N: int | None = None,
                 tol: float | None = None, header_lines: list[str] | None = None) -> str:
    """Render a curve as CSV: alpha,dimension,source,q_star,N,tol rows with
    discontinuities appended as comment-prefixed footer lines."""
    out = []
    for line in header_lines or []:
        out.append(f"# {line}")
    out.append("alpha,dimension,source,q_star,N,tol")
    for p in curve.points:
        q = "" if p.q_star is None else repr(p.q_star)
        out.append(f"{p.alpha!r},{p.dimension!r},{p.source},{q},"
                   f"{'' if N is None else N},{'' if tol is None else repr(tol)}")
    for alpha, left, value in curve.discontinuities:
        out.append(f"# discontinuity,{alpha!r},{left!r},{value!r}")
    if curve.hypothesis_unverified:
        out.append("# hypothesis-unverified: bounded-average hypothesis not checked "
                   "for non-constant denominator")
    return "\n".join(out) + "\n"
