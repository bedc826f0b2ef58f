"""Monte-Carlo cross-checks: orbits, Birkhoff quotients, escape, box counts.

Everything here is an empirical surrogate for infinite-time quantities and
is labeled as such: "escaping" is a finite-horizon branch-index drift test,
and box-count slopes are upward-biased estimates of level-set dimensions
(the finite-horizon membership window strictly contains the true level
set).  Nothing in this module feeds back into the analytic spectrum.

Randomness comes from a counter-based generator (Philox) keyed by an
explicit seed; per-stream derivation uses jumps, so results are bit-for-bit
reproducible and independent of worker count.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import BoundaryError, DomainError, InsufficientSampleError
from .markov import ENDPOINT_TOL, MarkovMapModel
from .potentials import Potential

#: an orbit whose final-quarter branch indices never drop below this is a
#: candidate escaper (see OrbitRecord.classification)
DEFAULT_ESCAPE_THRESHOLD = 5

#: below this the position is no longer resolvable in doubles; an orbit that
#: crosses it sits in branch index >= ~6.9e2/|log lambda|, so it cannot
#: descend back below any realistic escape threshold within the remaining
#: horizon: it is a certified escaper and its remaining tail statistics are
#: filled from the (constant) deep-branch values instead of simulated
DEEP_FLOOR = 1e-300

RECURRENT_WINDOW = "RECURRENT_WINDOW"
ESCAPING = "ESCAPING"
BOUNDARY_ABORT = "BOUNDARY_ABORT"


def orbit_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for (seed, stream); streams are independent."""
    bg = np.random.Philox(key=seed)
    if stream:
        bg = bg.jumped(stream)
    return np.random.Generator(bg)


# ---------------------------------------------------------------------------
# Single-orbit simulation
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class OrbitRecord:
    """One simulated orbit with its itinerary and running Birkhoff sums."""

    start: float
    itinerary: np.ndarray            # branch index per successful step
    points: np.ndarray               # x_0 .. x_k (one longer than itinerary)
    logt_steps: np.ndarray           # log|T'| at each step
    classification: str
    phi_steps: np.ndarray | None = None
    psi_steps: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return len(self.itinerary)

    @property
    def birkhoff_sums(self) -> dict:
        """Running sums S_k of each recorded potential (index k = steps)."""
        out = {"logT": np.concatenate([[0.0], np.cumsum(self.logt_steps)])}
        if self.phi_steps is not None:
            out["phi"] = np.concatenate([[0.0], np.cumsum(self.phi_steps)])
        if self.psi_steps is not None:
            out["psi"] = np.concatenate([[0.0], np.cumsum(self.psi_steps)])
        return out


def _classify(itinerary: np.ndarray, aborted: bool, threshold: int) -> str:
    if aborted:
        return BOUNDARY_ABORT
    n = len(itinerary)
    q = n // 4
    if q < 1:
        return RECURRENT_WINDOW
    first_min = int(itinerary[:q].min())
    last_min = int(itinerary[n - q:].min())
    if last_min > first_min and last_min >= threshold:
        return ESCAPING
    return RECURRENT_WINDOW


def simulate_orbit(model: MarkovMapModel, x0: float, n: int,
                   phi: Potential | None = None, psi: Potential | None = None,
                   escape_threshold: int = DEFAULT_ESCAPE_THRESHOLD) -> OrbitRecord:
    """Apply the map up to ``n`` times from ``x0``.

    An endpoint hit aborts the orbit with classification BOUNDARY_ABORT
    (recorded on the result, not raised).  An orbit that drops below the
    floating-point resolution floor is a certified escaper: the itinerary is
    truncated at the crossing and the classification is ESCAPING outright.
    Depth-1 potentials passed in are evaluated along the itinerary and their
    per-step values recorded.
    """
    if n < 1:
        raise DomainError(f"horizon must be >= 1, got {n}")
    if not (0.0 < x0 <= 1.0):
        raise DomainError(f"start point {x0} outside (0, 1]")
    xs = [x0]
    itinerary: list[int] = []
    aborted = False
    went_deep = False
    x = x0
    for _ in range(n):
        try:
            x, idx = model.apply(x)
        except BoundaryError:
            aborted = True
            break
        itinerary.append(idx)
        xs.append(x)
        if x < DEEP_FLOOR:
            went_deep = True
            break
    it = np.asarray(itinerary, dtype=np.int64)
    logt = np.array([model.log_slope(i) for i in itinerary])
    phi_steps = phi.eval_symbols(it) if (phi is not None and len(it)) else (
        np.empty(0) if phi is not None else None)
    psi_steps = psi.eval_symbols(it) if (psi is not None and len(it)) else (
        np.empty(0) if psi is not None else None)
    if went_deep:
        # escape is certified only while the remaining horizon cannot bring
        # the branch index (which drops by at most 1 per step) back down
        certified = (n - len(itinerary)) < int(itinerary[-1]) - escape_threshold
        cls = ESCAPING if certified else BOUNDARY_ABORT
    else:
        cls = _classify(it, aborted, escape_threshold)
    return OrbitRecord(start=x0, itinerary=it, points=np.asarray(xs),
                       logt_steps=logt, classification=cls,
                       phi_steps=phi_steps, psi_steps=psi_steps)


def birkhoff_quotient(rec: OrbitRecord, phi: Potential, psi: Potential,
                      window: int) -> float:
    """S_w(phi) / S_w(psi) over the final ``window`` steps of the orbit."""
    if psi.positivity_floor is None:
        raise DomainError("denominator potential must carry a positivity floor")
    if window < 1 or window > rec.steps:
        raise DomainError(f"window {window} exceeds recorded steps {rec.steps}")
    tail = rec.itinerary[rec.steps - window:]
    num = float(np.sum(phi.eval_symbols(tail)))
    den = float(np.sum(psi.eval_symbols(tail)))
    return num / den


# ---------------------------------------------------------------------------
# Vectorized batches
# ---------------------------------------------------------------------------
def _sv_power_table(lam: float) -> np.ndarray:
    """lam**k for k = 0..K, each computed by the scalar pow that BranchSpec
    uses, so batch and scalar orbits see bitwise-identical branch endpoints.
    K covers every index reachable above the deep floor."""
    k_max = int(math.log(DEEP_FLOOR) / math.log(lam)) + 8
    return np.array([lam ** k for k in range(k_max + 2)])


def _sv_step(model: MarkovMapModel, x: np.ndarray, active: np.ndarray,
             table: np.ndarray):
    """One vectorized map step for the built-in family.

    Returns (new x, branch indices, newly-aborted mask); inactive lanes
    keep their values.  All endpoint comparisons go through ``table`` so
    that decisions match the scalar path exactly (vectorized pow differs
    from libm pow in the last ulp).
    """
    lam = model.lam
    loglam = math.log(lam)
    kmax = len(table) - 1
    ax = np.where(active, x, 0.5)  # placeholder keeps log() quiet
    u = np.log(ax) / loglam
    k = np.clip(np.rint(u), 0, kmax).astype(np.int64)
    edge = table[k]
    hit = np.abs(ax - edge) <= ENDPOINT_TOL * edge
    n = np.clip(np.floor(u).astype(np.int64) + 1, 1, kmax - 2)
    # correct the log-based guess against the exact endpoint table (the
    # guess is off by at most one except inside the excluded endpoint zone)
    for _ in range(2):
        n = np.where((n > 1) & (ax > table[n - 1]), n - 1, n)
        n = np.where(ax <= table[n], n + 1, n)
    aborted = active & (hit | (ax <= 0.0) | (ax > 1.0))
    stepping = active & ~aborted
    # same arithmetic as the scalar path (slope multiply), so batch and
    # scalar orbits agree bitwise
    slope = np.where(n == 1, 1.0 / (1.0 - lam), 1.0 / (lam * (1.0 - lam)))
    y = (ax - table[n]) * slope
    new_x = np.where(stepping, y, x)
    idx = np.where(stepping, n, 0)
    return new_x, idx, aborted


def _finite_step(model: MarkovMapModel, x: np.ndarray, active: np.ndarray):
    """Vectorized step for finite custom models via edge bisection."""
    branches = model._explicit_branches
    lefts = np.array([b.left for b in branches])
    rights = np.array([b.right for b in branches])
    slopes = np.array([b.slope for b in branches])
    order = np.argsort(lefts)
    lefts_s, rights_s = lefts[order], rights[order]
    pos = np.searchsorted(lefts_s, x, side="right") - 1
    pos = np.clip(pos, 0, len(branches) - 1)
    inside = (x > lefts_s[pos]) & (x < rights_s[pos])
    scale = np.maximum(np.abs(x), 1e-300)
    near_edge = (np.abs(x - lefts_s[pos]) <= ENDPOINT_TOL * scale) | \
                (np.abs(x - rights_s[pos]) <= ENDPOINT_TOL * scale)
    aborted = active & (~inside | near_edge)
    stepping = active & ~aborted
    branch_ids = order[pos] + 1
    img_lo = np.array([model.image_interval(i)[0] for i in range(1, len(branches) + 1)])
    y = img_lo[branch_ids - 1] + (x - lefts[branch_ids - 1]) * slopes[branch_ids - 1]
    new_x = np.where(stepping, y, x)
    idx = np.where(stepping, branch_ids, 0)
    return new_x, idx, aborted


@dataclass
class BatchStats:
    """Aggregates of a batch of simulated orbits (one entry per orbit)."""

    starts: np.ndarray
    steps: np.ndarray
    aborted: np.ndarray
    first_quarter_min: np.ndarray
    last_quarter_min: np.ndarray
    logt_sum: np.ndarray
    logt_tail_sum: np.ndarray
    tail_steps: np.ndarray
    tail_has_branch1: np.ndarray
    phi_sum: np.ndarray | None = None
    psi_sum: np.ndarray | None = None
    itineraries: np.ndarray | None = None

    def classification(self, threshold: int = DEFAULT_ESCAPE_THRESHOLD) -> np.ndarray:
        esc = ((self.last_quarter_min > self.first_quarter_min)
               & (self.last_quarter_min >= threshold) & ~self.aborted)
        out = np.where(self.aborted, BOUNDARY_ABORT,
                       np.where(esc, ESCAPING, RECURRENT_WINDOW))
        return out


def simulate_batch(model: MarkovMapModel, x0: np.ndarray, n: int,
                   phi: Potential | None = None, psi: Potential | None = None,
                   collect_itineraries: bool = False) -> BatchStats:
    """Vectorized orbit batch; semantics per-orbit match simulate_orbit.

    Lanes that cross the deep floor keep stepping analytically: every deep
    step sits in some branch with index above a certified lower bound (the
    index can drop by at most 1 per step), its log-slope equals the tail
    value exactly, and depth-1 potentials contribute their tail limits.
    Deep steps are recorded in itineraries as -1.
    """
    if n < 1:
        raise DomainError(f"horizon must be >= 1, got {n}")
    if model.family != "SV" and model.tail is not None:
        return _scalar_batch(model, x0, n, phi, psi, collect_itineraries)
    x = np.asarray(x0, dtype=float).copy()
    m = len(x)
    active = np.ones(m, dtype=bool)
    deep = np.zeros(m, dtype=bool)
    deep_bound = np.zeros(m, dtype=np.int64)   # certified branch-index lower bound
    steps = np.zeros(m, dtype=np.int64)
    aborted = np.zeros(m, dtype=bool)
    q = n // 4
    fq_min = np.full(m, np.iinfo(np.int64).max)
    lq_min = np.full(m, np.iinfo(np.int64).max)
    logt_sum = np.zeros(m)
    logt_tail = np.zeros(m)
    tail_steps = np.zeros(m, dtype=np.int64)
    tail_b1 = np.zeros(m, dtype=bool)
    phi_sum = np.zeros(m) if phi is not None else None
    psi_sum = np.zeros(m) if psi is not None else None
    its = np.zeros((m, n), dtype=np.int32) if collect_itineraries else None
    is_sv = model.family == "SV"
    if is_sv:
        powers = _sv_power_table(model.lam)
        step_fn = lambda mdl, xx, aa: _sv_step(mdl, xx, aa, powers)
    else:
        step_fn = _finite_step
    starts = x.copy()
    deep_supported = is_sv
    logt_deep = -math.log(model.lam * (1.0 - model.lam)) if is_sv else 0.0
    phi_deep = phi.tail_limit if phi is not None else None
    psi_deep = psi.tail_limit if psi is not None else None

    if not is_sv:
        table = np.array([0.0] + [b.log_slope for b in model._explicit_branches])

    def logt_of(idx: np.ndarray) -> np.ndarray:
        if is_sv:
            v1 = -math.log(1.0 - model.lam)
            return np.where(idx == 1, v1, logt_deep)
        return table[idx]

    for k in range(n):
        stepping_lanes = active & ~deep
        x, idx, newly_aborted = step_fn(model, x, stepping_lanes)
        aborted |= newly_aborted
        moved = stepping_lanes & ~newly_aborted
        # lanes in the deep state advance analytically
        idx = np.where(deep & active, deep_bound, idx)
        counted = moved | (deep & active)
        steps[counted] += 1
        if its is not None:
            its[moved, k] = idx[moved]
            its[deep & active, k] = -1
        safe_idx = np.maximum(idx, 1)
        eval_idx = np.where(deep, 1, safe_idx)  # deep values are overwritten below
        lt = np.where(deep, logt_deep, logt_of(eval_idx))
        logt_sum[counted] += lt[counted]
        if phi_sum is not None:
            vals = np.where(deep, phi_deep if phi_deep is not None else np.nan,
                            phi.eval_symbols(eval_idx))
            phi_sum[counted] += vals[counted]
        if psi_sum is not None:
            vals = np.where(deep, psi_deep if psi_deep is not None else np.nan,
                            psi.eval_symbols(eval_idx))
            psi_sum[counted] += vals[counted]
        if q >= 1 and k < q:
            fq_min[counted] = np.minimum(fq_min[counted], idx[counted])
        if q >= 1 and k >= n - q:
            lq_min[counted] = np.minimum(lq_min[counted], idx[counted])
            logt_tail[counted] += lt[counted]
            tail_steps[counted] += 1
            tail_b1[counted] |= idx[counted] == 1
        # deep bookkeeping: crossing lanes freeze with a certified bound
        if deep_supported:
            crossing = moved & (x < DEEP_FLOOR) & ~deep
            if crossing.any():
                deep_bound[crossing] = idx[crossing] - 1
                deep[crossing] = True
            deep_bound[deep & active] -= 1
            # once the bound decays toward small indices nothing is certified
            # any more; such lanes abort (needs horizons of several thousand
            # steps past the crossing)
            exhausted = deep & active & (deep_bound < 2)
            if exhausted.any():
                aborted |= exhausted
                deep &= ~exhausted
        else:
            aborted |= moved & (x < DEEP_FLOOR)
            moved &= ~(x < DEEP_FLOOR)
        active = moved | (deep & active)
    full = steps == n
    fq = np.where(full, fq_min, 0)
    lq = np.where(full, lq_min, 0)
    return BatchStats(starts=starts, steps=steps, aborted=aborted,
                      first_quarter_min=fq, last_quarter_min=lq,
                      logt_sum=logt_sum, logt_tail_sum=logt_tail,
                      tail_steps=tail_steps, tail_has_branch1=tail_b1,
                      phi_sum=phi_sum, psi_sum=psi_sum, itineraries=its)


def _scalar_batch(model, x0, n, phi, psi, collect_itineraries) -> BatchStats:
    """Per-orbit fallback for models the vectorized stepper cannot handle."""
    m = len(x0)
    q = n // 4
    stats = BatchStats(starts=np.asarray(x0, dtype=float),
                       steps=np.zeros(m, dtype=np.int64),
                       aborted=np.zeros(m, dtype=bool),
                       first_quarter_min=np.zeros(m, dtype=np.int64),
                       last_quarter_min=np.zeros(m, dtype=np.int64),
                       logt_sum=np.zeros(m), logt_tail_sum=np.zeros(m),
                       tail_steps=np.zeros(m, dtype=np.int64),
                       tail_has_branch1=np.zeros(m, dtype=bool),
                       phi_sum=np.zeros(m) if phi is not None else None,
                       psi_sum=np.zeros(m) if psi is not None else None,
                       itineraries=np.zeros((m, n), dtype=np.int32)
                       if collect_itineraries else None)
    for i, x in enumerate(x0):
        rec = simulate_orbit(model, float(x), n, phi=phi, psi=psi)
        k = rec.steps
        stats.steps[i] = k
        stats.aborted[i] = rec.classification == BOUNDARY_ABORT
        stats.logt_sum[i] = rec.logt_steps.sum()
        if stats.itineraries is not None:
            stats.itineraries[i, :k] = rec.itinerary
        if phi is not None:
            stats.phi_sum[i] = rec.phi_steps.sum()
        if psi is not None:
            stats.psi_sum[i] = rec.psi_steps.sum()
        if k == n and q >= 1:
            stats.first_quarter_min[i] = rec.itinerary[:q].min()
            stats.last_quarter_min[i] = rec.itinerary[n - q:].min()
            tail = rec.logt_steps[n - q:]
            stats.logt_tail_sum[i] = tail.sum()
            stats.tail_steps[i] = q
            stats.tail_has_branch1[i] = bool((rec.itinerary[n - q:] == 1).any())
    return stats


# ---------------------------------------------------------------------------
# Escape statistics
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class EscapeStats:
    samples: int
    horizon: int
    seed: int
    fraction_escaping: float
    mean_tail_logt_escapers: float | None
    counts: dict

    def to_dict(self) -> dict:
        return {"samples": self.samples, "horizon": self.horizon, "seed": self.seed,
                "fraction_escaping": self.fraction_escaping,
                "mean_tail_logt_escapers": self.mean_tail_logt_escapers,
                "counts": self.counts}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _uniform_starts(rng: np.random.Generator, samples: int) -> np.ndarray:
    return 1.0 - rng.random(samples)  # uniform on (0, 1]


def _run_batches(model, starts, n, threads, **kw) -> BatchStats:
    if threads <= 1 or len(starts) < 2 * threads:
        return simulate_batch(model, starts, n, **kw)
    chunks = np.array_split(starts, threads)
    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(lambda c: simulate_batch(model, c, n, **kw), chunks))
    # fixed chunk order makes the concatenation independent of scheduling
    def cat(attr):
        vals = [getattr(p, attr) for p in parts]
        return None if vals[0] is None else np.concatenate(vals)
    return BatchStats(**{f: cat(f) for f in (
        "starts", "steps", "aborted", "first_quarter_min", "last_quarter_min",
        "logt_sum", "logt_tail_sum", "tail_steps", "tail_has_branch1",
        "phi_sum", "psi_sum", "itineraries")})


def escape_statistics(model: MarkovMapModel, samples: int, n: int, seed: int,
                      escape_threshold: int = DEFAULT_ESCAPE_THRESHOLD,
                      threads: int = 1) -> EscapeStats:
    """Classify uniformly sampled orbits and report the escaping fraction
    plus the mean final-window Lyapunov average among escapers."""
    if samples < 1000:
        raise DomainError(f"need >= 1000 samples, got {samples}")
    starts = _uniform_starts(orbit_rng(seed), samples)
    stats = _run_batches(model, starts, n, threads)
    cls = stats.classification(escape_threshold)
    esc = cls == ESCAPING
    counts = {RECURRENT_WINDOW: int((cls == RECURRENT_WINDOW).sum()),
              ESCAPING: int(esc.sum()),
              BOUNDARY_ABORT: int((cls == BOUNDARY_ABORT).sum())}
    mean_tail = None
    if esc.any():
        avg = stats.logt_tail_sum[esc] / np.maximum(stats.tail_steps[esc], 1)
        mean_tail = float(avg.mean())
    return EscapeStats(samples=samples, horizon=n, seed=seed,
                       fraction_escaping=float(esc.mean()),
                       mean_tail_logt_escapers=mean_tail, counts=counts)


def orbit_summaries_csv(model: MarkovMapModel, samples: int, n: int, seed: int,
                        escape_threshold: int = DEFAULT_ESCAPE_THRESHOLD,
                        threads: int = 1, header_lines: list[str] | None = None) -> str:
    """Per-orbit CSV: start,classification,steps,avg_logT_tail,quotient."""
    starts = _uniform_starts(orbit_rng(seed), samples)
    stats = _run_batches(model, starts, n, threads)
    cls = stats.classification(escape_threshold)
    out = [f"# {line}" for line in header_lines or []]
    out.append("start,classification,steps,avg_logT_tail,quotient")
    tail_avg = stats.logt_tail_sum / np.maximum(stats.tail_steps, 1)
    quot = stats.logt_sum / np.maximum(stats.steps, 1)
    for i in range(samples):
        out.append(f"{stats.starts[i]!r},{cls[i]},{stats.steps[i]},"
                   f"{tail_avg[i]!r},{quot[i]!r}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Box counting
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BoxCountResult:
    slope: float
    band: tuple[float, float]
    retained: int
    samples: int
    horizon: int
    seed: int
    level_sizes: tuple[float, ...]
    counts: tuple[int, ...]
    retention_rate: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "band": list(self.band), "retained": self.retained,
                "samples": self.samples, "horizon": self.horizon, "seed": self.seed,
                "level_sizes": list(self.level_sizes), "counts": list(self.counts),
                "retention_rate": self.retention_rate}


def box_count_level_set(model: MarkovMapModel, phi: Potential, psi: Potential,
                        alpha: float, eps_window: float, samples: int, n: int,
                        grid_levels, seed: int, threads: int = 1,
                        bootstrap: int = 200) -> BoxCountResult:
    """Crude (upward-biased) dimension estimate of a level set.

    Uniform start points whose horizon-n Birkhoff quotient lies within
    ``eps_window`` of ``alpha`` are retained; occupied boxes are counted at
    each level size and the log-log regression slope reported, with a
    bootstrap percentile band.  The retained set strictly contains the true
    level set's sample, so the slope is an upper-level surrogate only.
    """
    if samples < 1000:
        raise DomainError(f"need >= 1000 samples, got {samples}")
    levels = [float(e) for e in grid_levels]
    if len(levels) < 2:
        raise DomainError("need at least two box sizes")
    if any(b >= a for a, b in zip(levels, levels[1:])):
        raise DomainError("grid levels must be strictly decreasing box sizes")
    if psi.positivity_floor is None:
        raise DomainError("denominator potential must carry a positivity floor")
    starts = _uniform_starts(orbit_rng(seed), samples)
    stats = _run_batches(model, starts, n, threads, phi=phi, psi=psi)
    ok = (~stats.aborted) & (stats.steps == n)
    quot = np.where(ok, stats.phi_sum / np.where(ok, stats.psi_sum, 1.0), np.inf)
    keep = ok & (np.abs(quot - alpha) < eps_window)
    retained = stats.starts[keep]
    if len(retained) < 50:
        raise InsufficientSampleError(
            f"only {len(retained)} points retained (need >= 50); widen eps_window "
            f"or raise samples")

    def slope_of(points: np.ndarray) -> float:
        cnts = [len(np.unique(np.floor(points / e).astype(np.int64))) for e in levels]
        x = np.log(1.0 / np.asarray(levels))
        y = np.log(np.asarray(cnts, dtype=float))
        return float(np.polyfit(x, y, 1)[0])

    counts = tuple(int(len(np.unique(np.floor(retained / e).astype(np.int64))))
                   for e in levels)
    slope = slope_of(retained)
    boot_rng = orbit_rng(seed, stream=1)
    bs = []
    for _ in range(bootstrap):
        pick = boot_rng.integers(0, len(retained), len(retained))
        bs.append(slope_of(retained[pick]))
    lo, hi = np.percentile(bs, [2.5, 97.5])
    return BoxCountResult(slope=slope, band=(float(lo), float(hi)),
                          retained=int(len(retained)), samples=samples, horizon=n,
                          seed=seed, level_sizes=tuple(levels), counts=counts,
                          retention_rate=float(keep.mean()))
