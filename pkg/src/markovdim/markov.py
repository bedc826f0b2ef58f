"""Countable-Markov expanding interval maps and their finite truncations.

A model is a countable collection of disjoint open branch intervals inside
(0,1], an affine expanding map on each branch, and a 0-1 transition
structure recording which branches each branch image covers.  The built-in
``SV(lambda)`` family, for lambda in (1/2, 1), partitions (0,1] into
X_n = (lambda^n, lambda^(n-1)) and maps

    x in X_1  ->  (x - lambda) / (1 - lambda),
    x in X_n  ->  (x - lambda^n) / (lambda (1 - lambda)),   n >= 2,

so branch 1 covers everything and branch n covers exactly the branches
j >= n - 1.  Custom models are finitely many explicit branches plus an
optional geometric tail rule.

Finite truncations to the sub-alphabet {1..N} are the compact mixing
subsystems on which all pressure computations run; they are represented
either by a compact "row span" encoding (each row covers a suffix of the
columns, which is exact for the SV family and scales to N ~ 1e4) or by a
dense boolean matrix for small explicit models.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import BoundaryError, ConfigError, DomainError, MixingError

#: orbits abort when |x - branch endpoint| <= ENDPOINT_TOL * endpoint; the
#: tolerance is relative because branch lengths shrink geometrically toward 0
#: and an absolute cutoff would swallow every deep branch whole
ENDPOINT_TOL = 1e-12

#: tolerance for the Markov image-consistency check on custom models
IMAGE_TOL = 1e-9


# ---------------------------------------------------------------------------
# Branches
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BranchSpec:
    """One affine expanding branch.

    Attributes
    ----------
    index : int
        1-based symbol of the branch.
    left, right : float
        Open interval (left, right), a subinterval of (0, 1].
    slope : float
        Magnitude of the derivative on the branch; must exceed 1.
    log_slope : float
        Natural log of ``slope`` (stored so downstream weights are exact).
    """

    index: int
    left: float
    right: float
    slope: float
    log_slope: float

    def __post_init__(self):
        if self.index < 1:
            raise DomainError(f"branch index must be >= 1, got {self.index}")
        if not (self.right > self.left):
            raise DomainError(f"branch {self.index}: right must exceed left")
        if self.left < 0.0 or self.right > 1.0:
            raise DomainError(f"branch {self.index}: interval must lie in (0, 1]")
        if not (self.slope > 1.0):
            raise DomainError(f"branch {self.index}: slope must exceed 1 (uniform expansion)")
        # log_slope must agree with log(slope) to ulp scale
        if not math.isclose(self.log_slope, math.log(self.slope), rel_tol=1e-12, abs_tol=1e-300):
            raise DomainError(f"branch {self.index}: log_slope inconsistent with slope")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.left, self.right)

    @property
    def length(self) -> float:
        return self.right - self.left


def make_branch(index: int, left: float, right: float, slope: float) -> BranchSpec:
    """Build a branch, deriving ``log_slope`` from ``slope``."""
    return BranchSpec(index, left, right, slope, math.log(slope))


# ---------------------------------------------------------------------------
# Tail rule for custom models
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TailRule:
    """Geometric continuation of a custom model beyond its explicit branches.

    Branches with index n >= from_index have intervals
    (anchor * ratio^(n - from_index + 1), anchor * ratio^(n - from_index)]
    where ``anchor`` is the left endpoint of branch ``from_index - 1``, and
    constant slope ``slope``.
    """

    from_index: int
    ratio: float
    slope: float
    anchor: float

    def __post_init__(self):
        if not (0.0 < self.ratio < 1.0):
            raise ConfigError("tail ratio must lie in (0, 1)")
        if not (self.slope > 1.0):
            raise ConfigError("tail slope must exceed 1")
        if self.from_index < 2:
            raise ConfigError("tail from_index must be >= 2")

    def branch(self, n: int) -> BranchSpec:
        k = n - self.from_index
        return make_branch(n, self.anchor * self.ratio ** (k + 1),
                           self.anchor * self.ratio ** k, self.slope)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------
class MarkovMapModel:
    """An expanding Markov interval map with countably many affine branches.

    Immutable after construction (the branch cache only memoizes values that
    are pure functions of the constructor arguments), so instances are safe
    to share across parallel workers.

    Use :func:`build_sv_map` or :func:`build_custom_map` instead of calling
    this constructor directly.
    """

    def __init__(self, *, family: str, branch_fn: Callable[[int], BranchSpec],
                 row_start_fn: Callable[[int], int] | None,
                 explicit_matrix: np.ndarray | None,
                 alphabet_size: int | None,
                 expansion_floor: float,
                 lam: float | None = None,
                 tail: TailRule | None = None):
        self.family = family                    # "SV" or "CUSTOM"
        self.lam = lam
        self.alphabet_size = alphabet_size      # None => countably infinite
        self.expansion_floor = expansion_floor  # xi > 1, uniform lower slope bound
        self.tail = tail
        self._branch_fn = branch_fn
        self._row_start_fn = row_start_fn       # row i covers columns >= start(i), staircase models
        self._explicit_matrix = explicit_matrix
        self._branch_cache: dict[int, BranchSpec] = {}
        if expansion_floor <= 1.0:
            raise DomainError("expansion floor must exceed 1")

    # -- alphabet ---------------------------------------------------------
    @property
    def is_infinite(self) -> bool:
        return self.alphabet_size is None

    def branch(self, i: int) -> BranchSpec:
        """Materialize branch ``i`` (lazily, from the generator rule)."""
        if i < 1:
            raise DomainError(f"branch index must be >= 1, got {i}")
        if self.alphabet_size is not None and i > self.alphabet_size:
            raise DomainError(f"branch {i} beyond alphabet of size {self.alphabet_size}")
        b = self._branch_cache.get(i)
        if b is None:
            b = self._branch_fn(i)
            self._branch_cache[i] = b
        return b

    def log_slope(self, i: int) -> float:
        return self.branch(i).log_slope

    # -- transition structure ---------------------------------------------
    def transition(self, i: int, j: int) -> bool:
        """Whether the image of branch ``i`` covers branch ``j``."""
        if self._row_start_fn is not None:
            return j >= self._row_start_fn(i) and j >= 1
        m = self._explicit_matrix
        if i < 1 or j < 1 or i > m.shape[0] or j > m.shape[1]:
            raise DomainError(f"transition index ({i},{j}) out of range")
        return bool(m[i - 1, j - 1])

    def row_start(self, i: int) -> int | None:
        """First column of row ``i`` when rows are suffix-shaped, else None."""
        return None if self._row_start_fn is None else self._row_start_fn(i)

    def image_interval(self, i: int) -> tuple[float, float]:
        """Image of branch ``i``: the union of its target branch intervals."""
        if self._row_start_fn is not None:
            # suffix rows accumulate at 0: image = (0, right endpoint of first target]
            return (0.0, self.branch(self._row_start_fn(i)).right)
        targets = [j + 1 for j in range(self.alphabet_size) if self._explicit_matrix[i - 1, j]]
        lo = min(self.branch(j).left for j in targets)
        hi = max(self.branch(j).right for j in targets)
        return (lo, hi)

    # -- dynamics ----------------------------------------------------------
    def locate(self, x: float) -> int:
        """Branch index containing ``x``; BoundaryError at endpoints."""
        if not (0.0 < x <= 1.0):
            raise BoundaryError(f"point {x!r} outside (0, 1]")
        if self.family == "SV":
            lam = self.lam
            u = math.log(x) / math.log(lam)
            k = int(round(u))
            if k >= 0 and abs(x - lam ** k) <= ENDPOINT_TOL * lam ** k:
                raise BoundaryError(f"point {x!r} within relative {ENDPOINT_TOL} of "
                                    f"endpoint lambda^{k}")
            n = int(math.floor(u)) + 1
            # float-guard: correct off-by-one from the log
            while n > 1 and x > lam ** (n - 1):
                n -= 1
            while x <= lam ** n:
                n += 1
            return n
        return self._locate_custom(x)

    def _locate_custom(self, x: float) -> int:
        def near(x, edge):
            return abs(x - edge) <= ENDPOINT_TOL * max(abs(edge), abs(x))

        for b in self._explicit_branches:
            if near(x, b.left) or near(x, b.right):
                raise BoundaryError(f"point {x!r} within relative {ENDPOINT_TOL} of a "
                                    f"branch endpoint")
            if b.left < x < b.right:
                return b.index
        if self.tail is not None and x < self.tail.anchor:
            t = self.tail
            u = math.log(x / t.anchor) / math.log(t.ratio)
            n = t.from_index + int(math.floor(u))
            while x <= t.branch(n).left:
                n += 1
            while n > t.from_index and x > t.branch(n).right:
                n -= 1
            b = t.branch(n)
            if near(x, b.left) or near(x, b.right):
                raise BoundaryError(f"point {x!r} within relative {ENDPOINT_TOL} of a "
                                    f"tail endpoint")
            return n
        raise BoundaryError(f"point {x!r} not interior to any branch")

    def apply(self, x: float) -> tuple[float, int]:
        """One step of the map: returns (image, branch index)."""
        n = self.locate(x)
        b = self.branch(n)
        lo, _hi = self.image_interval(n)
        y = lo + (x - b.left) * b.slope
        return y, n

    # -- custom-model helpers -----------------------------------------------
    @property
    def _explicit_branches(self) -> list[BranchSpec]:
        n_explicit = self.alphabet_size if self.alphabet_size is not None else (self.tail.from_index - 1)
        return [self.branch(i) for i in range(1, n_explicit + 1)]

    def __repr__(self) -> str:
        if self.family == "SV":
            return f"MarkovMapModel(SV, lambda={self.lam})"
        size = "inf" if self.alphabet_size is None else self.alphabet_size
        return f"MarkovMapModel(CUSTOM, branches={size})"


def build_sv_map(lam: float) -> MarkovMapModel:
    """Built-in dissipative family on (0,1] with parameter lambda in (1/2, 1).

    Branch n has interval (lambda^n, lambda^(n-1)); the slope is
    1/(1-lambda) on branch 1 and 1/(lambda(1-lambda)) on branches n >= 2.
    Branch 1 maps onto (0,1]; branch n >= 2 maps onto (0, lambda^(n-2)],
    so the transition structure is t(1,j) = 1 for all j and
    t(n,j) = 1 iff j >= n-1.
    """
    if not (0.5 < lam < 1.0):
        raise DomainError(f"lambda must lie in (1/2, 1), got {lam}")
    slope_1 = 1.0 / (1.0 - lam)
    slope_n = 1.0 / (lam * (1.0 - lam))

    def branch_fn(n: int) -> BranchSpec:
        s = slope_1 if n == 1 else slope_n
        return make_branch(n, lam ** n, lam ** (n - 1), s)

    def row_start_fn(i: int) -> int:
        return 1 if i <= 2 else i - 1

    return MarkovMapModel(family="SV", branch_fn=branch_fn, row_start_fn=row_start_fn,
                          explicit_matrix=None, alphabet_size=None,
                          expansion_floor=min(slope_1, slope_n), lam=lam)


def build_custom_map(branches: Sequence[BranchSpec],
                     transitions: np.ndarray | str,
                     tail: dict | None = None) -> MarkovMapModel:
    """Assemble a custom model from explicit branches.

    ``transitions`` is either an explicit boolean matrix over the explicit
    branches or a rule name: "full" (every branch maps onto the union of
    all branches) or "staircase" (row 1 full, row n covers columns >= n-1).
    A tail dict {"from_index": n0, "ratio": r, "slope": s?} appends the
    geometric continuation; rule-based transitions then extend to it.

    The Markov image-consistency check runs on all explicit branches: the
    image interval implied by slope and branch length must coincide (within
    ``IMAGE_TOL``) with the union of the transition targets, and that union
    must be a contiguous interval.
    """
    violations = validate_custom_branches(branches, transitions, tail)
    if violations:
        raise ConfigError("invalid custom model: " + "; ".join(violations))
    return _assemble_custom(branches, transitions, tail)


def _assemble_custom(branches, transitions, tail_cfg) -> MarkovMapModel:
    branches = sorted(branches, key=lambda b: b.index)
    by_index = {b.index: b for b in branches}
    n_explicit = len(branches)

    tail = None
    if tail_cfg is not None:
        n0 = int(tail_cfg["from_index"])
        anchor = by_index[n0 - 1].left
        slope = float(tail_cfg.get("slope", 1.0 / tail_cfg["ratio"]))
        tail = TailRule(n0, float(tail_cfg["ratio"]), slope, anchor)

    def branch_fn(i: int) -> BranchSpec:
        if i in by_index:
            return by_index[i]
        return tail.branch(i)

    floor = min(b.slope for b in branches)
    if tail is not None:
        floor = min(floor, tail.slope)

    if isinstance(transitions, str):
        if transitions == "full":
            row_start = lambda i: 1
        elif transitions == "staircase":
            row_start = lambda i: 1 if i <= 2 else i - 1
        else:
            raise ConfigError(f"unknown transition rule {transitions!r}")
        return MarkovMapModel(family="CUSTOM", branch_fn=branch_fn, row_start_fn=row_start,
                              explicit_matrix=None,
                              alphabet_size=None if tail is not None else n_explicit,
                              expansion_floor=floor, tail=tail)

    if tail is not None:
        raise ConfigError("a tail rule requires rule-based transitions ('full' or 'staircase')")
    matrix = np.asarray(transitions, dtype=bool)
    return MarkovMapModel(family="CUSTOM", branch_fn=branch_fn, row_start_fn=None,
                          explicit_matrix=matrix, alphabet_size=n_explicit,
                          expansion_floor=floor, tail=tail)


def validate_custom_branches(branches: Sequence[BranchSpec],
                             transitions: np.ndarray | str,
                             tail_cfg: dict | None = None) -> list[str]:
    """Run all consistency checks; return human-readable violations (empty = OK)."""
    out: list[str] = []
    branches = sorted(branches, key=lambda b: b.index)
    indices = [b.index for b in branches]
    if indices != list(range(1, len(branches) + 1)):
        out.append(f"branch indices must be 1..{len(branches)} without gaps, got {indices}")
        return out

    # pairwise disjoint interiors
    by_pos = sorted(branches, key=lambda b: b.left)
    for a, b in zip(by_pos, by_pos[1:]):
        if b.left < a.right - IMAGE_TOL:
            out.append(f"branches {a.index} and {b.index} have overlapping interiors")

    explicit = isinstance(transitions, np.ndarray) or (
        not isinstance(transitions, str) and transitions is not None)
    if explicit:
        m = np.asarray(transitions, dtype=bool)
        n = len(branches)
        if m.shape != (n, n):
            out.append(f"transition matrix shape {m.shape} != ({n},{n})")
            return out
        if not m.any(axis=1).all():
            out.append("transition matrix has an all-zero row")
        if not m.any(axis=0).all():
            out.append("transition matrix has an all-zero column")
        if out:
            return out
        # Markov consistency: image of each branch == union of its targets
        for b in branches:
            targets = [branches[j] for j in range(n) if m[b.index - 1, j]]
            targets.sort(key=lambda t: t.left)
            for u, v in zip(targets, targets[1:]):
                if abs(v.left - u.right) > IMAGE_TOL:
                    out.append(f"branch {b.index}: targets do not form a contiguous interval")
                    break
            lo, hi = targets[0].left, targets[-1].right
            implied = b.length * b.slope
            if abs((hi - lo) - implied) > IMAGE_TOL:
                out.append(f"branch {b.index}: image length {implied:.12g} != target union "
                           f"length {hi - lo:.12g}")
    return out


def load_map_config(source) -> MarkovMapModel:
    """Read the JSON map-config schema.

    Schema::

        {"sv_lambda": 0.9}                                  # built-in family
        {"branches": [{"index": 1, "left": .., "right": .., "slope": ..}, ...],
         "tail": {"from_index": n0, "ratio": r, "slope": s},  # optional
         "transitions": "full" | "staircase" | [[...], ...]}
    """
    path = None
    if isinstance(source, (str,)):
        path = source
        try:
            with open(source) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read map config: {exc}", path=source)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                              path=source)
    else:
        cfg = source
    if "sv_lambda" in cfg:
        return build_sv_map(float(cfg["sv_lambda"]))
    try:
        branches = [make_branch(int(b["index"]), float(b["left"]), float(b["right"]),
                                float(b["slope"]))
                    for b in cfg["branches"]]
        transitions = cfg["transitions"]
    except KeyError as exc:
        raise ConfigError(f"missing required key {exc}", path=path, field=str(exc))
    if not isinstance(transitions, str):
        transitions = np.asarray(transitions, dtype=bool)
    return build_custom_map(branches, transitions, cfg.get("tail"))


def apply_map(model: MarkovMapModel, x: float) -> tuple[float, int]:
    """One application of the map: (image, branch index).

    Raises
    ------
    BoundaryError
        If ``x`` is outside (0,1] or within ``ENDPOINT_TOL`` of a branch
        endpoint (endpoints are excluded from the domain).
    """
    return model.apply(x)


# ---------------------------------------------------------------------------
# Finite truncations
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class TruncatedSubsystem:
    """Compact mixing subsystem on the sub-alphabet {1..size}.

    Either ``row_start`` (1-based first column per row; each row covers a
    suffix of the columns) or ``dense`` (boolean matrix) is set.  The
    suffix encoding is exact for the built-in family and avoids O(N^2)
    storage at large truncation levels.
    """

    size: int
    depth: int = 1
    row_start: np.ndarray | None = None
    dense: np.ndarray | None = None

    def __post_init__(self):
        if self.size < 1:
            raise DomainError("subsystem size must be >= 1")
        if (self.row_start is None) == (self.dense is None):
            raise DomainError("exactly one of row_start/dense must be given")

    @property
    def matrix(self) -> np.ndarray:
        """Materialized boolean transition matrix (small N only)."""
        if self.dense is not None:
            return self.dense
        if self.size > 4096:
            raise DomainError("refusing to densify a matrix with N > 4096")
        m = np.zeros((self.size, self.size), dtype=bool)
        for i in range(self.size):
            m[i, self.row_start[i] - 1:] = True
        return m

    @property
    def is_sv_staircase(self) -> bool:
        """Rows shaped like the built-in family: row 1 full, row i covers j >= i-1."""
        if self.row_start is None:
            return False
        expect = np.maximum(np.arange(1, self.size + 1) - 1, 1)
        return bool(np.array_equal(self.row_start, expect))

    @property
    def is_full(self) -> bool:
        if self.row_start is not None:
            return bool((self.row_start == 1).all())
        return bool(self.dense.all())

    def to_csr(self) -> csr_matrix:
        if self.dense is not None:
            return csr_matrix(self.dense)
        indptr = np.zeros(self.size + 1, dtype=np.int64)
        counts = self.size - (self.row_start - 1)
        indptr[1:] = np.cumsum(counts)
        indices = np.concatenate([np.arange(s - 1, self.size) for s in self.row_start])
        return csr_matrix((np.ones(len(indices), dtype=np.int8), indices, indptr),
                          shape=(self.size, self.size))


def truncate(model: MarkovMapModel, N: int) -> TruncatedSubsystem:
    """Restrict the model to symbols {1..N} with the induced transitions.

    The induced matrix of the N-truncation is always the top-left block of
    the (N+1)-truncation.  Non-primitive truncations are rejected because
    they are useless for pressure.
    """
    if N < 2:
        raise DomainError(f"truncation level must be >= 2, got {N}")
    if model.alphabet_size is not None and N > model.alphabet_size:
        raise DomainError(f"truncation level {N} exceeds alphabet size {model.alphabet_size}")
    if model._row_start_fn is not None:
        starts = np.array([model._row_start_fn(i) for i in range(1, N + 1)], dtype=np.int64)
        if (starts > N).any():
            raise MixingError(f"truncation at N={N} leaves a row without targets")
        sub = TruncatedSubsystem(size=N, row_start=starts)
    else:
        m = model._explicit_matrix[:N, :N]
        sub = TruncatedSubsystem(size=N, dense=np.ascontiguousarray(m))
    if not is_primitive(sub):
        raise MixingError(f"truncation at N={N} is not primitive")
    return sub


# ---------------------------------------------------------------------------
# Primitivity
# ---------------------------------------------------------------------------
def is_primitive(sub: TruncatedSubsystem) -> bool:
    """True iff some boolean matrix power A^m (m <= N^2) is strictly positive.

    Equivalent graph criterion used here: the digraph is strongly connected
    and the gcd of its cycle lengths is 1.  Suffix-row subsystems whose
    first row is full and whose every row reaches some smaller column are
    primitive outright (descent to symbol 1 plus a full row there).
    """
    if sub.row_start is not None:
        starts = sub.row_start
        if starts[0] == 1 and all(starts[i] <= i for i in range(1, sub.size)):
            return True  # row 1 full + descent i -> i-1 available from every row
        m = sub.matrix
    else:
        m = sub.dense
    n = m.shape[0]
    if n == 1:
        return bool(m[0, 0])
    ncomp, _ = connected_components(csr_matrix(m), directed=True, connection="strong")
    if ncomp != 1:
        return False
    return _graph_period(m) == 1


def _graph_period(m: np.ndarray) -> int:
    """Gcd of cycle lengths of a strongly connected digraph (BFS level trick)."""
    n = m.shape[0]
    level = np.full(n, -1, dtype=np.int64)
    level[0] = 0
    queue = [0]
    g = 0
    while queue:
        nxt = []
        for u in queue:
            for v in np.flatnonzero(m[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
                else:
                    g = math.gcd(g, level[u] + 1 - level[v])
        queue = nxt
    return abs(g) if g else 0
