"""Pressure engine: Perron roots, orbit sums, exhaustion, closed forms."""
import math

import numpy as np
import pytest

import markovdim as md
from markovdim.errors import DomainError, MixingError, WorkLimitError

LOG2 = 0.6931471805599453
LOG_019 = -1.6607312068216509          # log(0.1 + 0.09)
P_09_T7 = -15.46743902409920           # 7 log(0.1) - log(1 - 0.9^7), high precision
P_09_TC = -14.455130665682992          # value at t_c, where lambda^t = 1/2
TC_09 = 6.578813478960584              # -log 2 / log 0.9
BOWEN2_09 = 0.2943478952496173         # root of 0.1^s + 0.09^s = 1


def neg_t_logt(model, t):
    logt = md.builtin_log_derivative(model)
    return md.combine(-t, logt, 0.0, md.constant_potential(1.0), 0.0, logt)


def table_potential(values):
    return md.TablePotential({(i + 1,): v for i, v in enumerate(values)})


def dense_log_rho(mat: np.ndarray, logw: np.ndarray) -> float:
    """Independent oracle: dense eigensolver on the weighted matrix."""
    a = mat.astype(float) * np.exp(logw)[:, None]
    return math.log(np.max(np.abs(np.linalg.eigvals(a))))


def seeded_primitive(rng, n):
    while True:
        mat = rng.random((n, n)) < 0.55
        sub = md.TruncatedSubsystem(size=n, dense=mat)
        if mat.any(axis=0).all() and mat.any(axis=1).all() and md.is_primitive(sub):
            return sub


class TestPerron:
    def test_full_2_shift_zero(self):
        sub = md.TruncatedSubsystem(size=2, dense=np.ones((2, 2), dtype=bool))
        assert md.perron_pressure(sub, md.constant_potential(0.0), 1e-12) == \
            pytest.approx(LOG2, abs=1e-10)

    def test_sv_two_branch_closed_form(self):
        m = md.build_sv_map(0.9)
        sub = md.truncate(m, 2)
        for s in (0.3, 0.7, 1.0, 2.0):
            got = md.perron_pressure(sub, neg_t_logt(m, s), 1e-12)
            assert got == pytest.approx(math.log(0.1 ** s + 0.09 ** s), abs=1e-9)
        assert md.perron_pressure(sub, neg_t_logt(m, 1.0), 1e-12) == \
            pytest.approx(LOG_019, abs=1e-9)

    def test_two_branch_bowen_root(self):
        # scalar bisection on the closed form 0.1^s + 0.09^s = 1
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if 0.1 ** mid + 0.09 ** mid > 1.0:
                lo = mid
            else:
                hi = mid
        assert 0.5 * (lo + hi) == pytest.approx(BOWEN2_09, abs=1e-9)
        m = md.build_sv_map(0.9)
        sub = md.truncate(m, 2)
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if md.perron_pressure(sub, neg_t_logt(m, mid), 1e-13) > 0:
                lo = mid
            else:
                hi = mid
        assert 0.5 * (lo + hi) == pytest.approx(BOWEN2_09, abs=1e-8)

    def test_against_dense_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(15):
            n = int(rng.integers(2, 9))
            sub = seeded_primitive(rng, n)
            logw = rng.normal(0.0, 1.0, n)
            got = md.perron_pressure(sub, table_potential(logw), 1e-11)
            assert got == pytest.approx(dense_log_rho(sub.dense, logw), abs=1e-8)

    def test_staircase_vs_dense(self):
        m = md.build_sv_map(0.8)
        for n in (4, 16, 64):
            sub = md.truncate(m, n)
            p = neg_t_logt(m, 1.3)
            fast = md.perron_pressure(sub, p, 1e-13)
            dense_sub = md.TruncatedSubsystem(size=n, dense=sub.matrix)
            slow = md.perron_pressure(dense_sub, p, 1e-11)
            assert fast == pytest.approx(slow, abs=1e-8)
            assert fast == pytest.approx(dense_log_rho(sub.matrix, p.values_vector(n)),
                                         abs=1e-9)

    def test_nonprimitive_rejected(self):
        mat = np.array([[False, True], [True, False]])
        sub = md.TruncatedSubsystem(size=2, dense=mat)
        with pytest.raises(MixingError):
            md.perron_pressure(sub, md.constant_potential(0.0), 1e-10)

    def test_tolerance_validated(self):
        sub = md.TruncatedSubsystem(size=2, dense=np.ones((2, 2), dtype=bool))
        with pytest.raises(DomainError):
            md.perron_pressure(sub, md.constant_potential(0.0), 0.0)

    def test_monotone_in_potential(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n = int(rng.integers(2, 7))
            sub = seeded_primitive(rng, n)
            lo = rng.normal(0.0, 1.0, n)
            hi = lo + rng.random(n)
            assert md.perron_pressure(sub, table_potential(lo), 1e-11) <= \
                md.perron_pressure(sub, table_potential(hi), 1e-11) + 1e-9

    def test_shift_invariance(self):
        m = md.build_sv_map(0.9)
        sub = md.truncate(m, 32)
        p = neg_t_logt(m, 7.0)
        shifted = md.TablePotential({(1,): p.value(1) + 5.0}, default=p.value(2) + 5.0)
        assert md.perron_pressure(sub, shifted, 1e-12) == \
            pytest.approx(md.perron_pressure(sub, p, 1e-12) + 5.0, abs=1e-9)


def brute_orbit_sum(mat, logw, n, base):
    """Independent oracle: literal DFS enumeration of period-n words."""
    size = mat.shape[0]
    total = 0.0

    def walk(sym, depth, acc):
        nonlocal total
        if depth == n:
            if mat[sym, base]:
                total += math.exp(acc)
            return
        for nxt in range(size):
            if mat[sym, nxt]:
                walk(nxt, depth + 1, acc + logw[nxt])

    walk(base, 1, logw[base])
    return -math.inf if total == 0.0 else math.log(total) / n


class TestOrbitSums:
    def test_full_2_shift_period_4(self):
        sub = md.TruncatedSubsystem(size=2, dense=np.ones((2, 2), dtype=bool))
        got = md.orbit_sum_pressure(sub, md.constant_potential(0.0), 4, 1)
        assert got == pytest.approx(math.log(8.0) / 4.0, abs=1e-12)

    def test_against_dfs_oracle(self):
        rng = np.random.default_rng(99)
        for _ in range(10):
            n_sym = int(rng.integers(2, 5))
            sub = seeded_primitive(rng, n_sym)
            logw = rng.uniform(-1.0, 1.0, n_sym)
            period = int(rng.integers(2, 9))
            base = int(rng.integers(1, n_sym + 1))
            got = md.orbit_sum_pressure(sub, table_potential(logw), period, base)
            want = brute_orbit_sum(sub.dense, logw, period, base - 1)
            if math.isinf(want):
                assert math.isinf(got)
            else:
                assert got == pytest.approx(want, abs=1e-10)

    def test_approaches_perron(self):
        rng = np.random.default_rng(5)
        sub = seeded_primitive(rng, 5)
        p = table_potential(rng.uniform(-0.5, 0.5, 5))
        perron = md.perron_pressure(sub, p, 1e-11)
        assert abs(md.orbit_sum_pressure(sub, p, 20, 1) - perron) < 0.2

    def test_empty_sum_marker(self):
        mat = np.array([[False, True], [True, False]])
        sub = md.TruncatedSubsystem(size=2, dense=mat)
        got = md.orbit_sum_pressure(sub, md.constant_potential(0.0), 3, 1)
        assert got == -math.inf

    def test_work_limits(self):
        big = md.TruncatedSubsystem(size=13, dense=np.ones((13, 13), dtype=bool))
        with pytest.raises(WorkLimitError):
            md.orbit_sum_pressure(big, md.constant_potential(0.0), 5, 1)
        small = md.TruncatedSubsystem(size=2, dense=np.ones((2, 2), dtype=bool))
        with pytest.raises(WorkLimitError):
            md.orbit_sum_pressure(small, md.constant_potential(0.0), 31, 1)

    def test_base_symbol_validated(self):
        sub = md.TruncatedSubsystem(size=2, dense=np.ones((2, 2), dtype=bool))
        with pytest.raises(DomainError):
            md.orbit_sum_pressure(sub, md.constant_potential(0.0), 4, 3)


class TestGurevich:
    def test_sv_matches_closed_form(self):
        m = md.build_sv_map(0.9)
        res = md.gurevich_pressure(m, neg_t_logt(m, 7.0), 1e-8, 1024)
        assert res.converged
        assert res.value == pytest.approx(P_09_T7, abs=1e-9)
        assert res.value == pytest.approx(md.closed_form_pressure_sv(0.9, 7.0), abs=1e-9)

    def test_per_level_monotone(self):
        m = md.build_sv_map(0.75)
        res = md.gurevich_pressure(m, neg_t_logt(m, 4.0), 1e-10, 256)
        vals = [p for _, p in res.per_level]
        assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))

    def test_zero_potential_bounded_not_converged(self):
        # the level sequence increases toward log 4 (loop growth is
        # Catalan-like) but the 1/N^2 approach never meets a 1e-8 tolerance
        m = md.build_sv_map(0.9)
        res = md.gurevich_pressure(m, md.constant_potential(0.0), 1e-8, 1024)
        vals = [p for _, p in res.per_level]
        assert not res.converged
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
        assert vals[-1] < math.log(4.0)
        assert math.log(4.0) - vals[-1] < 1e-3
        # increments shrink: growth is saturating, not logarithmic in N
        assert vals[-1] - vals[-2] < (vals[3] - vals[2]) / 4

    def test_full_shift_custom_immediate(self):
        branches = [md.make_branch(1, 0.0, 0.5, 2.0), md.make_branch(2, 0.5, 1.0, 2.0)]
        cm = md.build_custom_map(branches, np.ones((2, 2), dtype=bool))
        res = md.gurevich_pressure(cm, md.constant_potential(0.0), 1e-8, 64)
        assert res.converged
        assert res.per_level == ((2, pytest.approx(LOG2, abs=1e-10)),)

    def test_validation(self):
        m = md.build_sv_map(0.9)
        with pytest.raises(DomainError):
            md.gurevich_pressure(m, md.constant_potential(0.0), -1.0, 64)
        with pytest.raises(DomainError):
            md.gurevich_pressure(m, md.constant_potential(0.0), 1e-8, 1)

    def test_json_shape(self):
        m = md.build_sv_map(0.9)
        res = md.gurevich_pressure(m, neg_t_logt(m, 8.0), 1e-8, 64)
        d = res.to_dict()
        assert set(d) == {"value", "method", "per_level", "converged"}
        assert d["method"] == "PERRON"


class TestClosedForm:
    def test_frozen_values(self):
        assert md.closed_form_pressure_sv(0.9, 7.0) == pytest.approx(P_09_T7, abs=1e-12)
        tc = md.sv_critical_exponent(0.9)
        assert tc == pytest.approx(TC_09, rel=1e-14)
        assert md.closed_form_pressure_sv(0.9, tc) == pytest.approx(P_09_TC, abs=1e-12)
        # at t_c the formula reduces to t_c log(1-lambda) + log 2
        assert md.closed_form_pressure_sv(0.9, tc) == \
            pytest.approx(tc * math.log(0.1) + LOG2, abs=1e-12)

    def test_below_threshold_rejected(self):
        with pytest.raises(DomainError):
            md.closed_form_pressure_sv(0.9, 3.0)

    def test_lambda_validated(self):
        with pytest.raises(DomainError):
            md.closed_form_pressure_sv(0.4, 7.0)

    @pytest.mark.parametrize("lam,t", [(0.6, 3.0), (0.75, 5.5), (0.9, 12.0)])
    def test_formula(self, lam, t):
        assert md.closed_form_pressure_sv(lam, t) == \
            pytest.approx(t * math.log(1 - lam) - math.log(1 - lam ** t), rel=1e-14)


class TestConvexityAndMonotonicity:
    def test_pressure_convex_in_q(self):
        m = md.build_sv_map(0.9)
        sub = md.truncate(m, 64)
        logt = md.builtin_log_derivative(m)
        one = md.constant_potential(1.0)
        alpha = 2.35
        rng = np.random.default_rng(11)

        def h(q):
            return md.perron_pressure(sub, md.combine(q, logt, alpha, one, 0.4, logt),
                                      1e-12)

        for _ in range(20):
            q1, q2 = sorted(rng.uniform(-6.0, 6.0, 2))
            mid = 0.5 * (q1 + q2)
            assert h(mid) <= 0.5 * (h(q1) + h(q2)) + 1e-9
