"""Model construction, branch lookup, truncation, and primitivity."""
import json
import math

import numpy as np
import pytest

import markovdim as md
from markovdim.errors import BoundaryError, ConfigError, DomainError, MixingError

# frozen by direct arithmetic on the branch formulas
LOG_SLOPE_1_09 = 2.302585092994046      # -log(0.1)
LOG_SLOPE_N_09 = 2.4079456086518722     # -log(0.09)


class TestSvMap:
    def test_branch_1(self):
        m = md.build_sv_map(0.9)
        b = m.branch(1)
        assert b.interval == pytest.approx((0.9, 1.0), rel=1e-14)
        assert b.log_slope == pytest.approx(LOG_SLOPE_1_09, rel=1e-13)

    def test_branch_3(self):
        m = md.build_sv_map(0.9)
        b = m.branch(3)
        assert b.interval == pytest.approx((0.729, 0.81), rel=1e-12)
        assert b.log_slope == pytest.approx(LOG_SLOPE_N_09, rel=1e-13)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 0.3, 1.2])
    def test_lambda_domain(self, lam):
        with pytest.raises(DomainError):
            md.build_sv_map(lam)

    def test_transitions(self):
        m = md.build_sv_map(0.8)
        assert m.transition(2, 1) and not m.transition(3, 1)
        assert all(m.transition(1, j) for j in range(1, 30))
        for n in range(2, 8):
            for j in range(1, 12):
                assert m.transition(n, j) == (j >= n - 1)

    def test_image_intervals(self):
        # branch n >= 2 maps onto (0, lambda^(n-2)]
        m = md.build_sv_map(0.9)
        assert m.image_interval(1) == pytest.approx((0.0, 1.0))
        assert m.image_interval(4) == pytest.approx((0.0, 0.9 ** 2), rel=1e-12)

    def test_expansion_floor(self):
        m = md.build_sv_map(0.9)
        assert m.expansion_floor > 1.0
        # every branch slope is at least min(1/(1-lam), 1/(lam(1-lam)))
        for i in range(1, 20):
            assert m.branch(i).slope >= m.expansion_floor - 1e-12


class TestApplyMap:
    def test_branch1_point(self):
        m = md.build_sv_map(0.9)
        y, idx = md.apply_map(m, 0.95)
        assert idx == 1
        assert y == pytest.approx(0.5, abs=1e-12)

    def test_endpoint_rejected(self):
        m = md.build_sv_map(0.9)
        with pytest.raises(BoundaryError):
            md.apply_map(m, 0.9)
        with pytest.raises(BoundaryError):
            md.apply_map(m, 1.0)

    def test_branch2_point(self):
        m = md.build_sv_map(0.9)
        y, idx = md.apply_map(m, 0.85)
        assert idx == 2
        assert y == pytest.approx((0.85 - 0.81) / 0.09, rel=1e-12)
        assert 0.0 < y <= 1.0

    def test_outside_domain(self):
        m = md.build_sv_map(0.9)
        for x in (0.0, -0.5, 1.5):
            with pytest.raises(BoundaryError):
                md.apply_map(m, x)

    def test_relative_endpoint_tolerance(self):
        m = md.build_sv_map(0.9)
        edge = 0.9 ** 40
        with pytest.raises(BoundaryError):
            md.apply_map(m, edge * (1.0 + 2e-13))
        y, idx = md.apply_map(m, edge * (1.0 + 1e-9))
        assert idx == 40

    def test_coding_shift(self):
        # itinerary of T(x) is the shifted itinerary of x
        m = md.build_sv_map(0.75)
        rng = np.random.default_rng(5)
        for x0 in 1.0 - rng.random(10):
            rec = md.simulate_orbit(m, float(x0), 30)
            if rec.steps < 30:
                continue
            rec2 = md.simulate_orbit(m, float(rec.points[1]), 29)
            assert (rec.itinerary[1:] == rec2.itinerary).all()


class TestTruncation:
    def test_full_2_shift(self):
        sub = md.truncate(md.build_sv_map(0.7), 2)
        assert sub.matrix.all()

    def test_staircase_rows(self):
        sub = md.truncate(md.build_sv_map(0.7), 5)
        mat = sub.matrix
        assert mat[0].all()
        for n in range(2, 6):
            expect = np.array([j >= n - 1 for j in range(1, 6)])
            assert (mat[n - 1] == expect).all()

    def test_nesting(self):
        m = md.build_sv_map(0.9)
        for n in (2, 3, 7):
            small = md.truncate(m, n).matrix
            big = md.truncate(m, n + 1).matrix
            assert (big[:n, :n] == small).all()

    def test_level_precondition(self):
        with pytest.raises(DomainError):
            md.truncate(md.build_sv_map(0.9), 1)

    def test_beyond_alphabet(self):
        branches = [md.make_branch(1, 0.0, 0.5, 2.0), md.make_branch(2, 0.5, 1.0, 2.0)]
        cm = md.build_custom_map(branches, np.ones((2, 2), dtype=bool))
        with pytest.raises(DomainError):
            md.truncate(cm, 3)


def _primitive_by_powers(mat: np.ndarray) -> bool:
    # literal definition: some power m <= N^2 strictly positive
    n = mat.shape[0]
    b = mat.copy()
    for _ in range(n * n):
        if b.all():
            return True
        b = (b.astype(np.int64) @ mat.astype(np.int64)) > 0
    return b.all()


class TestPrimitivity:
    def test_full_shift(self):
        sub = md.TruncatedSubsystem(size=2, dense=np.ones((2, 2), dtype=bool))
        assert md.is_primitive(sub)

    def test_pure_cycle(self):
        mat = np.array([[False, True], [True, False]])
        assert not md.is_primitive(md.TruncatedSubsystem(size=2, dense=mat))

    @pytest.mark.parametrize("n", [2, 3, 5, 16, 64])
    def test_sv_truncations(self, n):
        assert md.is_primitive(md.truncate(md.build_sv_map(0.8), n))

    def test_against_power_oracle(self):
        rng = np.random.default_rng(1234)
        checked = 0
        while checked < 40:
            n = int(rng.integers(2, 7))
            mat = rng.random((n, n)) < 0.4
            if not (mat.any(axis=0).all() and mat.any(axis=1).all()):
                continue
            sub = md.TruncatedSubsystem(size=n, dense=mat)
            assert md.is_primitive(sub) == _primitive_by_powers(mat)
            checked += 1


class TestCustomModels:
    def test_two_branch_doubling(self):
        branches = [md.make_branch(1, 0.0, 0.5, 2.0), md.make_branch(2, 0.5, 1.0, 2.0)]
        cm = md.build_custom_map(branches, np.ones((2, 2), dtype=bool))
        y, idx = cm.apply(0.3)
        assert (y, idx) == (pytest.approx(0.6), 1)
        y, idx = cm.apply(0.75)
        assert (y, idx) == (pytest.approx(0.5), 2)

    def test_overlapping_interiors_rejected(self):
        branches = [md.make_branch(1, 0.0, 0.6, 2.0), md.make_branch(2, 0.5, 1.0, 2.5)]
        out = md.validate_custom_branches(branches, np.ones((2, 2), dtype=bool))
        assert any("overlap" in v for v in out)
        assert any("1" in v and "2" in v for v in out)

    def test_image_mismatch_rejected(self):
        # branch 1 image has length 1.5, no contiguous target union matches
        branches = [md.make_branch(1, 0.0, 0.5, 3.0), md.make_branch(2, 0.5, 1.0, 2.0)]
        out = md.validate_custom_branches(branches, np.ones((2, 2), dtype=bool))
        assert any("image length" in v for v in out)

    def test_markov_consistency_tolerance(self):
        # sub-ulp slope error passes the 1e-9 image check
        eps = 1e-12
        branches = [md.make_branch(1, 0.0, 0.5, 2.0 + eps), md.make_branch(2, 0.5, 1.0, 2.0)]
        assert md.validate_custom_branches(branches, np.ones((2, 2), dtype=bool)) == []

    def test_json_roundtrip(self, tmp_path):
        cfg = {"branches": [{"index": 1, "left": 0.0, "right": 0.5, "slope": 2.0},
                            {"index": 2, "left": 0.5, "right": 1.0, "slope": 2.0}],
               "transitions": [[True, True], [True, True]]}
        p = tmp_path / "map.json"
        p.write_text(json.dumps(cfg))
        cm = md.load_map_config(str(p))
        assert cm.alphabet_size == 2
        assert cm.apply(0.25) == (pytest.approx(0.5), 1)

    def test_sv_config(self, tmp_path):
        p = tmp_path / "sv.json"
        p.write_text(json.dumps({"sv_lambda": 0.75}))
        m = md.load_map_config(str(p))
        assert m.family == "SV" and m.lam == 0.75

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            md.load_map_config(str(p))

    def test_tail_rule(self):
        # explicit branches on (1/4, 1], geometric tail below with ratio 1/2
        branches = [md.make_branch(1, 0.5, 1.0, 2.0), md.make_branch(2, 0.25, 0.5, 4.0)]
        cm = md.build_custom_map(branches, "staircase",
                                 tail={"from_index": 3, "ratio": 0.5, "slope": 4.0})
        b5 = cm.branch(5)
        assert b5.interval == pytest.approx((0.25 * 0.5 ** 3, 0.25 * 0.5 ** 2), rel=1e-12)
        assert cm.locate(0.05) == 5  # 0.05 sits inside the n=5 tail branch
        sub = md.truncate(cm, 16)
        assert md.is_primitive(sub)

    def test_tail_needs_rule_transitions(self):
        branches = [md.make_branch(1, 0.5, 1.0, 2.0), md.make_branch(2, 0.25, 0.5, 4.0)]
        with pytest.raises(ConfigError):
            md.build_custom_map(branches, np.ones((2, 2), dtype=bool),
                                tail={"from_index": 3, "ratio": 0.5, "slope": 4.0})


class TestBranchSpec:
    def test_log_slope_consistency(self):
        with pytest.raises(DomainError):
            md.BranchSpec(1, 0.0, 0.5, 2.0, math.log(2.0) + 1e-9)

    def test_expansion_required(self):
        with pytest.raises(DomainError):
            md.make_branch(1, 0.0, 0.5, 0.9)

    def test_interval_orientation(self):
        with pytest.raises(DomainError):
            md.make_branch(1, 0.6, 0.5, 2.0)
