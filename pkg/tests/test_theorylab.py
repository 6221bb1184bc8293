import math

import numpy as np
import pytest
from scipy.special import logsumexp

from emctc.scoring import z_combine
from emctc.theorylab import (CASES, GRID_D, GRID_N, collapse_demo, distance_concentration, eight_case_c, eight_case_d,
                             inner_bound, inner_bound_empirical, matched_pair_posterior, midpoint_vocab,
                             pair_objective, run_suite, scalar_log_p, scalar_softmax_argmax, write_suite_csv)

# (f1, f2) placement per case: a, b, c, d are vocabulary rows 0..3, None is off-vocabulary
PLACEMENT = {"i": (None, None), "ii": (0, None), "iii": (0, 2), "iv": (0, 0), "v": (0, 1), "vi": (2, 3),
             "vii": (2, 2), "viii": (2, None)}


def binary_scores(D, n, f1, f2):
    """Summed two-hypothesis scores when a mismatch costs exactly D."""
    return np.array([-(D * (f1 != i) + D * (f2 != i)) for i in range(n)], dtype=float)


def oracle_c(D, n, case):
    s = binary_scores(D, n, *PLACEMENT[case])
    return s[0] + s[1] - 2 * logsumexp(s)


def oracle_d(D, n, case, d):
    s = binary_scores(D, n, *PLACEMENT[case])
    z = np.array([z_combine(si, di) for si, di in zip(s, d)])
    return z[0] + z[1] - 2 * logsumexp(z)


class TestScalarExample:
    def test_argmaxes(self):
        r = scalar_softmax_argmax()
        assert r.p_argmax == pytest.approx(2.385, abs=0.005)
        assert r.s_argmax == 2.0
        assert abs(r.grid_argmax - r.p_argmax) <= 1e-4

    def test_grid_cross_check_independently(self):
        grid = np.arange(1.0, 4.0, 1e-4)
        lp = [scalar_log_p(f) for f in grid[::10]]
        assert grid[::10][int(np.argmax(lp))] == pytest.approx(scalar_softmax_argmax().p_argmax, abs=1e-3)

    def test_p_max_is_a_probability(self):
        r = scalar_softmax_argmax()
        assert 0.5 < r.p_max < 1
        assert r.p_max == pytest.approx(math.exp(scalar_log_p(r.p_argmax)))


class TestEightCaseC:
    def test_d4_n10(self):
        t = eight_case_c(4.0, 10)
        assert t.values["v"] == pytest.approx(-1.52770, abs=1e-4)
        assert t.values["i"] == pytest.approx(-4.60517, abs=1e-4)
        assert t.argmax == "v"

    @pytest.mark.parametrize("D", GRID_D)
    @pytest.mark.parametrize("n", [4, 10, 100])
    def test_matches_binary_oracle(self, D, n):
        t = eight_case_c(D, n)
        for case in CASES:
            assert t.values[case] == pytest.approx(oracle_c(D, n, case), abs=1e-10), case

    @pytest.mark.parametrize("D", GRID_D)
    @pytest.mark.parametrize("n", GRID_N)
    def test_v_strictly_max(self, D, n):
        t = eight_case_c(D, n, check=True)
        assert t.values["iii"] < t.values["v"] and t.values["vi"] < t.values["v"]

    def test_iv_below_v(self):
        D = 0.5
        assert math.exp(D) + math.exp(-D) > 2
        assert eight_case_c(D, 10).values["iv"] < eight_case_c(D, 10).values["v"]

    def test_rejects(self):
        with pytest.raises(ValueError):
            eight_case_c(0.0, 10)
        with pytest.raises(ValueError):
            eight_case_c(1.0, 2)


class TestEightCaseD:
    @pytest.mark.parametrize("D", GRID_D)
    @pytest.mark.parametrize("n", [4, 10, 100])
    def test_matches_timestamped_oracle(self, D, n, rng):
        d = rng.uniform(0, 1, n)
        t = eight_case_d(D, n, d)
        d[:2] = 0.0
        for case in CASES:
            assert t.values[case] == pytest.approx(oracle_d(D, n, case, d), abs=1e-9), case

    def test_zero_distances(self):
        assert eight_case_d(4.0, 10, check=True).argmax == "v"

    def test_random_draws(self):
        rng = np.random.default_rng(0)
        bad = 0
        for D in GRID_D:
            for n in GRID_N:
                for _ in range(100):
                    bad += not eight_case_d(D, n, rng.uniform(0, 1, n)).v_strictly_max
        assert bad == 0

    def test_case_vi_needs_four_words(self):
        t = eight_case_d(1.0, 3)
        assert math.isnan(t.values["vi"]) and t.v_strictly_max

    def test_matched_pair_below_half(self):
        for D in GRID_D:
            for n in GRID_N:
                q = matched_pair_posterior(D, n)
                z = np.full(n, -2 * D)
                z[:2] = -D
                assert q == pytest.approx(math.exp(z[0] - logsumexp(z)))
                assert q < 0.5

    def test_rejects(self):
        with pytest.raises(ValueError):
            eight_case_d(1.0, 4, [0.0, 0.0, -1.0, 0.0])
        with pytest.raises(ValueError):
            eight_case_d(1.0, 4, [0.0] * 3)


class TestConcentration:
    def test_decreasing_and_small(self):
        rows = distance_concentration(trials=1000, seed=0)
        cvs = [r.cv for r in rows]
        assert all(a > b for a, b in zip(cvs, cvs[1:]))
        assert cvs[-1] < 0.1
        assert rows[0].cv > rows[-1].cv
        assert rows[-1].mean_abs_cos < 0.1

    def test_theory_scale(self):
        # distance of two N(0, I) vectors ~ sqrt(2) chi_dim, CV ~ 1/sqrt(2 dim)
        (row,) = distance_concentration(dims=(512,), trials=4000, seed=1)
        assert row.cv == pytest.approx(1 / math.sqrt(2 * 512), rel=0.1)

    def test_rejects(self):
        with pytest.raises(ValueError):
            distance_concentration(dims=(0,))


class TestCollapse:
    def test_midpoint_vocab(self):
        v = midpoint_vocab(3)
        np.testing.assert_array_equal(v[2], (v[0] + v[1]) / 2)
        assert v.shape == (3 + 4, 3)

    def test_with_midpoint_sum_condition(self):
        for seed in range(3):
            r = collapse_demo(2, "with_midpoint", seed=seed)
            v = midpoint_vocab(2)
            assert r.converged
            np.testing.assert_allclose(r.f1 + r.f2, v[0] + v[1], atol=1e-3)

    def test_symmetric_init_stays_symmetric(self):
        r = collapse_demo(2, "with_midpoint", init="symmetric", max_iter=2000)
        np.testing.assert_array_equal(r.f1, r.f2)

    def test_ascent_increases_objective(self):
        rng = np.random.default_rng(0)
        v = midpoint_vocab(2)
        start = pair_objective(rng.standard_normal(2), rng.standard_normal(2), v)
        assert collapse_demo(2, "with_midpoint", seed=0).objective > start

    @pytest.mark.xfail(strict=True, reason="gradient ascent on the pair objective preserves f1 - f2, "
                                           "so a random start cannot reach {g_a, g_b}")
    def test_dim64_separates_pair(self):
        assert collapse_demo(64, "without_midpoint", n=50, seed=0).pair_ok

    def test_rejects(self):
        with pytest.raises(ValueError):
            collapse_demo(2, "nope")


class TestInnerBound:
    def test_formula(self):
        assert inner_bound(2, 10.0) == pytest.approx(-math.log(1 + math.exp(-10)))
        assert inner_bound(2, 10.0) == pytest.approx(-4.54e-5, rel=1e-3)
        assert inner_bound(100, 200.0) == pytest.approx(0.0, abs=1e-80)

    def test_empirical(self):
        assert abs(inner_bound_empirical(10, 16.0, 512) - inner_bound(10, 16.0)) < 0.05

    def test_orthogonal_is_exact(self):
        assert inner_bound_empirical(10, 3.0, 64) == pytest.approx(inner_bound(10, 3.0), abs=1e-10)

    def test_rejects(self):
        with pytest.raises(ValueError):
            inner_bound(1, 1.0)
        with pytest.raises(ValueError):
            inner_bound_empirical(20, 1.0, dim=8)


class TestSuite:
    def test_all_asserted_checks_pass(self, tmp_path):
        res = run_suite(0)
        assert res.ok, [c for c in res.checks if c.asserted and not c.passed]
        info = [c for c in res.checks if not c.asserted]
        assert [c.name for c in info] == ["collapse_dim64_pair"]
        write_suite_csv(tmp_path / "v.csv", res)
        lines = (tmp_path / "v.csv").read_text().splitlines()
        assert lines[0] == "check,passed,asserted,detail" and len(lines) == len(res.checks) + 1
