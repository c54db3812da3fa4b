from fractions import Fraction

import numpy as np
import pytest

from muce.comparators import (
    BbhmHyper,
    ExnexHyper,
    SimonDesign,
    bbhm_fit,
    exnex_fit,
    fwer_independent,
    simon_search,
    two_stage_error_rates,
)
from muce.model import McmcConfig

from oracles import (
    bbhm_grid_posterior,
    exnex_enumeration_posterior,
    simon_bruteforce,
    two_stage_exact_fraction,
)

REFERENCE_DESIGN = SimonDesign(r1=2, n1=13, r=8, N=29)


class TestTwoStage:
    def test_reference_design_operating_point(self):
        at_p0 = two_stage_error_rates(REFERENCE_DESIGN, 0.2)
        at_p1 = two_stage_error_rates(REFERENCE_DESIGN, 0.35)
        assert at_p0.reject_prob <= 0.10
        assert at_p0.pet == pytest.approx(0.502, abs=0.001)
        assert at_p1.reject_prob >= 0.70
        assert at_p0.expected_n == pytest.approx(
            13 + (1 - at_p0.pet) * 16, abs=1e-12)

    def test_exact_rational_oracle(self):
        for p in (Fraction(1, 5), Fraction(7, 20), Fraction(1, 2)):
            reject, pet = two_stage_exact_fraction(2, 13, 8, 29, p)
            ours = two_stage_error_rates(REFERENCE_DESIGN, float(p))
            assert ours.reject_prob == pytest.approx(float(reject), abs=1e-12)
            assert ours.pet == pytest.approx(float(pet), abs=1e-12)

    def test_degenerate_rates(self):
        at0 = two_stage_error_rates(REFERENCE_DESIGN, 0.0)
        assert at0.reject_prob == 0.0
        assert at0.pet == 1.0
        assert at0.expected_n == REFERENCE_DESIGN.n1
        at1 = two_stage_error_rates(REFERENCE_DESIGN, 1.0)
        assert at1.reject_prob == 1.0
        assert at1.pet == 0.0

    def test_monotone_in_p(self):
        grid = np.arange(0.0, 1.0001, 0.05)
        points = [two_stage_error_rates(REFERENCE_DESIGN, p) for p in grid]
        rejects = [pt.reject_prob for pt in points]
        pets = [pt.pet for pt in points]
        assert all(b >= a - 1e-12 for a, b in zip(rejects, rejects[1:]))
        assert all(b <= a + 1e-12 for a, b in zip(pets, pets[1:]))

    def test_design_validation(self):
        with pytest.raises(ValueError):
            SimonDesign(r1=5, n1=5, r=8, N=29)
        with pytest.raises(ValueError):
            SimonDesign(r1=2, n1=13, r=1, N=29)
        with pytest.raises(ValueError):
            two_stage_error_rates(REFERENCE_DESIGN, 1.5)


class TestSimonSearch:
    def test_published_benchmark_configuration(self):
        # both optimality criteria land on the published tuple here
        assert simon_search(0.2, 0.35, 0.1, 0.3, "optimal") == REFERENCE_DESIGN
        assert simon_search(0.2, 0.35, 0.1, 0.3, "minimax") == REFERENCE_DESIGN

    def test_infeasible_when_rates_equal(self):
        with pytest.raises(ValueError):
            simon_search(0.2, 0.2, 0.1, 0.3)

    def test_matches_bruteforce_second_implementation(self):
        design = simon_search(0.1, 0.3, 0.05, 0.2, "optimal", n_max=32)
        N, n1, r1, r = simon_bruteforce(0.1, 0.3, 0.05, 0.2, "optimal", 32)
        assert (design.r1, design.n1, design.r, design.N) == (r1, n1, r, N)

    def test_published_reference_designs(self):
        # Simon (1989), p0=0.10 p1=0.30 alpha=0.05 beta=0.20
        assert simon_search(0.1, 0.3, 0.05, 0.2, "optimal") == SimonDesign(1, 10, 5, 29)
        assert simon_search(0.1, 0.3, 0.05, 0.2, "minimax") == SimonDesign(1, 15, 5, 25)

    @pytest.mark.parametrize("args", [(0.2, 0.35, 0.1, 0.3),
                                      (0.1, 0.3, 0.05, 0.2),
                                      (0.3, 0.5, 0.1, 0.1)])
    @pytest.mark.parametrize("criterion", ["optimal", "minimax"])
    def test_returned_design_meets_constraints(self, args, criterion):
        p0, p1, alpha, beta = args
        design = simon_search(p0, p1, alpha, beta, criterion)
        assert two_stage_error_rates(design, p0).reject_prob <= alpha
        assert two_stage_error_rates(design, p1).reject_prob >= 1 - beta

    def test_no_feasible_design_within_bound(self):
        with pytest.raises(ValueError):
            simon_search(0.2, 0.21, 0.05, 0.05, n_max=40)


class TestFwerIndependent:
    def test_published_values(self):
        assert round(fwer_independent(0.1, 4), 4) == 0.3439
        assert round(fwer_independent(0.1, 12), 4) == 0.7176

    def test_single_test(self):
        assert fwer_independent(0.37, 1) == pytest.approx(0.37, abs=1e-15)

    def test_increasing_in_both_arguments(self):
        alphas = np.linspace(0.0, 1.0, 21)
        vals = [fwer_independent(a, 5) for a in alphas]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        ks = range(1, 20)
        vals = [fwer_independent(0.07, k) for k in ks]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_validation(self):
        with pytest.raises(ValueError):
            fwer_independent(1.2, 3)
        with pytest.raises(ValueError):
            fwer_independent(0.1, 0)


CFG = McmcConfig(burn_in=2000, n_keep=8000, seed=17)


class TestBbhm:
    def test_single_arm_matches_grid_quadrature(self):
        # a proper diffuse inverse-gamma keeps the 3-D grid integral honest
        hyper = BbhmHyper(ig_shape=1.0, ig_rate=1.0)
        rep = bbhm_fit([29], [6], 0.2, 0.35, hyper,
                       McmcConfig(burn_in=3000, n_keep=100_000, seed=23))
        pr_f, pr_i, est = bbhm_grid_posterior(29, 6, 0.2, 0.35,
                                              hyper.theta0_mean,
                                              hyper.theta0_var,
                                              hyper.ig_shape, hyper.ig_rate)
        assert rep.pr_final[0] == pytest.approx(pr_f, abs=0.02)
        assert rep.pr_interim[0] == pytest.approx(pr_i, abs=0.02)

    def test_identical_arms_are_exchangeable(self):
        acc = np.zeros(4)
        for s in range(20):
            cfg = McmcConfig(burn_in=1000, n_keep=4000, seed=s)
            acc += bbhm_fit([29] * 4, [6] * 4, 0.2, 0.35, BbhmHyper(), cfg).pr_final
        acc /= 20
        assert acc == pytest.approx(np.full(4, acc.mean()), abs=0.02)

    def test_upward_borrowing_from_strong_arms(self):
        joint = 0.0
        alone = 0.0
        for s in range(50):
            cfg = McmcConfig(burn_in=1000, n_keep=4000, seed=s)
            joint += bbhm_fit([29] * 4, [6, 13, 11, 10], 0.2, 0.35,
                              BbhmHyper(), cfg).pr_final[0]
            alone += bbhm_fit([29], [6], 0.2, 0.35, BbhmHyper(), cfg).pr_final[0]
        assert joint / 50 > alone / 50

    def test_shrinkage_toward_overall_mean(self):
        est = np.zeros(4)
        for s in range(20):
            cfg = McmcConfig(burn_in=1000, n_keep=4000, seed=100 + s)
            est += bbhm_fit([10] * 4, [1, 5, 6, 3], 0.2, 0.35,
                            BbhmHyper(), cfg).est_p
        est /= 20
        raw = np.array([0.1, 0.5, 0.6, 0.3])
        below = raw < raw.mean()
        assert (est[below] > raw[below]).all()
        assert (est[~below] < raw[~below]).all()

    def test_no_target_rate_disables_interim_probability(self):
        rep = bbhm_fit([10, 10], [2, 3], 0.2, None, BbhmHyper(),
                       McmcConfig(burn_in=500, n_keep=2000, seed=5))
        assert np.isnan(rep.pr_interim).all()
        assert np.isfinite(rep.pr_final).all()

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            bbhm_fit([10, 10], [2], 0.2, 0.35, BbhmHyper(), CFG)
        with pytest.raises(ValueError):
            bbhm_fit([10], [11], 0.2, 0.35, BbhmHyper(), CFG)


class TestExnex:
    def test_pure_ex_collapses_to_fixed_variance_bbhm(self):
        n, y = [10] * 4, [1, 5, 6, 3]
        ex = ExnexHyper(weights=(1.0, 0.0), ex_loc=(0.0,), ex_loc_var=(100.0,),
                        ex_sigma_sq=(1.0,))
        bb = BbhmHyper(theta0_mean=0.0, theta0_var=100.0, sigma2_fixed=1.0)
        a = np.zeros(4)
        b = np.zeros(4)
        for s in range(10):
            cfg = McmcConfig(burn_in=1000, n_keep=8000, seed=s)
            a += exnex_fit(n, y, 0.2, 0.35, ex, cfg).pr_final
            b += bbhm_fit(n, y, 0.2, 0.35, bb, cfg).pr_final
        assert a / 10 == pytest.approx(b / 10, abs=0.02)

    def test_pure_nex_equals_independent_single_arm_fits(self):
        n, y = [10] * 4, [1, 5, 6, 3]
        nex = ExnexHyper(weights=(0.0, 1.0))
        joint = np.zeros(4)
        single = np.zeros(4)
        for s in range(10):
            cfg = McmcConfig(burn_in=1000, n_keep=8000, seed=s)
            joint += exnex_fit(n, y, 0.2, 0.35, nex, cfg).pr_final
            for k in range(4):
                cfg_k = McmcConfig(burn_in=1000, n_keep=8000, seed=991 + 13 * s + k)
                single[k] += exnex_fit([n[k]], [y[k]], 0.2, 0.35, nex,
                                       cfg_k).pr_final[0]
        assert joint / 10 == pytest.approx(single / 10, abs=0.02)

    def test_two_arm_enumeration_oracle(self):
        n, y = [5, 4], [3, 0]
        hyper = ExnexHyper(weights=(0.6, 0.4), ex_loc=(0.3,), ex_loc_var=(4.0,),
                           ex_sigma_sq=(0.8,), nex_mean=-0.6, nex_sigma_sq=9.0)
        rep = exnex_fit(n, y, 0.2, 0.35, hyper,
                        McmcConfig(burn_in=3000, n_keep=200_000, seed=41))
        oracle = exnex_enumeration_posterior(
            n, y, 0.2, 0.35, hyper.weights, hyper.ex_loc[0],
            hyper.ex_loc_var[0], hyper.ex_sigma_sq[0], hyper.nex_mean,
            hyper.nex_sigma_sq)
        assert rep.pr_final == pytest.approx(oracle, abs=0.02)

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            ExnexHyper(weights=(0.7, 0.6))
        with pytest.raises(ValueError):
            ExnexHyper(weights=(0.5, 0.5, 0.0))  # length vs one EX component
        with pytest.raises(ValueError):
            ExnexHyper(ex_sigma_sq=(0.0,))

    def test_default_nex_mean_centers_on_reference_rate(self):
        # with pi1 = pi0 the offset scale's null point is zero
        rep = exnex_fit([10], [2], 0.2, None, ExnexHyper(weights=(0.0, 1.0)),
                        McmcConfig(burn_in=500, n_keep=4000, seed=1))
        assert 0.0 < rep.pr_final[0] < 1.0
