import json
import math

import numpy as np
import pytest

from pssmp import (AtomMeasure, LaplaceExponent, LevyPathConfig, LevyTriplet, MomentTable, SdeConfig,
                   compare_to_formula, cross_validate, entire_moment, estimate_moments, martingale_zero_mean_test,
                   scaling_check)
from pssmp.ensemble import EnsembleError
from pssmp.verify import (bias_trend, identity_residual_trend, mc_estimate, moments_from_ensemble, run_ensemble,
                          second_seed, welch)


def estimated(value, se, n=1, t=2.0, z=1.0, paths=100):
    return MomentTable([n], [t], [z], np.full((1, 1, 1), value), "estimated", np.full((1, 1, 1), se), paths)


class TestMcEstimate:
    def test_standard_error(self):
        e = mc_estimate([1.0, 2.0, 3.0, 4.0])
        assert e.value == 2.5
        assert e.standard_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)

    def test_single_sample_degenerate(self):
        assert mc_estimate([3.0]).degenerate


class TestCompare:
    # Psi(1) = 3 gives E_1(Z_2) = 1 + 3 * 2 = 7
    model = LevyTriplet(3.0, 0.0)

    def test_exact_match(self):
        rep = compare_to_formula(estimated(7.0, 0.1), self.model)
        c = rep.cells[0]
        assert c.exact == 7.0 and c.zscore == 0.0 and c.verdict == "pass"
        assert rep.exit_code == 0

    def test_five_sigma_fails(self):
        rep = compare_to_formula(estimated(7.5, 0.1), self.model, k=4)
        assert rep.cells[0].zscore == pytest.approx(5.0)
        assert rep.cells[0].verdict == "fail" and rep.exit_code == 1

    def test_zero_se_agreement(self):
        assert compare_to_formula(estimated(7.0, 0.0), self.model).passed

    def test_zero_se_mismatch_is_hard_fail(self):
        rep = compare_to_formula(estimated(7.01, 0.0), self.model)
        assert [c.verdict for c in rep.hard_failures] == ["hard_fail"] and rep.exit_code == 1

    def test_degenerate_suppresses_verdict(self):
        rep = compare_to_formula(estimated(9.0, math.nan, paths=1), self.model)
        assert rep.cells[0].verdict == "degenerate" and math.isnan(rep.cells[0].zscore)

    def test_verdict_uses_full_precision(self):
        # 4.0000001 sigma away: a rounded report would read 4.000 and pass
        rep = compare_to_formula(estimated(7.0 + 0.40000001, 0.1), self.model, k=4)
        assert rep.cells[0].verdict == "fail"

    def test_report_formats(self):
        rep = compare_to_formula(estimated(7.0, 0.1), self.model)
        doc = json.loads(rep.to_json())
        assert doc["passed"] and doc["cells"][0]["exact"] == 7.0
        assert "PASS" in rep.to_text()

    def test_needs_estimates(self):
        exact = MomentTable([1], [1.0], [1.0], np.ones((1, 1, 1)))
        with pytest.raises(ValueError):
            compare_to_formula(exact, self.model)


class TestEstimateMoments:
    @pytest.mark.parametrize("scheme", ["lamperti", "sde"])
    def test_deterministic(self, drift, scheme):
        tab = estimate_moments(scheme, drift, 1.0, [2.0], 1, 50, master_seed=1)
        assert tab.cell(1, 2.0, 1.0) == pytest.approx(3.0, rel=1e-12)
        assert tab.se[0, 0, 0] <= 1e-12
        assert compare_to_formula(tab, drift).passed

    def test_single_path(self, brownian):
        tab = estimate_moments("sde", brownian, 1.0, [1.0], 2, 1, master_seed=1)
        rep = compare_to_formula(tab, brownian)
        assert all(c.verdict == "degenerate" for c in rep.cells) and rep.passed

    def test_deterministic_in_seed_and_workers(self, full_model):
        a = estimate_moments("sde", full_model, 1.0, [0.5, 1.0], 3, 5000, master_seed=4, workers=1)
        b = estimate_moments("sde", full_model, 1.0, [0.5, 1.0], 3, 5000, master_seed=4, workers=4)
        assert a.to_csv() == b.to_csv()
        c = estimate_moments("sde", full_model, 1.0, [0.5, 1.0], 3, 5000, master_seed=5)
        assert a.to_csv() != c.to_csv()

    def test_brownian_lamperti(self, brownian):
        tab = estimate_moments("lamperti", brownian, 1.0, [1.0], 2, 20_000, master_seed=2)
        assert compare_to_formula(tab, brownian).passed

    def test_lamperti_needs_positive_start(self, brownian):
        with pytest.raises(ValueError):
            estimate_moments("lamperti", brownian, 0.0, [1.0], 1, 10)

    def test_aborted_fraction_invalidates(self, brownian):
        with pytest.raises(EnsembleError, match="aborted"):
            estimate_moments("sde", brownian, 1.0, [1.0], 1, 500, SdeConfig(state_cap=2.0), master_seed=1)

    def test_unknown_scheme(self, brownian):
        with pytest.raises(ValueError):
            run_ensemble("euler", brownian, 1.0, [1.0], 10)

    def test_table_meta_reproducible(self, brownian):
        tab = estimate_moments("sde", brownian, 1.0, [1.0], 1, 100, master_seed=7)
        for key in ("scheme", "dt", "paths", "seed", "config_digest"):
            assert key in tab.meta
        again = run_ensemble("sde", brownian, 1.0, [1.0], 100, SdeConfig(**tab.meta["config"]), tab.meta["seed"])
        assert np.array_equal(moments_from_ensemble(again, 1).values, tab.values)


class TestScaling:
    def test_identity_scale(self, full_model):
        assert scaling_check(full_model, 1.3, 0.7, 1.0, 8) == 0.0

    def test_binomial(self):
        assert scaling_check(lambda lam: lam, 1.0, 1.0, 2.0, 3) <= 1e-12

    @pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
    def test_zero_start(self, full_model, c):
        assert scaling_check(full_model, 0.0, 1.0, c, 10) <= 1e-12

    def test_bad_factor(self, brownian):
        with pytest.raises(ValueError):
            scaling_check(brownian, 1.0, 1.0, 0.0, 2)


class TestMartingaleTest:
    def test_sigma_free_model(self, atom_model):
        rep = martingale_zero_mean_test(atom_model, 1.0, 2, 1.0, 2000, SdeConfig(dt=2e-3), seed=1)
        m1 = rep.components[0]
        assert m1.mean == 0.0 and m1.verdict == "degenerate"
        assert rep.passed

    def test_pi_free_model(self):
        t = LevyTriplet(0.5, 1.0, kill_rate=0.3)
        rep = martingale_zero_mean_test(t, 1.0, 2, 1.0, 2000, SdeConfig(dt=2e-3), seed=1)
        assert rep.components[1].mean == 0.0 and rep.components[1].verdict == "degenerate"

    def test_full_model(self, full_model):
        rep = martingale_zero_mean_test(full_model, 1.0, 2, 1.0, 10_000, seed=3)
        assert all(abs(c.zscore) <= 3 for c in rep.components)
        assert json.loads(rep.to_json())["n"] == 2

    def test_residual_trend(self, full_model):
        rep = identity_residual_trend(full_model, 1.0, 2, 1.0, 2000, [1e-3, 5e-4], seed=2)
        assert rep.decreasing and 1.7 < rep.ratios[0] < 2.3


def test_bias_trend(atom_model):
    rep = bias_trend(atom_model, 1.0, 1.0, [2e-3, 1e-3], 20_000, seed=1)
    assert rep.decreasing
    assert 1.7 < rep.ratios[0] < 2.3
    assert rep.detail[0]["exact"] == pytest.approx(entire_moment(atom_model, z=1.0, t=1.0, n=1))


class TestCross:
    def test_welch(self):
        assert welch(1.0, 0.3, 1.0, 0.4) == 0.0
        assert welch(2.0, 0.3, 1.0, 0.4) == pytest.approx(2.0)
        assert math.isnan(welch(1.0, math.nan, 1.0, 0.1))
        assert welch(1.0, 0.0, 1.0, 0.0) == 0.0

    def test_deterministic_model(self, drift):
        rep = cross_validate(drift, 1.0, [0.5, 1.0], 3, 20, seed=1)
        assert all(c.statistic == 0.0 for c in rep.cells) and rep.passed
        for c in rep.cells:
            assert c.lamperti == pytest.approx(c.sde, rel=1e-6)

    def test_same_seed_same_scheme(self, brownian):
        a = estimate_moments("sde", brownian, 1.0, [1.0], 2, 3000, master_seed=9)
        b = estimate_moments("sde", brownian, 1.0, [1.0], 2, 3000, master_seed=9)
        for (_, _, _, va, sa), (_, _, _, vb, sb) in zip(a.cells(), b.cells()):
            assert welch(va, sa, vb, sb) == 0.0

    def test_second_seed_wraps(self):
        assert second_seed(2**64 - 1) == (2**64 - 1 + 0x9E3779B97F4A7C15) % 2**64

    def test_brownian(self, brownian):
        rep = cross_validate(brownian, 1.0, [0.5, 1.0], 2, 20_000, seed=3)
        assert rep.passed, rep.to_text()

    def test_refuses_models_that_hit_zero(self):
        t = LevyTriplet(1.0, 0.5, AtomMeasure.from_pairs([(-2.0, 1.0)]))
        with pytest.raises(ValueError, match="hits zero"):
            cross_validate(t, 1.0, [1.0], 1, 10)

    def test_deterministic_pipelines_agree(self):
        t = LevyTriplet(0.8, 0.0)
        fn = LaplaceExponent(t)
        z, ts = 1.5, [0.3, 1.0, 2.0]
        lam = run_ensemble("lamperti", t, z, ts, 1, LevyPathConfig(dt=1e-3)).values[0]
        sde = run_ensemble("sde", t, z, ts, 1, SdeConfig(dt=1e-3)).values[0]
        for j, tt in enumerate(ts):
            for n in (1, 2, 3):
                exact = entire_moment(fn, z=z, t=tt, n=n)
                assert abs(lam[j] ** n - exact) <= 1e-6
                assert abs(sde[j] ** n - exact) <= 1e-6
