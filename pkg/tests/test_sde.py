import math

import numpy as np
import pytest

from pssmp import (AssumptionError, AtomMeasure, LaplaceExponent, LevyTriplet, SdeConfig, effective_rates,
                   entire_moment, martingale_components, psi, sde_ensemble, sde_step, simulate_sde_path)
from pssmp.ensemble import ABORTED, KILLED
from pssmp.sde import JUMP, KILL, NONE, g, h
from pssmp.simparams import build_params

LN2 = math.log(2.0)


class TestKernels:
    @pytest.mark.parametrize("r,u", [(0.0, -1.0), (5.0, -0.1), (1e9, -3.0)])
    def test_vanish_at_zero(self, r, u):
        assert g(0.0, r, u) == 0.0 and h(0.0, r) == 0.0

    def test_indicator(self):
        assert g(2.0, 0.5, -LN2) == pytest.approx(-1.0)
        assert g(2.0, 0.6, -LN2) == 0.0
        assert h(2.0, 0.5) == -2.0 and h(2.0, 0.51) == 0.0
        assert 2.0 + g(2.0, 0.1, -0.3) == pytest.approx(2.0 * math.exp(-0.3))


class TestEffectiveRates:
    def test_thinned_rate(self):
        t = LevyTriplet(5.0, 0.0, AtomMeasure.from_pairs([(-0.5, 1.0), (-2.0, 2.0)]))
        r = effective_rates(2.0, t)
        assert r.jump_rate_total == 1.5
        assert np.allclose(r.atom_rates, [0.5, 1.0])

    def test_zero_state(self, full_model):
        r = effective_rates(0.0, full_model)
        assert r.jump_rate_total == 0.0 and r.kill_rate_eff == 0.0 and r.compensator_drift == 0.0
        assert not r.atom_rates.any()
        assert r.drift == pytest.approx(psi(full_model, 1.0), abs=1e-15)

    def test_killing_only(self):
        t = LevyTriplet(3.0, 0.0, kill_rate=2.0)
        r = effective_rates(4.0, t)
        assert r.kill_rate_eff == 0.5
        assert r.compensator_drift == 2.0
        assert r.drift == psi(t, 1.0) + 2.0 == 3.0

    def test_drift_is_gamma_plus_half_sigma(self, full_model):
        # Psi(1) - int (e^u - 1) Pi(du) + q = gamma + sigma2/2 - int_{|u|<=1} u Pi(du)
        r = effective_rates(1.0, full_model)
        assert r.drift == pytest.approx(1.0 + 0.25 + 0.4, abs=1e-14)

    def test_negative_state(self, brownian):
        with pytest.raises(ValueError):
            effective_rates(-1.0, brownian)


class TestStep:
    def test_forced_jump(self):
        t = LevyTriplet(0.0, 0.0, AtomMeasure.from_pairs([(-LN2, 1.0)]))
        # drift at x > 0 is -int_{|u|<=1} u Pi(du) = ln 2; take dt tiny so the drift is negligible
        res = sde_step(1.0, 1e-12, t, draws=(0.0, 0.0, 0.5))
        assert res.kind == JUMP and res.u == -LN2
        assert res.x == pytest.approx(0.5, rel=1e-11)
        assert res.x == res.x_mid * 0.5

    def test_forced_kill(self):
        t = LevyTriplet(2.0, 0.0, kill_rate=1.0)
        res = sde_step(1.0, 1e-3, t, draws=(0.0, 0.0, 0.5))
        assert res.kind == KILL and res.x == 0.0

    def test_zero_start_lifts_by_drift(self, atom_model):
        res = sde_step(0.0, 1e-3, atom_model, draws=(1.7, 0.0, 0.0))
        assert res.kind == NONE
        assert res.x == pytest.approx(psi(atom_model, 1.0) * 1e-3, rel=1e-14)

    def test_clamp(self):
        t = LevyTriplet(0.1, 2.0)
        res = sde_step(1e-2, 1e-2, t, SdeConfig(diffusion_step="euler"), draws=(-4.0, 0.9, 0.5))
        assert res.clamped and res.x == 0.0

    def test_state_cap(self, brownian):
        with pytest.raises(OverflowError):
            sde_step(10.0, 1.0, brownian, SdeConfig(state_cap=5.0), draws=(0.0, 0.9, 0.5))

    def test_generator_draws(self, full_model):
        res = sde_step(1.0, 1e-3, full_model, draws=np.random.default_rng(0))
        assert res.x >= 0.0


class TestPath:
    def test_deterministic_drift(self, drift):
        sp, log = simulate_sde_path(1.0, drift, SdeConfig(dt=0.01), horizon=2.0)
        assert sp.values[-1] == pytest.approx(3.0, rel=1e-13)
        assert np.allclose(sp.values, 1.0 + sp.times, rtol=1e-13)
        assert log.events() == []

    @pytest.mark.parametrize("dt", [0.1, 0.003, 1e-3])
    def test_drift_exact_for_any_step(self, dt):
        t = LevyTriplet(0.7, 0.0)
        sp, _ = simulate_sde_path(0.0, t, SdeConfig(dt=dt), output_times=[0.5, 1.0])
        assert np.allclose(sp.values, [0.35, 0.7], rtol=1e-13)
        assert sp.T0 == 0.0

    def test_kernels_vanish_in_log(self, atom_model):
        cfg = SdeConfig(dt=1e-3)
        for i in range(20):
            _, log = simulate_sde_path(0.0, atom_model, cfg, horizon=1.0, seed=4, path_index=i)
            a = log.arrays()
            at_zero = a["x"] == 0.0
            assert at_zero[0]
            assert np.all(a["kind"][at_zero] == NONE)
            assert a["x_mid"][0] == pytest.approx(psi(atom_model, 1.0) * 1e-3)

    def test_log_replays_path(self, full_model):
        sp, log = simulate_sde_path(1.0, full_model, SdeConfig(dt=1e-3), horizon=1.0, seed=2, path_index=1)
        post = log.post_states()
        assert post[-1] == sp.values[-1]
        a = log.arrays()
        assert np.array_equal(a["x"][1:], post[:-1])
        jumps = a["kind"] == JUMP
        assert np.allclose(post[jumps], a["x_mid"][jumps] * np.exp(a["u"][jumps]))
        assert np.all(post[a["kind"] == KILL] == 0.0)
        assert all(kind in ("jump", "kill") for _, kind, _ in log.events())

    def test_a2_required(self):
        with pytest.raises(AssumptionError):
            simulate_sde_path(1.0, LevyTriplet(-1.0, 0.5), horizon=1.0)

    def test_matches_ensemble_row(self, full_model):
        ts = [0.3, 1.0]
        ens = sde_ensemble(full_model, 0.8, ts, 8, 17, SdeConfig(dt=2e-3))
        for i in range(8):
            sp, _ = simulate_sde_path(0.8, full_model, SdeConfig(dt=2e-3), output_times=ts, seed=17, path_index=i)
            assert np.allclose(sp.values, ens.values[i], rtol=1e-12, atol=1e-15)


class TestEnsemble:
    def test_nonnegative(self, full_model):
        ens = sde_ensemble(full_model, 0.0, np.linspace(0.01, 1.0, 100), 2000, 3)
        assert np.all(ens.values >= 0.0)

    def test_clamps_vanish_with_step(self):
        t = LevyTriplet(-0.8, 2.0)
        freq = []
        for dt in (1e-2, 1e-3, 1e-4):
            c = sde_ensemble(t, 0.5, [1.0], 1000, 1, SdeConfig(dt=dt)).extras["counts"]
            freq.append(c[:, 0].sum() / c[:, 3].sum())
        assert freq[0] > freq[1] > freq[2] > 0

    def test_no_clamps_when_milstein_square_is_complete(self, brownian):
        # b >= sigma^2/4 makes the Milstein update a square plus a nonnegative term
        c = sde_ensemble(brownian, 0.5, [1.0], 2000, 1, SdeConfig(dt=1e-2)).extras["counts"]
        assert c[:, 0].sum() == 0

    def test_absorb_on_kill_is_permanent(self):
        t = LevyTriplet(1.0, 0.5, kill_rate=1.0)
        ts = np.linspace(0.05, 2.0, 40)
        ens = sde_ensemble(t, 1.0, ts, 2000, 5, SdeConfig(absorb_on_kill=True))
        dead = ens.status == KILLED
        assert dead.any()
        for i in np.flatnonzero(dead):
            after = ts >= ens.t0[i]
            assert np.all(ens.values[i, after] == 0.0)
        assert np.all(ens.extras["counts"][dead, 2] == 1)

    def test_restart_after_kill(self):
        t = LevyTriplet(1.0, 0.5, kill_rate=1.0)
        ens = sde_ensemble(t, 1.0, [2.0], 2000, 5)
        revived = (ens.extras["counts"][:, 2] > 0) & (ens.values[:, -1] > 0)
        assert revived.any()

    def test_killed_fraction_grows_with_q(self):
        fr = []
        for q in (0.2, 1.0, 2.5):
            t = LevyTriplet(3.0, 0.5, kill_rate=q)
            ens = sde_ensemble(t, 1.0, [1.0], 4000, 8, SdeConfig(absorb_on_kill=True))
            fr.append(ens.absorbed_fraction)
        assert 0 < fr[0] < fr[1] < fr[2]

    def test_zero_start_mean(self):
        t = LevyTriplet(0.0, 2.0)
        v = sde_ensemble(t, 0.0, [1.0], 10_000, 12).values[:, 0]
        se = v.std(ddof=1) / math.sqrt(v.size)
        # E_0 Z_t = Psi(1) t = t; margin of 3 SE plus the O(dt) bias
        assert abs(v.mean() - 1.0) <= 3 * se + 1e-2

    def test_state_cap_aborts(self, brownian):
        ens = sde_ensemble(brownian, 1.0, [1.0], 200, 3, SdeConfig(state_cap=2.0))
        assert (ens.status == ABORTED).any()
        assert np.all(np.isnan(ens.values[ens.status == ABORTED, -1]))
        assert ens.aborted_fraction > 0.01

    def test_workers_and_backends(self, full_model):
        ts = [0.5, 1.0]
        a = sde_ensemble(full_model, 1.0, ts, 5000, 9, workers=1, order=2)
        b = sde_ensemble(full_model, 1.0, ts, 5000, 9, workers=3, order=2)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.extras["martingales"], b.extras["martingales"])
        c = sde_ensemble(full_model, 1.0, ts, 300, 9, backend="numpy", order=2)
        assert np.allclose(c.values, a.values[:300], rtol=1e-12, atol=1e-14)

    def test_cv_has_the_scheme_mean(self, atom_model):
        ens = sde_ensemble(atom_model, 1.0, [1.0], 20_000, 4)
        plain, cv = ens.values[:, 0], ens.extras["cv"][:, 0]
        d = plain - cv
        assert abs(d.mean()) <= 4 * d.std(ddof=1) / math.sqrt(d.size)
        assert cv.std() < 0.05 * plain.std()
        assert cv.mean() == pytest.approx(entire_moment(atom_model, z=1.0, t=1.0, n=1), abs=2e-3)


class TestMartingales:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_deterministic_model(self, n):
        t = LevyTriplet(1.3, 0.0)
        sp, log = simulate_sde_path(0.7, t, SdeConfig(dt=0.01), horizon=2.0)
        ms = martingale_components(log, sp, n, t)
        assert not ms.m1.any() and not ms.m2.any() and not ms.m3.any()
        assert np.abs(ms.residual).max() <= 1e-12

    def test_order_zero(self, full_model):
        sp, log = simulate_sde_path(1.0, full_model, SdeConfig(dt=0.01), horizon=1.0)
        ms = martingale_components(log, sp, 0, full_model)
        assert not (ms.m1.any() or ms.m2.any() or ms.m3.any() or ms.residual.any())

    def test_sigma_only_order_one(self):
        t = LevyTriplet(0.5, 1.5)
        fn = LaplaceExponent(t)
        res = []
        for dt in (2e-3, 1e-3):
            sp, log = simulate_sde_path(1.0, t, SdeConfig(dt=dt, diffusion_step="euler"), horizon=1.0, seed=6)
            ms = martingale_components(log, sp, 1, fn)
            a = log.arrays()
            expected = math.sqrt(1.5) * np.cumsum(np.sqrt(a["x"]) * a["dw"])
            assert np.allclose(ms.m1, expected, rtol=1e-12, atol=1e-14)
            assert not ms.m2.any() and not ms.m3.any()
            res.append(abs(sp.values[-1] - 1.0 - fn(1) * 1.0 - ms.m1[-1]))
        assert max(res) <= 1e-10

    def test_pi_free_model_has_no_m2(self):
        t = LevyTriplet(0.5, 1.5, kill_rate=0.4)
        sp, log = simulate_sde_path(1.0, t, SdeConfig(dt=1e-3), horizon=1.0, seed=2)
        assert not martingale_components(log, sp, 2, t).m2.any()

    def test_kernel_accumulators_match_log(self, full_model):
        fn = LaplaceExponent(full_model)
        ens = sde_ensemble(full_model, 1.0, [1.0], 4, 3, SdeConfig(dt=5e-3), order=3)
        for i in range(4):
            sp, log = simulate_sde_path(1.0, full_model, SdeConfig(dt=5e-3), output_times=[1.0], seed=3,
                                        path_index=i)
            ms = martingale_components(log, sp, 3, fn)
            got = ens.extras["martingales"][i]
            assert np.allclose(got, [ms.m1[-1], ms.m2[-1], ms.m3[-1], ms.integral[-1]], rtol=1e-12, atol=1e-12)

    def test_identity_residual_shrinks(self, full_model):
        fn = LaplaceExponent(full_model)
        errs = []
        for dt in (2e-3, 1e-3):
            r = []
            for i in range(25):
                sp, log = simulate_sde_path(1.0, full_model, SdeConfig(dt=dt), horizon=1.0, seed=1, path_index=i)
                r.append(np.abs(martingale_components(log, sp, 2, fn).residual).max())
            errs.append(np.mean(r))
        assert 1.5 < errs[0] / errs[1] < 2.7


def test_config_validation():
    for kw in ({"dt": 0}, {"state_cap": -1}, {"compensator_mode": "empirical"}, {"diffusion_step": "rk"},
               {"thin_threshold": 1.5}, {"max_substeps": 0}):
        with pytest.raises(ValueError):
            SdeConfig(**kw)


def test_quantized_density_keeps_psi1():
    from pssmp import exp_tilted_stable
    t = LevyTriplet(0.5, 0.3, exp_tilted_stable(1.0, 0.5, 1.0), 0.2)
    p = build_params(t)
    assert p.psi1 == pytest.approx(psi(t, 1.0), abs=1e-8)
    assert p.drift_pos - p.psi1 == pytest.approx(-p.compensator + 0.2, abs=1e-12)
