"""Tests for the Monte Carlo verification harnesses.

Oracle values used below, derived independently before implementation:

* single real linear mode (nu=1, k1=2, kappa=4): terminal variance of the
  exact flow is eps*lam*s^2*G with G = (1-e^{-8})/8, so the exceedance
  probability of an H-ball of radius r around the origin is
  2*Phibar(r/sqrt(eps*lam*G)).
* the plain second-moment inequality is saturated worst at t=0, where its
  margin is exactly eps*K*T; both discounted inequalities have margin
  exactly zero at t=0.
* with common random numbers the linear controlled-SDE-to-flow gap is
  exactly proportional to eps, so the log-log slope is 1.
"""
import math

import numpy as np
import pytest

from goylab import (
    ActionProblem,
    AdditiveNoise,
    ControlPath,
    CovarianceSpec,
    DiagonalMultiplicativeNoise,
    Forcing,
    ModelParams,
    SphereTarget,
    TimeGrid,
    Variant,
    minimize_action,
)
from goylab.experiments import (
    EnsembleSpec,
    LdpRow,
    LdpTable,
    TerminalSphereEvent,
    ldp_check,
    rare_event_probability,
    verify_energy_estimates,
    weak_convergence_study,
    wilson_interval,
)

G_SINGLE = (1.0 - math.exp(-8.0)) / 8.0


def two_sided_tail(radius: float, variance: float) -> float:
    return math.erfc(radius / math.sqrt(variance) / math.sqrt(2.0))


def single_mode_params() -> ModelParams:
    return ModelParams(
        num_shells=1, k0=1.0, nu=1.0, a=0.0, b=0.0, c=0.0, variant=Variant.GOY
    )


def desk_energy_spec(epsilon: float = 0.05, paths: int = 200) -> EnsembleSpec:
    return EnsembleSpec(
        params=single_mode_params(),
        sigma=AdditiveNoise(s=(1.0,)),
        q=CovarianceSpec.explicit((0.5,)),
        f=Forcing.zero(),
        u0=np.array([1.0 + 0.0j]),
        grid=TimeGrid(t0=0.0, T=1.0, steps=256),
        epsilon=epsilon,
        paths=paths,
        master_seed=20260822,
    )


class TestEnsembleSpec:
    def test_rejects_bad_paths(self):
        spec = desk_energy_spec()
        with pytest.raises(ValueError, match="paths"):
            EnsembleSpec(
                params=spec.params, sigma=spec.sigma, q=spec.q, f=spec.f,
                u0=spec.u0, grid=spec.grid, epsilon=0.1, paths=0, master_seed=1,
            )
        with pytest.raises(TypeError, match="paths"):
            EnsembleSpec(
                params=spec.params, sigma=spec.sigma, q=spec.q, f=spec.f,
                u0=spec.u0, grid=spec.grid, epsilon=0.1, paths=True, master_seed=1,
            )

    def test_rejects_bad_epsilon_and_u0(self):
        spec = desk_energy_spec()
        with pytest.raises(ValueError, match="epsilon"):
            EnsembleSpec(
                params=spec.params, sigma=spec.sigma, q=spec.q, f=spec.f,
                u0=spec.u0, grid=spec.grid, epsilon=-0.1, paths=4, master_seed=1,
            )
        with pytest.raises(ValueError, match="shape"):
            EnsembleSpec(
                params=spec.params, sigma=spec.sigma, q=spec.q, f=spec.f,
                u0=np.zeros(3, dtype=complex), grid=spec.grid,
                epsilon=0.1, paths=4, master_seed=1,
            )
        with pytest.raises(TypeError, match="master_seed"):
            EnsembleSpec(
                params=spec.params, sigma=spec.sigma, q=spec.q, f=spec.f,
                u0=spec.u0, grid=spec.grid, epsilon=0.1, paths=4, master_seed=1.5,
            )


class TestWilsonInterval:
    def test_brackets_the_proportion(self):
        for hits, trials in [(0, 10), (1, 10), (5, 10), (10, 10), (37, 400)]:
            lo, hi = wilson_interval(hits, trials)
            assert 0.0 <= lo <= hits / trials <= hi <= 1.0

    def test_zero_hits_has_positive_upper_bound(self):
        lo, hi = wilson_interval(0, 1000)
        assert lo == 0.0
        assert 0.0 < hi < 0.01

    def test_symmetry(self):
        lo, hi = wilson_interval(30, 100)
        lo2, hi2 = wilson_interval(70, 100)
        assert lo == pytest.approx(1.0 - hi2, abs=1e-15)
        assert hi == pytest.approx(1.0 - lo2, abs=1e-15)

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            wilson_interval(1, 0)
        with pytest.raises(ValueError):
            wilson_interval(5, 4)


class TestVerifyEnergyEstimates:
    def test_desk_margins_nonnegative(self):
        rep = verify_energy_estimates(desk_energy_spec(), delta_weight=1.0)
        assert rep.branch == "additive-doob"
        assert rep.growth_constant == 0.5
        assert rep.all_nonnegative()
        assert set(rep.margins) == {
            "plain_second_moment",
            "sup_second_moment",
            "discounted_second_moment",
            "discounted_fourth_moment",
        }

    def test_plain_margin_is_noise_budget_at_time_zero(self):
        # worst node of the plain inequality is t=0 where the margin is
        # exactly the added noise budget eps*K*T = 0.05*0.5*1
        rep = verify_energy_estimates(desk_energy_spec(), delta_weight=1.0)
        assert rep.worst["plain_second_moment"]["time"] == 0.0
        assert rep.margins["plain_second_moment"] == pytest.approx(0.025, abs=1e-12)

    def test_discounted_margins_vanish_exactly_at_time_zero(self):
        rep = verify_energy_estimates(desk_energy_spec(), delta_weight=1.0)
        for name in ("discounted_second_moment", "discounted_fourth_moment"):
            assert rep.margins[name] == 0.0
            assert rep.worst[name]["time"] == 0.0

    def test_zero_noise_pure_dissipation(self):
        spec = desk_energy_spec()
        quiet = EnsembleSpec(
            params=spec.params, sigma=AdditiveNoise(s=(0.0,)), q=spec.q,
            f=spec.f, u0=spec.u0, grid=spec.grid, epsilon=0.05,
            paths=2, master_seed=3,
        )
        rep = verify_energy_estimates(quiet, delta_weight=1.0)
        assert rep.growth_constant == 0.0
        assert rep.all_nonnegative()
        # strict slack everywhere after t=0: half the dissipation is kept
        assert rep.margins["plain_second_moment"] == 0.0  # t=0 equality
        assert rep.worst["plain_second_moment"]["time"] == 0.0

    def test_guard_refusal_names_the_bound(self):
        spec = desk_energy_spec(epsilon=0.7, paths=2)
        with pytest.raises(ValueError, match=r"nu/\(3K\)"):
            verify_energy_estimates(spec, delta_weight=1.0)

    def test_guard_refusal_lists_every_violated_bound(self):
        spec = desk_energy_spec(epsilon=5.0, paths=2)
        with pytest.raises(ValueError) as err:
            verify_energy_estimates(spec, delta_weight=1.0)
        message = str(err.value)
        for name in ("nu/(2K)", "1/(2K^2)", "3nu/(2K)", "nu/(3K)"):
            assert name in message

    def test_rejects_bad_delta_weight(self):
        with pytest.raises(ValueError, match="delta_weight"):
            verify_energy_estimates(desk_energy_spec(paths=2), delta_weight=0.0)

    def test_deterministic_and_worker_independent(self):
        spec = desk_energy_spec(paths=70)
        rep1 = verify_energy_estimates(spec, delta_weight=1.0)
        rep2 = verify_energy_estimates(spec, delta_weight=1.0)
        rep4 = verify_energy_estimates(spec, delta_weight=1.0, workers=3)
        assert rep1.margins == rep2.margins
        assert rep1.margins == rep4.margins
        assert rep1.measured == rep4.measured

    def test_multiplicative_uses_theta_branch(self):
        p = single_mode_params()
        spec = EnsembleSpec(
            params=p,
            sigma=DiagonalMultiplicativeNoise(c=(0.1,)),
            q=CovarianceSpec.explicit((0.5,)),
            f=Forcing.zero(),
            u0=np.array([1.0 + 0.0j]),
            grid=TimeGrid(t0=0.0, T=1.0, steps=256),
            epsilon=0.05,
            paths=40,
            master_seed=12,
        )
        rep = verify_energy_estimates(spec, delta_weight=1.0)
        assert rep.branch == "general-theta"
        assert rep.all_nonnegative()


class TestWeakConvergenceStudy:
    def linear_spec(self, paths: int = 60) -> EnsembleSpec:
        return EnsembleSpec(
            params=single_mode_params(),
            sigma=AdditiveNoise(s=(1.0,)),
            q=CovarianceSpec.explicit((0.5,)),
            f=Forcing.zero(),
            u0=np.array([1.0 + 0.0j]),
            grid=TimeGrid(t0=0.0, T=1.0, steps=256),
            epsilon=0.0,
            paths=paths,
            master_seed=99,
        )

    def test_linear_gap_scales_exactly_with_epsilon(self):
        spec = self.linear_spec()
        v = ControlPath(grid=spec.grid, values=0.3 * np.ones((256, 1)))
        rep = weak_convergence_study(v, [1e-1, 1e-2, 1e-3], spec)
        assert rep.slope == pytest.approx(1.0, abs=1e-9)
        assert rep.monotone and rep.envelope_ok
        for a, b in zip(rep.d_values, rep.d_values[1:]):
            assert b / a == pytest.approx(0.1, rel=1e-10)

    def test_reports_both_metric_terms(self):
        spec = self.linear_spec(paths=20)
        v = ControlPath(grid=spec.grid, values=np.zeros((256, 1)))
        rep = weak_convergence_study(v, [1e-2, 1e-3], spec)
        for s, i, d in zip(rep.sup_terms, rep.int_terms, rep.d_values):
            assert s > 0 and i > 0
            assert s + i == pytest.approx(d, rel=1e-12)

    def test_nonlinear_sweep_strictly_decreasing(self):
        p6 = ModelParams(
            num_shells=6, k0=1.0, nu=1.0, a=-1.0, b=0.5, c=0.5, variant=Variant.GOY
        )
        rng = np.random.default_rng(5)
        u0 = np.zeros(6, dtype=complex)
        u0[:3] = 0.4 * (rng.standard_normal(3) + 1j * rng.standard_normal(3))
        grid = TimeGrid(t0=0.0, T=1.0, steps=256)
        spec = EnsembleSpec(
            params=p6, sigma=AdditiveNoise(s=(1.0,) * 6),
            q=CovarianceSpec.geometric(6, lam0=1.0, gamma=1.0),
            f=Forcing.zero(), u0=u0, grid=grid,
            epsilon=0.0, paths=40, master_seed=404,
        )
        v = ControlPath(grid=grid, values=0.2 * np.ones((256, 6)))
        rep = weak_convergence_study(v, [1e-1, 1e-2, 1e-3], spec)
        assert all(b < a for a, b in zip(rep.d_values, rep.d_values[1:]))
        assert rep.envelope_ok

    def test_rejects_bad_eps_list(self):
        spec = self.linear_spec(paths=2)
        v = ControlPath(grid=spec.grid, values=np.zeros((256, 1)))
        with pytest.raises(ValueError, match="nonempty"):
            weak_convergence_study(v, [], spec)
        with pytest.raises(ValueError, match="positive"):
            weak_convergence_study(v, [0.1, 0.0], spec)
        with pytest.raises(ValueError, match="decreasing"):
            weak_convergence_study(v, [0.01, 0.1], spec)

    def test_worker_independent(self):
        spec = self.linear_spec(paths=50)
        v = ControlPath(grid=spec.grid, values=0.1 * np.ones((256, 1)))
        rep1 = weak_convergence_study(v, [1e-1, 1e-2], spec, workers=1)
        rep2 = weak_convergence_study(v, [1e-1, 1e-2], spec, workers=2)
        assert rep1.d_values == rep2.d_values
        assert rep1.sup_terms == rep2.sup_terms


class TestRareEventProbability:
    def naive_spec(self, paths: int = 2000, steps: int = 256) -> EnsembleSpec:
        return EnsembleSpec(
            params=single_mode_params(),
            sigma=AdditiveNoise(s=(1.0,)),
            q=CovarianceSpec.explicit((1.0,)),
            f=Forcing.zero(),
            u0=np.zeros(1, dtype=complex),
            grid=TimeGrid(t0=0.0, T=1.0, steps=steps),
            epsilon=0.05,
            paths=paths,
            master_seed=7,
        )

    def test_naive_matches_gaussian_tail(self):
        spec = self.naive_spec()
        est = rare_event_probability(TerminalSphereEvent(0.15), 0.05, spec)
        closed = two_sided_tail(0.15, 0.05 * G_SINGLE)
        assert est.estimator == "naive"
        assert est.ci_low <= closed <= est.ci_high
        assert est.hits == round(est.p_hat * spec.paths)

    def test_radius_zero_is_certain(self):
        spec = self.naive_spec(paths=50)
        est = rare_event_probability(TerminalSphereEvent(0.0), 0.05, spec)
        assert est.p_hat == 1.0
        assert est.hits == 50
        assert est.ci_high == 1.0

    def test_zero_hits_flagged_with_upper_bound(self):
        spec = self.naive_spec(paths=400)
        est = rare_event_probability(TerminalSphereEvent(5.0), 0.05, spec)
        assert est.zero_hits
        assert est.p_hat == 0.0
        assert est.ci_low == 0.0
        assert 0.0 < est.ci_high < 0.02

    def test_rejects_bad_epsilon(self):
        spec = self.naive_spec(paths=2)
        with pytest.raises(ValueError, match="epsilon"):
            rare_event_probability(TerminalSphereEvent(0.1), 0.0, spec)

    def test_rejects_negative_radius(self):
        with pytest.raises(ValueError, match="radius"):
            TerminalSphereEvent(-0.5)

    def test_importance_agrees_with_naive_and_closed_form(self):
        # moderate-rarity regime where both estimators are sharp
        spec = self.naive_spec(paths=2000)
        event = TerminalSphereEvent(0.15)
        prob = ActionProblem(
            params=spec.params, sigma=spec.sigma, q=spec.q, f=spec.f,
            u0=spec.u0, grid=spec.grid,
            target=SphereTarget(center=(0j,), radius=0.15),
            penalty_rho=1e3, continuation_stages=6,
        )
        tilt = minimize_action(prob).v_star
        naive = rare_event_probability(event, 0.05, spec)
        imp = rare_event_probability(event, 0.05, spec, tilt=tilt)
        closed = two_sided_tail(0.15, 0.05 * G_SINGLE)
        assert imp.estimator == "importance"
        assert imp.ci_low <= closed <= imp.ci_high
        assert max(naive.ci_low, imp.ci_low) <= min(naive.ci_high, imp.ci_high)
        # importance interval should be tighter than naive at equal budget
        assert (imp.ci_high - imp.ci_low) < (naive.ci_high - naive.ci_low)

    def test_tilt_grid_must_match(self):
        spec = self.naive_spec(paths=2)
        other = TimeGrid(t0=0.0, T=1.0, steps=128)
        tilt = ControlPath(grid=other, values=np.zeros((128, 1)))
        with pytest.raises(ValueError, match="grid"):
            rare_event_probability(TerminalSphereEvent(0.1), 0.05, spec, tilt=tilt)

    def test_deterministic_and_worker_independent(self):
        spec = self.naive_spec(paths=600)
        event = TerminalSphereEvent(0.15)
        a = rare_event_probability(event, 0.05, spec)
        b = rare_event_probability(event, 0.05, spec)
        c = rare_event_probability(event, 0.05, spec, workers=3)
        assert (a.p_hat, a.ci_low, a.ci_high, a.hits) == (
            b.p_hat, b.ci_low, b.ci_high, b.hits
        )
        assert (a.p_hat, a.ci_low, a.ci_high, a.hits) == (
            c.p_hat, c.ci_low, c.ci_high, c.hits
        )


class TestLdpCheck:
    def oracle_pieces(self, steps: int = 2000, radius: float = 0.4):
        spec = EnsembleSpec(
            params=single_mode_params(),
            sigma=AdditiveNoise(s=(1.0,)),
            q=CovarianceSpec.explicit((1.0,)),
            f=Forcing.zero(),
            u0=np.zeros(1, dtype=complex),
            grid=TimeGrid(t0=0.0, T=1.0, steps=steps),
            epsilon=0.05,
            paths=2000,
            master_seed=11,
        )
        prob = ActionProblem(
            params=spec.params, sigma=spec.sigma, q=spec.q, f=spec.f,
            u0=spec.u0, grid=spec.grid,
            target=SphereTarget(center=(0j,), radius=radius),
            penalty_rho=1e3, continuation_stages=6,
        )
        res = minimize_action(prob)
        return spec, res

    def test_linear_oracle_trend(self):
        spec, res = self.oracle_pieces()
        event = TerminalSphereEvent(0.4)
        table = ldp_check(
            event, [0.05, 0.02], spec,
            i_ref=res.action_value, tilt=res.v_star,
            naive_paths=400, importance_paths=2000, expect_monotone=True,
        )
        assert res.action_value == pytest.approx(0.16 / (2 * G_SINGLE), rel=1e-3)
        assert table.trend_monotone and table.above_rate_within_ci
        imp = table.importance_rows()
        assert [r.epsilon for r in imp] == [0.05, 0.02]
        assert imp[0].neg_eps_log_p > imp[1].neg_eps_log_p > table.i_ref
        for r in imp:
            analytic = -r.epsilon * math.log(
                two_sided_tail(0.4, r.epsilon * G_SINGLE)
            )
            slack = r.epsilon * math.log(r.ci_high / r.p_hat)
            assert abs(r.neg_eps_log_p - analytic) <= 3.0 * slack
        # naive rows are hopeless at this rarity and must say so
        for r in table.naive_rows():
            assert r.zero_hits and math.isinf(r.neg_eps_log_p)

    def test_table_rows_sorted_descending_even_if_input_is_not(self):
        spec, res = self.oracle_pieces(steps=500)
        table = ldp_check(
            TerminalSphereEvent(0.4), [0.02, 0.05], spec,
            i_ref=res.action_value, tilt=res.v_star,
            naive_paths=50, importance_paths=200,
        )
        eps_seq = [r.epsilon for r in table.rows[::2]]
        assert eps_seq == sorted(eps_seq, reverse=True)

    def test_identical_reruns_identical_tables(self):
        spec, res = self.oracle_pieces(steps=500)
        args = (TerminalSphereEvent(0.4), [0.05], spec)
        kw = dict(i_ref=res.action_value, tilt=res.v_star,
                  naive_paths=100, importance_paths=400)
        t1 = ldp_check(*args, **kw)
        t2 = ldp_check(*args, **kw)
        t4 = ldp_check(*args, **kw, workers=4)
        assert t1.rows == t2.rows == t4.rows

    def test_table_validates_interval_bracketing(self):
        row = LdpRow(
            epsilon=0.1, estimator="importance", p_hat=0.5,
            ci_low=0.6, ci_high=0.7, neg_eps_log_p=1.0, i_ref=1.0,
            zero_hits=False,
        )
        with pytest.raises(ValueError, match="bracket"):
            LdpTable(radius=0.1, horizon=1.0, i_ref=1.0, rows=(row,))

    def test_rejects_empty_or_bad_eps(self):
        spec, res = self.oracle_pieces(steps=500)
        with pytest.raises(ValueError, match="nonempty"):
            ldp_check(TerminalSphereEvent(0.4), [], spec,
                      i_ref=res.action_value, tilt=res.v_star)
        with pytest.raises(ValueError, match="positive"):
            ldp_check(TerminalSphereEvent(0.4), [0.05, -0.1], spec,
                      i_ref=res.action_value, tilt=res.v_star)
