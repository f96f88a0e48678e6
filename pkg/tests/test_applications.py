"""Density-dependent persistence and the two-patch epidemic application."""

import math

import numpy as np
import pytest

from twopatch.applications import (
    HoltParams,
    Verdict,
    classify_persistence,
    cumulative_cases_sweep,
    persistence_sweep,
    predict_persistence,
    simulate_density_dependent,
    simulate_sir,
    sir_growth_crossing,
    sir_linearized_growth,
    sir_linearized_map,
)
from twopatch.core import MarkovSwitch, PeriodicSquare, Trajectory, realize_environment
from twopatch.mat2 import growth_rate, phase_shift_map


class TestDensityDependent:
    def test_attractor_entry_from_five_starts(self):
        # every start, including ones outside, ends up inside the square of
        # side (1 - eps)/alpha = 9 and stays there
        eps, alpha, m, T = 0.1, 0.1, 0.2, 5.0
        env = realize_environment(PeriodicSquare(T=T), 200.0)
        for x0 in [(0.1, 0.1), (12.0, 1.0), (1.0, 12.0), (15.0, 15.0), (9.5, 0.2)]:
            tr = simulate_density_dependent(eps, alpha, m, env, x0, 200.0, dt=0.02)
            tail = tr.states[tr.times >= 100.0]
            assert np.max(tail) <= 9.0 + 1e-6

    def test_uncoupled_logistic_respects_ceiling(self):
        eps, alpha = 0.1, 0.1
        env = realize_environment(PeriodicSquare(T=5.0), 120.0)
        tr = simulate_density_dependent(eps, alpha, 0.0, env, (9.0, 9.0), 120.0, dt=0.02)
        assert np.max(tr.states[tr.times > 10.0]) <= (1.0 - eps) / alpha + 1e-9

    def test_validation(self):
        env = realize_environment(PeriodicSquare(T=1.0), 5.0)
        with pytest.raises(ValueError):
            simulate_density_dependent(0.1, 0.0, 0.1, env, (1.0, 1.0), 5.0, 0.01)

    def test_sweep_dichotomy_quick(self):
        pts = persistence_sweep(0.1, 0.1, [1e-4, 0.05, 0.3, 2.0, 12.0], 5.0, 3000.0, dt=0.05)
        verdicts = [p.verdict for p in pts]
        assert verdicts[0] is Verdict.EXTINCT
        assert Verdict.PERSISTENT in verdicts
        assert verdicts[-1] is Verdict.EXTINCT
        for p in pts:
            assert p.verdict == p.predicted


class TestClassify:
    def _traj(self, values):
        times = np.arange(len(values), dtype=float)
        return Trajectory(times=times, states=np.asarray(values, dtype=float), coords="X")

    def test_vanishing_trajectory_is_extinct(self):
        vals = [[1e-300, 1e-300]] * 100
        res = classify_persistence(self._traj(vals))
        assert res.verdict is Verdict.EXTINCT

    def test_constant_positive_is_persistent(self):
        vals = [[1.0, 2.0]] * 100
        res = classify_persistence(self._traj(vals))
        assert res.verdict is Verdict.PERSISTENT
        assert res.long_run_min == 1.0 and res.long_run_max == 2.0

    def test_in_between_is_inconclusive(self):
        vals = [[1e-300, 1e-300]] * 99 + [[0.5, 0.5]]
        res = classify_persistence(self._traj(vals))
        assert res.verdict is Verdict.INCONCLUSIVE


class TestPredict:
    def test_periodic_signs(self):
        assert predict_persistence(0.1, 0.2, 5.0, "periodic") is Verdict.PERSISTENT
        assert predict_persistence(0.1, 1e-4, 5.0, "periodic") is Verdict.EXTINCT
        assert predict_persistence(0.1, 0.0, 5.0, "periodic") is Verdict.EXTINCT

    def test_markov_regimes(self):
        # mean sojourn 0.2 (fast switching): extinction; 5.0 (slow): persistence
        assert predict_persistence(0.5, 0.2, 0.2, "markov") is Verdict.EXTINCT
        assert predict_persistence(0.5, 0.2, 5.0, "markov") is Verdict.PERSISTENT

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            predict_persistence(0.1, 0.2, 5.0, "sinusoidal")

    def test_stochastic_persistence_occupation(self):
        # positive stochastic growth keeps the pair outside a small
        # neighborhood of extinction at least 95% of the time
        env = realize_environment(MarkovSwitch(rate=0.2), 4000.0, seed=3)
        tr = simulate_density_dependent(0.5, 0.1, 0.2, env, (1.0, 1.0), 4000.0, dt=0.05)
        mask = tr.times >= 100.0
        occupied = np.mean(np.max(tr.states[mask], axis=1) > 0.01)
        assert occupied > 0.95


class TestHoltParams:
    def test_default_net_rates(self):
        h = HoltParams()
        assert h.net_normal == pytest.approx(0.0988, abs=1e-15)
        assert h.net_distanced == pytest.approx(-0.1012, abs=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            HoltParams(T=0.0)
        with pytest.raises(ValueError):
            HoltParams(phase_shift=70.0)
        with pytest.raises(ValueError):
            HoltParams(m=-0.1)


class TestSirModel:
    def test_isolated_patch_alternates_net_rates(self):
        # with no migration and a tiny seed, infection follows the net rates
        # +0.0988 / -0.1012 over the two phases
        h = HoltParams()
        res = simulate_sir(h, m=0.0, horizon_days=60.0, dt=0.02)
        tr = res.trajectory
        i30 = np.searchsorted(tr.times, 30.0)
        growth = tr.states[i30, 1] / tr.states[0, 1]
        assert growth == pytest.approx(math.exp(0.0988 * 30.0), rel=5e-3)
        decay = tr.states[-1, 1] / tr.states[i30, 1]
        assert decay == pytest.approx(math.exp(-0.1012 * 30.0), rel=5e-3)
        # patch 2 stays uninfected without migration
        assert np.all(tr.states[:, 3] == pytest.approx(0.0, abs=1e-300))

    def test_rescaled_out_of_phase_equivalence(self):
        # multiplying rates by 10 maps the linearized pair onto the
        # out-of-phase model at eps = 0.012, T = 3 with shift fraction 4/30
        h = HoltParams()
        for m in (0.05, 0.1, 0.2, 0.3):
            lam_sir = sir_linearized_growth(h, m)
            lam_pm = growth_rate(phase_shift_map(0.012, 10.0 * m, 3.0, 4.0 / 30.0)) / 10.0
            assert abs(lam_sir - lam_pm) < 1e-12

    def test_growth_crossing_location(self):
        cross = sir_growth_crossing(HoltParams())
        assert 0.1 <= cross <= 0.4
        assert sir_linearized_growth(HoltParams(), cross * 1.05) < 0.0
        assert sir_linearized_growth(HoltParams(), cross * 0.95) > 0.0

    def test_period_map_has_full_period(self):
        pm = sir_linearized_map(HoltParams(), 0.1)
        assert pm.period == pytest.approx(60.0, abs=1e-12)

    def test_conservation_without_removal_pressure(self):
        h = HoltParams(mu=0.0)
        res = simulate_sir(h, m=0.1, horizon_days=300.0, dt=0.05)
        start = res.trajectory.states[0].sum()
        end = res.trajectory.states[-1].sum() + sum(res.cumulative_removals)
        assert abs(end - start) < 1e-6 * start

    def test_cases_accumulate_and_stay_finite(self):
        res = simulate_sir(HoltParams(), m=0.005, horizon_days=400.0, dt=0.05)
        c1, c2 = res.cumulative_cases
        assert 0.0 < c1 < 1.0 and 0.0 <= c2 < 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            simulate_sir(HoltParams(), m=-0.1, horizon_days=10.0)
        with pytest.raises(ValueError):
            simulate_sir(HoltParams(), m=0.1, horizon_days=10.0, x0=(1.0, -0.1, 1.0, 0.0))


class TestCasesSweep:
    def test_hump_shape_quick(self):
        sweep = cumulative_cases_sweep(HoltParams(), [0.0, 0.05, 0.1, 0.3, 0.5], 900.0, dt=0.15)
        cases = [c for _, c in sweep]
        assert cases[0] == min(cases)
        assert max(cases) > cases[0] and max(cases) > cases[-1]

    def test_validation(self):
        with pytest.raises(ValueError):
            cumulative_cases_sweep(HoltParams(), [], 100.0)
        with pytest.raises(ValueError):
            cumulative_cases_sweep(HoltParams(), [-0.1], 100.0)
