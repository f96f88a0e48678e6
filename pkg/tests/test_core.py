"""Environment realization, parameter validation, containers, JSON schema."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twopatch.core import (
    Dirac,
    Exponential,
    GrowthReport,
    MarkovSwitch,
    Method,
    ModelParams,
    PeriodicSquare,
    RenewalSwitch,
    Trajectory,
    Uniform,
    params_from_dict,
    params_to_dict,
    realize_environment,
    signal_from_dict,
    signal_to_dict,
    switch_times,
)


class TestRealizeEnvironment:
    def test_periodic_schedule(self):
        out = realize_environment(PeriodicSquare(T=2.0), 7.0)
        assert [t for t, _ in out] == [2.0, 4.0, 6.0]
        assert [s for _, s in out] == [-1, 1, -1]

    def test_periodic_includes_exact_horizon(self):
        out = realize_environment(PeriodicSquare(T=2.0), 6.0)
        assert [t for t, _ in out] == [2.0, 4.0, 6.0]

    def test_periodic_ignores_seed(self):
        a = realize_environment(PeriodicSquare(T=0.7), 50.0, seed=1)
        b = realize_environment(PeriodicSquare(T=0.7), 50.0, seed=99)
        assert a == b

    def test_dirac_renewal_equals_periodic(self):
        ren = realize_environment(RenewalSwitch(Dirac(3.0), Dirac(3.0)), 10.0)
        assert [t for t, _ in ren] == [3.0, 6.0, 9.0]

    def test_dirac_renewal_bit_identical_over_many_switches(self):
        # multiplication-based schedules: no drift across >= 1e4 switches
        T = 0.3
        per = switch_times(PeriodicSquare(T=T), 3100.0)
        ren = switch_times(RenewalSwitch(Dirac(T), Dirac(T)), 3100.0, seed=5)
        assert per.size > 10_000
        assert np.array_equal(per, ren)

    def test_unequal_dirac_pair(self):
        out = realize_environment(RenewalSwitch(Dirac(3.0), Dirac(2.0)), 11.0)
        # starts in +1, so the first sojourn uses the plus distribution
        assert [t for t, _ in out] == [2.0, 5.0, 7.0, 10.0]

    def test_markov_mean_sojourn_lln(self):
        rate = 0.4
        times = switch_times(MarkovSwitch(rate=rate), 1e5, seed=123)
        sojourns = np.diff(np.concatenate([[0.0], times]))
        mean = sojourns.mean()
        se = sojourns.std(ddof=1) / np.sqrt(sojourns.size)
        assert abs(mean - 1.0 / rate) < 3.0 * se

    def test_markov_switch_count_rate(self):
        rate = 0.7
        t_end = 1e5 / rate
        times = switch_times(MarkovSwitch(rate=rate), t_end, seed=3)
        assert abs(times.size / t_end - rate) < 0.05 * rate

    def test_markov_deterministic_given_seed(self):
        a = switch_times(MarkovSwitch(rate=1.1), 5e3, seed=42)
        b = switch_times(MarkovSwitch(rate=1.1), 5e3, seed=42)
        assert np.array_equal(a, b)

    def test_renewal_uniform_deterministic(self):
        sig = RenewalSwitch(Uniform(3.6, 4.4), Uniform(3.6, 4.4))
        a = switch_times(sig, 1e4, seed=7)
        b = switch_times(sig, 1e4, seed=7)
        assert np.array_equal(a, b)

    def test_rejects_bad_horizon(self):
        with pytest.raises(ValueError):
            realize_environment(PeriodicSquare(T=1.0), 0.0)
        with pytest.raises(ValueError):
            realize_environment(PeriodicSquare(T=1.0), -3.0)

    def test_uniform_rejects_eta_at_least_T(self):
        with pytest.raises(ValueError):
            Uniform(0.0, 8.0)  # eta = T
        with pytest.raises(ValueError):
            Uniform(-1.0, 9.0)

    @given(
        T=st.floats(0.1, 5.0),
        eta_frac=st.floats(0.0, 0.9),
        seed=st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_renewal_realization_properties(self, T, eta_frac, seed):
        eta = eta_frac * T
        sojourn = Dirac(T) if eta == 0.0 else Uniform(T - eta, T + eta)
        out = realize_environment(RenewalSwitch(sojourn, sojourn), 40.0 * T, seed=seed)
        times = np.array([t for t, _ in out])
        states = [s for _, s in out]
        assert np.all(np.diff(times) > 0.0)
        assert set(states) <= {-1, 1}
        assert states == [(-1) ** (k + 1) for k in range(len(states))]
        sojourns = np.diff(np.concatenate([[0.0], times]))
        assert np.all(sojourns >= T - eta - 1e-12)
        assert np.all(sojourns <= T + eta + 1e-12)


class TestModelParams:
    def test_defaults(self):
        p = ModelParams(epsilon=0.5, m=0.2, T=2.0)
        assert p.alpha == 0.0 and p.beta_disp == 0.5 and p.phi == 1.0
        assert p.patch_rates() == (0.5, 1.5, 0.5, 1.5)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epsilon": -0.1, "m": 1.0, "T": 1.0},
            {"epsilon": 1.2, "m": 1.0, "T": 1.0},
            {"epsilon": 0.5, "m": -1.0, "T": 1.0},
            {"epsilon": 0.5, "m": 1.0, "T": 0.0},
            {"epsilon": 0.5, "m": 1.0, "T": 1.0, "alpha": -0.5},
            {"epsilon": 0.5, "m": 1.0, "T": 1.0, "beta_disp": 0.0},
            {"epsilon": 0.5, "m": 1.0, "T": 1.0, "beta_disp": 0.7},
            {"epsilon": 0.5, "m": 1.0, "T": 1.0, "phi": 1.5},
            {"epsilon": 0.5, "m": 1.0, "T": 1.0, "rates": (1.0, 2.0)},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            ModelParams(**kwargs)


class TestGrowthReport:
    def test_stderr_only_for_monte_carlo(self):
        GrowthReport(0.1, Method.MONTE_CARLO, stderr=0.01)
        with pytest.raises(ValueError):
            GrowthReport(0.1, Method.MONTE_CARLO)
        with pytest.raises(ValueError):
            GrowthReport(0.1, Method.CLOSED_FORM, stderr=0.01)
        with pytest.raises(ValueError):
            GrowthReport(0.1, Method.MONTE_CARLO, stderr=-1.0)

    def test_to_dict_roundtrip_fields(self):
        rep = GrowthReport(0.25, Method.MONTE_CARLO, stderr=0.01, horizon=10.0, samples=5, seed=3)
        d = rep.to_dict()
        assert d["method"] == "monte_carlo" and d["seed"] == 3
        assert json.dumps(d)


class TestTrajectory:
    def test_validation(self):
        with pytest.raises(ValueError):
            Trajectory(times=[0.0, 1.0], states=[[1.0, 1.0]], coords="X")
        with pytest.raises(ValueError):
            Trajectory(times=[0.0, 0.0], states=[[1.0, 1.0], [1.0, 1.0]], coords="X")
        with pytest.raises(ValueError):
            Trajectory(times=[0.0, 1.0], states=[[1.0, 1.0], [-1.0, 1.0]], coords="X")
        with pytest.raises(ValueError):
            Trajectory(times=[0.0], states=[[1.0, 1.0]], coords="Q")

    def test_u_reconstruction(self):
        tr = Trajectory(
            times=[0.0, 1.0, 2.0, 3.0],
            states=[[0.0, 0.0]] * 4,
            coords="UV",
            env_trace=[1.5, 2.5],
        )
        assert list(tr.u_at([0.5, 2.0, 2.9])) == [1, -1, 1]

    def test_csv_headers(self, tmp_path):
        import io

        tr_x = Trajectory(times=[0.0, 1.0], states=[[1.0, 2.0], [2.0, 1.0]], coords="X")
        buf = io.StringIO()
        tr_x.to_csv(buf)
        assert buf.getvalue().splitlines()[0] == "t,x1,x2"

        tr_uv = Trajectory(
            times=[0.0, 1.0], states=[[0.0, 0.1], [0.2, 0.0]], coords="UV", env_trace=[0.5]
        )
        buf = io.StringIO()
        tr_uv.to_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "t,U,V,u"
        assert lines[1].endswith(",1") and lines[2].endswith(",-1")

        tr_sir = Trajectory(
            times=[0.0], states=[[1.0, 0.1, 1.0, 0.0]], coords="SIR"
        )
        buf = io.StringIO()
        tr_sir.to_csv(buf)
        assert buf.getvalue().splitlines()[0] == "t,S1,I1,S2,I2"


class TestJsonSchema:
    def test_params_roundtrip(self):
        p = ModelParams(epsilon=0.1, m=0.3, T=2.0, alpha=0.1, beta_disp=0.4, phi=0.5,
                        rates=(0.9, 1.1, -0.1, 0.1))
        assert params_from_dict(params_to_dict(p)) == p

    def test_params_rejects_unknown_fields(self):
        with pytest.raises(ValueError, match="unknown"):
            params_from_dict({"epsilon": 0.1, "m": 0.1, "T": 1.0, "mu": 3})

    def test_params_requires_core_fields(self):
        with pytest.raises(ValueError):
            params_from_dict({"epsilon": 0.1})

    @pytest.mark.parametrize(
        "sig",
        [
            PeriodicSquare(T=2.5, phase_origin=0.5, initial_state=-1),
            MarkovSwitch(rate=0.4),
            RenewalSwitch(Uniform(1.0, 2.0), Exponential(1.5), initial_state=-1),
            RenewalSwitch(Dirac(2.0), Dirac(2.0)),
        ],
    )
    def test_signal_roundtrip(self, sig):
        assert signal_from_dict(signal_to_dict(sig)) == sig

    def test_signal_rejects_unknown(self):
        with pytest.raises(ValueError):
            signal_from_dict({"kind": "markov_switch", "rate": 1.0, "phase": 2})
        with pytest.raises(ValueError):
            signal_from_dict({"kind": "brownian"})
