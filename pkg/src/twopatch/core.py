"""Shared vocabulary: parameter bundles, switching environments, trajectories.

The model is a population on two patches whose per-capita growth rates
alternate between two values out of phase, coupled by dispersal.  Everything
downstream consumes the same small set of value objects defined here:

* :class:`ModelParams` -- the scalar parameters (epsilon, m, T plus the
  extension knobs for density dependence, asymmetric dispersal, phase shift
  and general per-patch rates).
* :class:`EnvironmentSignal` subclasses -- descriptions of the switching
  process (periodic square wave, Markov exponential switching, renewal
  switching with general sojourn laws) together with a deterministic
  realization sampler, :func:`realize_environment`.
* :class:`Trajectory` -- sampled time series in patch, log or SIR coordinates.
* :class:`GrowthReport` -- a growth-exponent value tagged with the method
  that produced it and, for Monte Carlo estimates, a standard error.

All types are immutable after construction and realization is a pure
function of ``(signal, seed)``, so everything here is safe to share across
threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence, TextIO

import numpy as np

__all__ = [
    "ModelParams",
    "EnvironmentSignal",
    "PeriodicSquare",
    "MarkovSwitch",
    "RenewalSwitch",
    "Dirac",
    "Exponential",
    "Uniform",
    "Trajectory",
    "GrowthReport",
    "Method",
    "realize_environment",
    "switch_times",
    "params_to_dict",
    "params_from_dict",
    "signal_to_dict",
    "signal_from_dict",
]


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameter bundle consumed by every computation.

    epsilon   mortality offset, in [0, 1]
    m         dispersal rate per unit time, >= 0
    T         half-period of the switching (or mean sojourn time), > 0
    alpha     density-dependence coefficient, >= 0 (0 = linear model)
    beta_disp dispersal asymmetry in (0, 0.5]; 0.5 means both directions
              carry the same fraction of the dispersal flux
    phi       phase-shift fraction in [0, 1]; 1 = fully out of phase
    rates     optional per-patch square-wave rates (r1, d1, r2, d2)
              generalizing the out-of-phase (1 - eps)/-(1 + eps) pair
    """

    epsilon: float
    m: float
    T: float
    alpha: float = 0.0
    beta_disp: float = 0.5
    phi: float = 1.0
    rates: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.m < 0.0:
            raise ValueError(f"m must be >= 0, got {self.m}")
        if self.T <= 0.0:
            raise ValueError(f"T must be > 0, got {self.T}")
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 < self.beta_disp <= 0.5:
            raise ValueError(f"beta_disp must be in (0, 0.5], got {self.beta_disp}")
        if not 0.0 <= self.phi <= 1.0:
            raise ValueError(f"phi must be in [0, 1], got {self.phi}")
        if self.rates is not None:
            if len(self.rates) != 4:
                raise ValueError("rates must be a 4-tuple (r1, d1, r2, d2)")
            object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
            if not all(math.isfinite(r) for r in self.rates):
                raise ValueError("rates must be finite")

    def patch_rates(self) -> tuple[float, float, float, float]:
        """Square-wave rates (r1, d1, r2, d2); defaults to the +/-1 pair."""
        if self.rates is not None:
            return self.rates
        return (1.0 - self.epsilon, 1.0 + self.epsilon,
                1.0 - self.epsilon, 1.0 + self.epsilon)


# ---------------------------------------------------------------------------
# Sojourn distributions for renewal switching


@dataclass(frozen=True)
class Dirac:
    """Point mass: every sojourn lasts exactly ``value``."""

    value: float

    def __post_init__(self) -> None:
        if self.value <= 0.0:
            raise ValueError(f"Dirac sojourn must be > 0, got {self.value}")


@dataclass(frozen=True)
class Exponential:
    """Exponential sojourns with the given mean."""

    mean: float

    def __post_init__(self) -> None:
        if self.mean <= 0.0:
            raise ValueError(f"Exponential mean must be > 0, got {self.mean}")


@dataclass(frozen=True)
class Uniform:
    """Uniform sojourns on [low, high]; low > 0 keeps sojourns positive."""

    low: float
    high: float

    def __post_init__(self) -> None:
        if self.low <= 0.0:
            raise ValueError(
                f"Uniform sojourn support must be positive, got low={self.low}"
            )
        if self.high < self.low:
            raise ValueError(f"Uniform needs low <= high, got [{self.low}, {self.high}]")


SojournDistribution = Dirac | Exponential | Uniform


def _sample_sojourns(dist: SojournDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    # Inverse-CDF from the generator's uniform stream, so the seed -> stream
    # contract does not depend on numpy's rejection samplers.
    u = rng.random(n)
    if isinstance(dist, Dirac):
        return np.full(n, dist.value)
    if isinstance(dist, Exponential):
        return -dist.mean * np.log1p(-u)
    if isinstance(dist, Uniform):
        return dist.low + (dist.high - dist.low) * u
    raise TypeError(f"unknown sojourn distribution {dist!r}")


# ---------------------------------------------------------------------------
# Environment signals


@dataclass(frozen=True)
class EnvironmentSignal:
    """Base class for switching-process descriptions.

    ``initial_state`` is the value of u at t = 0 (+1 by convention).
    A realization is a piecewise-constant map t -> u(t) in {-1, +1} given by
    the initial state and a strictly increasing list of switch times.
    """

    initial_state: int = field(default=1, kw_only=True)

    def __post_init__(self) -> None:
        if self.initial_state not in (1, -1):
            raise ValueError(f"initial_state must be +1 or -1, got {self.initial_state}")


@dataclass(frozen=True)
class PeriodicSquare(EnvironmentSignal):
    """Square wave: u = initial_state on [0, T), flipped on [T, 2T), period 2T.

    ``phase_origin`` shifts the schedule: switches land at k*T - phase_origin.
    """

    T: float = 1.0
    phase_origin: float = 0.0

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.T <= 0.0:
            raise ValueError(f"T must be > 0, got {self.T}")
        if not 0.0 <= self.phase_origin < self.T:
            raise ValueError("phase_origin must lie in [0, T)")


@dataclass(frozen=True)
class MarkovSwitch(EnvironmentSignal):
    """Exponential sojourns with rate sigma (mean sojourn 1/sigma)."""

    rate: float = 1.0

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.rate <= 0.0:
            raise ValueError(f"rate must be > 0, got {self.rate}")


@dataclass(frozen=True)
class RenewalSwitch(EnvironmentSignal):
    """Independent sojourns: mu_minus while u = -1, mu_plus while u = +1."""

    sojourn_minus: SojournDistribution = Dirac(1.0)
    sojourn_plus: SojournDistribution = Dirac(1.0)


def _periodic_switches(T: float, phase_origin: float, horizon: float) -> np.ndarray:
    # k*T by multiplication, never accumulated addition: no drift over long
    # horizons and bit-identical to the Dirac renewal specialization.
    k_max = int(horizon // T) + 2
    k = np.arange(1, k_max + 1, dtype=float)
    times = k * T - phase_origin
    return times[(times > 0.0) & (times <= horizon)]


def _renewal_switches(
    sig: RenewalSwitch, horizon: float, rng: np.random.Generator
) -> np.ndarray:
    first = sig.sojourn_plus if sig.initial_state == 1 else sig.sojourn_minus
    second = sig.sojourn_minus if sig.initial_state == 1 else sig.sojourn_plus

    if isinstance(first, Dirac) and isinstance(second, Dirac):
        a, b = first.value, second.value
        if a == b:
            return _periodic_switches(a, 0.0, horizon)
        # Pair arithmetic keeps long schedules drift-free for unequal periods.
        n_pairs = int(horizon // (a + b)) + 2
        j = np.arange(n_pairs, dtype=float)
        odd = a + j * (a + b)
        even = (j + 1.0) * (a + b)
        times = np.empty(2 * n_pairs)
        times[0::2] = odd
        times[1::2] = even
        return times[times <= horizon]

    mean_first = (
        first.value if isinstance(first, Dirac)
        else first.mean if isinstance(first, Exponential)
        else 0.5 * (first.low + first.high)
    )
    mean_second = (
        second.value if isinstance(second, Dirac)
        else second.mean if isinstance(second, Exponential)
        else 0.5 * (second.low + second.high)
    )
    pair_mean = mean_first + mean_second
    chunks: list[np.ndarray] = []
    total = 0.0
    while total <= horizon:
        n = max(16, int(1.2 * (horizon - total) / pair_mean) + 8)
        block = np.empty(2 * n)
        block[0::2] = _sample_sojourns(first, n, rng)
        block[1::2] = _sample_sojourns(second, n, rng)
        times = total + np.cumsum(block)
        chunks.append(times)
        total = times[-1]
    all_times = np.concatenate(chunks)
    return all_times[all_times <= horizon]


def switch_times(sig: EnvironmentSignal, horizon: float, seed: int = 0) -> np.ndarray:
    """Switch instants of a realization of ``sig`` on (0, horizon], as an array.

    Deterministic given (sig, seed); the periodic schedule ignores the seed.
    """
    if horizon <= 0.0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    if isinstance(sig, PeriodicSquare):
        return _periodic_switches(sig.T, sig.phase_origin, horizon)
    rng = np.random.Generator(np.random.PCG64(seed))
    if isinstance(sig, MarkovSwitch):
        mean = 1.0 / sig.rate
        chunks: list[np.ndarray] = []
        total = 0.0
        while total <= horizon:
            n = max(16, int(1.2 * (horizon - total) * sig.rate) + 8)
            sojourns = -mean * np.log1p(-rng.random(n))
            times = total + np.cumsum(sojourns)
            chunks.append(times)
            total = times[-1]
        all_times = np.concatenate(chunks)
        return all_times[all_times <= horizon]
    if isinstance(sig, RenewalSwitch):
        return _renewal_switches(sig, horizon, rng)
    raise TypeError(f"unknown environment signal {sig!r}")


def realize_environment(
    sig: EnvironmentSignal, horizon: float, seed: int = 0
) -> list[tuple[float, int]]:
    """Realize the switching process as [(switch time, new state), ...].

    All switch times lie in (0, horizon], strictly increasing; the state
    alternates starting from -initial_state at the first switch.
    """
    times = switch_times(sig, horizon, seed)
    state = sig.initial_state
    out = []
    for t in times:
        state = -state
        out.append((float(t), state))
    return out


def env_segments(
    switches: Sequence[tuple[float, int]], horizon: float, initial_state: int = 1
) -> list[tuple[float, float, int]]:
    """Constant-state segments [(t0, t1, u), ...] covering [0, horizon]."""
    segs = []
    t0, u = 0.0, initial_state
    for t, new_state in switches:
        if t >= horizon:
            break
        if t > t0:
            segs.append((t0, t, u))
        t0, u = t, new_state
    if horizon > t0:
        segs.append((t0, horizon, u))
    return segs


# ---------------------------------------------------------------------------
# Result containers


class Method(enum.Enum):
    """How a growth exponent was computed."""

    CLOSED_FORM = "closed_form"
    SPECTRAL = "spectral"
    ORBIT_QUADRATURE = "orbit_quadrature"
    DENSITY_QUADRATURE = "density_quadrature"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class GrowthReport:
    """A growth exponent (per unit time) with provenance.

    ``stderr`` is present exactly for Monte Carlo estimates; ``horizon`` /
    ``samples`` / ``seed`` record how the number was produced.
    """

    value: float
    method: Method
    stderr: float | None = None
    horizon: float | None = None
    samples: int | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.method is Method.MONTE_CARLO:
            if self.stderr is None:
                raise ValueError("Monte Carlo reports need a stderr")
            if self.stderr < 0.0:
                raise ValueError("stderr must be >= 0")
        elif self.stderr is not None:
            raise ValueError(f"stderr only applies to Monte Carlo, not {self.method}")

    def to_dict(self) -> dict:
        d: dict = {"value": self.value, "method": self.method.value}
        if self.stderr is not None:
            d["stderr"] = self.stderr
        if self.horizon is not None:
            d["horizon"] = self.horizon
        if self.samples is not None:
            d["samples"] = self.samples
        if self.seed is not None:
            d["seed"] = self.seed
        return d


_COORD_COLUMNS = {
    "X": ("x1", "x2"),
    "UV": ("U", "V"),
    "SIR": ("S1", "I1", "S2", "I2"),
}


@dataclass(frozen=True)
class Trajectory:
    """Sampled time series of system state under a realized environment.

    ``coords`` is "X" (patch abundances), "UV" (log product / log ratio) or
    "SIR"; ``env_trace`` holds the switch times of the realized u(t) and
    ``env_initial`` its value at t = 0.
    """

    times: np.ndarray
    states: np.ndarray
    coords: str
    env_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    env_initial: int = 1

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "env_trace", np.asarray(self.env_trace, dtype=float))
        if self.coords not in _COORD_COLUMNS:
            raise ValueError(f"coords must be one of {set(_COORD_COLUMNS)}")
        if states.ndim != 2 or states.shape[0] != times.shape[0]:
            raise ValueError("states must be (len(times), n_components)")
        if states.shape[1] != len(_COORD_COLUMNS[self.coords]):
            raise ValueError(
                f"{self.coords} coordinates need {len(_COORD_COLUMNS[self.coords])} components"
            )
        if times.size > 1 and not np.all(np.diff(times) > 0.0):
            raise ValueError("times must be strictly increasing")
        if self.coords in ("X",) and times.size and not np.all(states > 0.0):
            raise ValueError("patch abundances must stay positive")

    def u_at(self, t: np.ndarray | float) -> np.ndarray:
        """Environment state u(t) reconstructed from the switch trace."""
        n_flips = np.searchsorted(self.env_trace, np.asarray(t, dtype=float), side="right")
        return self.env_initial * np.where(n_flips % 2 == 0, 1, -1)

    def to_csv(self, out: TextIO) -> None:
        """Write `t,x1,x2` / `t,U,V,u` / `t,S1,I1,S2,I2` rows."""
        cols = _COORD_COLUMNS[self.coords]
        header = "t," + ",".join(cols)
        body = [self.states]
        if self.coords == "UV":
            header += ",u"
            body.append(self.u_at(self.times)[:, None])
        out.write(header + "\n")
        data = np.column_stack([self.times[:, None], *body])
        np.savetxt(out, data, delimiter=",", fmt="%.17g")


# ---------------------------------------------------------------------------
# JSON schema (lower_snake_case field names, strict keys)


def _check_keys(d: dict, allowed: Iterable[str], what: str) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ValueError(f"unknown {what} fields: {sorted(unknown)}")


def params_to_dict(p: ModelParams) -> dict:
    d = {
        "epsilon": p.epsilon,
        "m": p.m,
        "T": p.T,
        "alpha": p.alpha,
        "beta_disp": p.beta_disp,
        "phi": p.phi,
    }
    if p.rates is not None:
        d["rates"] = list(p.rates)
    return d


def params_from_dict(d: dict) -> ModelParams:
    _check_keys(d, [f.name for f in fields(ModelParams)], "ModelParams")
    if "epsilon" not in d or "m" not in d or "T" not in d:
        raise ValueError("ModelParams needs at least epsilon, m and T")
    kwargs = dict(d)
    if kwargs.get("rates") is not None:
        kwargs["rates"] = tuple(kwargs["rates"])
    return ModelParams(**kwargs)


def _sojourn_to_dict(s: SojournDistribution) -> dict:
    if isinstance(s, Dirac):
        return {"kind": "dirac", "value": s.value}
    if isinstance(s, Exponential):
        return {"kind": "exponential", "mean": s.mean}
    return {"kind": "uniform", "low": s.low, "high": s.high}


def _sojourn_from_dict(d: dict) -> SojournDistribution:
    kind = d.get("kind")
    if kind == "dirac":
        _check_keys(d, ("kind", "value"), "Dirac")
        return Dirac(d["value"])
    if kind == "exponential":
        _check_keys(d, ("kind", "mean"), "Exponential")
        return Exponential(d["mean"])
    if kind == "uniform":
        _check_keys(d, ("kind", "low", "high"), "Uniform")
        return Uniform(d["low"], d["high"])
    raise ValueError(f"unknown sojourn kind {kind!r}")


def signal_to_dict(sig: EnvironmentSignal) -> dict:
    if isinstance(sig, PeriodicSquare):
        return {
            "kind": "periodic_square",
            "T": sig.T,
            "phase_origin": sig.phase_origin,
            "initial_state": sig.initial_state,
        }
    if isinstance(sig, MarkovSwitch):
        return {"kind": "markov_switch", "rate": sig.rate, "initial_state": sig.initial_state}
    if isinstance(sig, RenewalSwitch):
        return {
            "kind": "renewal_switch",
            "sojourn_minus": _sojourn_to_dict(sig.sojourn_minus),
            "sojourn_plus": _sojourn_to_dict(sig.sojourn_plus),
            "initial_state": sig.initial_state,
        }
    raise TypeError(f"unknown signal {sig!r}")


def signal_from_dict(d: dict) -> EnvironmentSignal:
    kind = d.get("kind")
    if kind == "periodic_square":
        _check_keys(d, ("kind", "T", "phase_origin", "initial_state"), "PeriodicSquare")
        return PeriodicSquare(
            T=d["T"],
            phase_origin=d.get("phase_origin", 0.0),
            initial_state=d.get("initial_state", 1),
        )
    if kind == "markov_switch":
        _check_keys(d, ("kind", "rate", "initial_state"), "MarkovSwitch")
        return MarkovSwitch(rate=d["rate"], initial_state=d.get("initial_state", 1))
    if kind == "renewal_switch":
        _check_keys(
            d, ("kind", "sojourn_minus", "sojourn_plus", "initial_state"), "RenewalSwitch"
        )
        return RenewalSwitch(
            sojourn_minus=_sojourn_from_dict(d["sojourn_minus"]),
            sojourn_plus=_sojourn_from_dict(d["sojourn_plus"]),
            initial_state=d.get("initial_state", 1),
        )
    raise ValueError(f"unknown signal kind {kind!r}")
