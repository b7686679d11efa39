"""Seeded samplers for the random processes of the time-substitution model.

Every sampler is an immutable descriptor; `sample(seed)` is a pure function
of the seed. Seeds are `SeedKey`s (or plain integers) and a sampler that needs
several independent draws spawns a child stream per role, so the inner time
change and the outer process of a substituted sampler never share random
numbers.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..utils.errors import CompositionDomainError, ConfigError, InvariantViolation, ValidationError
from ..utils.seeding import ROLE_INNER, ROLE_JUMPS, ROLE_OUTER, SeedLike, as_key
from .paths import (CLASS_B, CLASS_PI, MIN_BREAKPOINT_GAP, PiecewisePath, TimeChange, canonicalize,
                    compose, constant_path, from_samples, identity_path, linear_path, step_path,
                    time_change)

logger = logging.getLogger(__name__)

DEFAULT_STEPS_PER_UNIT = 2 ** 14

JUMP_FAMILIES = ("rademacher", "centered_uniform", "normal")


def _positive(name: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0 or not math.isfinite(value):
        raise ConfigError(f"'{name}' must be a positive number, got {value!r}")
    return float(value)


def _non_negative(name: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value >= 0 or not math.isfinite(value):
        raise ConfigError(f"'{name}' must be a non-negative number, got {value!r}")
    return float(value)


def _count(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"'{name}' must be a positive integer, got {value!r}")
    return int(value)


# Arrival streams

def _arrival_times(rng: np.random.Generator, rate: float, horizon: float) -> np.ndarray:
    """Partial sums of Exponential(rate) inter-arrivals that fall in [0, horizon]."""
    expected = rate * horizon
    block = int(expected + 6.0 * math.sqrt(expected) + 16)
    times = np.cumsum(rng.exponential(1.0 / rate, size=block))
    while times[-1] <= horizon:
        more = times[-1] + np.cumsum(rng.exponential(1.0 / rate, size=block))
        times = np.concatenate((times, more))
    return times[:np.searchsorted(times, horizon, side="right")]


def _jump_path(times: np.ndarray, sizes: np.ndarray, horizon: float) -> PiecewisePath:
    """Piecewise-constant path starting at 0 with the given arrival times and jump sizes."""
    inside = times < horizon
    t_in = times[inside]
    bp = np.concatenate(([0.0], t_in, [horizon]))
    if np.any(np.diff(bp) < MIN_BREAKPOINT_GAP):
        return canonicalize(step_path(list(zip(times.tolist(), sizes.tolist())), horizon))
    vals = np.concatenate(([0.0], np.cumsum(sizes[inside])))
    terminal = vals[-1] + float(sizes[~inside].sum())
    return PiecewisePath(horizon, bp, vals, np.zeros(len(vals)), terminal)


@dataclass(frozen=True)
class JumpDistribution:
    """Law of the claim sizes xi_in of a portfolio of size n.

    A draw is loc / n + scale * Z / sqrt(n) with Z standardized (mean 0,
    variance 1) from `family`, so the sum of n draws has mean loc and
    variance scale^2 in the limit.
    """
    family: str = "rademacher"
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in JUMP_FAMILIES:
            raise ConfigError(f"Unknown jump family {self.family!r}; expected one of {JUMP_FAMILIES}")
        if isinstance(self.loc, bool) or not isinstance(self.loc, (int, float)) or not math.isfinite(self.loc):
            raise ConfigError(f"'loc' must be a finite number, got {self.loc!r}")
        _positive("scale", self.scale)

    def standardized(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family == "rademacher":
            return rng.integers(0, 2, size=size) * 2.0 - 1.0
        if self.family == "centered_uniform":
            return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=size)
        return rng.standard_normal(size=size)

    def draw(self, rng: np.random.Generator, size: int, n: int) -> np.ndarray:
        return self.loc / n + self.scale * self.standardized(rng, size) / math.sqrt(n)

    def mean(self, n: int) -> float:
        return self.loc / n

    def second_moment(self, n: int) -> float:
        return (self.loc / n) ** 2 + self.scale ** 2 / n

    def descriptor(self) -> dict:
        return {"family": self.family, "loc": self.loc, "scale": self.scale}

    @classmethod
    def from_descriptor(cls, data: dict) -> "JumpDistribution":
        if not isinstance(data, dict):
            raise ConfigError("Jump distribution must be a JSON object")
        unknown = sorted(set(data) - {"family", "loc", "scale"})
        if unknown:
            raise ConfigError(f"Unknown jump distribution fields: {', '.join(unknown)}")
        return cls(**data)


# Samplers

class ProcessSampler:
    """A distribution over paths, realized by `sample(seed)`."""

    family = ""
    horizon = 1.0

    def sample(self, seed: SeedLike, horizon: Optional[float] = None) -> PiecewisePath:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def descriptor(self) -> dict:
        return {"family": self.family, **self.params()}

    def _horizon(self, horizon: Optional[float]) -> float:
        return self.horizon if horizon is None else _positive("horizon", horizon)


@dataclass(frozen=True)
class IdentitySampler(ProcessSampler):
    """The deterministic path u -> u."""
    horizon: float = 1.0
    family = "identity"

    def sample(self, seed: SeedLike, horizon: Optional[float] = None) -> PiecewisePath:
        return identity_path(self._horizon(horizon))

    def params(self) -> dict:
        return {"horizon": self.horizon}


@dataclass(frozen=True)
class PoissonSampler(ProcessSampler):
    rate: float = 1.0
    horizon: float = 1.0
    family = "poisson"

    def __post_init__(self):
        _positive("rate", self.rate)
        _positive("horizon", self.horizon)

    def sample(self, seed: SeedLike, horizon: Optional[float] = None) -> PiecewisePath:
        horizon = self._horizon(horizon)
        times = _arrival_times(as_key(seed).generator(), self.rate, horizon)
        return _jump_path(times, np.ones(len(times)), horizon)

    def params(self) -> dict:
        return {"rate": self.rate, "horizon": self.horizon}


@dataclass(frozen=True)
class CompoundPoissonSampler(ProcessSampler):
    """X'_n(u) = sum of xi_in over the arrivals of a Poisson process of intensity n * rate."""
    n: int = 1
    jumps: JumpDistribution = field(default_factory=JumpDistribution)
    rate: float = 1.0
    horizon: float = 1.0
    family = "compound_poisson"

    def __post_init__(self):
        _count("n", self.n)
        _positive("rate", self.rate)
        _positive("horizon", self.horizon)

    def arrivals(self, seed: SeedLike, horizon: Optional[float] = None):
        """Arrival times in [0, horizon] and the claim size drawn at each."""
        horizon = self._horizon(horizon)
        key = as_key(seed)
        times = _arrival_times(key.generator(), self.n * self.rate, horizon)
        sizes = self.jumps.draw(key.spawn(ROLE_JUMPS).generator(), len(times), self.n)
        return times, sizes

    def sample(self, seed: SeedLike, horizon: Optional[float] = None) -> PiecewisePath:
        horizon = self._horizon(horizon)
        times, sizes = self.arrivals(seed, horizon)
        return _jump_path(times, sizes, horizon)

    def mean(self, t: float) -> float:
        return self.n * self.rate * t * self.jumps.mean(self.n)

    def variance(self, t: float) -> float:
        return self.n * self.rate * t * self.jumps.second_moment(self.n)

    def params(self) -> dict:
        return {"n": self.n, "jumps": self.jumps.descriptor(), "rate": self.rate, "horizon": self.horizon}


@dataclass(frozen=True)
class DonskerWienerSampler(ProcessSampler):
    """Linear interpolation of a scaled +-1 walk with `steps_per_unit` steps per unit time."""
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT
    horizon: float = 1.0
    family = "donsker_wiener"

    def __post_init__(self):
        _count("steps_per_unit", self.steps_per_unit)
        _positive("horizon", self.horizon)

    def sample(self, seed: SeedLike, horizon: Optional[float] = None) -> PiecewisePath:
        horizon = self._horizon(horizon)
        steps = max(1, int(math.ceil(self.steps_per_unit * horizon)))
        return donsker_wiener(steps, horizon, seed)

    def params(self) -> dict:
        return {"steps_per_unit": self.steps_per_unit, "horizon": self.horizon}


TIME_CHANGE_PARAMS = {
    "linear": {"a": 1.0},
    "integrated_step": {"a": 1.0, "pieces": 8, "cv": 0.5, "endpoint": None},
    "subordinator_step": {"rate": 4.0, "mean_jump": 0.25},
    "scaled_poisson": {"a": 1.0, "n": 1, "normalize": True},
}


@dataclass(frozen=True)
class TimeChangeSampler(ProcessSampler):
    """Random non-decreasing inner process started at 0.

    Families:
      linear            - a * t (deterministic).
      integrated_step   - integral of a step intensity with `pieces` Gamma
                          levels of mean a and coefficient of variation cv;
                          continuous and strictly increasing (class Pi). With
                          `endpoint` set, the intensities are rescaled so the
                          value at the horizon is exactly `endpoint`.
      subordinator_step - pure-jump path, Poisson(rate) arrivals with
                          exponential jumps of mean `mean_jump` (class B).
      scaled_poisson    - pi(n a t) / n, or pi(n a t) when normalize is false
                          (class B).
    """
    kind: str = "linear"
    settings: tuple = ()
    horizon: float = 1.0

    def __post_init__(self):
        if self.kind not in TIME_CHANGE_PARAMS:
            raise ConfigError(f"Unknown time-change family {self.kind!r}")
        _positive("horizon", self.horizon)
        given = dict(self.settings)
        unknown = sorted(set(given) - set(TIME_CHANGE_PARAMS[self.kind]))
        if unknown:
            raise ConfigError(f"Unknown parameters for {self.kind}: {', '.join(unknown)}")
        merged = {**TIME_CHANGE_PARAMS[self.kind], **given}
        object.__setattr__(self, "settings", tuple(sorted(merged.items())))
        self._validate(merged)

    @classmethod
    def of(cls, kind: str, horizon: float = 1.0, **params) -> "TimeChangeSampler":
        return cls(kind, tuple(params.items()), horizon)

    @property
    def family(self) -> str:
        return self.kind

    @property
    def values(self) -> dict:
        return dict(self.settings)

    def _validate(self, p: dict):
        if self.kind in ("linear", "integrated_step", "scaled_poisson"):
            _non_negative("a", p["a"])
        if self.kind == "integrated_step":
            _count("pieces", p["pieces"])
            _non_negative("cv", p["cv"])
            if p["endpoint"] is not None:
                _positive("endpoint", p["endpoint"])
            if p["a"] == 0 and p["endpoint"] is not None:
                raise ConfigError("An integrated step with zero intensity cannot reach a positive endpoint")
        if self.kind == "subordinator_step":
            _positive("rate", p["rate"])
            _positive("mean_jump", p["mean_jump"])
        if self.kind == "scaled_poisson":
            _count("n", p["n"])
            if not isinstance(p["normalize"], bool):
                raise ConfigError("'normalize' must be true or false")

    def sample_time_change(self, seed: SeedLike) -> TimeChange:
        p = self.values
        horizon = self.horizon
        if self.kind == "linear":
            return time_change_linear(p["a"], horizon)
        rng = as_key(seed).generator()
        if self.kind == "integrated_step":
            return self._integrated_step(rng, p)
        if self.kind == "subordinator_step":
            times = _arrival_times(rng, p["rate"], horizon)
            sizes = rng.exponential(p["mean_jump"], size=len(times))
            return TimeChange(_jump_path(times, sizes, horizon), CLASS_B)
        n, a = p["n"], p["a"]
        if a == 0:
            return TimeChange(constant_path(0.0, horizon), CLASS_B)
        times = _arrival_times(rng, n * a, horizon)
        unit = 1.0 / n if p["normalize"] else 1.0
        return TimeChange(_jump_path(times, np.full(len(times), unit), horizon), CLASS_B)

    def _integrated_step(self, rng: np.random.Generator, p: dict) -> TimeChange:
        a, pieces, cv, endpoint = p["a"], p["pieces"], p["cv"], p["endpoint"]
        horizon = self.horizon
        if cv == 0 or a == 0:
            level = a if endpoint is None else endpoint / horizon
            return time_change_linear(level, horizon)
        shape = 1.0 / (cv * cv)
        intensity = rng.gamma(shape, a / shape, size=pieces)
        width = horizon / pieces
        if endpoint is not None:
            intensity = intensity * (endpoint / (intensity.sum() * width))
        nodes = np.concatenate(([0.0], np.cumsum(intensity * width)))
        if endpoint is not None:
            nodes[-1] = endpoint
        times = np.arange(pieces + 1) * width
        times[-1] = horizon
        return time_change(from_samples(times, nodes))

    def sample(self, seed: SeedLike, horizon: Optional[float] = None) -> PiecewisePath:
        if horizon is not None and horizon != self.horizon:
            raise ConfigError("Time-change samplers have a fixed horizon")
        return self.sample_time_change(seed).path

    def params(self) -> dict:
        return {**self.values, "horizon": self.horizon}


@dataclass(frozen=True)
class SubstitutedSampler(ProcessSampler):
    """X(t) = X'(Lambda(t)) with X' and Lambda drawn from independent streams.

    The inner time change is drawn first; the outer path is then drawn on
    [0, max(outer horizon, Lambda(horizon))] so the composition is always
    defined.
    """
    outer: ProcessSampler
    inner: TimeChangeSampler
    family = "substitute"

    def __post_init__(self):
        if not isinstance(self.inner, TimeChangeSampler):
            raise ConfigError("The inner sampler of a substitution must produce time changes")

    @property
    def horizon(self) -> float:
        return self.inner.horizon

    def draw(self, seed: SeedLike):
        """The pair (outer path, time change) behind one sample."""
        key = as_key(seed)
        lam = self.inner.sample_time_change(key.spawn(ROLE_INNER))
        if not lam.starts_at_origin:
            raise ValidationError("Inner process must start at 0")
        outer_horizon = max(self.outer.horizon, lam.max_value)
        outer_path = self.outer.sample(key.spawn(ROLE_OUTER), horizon=outer_horizon)
        return outer_path, lam

    def sample(self, seed: SeedLike, horizon: Optional[float] = None) -> PiecewisePath:
        if horizon is not None and horizon != self.horizon:
            raise ConfigError("Substituted samplers live on the horizon of their time change")
        outer_path, lam = self.draw(seed)
        try:
            return compose(outer_path, lam)
        except CompositionDomainError as e:
            raise InvariantViolation(f"{self.outer.family} sampler ignored the requested horizon") from e

    def params(self) -> dict:
        return {"outer": self.outer.descriptor(), "inner": self.inner.descriptor()}


# Operation-style entry points

def poisson_path(rate: float, horizon: float, seed: SeedLike) -> PiecewisePath:
    return PoissonSampler(rate, horizon).sample(seed)


def compound_poisson_outer(n: int, jumps: JumpDistribution, horizon: float, seed: SeedLike) -> PiecewisePath:
    return CompoundPoissonSampler(n, jumps, horizon=horizon).sample(seed)


def donsker_wiener(steps: int, horizon: float, seed: SeedLike) -> PiecewisePath:
    """Random walk S_i * sqrt(horizon / steps) at times i * horizon / steps, linearly interpolated."""
    steps = _count("steps", steps)
    horizon = _positive("horizon", horizon)
    rng = as_key(seed).generator()
    h = horizon / steps
    signs = rng.integers(0, 2, size=steps) * 2.0 - 1.0
    walk = np.concatenate(([0.0], np.cumsum(signs))) * math.sqrt(h)
    times = np.arange(steps + 1) * h
    times[-1] = horizon
    return from_samples(times, walk)


def time_change_linear(a: float, horizon: float = 1.0) -> TimeChange:
    a = _non_negative("a", a)
    if a == 0:
        return TimeChange(constant_path(0.0, horizon), CLASS_B)
    return TimeChange(linear_path(a, horizon), CLASS_PI, a * horizon)


def time_change_random(family: str, params: dict, seed: SeedLike) -> TimeChange:
    return TimeChangeSampler.of(family, **params).sample_time_change(seed)


def substitute(outer: ProcessSampler, inner: TimeChangeSampler) -> SubstitutedSampler:
    return SubstitutedSampler(outer, inner)


def insurance_loss_sampler(n: int, jumps: JumpDistribution, contracts: TimeChangeSampler) -> SubstitutedSampler:
    """Aggregate claims sum_{i <= pi(Lambda_n(t))} xi_in driven by a contract-count process."""
    return substitute(CompoundPoissonSampler(n, jumps), contracts)


# Descriptors

def _strict(data: dict, allowed: set, family: str):
    unknown = sorted(set(data) - allowed - {"family"})
    if unknown:
        raise ConfigError(f"Unknown parameters for {family}: {', '.join(unknown)}")


def sampler_from_descriptor(data) -> ProcessSampler:
    """Rebuild a sampler from the dict produced by `descriptor()`."""
    if not isinstance(data, dict) or "family" not in data:
        raise ConfigError("Sampler descriptor must be an object with a 'family' field")
    family = data["family"]
    body = {k: v for k, v in data.items() if k != "family"}
    try:
        if family == "identity":
            _strict(data, {"horizon"}, family)
            return IdentitySampler(**body)
        if family == "poisson":
            _strict(data, {"rate", "horizon"}, family)
            return PoissonSampler(**body)
        if family == "compound_poisson":
            _strict(data, {"n", "jumps", "rate", "horizon"}, family)
            if "jumps" in body:
                body["jumps"] = JumpDistribution.from_descriptor(body["jumps"])
            return CompoundPoissonSampler(**body)
        if family == "donsker_wiener":
            _strict(data, {"steps_per_unit", "horizon"}, family)
            return DonskerWienerSampler(**body)
        if family == "substitute":
            _strict(data, {"outer", "inner"}, family)
            if "outer" not in body or "inner" not in body:
                raise ConfigError("A substitution needs both 'outer' and 'inner'")
            inner = sampler_from_descriptor(body["inner"])
            return SubstitutedSampler(sampler_from_descriptor(body["outer"]), inner)
        if family in TIME_CHANGE_PARAMS:
            horizon = body.pop("horizon", 1.0)
            return TimeChangeSampler.of(family, horizon=horizon, **body)
    except TypeError as e:
        raise ConfigError(f"Bad parameters for {family}: {e}") from e
    raise ConfigError(f"Unknown sampler family {family!r}")


def index_descriptor(data: dict, n: int) -> dict:
    """Copy of a descriptor with the sequence index n plugged into every indexed family.

    compound_poisson and scaled_poisson take n as their portfolio size,
    donsker_wiener takes it as its number of steps per unit time.
    """
    out = dict(data)
    family = out.get("family")
    if family in ("compound_poisson", "scaled_poisson"):
        out["n"] = int(n)
    elif family == "donsker_wiener":
        out["steps_per_unit"] = int(n)
    elif family == "substitute":
        out["outer"] = index_descriptor(out["outer"], n)
        out["inner"] = index_descriptor(out["inner"], n)
    return out
