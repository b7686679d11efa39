"""Strict experiment configurations for the command line.

Unlike the session config, which falls back to defaults, experiment configs
are validated in full before any computation starts: unknown fields, wrong
types and out-of-range values raise ConfigError.
"""
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional

from .errors import ConfigError

logger = logging.getLogger(__name__)

COUNTEREXAMPLE_SELECTORS = ("1", "2", "lemma1", "lemma2")
EXAMPLE2_VARIANTS = ("repaired", "as_stated")


def _int(name, value, minimum=0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"'{name}' must be an integer >= {minimum}, got {value!r}")
    return value


def _real(name, value, lo=None, hi=None, lo_open=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"'{name}' must be a finite number, got {value!r}")
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise ConfigError(f"'{name}' out of range: {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(f"'{name}' out of range: {value!r}")
    return float(value)


def _descriptor(name, value, required=True) -> Optional[dict]:
    if value is None and not required:
        return None
    if not isinstance(value, dict) or "family" not in value:
        raise ConfigError(f"'{name}' must be a sampler descriptor object with a 'family' field")
    return value


class ExperimentConfig:
    """Shared strict loading and fingerprinting."""

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError(f"{cls.__name__} must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown fields in {cls.__name__}: {', '.join(unknown)}")
        try:
            config = cls(**data)
        except TypeError as e:
            raise ConfigError(f"Incomplete {cls.__name__}: {e}") from e
        config.validate()
        return config

    @classmethod
    def load(cls, filepath: str):
        try:
            with open(filepath, "r") as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(f"Cannot read config {filepath}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed config {filepath}: {e}") from e
        return cls.from_dict(data)

    def validate(self):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form; equal configs share a fingerprint."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def require_seed(self, override: Optional[int]) -> int:
        """The effective seed: the command-line value wins over the config value."""
        seed = override if override is not None else getattr(self, "seed", None)
        if seed is None:
            raise ConfigError("A seed is required: pass --seed or set 'seed' in the config")
        return _int("seed", seed)


@dataclass
class SimulateConfig(ExperimentConfig):
    """Draw `samples` paths from a sampler and export them or functionals of them.

    Either `sampler` is given, or `outer` (optionally with `inner`, meaning
    the substitution outer o inner). `n` plugs a sequence index into indexed
    families.
    """
    samples: int = 0
    seed: Optional[int] = None
    sampler: Optional[dict] = None
    outer: Optional[dict] = None
    inner: Optional[dict] = None
    n: Optional[int] = None
    functionals: List[str] = field(default_factory=list)
    mesh: Optional[int] = None

    def validate(self):
        _int("samples", self.samples)
        if self.seed is not None:
            _int("seed", self.seed)
        if self.sampler is not None and (self.outer is not None or self.inner is not None):
            raise ConfigError("Give either 'sampler' or 'outer'/'inner', not both")
        if self.sampler is None and self.outer is None:
            raise ConfigError("No sampler configured: set 'sampler' or 'outer'")
        _descriptor("sampler", self.sampler, required=False)
        _descriptor("outer", self.outer, required=False)
        _descriptor("inner", self.inner, required=False)
        if self.n is not None:
            _int("n", self.n, minimum=1)
        if not isinstance(self.functionals, list) or not all(isinstance(f, str) for f in self.functionals):
            raise ConfigError("'functionals' must be a list of functional names")
        if self.mesh is not None:
            _int("mesh", self.mesh, minimum=1)

    def sampler_descriptor(self) -> dict:
        if self.sampler is not None:
            descriptor = self.sampler
        elif self.inner is not None:
            descriptor = {"family": "substitute", "outer": self.outer, "inner": self.inner}
        else:
            descriptor = self.outer
        if self.n is not None:
            from ..core.processes import index_descriptor
            descriptor = index_descriptor(descriptor, self.n)
        return descriptor


@dataclass
class ConvergeConfig(ExperimentConfig):
    """A convergence experiment X_n -> X probed through path functionals.

    For every n in `n_values` the sampler `outer o inner` is indexed by n.
    Functionals listed in `normal_targets` are compared with the normal law
    given there; all others with draws of the `reference` sampler.
    """
    n_values: List[int] = field(default_factory=list)
    outer: Optional[dict] = None
    inner: Optional[dict] = None
    functionals: List[str] = field(default_factory=lambda: ["terminal"])
    samples: int = 1000
    seed: Optional[int] = None
    reference: Optional[dict] = None
    normal_targets: Dict[str, Dict[str, float]] = field(default_factory=dict)
    replicates: int = 1
    preset: str = ""

    def validate(self):
        if not isinstance(self.n_values, list) or not self.n_values:
            raise ConfigError("'n_values' must be a non-empty list")
        for n in self.n_values:
            _int("n_values[]", n, minimum=1)
        _descriptor("outer", self.outer)
        _descriptor("inner", self.inner, required=False)
        _descriptor("reference", self.reference, required=False)
        if not isinstance(self.functionals, list) or not self.functionals:
            raise ConfigError("'functionals' must be a non-empty list")
        if not all(isinstance(f, str) for f in self.functionals):
            raise ConfigError("'functionals' must be a list of functional names")
        _int("samples", self.samples, minimum=1)
        _int("replicates", self.replicates, minimum=1)
        if self.seed is not None:
            _int("seed", self.seed)
        if not isinstance(self.normal_targets, dict):
            raise ConfigError("'normal_targets' must be an object")
        for name, target in self.normal_targets.items():
            if not isinstance(target, dict) or set(target) != {"mean", "variance"}:
                raise ConfigError(f"Normal target for {name} needs exactly 'mean' and 'variance'")
            _real(f"{name}.mean", target["mean"])
            _real(f"{name}.variance", target["variance"], lo=0.0, lo_open=True)
        uncovered = [f for f in self.functionals if f not in self.normal_targets]
        if uncovered and self.reference is None:
            raise ConfigError(f"No reference for functionals {uncovered}: add 'reference' or 'normal_targets'")
        if not isinstance(self.preset, str):
            raise ConfigError("'preset' must be a string")


@dataclass
class CounterexampleConfig(ExperimentConfig):
    which: str = "1"
    n_max: int = 10
    rate: float = 0.5
    seed: Optional[int] = None
    families: int = 1
    variant: str = "repaired"
    tol: float = 1e-9

    def validate(self):
        if self.which not in COUNTEREXAMPLE_SELECTORS:
            raise ConfigError(f"Unknown counterexample {self.which!r}; expected one of {COUNTEREXAMPLE_SELECTORS}")
        minimum = 2 if self.which == "1" else 1
        _int("n_max", self.n_max, minimum=minimum)
        _real("rate", self.rate, lo=0.0, hi=1.0)
        if self.rate == 1.0:
            raise ConfigError("'rate' must be below 1")
        _int("families", self.families, minimum=1)
        if self.seed is not None:
            _int("seed", self.seed)
        if self.variant not in EXAMPLE2_VARIANTS:
            raise ConfigError(f"Unknown variant {self.variant!r}; expected one of {EXAMPLE2_VARIANTS}")
        _real("tol", self.tol, lo=0.0, hi=1.0, lo_open=True)

    @property
    def stochastic(self) -> bool:
        return self.which in ("lemma1", "lemma2")
