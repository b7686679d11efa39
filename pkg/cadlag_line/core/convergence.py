"""Monte Carlo probes of convergence in distribution X_n -> X in D[0,1].

Weak convergence of path laws is not testable directly; the experiments
compare the laws of finite-dimensional values and of continuous functionals
(running maximum, integral) of X_n with those of the limit, using the
two-sample Kolmogorov-Smirnov statistic (or the one-sample statistic against
a normal law when the limit law is known in closed form). Passing is a
necessary condition for convergence, not a proof of it.
"""
import csv
import io
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats

from ..utils.errors import ConfigError, DomainError
from ..utils.experiment_config import ConvergeConfig
from ..utils.project_config import SessionConfig
from ..utils.seeding import SeedKey, SeedLike, as_key
from .batch_worker import BatchSampler
from .checkpoint_manager import ExperimentCheckpoint
from .paths import PiecewisePath, evaluate, max_value, restrict
from .processes import ProcessSampler, SubstitutedSampler, index_descriptor, sampler_from_descriptor

logger = logging.getLogger(__name__)

# c(alpha) of the asymptotic Kolmogorov distribution at alpha = 0.01.
KS_C_99 = 1.628

# Stream labels below a replicate key.
SAMPLE_STREAM = 0
REFERENCE_STREAM = 1

FUNCTIONAL_KINDS = ("value_at", "running_max", "terminal", "increment", "integral")
_CALL = re.compile(r"^\s*(\w+)\s*(?:\(([^)]*)\))?\s*$")


@dataclass(frozen=True)
class FunctionalSpec:
    """A real-valued functional of a path on [0,1].

    value_at(t) and increment(s,t) are continuous at every path without a
    jump at s or t, the others at every path; the limits used here (Wiener
    processes under continuous or independent jump time changes) have fixed
    jump times with probability zero.
    """
    kind: str
    t: Optional[float] = None
    s: Optional[float] = None

    def __post_init__(self):
        if self.kind not in FUNCTIONAL_KINDS:
            raise ConfigError(f"Unknown functional {self.kind!r}; expected one of {FUNCTIONAL_KINDS}")
        if self.kind == "value_at" and self.t is None:
            raise ConfigError("value_at needs a time")
        if self.kind == "increment" and (self.s is None or self.t is None or not self.s < self.t):
            raise ConfigError("increment needs times s < t")

    @property
    def name(self) -> str:
        if self.kind == "value_at":
            return f"value_at({self.t!r})"
        if self.kind == "increment":
            return f"increment({self.s!r},{self.t!r})"
        return self.kind

    def __call__(self, path: PiecewisePath) -> float:
        if self.kind == "value_at":
            return float(evaluate(path, self.t))
        if self.kind == "terminal":
            return float(evaluate(path, 1.0))
        if self.kind == "increment":
            return float(evaluate(path, self.t) - evaluate(path, self.s))
        unit = restrict(path, 1.0)
        if self.kind == "running_max":
            return max_value(unit)
        widths = np.diff(unit.breakpoints)
        return float(np.sum((unit.values + 0.5 * unit.slopes * widths) * widths))


def parse_functional(text: str) -> FunctionalSpec:
    """'terminal', 'running_max', 'integral', 'value_at(0.5)' or 'increment(0.25,0.75)'."""
    match = _CALL.match(text or "")
    if not match:
        raise ConfigError(f"Cannot parse functional {text!r}")
    kind, args = match.group(1), match.group(2)
    try:
        numbers = [float(a) for a in args.split(",")] if args else []
    except ValueError as e:
        raise ConfigError(f"Bad arguments in functional {text!r}") from e
    if kind == "value_at" and len(numbers) == 1:
        return FunctionalSpec(kind, t=numbers[0])
    if kind == "increment" and len(numbers) == 2:
        return FunctionalSpec(kind, s=numbers[0], t=numbers[1])
    if kind in ("running_max", "terminal", "integral") and not numbers:
        return FunctionalSpec(kind)
    raise ConfigError(f"Wrong number of arguments in functional {text!r}")


# Sampling

def sample_functionals(sampler: ProcessSampler, functionals: Sequence[FunctionalSpec], m: int,
                       seed: SeedLike, session: Optional[SessionConfig] = None) -> Dict[str, np.ndarray]:
    """m independent paths, each probed by every functional; sample i uses stream seed/i."""
    if m < 1:
        raise DomainError(f"Sample count must be at least 1, got {m}")
    key = as_key(seed)

    def draw(i: int):
        path = sampler.sample(key.spawn(i))
        return [f(path) for f in functionals]

    rows = BatchSampler(session).map(draw, m, label=sampler.family)
    table = np.asarray(rows, dtype=float).reshape(m, len(functionals))
    return {f.name: table[:, c].copy() for c, f in enumerate(functionals)}


def sample_functional(sampler: ProcessSampler, functional: FunctionalSpec, m: int, seed: SeedLike,
                      session: Optional[SessionConfig] = None) -> np.ndarray:
    return sample_functionals(sampler, [functional], m, seed, session)[functional.name]


# Statistics

def _sample(u, name: str) -> np.ndarray:
    arr = np.asarray(u, dtype=float).reshape(-1)
    if arr.size == 0:
        raise DomainError(f"Sample {name} is empty")
    return arr


def ks_two_sample(u, v) -> float:
    """sup_x |F_u(x) - F_v(x)| over the pooled sample points."""
    a = np.sort(_sample(u, "u"))
    b = np.sort(_sample(v, "v"))
    pooled = np.concatenate((a, b))
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_against_normal(u, mean: float, variance: float) -> float:
    """sup_x |F_u(x) - Phi((x - mean) / sd)|, scanning both sides of every step."""
    if not (variance > 0):
        raise DomainError(f"Variance must be positive, got {variance}")
    x = np.sort(_sample(u, "u"))
    m = x.size
    cdf = special.ndtr((x - mean) / math.sqrt(variance))
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - cdf), np.max(cdf - (i - 1) / m)))


def ks_critical_99(m1: int, m2: Optional[int] = None) -> float:
    """Asymptotic 99% critical value; one-sample when m2 is None."""
    if m2 is None:
        return KS_C_99 / math.sqrt(m1)
    return KS_C_99 * math.sqrt((m1 + m2) / (m1 * m2))


def wasserstein_two_sample(u, v) -> float:
    return float(stats.wasserstein_distance(_sample(u, "u"), _sample(v, "v")))


def _normal_primitive(z: np.ndarray) -> np.ndarray:
    """Antiderivative of Phi in standard units: z Phi(z) + phi(z)."""
    return z * special.ndtr(z) + np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def wasserstein_against_normal(u, mean: float, variance: float) -> float:
    """Exact integral of |F_u - Phi_{mean,variance}| over the real line."""
    if not (variance > 0):
        raise DomainError(f"Variance must be positive, got {variance}")
    sd = math.sqrt(variance)
    z = (np.sort(_sample(u, "u")) - mean) / sd
    m = z.size
    # Tails: F_u = 0 below the first point, 1 above the last.
    total = _normal_primitive(z[0]) + (_normal_primitive(-z[-1]))
    if m > 1:
        a, b = z[:-1], z[1:]
        level = np.arange(1, m) / m
        cross = np.clip(special.ndtri(level), a, b)
        below = level * (cross - a) - (_normal_primitive(cross) - _normal_primitive(a))
        above = (_normal_primitive(b) - _normal_primitive(cross)) - level * (b - cross)
        total = total + np.sum(below + above)
    return float(total * sd)


# Reports

@dataclass
class ConvergenceRow:
    n: int
    functional: str
    statistic: float
    critical_99: float
    passed: bool
    reference: str
    w1: float
    samples: int
    seed: int
    sample_mean: float
    sample_variance: float
    target_mean: Optional[float] = None
    target_variance: Optional[float] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ConvergenceRow":
        return cls(**data)


@dataclass
class ConvergenceReport:
    rows: List[ConvergenceRow]
    seed: int
    fingerprint: str
    preset: str = ""
    summary: Dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "seed": self.seed,
            "fingerprint": self.fingerprint,
            "rows": [asdict(r) for r in self.rows],
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["n", "functional", "statistic", "critical_99", "pass"])
        for r in self.rows:
            writer.writerow([r.n, r.functional, repr(r.statistic), repr(r.critical_99),
                             "true" if r.passed else "false"])
        return buffer.getvalue()

    def plot_csv(self) -> str:
        """Statistic against n on log-log axes; empty log column for a zero statistic."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["functional", "n", "log10_n", "statistic", "log10_statistic"])
        for r in sorted(self.rows, key=lambda r: (r.functional, r.n)):
            log_stat = repr(math.log10(r.statistic)) if r.statistic > 0 else ""
            writer.writerow([r.functional, r.n, repr(math.log10(r.n)), repr(r.statistic), log_stat])
        return buffer.getvalue()


def build_sampler(config: ConvergeConfig, n: int) -> ProcessSampler:
    outer = sampler_from_descriptor(index_descriptor(config.outer, n))
    if config.inner is None:
        return outer
    inner = sampler_from_descriptor(index_descriptor(config.inner, n))
    return SubstitutedSampler(outer, inner)


def _row(n: int, functional: str, values: np.ndarray, config: ConvergeConfig, seed: int,
         reference: Optional[np.ndarray]) -> ConvergenceRow:
    m = values.size
    target = config.normal_targets.get(functional)
    if target is not None:
        mean, variance = float(target["mean"]), float(target["variance"])
        statistic = ks_against_normal(values, mean, variance)
        critical = ks_critical_99(m)
        w1 = wasserstein_against_normal(values, mean, variance)
        kind = "normal"
    else:
        mean = variance = None
        statistic = ks_two_sample(values, reference)
        critical = ks_critical_99(m, reference.size)
        w1 = wasserstein_two_sample(values, reference)
        kind = "sampler"
    return ConvergenceRow(
        n=int(n), functional=functional, statistic=statistic, critical_99=critical,
        passed=bool(statistic <= critical), reference=kind, w1=w1, samples=int(m), seed=int(seed),
        sample_mean=float(np.mean(values)),
        sample_variance=float(np.var(values, ddof=1)) if m > 1 else 0.0,
        target_mean=mean, target_variance=variance,
    )


def _replicate_rows(config: ConvergeConfig, seed: int, replicate: int,
                    session: Optional[SessionConfig],
                    done: Optional[List[ConvergenceRow]] = None,
                    checkpoint: Optional[ExperimentCheckpoint] = None) -> List[ConvergenceRow]:
    functionals = [parse_functional(f) for f in config.functionals]
    key = SeedKey(seed).spawn(replicate)
    rows = list(done or [])
    finished = {r.n for r in rows}

    sampled = [f for f in functionals if f.name not in config.normal_targets]
    reference: Dict[str, np.ndarray] = {}
    if sampled and any(n not in finished for n in config.n_values):
        ref_sampler = sampler_from_descriptor(config.reference)
        reference = sample_functionals(ref_sampler, sampled, config.samples,
                                       key.spawn(REFERENCE_STREAM), session)

    for idx, n in enumerate(config.n_values):
        if n in finished:
            continue
        sampler = build_sampler(config, n)
        values = sample_functionals(sampler, functionals, config.samples,
                                    key.spawn(SAMPLE_STREAM, idx), session)
        for f in functionals:
            rows.append(_row(n, f.name, values[f.name], config, seed, reference.get(f.name)))
        finished.add(n)
        logger.info("CONVERGENCE_ROW: replicate=%d n=%d done", replicate, n)
        if checkpoint is not None:
            checkpoint.save_rows([asdict(r) for r in rows])
    order = {n: i for i, n in enumerate(config.n_values)}
    names = [f.name for f in functionals]
    rows.sort(key=lambda r: (order[r.n], names.index(r.functional)))
    return rows


def replicate_statistics(config: ConvergeConfig, seed: int, replicates: int,
                         session: Optional[SessionConfig] = None,
                         first: Optional[List[ConvergenceRow]] = None) -> Dict[Tuple[int, str], List[float]]:
    """Statistic per (n, functional) for `replicates` independent replicate streams."""
    collected: Dict[Tuple[int, str], List[float]] = {}
    for r in range(replicates):
        rows = first if (r == 0 and first is not None) else _replicate_rows(config, seed, r, session)
        for row in rows:
            collected.setdefault((row.n, row.functional), []).append(row.statistic)
    return collected


def _summary(config: ConvergeConfig, rows: List[ConvergenceRow],
             replicated: Optional[Dict[Tuple[int, str], List[float]]]) -> Dict[str, dict]:
    summary = {}
    for name in [parse_functional(f).name for f in config.functionals]:
        series = [r.statistic for r in rows if r.functional == name]
        entry = {
            "n_values": list(config.n_values),
            "statistics": series,
            "non_increasing": bool(series[-1] <= series[0]),
        }
        if replicated is not None:
            medians = [float(np.median(replicated[(n, name)])) for n in config.n_values]
            entry["medians"] = medians
            entry["median_decreasing"] = bool(medians[-1] < medians[0])
        summary[name] = entry
    return summary


def convergence_experiment(config: ConvergeConfig, seed: int, session: Optional[SessionConfig] = None,
                           checkpoint_path: str = "") -> ConvergenceReport:
    """Rows (n, functional, statistic, ...) in the order of config.n_values and config.functionals.

    With `checkpoint_path`, finished rows are stored after every n and an
    interrupted run with the same config and seed resumes from them.
    """
    config.validate()
    fingerprint = config.fingerprint()
    run_key = f"{fingerprint}:{seed}"
    checkpoint = ExperimentCheckpoint(checkpoint_path, run_key) if checkpoint_path else None
    done = None
    if checkpoint is not None:
        stored = checkpoint.load_rows()
        if stored:
            done = [ConvergenceRow.from_dict(r) for r in stored]
    rows = _replicate_rows(config, seed, 0, session, done, checkpoint)
    replicated = None
    if config.replicates > 1:
        replicated = replicate_statistics(config, seed, config.replicates, session, first=rows)
    report = ConvergenceReport(rows=rows, seed=int(seed), fingerprint=fingerprint, preset=config.preset,
                               summary=_summary(config, rows, replicated))
    if checkpoint is not None:
        checkpoint.clear()
    return report


# Presets

def _linear(a: float) -> dict:
    return {"family": "linear", "a": a}


def _compound(jump_family: str) -> dict:
    return {"family": "compound_poisson", "n": 1,
            "jumps": {"family": jump_family, "loc": 0.0, "scale": 1.0}, "rate": 1.0, "horizon": 1.0}


def _wiener() -> dict:
    return {"family": "donsker_wiener", "steps_per_unit": 2 ** 14, "horizon": 1.0}


def _substitute(outer: dict, inner: dict) -> dict:
    return {"family": "substitute", "outer": outer, "inner": inner}


PRESETS = ("identity", "corollary1", "corollary2", "theorem1_a", "theorem1_b")


def preset_config(name: str, a: Optional[float] = None, n_values: Optional[List[int]] = None,
                  samples: Optional[int] = None, replicates: int = 1) -> ConvergeConfig:
    """Ready-made experiments.

    identity   - outer and inner identity; every statistic is 0.
    corollary1 - compound Poisson claims with +-1/sqrt(n) sizes under a random
                 integrated-step contract process; limit W o Lambda.
    corollary2 - the same claims under pi(n a t)/n contracts; limit N(0, a t).
    theorem1_a - normal claim sizes, class Pi inner process with endpoint 1.
    theorem1_b - random-walk outer refined with n, class B jump inner process.
    """
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset {name!r}; expected one of {PRESETS}")
    a = 1.0 if a is None else a
    if not (a > 0):
        raise ConfigError(f"Preset parameter a must be positive, got {a}")
    if name == "identity":
        outer, inner = {"family": "identity", "horizon": 1.0}, _linear(1.0)
        config = ConvergeConfig(n_values=n_values or [1], outer=outer, inner=inner,
                                functionals=["terminal", "running_max", "integral"],
                                reference=_substitute(outer, inner))
    elif name == "corollary1":
        inner = {"family": "integrated_step", "a": a, "pieces": 8, "cv": 0.5, "endpoint": None}
        config = ConvergeConfig(n_values=n_values or [100, 1000, 10000], outer=_compound("rademacher"),
                                inner=inner,
                                functionals=["terminal", "value_at(0.25)", "value_at(0.5)", "running_max"],
                                reference=_substitute(_wiener(), inner))
    elif name == "corollary2":
        inner = {"family": "scaled_poisson", "a": a, "n": 1, "normalize": True}
        targets = {
            "terminal": {"mean": 0.0, "variance": a},
            "value_at(0.25)": {"mean": 0.0, "variance": 0.25 * a},
            "value_at(0.5)": {"mean": 0.0, "variance": 0.5 * a},
        }
        config = ConvergeConfig(n_values=n_values or [100, 1000, 10000], outer=_compound("rademacher"),
                                inner=inner, functionals=list(targets), normal_targets=targets)
    elif name == "theorem1_a":
        inner = {"family": "integrated_step", "a": a, "pieces": 8, "cv": 0.5, "endpoint": a}
        config = ConvergeConfig(n_values=n_values or [100, 1000, 10000], outer=_compound("normal"),
                                inner=inner, functionals=["terminal", "running_max", "integral"],
                                reference=_substitute(_wiener(), inner))
    else:
        inner = {"family": "subordinator_step", "rate": 4.0, "mean_jump": 0.25 * a}
        config = ConvergeConfig(n_values=n_values or [4, 64, 1024], outer=_wiener(), inner=inner,
                                functionals=["terminal", "running_max", "value_at(0.5)"],
                                reference=_substitute(_wiener(), inner))
    if samples is not None:
        config.samples = samples
    config.replicates = replicates
    config.preset = name
    config.validate()
    return config
