"""Where the superposition operator (g, gamma) -> g o gamma is and is not continuous.

Two explicit sequences show that neither premise can be dropped:

* Example 1: outer steps g_n -> g and linear time changes gamma_n -> gamma,
  all continuous and strictly increasing, but gamma_n(1) oscillates around
  gamma(1) instead of sharing it. The compositions do not converge.
* Example 2: constant time changes gamma_n -> gamma and a discontinuous
  limit g. The compositions stay at distance 1 from g o gamma.

The lemma families are the positive side: seeded quadruples that satisfy
either the common-endpoint condition (strictly increasing continuous time
changes) or continuity of the outer limit, with every perturbation scaled by
rate**n, so the composed distance decays with n.

All distances are computed, never asserted. Evaluated directly, g o gamma in
Example 1 is 0 on [0,1) and 1 at t = 1, and the odd compositions are
identically 0 from n = 7 on; Example 2 as written converges, so a repaired
variant holds the outer sequence at its limit.
"""
import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from ..utils.errors import ConfigError, DomainError
from ..utils.experiment_config import CounterexampleConfig
from ..utils.project_config import SessionConfig
from ..utils.seeding import SeedKey, SeedLike, as_key
from .batch_worker import BatchSampler
from .metric import required_horizon, rho_infinity, skorokhod_distance
from .paths import (CLASS_B, CLASS_PI, PiecewisePath, TimeChange, compose, constant_path,
                    extend, from_samples, indicator_path, linear_path, step_path)

logger = logging.getLogger(__name__)

# Composed distance below which a lemma family counts as converged.
LEMMA_THRESHOLD = 1e-3
# Bracket width of the outer and inner columns of lemma reports.
LEMMA_DIAGNOSTIC_TOL = 1e-4


class Quadruple(NamedTuple):
    g_n: PiecewisePath
    gamma_n: TimeChange
    g: PiecewisePath
    gamma: TimeChange

    def composed(self):
        """(g_n o gamma_n, g o gamma)."""
        return compose(self.g_n, self.gamma_n), compose(self.g, self.gamma)


def alpha(n: int) -> float:
    """1 - 1/(2^n - 1) - 1/n^2, with alpha(1) = 0."""
    if n < 1:
        raise DomainError(f"alpha needs n >= 1, got {n}")
    if n == 1:
        return 0.0
    return 1.0 - 1.0 / (2.0 ** n - 1.0) - 1.0 / (n * n)


def _linear_change(slope: float) -> TimeChange:
    path = linear_path(slope, 1.0)
    return TimeChange(path, CLASS_PI, path.terminal)


def example1(n: int, horizon: float = 1.0) -> Quadruple:
    """g_n = 1_[1/2 - 2^-n, inf), g = 1_[1/2, inf) on [0, horizon]; gamma(t) = t/2.

    gamma_n(t) = alpha_n (1/2 - 2^-(n+1)) t for even n and
    alpha_n (1/2 + 2^-(n+1)) t for odd n.
    """
    if n < 2:
        raise DomainError(f"Example 1 starts at n = 2, got {n}")
    if horizon < 1.0:
        raise DomainError(f"Example 1 needs outer paths on at least [0, 1], got [0, {horizon}]")
    sign = -1.0 if n % 2 == 0 else 1.0
    slope = alpha(n) * (0.5 + sign * 2.0 ** (-(n + 1)))
    return Quadruple(
        g_n=indicator_path(0.5 - 2.0 ** (-n), horizon),
        gamma_n=_linear_change(slope),
        g=indicator_path(0.5, horizon),
        gamma=_linear_change(0.5),
    )


def example2(n: int, horizon: float = 1.0, variant: str = "repaired") -> Quadruple:
    """Constant time changes gamma_n = 1/2 - 2^-(n+1) against gamma = 1/2.

    "as_stated" uses g_n = 1_[1/2 - 2^-n, inf); "repaired" holds g_n at the
    limit g = 1_[1/2, inf). The time changes do not start at 0.
    """
    if n < 1:
        raise DomainError(f"Example 2 starts at n = 1, got {n}")
    if variant not in ("repaired", "as_stated"):
        raise ConfigError(f"Unknown Example 2 variant {variant!r}")
    g = indicator_path(0.5, horizon)
    g_n = g if variant == "repaired" else indicator_path(0.5 - 2.0 ** (-n), horizon)
    return Quadruple(
        g_n=g_n,
        gamma_n=TimeChange(constant_path(0.5 - 2.0 ** (-(n + 1)), 1.0), CLASS_B),
        g=g,
        gamma=TimeChange(constant_path(0.5, 1.0), CLASS_B),
    )


# Lemma families

class LemmaFamily:
    """Random limit pair (g, gamma) plus perturbation directions.

    quadruple(n) moves every node of the limit by rate**n times its
    direction, so distances of the outer and inner parts are O(rate**n).
    """
    kind = ""

    def __init__(self, seed: SeedLike, rate: float):
        if not (0.0 <= rate < 1.0):
            raise ConfigError(f"Lemma family rate must lie in [0, 1), got {rate}")
        self.seed = as_key(seed)
        self.rate = float(rate)
        self._draw(self.seed.generator())

    def _draw(self, rng: np.random.Generator):
        raise NotImplementedError

    def scale(self, n: int) -> float:
        if n < 1:
            raise DomainError(f"Family index must be >= 1, got {n}")
        return self.rate ** n

    def quadruple(self, n: int) -> Quadruple:
        raise NotImplementedError

    def __call__(self, n: int) -> Quadruple:
        return self.quadruple(n)


def _stratified(rng: np.random.Generator, count: int, lo: float, hi: float):
    """One point in the middle half of each of `count` equal bins; returns (points, bin width)."""
    width = (hi - lo) / count
    left = lo + width * np.arange(count)
    return left + width * (0.25 + 0.5 * rng.random(count)), width


class Lemma1Family(LemmaFamily):
    """Step outer g on [0, C]; strictly increasing piecewise-linear gamma with gamma(1) = C."""
    kind = "lemma1"
    pieces = 6
    jump_count = 3

    def _draw(self, rng):
        self.endpoint = float(rng.uniform(0.5, 2.0))
        spacing = 0.5 + rng.random(self.pieces)
        times = np.concatenate(([0.0], np.cumsum(spacing) / spacing.sum()))
        times[-1] = 1.0
        weights = 0.2 + rng.exponential(size=self.pieces)
        levels = np.concatenate(([0.0], self.endpoint * np.cumsum(weights) / weights.sum()))
        levels[-1] = self.endpoint
        self.times, self.levels = times, levels
        inc = np.diff(levels)
        bound = 0.45 * np.minimum(inc[:-1], inc[1:])
        self.level_shift = np.concatenate(([0.0], rng.uniform(-1.0, 1.0, self.pieces - 1) * bound, [0.0]))

        C = self.endpoint
        self.jump_times, width = _stratified(rng, self.jump_count, 0.1 * C, 0.9 * C)
        signs = np.where(rng.random(self.jump_count) < 0.5, -1.0, 1.0)
        self.jump_sizes = signs * (0.5 + np.abs(rng.normal(size=self.jump_count)))
        self.base = float(rng.normal())
        self.time_shift = rng.uniform(-1.0, 1.0, self.jump_count) * width / 8.0
        self.size_shift = rng.uniform(-0.25, 0.25, self.jump_count)

    def _outer(self, s: float) -> PiecewisePath:
        times = self.jump_times + s * self.time_shift
        sizes = self.jump_sizes + s * self.size_shift
        return step_path(list(zip(times, sizes)), self.endpoint, self.base)

    def _inner(self, s: float) -> TimeChange:
        path = from_samples(self.times, self.levels + s * self.level_shift)
        return TimeChange(path, CLASS_PI, self.endpoint)

    def quadruple(self, n: int) -> Quadruple:
        s = self.scale(n)
        return Quadruple(self._outer(s), self._inner(s), self._outer(0.0), self._inner(0.0))


class Lemma2Family(LemmaFamily):
    """Continuous piecewise-linear g on [0, 2]; gamma with jumps, gamma_n shifted in time and level."""
    kind = "lemma2"
    horizon = 2.0
    nodes = 9
    jump_count = 2

    def _draw(self, rng):
        self.node_times = np.linspace(0.0, self.horizon, self.nodes)
        self.node_values = np.cumsum(rng.normal(0.0, 0.5, self.nodes))
        self.value_shift = rng.uniform(-1.0, 1.0, self.nodes)
        self.slope = float(rng.uniform(0.3, 0.6))
        self.jump_times, _ = _stratified(rng, self.jump_count, 0.2, 0.8)
        self.jump_sizes = rng.uniform(0.1, 0.3, self.jump_count)
        self.time_shift = rng.uniform(-0.02, 0.02, self.jump_count)
        self.level = float(rng.uniform(0.0, 0.1))

    def _outer(self, s: float) -> PiecewisePath:
        return from_samples(self.node_times, self.node_values + s * self.value_shift)

    def _inner(self, s: float) -> TimeChange:
        bp = np.concatenate(([0.0], self.jump_times + s * self.time_shift, [1.0]))
        base = s * self.level
        jumped = np.concatenate(([0.0], np.cumsum(self.jump_sizes)))
        values = base + self.slope * bp[:-1] + jumped
        terminal = base + self.slope + jumped[-1]
        path = PiecewisePath(1.0, bp, values, np.full(len(values), self.slope), terminal)
        return TimeChange(path, CLASS_B)

    def quadruple(self, n: int) -> Quadruple:
        s = self.scale(n)
        return Quadruple(self._outer(s), self._inner(s), self._outer(0.0), self._inner(0.0))


def lemma1_family(seed: SeedLike, rate: float) -> Lemma1Family:
    return Lemma1Family(seed, rate)


def lemma2_family(seed: SeedLike, rate: float) -> Lemma2Family:
    return Lemma2Family(seed, rate)


# Reports

@dataclass
class ExampleRow:
    n: int
    rho_outer: float
    rho_inner: float
    rho_composed: float
    gap_composed: float
    rho_composed_stated: Optional[float] = None
    rho_subsequence: Optional[float] = None


CSV_COLUMNS = ("n", "rho_outer", "rho_inner", "rho_composed", "gap_composed",
               "rho_composed_stated", "rho_subsequence")


@dataclass
class ExampleReport:
    name: str
    rows: List[ExampleRow]
    verdict: str
    converges: bool
    tol: float
    variant: str = ""
    rate: Optional[float] = None
    seed: Optional[int] = None
    families: int = 1
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["rows"] = [asdict(r) for r in self.rows]
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            cells = [r.n]
            for name in CSV_COLUMNS[1:]:
                value = getattr(r, name)
                cells.append("" if value is None else repr(value))
            writer.writerow(cells)
        return buffer.getvalue()

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]


def _rho1(x: PiecewisePath, y: PiecewisePath, tol: float):
    return skorokhod_distance(x, y, 1.0, tol, want_witness=False)


def _example1_row(n: int, tol: float, horizon: float) -> ExampleRow:
    q = example1(n, horizon)
    comp, limit = q.composed()
    composed = _rho1(comp, limit, tol)
    partner = None
    if n % 2 == 1:
        other, _ = example1(n - 1, horizon).composed()
        partner = _rho1(other, comp, tol).value
    return ExampleRow(
        n=n,
        rho_outer=rho_infinity(q.g_n, q.g, tol),
        rho_inner=_rho1(q.gamma_n.path, q.gamma.path, tol).value,
        rho_composed=composed.value,
        gap_composed=composed.certified_gap,
        rho_composed_stated=_rho1(comp, constant_path(1.0, 1.0), tol).value,
        rho_subsequence=partner,
    )


def example1_report(n_max: int, tol: float, session: Optional[SessionConfig] = None) -> ExampleReport:
    """Distances for n = 2..n_max; rho_subsequence compares n with n - 1 for odd n."""
    if n_max < 2:
        raise DomainError(f"Example 1 needs n_max >= 2, got {n_max}")
    horizon = required_horizon(tol)
    indices = list(range(2, n_max + 1))
    rows = BatchSampler(session).map(lambda i: _example1_row(indices[i], tol, horizon),
                                     len(indices), label="example1")
    stuck = all(r.rho_composed >= 1.0 - tol for r in rows)
    verdict = (
        "composition does not converge: rho_1(g_n o gamma_n, g o gamma) = 1 for every n "
        "while rho_inf(g_n, g) -> 0; gamma_n(1) differs from gamma(1)"
        if stuck else "composition distance falls below 1 for some n"
    )
    notes = [
        "g o gamma is 0 on [0,1) and 1 at t = 1",
        "g_n o gamma_n is identically 0 for even n and for odd n >= 7",
        "rho_composed_stated is the distance to the constant 1",
    ]
    logger.info("EXAMPLE_REPORT: example1 n_max=%d converges=%s", n_max, not stuck)
    return ExampleReport(name="example1", rows=rows, verdict=verdict, converges=not stuck, tol=tol, notes=notes)


def _example2_row(n: int, tol: float, horizon: float, variant: str) -> ExampleRow:
    q = example2(n, horizon, variant)
    comp, limit = q.composed()
    composed = _rho1(comp, limit, tol)
    return ExampleRow(
        n=n,
        rho_outer=rho_infinity(q.g_n, q.g, tol),
        rho_inner=_rho1(q.gamma_n.path, q.gamma.path, tol).value,
        rho_composed=composed.value,
        gap_composed=composed.certified_gap,
    )


def example2_report(n_max: int, tol: float, variant: str = "repaired",
                    session: Optional[SessionConfig] = None) -> ExampleReport:
    if n_max < 1:
        raise DomainError(f"Example 2 needs n_max >= 1, got {n_max}")
    horizon = required_horizon(tol)
    rows = BatchSampler(session).map(lambda i: _example2_row(i + 1, tol, horizon, variant),
                                     n_max, label="example2")
    converges = rows[-1].rho_composed <= 10.0 * tol
    if converges:
        verdict = "composition converges: g_n(gamma_n) = 1 = g(gamma) for every n"
    else:
        verdict = ("composition does not converge: rho_1(g_n o gamma_n, g o gamma) = 1 for every n "
                   "while gamma_n -> gamma; the outer limit g is discontinuous at gamma")
    notes = ["gamma_n and gamma are constant and do not start at 0"]
    if variant == "as_stated":
        notes.append("gamma_n = 1/2 - 2^-(n+1) lies right of the jump of g_n at 1/2 - 2^-n")
    else:
        notes.append("g_n is held at the limit g")
    logger.info("EXAMPLE_REPORT: example2 variant=%s n_max=%d converges=%s", variant, n_max, converges)
    return ExampleReport(name="example2", rows=rows, verdict=verdict, converges=converges, tol=tol,
                         variant=variant, notes=notes)


def _lemma_row(family: LemmaFamily, n: int, tol: float, horizon: float) -> ExampleRow:
    q = family.quadruple(n)
    comp, limit = q.composed()
    composed = _rho1(comp, limit, tol)
    coarse = max(tol, LEMMA_DIAGNOSTIC_TOL)
    return ExampleRow(
        n=n,
        rho_outer=rho_infinity(extend(q.g_n, horizon), extend(q.g, horizon), coarse),
        rho_inner=_rho1(q.gamma_n.path, q.gamma.path, coarse).value,
        rho_composed=composed.value,
        gap_composed=composed.certified_gap,
    )


def _worst(rows: List[ExampleRow]) -> ExampleRow:
    return ExampleRow(
        n=rows[0].n,
        rho_outer=max(r.rho_outer for r in rows),
        rho_inner=max(r.rho_inner for r in rows),
        rho_composed=max(r.rho_composed for r in rows),
        gap_composed=max(r.gap_composed for r in rows),
    )


LEMMA_FAMILIES = {"lemma1": Lemma1Family, "lemma2": Lemma2Family}


def lemma_report(which: str, n_max: int, rate: float, seed: int, families: int, tol: float,
                 session: Optional[SessionConfig] = None) -> ExampleReport:
    """Worst case over `families` seeded quadruples at every n = 1..n_max.

    Family f draws from stream seed/f. Only the composed column is bracketed
    within tol; the outer and inner columns use LEMMA_DIAGNOSTIC_TOL when it
    is coarser.
    """
    if which not in LEMMA_FAMILIES:
        raise ConfigError(f"Unknown lemma family {which!r}")
    if n_max < 1 or families < 1:
        raise DomainError("Lemma report needs n_max >= 1 and at least one family")
    key = SeedKey(seed)
    members = [LEMMA_FAMILIES[which](key.spawn(f), rate) for f in range(families)]
    coarse = max(tol, LEMMA_DIAGNOSTIC_TOL)
    horizon = required_horizon(coarse)
    count = n_max * families

    def row(i: int) -> ExampleRow:
        return _lemma_row(members[i % families], i // families + 1, tol, horizon)

    flat = BatchSampler(session).map(row, count, label=which)
    rows = [_worst(flat[n * families:(n + 1) * families]) for n in range(n_max)]
    final = rows[-1].rho_composed
    converges = final < LEMMA_THRESHOLD
    premise = "common endpoint gamma_n(1) = gamma(1)" if which == "lemma1" else "continuous outer limit g"
    verdict = (f"composition converges under the {premise}: worst distance {final!r} at n = {n_max}"
               if converges else f"composition distance {final!r} at n = {n_max} is above {LEMMA_THRESHOLD}")
    logger.info("EXAMPLE_REPORT: %s families=%d final=%r", which, families, final)
    return ExampleReport(name=which, rows=rows, verdict=verdict, converges=converges, tol=tol,
                         rate=rate, seed=seed, families=families,
                         notes=["rows report the worst case over families",
                                f"rho_outer and rho_inner are bracketed within {coarse!r}"])


def counterexample_report(config: CounterexampleConfig, seed: Optional[int] = None,
                          session: Optional[SessionConfig] = None) -> ExampleReport:
    config.validate()
    if config.which == "1":
        return example1_report(config.n_max, config.tol, session)
    if config.which == "2":
        return example2_report(config.n_max, config.tol, config.variant, session)
    seed = config.require_seed(seed)
    return lemma_report(config.which, config.n_max, config.rate, seed, config.families, config.tol, session)
