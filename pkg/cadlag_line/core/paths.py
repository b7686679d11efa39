"""Cadlag paths as piecewise-linear segments with jumps at breakpoints.

A `PiecewisePath` on [0, horizon] is described by breakpoints
t_0 = 0 < t_1 < ... < t_m = horizon, the value of the path at each t_i
(i < m) together with the slope of the segment [t_i, t_{i+1}), and an explicit
terminal value at t = horizon. The value at t_i is the right limit, so the
path is right-continuous by construction; the left limit at t_i is read off
the preceding segment. Storing the terminal value separately keeps a jump at
the horizon itself representable.

The same type carries outer processes, time changes and reparametrizations;
`TimeChange` and `Reparametrization` only add invariants on top of it.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.errors import CompositionDomainError, DomainError, ValidationError

logger = logging.getLogger(__name__)

# Breakpoints closer than this are merged by canonicalize.
MIN_BREAKPOINT_GAP = 1e-12
# Relative tolerance for "no jump" and "same slope" decisions in canonicalize.
MERGE_RTOL = 1e-12

CLASS_B = "B"
CLASS_PI = "Pi"

TimeLike = Union[float, Sequence[float], np.ndarray]


def _frozen_array(data) -> np.ndarray:
    arr = np.array(data, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PiecewisePath:
    horizon: float
    breakpoints: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    terminal: float

    def __post_init__(self):
        bp = _frozen_array(self.breakpoints).reshape(-1)
        vals = _frozen_array(self.values).reshape(-1)
        slopes = _frozen_array(self.slopes).reshape(-1)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "terminal", float(self.terminal))
        self._validate()

    def _validate(self):
        bp = self.breakpoints
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ValidationError(f"Horizon must be a positive real, got {self.horizon}")
        m = len(self.values)
        if m < 1:
            raise ValidationError("Path needs at least one segment")
        if len(self.slopes) != m or len(bp) != m + 1:
            raise ValidationError(
                f"Expected {m + 1} breakpoints and {m} slopes for {m} values, "
                f"got {len(bp)} breakpoints and {len(self.slopes)} slopes"
            )
        if bp[0] != 0.0 or bp[-1] != self.horizon:
            raise ValidationError(f"Breakpoints must run from 0 to the horizon {self.horizon}")
        if np.any(np.diff(bp) <= 0):
            raise ValidationError("Breakpoints must be strictly increasing")
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.slopes))
                and np.isfinite(self.terminal)):
            raise ValidationError("Path values, slopes and terminal value must be finite")

    @property
    def segment_count(self) -> int:
        return len(self.values)

    @property
    def left_limits(self) -> np.ndarray:
        """Left limits at breakpoints t_1 .. t_m (the last one at the horizon)."""
        return self.values + self.slopes * np.diff(self.breakpoints)

    def __call__(self, t: TimeLike):
        return evaluate(self, t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PiecewisePath):
            return NotImplemented
        return (self.horizon == other.horizon
                and self.terminal == other.terminal
                and np.array_equal(self.breakpoints, other.breakpoints)
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.slopes, other.slopes))

    __hash__ = None

    def __repr__(self) -> str:
        return (f"PiecewisePath(horizon={self.horizon!r}, segments={self.segment_count}, "
                f"terminal={self.terminal!r})")


def _check_times(path: PiecewisePath, t: np.ndarray, allow_zero: bool):
    if np.any(~np.isfinite(t)):
        raise DomainError("Time must be finite")
    if allow_zero:
        bad = (t < 0) | (t > path.horizon)
        if np.any(bad):
            raise DomainError(f"Time outside [0, {path.horizon}]: {t[bad].reshape(-1)[0]!r}")
    else:
        bad = (t <= 0) | (t > path.horizon)
        if np.any(bad):
            raise DomainError(f"Left limit needs time in (0, {path.horizon}]: {t[bad].reshape(-1)[0]!r}")


def _as_result(out: np.ndarray):
    return float(out) if out.ndim == 0 else out


def evaluate(path: PiecewisePath, t: TimeLike):
    """Right-continuous value x(t); the terminal value at t = horizon."""
    t_arr = np.asarray(t, dtype=float)
    _check_times(path, t_arr, allow_zero=True)
    idx = np.searchsorted(path.breakpoints, t_arr, side="right") - 1
    idx = np.clip(idx, 0, path.segment_count - 1)
    out = path.values[idx] + path.slopes[idx] * (t_arr - path.breakpoints[idx])
    out = np.where(t_arr == path.horizon, path.terminal, out)
    return _as_result(np.asarray(out, dtype=float))


def left_limit(path: PiecewisePath, t: TimeLike):
    """lim_{s -> t-} x(s) for t in (0, horizon]."""
    t_arr = np.asarray(t, dtype=float)
    _check_times(path, t_arr, allow_zero=False)
    idx = np.searchsorted(path.breakpoints, t_arr, side="left") - 1
    idx = np.clip(idx, 0, path.segment_count - 1)
    out = path.values[idx] + path.slopes[idx] * (t_arr - path.breakpoints[idx])
    return _as_result(np.asarray(out, dtype=float))


def _same(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    scale = 1.0 + np.maximum(np.abs(a), np.abs(b))
    return np.abs(a - b) <= MERGE_RTOL * scale


def _drop_tiny_segments(path: PiecewisePath) -> PiecewisePath:
    bp = list(path.breakpoints)
    vals = list(path.values)
    slopes = list(path.slopes)
    i = 0
    while i < len(vals) and len(vals) > 1:
        if bp[i + 1] - bp[i] >= MIN_BREAKPOINT_GAP:
            i += 1
            continue
        if i + 1 < len(vals):
            # Keep the later segment (it owns the right-continuous value) and stretch it back.
            vals[i + 1] = vals[i + 1] - slopes[i + 1] * (bp[i + 1] - bp[i])
            del bp[i + 1]
            del vals[i]
            del slopes[i]
        else:
            del bp[i]
            del vals[i]
            del slopes[i]
            bp[-1] = path.horizon
    return PiecewisePath(path.horizon, bp, vals, slopes, path.terminal)


def canonicalize(path: PiecewisePath) -> PiecewisePath:
    """Merge collinear adjacent segments and remove zero-size jumps.

    Idempotent; pointwise values are unchanged (exactly so for piecewise-constant
    paths, up to rounding of the merged segment formula otherwise).
    """
    if np.any(np.diff(path.breakpoints) < MIN_BREAKPOINT_GAP):
        path = _drop_tiny_segments(path)
    m = path.segment_count
    if m == 1:
        return path
    ll = path.left_limits[:-1]
    merge = _same(ll, path.values[1:]) & _same(path.slopes[:-1], path.slopes[1:])
    if not np.any(merge):
        return path
    keep = np.concatenate(([True], ~merge))
    bp = np.concatenate((path.breakpoints[:-1][keep], [path.horizon]))
    return PiecewisePath(path.horizon, bp, path.values[keep], path.slopes[keep], path.terminal)


def jump_sizes(path: PiecewisePath) -> Tuple[np.ndarray, np.ndarray]:
    """Times and signed sizes of all jumps, including a jump at the horizon."""
    ll = path.left_limits
    times = path.breakpoints[1:]
    after = np.concatenate((path.values[1:], [path.terminal]))
    sizes = after - ll
    mask = sizes != 0.0
    return times[mask], sizes[mask]


def jumps(path: PiecewisePath) -> List[Tuple[float, float]]:
    """All (t, x(t) - x(t-)) with a nonzero difference, in time order."""
    times, sizes = jump_sizes(path)
    return [(float(t), float(s)) for t, s in zip(times, sizes)]


def restrict(path: PiecewisePath, k: float) -> PiecewisePath:
    """Truncation to [0, k]; the terminal value becomes x(k)."""
    k = float(k)
    if not (0 < k <= path.horizon):
        raise DomainError(f"Cannot restrict a path on [0, {path.horizon}] to [0, {k}]")
    if k == path.horizon:
        return path
    n_keep = int(np.searchsorted(path.breakpoints, k, side="left"))
    bp = np.concatenate((path.breakpoints[:n_keep], [k]))
    return PiecewisePath(k, bp, path.values[:n_keep], path.slopes[:n_keep], evaluate(path, k))


def extend(path: PiecewisePath, horizon: float) -> PiecewisePath:
    """Constant extension by the terminal value to a longer horizon."""
    horizon = float(horizon)
    if horizon < path.horizon:
        raise DomainError(f"Cannot extend a path on [0, {path.horizon}] to the shorter [0, {horizon}]")
    if horizon == path.horizon:
        return path
    bp = np.concatenate((path.breakpoints, [horizon]))
    vals = np.concatenate((path.values, [path.terminal]))
    slopes = np.concatenate((path.slopes, [0.0]))
    return PiecewisePath(horizon, bp, vals, slopes, path.terminal)


def max_value(path: PiecewisePath) -> float:
    return float(max(path.values.max(), path.left_limits.max(), path.terminal))


def min_value(path: PiecewisePath) -> float:
    return float(min(path.values.min(), path.left_limits.min(), path.terminal))


def is_nondecreasing(path: PiecewisePath, atol: float = 0.0) -> bool:
    _, sizes = jump_sizes(path)
    return bool(np.all(path.slopes >= 0) and np.all(sizes >= -atol))


def _rounding(path: PiecewisePath) -> float:
    return MERGE_RTOL * (1.0 + float(np.max(np.abs(path.values))) + abs(path.terminal))


def is_continuous(path: PiecewisePath, atol: float = 0.0) -> bool:
    _, sizes = jump_sizes(path)
    return bool(np.all(np.abs(sizes) <= atol))


def nodes(path: PiecewisePath) -> Tuple[np.ndarray, np.ndarray]:
    """Breakpoints with the right-continuous value at each (terminal value last)."""
    return path.breakpoints.copy(), np.concatenate((path.values, [path.terminal]))


# Constructors

def constant_path(c: float, horizon: float) -> PiecewisePath:
    return PiecewisePath(horizon, [0.0, horizon], [c], [0.0], c)


def linear_path(slope: float, horizon: float, intercept: float = 0.0) -> PiecewisePath:
    return PiecewisePath(horizon, [0.0, horizon], [intercept], [slope], intercept + slope * horizon)


def identity_path(horizon: float) -> PiecewisePath:
    return linear_path(1.0, horizon)


def step_path(jump_list: Sequence[Tuple[float, float]], horizon: float, base: float = 0.0) -> PiecewisePath:
    """Piecewise-constant path starting at `base` with the given (time, size) jumps.

    A jump at time 0 shifts the starting value; a jump at the horizon only
    changes the terminal value.
    """
    horizon = float(horizon)
    times = {}
    for t, size in jump_list:
        t = float(t)
        if not (0.0 <= t <= horizon):
            raise DomainError(f"Jump time {t} outside [0, {horizon}]")
        times[t] = times.get(t, 0.0) + float(size)
    start = base + times.pop(0.0, 0.0)
    terminal_jump = times.pop(horizon, 0.0)
    inner = sorted(times)
    bp = [0.0] + inner + [horizon]
    vals = [start]
    for t in inner:
        vals.append(vals[-1] + times[t])
    return PiecewisePath(horizon, bp, vals, [0.0] * len(vals), vals[-1] + terminal_jump)


def indicator_path(a: float, horizon: float) -> PiecewisePath:
    """The step 1_{[a, inf)} truncated to [0, horizon]."""
    if a <= 0:
        return constant_path(1.0, horizon)
    if a > horizon:
        return constant_path(0.0, horizon)
    return step_path([(a, 1.0)], horizon)


def from_samples(times: Sequence[float], node_values: Sequence[float]) -> PiecewisePath:
    """Continuous piecewise-linear interpolation through (time, value) nodes starting at 0."""
    ts = np.asarray(times, dtype=float)
    vs = np.asarray(node_values, dtype=float)
    if ts.shape != vs.shape or ts.size < 2:
        raise ValidationError("Need at least two nodes with matching times and values")
    dt = np.diff(ts)
    if np.any(dt <= 0):
        raise ValidationError("Node times must be strictly increasing")
    slopes = np.diff(vs) / dt
    return PiecewisePath(ts[-1], ts, vs[:-1], slopes, vs[-1])


# Time changes and reparametrizations

@dataclass(frozen=True)
class TimeChange:
    """Non-decreasing non-negative path used as an inner process.

    class_flag "B" is membership in B[0,1]; "Pi" additionally requires a
    continuous strictly increasing path whose value at the horizon is
    `endpoint_value`.
    """
    path: PiecewisePath
    class_flag: str = CLASS_B
    endpoint_value: float = 0.0

    def __post_init__(self):
        path = self.path
        if self.class_flag not in (CLASS_B, CLASS_PI):
            raise ValidationError(f"Unknown time-change class {self.class_flag!r}")
        if path.values[0] < 0:
            raise ValidationError("Time change must be non-negative")
        if not is_nondecreasing(path, atol=_rounding(path)):
            raise ValidationError("Time change must be non-decreasing")
        if self.class_flag == CLASS_PI:
            if not is_continuous(path, atol=MERGE_RTOL * (1.0 + abs(path.terminal))):
                raise ValidationError("Class Pi time change must be continuous")
            if np.any(path.slopes <= 0):
                raise ValidationError("Class Pi time change must be strictly increasing")
            if path.terminal != self.endpoint_value:
                raise ValidationError(
                    f"Class Pi endpoint {path.terminal} differs from the declared {self.endpoint_value}")

    @property
    def horizon(self) -> float:
        return self.path.horizon

    @property
    def starts_at_origin(self) -> bool:
        return self.path.values[0] == 0.0

    @property
    def max_value(self) -> float:
        return self.path.terminal

    def __call__(self, t: TimeLike):
        return evaluate(self.path, t)


def time_change(path: PiecewisePath, class_flag: Optional[str] = None,
                require_origin: bool = False) -> TimeChange:
    """Wrap a path as a TimeChange, inferring the class when not given."""
    if class_flag is None:
        strict = bool(np.all(path.slopes > 0)) and is_continuous(path, atol=MERGE_RTOL * (1.0 + abs(path.terminal)))
        class_flag = CLASS_PI if strict else CLASS_B
    tc = TimeChange(path, class_flag, path.terminal if class_flag == CLASS_PI else 0.0)
    if require_origin and not tc.starts_at_origin:
        raise ValidationError(f"Time change must start at 0, starts at {path.values[0]}")
    return tc


@dataclass(frozen=True)
class Reparametrization:
    """Element of Delta[0,k]: continuous, strictly increasing, fixing 0 and k."""
    path: PiecewisePath

    def __post_init__(self):
        path = self.path
        k = path.horizon
        if path.values[0] != 0.0 or path.terminal != k:
            raise ValidationError(f"Reparametrization must map 0 to 0 and {k} to {k}")
        if np.any(path.slopes <= 0):
            raise ValidationError("Reparametrization must be strictly increasing")
        if not is_continuous(path, atol=MERGE_RTOL * (1.0 + k)):
            raise ValidationError("Reparametrization must be continuous")

    @property
    def horizon(self) -> float:
        return self.path.horizon

    def __call__(self, t: TimeLike):
        return evaluate(self.path, t)


def identity_reparam(k: float) -> Reparametrization:
    return Reparametrization(identity_path(k))


def reparam_from_nodes(times: Sequence[float], images: Sequence[float]) -> Reparametrization:
    return Reparametrization(from_samples(times, images))


def inverse(reparam: Reparametrization) -> Reparametrization:
    ts, ss = nodes(reparam.path)
    return reparam_from_nodes(ss, ts)


def compose_reparams(outer: Reparametrization, inner: Reparametrization) -> Reparametrization:
    """outer o inner; Delta[0,k] is closed under composition."""
    if outer.horizon != inner.horizon:
        raise DomainError("Reparametrizations live on different intervals")
    ts, ss = nodes(compose(outer.path, inner.path))
    ss[0], ss[-1] = 0.0, outer.horizon
    return reparam_from_nodes(ts, ss)


def time_change_path(inner) -> PiecewisePath:
    if isinstance(inner, (TimeChange, Reparametrization)):
        return inner.path
    if isinstance(inner, PiecewisePath):
        if inner.values[0] < 0 or not is_nondecreasing(inner, atol=_rounding(inner)):
            raise ValidationError("Inner path must be non-negative and non-decreasing")
        return inner
    raise ValidationError(f"Unsupported inner path type {type(inner).__name__}")


def compose(outer: PiecewisePath, inner) -> PiecewisePath:
    """The superposition t -> outer(inner(t)) on the horizon of `inner`.

    Breakpoints of the result are the inner breakpoints plus the inner
    preimages of the outer breakpoints; the result is canonical. An inner
    range beyond the outer horizon is an error, never clamped.
    """
    g = time_change_path(inner)
    if g.terminal > outer.horizon:
        raise CompositionDomainError(
            f"Inner process reaches {g.terminal}, beyond the outer horizon {outer.horizon}",
            required_horizon=g.terminal,
        )

    m = g.segment_count
    g0 = g.values
    g1 = g.slopes
    rising = g1 > 0

    # One piece per inner segment, starting at the inner breakpoint.
    first_vals = np.atleast_1d(evaluate(outer, g0))
    j0 = np.clip(np.searchsorted(outer.breakpoints, g0, side="right") - 1, 0, outer.segment_count - 1)
    first_slopes = np.where(rising, outer.slopes[j0] * g1, 0.0)

    # Extra pieces where a rising inner segment crosses an interior outer breakpoint.
    interior = outer.breakpoints[1:-1]
    lo = np.searchsorted(interior, g0, side="right")
    hi = np.searchsorted(interior, g.left_limits, side="left")
    counts = np.where(rising, np.maximum(hi - lo, 0), 0)
    total = int(counts.sum())
    if total:
        seg = np.repeat(np.arange(m), counts)
        rank = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        cross_idx = lo[seg] + rank
        tau = g.breakpoints[seg] + (interior[cross_idx] - g0[seg]) / g1[seg]
        inside = (tau > g.breakpoints[seg]) & (tau < g.breakpoints[seg + 1])
        seg, cross_idx, tau = seg[inside], cross_idx[inside], tau[inside]
        outer_seg = cross_idx + 1
        starts = np.concatenate((g.breakpoints[:-1], tau))
        vals = np.concatenate((first_vals, outer.values[outer_seg]))
        slopes = np.concatenate((first_slopes, outer.slopes[outer_seg] * g1[seg]))
        order = np.argsort(starts, kind="stable")
        starts, vals, slopes = starts[order], vals[order], slopes[order]
        # Rounding can collapse two preimages onto one time; keep the later piece.
        if starts.size > 1:
            dup = np.concatenate((starts[1:] == starts[:-1], [False]))
            if np.any(dup):
                starts, vals, slopes = starts[~dup], vals[~dup], slopes[~dup]
    else:
        starts, vals, slopes = g.breakpoints[:-1], first_vals, first_slopes

    bp = np.concatenate((starts, [g.horizon]))
    result = PiecewisePath(g.horizon, bp, vals, slopes, evaluate(outer, g.terminal))
    return canonicalize(result)
