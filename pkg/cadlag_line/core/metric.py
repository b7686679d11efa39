"""Skorokhod J1 distances between piecewise-linear cadlag paths.

The decision problem "is there a reparametrization lambda with
sup|x - y o lambda| <= eps and sup|lambda - id| <= eps" is answered on the
free-space diagram: the square [0,k]^2 is cut into cells (segment i of x) x
(segment j of y). Inside a cell both paths are linear, so the points (t, s)
with |x_i(t) - y_j(s)| <= eps and |t - s| <= eps form a convex set, and a
monotone curve from (0,0) to (k,k) through free points exists iff eps is
feasible. Crossing the line t = t_i compares y with both the left limit and
the value of x at t_i, so edge intervals intersect the constraints of both
neighbouring cells. Passing exactly through a corner matches a jump of x with
a jump of y.

The distance search brackets the infimum between candidate values (time
differences of breakpoints and differences of path values) and bisects
until the bracket is below the requested tolerance.
"""
import heapq
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from ..utils.errors import DomainError, InsufficientHorizonError
from ..utils.path_io import path_to_dict
from .paths import (PiecewisePath, Reparametrization, TimeChange, canonicalize, compose,
                    evaluate, identity_reparam, left_limit, reparam_from_nodes, restrict)

logger = logging.getLogger(__name__)

# Relative slack added to eps in every comparison of the decision procedure.
DECISION_RTOL = 1e-12
# Candidate enumeration is skipped above this many breakpoint pairs.
MAX_CANDIDATE_PAIRS = 250_000

Interval = Tuple[float, float]


@dataclass(frozen=True)
class DistanceResult:
    value: float
    certified_gap: float
    witness: Optional[Reparametrization] = None

    @property
    def lower(self) -> float:
        return self.value - self.certified_gap

    def to_dict(self, include_witness: bool = True) -> dict:
        witness = None
        if include_witness and self.witness is not None:
            witness = path_to_dict(self.witness.path)
        return {"value": self.value, "gap": self.certified_gap, "witness": witness}


class Decision(NamedTuple):
    feasible: bool
    witness: Optional[Reparametrization]


def _prepare(x: PiecewisePath, y: PiecewisePath, k: float) -> Tuple[PiecewisePath, PiecewisePath]:
    k = float(k)
    if not (k > 0):
        raise DomainError(f"Horizon must be positive, got {k}")
    if x.horizon < k or y.horizon < k:
        raise DomainError(f"Paths on [0, {x.horizon}] and [0, {y.horizon}] do not cover [0, {k}]")
    return canonicalize(restrict(x, k)), canonicalize(restrict(y, k))


def sup_distance(x: PiecewisePath, y: PiecewisePath, k: float) -> float:
    """Exact sup over [0,k] of |x - y|.

    On every interval between consecutive breakpoints of either path the
    difference is linear, so the sup is attained at a right value, a left
    limit, or the terminal value.
    """
    x, y = _prepare(x, y, k)
    grid = np.union1d(x.breakpoints, y.breakpoints)
    starts = grid[:-1]
    ends = grid[1:]
    at_start = np.abs(np.atleast_1d(evaluate(x, starts)) - np.atleast_1d(evaluate(y, starts)))
    at_end = np.abs(np.atleast_1d(left_limit(x, ends)) - np.atleast_1d(left_limit(y, ends)))
    return float(max(at_start.max(), at_end.max(), abs(x.terminal - y.terminal)))


def apply_reparam(y: PiecewisePath, reparam: Reparametrization) -> PiecewisePath:
    """y o lambda on the interval of lambda."""
    if y.horizon < reparam.horizon:
        raise DomainError(f"Path on [0, {y.horizon}] cannot be reparametrized on [0, {reparam.horizon}]")
    return compose(y, reparam)


def reparam_distortion(reparam: Reparametrization) -> float:
    """sup |lambda(t) - t|; attained at a node since lambda is piecewise linear."""
    path = reparam.path
    node_values = np.concatenate((path.values, [path.terminal]))
    return float(np.max(np.abs(node_values - path.breakpoints)))


def witness_error(x: PiecewisePath, y: PiecewisePath, reparam: Reparametrization) -> float:
    """The larger of sup|x - y o lambda| and sup|lambda - id| over the interval of lambda."""
    k = reparam.horizon
    return max(sup_distance(x, apply_reparam(y, reparam), k), reparam_distortion(reparam))


def _band(c: float, v0: float, slope: float, origin: float, lo: float, hi: float,
          eps: float) -> Optional[Interval]:
    """Sub-interval of [lo, hi] on which |c - (v0 + slope * (u - origin))| <= eps."""
    if lo > hi:
        return None
    if slope == 0.0:
        return (lo, hi) if abs(c - v0) <= eps else None
    a = origin + (c - eps - v0) / slope
    b = origin + (c + eps - v0) / slope
    if a > b:
        a, b = b, a
    a, b = max(a, lo), min(b, hi)
    return (a, b) if a <= b else None


def _meet(first: Optional[Interval], second: Optional[Interval]) -> Optional[Interval]:
    if first is None or second is None:
        return None
    a, b = max(first[0], second[0]), min(first[1], second[1])
    return (a, b) if a <= b else None


class _FreeSpace:
    """Reachability sweep over the cells of two canonical paths on [0,k].

    This stands in for a dynamic program over pairs of matched jumps. A jump
    of x is matched with a jump of y exactly when the reachable curve passes
    through the corner of their cell, so every jump matching is one sweep
    path. The sweep also admits curves that cross edges between corners,
    which is what sloped segments need; on step paths both give the same
    feasibility answer.
    """

    def __init__(self, x: PiecewisePath, y: PiecewisePath):
        self.k = x.horizon
        self.tx = x.breakpoints.tolist()
        self.vx = x.values.tolist()
        self.ax = x.slopes.tolist()
        self.lx = x.left_limits.tolist()
        self.ty = y.breakpoints.tolist()
        self.vy = y.values.tolist()
        self.ay = y.slopes.tolist()
        self.ly = y.left_limits.tolist()
        self.x_terminal = x.terminal
        self.y_terminal = y.terminal
        self.m = len(self.vx)
        self.n = len(self.vy)
        self.scale = float(max(np.abs(x.values).max(), np.abs(y.values).max(),
                               abs(x.terminal), abs(y.terminal), self.k))
        self.max_slope = float(max(np.abs(x.slopes).max(), np.abs(y.slopes).max()))

    def slack(self, eps: float) -> float:
        return DECISION_RTOL * (1.0 + eps + self.scale)

    def _right_edge(self, i: int, j: int, eps: float) -> Optional[Interval]:
        t_edge = self.tx[i + 1]
        lo = max(self.ty[j], t_edge - eps)
        hi = min(self.ty[j + 1], t_edge + eps)
        before = _band(self.lx[i], self.vy[j], self.ay[j], self.ty[j], lo, hi, eps)
        after = _band(self.vx[i + 1], self.vy[j], self.ay[j], self.ty[j], lo, hi, eps)
        return _meet(before, after)

    def _top_edge(self, i: int, j: int, eps: float) -> Optional[Interval]:
        s_edge = self.ty[j + 1]
        lo = max(self.tx[i], s_edge - eps)
        hi = min(self.tx[i + 1], s_edge + eps)
        below = _band(self.ly[j], self.vx[i], self.ax[i], self.tx[i], lo, hi, eps)
        above = _band(self.vy[j + 1], self.vx[i], self.ax[i], self.tx[i], lo, hi, eps)
        return _meet(below, above)

    def _corner_free(self, i: int, j: int, eps: float) -> bool:
        t_c, s_c = self.tx[i + 1], self.ty[j + 1]
        return (abs(t_c - s_c) <= eps
                and abs(self.lx[i] - self.ly[j]) <= eps
                and abs(self.vx[i + 1] - self.vy[j + 1]) <= eps)

    def _finish_free(self, eps: float) -> bool:
        return (abs(self.lx[-1] - self.ly[-1]) <= eps
                and abs(self.x_terminal - self.y_terminal) <= eps)

    def sweep(self, eps: float) -> Optional[Dict[Tuple[int, int], tuple]]:
        """Entry sets (left, bottom, vertex) of every reached cell, or None if (k,k) is unreachable."""
        eps = eps + self.slack(eps)
        if abs(self.vx[0] - self.vy[0]) > eps or not self._finish_free(eps):
            return None
        m, n = self.m, self.n
        left_in: Dict[Tuple[int, int], Interval] = {}
        bottom_in: Dict[Tuple[int, int], Interval] = {}
        vertex_in = {(0, 0)}
        entries: Dict[Tuple[int, int], tuple] = {}

        rows: Dict[int, List[int]] = {0: [0]}
        queued = {(0, 0)}
        for i in range(m):
            heap = rows.pop(i, [])
            heapq.heapify(heap)
            while heap:
                j = heapq.heappop(heap)
                key = (i, j)
                left = left_in.get(key)
                bottom = bottom_in.get(key)
                vertex = key in vertex_in
                if left is None and bottom is None and not vertex:
                    continue
                entries[key] = (left, bottom, vertex)
                t0, s0 = self.tx[i], self.ty[j]

                if i + 1 < m:
                    min_s = s0 if (bottom is not None or vertex) else left[0]
                    exit_right = _meet(self._right_edge(i, j, eps), (min_s, self.ty[j + 1]))
                    if exit_right is not None:
                        left_in[(i + 1, j)] = exit_right
                        if (i + 1, j) not in queued:
                            queued.add((i + 1, j))
                            rows.setdefault(i + 1, []).append(j)
                if j + 1 < n:
                    min_t = t0 if (left is not None or vertex) else bottom[0]
                    exit_top = _meet(self._top_edge(i, j, eps), (min_t, self.tx[i + 1]))
                    if exit_top is not None:
                        bottom_in[(i, j + 1)] = exit_top
                        if (i, j + 1) not in queued:
                            queued.add((i, j + 1))
                            heapq.heappush(heap, j + 1)
                if i + 1 < m and j + 1 < n and self._corner_free(i, j, eps):
                    vertex_in.add((i + 1, j + 1))
                    if (i + 1, j + 1) not in queued:
                        queued.add((i + 1, j + 1))
                        rows.setdefault(i + 1, []).append(j + 1)
        if (m - 1, n - 1) not in entries:
            return None
        return entries

    def trace(self, entries) -> Tuple[List[Tuple[float, float]], List[Tuple[int, int]]]:
        """Monotone polyline from (0,0) to (k,k) through reached cells.

        Walks back from (k,k), each time choosing the entry point of the current
        cell that lies below-left of the current point and closest to the
        diagonal (ties: vertex, left edge, bottom edge).
        """
        i, j = self.m - 1, self.n - 1
        q = (self.tx[-1], self.ty[-1])
        points = [q]
        owners = []
        while True:
            left, bottom, vertex = entries[(i, j)]
            t0, s0 = self.tx[i], self.ty[j]
            options = []
            if vertex:
                options.append((abs(t0 - s0), 0, (t0, s0), "V"))
            if left is not None and left[0] <= q[1]:
                hi = min(left[1], q[1])
                s = min(max(t0, left[0]), hi)
                options.append((abs(t0 - s), 1, (t0, s), "L"))
            if bottom is not None and bottom[0] <= q[0]:
                hi = min(bottom[1], q[0])
                t = min(max(s0, bottom[0]), hi)
                options.append((abs(t - s0), 2, (t, s0), "B"))
            if not options:
                # Entry left of q only up to the comparison slack.
                if left is not None:
                    options.append((0.0, 1, (t0, min(left[0], q[1])), "L"))
                elif bottom is not None:
                    options.append((0.0, 2, (min(bottom[0], q[0]), s0), "B"))
            _, _, p, kind = min(options, key=lambda o: (o[0], o[1]))
            owners.append((i, j))
            points.append(p)
            if kind == "V":
                if i == 0 and j == 0:
                    break
                i, j = i - 1, j - 1
            elif kind == "L":
                i -= 1
            else:
                j -= 1
            q = p
        points.reverse()
        owners.reverse()
        points[0] = (0.0, 0.0)
        return points, owners

    def witness(self, entries, budget: float) -> Optional[Reparametrization]:
        points, owners = self.trace(entries)
        ts = [p[0] for p in points]
        ss = [p[1] for p in points]
        # Drop zero-length segments.
        keep_t, keep_s, keep_o = [ts[0]], [ss[0]], []
        for idx in range(1, len(ts)):
            if ts[idx] == keep_t[-1] and ss[idx] == keep_s[-1]:
                continue
            keep_t.append(ts[idx])
            keep_s.append(ss[idx])
            keep_o.append(owners[idx - 1])
        if len(keep_t) < 2:
            return None
        step = budget / (4.0 * (1.0 + self.max_slope))
        keep_t = _spread(keep_t, keep_o, self.tx, step, axis=0)
        keep_s = _spread(keep_s, keep_o, self.ty, step, axis=1)
        if keep_t is None or keep_s is None:
            return None
        keep_t[0] = keep_s[0] = 0.0
        keep_t[-1] = keep_s[-1] = self.k
        if any(b <= a for a, b in zip(keep_t, keep_t[1:])) or any(b <= a for a, b in zip(keep_s, keep_s[1:])):
            return None
        try:
            return reparam_from_nodes(keep_t, keep_s)
        except Exception as e:
            logger.debug("WITNESS_REJECTED: %s", e)
            return None


def _spread(coords: List[float], owners: List[Tuple[int, int]], grid: List[float],
            step: float, axis: int) -> Optional[List[float]]:
    """Separate runs of equal coordinates into the interior of the cell owning the run.

    A run on the lower boundary of its cell is fanned upwards (the first point
    stays), otherwise it is fanned downwards (the last point stays).
    """
    coords = list(coords)
    distinct = sorted(set(coords) | set(grid))
    gaps = [b - a for a, b in zip(distinct, distinct[1:]) if b > a]
    if gaps:
        step = min(step, min(gaps) / 3.0)
    if step <= 0:
        return None
    idx = 0
    last = len(coords) - 1
    while idx < last:
        end = idx
        while end < last and coords[end + 1] == coords[idx]:
            end += 1
        if end == idx:
            idx += 1
            continue
        value = coords[idx]
        cell = owners[idx][axis]
        lower_edge = grid[cell]
        count = end - idx
        if value == lower_edge or idx == 0:
            for c in range(1, count + 1):
                coords[idx + c] = value + c * step / count
        else:
            for c in range(1, count + 1):
                coords[end - c] = value - c * step / count
        idx = end + 1
    return coords


def skorokhod_decision(x: PiecewisePath, y: PiecewisePath, k: float, eps: float,
                       want_witness: bool = True) -> Decision:
    """Whether some lambda in Delta[0,k] keeps both sups within eps."""
    if not (eps > 0):
        raise DomainError(f"eps must be positive, got {eps}")
    x, y = _prepare(x, y, k)
    space = _FreeSpace(x, y)
    entries = space.sweep(eps)
    if entries is None:
        logger.debug("DECISION_INFEASIBLE: eps=%r", eps)
        return Decision(False, None)
    logger.debug("DECISION_FEASIBLE: eps=%r", eps)
    if not want_witness:
        return Decision(True, None)
    budget = 1e-9 * (1.0 + eps)
    witness = space.witness(entries, budget)
    if witness is not None and witness_error(x, y, witness) > eps + budget:
        witness = None
    return Decision(True, witness)


def _path_levels(path: PiecewisePath) -> np.ndarray:
    return np.concatenate((path.values, path.left_limits, [path.terminal]))


def _candidates(x: PiecewisePath, y: PiecewisePath, upper: float) -> np.ndarray:
    parts = []
    if len(x.breakpoints) * len(y.breakpoints) <= MAX_CANDIDATE_PAIRS:
        parts.append(np.abs(np.subtract.outer(x.breakpoints, y.breakpoints)).ravel())
    lx, ly = _path_levels(x), _path_levels(y)
    if len(lx) * len(ly) <= MAX_CANDIDATE_PAIRS:
        parts.append(np.abs(np.subtract.outer(lx, ly)).ravel())
    if parts:
        cand = np.concatenate(parts)
        cand = np.unique(cand[(cand > 0) & (cand < upper)])
    else:
        cand = np.empty(0)
    return np.concatenate((cand, [upper]))


def skorokhod_distance(x: PiecewisePath, y: PiecewisePath, k: float, tol: float,
                       want_witness: bool = True) -> DistanceResult:
    """rho_k(x, y) bracketed within tol.

    `value` is the feasible upper end of the bracket and `certified_gap` its
    width, so the true distance lies in [value - certified_gap, value].
    """
    if not (tol > 0):
        raise DomainError(f"Tolerance must be positive, got {tol}")
    x, y = _prepare(x, y, k)
    k = x.horizon
    if x == y:
        return DistanceResult(0.0, 0.0, identity_reparam(k) if want_witness else None)
    upper = sup_distance(x, y, k)
    if upper == 0.0:
        return DistanceResult(0.0, 0.0, identity_reparam(k) if want_witness else None)

    space = _FreeSpace(x, y)
    cand = _candidates(x, y, upper)
    lo_idx, hi_idx = -1, len(cand) - 1
    while hi_idx - lo_idx > 1:
        mid = (lo_idx + hi_idx) // 2
        if space.sweep(float(cand[mid])) is not None:
            hi_idx = mid
        else:
            lo_idx = mid
    hi = float(cand[hi_idx])
    lo = float(cand[lo_idx]) if lo_idx >= 0 else 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            break
        if space.sweep(mid) is not None:
            hi = mid
        else:
            lo = mid
    gap = hi - lo
    logger.debug("DISTANCE_BRACKET: lo=%r hi=%r candidates=%d", lo, hi, len(cand))

    witness = None
    if want_witness:
        eps_w = hi + 0.5 * gap
        entries = space.sweep(eps_w)
        budget = max(0.5 * gap, space.slack(hi))
        if entries is not None:
            witness = space.witness(entries, budget)
        if witness is not None and witness_error(x, y, witness) > hi + gap + space.slack(hi):
            logger.debug("WITNESS_DROPPED: re-evaluation above the bracket")
            witness = None
    return DistanceResult(hi, gap, witness)


def rho_truncation_depth(tol: float) -> int:
    """Number K of rho_k terms whose partial sum is within tol of rho-infinity."""
    if not (0 < tol < 1):
        raise DomainError(f"Tolerance must lie in (0, 1), got {tol}")
    return int(math.ceil(math.log2(1.0 / tol))) + 1


def required_horizon(tol: float) -> float:
    return float(rho_truncation_depth(tol))


def rho_infinity(x: PiecewisePath, y: PiecewisePath, tol: float) -> float:
    """Truncated sum over k = 1..K of 2^-k rho_k / (1 + rho_k); tail below 2^-K."""
    depth = rho_truncation_depth(tol)
    needed = float(depth)
    if x.horizon < needed or y.horizon < needed:
        raise InsufficientHorizonError(
            f"rho-infinity at tolerance {tol} needs paths on [0, {needed}], "
            f"got [0, {x.horizon}] and [0, {y.horizon}]",
            required_horizon=needed,
        )
    total = 0.0
    for k in range(1, depth + 1):
        q = skorokhod_distance(x, y, float(k), tol / depth, want_witness=False).value
        total += 2.0 ** (-k) * q / (1.0 + q)
    return total


def _time_change_path(y) -> PiecewisePath:
    return y.path if isinstance(y, TimeChange) else y


def rho_E(z1, z2, tol: float) -> float:
    """Product metric rho_inf(x1, x2) + rho_1(y1, y2) on (outer, time change) pairs."""
    x1, y1 = z1
    x2, y2 = z2
    outer = rho_infinity(x1, x2, tol)
    inner = skorokhod_distance(_time_change_path(y1), _time_change_path(y2), 1.0, tol,
                               want_witness=False).value
    return outer + inner
