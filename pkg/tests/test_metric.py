import math

import numpy as np
import pytest

from cadlag_line.core.metric import (MAX_CANDIDATE_PAIRS, apply_reparam, reparam_distortion, required_horizon,
                                     rho_E, rho_infinity, rho_truncation_depth, skorokhod_decision,
                                     skorokhod_distance, sup_distance, witness_error)
from cadlag_line.core.paths import (PiecewisePath, constant_path, evaluate, from_samples, identity_path,
                                    indicator_path, linear_path, reparam_from_nodes, step_path, time_change)
from cadlag_line.utils.errors import DomainError, InsufficientHorizonError

H = 1.0 / 256


def lattice_distance(x, y, h=H):
    """Minimax monotone lattice coupling of x and y sampled every h on [0, 1]."""
    steps = int(round(1.0 / h))
    grid = np.arange(steps + 1) * h
    grid[-1] = 1.0
    xv = np.asarray(evaluate(x, grid))
    yv = np.asarray(evaluate(y, grid))
    cost = np.maximum(np.abs(xv[:, None] - yv[None, :]), np.abs(grid[:, None] - grid[None, :])).tolist()
    prev = None
    for a in range(steps + 1):
        row = [0.0] * (steps + 1)
        for b in range(steps + 1):
            if a == 0 and b == 0:
                row[b] = cost[0][0]
                continue
            best = math.inf
            if a:
                best = prev[b]
                if b:
                    best = min(best, prev[b - 1])
            if b:
                best = min(best, row[b - 1])
            row[b] = max(cost[a][b], best)
        prev = row
    return prev[-1]


def random_step_path(rng, max_jumps=4):
    count = int(rng.integers(0, max_jumps + 1))
    times = rng.integers(1, 32, size=count) / 32.0
    sizes = np.round(rng.normal(size=count), 3)
    return step_path(list(zip(times.tolist(), sizes.tolist())), 1.0)


def random_sloped_path(rng, max_jumps=4, max_slope=0.25):
    """Piecewise-linear path with breakpoints on the 1/32 grid and at most max_jumps jumps.

    Slopes stay below max_slope so sampling every H moves a segment by at most H / 4.
    """
    inner = np.unique(rng.integers(1, 32, size=int(rng.integers(0, max_jumps + 1)))) / 32.0
    bp = np.concatenate(([0.0], inner, [1.0]))
    slopes = np.round(rng.uniform(-max_slope, max_slope, size=len(bp) - 1), 3)
    slopes[rng.random(len(slopes)) < 0.25] = 0.0
    values = np.empty(len(slopes))
    values[0] = round(float(rng.normal()), 3)
    for i in range(1, len(values)):
        left = values[i - 1] + slopes[i - 1] * (bp[i] - bp[i - 1])
        values[i] = left + (round(float(rng.normal()), 3) if rng.random() < 0.75 else 0.0)
    terminal = values[-1] + slopes[-1] * (bp[-1] - bp[-2])
    return PiecewisePath(1.0, bp, values, slopes, terminal)


def check_against_lattice(seed, pairs):
    rng = np.random.default_rng(seed)
    for _ in range(pairs):
        x, y = random_sloped_path(rng), random_sloped_path(rng)
        result = skorokhod_distance(x, y, 1.0, 1e-10)
        assert abs(result.value - lattice_distance(x, y)) <= H + 1e-9
        if result.witness is not None:
            assert witness_error(x, y, result.witness) <= result.value + 1e-8


class TestSupDistance:
    def test_exact_on_jumps(self):
        assert sup_distance(indicator_path(0.3, 1.0), indicator_path(0.4, 1.0), 1.0) == 1.0

    def test_linear_difference(self):
        assert sup_distance(linear_path(1.0, 1.0), linear_path(3.0, 1.0), 1.0) == pytest.approx(2.0)

    def test_horizon_must_be_covered(self):
        with pytest.raises(DomainError):
            sup_distance(indicator_path(0.3, 1.0), indicator_path(0.4, 2.0), 1.5)


class TestDistance:
    def test_identical_paths(self, sawtooth):
        result = skorokhod_distance(sawtooth, sawtooth, 2.0, 1e-9)
        assert result.witness is not None
        assert result.value == 0.0
        assert result.certified_gap == 0.0
        assert reparam_distortion(result.witness) == 0.0

    def test_indicator_shift(self):
        result = skorokhod_distance(indicator_path(0.3, 1.0), indicator_path(0.4, 1.0), 1.0, 1e-9)
        assert result.value == pytest.approx(0.1, abs=1e-9)
        assert result.certified_gap <= 1e-9

    def test_indicators_match_time_shift(self, rng):
        for a, b in rng.uniform(0.0, 1.0, size=(100, 2)):
            value = skorokhod_distance(indicator_path(a, 1.0), indicator_path(b, 1.0), 1.0, 1e-9).value
            assert value == pytest.approx(min(abs(a - b), 1.0), abs=1e-9)

    def test_jump_size_mismatch_is_not_removable(self):
        y = step_path([(0.5, 2.0)], 1.0)
        assert skorokhod_distance(indicator_path(0.5, 1.0), y, 1.0, 1e-9).value == pytest.approx(1.0, abs=1e-9)

    def test_one_jump_against_two(self):
        y = step_path([(0.4, 0.5), (0.5, 0.5)], 1.0)
        value = skorokhod_distance(indicator_path(0.5, 1.0), y, 1.0, 1e-9).value
        assert value == pytest.approx(0.5, abs=1e-9)

    def test_terminal_jump_counts(self):
        x = constant_path(0.0, 1.0)
        y = step_path([(1.0, 1.0)], 1.0)
        assert skorokhod_distance(x, y, 1.0, 1e-9).value == pytest.approx(1.0, abs=1e-9)

    def test_restricts_to_k(self):
        x = indicator_path(1.5, 2.0)
        y = constant_path(0.0, 2.0)
        assert skorokhod_distance(x, y, 1.0, 1e-9).value == 0.0

    def test_bounded_by_sup_distance(self, rng):
        for _ in range(20):
            x, y = random_step_path(rng), random_step_path(rng)
            assert skorokhod_distance(x, y, 1.0, 1e-9).value <= sup_distance(x, y, 1.0) + 1e-12

    def test_symmetric(self, rng):
        for _ in range(20):
            x, y = random_step_path(rng), random_step_path(rng)
            forward = skorokhod_distance(x, y, 1.0, 1e-9).value
            backward = skorokhod_distance(y, x, 1.0, 1e-9).value
            assert forward == pytest.approx(backward, abs=2e-9)

    def test_triangle_inequality(self, rng):
        for _ in range(20):
            x, y, z = (random_step_path(rng) for _ in range(3))
            xz = skorokhod_distance(x, z, 1.0, 1e-9).value
            xy = skorokhod_distance(x, y, 1.0, 1e-9).value
            yz = skorokhod_distance(y, z, 1.0, 1e-9).value
            assert xz <= xy + yz + 3e-9

    def test_witness_certifies_value(self):
        x = indicator_path(0.5, 1.0)
        y = from_samples([0.0, 0.4, 0.6, 1.0], [0.0, 0.0, 1.0, 1.0])
        result = skorokhod_distance(x, y, 1.0, 1e-9)
        assert result.value == pytest.approx(0.5, abs=1e-9)
        assert result.witness is not None
        assert witness_error(x, y, result.witness) <= result.value + result.certified_gap + 1e-9

    def test_witness_aligns_jumps(self):
        x, y = indicator_path(0.3, 1.0), indicator_path(0.4, 1.0)
        result = skorokhod_distance(x, y, 1.0, 1e-9)
        assert witness_error(x, y, result.witness) <= 0.1 + 1e-8

    def test_no_witness_on_request(self):
        result = skorokhod_distance(indicator_path(0.3, 1.0), indicator_path(0.4, 1.0), 1.0, 1e-9,
                                    want_witness=False)
        assert result.witness is None
        assert result.to_dict(include_witness=False)["witness"] is None

    def test_result_document(self):
        result = skorokhod_distance(indicator_path(0.3, 1.0), indicator_path(0.4, 1.0), 1.0, 1e-9)
        doc = result.to_dict()
        assert set(doc) == {"value", "gap", "witness"}
        assert doc["witness"]["breakpoints"][0] == 0.0
        assert result.lower == result.value - result.certified_gap

    def test_continuous_paths(self):
        x = linear_path(1.0, 1.0)
        y = from_samples([0.0, 0.5, 1.0], [0.0, 0.25, 1.0])
        value = skorokhod_distance(x, y, 1.0, 1e-9).value
        assert 0.0 < value <= sup_distance(x, y, 1.0)

    def test_bad_arguments(self, sawtooth):
        with pytest.raises(DomainError):
            skorokhod_distance(sawtooth, sawtooth, 2.0, 0.0)
        with pytest.raises(DomainError):
            skorokhod_distance(sawtooth, sawtooth, 3.0, 1e-9)
        with pytest.raises(DomainError):
            skorokhod_distance(sawtooth, sawtooth, 0.0, 1e-9)

    def test_large_inputs_skip_candidate_enumeration(self):
        count = int(math.isqrt(MAX_CANDIDATE_PAIRS)) + 10
        times = np.linspace(0.0, 1.0, count + 1)
        x = from_samples(times, np.sin(7 * times))
        y = from_samples(times, np.sin(7 * times) + 0.01)
        value = skorokhod_distance(x, y, 1.0, 1e-6, want_witness=False).value
        assert value == pytest.approx(0.01, abs=1e-6)


class TestDecision:
    def test_feasible_above_distance(self):
        decision = skorokhod_decision(indicator_path(0.3, 1.0), indicator_path(0.4, 1.0), 1.0, 0.11)
        assert decision.feasible
        assert witness_error(indicator_path(0.3, 1.0), indicator_path(0.4, 1.0), decision.witness) <= 0.11 + 1e-8

    def test_infeasible_below_distance(self):
        decision = skorokhod_decision(indicator_path(0.3, 1.0), indicator_path(0.4, 1.0), 1.0, 0.09)
        assert not decision.feasible
        assert decision.witness is None

    def test_eps_must_be_positive(self, sawtooth):
        with pytest.raises(DomainError):
            skorokhod_decision(sawtooth, sawtooth, 1.0, 0.0)


class TestReparam:
    def test_distortion(self):
        lam = reparam_from_nodes([0.0, 0.5, 1.0], [0.0, 0.2, 1.0])
        assert reparam_distortion(lam) == pytest.approx(0.3)

    def test_apply(self):
        lam = reparam_from_nodes([0.0, 0.5, 1.0], [0.0, 0.2, 1.0])
        moved = apply_reparam(indicator_path(0.2, 1.0), lam)
        assert evaluate(moved, 0.49) == 0.0
        assert evaluate(moved, 0.51) == 1.0


class TestRhoInfinity:
    def test_truncation_depth(self):
        assert rho_truncation_depth(1e-9) == 31
        assert required_horizon(1e-6) == 21.0
        with pytest.raises(DomainError):
            rho_truncation_depth(1.5)

    def test_constants_half(self):
        tol = 1e-6
        horizon = required_horizon(tol)
        value = rho_infinity(constant_path(0.0, horizon), constant_path(1.0, horizon), tol)
        assert value == pytest.approx(0.5, abs=2 * tol)

    def test_short_paths_are_rejected(self):
        with pytest.raises(InsufficientHorizonError) as info:
            rho_infinity(constant_path(0.0, 2.0), constant_path(1.0, 2.0), 1e-6)
        assert info.value.required_horizon == 21.0

    def test_shifted_indicators(self):
        tol = 1e-9
        horizon = required_horizon(tol)
        q = 2.0 ** -5
        value = rho_infinity(indicator_path(0.5 - q, horizon), indicator_path(0.5, horizon), tol)
        assert value == pytest.approx(q / (1 + q), abs=2 * tol)

    def test_rho_E_sums_parts(self):
        tol = 1e-6
        horizon = required_horizon(tol)
        x1, x2 = constant_path(0.0, horizon), constant_path(1.0, horizon)
        lam = time_change(identity_path(1.0))
        mu = time_change(linear_path(0.5, 1.0))
        assert rho_E((x1, lam), (x1, lam), tol) == 0.0
        value = rho_E((x1, lam), (x2, mu), tol)
        inner = skorokhod_distance(lam.path, mu.path, 1.0, tol).value
        assert value == pytest.approx(rho_infinity(x1, x2, tol) + inner)


class TestLatticeOracle:
    def test_small_sample(self):
        check_against_lattice(seed=7, pairs=15)

    @pytest.mark.slow
    def test_two_hundred_pairs(self):
        check_against_lattice(seed=2024, pairs=200)
