import numpy as np
import pytest

from cadlag_line.core.paths import (CLASS_B, CLASS_PI, compose, evaluate, identity_path, is_continuous,
                                    is_nondecreasing, jumps)
from cadlag_line.core.processes import (CompoundPoissonSampler, DonskerWienerSampler, IdentitySampler,
                                        JumpDistribution, PoissonSampler, ProcessSampler, SubstitutedSampler,
                                        TimeChangeSampler, compound_poisson_outer, donsker_wiener,
                                        index_descriptor, insurance_loss_sampler, poisson_path,
                                        sampler_from_descriptor, substitute, time_change_linear,
                                        time_change_random)
from cadlag_line.utils.errors import ConfigError, InvariantViolation
from cadlag_line.utils.seeding import ROLE_INNER, ROLE_OUTER, SeedKey


def terminal_values(sampler, count, seed=99):
    key = SeedKey(seed)
    return np.array([sampler.sample(key.spawn(i)).terminal for i in range(count)])


class TestJumpDistribution:
    @pytest.mark.parametrize("family", ["rademacher", "centered_uniform", "normal"])
    def test_standardized(self, family):
        z = JumpDistribution(family).standardized(SeedKey(3).generator(), 20000)
        assert abs(z.mean()) < 0.05
        assert abs(z.var() - 1.0) < 0.05

    def test_rademacher_values(self):
        draws = JumpDistribution().draw(SeedKey(3).generator(), 100, 4)
        assert set(np.unique(draws)) <= {-0.5, 0.5}

    def test_moments(self):
        dist = JumpDistribution("normal", loc=1.0, scale=2.0)
        assert dist.mean(4) == 0.25
        assert dist.second_moment(4) == pytest.approx(0.0625 + 1.0)

    @pytest.mark.parametrize("kwargs", [{"family": "cauchy"}, {"scale": 0.0}, {"loc": float("nan")},
                                        {"loc": True}])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            JumpDistribution(**kwargs)

    def test_descriptor_is_strict(self):
        with pytest.raises(ConfigError):
            JumpDistribution.from_descriptor({"family": "normal", "shape": 2})


class TestPoisson:
    def test_unit_jumps(self):
        path = poisson_path(5.0, 2.0, 11)
        assert is_nondecreasing(path)
        assert all(size == 1.0 for _, size in jumps(path))
        assert path.terminal == len(jumps(path))

    def test_mean_count(self):
        counts = terminal_values(PoissonSampler(rate=3.0), 4000)
        assert counts.mean() == pytest.approx(3.0, abs=0.15)


class TestCompoundPoisson:
    def test_deterministic(self):
        sampler = CompoundPoissonSampler(n=10)
        assert sampler.sample(SeedKey(5)) == sampler.sample(5)
        assert sampler.sample(5) != sampler.sample(6)

    def test_jumps_are_the_claims(self):
        sampler = CompoundPoissonSampler(n=10)
        times, sizes = sampler.arrivals(8)
        path = sampler.sample(8)
        found = jumps(path)
        assert [t for t, _ in found] == pytest.approx(times.tolist())
        assert [s for _, s in found] == pytest.approx(sizes.tolist())

    def test_formula_moments(self):
        sampler = CompoundPoissonSampler(n=4, jumps=JumpDistribution("normal", loc=1.0, scale=2.0))
        assert sampler.mean(1.0) == pytest.approx(1.0)
        assert sampler.variance(1.0) == pytest.approx(4.25)

    def test_terminal_variance(self):
        values = terminal_values(CompoundPoissonSampler(n=20), 3000)
        assert values.mean() == pytest.approx(0.0, abs=0.1)
        assert values.var() == pytest.approx(1.0, abs=0.15)

    def test_longer_horizon(self):
        path = compound_poisson_outer(10, JumpDistribution(), 3.0, 2)
        assert path.horizon == 3.0

    @pytest.mark.parametrize("kwargs", [{"n": 0}, {"n": 1.5}, {"rate": -1.0}, {"horizon": 0.0}])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            CompoundPoissonSampler(**kwargs)


class TestDonsker:
    def test_walk_grid(self):
        path = donsker_wiener(16, 1.0, 4)
        assert is_continuous(path, atol=1e-12)
        grid = np.arange(17) / 16
        walk = np.asarray(evaluate(path, grid)) / 0.25
        assert np.allclose(walk, np.round(walk))
        assert np.all(np.abs(np.diff(np.round(walk))) == 1)

    def test_sampler_scales_steps_with_horizon(self):
        path = DonskerWienerSampler(steps_per_unit=8).sample(1, horizon=2.0)
        assert path.horizon == 2.0
        assert path.segment_count <= 16

    def test_terminal_variance(self):
        values = terminal_values(DonskerWienerSampler(steps_per_unit=64), 3000)
        assert values.var() == pytest.approx(1.0, abs=0.15)


class TestTimeChanges:
    def test_linear(self):
        lam = time_change_linear(2.0)
        assert lam.class_flag == CLASS_PI
        assert lam.endpoint_value == 2.0
        assert time_change_linear(0.0).class_flag == CLASS_B

    def test_integrated_step_hits_endpoint(self):
        lam = TimeChangeSampler.of("integrated_step", a=1.0, pieces=6, endpoint=3.0).sample_time_change(21)
        assert lam.class_flag == CLASS_PI
        assert lam.path.terminal == 3.0
        assert lam.starts_at_origin
        assert np.all(lam.path.slopes > 0)

    def test_integrated_step_without_endpoint_varies(self):
        sampler = TimeChangeSampler.of("integrated_step", a=1.0, cv=0.5)
        ends = {sampler.sample_time_change(s).path.terminal for s in range(5)}
        assert len(ends) == 5

    def test_zero_cv_is_linear(self):
        lam = TimeChangeSampler.of("integrated_step", a=1.5, cv=0.0).sample_time_change(1)
        assert lam.path.terminal == 1.5

    def test_subordinator(self):
        lam = time_change_random("subordinator_step", {"rate": 6.0, "mean_jump": 0.5}, 13)
        assert lam.class_flag == CLASS_B
        assert lam.starts_at_origin
        assert is_nondecreasing(lam.path)
        assert all(size > 0 for _, size in jumps(lam.path))

    def test_scaled_poisson(self):
        lam = time_change_random("scaled_poisson", {"a": 2.0, "n": 10}, 3)
        assert all(size == pytest.approx(0.1) for _, size in jumps(lam.path))
        raw = time_change_random("scaled_poisson", {"a": 2.0, "n": 10, "normalize": False}, 3)
        assert all(size == 1.0 for _, size in jumps(raw.path))

    def test_scaled_poisson_mean(self):
        values = terminal_values(TimeChangeSampler.of("scaled_poisson", a=2.0, n=50), 2000)
        assert values.mean() == pytest.approx(2.0, abs=0.05)

    def test_zero_rate_is_constant(self):
        lam = time_change_random("scaled_poisson", {"a": 0.0}, 3)
        assert lam.path.terminal == 0.0

    def test_settings_are_canonical(self):
        assert TimeChangeSampler.of("linear", a=2.0) == TimeChangeSampler("linear", (("a", 2.0),))
        assert TimeChangeSampler.of("integrated_step").values["pieces"] == 8

    @pytest.mark.parametrize("kind,params", [
        ("brownian", {}),
        ("linear", {"rate": 1.0}),
        ("linear", {"a": -1.0}),
        ("integrated_step", {"pieces": 0}),
        ("integrated_step", {"a": 0.0, "endpoint": 1.0}),
        ("subordinator_step", {"mean_jump": 0.0}),
        ("scaled_poisson", {"normalize": 1}),
    ])
    def test_rejects(self, kind, params):
        with pytest.raises(ConfigError):
            TimeChangeSampler.of(kind, **params)

    def test_fixed_horizon(self):
        with pytest.raises(ConfigError):
            TimeChangeSampler.of("linear").sample(1, horizon=2.0)


class TestSubstitution:
    def test_sample_is_the_composition(self):
        sampler = substitute(CompoundPoissonSampler(n=10), TimeChangeSampler.of("linear", a=2.0))
        outer, lam = sampler.draw(17)
        assert outer.horizon == 2.0
        assert sampler.sample(17) == compose(outer, lam)
        assert sampler.sample(17).terminal == outer.terminal

    def test_independent_streams(self):
        inner = TimeChangeSampler.of("integrated_step", a=1.0)
        outer_sampler = CompoundPoissonSampler(n=10)
        sampler = substitute(outer_sampler, inner)
        key = SeedKey(4)
        outer, lam = sampler.draw(key)
        assert lam == inner.sample_time_change(key.spawn(ROLE_INNER))
        assert outer == outer_sampler.sample(key.spawn(ROLE_OUTER), horizon=max(1.0, lam.max_value))

    def test_inner_must_be_time_change(self):
        with pytest.raises(ConfigError):
            SubstitutedSampler(CompoundPoissonSampler(), IdentitySampler())

    def test_outer_must_honour_the_horizon(self):
        class FixedHorizon(ProcessSampler):
            family = "fixed"

            def sample(self, seed, horizon=None):
                return identity_path(1.0)

        sampler = SubstitutedSampler(FixedHorizon(), TimeChangeSampler.of("linear", a=2.0))
        with pytest.raises(InvariantViolation):
            sampler.sample(1)

    def test_linear_inner_scales_variance(self):
        sampler = substitute(CompoundPoissonSampler(n=50), TimeChangeSampler.of("linear", a=2.0))
        values = terminal_values(sampler, 3000)
        assert values.var() == pytest.approx(2.0, abs=0.3)

    def test_insurance_losses(self):
        contracts = TimeChangeSampler.of("scaled_poisson", a=3.0, n=4)
        sampler = insurance_loss_sampler(4, JumpDistribution(), contracts)
        path = sampler.sample(9)
        assert path.horizon == 1.0
        grid = np.linspace(0.0, 1.0, 41)
        doubled = 2.0 * np.asarray(evaluate(path, grid))
        assert np.allclose(doubled, np.round(doubled))


class TestDescriptors:
    @pytest.mark.parametrize("sampler", [
        IdentitySampler(),
        PoissonSampler(rate=2.0, horizon=3.0),
        CompoundPoissonSampler(n=7, jumps=JumpDistribution("normal", 0.5, 2.0)),
        DonskerWienerSampler(steps_per_unit=32),
        TimeChangeSampler.of("subordinator_step", rate=2.0),
        substitute(CompoundPoissonSampler(n=3), TimeChangeSampler.of("scaled_poisson", a=2.0, n=3)),
    ])
    def test_rebuild(self, sampler):
        assert sampler_from_descriptor(sampler.descriptor()) == sampler

    @pytest.mark.parametrize("data", [
        [],
        {"rate": 1.0},
        {"family": "levy"},
        {"family": "poisson", "rate": 1.0, "mu": 2},
        {"family": "poisson", "rate": "fast"},
        {"family": "substitute", "outer": {"family": "identity"}},
        {"family": "substitute", "outer": {"family": "identity"}, "inner": {"family": "poisson"}},
    ])
    def test_rejects(self, data):
        with pytest.raises(ConfigError):
            sampler_from_descriptor(data)

    def test_index_descriptor(self):
        base = substitute(CompoundPoissonSampler(), TimeChangeSampler.of("scaled_poisson", a=2.0)).descriptor()
        indexed = index_descriptor(base, 50)
        assert indexed["outer"]["n"] == 50
        assert indexed["inner"]["n"] == 50
        assert base["outer"]["n"] == 1
        walk = index_descriptor({"family": "donsker_wiener"}, 128)
        assert walk["steps_per_unit"] == 128
        assert index_descriptor({"family": "linear", "a": 1.0}, 9) == {"family": "linear", "a": 1.0}
