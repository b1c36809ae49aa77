import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from ffabc.inference import (
    KLDiscrepancy,
    LevelStall,
    PopulationCollapse,
    PriorSpec,
    SamplerConfig,
    SummaryDiscrepancy,
    ThresholdTooTight,
    abcsubsim,
    apmcabc,
    rejection_abc,
)
from ffabc.models import ForwardModel, GaussianToyModel
from ffabc.scheduler import Scheduler
from ffabc.summaries import SummaryVector

TOY_PRIOR = PriorSpec.uniform(mu=(-10.0, 10.0))
MEAN = SummaryDiscrepancy(("mean",))


class Constant(ForwardModel):
    """Summary independent of phi, so every particle sits at the same distance."""

    payload_kind = "constant"
    param_names = ("a", "b")

    def __init__(self, value=0.0):
        self.value = value

    def simulate(self, phi, seed):
        return SummaryVector(("mean",), (self.value,))


class Failing(ForwardModel):
    payload_kind = "failing"
    param_names = ("mu",)

    def simulate(self, phi, seed):
        raise RuntimeError("simulator crashed")


ZERO = SummaryVector(("mean",), (0.0,))
BOX2 = PriorSpec.uniform(a=(0.0, 1.0), b=(-2.0, 3.0))


# ---------------------------------------------------------------------------
# discrepancies


def test_summary_discrepancy_scales():
    a = SummaryVector(("S4", "S7"), (1.0, 2.0))
    b = SummaryVector(("S4", "S7"), (1.5, 2.2))
    assert SummaryDiscrepancy((4, 7))(a, b) == pytest.approx(0.35)
    assert SummaryDiscrepancy((4, 7), {"S7": 0.1})(a, b) == pytest.approx((0.5 + 2.0) / 2)
    assert SummaryDiscrepancy((4, 7))(None, b) == math.inf
    with pytest.raises(ValueError):
        SummaryDiscrepancy((4,), {"S4": 0.0})


def test_kl_discrepancy_needs_series():
    assert KLDiscrepancy()(None, ZERO) == math.inf
    assert KLDiscrepancy()(ZERO, ZERO) == math.inf


# ---------------------------------------------------------------------------
# rejection ABC


def test_rejection_infinite_gamma_returns_prior():
    res = rejection_abc(Constant(1.0), BOX2, MEAN, ZERO, 10_000, math.inf, seed=3)
    assert len(res.population) == 10_000
    np.testing.assert_allclose(res.population.weights, 1e-4)
    assert stats.kstest(res.population.column("a"), "uniform").pvalue > 1e-3
    assert stats.kstest(res.population.column("b"), "uniform", args=(-2.0, 5.0)).pvalue > 1e-3


def test_rejection_toy_posterior(toy):
    model, obs, (mean, std) = toy
    res = rejection_abc(model, PriorSpec.uniform(mu=(0.0, 4.0)), MEAN, obs, 300, 0.05, seed=1, batch_size=2000)
    pop = res.population
    assert np.all(pop.distances < 0.05)
    assert pop.weights @ pop.phi[:, 0] == pytest.approx(mean, abs=0.05)
    assert res.diagnostics[-1].acceptance_rate == pytest.approx(300 / res.n_simulations, rel=0.2)


def test_rejection_tight_gamma_conjugate():
    model = GaussianToyModel(100)
    obs = SummaryVector(("mean",), (0.0,))
    res = rejection_abc(model, PriorSpec.uniform(mu=(-2.0, 2.0)), MEAN, obs, 200, 0.01, seed=7, batch_size=5000)
    m = res.population.weights @ res.population.phi[:, 0]
    assert abs(m - 0.0) < 3 * 0.1


def test_rejection_threshold_too_tight():
    with pytest.raises(ThresholdTooTight):
        rejection_abc(Constant(1.0), BOX2, MEAN, ZERO, 10, 0.5, seed=0, batch_size=1000)


def test_rejection_counts_failures():
    with pytest.raises(ThresholdTooTight):
        rejection_abc(Failing(), TOY_PRIOR, MEAN, ZERO, 10, 1.0, seed=0, batch_size=500, probe_budget=1000)


# ---------------------------------------------------------------------------
# APMCABC


def test_apmcabc_recovers_toy_posterior(toy):
    model, obs, (mean, std) = toy
    res = apmcabc(model, TOY_PRIOR, MEAN, obs, SamplerConfig(n_sample=400, n_step=20, rng_seed=5))
    pop = res.population
    m = pop.weights @ pop.phi[:, 0]
    s = math.sqrt(pop.weights @ (pop.phi[:, 0] - m) ** 2)
    assert m == pytest.approx(mean, abs=0.15)
    assert s == pytest.approx(std, rel=0.3)


def test_apmcabc_thresholds_monotone(toy):
    model, obs, _ = toy
    res = apmcabc(model, TOY_PRIOR, MEAN, obs, SamplerConfig(n_sample=100, n_step=12, rng_seed=1))
    g = res.gammas
    assert all(b <= a for a, b in zip(g, g[1:]))
    assert len(res.history) == len(g)
    assert res.diagnostics[-1].n_simulations == res.n_simulations


def test_apmcabc_acceptance_stop_semantics(toy):
    model, obs, _ = toy
    cfg = SamplerConfig(n_sample=100, n_step=50, acceptance_rate_cutoff=0.03, rng_seed=2)
    res = apmcabc(model, TOY_PRIOR, MEAN, obs, cfg)
    rates = [d.acceptance_rate for d in res.diagnostics]
    assert res.stop_reason == "acceptance_rate"
    assert rates[-1] < 0.03
    assert all(r >= 0.03 for r in rates[:-1])


def test_apmcabc_step_count_includes_initial(toy):
    model, obs, _ = toy
    res = apmcabc(model, TOY_PRIOR, MEAN, obs, SamplerConfig(n_sample=20, n_step=3, acceptance_rate_cutoff=1e-9))
    assert [d.step for d in res.diagnostics] == [0, 1, 2]
    assert res.n_simulations == 20 + 2 * 10


def test_apmcabc_budget_matches_scheduler(toy):
    model, obs, _ = toy
    sched = Scheduler("dynamic", 2)
    res = apmcabc(model, TOY_PRIOR, MEAN, obs,
                  SamplerConfig(n_sample=50, n_step=100, acceptance_rate_cutoff=1e-9, max_simulations=333), sched)
    assert res.n_simulations == sched.executed == 333
    assert res.stop_reason == "budget"


def test_apmcabc_zero_distance_keeps_prior():
    # all distances tie at zero, so the first refill has acceptance 0 and stops
    res = apmcabc(Constant(0.0), BOX2, MEAN, ZERO, SamplerConfig(n_sample=2000, n_step=5))
    assert res.stop_reason == "acceptance_rate"
    assert stats.kstest(res.history[0].column("a"), "uniform").pvalue > 1e-3


@pytest.mark.parametrize("policy", ["static", "dynamic"])
@pytest.mark.parametrize("workers", [1, 3])
def test_apmcabc_worker_invariant(toy, policy, workers):
    model, obs, _ = toy
    cfg = SamplerConfig(n_sample=40, n_step=4, rng_seed=9)
    ref = apmcabc(model, TOY_PRIOR, MEAN, obs, cfg).population.to_csv()
    assert apmcabc(model, TOY_PRIOR, MEAN, obs, cfg, Scheduler(policy, workers)).population.to_csv() == ref


def test_apmcabc_collapse_on_failing_model():
    with pytest.raises(PopulationCollapse):
        apmcabc(Failing(), TOY_PRIOR, MEAN, ZERO, SamplerConfig(n_sample=10, n_step=3))


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_apmcabc_population_invariants(seed):
    obs = SummaryVector(("mean",), (1.0,))
    res = apmcabc(GaussianToyModel(10), TOY_PRIOR, MEAN, obs, SamplerConfig(n_sample=20, n_step=4, rng_seed=seed))
    for pop in res.history:
        assert pop.weights.sum() == pytest.approx(1.0)
        assert np.all(pop.weights > 0)
        assert np.all(TOY_PRIOR.contains(pop.phi))
        assert len(pop) == 10


# ---------------------------------------------------------------------------
# ABCsubsim


def test_abcsubsim_thresholds_decrease(toy):
    model, obs, (mean, _) = toy
    cfg = SamplerConfig(n_sample=200, n_step=5, chains_per_level=20, rng_seed=4)
    res = abcsubsim(model, TOY_PRIOR, MEAN, obs, cfg)
    g = res.gammas
    assert g[0] == math.inf
    assert all(b < a for a, b in zip(g, g[1:]))
    pop = res.population
    assert len(pop) == 200
    assert np.all(pop.distances < g[-1])
    assert pop.weights @ pop.phi[:, 0] == pytest.approx(mean, abs=0.2)


def test_abcsubsim_chain_layout(toy):
    model, obs, _ = toy
    res = abcsubsim(model, TOY_PRIOR, MEAN, obs, SamplerConfig(n_sample=40, n_step=2, chains_per_level=4))
    prev = res.history[0]
    seeds = np.sort(prev.distances)[:4]
    # every chain starts at one of the level seeds
    np.testing.assert_array_equal(np.sort(res.population.distances[::10]), seeds)


def test_abcsubsim_divisibility():
    with pytest.raises(ValueError):
        abcsubsim(Constant(), BOX2, MEAN, ZERO, SamplerConfig(n_sample=30, chains_per_level=7))
    with pytest.raises(ValueError):
        SamplerConfig(n_sample=30, chains_per_level=5, chain_length=5)


class Degrading(Constant):
    """Matches the data for the first ``n`` calls and never again."""

    def __init__(self, n):
        super().__init__()
        self.left = n

    def simulate(self, phi, seed):
        self.left -= 1
        return SummaryVector(("mean",), (0.0 if self.left >= 0 else 1.0,))


def test_abcsubsim_level_stall():
    with pytest.raises(LevelStall) as info:
        abcsubsim(Degrading(20), BOX2, MEAN, ZERO, SamplerConfig(n_sample=20, n_step=3, chains_per_level=5))
    assert info.value.level == 1


@pytest.mark.parametrize("policy", ["static", "dynamic"])
def test_abcsubsim_worker_invariant(toy, policy):
    model, obs, _ = toy
    cfg = SamplerConfig(n_sample=40, n_step=3, chains_per_level=8, rng_seed=2)
    ref = abcsubsim(model, TOY_PRIOR, MEAN, obs, cfg).population.to_csv()
    assert abcsubsim(model, TOY_PRIOR, MEAN, obs, cfg, Scheduler(policy, 4)).population.to_csv() == ref


def test_sampler_config_validation():
    for kw in ({"n_sample": 1}, {"alpha": 1.0}, {"acceptance_rate_cutoff": 0.0}, {"n_step": 0},
               {"max_simulations": 5}):
        with pytest.raises(ValueError):
            SamplerConfig(**kw)
    assert SamplerConfig(n_sample=5, alpha=0.5).n_keep == 3
