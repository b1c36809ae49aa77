"""Rejection ABC, adaptive population Monte Carlo ABC and subset-simulation ABC.

All three samplers push every forward simulation of a step through a
:class:`~ffabc.scheduler.Scheduler` as one batch. Each task seed comes from
:func:`derive_seed`, and all other randomness is drawn by the coordinating
thread from stage-specific generators, so results do not depend on the
number of workers or the scheduling policy.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..scheduler import Scheduler, TaskSpec
from ..summaries import KL_ALPHA, KL_BINS, SummaryVector, kl_divergence, summary_distance
from .kernels import (
    KernelDegenerate,
    PerturbationKernel,
    PriorSpec,
    mvn_density,
    regularize,
    weighted_covariance,
)
from .population import DiagnosticsLog, Population, StepDiagnostics, derive_seed, effective_sample_size, stage_rng


class SamplerError(RuntimeError):
    pass


class PopulationCollapse(SamplerError):
    """Every simulation of a step failed or returned a non-finite distance."""

    def __init__(self, step: int, message: str, diagnostics=()):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.diagnostics = list(diagnostics)


class LevelStall(SamplerError):
    """No Metropolis-Hastings proposal was accepted in an ABCsubsim level."""

    def __init__(self, level: int, diagnostics=()):
        super().__init__(f"level {level}: no chain proposal was accepted")
        self.level = level
        self.diagnostics = list(diagnostics)


class ThresholdTooTight(SamplerError):
    pass


# ---------------------------------------------------------------------------
# discrepancies

@dataclass(frozen=True)
class SummaryDiscrepancy:
    """Mean absolute difference over a set of named (or ``S<i>``) summaries.

    ``scales`` maps summary names to divisors for their terms; the default
    (no scales) is the plain mean absolute difference.
    """

    indices: tuple = tuple(range(4, 10))
    scales: tuple = ()
    kind = "summary-mean-abs"

    def __post_init__(self):
        items = self.scales.items() if isinstance(self.scales, dict) else self.scales
        scales = tuple((str(k), float(v)) for k, v in items)
        if any(not (v > 0 and math.isfinite(v)) for _, v in scales):
            raise ValueError(f"summary scales must be positive and finite, got {dict(scales)}")
        object.__setattr__(self, "indices", tuple(self.indices))
        object.__setattr__(self, "scales", scales)

    def __call__(self, sim: SummaryVector | None, obs: SummaryVector) -> float:
        if sim is None:
            return math.inf
        return summary_distance(sim, obs, self.indices, dict(self.scales))


@dataclass(frozen=True)
class KLDiscrepancy:
    """KL divergence between Boltzmann-factor histograms, simulated against observed."""

    n_bins: int = KL_BINS
    alpha: float = KL_ALPHA
    kind = "kl-boltzmann"

    def __call__(self, sim: SummaryVector | None, obs: SummaryVector) -> float:
        if sim is None or sim.boltzmann is None:
            return math.inf
        if obs.boltzmann is None:
            raise ValueError("observed vector carries no Boltzmann-factor series")
        v = np.asarray(sim.boltzmann.values)
        if v.size == 0 or not np.isfinite(v).all():
            return math.inf
        return kl_divergence(sim.boltzmann, obs.boltzmann, self.n_bins, self.alpha)


# ---------------------------------------------------------------------------
# configuration and results

@dataclass(frozen=True)
class SamplerConfig:
    """Sampler settings.

    ``n_step`` counts sampler steps including the initial prior draw (APMCABC)
    or levels including level 0 (ABCsubsim). ``chain_length`` defaults to
    ``n_sample // chains_per_level``. ``max_simulations`` optionally caps the
    total forward-simulation budget.
    """

    n_sample: int = 100
    n_step: int = 10
    acceptance_rate_cutoff: float = 0.03
    alpha: float = 0.5
    chains_per_level: int = 10
    chain_length: int | None = None
    rng_seed: int = 0
    max_simulations: int | None = None

    def __post_init__(self):
        if self.n_sample < 2:
            raise ValueError("n_sample must be >= 2")
        if self.n_step < 1:
            raise ValueError("n_step must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.acceptance_rate_cutoff < 1:
            raise ValueError("acceptance_rate_cutoff must lie in (0, 1)")
        if self.chains_per_level < 1:
            raise ValueError("chains_per_level must be >= 1")
        if self.chain_length is not None and self.chain_length * self.chains_per_level != self.n_sample:
            raise ValueError("chain_length * chains_per_level must equal n_sample")
        if self.max_simulations is not None and self.max_simulations < self.n_sample:
            raise ValueError("max_simulations must be >= n_sample")

    @property
    def n_keep(self) -> int:
        return math.ceil(self.alpha * self.n_sample)


@dataclass
class SamplerResult:
    population: Population
    diagnostics: list[StepDiagnostics]
    n_simulations: int
    sampler: str
    history: list[Population] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def gammas(self) -> list[float]:
        return [d.gamma for d in self.diagnostics]

    @property
    def final_gamma(self) -> float:
        return self.diagnostics[-1].gamma


class _Runner:
    """Shared plumbing: batches, budget counting and diagnostics."""

    def __init__(self, model, observed, discrepancy, scheduler, seed, log):
        self.model = model
        self.observed = observed
        self.discrepancy = discrepancy
        self.scheduler = scheduler if scheduler is not None else Scheduler("dynamic", 1)
        self.seed = seed
        self.log = log if log is not None else DiagnosticsLog()
        self.n_sims = 0
        self.t0 = time.perf_counter()

    def distances(self, phi: np.ndarray, step: int, offset: int = 0):
        seeds = np.array([derive_seed(self.seed, "simulate", step, offset + i) for i in range(len(phi))],
                         dtype=np.int64)
        tasks = [
            TaskSpec(i, tuple(float(x) for x in p), int(s), self.model.payload_kind)
            for i, (p, s) in enumerate(zip(phi, seeds))
        ]
        results = self.scheduler.run(tasks, self.model.execute)
        self.n_sims += len(tasks)
        d = np.array([self.discrepancy(r.summary if r.ok else None, self.observed) for r in results])
        d[~np.isfinite(d)] = np.inf
        return d, seeds

    def record(self, step, gamma, rate, ess) -> StepDiagnostics:
        entry = StepDiagnostics(step, float(gamma), float(rate), float(ess), self.n_sims,
                                time.perf_counter() - self.t0)
        self.log.append(entry)
        return entry


def _keep_best(d: np.ndarray, k: int) -> np.ndarray:
    # stable sort: ties at the boundary go to the earlier insertion index
    return np.argsort(d, kind="stable")[:k]


# ---------------------------------------------------------------------------
# rejection ABC

def rejection_abc(
    model,
    prior: PriorSpec,
    discrepancy,
    observed: SummaryVector,
    n_sample: int,
    gamma: float,
    seed: int,
    scheduler: Scheduler | None = None,
    batch_size: int | None = None,
    probe_budget: int = 10_000,
    rate_floor: float = 1e-4,
    log: DiagnosticsLog | None = None,
) -> SamplerResult:
    """Plain rejection: keep prior draws whose distance is below ``gamma``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if n_sample < 1:
        raise ValueError("n_sample must be >= 1")
    run = _Runner(model, observed, discrepancy, scheduler, seed, log)
    batch_size = batch_size or n_sample
    phis, dists, seeds = [], [], []
    n_acc, batch = 0, 0
    while n_acc < n_sample:
        phi = prior.sample(batch_size, stage_rng(seed, "prior", batch))
        d, s = run.distances(phi, batch)
        ok = d < gamma
        phis.append(phi[ok])
        dists.append(d[ok])
        seeds.append(s[ok])
        n_acc += int(ok.sum())
        batch += 1
        rate = n_acc / run.n_sims
        run.record(batch - 1, gamma, rate, float(n_acc))
        if run.n_sims >= probe_budget and rate < rate_floor:
            raise ThresholdTooTight(
                f"acceptance rate {rate:.2e} after {run.n_sims} simulations is below {rate_floor:g}"
            )
    phi = np.concatenate(phis)[:n_sample]
    pop = Population(phi, np.full(n_sample, 1.0 / n_sample), np.concatenate(dists)[:n_sample],
                     np.concatenate(seeds)[:n_sample], prior.names, prior)
    return SamplerResult(pop, run.log.entries, run.n_sims, "rejection", [pop], "filled")


# ---------------------------------------------------------------------------
# APMCABC

def _mixture_weights(phi_new, kept, w_norm, cov, prior) -> np.ndarray:
    dens = np.atleast_2d(mvn_density(phi_new, kept, cov)).reshape(len(phi_new), len(kept))
    return prior.pdf(phi_new) / (dens @ w_norm)


def apmcabc(
    model,
    prior: PriorSpec,
    discrepancy,
    observed: SummaryVector,
    cfg: SamplerConfig,
    scheduler: Scheduler | None = None,
    log: DiagnosticsLog | None = None,
) -> SamplerResult:
    """Adaptive population Monte Carlo ABC.

    Keeps the best ``ceil(alpha * n_sample)`` particles each step, refills the
    population by perturbing weighted parents with a truncated Gaussian of
    covariance twice the weighted covariance of the survivors, and stops after
    ``n_step`` steps or when the fraction of new particles below the previous
    threshold drops under ``acceptance_rate_cutoff``.
    """
    run = _Runner(model, observed, discrepancy, scheduler, cfg.rng_seed, log)
    n, k = cfg.n_sample, cfg.n_keep
    budget = cfg.max_simulations

    phi = prior.sample(n, stage_rng(cfg.rng_seed, "prior", 0))
    d, seeds = run.distances(phi, 0)
    if not np.isfinite(d).any():
        raise PopulationCollapse(0, "no finite distance among the prior draws", run.log.entries)
    w = np.ones(n)
    keep = _keep_best(d, k)
    phi, d, seeds, w = phi[keep], d[keep], seeds[keep], w[keep]
    gamma = d.max()

    def snapshot():
        return Population(phi, w, d, seeds, prior.names, prior)

    history = [snapshot()]
    run.record(0, gamma, 1.0, effective_sample_size(w))
    stop = "n_step"
    for step in range(1, cfg.n_step):
        n_new = n - k
        if budget is not None:
            n_new = min(n_new, budget - run.n_sims)
            if n_new <= 0:
                stop = "budget"
                break
        w_norm = w / w.sum()
        cov = regularize(2.0 * weighted_covariance(phi, w_norm), prior)
        rng = stage_rng(cfg.rng_seed, "resample", step)
        parents = rng.choice(len(phi), size=n_new, p=w_norm)
        new_phi = np.empty((n_new, prior.dim))
        for i, j in enumerate(parents):
            kern = PerturbationKernel(phi[j], cov, prior)
            try:
                new_phi[i] = kern.sample(derive_seed(cfg.rng_seed, "kernel", step, i))
            except KernelDegenerate as exc:
                raise PopulationCollapse(step, str(exc), run.log.entries) from exc
        new_d, new_seeds = run.distances(new_phi, step)
        if not np.isfinite(new_d).any():
            raise PopulationCollapse(step, "every new particle has a non-finite distance", run.log.entries)
        new_w = _mixture_weights(new_phi, phi, w_norm, cov, prior)
        rate = float(np.mean(new_d < gamma))

        phi = np.concatenate([phi, new_phi])
        d = np.concatenate([d, new_d])
        seeds = np.concatenate([seeds, new_seeds])
        w = np.concatenate([w, new_w])
        keep = _keep_best(d, k)
        phi, d, seeds, w = phi[keep], d[keep], seeds[keep], w[keep]
        gamma = d.max()
        history.append(snapshot())
        run.record(step, gamma, rate, effective_sample_size(w))
        if rate < cfg.acceptance_rate_cutoff:
            stop = "acceptance_rate"
            break
        if budget is not None and run.n_sims >= budget:
            stop = "budget"
            break
    return SamplerResult(history[-1], run.log.entries, run.n_sims, "apmcabc", history, stop)


# ---------------------------------------------------------------------------
# ABCsubsim

def _level_threshold(d_sorted: np.ndarray, k: int) -> float:
    lo = d_sorted[k - 1]
    hi = d_sorted[k] if k < len(d_sorted) else math.inf
    if hi > lo and math.isfinite(hi):
        return 0.5 * (lo + hi)
    return float(np.nextafter(lo, math.inf))


def abcsubsim(
    model,
    prior: PriorSpec,
    discrepancy,
    observed: SummaryVector,
    cfg: SamplerConfig,
    scheduler: Scheduler | None = None,
    log: DiagnosticsLog | None = None,
) -> SamplerResult:
    """Subset-simulation ABC with Metropolis-Hastings chains.

    Each level keeps the ``chains_per_level`` closest particles as seeds, sets
    the level threshold between the last kept and the first dropped distance,
    and grows every seed into a chain of ``chain_length`` states. A proposal is
    accepted only if it lies inside the prior box and its simulated distance is
    below the level threshold; proposals outside the box are rejected without
    a simulation. The proposal scale halves after a level with acceptance
    below 10%.
    """
    n, n_chains = cfg.n_sample, cfg.chains_per_level
    if n % n_chains:
        raise ValueError("n_sample must be divisible by chains_per_level")
    length = cfg.chain_length or n // n_chains
    run = _Runner(model, observed, discrepancy, scheduler, cfg.rng_seed, log)

    phi = prior.sample(n, stage_rng(cfg.rng_seed, "prior", 0))
    d, seeds = run.distances(phi, 0)
    if not np.isfinite(d).any():
        raise PopulationCollapse(0, "no finite distance among the prior draws", run.log.entries)

    def snapshot():
        return Population(phi, np.ones(len(phi)), d, seeds, prior.names, prior)

    history = [snapshot()]
    run.record(0, math.inf, 1.0, float(n))
    scale = 1.0
    stop = "n_step"
    for level in range(1, cfg.n_step):
        order = np.argsort(d, kind="stable")
        gamma = _level_threshold(d[order], n_chains)
        if not math.isfinite(gamma):
            raise PopulationCollapse(level, "fewer finite distances than chain seeds", run.log.entries)
        top = order[:n_chains]
        cov = regularize(scale * np.atleast_2d(np.cov(phi[top], rowvar=False)), prior)
        chol = np.linalg.cholesky(cov)
        rng = stage_rng(cfg.rng_seed, "chain", level)

        cur_phi, cur_d, cur_s = phi[top].copy(), d[top].copy(), seeds[top].copy()
        out_phi, out_d, out_s = [cur_phi.copy()], [cur_d.copy()], [cur_s.copy()]
        accepted = proposed = 0
        for link in range(1, length):
            if cfg.max_simulations is not None and run.n_sims >= cfg.max_simulations:
                break
            prop = cur_phi + rng.standard_normal(cur_phi.shape) @ chol.T
            inside = np.asarray(prior.contains(prop))
            proposed += n_chains
            idx = np.flatnonzero(inside)
            if idx.size:
                pd, ps = run.distances(prop[idx], level, offset=link * n_chains)
                ok = pd < gamma
                acc = idx[ok]
                cur_phi[acc], cur_d[acc], cur_s[acc] = prop[acc], pd[ok], ps[ok]
                accepted += int(ok.sum())
            out_phi.append(cur_phi.copy())
            out_d.append(cur_d.copy())
            out_s.append(cur_s.copy())
        rate = accepted / proposed if proposed else 0.0
        # chain-major order: seed, then its successors
        phi = np.stack(out_phi, axis=1).reshape(-1, prior.dim)
        d = np.stack(out_d, axis=1).reshape(-1)
        seeds = np.stack(out_s, axis=1).reshape(-1)
        history.append(snapshot())
        run.record(level, gamma, rate, float(len(d)))
        if accepted == 0:
            raise LevelStall(level, run.log.entries)
        if rate < 0.1:
            scale *= 0.5
        if rate < cfg.acceptance_rate_cutoff:
            stop = "acceptance_rate"
            break
        if cfg.max_simulations is not None and run.n_sims >= cfg.max_simulations:
            stop = "budget"
            break
    return SamplerResult(history[-1], run.log.entries, run.n_sims, "abcsubsim", history, stop)


SAMPLERS = {"rejection": rejection_abc, "apmcabc": apmcabc, "abcsubsim": abcsubsim}
