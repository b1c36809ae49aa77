"""Three samplers against a posterior we can write down.

The toy model draws ``n`` points from N(mu, 1) and summarizes them by their
mean. Under a flat prior the exact posterior is N(xbar, 1/n), so each sampler
can be checked directly. Run with ``python demos/toy_posterior.py``.
"""
import numpy as np

from ffabc.inference import PriorSpec, SamplerConfig, SummaryDiscrepancy, abcsubsim, apmcabc, rejection_abc
from ffabc.models import GaussianToyModel, simulate_gaussian_toy
from ffabc.summaries import SummaryVector

N_OBS = 100

data = simulate_gaussian_toy(2.0, N_OBS, seed=11)
observed = SummaryVector(("mean",), (data.mean(),))
print(f"exact posterior: mean {data.mean():.4f}, std {1 / np.sqrt(N_OBS):.4f}")

model = GaussianToyModel(N_OBS)
prior = PriorSpec.uniform(mu=(-10.0, 10.0))
distance = SummaryDiscrepancy(("mean",))

runs = {
    "rejection": lambda: rejection_abc(model, prior, distance, observed, 500, 0.05, seed=1, batch_size=10_000),
    "apmcabc": lambda: apmcabc(model, prior, distance, observed, SamplerConfig(n_sample=1000, n_step=20, rng_seed=1)),
    "abcsubsim": lambda: abcsubsim(model, prior, distance, observed,
                                   SamplerConfig(n_sample=1000, n_step=4, chains_per_level=200, rng_seed=1)),
}

for name, run in runs.items():
    res = run()
    pop = res.population
    m = pop.weights @ pop.phi[:, 0]
    s = np.sqrt(pop.weights @ (pop.phi[:, 0] - m) ** 2)
    print(f"{name:>10}: mean {m:.4f}, std {s:.4f}, {res.n_simulations} simulations, "
          f"final gamma {res.diagnostics[-1].gamma:.4g}")

# At an equal simulation budget the two samplers end at very different
# thresholds. Subset simulation shrinks its level threshold geometrically
# while the adaptive sampler moves half of its population per step.
sub = abcsubsim(model, prior, distance, observed, SamplerConfig(n_sample=200, n_step=5, chains_per_level=40, rng_seed=2))
pmc = apmcabc(model, prior, distance, observed,
              SamplerConfig(n_sample=200, n_step=200, rng_seed=2, max_simulations=sub.n_simulations))
print(f"budget {sub.n_simulations}: subsim gamma {sub.diagnostics[-1].gamma:.4g}, "
      f"apmcabc gamma {pmc.diagnostics[-1].gamma:.4g}")
