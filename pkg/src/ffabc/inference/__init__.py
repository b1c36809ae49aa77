"""Priors, kernels, populations and the ABC samplers."""

from .kernels import (
    KernelDegenerate,
    PerturbationKernel,
    PriorSpec,
    SingularCovariance,
    kernel_density,
    kernel_sample,
    mvn_density,
    prior_sample,
    regularize,
    weighted_covariance,
)
from .population import (
    DiagnosticsLog,
    Population,
    StepDiagnostics,
    WeightedSample,
    derive_seed,
    effective_sample_size,
    stage_rng,
)
from .samplers import (
    SAMPLERS,
    KLDiscrepancy,
    LevelStall,
    PopulationCollapse,
    SamplerConfig,
    SamplerError,
    SamplerResult,
    SummaryDiscrepancy,
    ThresholdTooTight,
    abcsubsim,
    apmcabc,
    rejection_abc,
)
