"""Forward models wrapped as ``phi, seed -> SummaryVector`` callables.

Each model exposes ``payload_kind``, ``param_names`` and ``simulate``; the
scheduler runs ``model.execute`` on :class:`~ffabc.scheduler.TaskSpec` objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .md import LJParams, SimSettings, simulate_lj
from .scheduler import TaskSpec
from .summaries import (
    SummaryVector,
    compute_boltzmann_series,
    compute_msd,
    compute_rdf,
    extract_rdf_features,
    msd_slope,
)


def simulate_gaussian_toy(mu: float, n_obs: int, seed: int) -> np.ndarray:
    """``n_obs`` i.i.d. draws from Normal(mu, 1)."""
    if n_obs < 1:
        raise ValueError("n_obs must be >= 1")
    if not np.isfinite(mu):
        raise ValueError("mu must be finite")
    return np.random.default_rng(seed).normal(mu, 1.0, size=n_obs)


class ForwardModel:
    payload_kind = ""
    param_names: tuple[str, ...] = ()

    def simulate(self, phi, seed: int) -> SummaryVector:
        raise NotImplementedError

    def execute(self, task: TaskSpec) -> SummaryVector:
        return self.simulate(task.phi, task.seed)

    @property
    def dim(self) -> int:
        return len(self.param_names)


@dataclass
class GaussianToyModel(ForwardModel):
    """Unit-variance Gaussian with unknown mean, summarised by the sample mean."""

    n_obs: int = 100
    payload_kind = "gaussian-toy"
    param_names = ("mu",)

    def simulate(self, phi, seed: int) -> SummaryVector:
        x = simulate_gaussian_toy(float(phi[0]), self.n_obs, seed)
        return SummaryVector(("mean",), (float(x.mean()),))


@dataclass
class LJModel(ForwardModel):
    """Lennard-Jones simulator reduced to RDF/MSD features and the f_B series.

    The RDF is monatomic (``X-X``), so it yields S4-S8; S9 is the MSD slope in
    nm^2/ps. The RDF and MSD curves ride along in ``curves`` for prediction.
    """

    settings: SimSettings = field(default_factory=SimSettings)
    n_bins: int = 100
    r_max: float | None = None
    with_structure: bool = True
    with_boltzmann: bool = True
    payload_kind = "lj-sim"
    param_names = ("sigma", "epsilon")

    @property
    def rdf_range(self) -> float:
        return self.r_max if self.r_max is not None else self.settings.box_length / 2

    def simulate(self, phi, seed: int) -> SummaryVector:
        sigma, epsilon = (float(x) for x in phi)
        traj = simulate_lj(LJParams(sigma, epsilon), self.settings.with_(rng_seed=int(seed)))
        return self.summarize(traj)

    def summarize(self, traj) -> SummaryVector:
        out = SummaryVector()
        curves = {}
        if self.with_structure:
            rdf = compute_rdf(traj, self.n_bins, self.rdf_range)
            msd = compute_msd(traj)
            curves = {"rdf": (rdf.r, rdf.g), "msd": (msd.t, msd.msd)}
            feats = extract_rdf_features(rdf).merge(SummaryVector(("S9",), (msd_slope(msd),)))
            out = out.merge(feats)
        fb = compute_boltzmann_series(traj, self.settings.temperature) if self.with_boltzmann else None
        return SummaryVector(out.names, out.values, boltzmann=fb, curves=curves)


def build_model(kind: str, **options) -> ForwardModel:
    if kind == "gaussian-toy":
        return GaussianToyModel(**options)
    if kind == "lj-sim":
        return LJModel(**options)
    raise ValueError(f"unknown payload kind {kind!r}")
