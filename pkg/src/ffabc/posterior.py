"""Bayes estimates, posterior correlations, KDE surfaces and predictive bands."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .inference.population import Population, derive_seed, stage_rng
from .scheduler import Scheduler, TaskSpec


class UndefinedCorrelation(ValueError):
    pass


class DegeneratePopulation(ValueError):
    pass


class PredictionFailed(RuntimeError):
    pass


def bayes_estimate(pop: Population) -> np.ndarray:
    """Posterior mean, the minimiser of expected squared Euclidean loss."""
    return pop.weights @ pop.phi


def _index(pop: Population, dim) -> int:
    return pop.names.index(dim) if isinstance(dim, str) else int(dim)


def weighted_correlation(x, y, weights=None) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    dx = x - w @ x
    dy = y - w @ y
    vx, vy = w @ (dx * dx), w @ (dy * dy)
    if vx <= 0 or vy <= 0:
        raise UndefinedCorrelation("zero variance in at least one dimension")
    r = (w @ (dx * dy)) / np.sqrt(vx * vy)
    return float(np.clip(r, -1.0, 1.0))


def posterior_correlation(pop: Population, dim_a=0, dim_b=1, weighted: bool = True) -> float:
    """Weighted Pearson correlation between two parameter dimensions."""
    a, b = pop.phi[:, _index(pop, dim_a)], pop.phi[:, _index(pop, dim_b)]
    if np.unique(a).size < 2 or np.unique(b).size < 2:
        raise UndefinedCorrelation("need at least two distinct values in each dimension")
    return weighted_correlation(a, b, pop.weights if weighted else None)


# ---------------------------------------------------------------------------
# kernel density

def scott_bandwidth(pop: Population) -> np.ndarray:
    """Per-dimension Scott's rule, ``n_eff ** (-1 / (d + 4))`` times the weighted std."""
    w = pop.weights
    mu = w @ pop.phi
    std = np.sqrt(w @ (pop.phi - mu) ** 2)
    return pop.ess ** (-1.0 / (pop.dim + 4)) * std


def kde_density(pop: Population, eval_grid, bandwidth_factor: float = 1.0, bandwidth=None) -> np.ndarray:
    """Weighted product-Gaussian KDE evaluated on a grid.

    ``eval_grid`` is a sequence of one 1-d axis per dimension; the result has
    shape ``tuple(len(axis) for axis in eval_grid)``. Bandwidths are
    ``bandwidth_factor`` times Scott's rule unless ``bandwidth`` gives them
    explicitly (needed for a single-particle population).
    """
    if not bandwidth_factor > 0:
        raise ValueError("bandwidth_factor must be positive")
    axes = [np.asarray(a, dtype=float) for a in eval_grid]
    if len(axes) != pop.dim:
        raise ValueError(f"need {pop.dim} grid axes, got {len(axes)}")
    if bandwidth is None:
        h = bandwidth_factor * scott_bandwidth(pop)
    else:
        h = bandwidth_factor * np.broadcast_to(np.asarray(bandwidth, dtype=float), (pop.dim,))
    if not np.all(h > 0):
        raise DegeneratePopulation("zero spread in some dimension; pass an explicit bandwidth")
    # per-dimension kernel matrices (n_particles, n_axis), combined by einsum
    factors = []
    for i, ax in enumerate(axes):
        z = (ax[None, :] - pop.phi[:, i, None]) / h[i]
        factors.append(np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * h[i]))
    letters = "abcdefghijklmnopqrstuvwxyz"[: pop.dim]
    spec = "n," + ",".join(f"n{c}" for c in letters) + "->" + letters
    return np.einsum(spec, pop.weights, *factors)


def kde_grid(pop: Population, n_points: int = 101, pad: float = 5.0, bandwidth_factor: float = 1.0, bandwidth=None):
    """Axes spanning the sample extremes plus ``pad`` bandwidths on each side."""
    if bandwidth is None:
        h = bandwidth_factor * scott_bandwidth(pop)
    else:
        h = bandwidth_factor * np.broadcast_to(np.asarray(bandwidth, dtype=float), (pop.dim,))
    lo = pop.phi.min(axis=0) - pad * h
    hi = pop.phi.max(axis=0) + pad * h
    return [np.linspace(a, b, n_points) for a, b in zip(lo, hi)]


def write_density_csv(axes, density, names, path=None, provenance: dict | None = None) -> str:
    """Long-format grid: one row per grid node with its coordinates and density."""
    buf = io.StringIO()
    for k, v in (provenance or {}).items():
        buf.write(f"# {k}: {v}\n")
    buf.write(",".join([*names, "density"]) + "\n")
    mesh = np.meshgrid(*axes, indexing="ij")
    for idx in np.ndindex(density.shape):
        buf.write(",".join([*(repr(float(m[idx])) for m in mesh), repr(float(density[idx]))]) + "\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------------------
# posterior predictive

@dataclass(frozen=True, eq=False)
class PredictiveBand:
    grid: np.ndarray
    min: np.ndarray
    q25: np.ndarray
    mean: np.ndarray
    q75: np.ndarray
    max: np.ndarray
    n_draws: int = 0
    n_dropped: int = 0
    observable: str = ""
    curves: np.ndarray | None = field(default=None, repr=False)

    COLUMNS = ("min", "q25", "mean", "q75", "max")

    def __post_init__(self):
        tol = 1e-12
        lo, a, m, b, hi = (np.asarray(getattr(self, c)) for c in self.COLUMNS)
        if not (np.all(lo <= a + tol) and np.all(a <= b + tol) and np.all(b <= hi + tol)):
            raise ValueError("band violates min <= q25 <= q75 <= max")
        if not (np.all(lo <= m + tol) and np.all(m <= hi + tol)):
            raise ValueError("band mean outside [min, max]")

    @classmethod
    def from_curves(cls, grid, curves, observable: str = "", n_dropped: int = 0) -> "PredictiveBand":
        curves = np.asarray(curves, dtype=float)
        q = np.quantile(curves, [0.0, 0.25, 0.75, 1.0], axis=0)  # linear interpolation (type 7)
        return cls(np.asarray(grid, dtype=float), q[0], q[1], curves.mean(axis=0), q[2], q[3],
                   len(curves), n_dropped, observable, curves)

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (y >= self.min) & (y <= self.max)

    def to_csv(self, path=None, provenance: dict | None = None) -> str:
        buf = io.StringIO()
        for k, v in (provenance or {}).items():
            buf.write(f"# {k}: {v}\n")
        buf.write(f"# observable: {self.observable}\n# n_draws: {self.n_draws}\n# n_dropped: {self.n_dropped}\n")
        buf.write("x," + ",".join(self.COLUMNS) + "\n")
        cols = [self.grid, *(getattr(self, c) for c in self.COLUMNS)]
        for row in zip(*cols):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def read_csv(cls, path) -> "PredictiveBand":
        meta, rows = {}, []
        for line in Path(path).read_text().splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].partition(":")
                meta[k.strip()] = v.strip()
            elif line and not line.startswith("x,"):
                rows.append([float(c) for c in line.split(",")])
        a = np.array(rows)
        return cls(a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4], a[:, 5],
                   int(meta.get("n_draws", 0)), int(meta.get("n_dropped", 0)), meta.get("observable", ""))


def posterior_predict(
    pop: Population,
    model,
    n_draws: int,
    seed: int,
    scheduler: Scheduler | None = None,
    observable: str = "rdf",
) -> PredictiveBand:
    """Simulate at weighted draws from ``pop`` and band the ``observable`` curve.

    Each draw gets a fresh simulation seed. Failed draws are dropped and
    counted; the band uses the grid of the first successful curve, and other
    curves are interpolated onto it if their abscissae differ.
    """
    if n_draws < 4:
        raise ValueError("n_draws must be >= 4")
    scheduler = scheduler or Scheduler("dynamic", 1)
    idx = stage_rng(seed, "resample", 0).choice(len(pop), size=n_draws, p=pop.weights)
    tasks = [
        TaskSpec(i, tuple(float(x) for x in pop.phi[j]), derive_seed(seed, "predict", 0, i), model.payload_kind)
        for i, j in enumerate(idx)
    ]
    results = scheduler.run(tasks, model.execute)
    grid, curves, dropped = None, [], 0
    for r in results:
        if not r.ok or r.summary is None or observable not in r.summary.curves:
            dropped += 1
            continue
        x, y = (np.asarray(v, dtype=float) for v in r.summary.curves[observable])
        if not np.isfinite(y).all():
            dropped += 1
            continue
        if grid is None:
            grid = x
        curves.append(y if x.shape == grid.shape and np.allclose(x, grid) else np.interp(grid, x, y))
    if not curves:
        raise PredictionFailed(f"all {n_draws} predictive simulations failed")
    return PredictiveBand.from_curves(grid, curves, observable, dropped)


# ---------------------------------------------------------------------------
# summary document

def summarize_population(pop: Population, truth=None, bandwidth_factor: float | None = None) -> dict:
    """JSON-ready summary: Bayes estimate, weighted and unweighted correlations."""
    est = bayes_estimate(pop)
    out = {
        "names": list(pop.names),
        "bayes_estimate": {n: float(v) for n, v in zip(pop.names, est)},
        "n_particles": len(pop),
        "ess": pop.ess,
    }
    if pop.dim >= 2:
        corr = {}
        for i in range(pop.dim):
            for j in range(i + 1, pop.dim):
                key = f"{pop.names[i]}:{pop.names[j]}"
                try:
                    corr[key] = {
                        "weighted": posterior_correlation(pop, i, j),
                        "unweighted": posterior_correlation(pop, i, j, weighted=False),
                    }
                except UndefinedCorrelation:
                    corr[key] = None
        out["correlations"] = corr
    if truth is not None:
        truth = np.asarray(truth, dtype=float)
        out["truth"] = {n: float(v) for n, v in zip(pop.names, truth)}
        out["euclidean_error"] = float(np.linalg.norm(est - truth))
    if bandwidth_factor is not None:
        out["kde_bandwidth"] = (bandwidth_factor * scott_bandwidth(pop)).tolist()
    return out


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=False)
