"""Summary statistics and discrepancy measures.

Structural features come from radial distribution functions (RDFs), dynamics
from the mean square displacement (MSD), and the Boltzmann-factor series
``f_B(t) = <exp(-h_i(t) / kT)>`` from per-particle enthalpies. Feature names
follow the water convention ``S1`` .. ``S9``:

====  =================================================  ============
name  meaning                                            source curve
====  =================================================  ============
S1    area under g(r) up to the first minimum            O-H
S2    r at the first minimum                             O-H
S3    mean of g                                          O-H
S4    area under g(r) up to the first minimum            O-O / X-X
S5    r at the first minimum                             O-O / X-X
S6    mean of g                                          O-O / X-X
S7    g at the first maximum                             O-O / X-X
S8    r at the first maximum                             O-O / X-X
S9    MSD slope (6 x self-diffusion coefficient)         trajectory
====  =================================================  ============

The "area" features integrate ``g dr`` literally rather than the coordination
number ``4 pi rho r^2 g dr``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numba
from scipy.integrate import trapezoid
import numpy as np

from . import units
from .md import Trajectory

SMOOTH_WINDOW = 5
KL_BINS = 30
KL_ALPHA = 1e-6

FULL_INDICES = tuple(range(1, 10))
PARTIAL_INDICES = tuple(range(4, 10))


class FeatureExtractionError(ValueError):
    def __init__(self, feature: str, reason: str):
        super().__init__(f"cannot extract {feature}: {reason}")
        self.feature = feature


class UnwrappedCoordinatesMissing(ValueError):
    pass


class MissingSummary(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class RdfCurve:
    r: np.ndarray
    g: np.ndarray
    species_pair: str = "X-X"

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        g = np.asarray(self.g, dtype=float)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "g", g)
        if r.ndim != 1 or r.shape != g.shape or len(r) < 3:
            raise ValueError("r and g must be 1-d arrays of equal length >= 3")
        if not np.all(np.diff(r) > 0):
            raise ValueError("r must be strictly increasing")
        if np.any(g < 0):
            raise ValueError("g must be non-negative")

    @property
    def spacing(self) -> float:
        return float(np.mean(np.diff(self.r)))


@dataclass(frozen=True, eq=False)
class MsdCurve:
    t: np.ndarray
    msd: np.ndarray


@dataclass(frozen=True, eq=False)
class BoltzmannSeries:
    values: np.ndarray
    beta: float


@dataclass(frozen=True, eq=False)
class SummaryVector:
    """Named scalar summaries, plus optional series and curves carried alongside.

    ``boltzmann`` holds the f_B series for the KL discrepancy; ``curves`` holds
    observable curves (``"rdf"``, ``"msd"``) as ``(x, y)`` pairs for prediction.
    """

    names: tuple[str, ...] = ()
    values: tuple[float, ...] = ()
    boltzmann: BoltzmannSeries | None = None
    curves: Mapping[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.names) != len(self.values):
            raise ValueError("names and values differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate summary names in {self.names}")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, float], **kw) -> "SummaryVector":
        return cls(tuple(mapping), tuple(mapping.values()), **kw)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))

    def __getitem__(self, name: str) -> float:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise MissingSummary(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def merge(self, other: "SummaryVector") -> "SummaryVector":
        d = self.as_dict()
        d.update(other.as_dict())
        curves = {**self.curves, **other.curves}
        return SummaryVector.from_mapping(d, boltzmann=other.boltzmann or self.boltzmann, curves=curves)

    @property
    def finite(self) -> bool:
        ok = all(math.isfinite(v) for v in self.values)
        if self.boltzmann is not None:
            ok = ok and bool(np.all(np.isfinite(self.boltzmann.values)))
        return ok


# ---------------------------------------------------------------------------
# radial distribution function

@numba.njit(cache=True, nogil=True)
def _pair_histogram(positions, box, r_max, n_bins, counts):
    n_frames, n = positions.shape[0], positions.shape[1]
    half = 0.5 * box
    width = r_max / n_bins
    for f in range(n_frames):
        for i in range(n - 1):
            for j in range(i + 1, n):
                r2 = 0.0
                for a in range(3):
                    d = positions[f, i, a] - positions[f, j, a]
                    if d > half:
                        d -= box
                    elif d < -half:
                        d += box
                    r2 += d * d
                r = math.sqrt(r2)
                if r < r_max:
                    k = int(r / width)
                    if k < n_bins:
                        counts[k] += 2.0


def compute_rdf(traj: Trajectory, n_bins: int, r_max: float, species_pair: str = "X-X") -> RdfCurve:
    """Frame-averaged pair-histogram RDF on ``n_bins`` uniform shells up to ``r_max``.

    ``g_k = <ordered-pair count in shell k> / (N rho V_k)`` with ``rho = N / V``.
    """
    if traj.n_particles < 1:
        raise ValueError("trajectory has no particles")
    if n_bins < 3:
        raise ValueError("n_bins must be >= 3")
    if not 0 < r_max <= traj.box_length / 2 + 1e-12:
        raise ValueError(f"r_max must lie in (0, box_length/2]; got {r_max}")
    counts = np.zeros(n_bins)
    _pair_histogram(np.ascontiguousarray(traj.positions), traj.box_length, r_max, n_bins, counts)
    counts /= traj.n_frames
    edges = np.linspace(0.0, r_max, n_bins + 1)
    shell = 4.0 / 3.0 * np.pi * (edges[1:] ** 3 - edges[:-1] ** 3)
    rho = traj.n_particles / traj.volume
    g = counts / (traj.n_particles * rho * shell)
    return RdfCurve(0.5 * (edges[1:] + edges[:-1]), g, species_pair)


# ---------------------------------------------------------------------------
# mean square displacement

def compute_msd(traj: Trajectory) -> MsdCurve:
    """MSD over particles and time origins for lags up to half the trajectory."""
    if traj.unwrapped is None:
        raise UnwrappedCoordinatesMissing(
            "MSD needs unwrapped coordinates; wrapped positions would fold displacements"
        )
    if traj.n_frames < 2:
        raise ValueError("MSD needs at least two frames")
    xu = traj.unwrapped
    max_lag = traj.n_frames // 2
    msd = np.empty(max_lag + 1)
    msd[0] = 0.0
    for lag in range(1, max_lag + 1):
        d = xu[lag:] - xu[:-lag]
        msd[lag] = np.mean(np.sum(d * d, axis=-1))
    t = traj.times[: max_lag + 1] - traj.times[0]
    return MsdCurve(t, msd)


def default_fit_window(curve: MsdCurve) -> tuple[float, float]:
    """Central third of the available lags."""
    n = len(curve.t)
    lo, hi = n // 3, max(2 * n // 3, n // 3 + 1)
    hi = min(hi, n - 1)
    return float(curve.t[lo]), float(curve.t[hi])


def msd_slope(curve: MsdCurve, fit_window: tuple[float, float] | None = None) -> float:
    """Ordinary least-squares slope of msd against t within ``fit_window`` (inclusive)."""
    t_lo, t_hi = fit_window if fit_window is not None else default_fit_window(curve)
    sel = (curve.t >= t_lo) & (curve.t <= t_hi)
    t = np.asarray(curve.t)[sel]
    y = np.asarray(curve.msd)[sel]
    if len(t) < 2:
        raise ValueError("fit window holds fewer than two points")
    tc = t - t.mean()
    sxx = float(np.dot(tc, tc))
    if sxx == 0.0:
        raise ValueError("fit window is degenerate (all times equal)")
    return float(np.dot(tc, y - y.mean()) / sxx)


# ---------------------------------------------------------------------------
# RDF features

def smooth(g: np.ndarray, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Centred moving average; the window shrinks symmetrically at the ends."""
    g = np.asarray(g, dtype=float)
    h = window // 2
    c = np.concatenate([[0.0], np.cumsum(g)])
    out = np.empty_like(g)
    n = len(g)
    for i in range(n):
        k = min(h, i, n - 1 - i)
        out[i] = (c[i + k + 1] - c[i - k]) / (2 * k + 1)
    return out


def _refine(raw: np.ndarray, i: int, half: int, pick) -> int:
    lo, hi = max(i - half, 0), min(i + half + 1, len(raw))
    return lo + int(pick(raw[lo:hi]))


def first_maximum(curve: RdfCurve, window: int = SMOOTH_WINDOW) -> int:
    """Index of the first maximum after g first exceeds 1.

    Located on the smoothed curve, then refined to the raw argmax within half a
    smoothing window.
    """
    g = curve.g
    s = smooth(g, window)
    above = np.nonzero(s > 1.0)[0]
    if len(above) == 0:
        above = np.nonzero(g > 1.0)[0]
        if len(above) == 0:
            raise FeatureExtractionError("first maximum", "g never exceeds 1")
    start = int(above[0])
    for i in range(max(start, 1), len(s) - 1):
        if s[i] >= s[i - 1] and s[i] > s[i + 1]:
            return _refine(g, i, window // 2, np.argmax)
    raise FeatureExtractionError("first maximum", "g rises monotonically to the end of the grid")


def first_minimum(curve: RdfCurve, after: int | None = None, window: int = SMOOTH_WINDOW) -> int:
    """Index of the first minimum following the first maximum."""
    g = curve.g
    s = smooth(g, window)
    i0 = first_maximum(curve, window) if after is None else after
    for i in range(i0 + 1, len(s) - 1):
        if s[i] <= s[i - 1] and s[i + 1] >= s[i]:
            j = _refine(g, i, window // 2, np.argmin)
            return max(j, i0 + 1)
    raise FeatureExtractionError("first minimum", "g decreases monotonically after the first maximum")


def area_to_first_minimum(curve: RdfCurve, i_min: int | None = None) -> float:
    if i_min is None:
        i_min = first_minimum(curve)
    return float(trapezoid(curve.g[: i_min + 1], curve.r[: i_min + 1]))


def rdf_mean(curve: RdfCurve) -> float:
    return float(np.mean(curve.g))


def extract_rdf_features(curve: RdfCurve, window: int = SMOOTH_WINDOW) -> SummaryVector:
    """Features S1-S3 for an O-H curve, S4-S8 for any other pair label."""
    i_max = first_maximum(curve, window)
    i_min = first_minimum(curve, i_max, window)
    area = area_to_first_minimum(curve, i_min)
    if curve.species_pair.upper() == "O-H":
        names = ("S1", "S2", "S3")
        values = (area, curve.r[i_min], rdf_mean(curve))
    else:
        names = ("S4", "S5", "S6", "S7", "S8")
        values = (area, curve.r[i_min], rdf_mean(curve), curve.g[i_max], curve.r[i_max])
    return SummaryVector(names, values)


# ---------------------------------------------------------------------------
# Boltzmann factor series and KL discrepancy

def compute_boltzmann_series(traj: Trajectory, temperature: float) -> BoltzmannSeries:
    """``f_B(t) = (1/N) sum_i exp(-h_i(t) / (k_B T))`` per recorded frame."""
    beta = 1.0 / (units.BOLTZMANN * temperature)
    h = traj.enthalpy()
    with np.errstate(over="ignore"):
        fb = np.exp(-beta * h).mean(axis=1)
    bad = np.nonzero(~np.isfinite(fb))[0]
    if len(bad):
        raise OverflowError(
            f"exp(-beta h) overflowed at frame {int(bad[0])}; check energy/temperature units"
        )
    return BoltzmannSeries(fb, beta)


def kl_divergence(
    a: BoltzmannSeries | np.ndarray,
    b: BoltzmannSeries | np.ndarray,
    n_bins: int = KL_BINS,
    alpha: float = KL_ALPHA,
) -> float:
    """KL(chi_a || chi_b) between histograms of the two series on a shared support.

    Every bin receives ``alpha`` before normalisation, so empty bins never give
    infinities; identical inputs give exactly 0.
    """
    x = np.asarray(getattr(a, "values", a), dtype=float)
    y = np.asarray(getattr(b, "values", b), dtype=float)
    if x.size == 0 or y.size == 0:
        raise ValueError("KL divergence needs non-empty series")
    lo = min(x.min(), y.min())
    hi = max(x.max(), y.max())
    delta = 1e-3 * (hi - lo) or 1e-9 * max(abs(lo), 1.0)
    edges = np.linspace(lo - delta, hi + delta, n_bins + 1)
    p = np.histogram(x, edges)[0] + alpha
    q = np.histogram(y, edges)[0] + alpha
    p = p / p.sum()
    q = q / q.sum()
    return float(max(np.sum(p * np.log(p / q)), 0.0))


# ---------------------------------------------------------------------------
# summary distances

def _key(i) -> str:
    return f"S{i}" if isinstance(i, (int, np.integer)) else str(i)


def summary_distance(a: SummaryVector, b: SummaryVector, indices: Iterable,
                     scales: Mapping[str, float] | None = None) -> float:
    """Mean absolute difference over ``indices`` (ints map to ``S<i>``).

    All nine indices give the full water discrepancy; 4..9 gives the partial one
    used when no O-H curve is available. Non-finite entries give ``inf``.
    ``scales`` optionally divides each term by a per-summary scale (absent
    keys keep scale 1), turning the raw differences into noise-relative ones.
    """
    keys = [_key(i) for i in indices]
    if not keys:
        raise ValueError("empty index set")
    scales = scales or {}
    total = 0.0
    for k in keys:
        for v in (a, b):
            if k not in v:
                raise MissingSummary(f"summary {k} missing from vector with {v.names}")
        total += abs(a[k] - b[k]) / scales.get(k, 1.0)
    d = total / len(keys)
    return d if math.isfinite(d) else math.inf


# ---------------------------------------------------------------------------
# tabulated RDF files

def read_rdf_file(path) -> RdfCurve:
    """Read a tabulated RDF.

    Header lines start with ``#`` and carry ``key: value`` pairs; ``pair`` and
    ``r_unit`` are required. The body has two columns, r and g(r). The r column
    is converted to nm.
    """
    meta: dict[str, str] = {}
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            body = s.lstrip("#").strip()
            if ":" in body:
                k, v = body.split(":", 1)
                meta[k.strip().lower()] = v.strip()
            continue
        parts = s.split()
        if len(parts) < 2:
            raise ValueError(f"{path}:{lineno}: expected two columns, got {line!r}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric data {line!r}") from None
    for key in ("pair", "r_unit"):
        if key not in meta:
            raise ValueError(f"{path}: header lacks '# {key}: ...'")
    data = np.array(rows)
    r = data[:, 0] * units.factor(meta["r_unit"], "length")
    return RdfCurve(r, data[:, 1], meta["pair"])


def write_rdf_file(curve: RdfCurve, path, r_unit: str = "nm", comment: str | None = None) -> None:
    f = units.factor(r_unit, "length")
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(f"# pair: {curve.species_pair}\n# r_unit: {r_unit}\n")
        np.savetxt(fh, np.column_stack([curve.r / f, curve.g]), fmt="%.10g")
