"""Weighted particle populations, seed derivation and CSV/JSONL persistence."""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .kernels import PriorSpec

STAGES = {"prior": 0, "kernel": 1, "simulate": 2, "resample": 3, "chain": 4, "predict": 5, "observed": 6}


def derive_seed(master: int, stage: str, step: int, index: int) -> int:
    """Task seed from ``(master, stage, step, index)``.

    The value depends only on these four numbers, never on which worker runs
    the task or in which order, which is what makes runs worker-count invariant.
    """
    ss = np.random.SeedSequence(int(master), spawn_key=(STAGES[stage], int(step), int(index)))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def stage_rng(master: int, stage: str, step: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, stage, step, 0))


@dataclass(frozen=True)
class WeightedSample:
    phi: tuple[float, ...]
    weight: float
    distance: float
    seed: int

    def __post_init__(self):
        if not self.weight >= 0:
            raise ValueError("weight must be non-negative")
        if not self.distance >= 0:
            raise ValueError("distance must be non-negative")


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    return float(1.0 / np.sum(w * w))


@dataclass(frozen=True, eq=False)
class Population:
    """Immutable weighted population; weights are normalised on construction."""

    phi: np.ndarray
    weights: np.ndarray
    distances: np.ndarray
    seeds: np.ndarray
    names: tuple[str, ...]
    prior: PriorSpec | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        n = len(phi)
        w = np.asarray(self.weights, dtype=float).reshape(n)
        d = np.asarray(self.distances, dtype=float).reshape(n)
        s = np.asarray(self.seeds, dtype=np.int64).reshape(n)
        if n == 0:
            raise ValueError("empty population")
        if phi.shape[1] != len(self.names):
            raise ValueError(f"phi has {phi.shape[1]} columns but {len(self.names)} names")
        if np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
            raise ValueError("weights must be finite, non-negative and not all zero")
        if np.any(d < 0) or np.isnan(d).any():
            raise ValueError("distances must be >= 0")
        w = w / w.sum()
        for name, arr in (("phi", phi), ("weights", w), ("distances", d), ("seeds", s)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "names", tuple(self.names))

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.phi.shape[1]

    @property
    def ess(self) -> float:
        return effective_sample_size(self.weights)

    @property
    def samples(self) -> list[WeightedSample]:
        return [
            WeightedSample(tuple(map(float, p)), float(w), float(d), int(s))
            for p, w, d, s in zip(self.phi, self.weights, self.distances, self.seeds)
        ]

    @classmethod
    def from_samples(cls, samples, names, prior=None, provenance=None) -> "Population":
        samples = list(samples)
        return cls(
            np.array([s.phi for s in samples], dtype=float),
            np.array([s.weight for s in samples]),
            np.array([s.distance for s in samples]),
            np.array([s.seed for s in samples]),
            names,
            prior,
            dict(provenance or {}),
        )

    def column(self, name_or_index) -> np.ndarray:
        i = self.names.index(name_or_index) if isinstance(name_or_index, str) else int(name_or_index)
        return self.phi[:, i]

    def with_provenance(self, **items) -> "Population":
        return Population(self.phi, self.weights, self.distances, self.seeds, self.names,
                          self.prior, {**self.provenance, **items})

    # -- CSV ---------------------------------------------------------------

    def to_csv(self, path=None) -> str:
        """Write ``# key: value`` provenance lines, a header and one row per particle.

        Floats use the shortest round-tripping representation, so writing,
        reading and writing again is byte-identical.
        """
        buf = io.StringIO()
        for k, v in self.provenance.items():
            buf.write(f"# {k}: {v}\n")
        buf.write(",".join([*self.names, "weight", "distance", "seed"]) + "\n")
        for p, w, d, s in zip(self.phi, self.weights, self.distances, self.seeds):
            buf.write(",".join([*(repr(float(x)) for x in p), repr(float(w)), repr(float(d)), str(int(s))]) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def read_csv(cls, path, prior: PriorSpec | None = None) -> "Population":
        provenance, rows, header = {}, [], None
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                provenance[key.strip()] = value.strip()
                continue
            cells = line.split(",")
            if header is None:
                header = cells
                if header[-3:] != ["weight", "distance", "seed"] or len(header) < 4:
                    raise ValueError(f"{path}:{lineno}: expected columns <params>,weight,distance,seed")
                continue
            if len(cells) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
            rows.append(cells)
        if header is None or not rows:
            raise ValueError(f"{path}: no population rows")
        d = len(header) - 3
        arr = np.array([[float(c) for c in r[:-1]] for r in rows])
        seeds = np.array([int(r[-1]) for r in rows], dtype=np.int64)
        return cls(arr[:, :d], arr[:, d], arr[:, d + 1], seeds, tuple(header[:d]), prior, provenance)


@dataclass(frozen=True)
class StepDiagnostics:
    step: int
    gamma: float
    acceptance_rate: float
    ess: float
    n_simulations: int
    wall_time: float

    def to_json(self) -> str:
        d = asdict(self)
        for k in ("gamma", "acceptance_rate", "ess"):
            if not math.isfinite(d[k]):
                d[k] = str(d[k])
        return json.dumps(d)


class DiagnosticsLog:
    """Line-delimited JSON log of per-step sampler diagnostics."""

    def __init__(self, path=None, header: dict | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[StepDiagnostics] = []
        if self.path is not None:
            with self.path.open("w") as fh:
                if header:
                    fh.write(json.dumps({"provenance": header}) + "\n")

    def append(self, entry: StepDiagnostics) -> None:
        self.entries.append(entry)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(entry.to_json() + "\n")

    @staticmethod
    def read(path) -> list[dict]:
        out = []
        for line in Path(path).read_text().splitlines():
            rec = json.loads(line)
            if "provenance" not in rec:
                out.append(rec)
        return out
