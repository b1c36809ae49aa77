"""Assemble an observed summary vector from tabulated curves and literature values."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

from .summaries import FULL_INDICES, SummaryVector, extract_rdf_features, read_rdf_file
from .units import parse_quantity


def diffusion_summary(diffusion: str) -> float:
    """S9 from a self-diffusion constant with units, stored as ``6 D`` in nm^2/ps."""
    return 6.0 * parse_quantity(diffusion, "diffusion")


def ingest_observed(
    rdf_oo=None,
    rdf_oh=None,
    diffusion: str | None = None,
    summaries: Mapping[str, float] | None = None,
) -> tuple[SummaryVector, tuple[int, ...]]:
    """Observed vector and the index set of the summaries it provides.

    ``rdf_oo`` and ``rdf_oh`` are paths to tabulated g(r) files (their header
    declares the r unit). The O-O curve gives S4-S8 and the O-H curve S1-S3;
    without an O-H curve the index set drops to the partial one, 4..9.
    ``summaries`` supplies precomputed values such as ``{"S4": 0.8634}``.
    """
    vec = SummaryVector()
    curves = {}
    for path, pair in ((rdf_oo, "O-O"), (rdf_oh, "O-H")):
        if path is None:
            continue
        curve = read_rdf_file(Path(path))
        # a monatomic (X-X) curve stands in for O-O; the O-H slot must say O-H
        if (curve.species_pair.upper() == "O-H") != (pair == "O-H"):
            raise ValueError(f"{path}: header declares pair {curve.species_pair!r}, expected {pair!r}")
        vec = vec.merge(extract_rdf_features(curve))
        curves[f"rdf_{pair.replace('-', '').lower()}"] = (curve.r, curve.g)
    if summaries:
        vec = vec.merge(SummaryVector.from_mapping({k: float(v) for k, v in summaries.items()}))
    if diffusion is not None:
        vec = vec.merge(SummaryVector(("S9",), (diffusion_summary(diffusion),)))
    if not vec.names:
        raise ValueError("nothing to ingest: give at least one curve or summary")
    indices = tuple(i for i in FULL_INDICES if f"S{i}" in vec)
    return SummaryVector(vec.names, vec.values, curves=curves), indices
