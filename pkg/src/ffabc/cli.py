"""Command-line entry point: ``ffabc calibrate | predict | bench-scheduler | ingest``.

Exit codes: 0 success, 2 invalid configuration or input, 3 sampler collapse.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig
from .ingest import ingest_observed
from .inference.population import DiagnosticsLog, Population, derive_seed
from .inference.samplers import SAMPLERS, SamplerError
from .posterior import (
    PredictionFailed,
    UndefinedCorrelation,
    kde_density,
    kde_grid,
    posterior_predict,
    summarize_population,
    write_density_csv,
)
from .scheduler import sleep_executor, sleep_tasks, speedup_curve, synthetic_durations
from .summaries import SummaryVector

EXIT_OK, EXIT_INVALID, EXIT_COLLAPSE = 0, 2, 3


def _header(provenance: dict) -> dict:
    return {"provenance": provenance}


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def build_observed(cfg: RunConfig, model) -> tuple[SummaryVector, tuple | None]:
    """Observed vector plus the default discrepancy index set (``None`` = model default)."""
    obs = cfg.section("observed")
    if "synthetic" in obs:
        syn = obs["synthetic"]
        seed = syn.get("seed", derive_seed(cfg.master_seed, "observed", 0, 0))
        return model.simulate(cfg.truth(), int(seed)), None
    if "curves" in obs:
        c = obs["curves"]
        vec, active = ingest_observed(
            rdf_oo=cfg.resolve(c["rdf_oo"]),
            rdf_oh=cfg.resolve(c["rdf_oh"]) if "rdf_oh" in c else None,
            diffusion=c.get("diffusion"),
        )
    else:
        s = dict(obs["summaries"])
        diffusion = s.pop("diffusion", None)
        vec, active = ingest_observed(summaries=s, diffusion=diffusion)
    # the LJ simulator produces S4..S9 only
    return vec, tuple(i for i in active if 4 <= i <= 9)


# ---------------------------------------------------------------------------
# commands

def cmd_calibrate(cfg: RunConfig, out_dir: Path, seed: int | None = None, workers: int | None = None) -> int:
    cfg.require("model", "prior", "discrepancy", "observed", "sampler")
    seed = cfg.master_seed if seed is None else seed
    model = cfg.build_model()
    prior = cfg.build_prior()
    observed, default_idx = build_observed(cfg, model)
    discrepancy = cfg.build_discrepancy(default_idx)
    scheduler = cfg.scheduler(workers)
    prov = cfg.provenance(seed)

    out_dir.mkdir(parents=True, exist_ok=True)
    log = DiagnosticsLog(out_dir / "diagnostics.jsonl", header=prov)
    kind = cfg.sampler_kind()
    try:
        if kind == "rejection":
            s = cfg.section("sampler")
            result = SAMPLERS[kind](model, prior, discrepancy, observed, int(s.get("n_sample", 100)),
                                    float(s["gamma"]), seed, scheduler,
                                    batch_size=s.get("batch_size"), probe_budget=int(s.get("probe_budget", 10_000)),
                                    log=log)
        else:
            result = SAMPLERS[kind](model, prior, discrepancy, observed, cfg.sampler_config(seed), scheduler, log=log)
    except SamplerError as exc:
        _write_json(out_dir / "failure.json", {**_header(prov), "error": type(exc).__name__, "message": str(exc),
                                               "simulations_executed": scheduler.executed})
        print(f"ffabc: sampler collapsed: {exc}", file=sys.stderr)
        return EXIT_COLLAPSE

    pop = result.population.with_provenance(**prov, sampler=kind)
    pop.to_csv(out_dir / "population.csv")
    truth = cfg.truth()
    summary = summarize_population(pop, truth)
    summary.update(
        _header(prov),
        sampler=kind,
        final_gamma=result.final_gamma,
        gammas=result.gammas,
        n_simulations=result.n_simulations,
        scheduler_executed=scheduler.executed,
        stop_reason=result.stop_reason,
        observed=observed.as_dict(),
        discrepancy={"kind": discrepancy.kind, **({"indices": list(discrepancy.indices)}
                                                  if hasattr(discrepancy, "indices") else {})},
    )
    out = cfg.section("output")
    factor = float(out.get("kde_bandwidth_factor", 0.7))
    summary["kde_bandwidth_factor"] = factor
    try:
        axes = kde_grid(pop, int(out.get("kde_points", 41 if pop.dim > 1 else 201)), bandwidth_factor=factor)
        dens = kde_density(pop, axes, factor)
        write_density_csv(axes, dens, pop.names, out_dir / "density.csv", prov)
    except (ValueError, UndefinedCorrelation) as exc:
        summary["kde_error"] = str(exc)
    _write_json(out_dir / "summary.json", summary)
    print(f"wrote {out_dir / 'population.csv'} ({len(pop)} particles, final gamma {result.final_gamma:.4g}, "
          f"{result.n_simulations} simulations)")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, population_path: Path, out_dir: Path, seed: int | None = None,
                workers: int | None = None) -> int:
    cfg.require("model", "prior")
    prior = cfg.build_prior()
    try:
        pop = Population.read_csv(population_path, prior)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read population: {exc}", None, population_path) from None
    if pop.names != prior.names:
        raise ConfigError(f"population parameters {list(pop.names)} do not match the prior {list(prior.names)}",
                          None, population_path)
    p = cfg.section("predict")
    model = cfg.build_model()
    if not hasattr(model, "settings"):
        raise ConfigError("predict needs a model with observable curves (lj-sim)", None, cfg.path)
    seed = int(p.get("seed", cfg.master_seed if seed is None else seed))
    try:
        band = posterior_predict(pop, model, int(p.get("n_draws", 8)), seed, cfg.scheduler(workers),
                                 p.get("observable", "rdf"))
    except PredictionFailed as exc:
        print(f"ffabc: {exc}", file=sys.stderr)
        return EXIT_COLLAPSE
    out_dir.mkdir(parents=True, exist_ok=True)
    prov = cfg.provenance(seed)
    band.to_csv(out_dir / "band.csv", prov)
    _write_json(out_dir / "predict.json", {**_header(prov), "observable": band.observable,
                                           "n_draws": band.n_draws, "n_dropped": band.n_dropped})
    print(f"wrote {out_dir / 'band.csv'} ({band.n_draws} draws, {band.n_dropped} dropped)")
    return EXIT_OK


def cmd_bench_scheduler(cfg: RunConfig, out_dir: Path, seed: int | None = None) -> int:
    cfg.require("bench")
    b = cfg.section("bench")
    seed = cfg.master_seed if seed is None else seed
    d = dict(b["durations"])
    model, m = d.pop("model"), int(d.pop("m"))
    base_seed = int(d.pop("seed", seed))
    counts = [int(n) for n in b["worker_counts"]]
    virtual = bool(b.get("virtual", True))
    executor = sleep_executor(float(b.get("time_unit", 0.0)))
    curves = {"static": [], "dynamic": []}
    histograms = []
    for rep in range(int(b.get("replicates", 1))):
        durations = synthetic_durations(m, model, base_seed + rep, **d)
        tasks = sleep_tasks(durations)
        for policy in curves:
            curves[policy].append([s for _, s in speedup_curve(tasks, counts, policy, executor, virtual)])
        counts_, edges = np.histogram(durations, bins=20)
        histograms.append({"counts": counts_.tolist(), "edges": edges.tolist()})
    doc = {
        **_header(cfg.provenance(seed)),
        "worker_counts": counts,
        "duration_model": model,
        "virtual": virtual,
        "speedup": {p: np.mean(v, axis=0).tolist() for p, v in curves.items()},
        "speedup_replicates": {p: v for p, v in curves.items()},
        "task_time_histograms": histograms,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "bench.json", doc)
    print("n_workers  static  dynamic")
    for i, n in enumerate(counts):
        print(f"{n:9d}  {doc['speedup']['static'][i]:6.3f}  {doc['speedup']['dynamic'][i]:7.3f}")
    return EXIT_OK


def cmd_ingest(args, cfg: RunConfig | None, out_dir: Path) -> int:
    if cfg is not None and any(k in cfg.section("observed") for k in ("curves", "summaries")):
        vec, idx = build_observed(cfg, None)
        prov = cfg.provenance()
    else:
        if args.rdf_oo is None and args.rdf_oh is None:
            raise ConfigError("ingest needs --rdf-oo/--rdf-oh or a config with observed curves or summaries")
        try:
            vec, active = ingest_observed(args.rdf_oo, args.rdf_oh, args.diffusion)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        idx = active
        prov = {"ffabc_version": __version__}
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {**_header(prov), "summaries": vec.as_dict(), "indices": list(idx)}
    _write_json(out_dir / "observed.json", doc)
    print(json.dumps({"summaries": vec.as_dict(), "indices": list(idx)}, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffabc", description="ABC calibration of force-field parameters.")
    parser.add_argument("--version", action="version", version=f"ffabc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", type=Path, required=config_required, help="YAML run configuration")
        p.add_argument("--out-dir", type=Path, help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
        p.add_argument("--workers", type=int, help="number of workers (overrides scheduler.n_workers)")

    common(sub.add_parser("calibrate", help="run a sampler and write the posterior population"))
    p = sub.add_parser("predict", help="posterior-predictive band from a population CSV")
    common(p)
    p.add_argument("--population", type=Path, required=True)
    common(sub.add_parser("bench-scheduler", help="static vs dynamic speedup on synthetic task durations"))
    p = sub.add_parser("ingest", help="build an observed summary vector from tabulated data")
    common(p, config_required=False)
    p.add_argument("--rdf-oo", type=Path, help="O-O (or monatomic) g(r) file")
    p.add_argument("--rdf-oh", type=Path, help="O-H g(r) file")
    p.add_argument("--diffusion", help="self-diffusion constant with unit, e.g. '1.3e-5 cm^2/s'")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = RunConfig.load(args.config) if args.config is not None else None
        out_dir = cfg.output_dir(args.out_dir) if cfg is not None else (args.out_dir or Path("."))
        if args.command == "calibrate":
            return cmd_calibrate(cfg, out_dir, args.seed, args.workers)
        if args.command == "predict":
            return cmd_predict(cfg, args.population, out_dir, args.seed, args.workers)
        if args.command == "bench-scheduler":
            return cmd_bench_scheduler(cfg, out_dir, args.seed)
        return cmd_ingest(args, cfg, out_dir)
    except ConfigError as exc:
        print(f"ffabc: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
