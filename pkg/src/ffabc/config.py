"""Declarative run configuration (YAML) with line-precise validation.

A configuration file has these top-level sections; which of them are
required depends on the command (``calibrate`` needs the first six)::

    master_seed: 7
    model:        {payload_kind: gaussian-toy | lj-sim, ...settings}
    prior:        {<param>: {lower: .., upper: .., unit: ..}, ...}
    discrepancy:  {kind: summary-mean-abs | kl-boltzmann, indices: [...], scales: {..}}
    observed:     exactly one of synthetic / curves / summaries
    sampler:      {kind: apmcabc | abcsubsim | rejection, n_sample: .., ...}
    scheduler:    {policy: static | dynamic, n_workers: ..}
    output:       {directory: .., kde_bandwidth_factor: ..}
    predict:      {n_draws: .., observable: rdf | msd}
    bench:        {worker_counts: [..], durations: {model: .., m: ..}, replicates: ..}

Dimensional values are strings with explicit units (``"5 fs"``,
``"0.2556 nm"``) checked against :mod:`ffabc.units`. See
``configs/README.md`` for the full key list.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .inference.kernels import PriorSpec
from .inference.samplers import KLDiscrepancy, SamplerConfig, SummaryDiscrepancy
from .md import SimSettings
from .models import GaussianToyModel, LJModel
from .scheduler import POLICIES, Scheduler
from .units import UnitError, parse_quantity

PAYLOADS = ("gaussian-toy", "lj-sim")
DISCREPANCIES = ("summary-mean-abs", "kl-boltzmann")
SAMPLER_KINDS = ("apmcabc", "abcsubsim", "rejection")
OBSERVED_SOURCES = ("synthetic", "curves", "summaries")
PARAM_KINDS = {"gaussian-toy": {"mu": None}, "lj-sim": {"sigma": "length", "epsilon": "energy"}}

# lj-sim settings: key -> (unit kind or type, SimSettings field)
_LJ_QUANTITIES = {
    "box_length": "length",
    "number_density": "number_density",
    "temperature": "temperature",
    "dt": "time",
    "cutoff": "length",
    "thermostat_damping": "time",
    "particle_mass": "mass",
    "r_max": "length",
}
_LJ_INTS = ("n_particles", "n_steps", "n_equilibration", "record_every", "n_bins")
_SAMPLER_KEYS = {
    "n_sample": int, "n_step": int, "acceptance_rate_cutoff": float, "alpha": float,
    "chains_per_level": int, "chain_length": int, "max_simulations": int,
    "gamma": float, "probe_budget": int, "batch_size": int,
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        self.message, self.line, self.path = message, line, path
        where = f"{path or '<config>'}:{line}" if line else f"{path or '<config>'}"
        super().__init__(f"{where}: {message}")


class Section(dict):
    """Mapping that remembers the source line of itself and of each key."""

    line: int | None = None
    lines: dict

    def line_of(self, key) -> int | None:
        return self.lines.get(key, self.line)


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = Section()
    out.line = node.start_mark.line + 1
    out.lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", key_node.start_mark.line + 1)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = key_node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    return obj


@dataclass
class RunConfig:
    """A validated configuration; ``data`` is the plain nested mapping."""

    data: dict
    path: Path | None = None
    lines: Section | None = field(default=None, repr=False, compare=False)

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.data == other.data

    # -- parsing -------------------------------------------------------------

    @classmethod
    def parse(cls, text: str, path=None) -> "RunConfig":
        try:
            raw = yaml.load(text, Loader=_Loader)
        except ConfigError as exc:
            raise ConfigError(exc.message, exc.line, path) from None
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                              mark.line + 1 if mark else None, path) from None
        if not isinstance(raw, Section):
            raise ConfigError("configuration must be a mapping of sections", 1, path)
        cfg = cls(_plain(raw), Path(path) if path is not None else None, raw)
        _Validator(cfg, raw).run()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
        return cls.parse(text, path)

    def serialize(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False, default_flow_style=False)

    def replace(self, **top) -> "RunConfig":
        data = copy.deepcopy(self.data)
        data.update(top)
        return RunConfig(data, self.path, self.lines)

    # -- accessors ---------------------------------------------------------

    @property
    def base_dir(self) -> Path:
        return self.path.parent if self.path is not None else Path.cwd()

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def master_seed(self) -> int:
        return int(self.data["master_seed"])

    def section(self, name: str) -> dict:
        return self.data.get(name, {})

    def require(self, *names: str) -> None:
        for name in names:
            if name not in self.data:
                raise ConfigError(f"missing section {name!r}", 1, self.path)

    @property
    def payload_kind(self) -> str:
        return self.data["model"]["payload_kind"]

    def build_model(self):
        m = self.data["model"]
        if m["payload_kind"] == "gaussian-toy":
            return GaussianToyModel(n_obs=int(m.get("n_obs", 100)))
        kw = {}
        density = None
        for key, value in m.items():
            if key in ("payload_kind", "n_bins", "r_max"):
                continue
            if key == "number_density":
                density = parse_quantity(value, "number_density")
            elif key == "thermostat_damping" and value is None:
                kw[key] = None
            elif key in _LJ_QUANTITIES:
                kw[key] = parse_quantity(value, _LJ_QUANTITIES[key])
            else:
                kw[key] = int(value)
        if "dt" in kw:
            kw["dt"] *= 1000.0  # settings take fs
        if density is not None:
            settings = SimSettings.at_density(kw.pop("n_particles", 125), density, **kw)
        else:
            settings = SimSettings(**kw)
        r_max = parse_quantity(m["r_max"], "length") if "r_max" in m else None
        with_boltzmann = self.section("discrepancy").get("kind") == "kl-boltzmann"
        return LJModel(settings, n_bins=int(m.get("n_bins", 100)), r_max=r_max, with_boltzmann=with_boltzmann)

    def build_prior(self) -> PriorSpec:
        kinds = PARAM_KINDS[self.payload_kind]
        bounds, units = [], []
        for name, spec in self.data["prior"].items():
            kind = kinds[name]
            unit = spec.get("unit", "")
            lo, hi = float(spec["lower"]), float(spec["upper"])
            if kind is not None:
                lo = parse_quantity(f"{lo!r} {unit}", kind)
                hi = parse_quantity(f"{hi!r} {unit}", kind)
            bounds.append((name, lo, hi))
            units.append(unit)
        return PriorSpec(tuple(bounds), tuple(units))

    def build_discrepancy(self, default_indices=None):
        d = self.data["discrepancy"]
        if d["kind"] == "kl-boltzmann":
            return KLDiscrepancy(int(d.get("n_bins", 30)), float(d.get("alpha", 1e-6)))
        indices = d.get("indices", default_indices)
        if indices is None:
            indices = ["mean"] if self.payload_kind == "gaussian-toy" else list(range(4, 10))
        scales = {(f"S{k}" if isinstance(k, int) else str(k)): float(v) for k, v in d.get("scales", {}).items()}
        return SummaryDiscrepancy(tuple(indices), scales)

    def truth(self):
        syn = self.section("observed").get("synthetic")
        if syn is None:
            return None
        kinds = PARAM_KINDS[self.payload_kind]
        return tuple(_param_value(syn["phi"][n], kinds[n]) for n in kinds)

    def sampler_kind(self) -> str:
        return self.data["sampler"]["kind"]

    def sampler_config(self, seed: int | None = None) -> SamplerConfig:
        s = self.data["sampler"]
        kw = {k: _SAMPLER_KEYS[k](v) for k, v in s.items()
              if k in _SAMPLER_KEYS and k not in ("gamma", "probe_budget", "batch_size")}
        return SamplerConfig(rng_seed=self.master_seed if seed is None else seed, **kw)

    def scheduler(self, n_workers: int | None = None) -> Scheduler:
        s = self.section("scheduler")
        return Scheduler(s.get("policy", "dynamic"), n_workers or int(s.get("n_workers", 1)),
                         bool(s.get("virtual", False)))

    def output_dir(self, override=None) -> Path:
        if override is not None:
            return Path(override)
        return self.resolve(self.section("output").get("directory", "ffabc-output"))

    def config_hash(self) -> str:
        """SHA-256 over everything except the scheduler and output sections.

        Those two never change results, so leaving them out keeps outputs
        byte-identical across worker counts, policies and output locations.
        """
        core = {k: v for k, v in self.data.items() if k not in ("scheduler", "output")}
        return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()

    def provenance(self, seed: int | None = None) -> dict:
        return {
            "ffabc_version": __version__,
            "config_sha256": self.config_hash(),
            "master_seed": self.master_seed if seed is None else seed,
        }


def _param_value(value, kind):
    if kind is None:
        if isinstance(value, str):
            raise UnitError(f"{value!r} should be a plain number")
        return float(value)
    return parse_quantity(value, kind)


class _Validator:
    def __init__(self, cfg: RunConfig, raw: Section):
        self.cfg, self.raw, self.path = cfg, raw, cfg.path

    def fail(self, message, section: Section | None = None, key=None):
        line = None
        if isinstance(section, Section):
            line = section.line_of(key) if key is not None else section.line
        raise ConfigError(message, line, self.path)

    def sub(self, parent: Section, key, required=True) -> Section | None:
        if key not in parent:
            if required:
                self.fail(f"missing section {key!r}", parent)
            return None
        v = parent[key]
        if not isinstance(v, Section):
            self.fail(f"{key!r} must be a mapping", parent, key)
        return v

    def allowed(self, sec: Section, keys, where: str):
        for k in sec:
            if k not in keys:
                self.fail(f"unknown key {k!r} in {where} (allowed: {', '.join(map(str, keys))})", sec, k)

    def run(self):
        raw = self.raw
        known = ("master_seed", "model", "prior", "discrepancy", "observed", "sampler",
                 "scheduler", "output", "predict", "bench")
        self.allowed(raw, known, "top level")
        if "master_seed" not in raw:
            self.fail("missing master_seed", raw)
        if not isinstance(raw["master_seed"], int) or isinstance(raw["master_seed"], bool) or raw["master_seed"] < 0:
            self.fail("master_seed must be a non-negative integer", raw, "master_seed")
        if "model" in raw:
            self.model()
        if "prior" in raw:
            self.prior()
        if "discrepancy" in raw:
            self.discrepancy()
        if "observed" in raw:
            self.observed()
        if "sampler" in raw:
            self.sampler()
        if "scheduler" in raw:
            self.scheduler()
        if "output" in raw:
            self.output()
        if "predict" in raw:
            self.predict()
        if "bench" in raw:
            self.bench()
        # a calibration section makes sense only with the model it calibrates
        present = [g for g in ("discrepancy", "observed", "sampler", "predict") if g in raw]
        missing = [g for g in ("model", "prior") if g not in raw]
        if present and missing:
            self.fail(f"sections {', '.join(missing)} are required alongside {', '.join(present)}", raw)

    def model(self):
        m = self.sub(self.raw, "model")
        kind = m.get("payload_kind")
        if kind not in PAYLOADS:
            self.fail(f"payload_kind must be one of {PAYLOADS}", m, "payload_kind")
        if kind == "gaussian-toy":
            self.allowed(m, ("payload_kind", "n_obs"), "model")
            if not _pos_int(m.get("n_obs", 100)):
                self.fail("n_obs must be a positive integer", m, "n_obs")
            return
        self.allowed(m, ("payload_kind", *_LJ_QUANTITIES, *_LJ_INTS), "model")
        if "box_length" in m and "number_density" in m:
            self.fail("give either box_length or number_density, not both", m, "number_density")
        for key, kind_ in _LJ_QUANTITIES.items():
            if key in m and not (key == "thermostat_damping" and m[key] is None):
                self.quantity(m, key, kind_)
        for key in _LJ_INTS:
            if key in m and not _pos_int(m[key], allow_zero=key == "n_equilibration"):
                self.fail(f"{key} must be a positive integer", m, key)
        try:
            self.cfg.build_model()
        except (ValueError, TypeError) as exc:
            self.fail(f"invalid model settings: {exc}", m)

    def quantity(self, sec, key, kind):
        try:
            return parse_quantity(sec[key], kind)
        except UnitError as exc:
            self.fail(f"{key}: {exc}", sec, key)

    def prior(self):
        p = self.sub(self.raw, "prior")
        payload = self.raw.get("model", {}).get("payload_kind")
        kinds = PARAM_KINDS.get(payload, {})
        if list(p) != list(kinds):
            self.fail(f"prior must list parameters {list(kinds)} in this order, got {list(p)}", p)
        for name, spec in p.items():
            if not isinstance(spec, Section):
                self.fail(f"prior {name!r} must be a mapping with lower/upper", p, name)
            self.allowed(spec, ("lower", "upper", "unit"), f"prior {name!r}")
            for b in ("lower", "upper"):
                if b not in spec or not _number(spec[b]):
                    self.fail(f"prior {name!r} needs a numeric {b!r}", spec, b if b in spec else None)
            if kinds[name] is not None:
                if "unit" not in spec:
                    self.fail(f"prior {name!r} needs a unit ({kinds[name]})", spec)
                try:
                    parse_quantity(f"1 {spec['unit']}", kinds[name])
                except UnitError as exc:
                    self.fail(str(exc), spec, "unit")
            if not spec["lower"] < spec["upper"]:
                self.fail(f"prior {name!r} needs lower < upper", spec, "lower")

    def discrepancy(self):
        d = self.sub(self.raw, "discrepancy")
        kind = d.get("kind")
        if kind not in DISCREPANCIES:
            self.fail(f"discrepancy kind must be one of {DISCREPANCIES}", d, "kind" if "kind" in d else None)
        payload = self.raw.get("model", {}).get("payload_kind")
        if kind == "kl-boltzmann":
            self.allowed(d, ("kind", "n_bins", "alpha"), "discrepancy")
            if payload != "lj-sim":
                self.fail("kl-boltzmann needs the lj-sim model", d, "kind")
            if "n_bins" in d and not _pos_int(d["n_bins"]):
                self.fail("n_bins must be a positive integer", d, "n_bins")
            if "alpha" in d and not (_number(d["alpha"]) and d["alpha"] > 0):
                self.fail("alpha must be positive", d, "alpha")
            return
        self.allowed(d, ("kind", "indices", "scales"), "discrepancy")
        if "scales" in d:
            sc = d["scales"]
            if not isinstance(sc, dict):
                self.fail("scales must map summary names to positive numbers", d, "scales")
            for k, v in sc.items():
                if k not in ("mean", *range(1, 10), *(f"S{i}" for i in range(1, 10))):
                    self.fail(f"scales key {k!r} is not a summary name (S1..S9 or mean)", sc, k)
                if not (_number(v) and v > 0):
                    self.fail(f"scale for {k} must be a positive number", sc, k)
        if "indices" not in d:
            return
        idx = d["indices"]
        if not isinstance(idx, list) or not idx or len(set(map(str, idx))) != len(idx):
            self.fail("indices must be a non-empty list without repeats", d, "indices")
        if payload == "gaussian-toy" and idx != ["mean"]:
            self.fail("the gaussian-toy model only provides the summary 'mean'", d, "indices")
        if payload == "lj-sim":
            bad = [i for i in idx if not (isinstance(i, int) and 4 <= i <= 9)]
            if bad:
                self.fail(f"the lj-sim model provides summaries 4..9 only; invalid indices {bad}", d, "indices")

    def observed(self):
        o = self.sub(self.raw, "observed")
        sources = [s for s in OBSERVED_SOURCES if s in o]
        self.allowed(o, OBSERVED_SOURCES, "observed")
        if len(sources) != 1:
            self.fail(f"observed needs exactly one source among {OBSERVED_SOURCES}, got {sources}", o)
        src = sources[0]
        payload = self.raw.get("model", {}).get("payload_kind")
        disc = self.raw.get("discrepancy", {})
        s = self.sub(o, src)
        if src == "synthetic":
            self.allowed(s, ("phi", "seed"), "observed.synthetic")
            phi = self.sub(s, "phi")
            kinds = PARAM_KINDS.get(payload, {})
            if set(phi) != set(kinds):
                self.fail(f"synthetic phi needs exactly {list(kinds)}", phi)
            for n in kinds:
                try:
                    _param_value(phi[n], kinds[n])
                except UnitError as exc:
                    self.fail(f"{n}: {exc}", phi, n)
            if "seed" in s and not _pos_int(s["seed"], allow_zero=True):
                self.fail("seed must be a non-negative integer", s, "seed")
            return
        if payload != "lj-sim":
            self.fail(f"observed {src} needs the lj-sim model", o, src)
        if disc.get("kind") == "kl-boltzmann":
            self.fail("kl-boltzmann needs a synthetic observed source (no Boltzmann series in ingested data)", o, src)
        if src == "curves":
            self.allowed(s, ("rdf_oo", "rdf_oh", "diffusion"), "observed.curves")
            if "rdf_oo" not in s:
                self.fail("curves needs at least rdf_oo", s)
            for key in ("rdf_oo", "rdf_oh"):
                if key in s and not self.cfg.resolve(s[key]).is_file():
                    self.fail(f"file not found: {self.cfg.resolve(s[key])}", s, key)
        else:
            names = [f"S{i}" for i in range(1, 10)]
            self.allowed(s, (*names, "diffusion"), "observed.summaries")
            for k, v in s.items():
                if k != "diffusion" and not _number(v):
                    self.fail(f"{k} must be a number", s, k)
        if "diffusion" in s:
            self.quantity(s, "diffusion", "diffusion")
        available = self._available(src, s)
        idx = disc.get("indices")
        if idx is not None:
            missing = [i for i in idx if i not in available]
            if missing:
                self.fail(f"discrepancy indices {missing} are not available from the observed data "
                          f"(available: {sorted(available)})", self.raw["discrepancy"], "indices")

    @staticmethod
    def _available(src, s) -> set:
        if src == "curves":
            out = set(range(4, 9))
        else:
            out = {int(k[1:]) for k in s if k != "diffusion"}
        if "diffusion" in s:
            out.add(9)
        return out

    def sampler(self):
        s = self.sub(self.raw, "sampler")
        kind = s.get("kind")
        if kind not in SAMPLER_KINDS:
            self.fail(f"sampler kind must be one of {SAMPLER_KINDS}", s, "kind" if "kind" in s else None)
        self.allowed(s, ("kind", *_SAMPLER_KEYS), "sampler")
        for k, typ in _SAMPLER_KEYS.items():
            if k in s and not (_pos_int(s[k]) if typ is int else _number(s[k])):
                self.fail(f"{k} must be a {'positive integer' if typ is int else 'number'}", s, k)
        if kind == "rejection" and "gamma" not in s:
            self.fail("rejection sampler needs gamma", s)
        if kind == "rejection" and not s["gamma"] > 0:
            self.fail("gamma must be positive", s, "gamma")
        try:
            cfg = self.cfg.sampler_config()
        except ValueError as exc:
            self.fail(str(exc), s)
        if kind == "abcsubsim" and cfg.n_sample % cfg.chains_per_level:
            self.fail("n_sample must be divisible by chains_per_level", s, "chains_per_level")

    def scheduler(self):
        s = self.sub(self.raw, "scheduler")
        self.allowed(s, ("policy", "n_workers", "virtual"), "scheduler")
        if s.get("policy", "dynamic") not in POLICIES:
            self.fail(f"policy must be one of {POLICIES}", s, "policy")
        if not _pos_int(s.get("n_workers", 1)):
            self.fail("n_workers must be a positive integer", s, "n_workers")

    def output(self):
        s = self.sub(self.raw, "output")
        self.allowed(s, ("directory", "kde_bandwidth_factor", "kde_points"), "output")
        if "kde_bandwidth_factor" in s and not (_number(s["kde_bandwidth_factor"]) and s["kde_bandwidth_factor"] > 0):
            self.fail("kde_bandwidth_factor must be positive", s, "kde_bandwidth_factor")
        if "kde_points" in s and not (_pos_int(s["kde_points"]) and s["kde_points"] >= 2):
            self.fail("kde_points must be an integer >= 2", s, "kde_points")

    def predict(self):
        s = self.sub(self.raw, "predict")
        self.allowed(s, ("n_draws", "observable", "seed"), "predict")
        if not (_pos_int(s.get("n_draws", 8)) and s.get("n_draws", 8) >= 4):
            self.fail("n_draws must be an integer >= 4", s, "n_draws")
        if s.get("observable", "rdf") not in ("rdf", "msd"):
            self.fail("observable must be rdf or msd", s, "observable")

    def bench(self):
        s = self.sub(self.raw, "bench")
        self.allowed(s, ("worker_counts", "durations", "replicates", "virtual", "time_unit"), "bench")
        wc = s.get("worker_counts")
        if not isinstance(wc, list) or not wc or not all(_pos_int(n) for n in wc):
            self.fail("worker_counts must be a non-empty list of positive integers", s,
                      "worker_counts" if "worker_counts" in s else None)
        d = self.sub(s, "durations")
        self.allowed(d, ("model", "m", "sigma", "a", "value", "seed"), "bench.durations")
        if d.get("model") not in ("equal", "lognormal", "pareto"):
            self.fail("durations model must be equal, lognormal or pareto", d, "model")
        if not _pos_int(d.get("m", 0)):
            self.fail("durations m must be a positive integer", d, "m")
        if not _pos_int(s.get("replicates", 1)):
            self.fail("replicates must be a positive integer", s, "replicates")


def _pos_int(v, allow_zero=False) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and (v >= 0 if allow_zero else v >= 1)


def _number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)
