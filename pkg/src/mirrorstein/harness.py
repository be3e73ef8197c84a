"""Experiment specifications, ground-truth generation and sweep orchestration.

Experiment specs are TOML files.  A complete example::

    experiment = "dirichlet20"     # dirichlet20 | quadratic20 | selective2d | logistic
    output_dir = "runs/dirichlet20"
    seeds = [0]
    concurrent = false             # run (sampler, rate, seed) cells in parallel
    workers = 4

    [target]                       # all optional
    dimension = 20
    sigma = 0.01                   # quadratic20
    matrix_seed = 0                # quadratic20
    n_train = 2000                 # logistic
    data_seed = 0                  # logistic

    [ground_truth]                 # all optional
    source = "exact"               # exact | mirror-langevin | file
    path = "reference.csv"         # required when source = "file"
    size = 1000
    seed = 12345

    [defaults]                     # applied to every sampler
    n = 50
    T = 500
    tau = 0.98
    kernel = "imq"
    cadence = 10

    [[sampler]]
    algorithm = "msvgd"
    rates = [0.1, 0.01, 0.001]
    step_mode = "rmsprop"

Relative paths are resolved against the spec file's directory.
"""

from __future__ import annotations

import dataclasses
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from mirrorstein import metrics
from mirrorstein.samplers import (
    SamplerConfig,
    StepSizeSchedule,
    check_compatible,
    mirror_langevin_sample,
    run,
)
from mirrorstein.targets import (
    Target,
    bayesian_logistic_regression,
    load_reference,
    benchmark_sparse_dirichlet,
    quadratic_simplex_target,
    random_spd_matrix,
    save_reference,
    selective_density_2d,
    synthetic_logistic_data,
)

EXPERIMENTS = ("dirichlet20", "quadratic20", "selective2d", "logistic")
GT_SOURCES = ("exact", "mirror-langevin", "file")
CONSTRAINED_RATES = (0.1, 0.01, 0.001)
PROJECTED_RATES = (0.01, 0.001, 0.0001)
FIXED_GRID = (0.01, 0.05, 0.1, 0.5, 1.0)

_DEFAULT_DIM = {"dirichlet20": 20, "quadratic20": 19, "selective2d": 2, "logistic": 10}
_DEFAULT_SAMPLERS = {
    "dirichlet20": ("msvgd", "svmd", "projected_svgd"),
    "quadratic20": ("msvgd", "svmd", "projected_svgd"),
    "selective2d": ("msvgd", "svmd", "projected_svgd"),
    "logistic": ("svgd", "svng"),
}
_CONFIG_KEYS = {
    "kernel", "kernel_space", "tau", "n", "T", "bandwidth", "freeze_bandwidth",
    "median_log_scaling", "minibatch", "damping", "metric", "init_concentration",
    "init_scale", "cadence", "record_mksd", "record_time",
}
_TOP_KEYS = {"experiment", "output_dir", "seeds", "concurrent", "workers", "target",
             "ground_truth", "defaults", "sampler"}
_TARGET_KEYS = {"dimension", "sigma", "matrix_seed", "n_train", "n_val", "n_test", "data_seed", "prior"}
_GT_KEYS = {"source", "path", "size", "seed", "chains", "burn_in", "thin", "step", "metropolis"}


class SpecError(ValueError):
    """Invalid experiment specification; the message names the field."""


@dataclass(frozen=True)
class GroundTruthSpec:
    source: str = "exact"
    path: Optional[Path] = None
    size: int = 1000
    seed: int = 12345
    chains: int = 100
    burn_in: int = 10_000
    thin: int = 10
    step: float = 1e-4
    metropolis: bool = True


@dataclass(frozen=True)
class SamplerSpec:
    """A sampler with the learning rates to sweep."""

    config: SamplerConfig
    rates: Tuple[float, ...]

    @property
    def name(self) -> str:
        return self.config.algorithm


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    output_dir: Path
    samplers: Tuple[SamplerSpec, ...]
    ground_truth: Optional[GroundTruthSpec]
    seeds: Tuple[int, ...] = (0,)
    target_options: Dict[str, float] = field(default_factory=dict)
    concurrent: bool = False
    workers: int = 4


# ----------------------------------------------------------------------
# Loading
# ----------------------------------------------------------------------


def _unknown(section: str, got, allowed):
    extra = sorted(set(got) - set(allowed))
    if extra:
        raise SpecError(f"{section}: unknown field(s) {', '.join(extra)}")


def _num(section, key, value, kind=float, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecError(f"{section}.{key}: expected a number, got {value!r}")
    if kind is int and not float(value).is_integer():
        raise SpecError(f"{section}.{key}: expected an integer, got {value!r}")
    v = kind(value)
    if positive and not v > 0:
        raise SpecError(f"{section}.{key}: must be positive, got {value!r}")
    if nonneg and v < 0:
        raise SpecError(f"{section}.{key}: must be non-negative, got {value!r}")
    return v


def _coerce(section: str, table: dict) -> dict:
    kwargs = {}
    for key, val in table.items():
        if key in ("tau", "damping", "init_concentration", "init_scale"):
            kwargs[key] = _num(section, key, val, positive=True)
        elif key in ("n", "cadence", "minibatch"):
            kwargs[key] = _num(section, key, val, int, positive=True)
        elif key == "T":
            kwargs[key] = _num(section, key, val, int, nonneg=True)
        elif key == "bandwidth":
            kwargs[key] = _num(section, key, val, positive=True)
        elif key in ("freeze_bandwidth", "median_log_scaling", "record_mksd", "record_time"):
            if not isinstance(val, bool):
                raise SpecError(f"{section}.{key}: expected true or false")
            kwargs[key] = val
        else:
            if not isinstance(val, str):
                raise SpecError(f"{section}.{key}: expected a string")
            kwargs[key] = val
    return kwargs


def _sampler_config(section: str, kwargs: dict, algorithm: str) -> SamplerConfig:
    try:
        return SamplerConfig(algorithm=algorithm, **kwargs)
    except ValueError as exc:
        raise SpecError(f"{section}.{exc}") from exc


def _default_rates(experiment: str, algorithm: str) -> Tuple[Tuple[float, ...], str]:
    if experiment == "logistic":
        return FIXED_GRID, "fixed"
    if algorithm == "projected_svgd":
        return PROJECTED_RATES, "rmsprop"
    return CONSTRAINED_RATES, "rmsprop"


def parse_spec(raw: dict, base: Path = Path(".")) -> ExperimentSpec:
    """Validate a parsed spec mapping."""
    _unknown("spec", raw, _TOP_KEYS)
    if "experiment" not in raw:
        raise SpecError("experiment: missing required field")
    exp = raw["experiment"]
    if exp not in EXPERIMENTS:
        raise SpecError(f"experiment: unknown value {exp!r}; choose from {', '.join(EXPERIMENTS)}")

    out = Path(raw.get("output_dir", f"runs/{exp}"))
    if not out.is_absolute():
        out = base / out

    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise SpecError("seeds: expected a non-empty list of integers")
    seeds = tuple(_num("spec", "seeds", s, int, nonneg=True) for s in seeds)

    concurrent = raw.get("concurrent", False)
    if not isinstance(concurrent, bool):
        raise SpecError("concurrent: expected true or false")
    workers = _num("spec", "workers", raw.get("workers", 4), int, positive=True)

    topts = dict(raw.get("target", {}))
    _unknown("target", topts, _TARGET_KEYS)
    for key, val in topts.items():
        kind = int if key in ("dimension", "matrix_seed", "n_train", "n_val", "n_test", "data_seed") else float
        topts[key] = _num("target", key, val, kind, nonneg=key.endswith("seed"), positive=not key.endswith("seed"))
    if exp == "selective2d" and topts.get("dimension", 2) != 2:
        raise SpecError("target.dimension: selective2d is two-dimensional")
    if exp == "dirichlet20" and topts.get("dimension", 20) < 2:
        raise SpecError("target.dimension: dirichlet20 needs dimension >= 2")

    gt = None
    if exp != "logistic":
        graw = dict(raw.get("ground_truth", {}))
        _unknown("ground_truth", graw, _GT_KEYS)
        default_src = "exact" if exp == "dirichlet20" else "mirror-langevin"
        src = graw.get("source", default_src)
        if src not in GT_SOURCES:
            raise SpecError(f"ground_truth.source: unknown value {src!r}")
        if src == "exact" and exp != "dirichlet20":
            raise SpecError(f"ground_truth.source: no exact sampler for {exp}")
        path = None
        if src == "file":
            if "path" not in graw:
                raise SpecError("ground_truth.path: required when source is 'file'")
            path = Path(graw["path"])
            if not path.is_absolute():
                path = base / path
            if not path.is_file():
                raise SpecError(f"ground_truth.path: file not found: {path}")
        kw = {}
        for key in ("size", "seed", "chains", "burn_in", "thin"):
            if key in graw:
                kw[key] = _num("ground_truth", key, graw[key], int, nonneg=key in ("seed", "burn_in"),
                               positive=key not in ("seed", "burn_in"))
        if "step" in graw:
            kw["step"] = _num("ground_truth", "step", graw["step"], positive=True)
        if "metropolis" in graw:
            if not isinstance(graw["metropolis"], bool):
                raise SpecError("ground_truth.metropolis: expected true or false")
            kw["metropolis"] = graw["metropolis"]
        gt = GroundTruthSpec(source=src, path=path, **kw)
    elif "ground_truth" in raw:
        raise SpecError("ground_truth: not used by the logistic experiment")

    defaults = dict(raw.get("defaults", {}))
    _unknown("defaults", defaults, _CONFIG_KEYS)
    defaults = _coerce("defaults", defaults)

    sampler_tables = raw.get("sampler")
    if sampler_tables is None:
        sampler_tables = [{"algorithm": a} for a in _DEFAULT_SAMPLERS[exp]]
    if not isinstance(sampler_tables, list) or not sampler_tables:
        raise SpecError("sampler: expected a non-empty array of tables")

    samplers = []
    for i, tab in enumerate(sampler_tables):
        sec = f"sampler[{i}]"
        tab = dict(tab)
        _unknown(sec, tab, _CONFIG_KEYS | {"algorithm", "rates", "step_mode"})
        if "algorithm" not in tab:
            raise SpecError(f"{sec}.algorithm: missing required field")
        alg = tab.pop("algorithm")
        rates_default, mode_default = _default_rates(exp, alg)
        rates = tab.pop("rates", list(rates_default))
        mode = tab.pop("step_mode", mode_default)
        if mode not in ("fixed", "rmsprop"):
            raise SpecError(f"{sec}.step_mode: unknown value {mode!r}")
        if not isinstance(rates, list) or not rates:
            raise SpecError(f"{sec}.rates: expected a non-empty list")
        rates = tuple(_num(sec, "rates", r, positive=True) for r in rates)
        merged = {**defaults, **_coerce(sec, tab)}
        cfg = _sampler_config(sec, merged, alg)
        cfg = cfg.replace(step=StepSizeSchedule(mode, rates[0]))
        try:
            check_compatible(cfg, _probe_target(exp))
        except ValueError as exc:
            raise SpecError(f"{sec}.{exc}") from exc
        samplers.append(SamplerSpec(cfg, rates))

    return ExperimentSpec(exp, out, tuple(samplers), gt, seeds, topts, concurrent, workers)


def load_spec(path) -> ExperimentSpec:
    """Read and validate a TOML experiment spec."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise SpecError(f"spec file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"spec file is not valid TOML: {exc}") from exc
    return parse_spec(raw, path.parent)


# ----------------------------------------------------------------------
# Targets and ground truth
# ----------------------------------------------------------------------


class _Probe:
    def __init__(self, constrained):
        self.domain = object() if constrained else None


def _probe_target(exp):
    return _Probe(exp != "logistic")


def build_target(spec: ExperimentSpec):
    """Construct the target (and data split for logistic regression)."""
    opts = spec.target_options
    d = int(opts.get("dimension", _DEFAULT_DIM[spec.experiment]))
    if spec.experiment == "dirichlet20":
        return benchmark_sparse_dirichlet(d, opts.get("prior", 0.1)), None
    if spec.experiment == "quadratic20":
        A = random_spd_matrix(d, np.random.default_rng(int(opts.get("matrix_seed", 0))))
        return quadratic_simplex_target(A, opts.get("sigma", 0.01)), None
    if spec.experiment == "selective2d":
        return selective_density_2d(), None
    data = synthetic_logistic_data(
        int(opts.get("n_train", 2000)),
        d,
        int(opts.get("n_val", 500)),
        int(opts.get("n_test", 1000)),
        np.random.default_rng(int(opts.get("data_seed", 0))),
    )
    return bayesian_logistic_regression(data.X_train, data.y_train), data


def reference_path(spec: ExperimentSpec) -> Path:
    return spec.output_dir / "reference.csv"


def generate_ground_truth(spec: ExperimentSpec, target: Optional[Target] = None) -> Path:
    """Write the reference sample for ``spec`` and return its path."""
    gt = spec.ground_truth
    if gt is None:
        raise ValueError(f"{spec.experiment} has no ground truth")
    if target is None:
        target, _ = build_target(spec)
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    dest = reference_path(spec)
    if gt.source == "file":
        load_reference(gt.path, target.dim)  # validates the column count
        if gt.path.resolve() != dest.resolve():
            shutil.copyfile(gt.path, dest)
        return dest
    rng = np.random.default_rng(gt.seed)
    if gt.source == "exact":
        sample = target.sample(gt.size, rng)
    else:
        sample = mirror_langevin_sample(
            target, gt.size, rng, gt.step, gt.burn_in, gt.thin, gt.chains, metropolis=gt.metropolis
        )
    save_reference(dest, sample)
    return dest


# ----------------------------------------------------------------------
# Sweeps
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CellResult:
    sampler: str
    rate: float
    seed: int
    trace_path: Path
    final_energy_distance: Optional[float] = None
    final_mksd2: Optional[float] = None
    val_log_predictive: Optional[float] = None
    test_log_predictive: Optional[float] = None
    error: Optional[str] = None


def cell_name(sampler: str, rate: float, seed: int) -> str:
    return f"{sampler}_lr{format(rate, 'g')}_seed{seed}"


def run_cell(spec: ExperimentSpec, sspec: SamplerSpec, rate: float, seed: int, reference=None) -> CellResult:
    """Run one (sampler, rate, seed) cell and write its trace CSV."""
    target, data = build_target(spec)
    cfg = sspec.config.replace(seed=seed, step=dataclasses.replace(sspec.config.step, base_rate=rate))
    path = spec.output_dir / f"{cell_name(sspec.name, rate, seed)}.csv"
    ps, trace = run(cfg, target, reference)
    metrics.write_trace(trace, path)
    final = trace.final
    val = test = None
    if data is not None:
        val = metrics.test_log_predictive(ps.theta, data.X_val, data.y_val)
        test = metrics.test_log_predictive(ps.theta, data.X_test, data.y_test)
    return CellResult(sspec.name, rate, seed, path, final.energy_distance, final.mksd2, val, test)


def _run_cell_args(args):
    return run_cell(*args)


SUMMARY_HEADER = ("sampler", "rate", "seed", "final_energy_distance", "final_mksd2",
                  "val_log_predictive", "test_log_predictive", "trace")


def write_summary(results: List[CellResult], path: Path) -> None:
    def f(v):
        return "" if v is None else format(float(v), ".17g")

    lines = [",".join(SUMMARY_HEADER)]
    for r in results:
        lines.append(",".join([r.sampler, format(r.rate, "g"), str(r.seed), f(r.final_energy_distance),
                               f(r.final_mksd2), f(r.val_log_predictive), f(r.test_log_predictive),
                               r.trace_path.name]))
    path.write_text("\n".join(lines) + "\n")


def run_experiment(spec: ExperimentSpec) -> List[CellResult]:
    """Generate ground truth if needed, then run every cell of the sweep."""
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    reference = None
    if spec.ground_truth is not None:
        target, _ = build_target(spec)
        reference = load_reference(generate_ground_truth(spec, target), target.dim)
    jobs = [
        (spec, s, rate, seed, reference)
        for s in spec.samplers
        for rate in s.rates
        for seed in spec.seeds
    ]
    if spec.concurrent and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run_cell_args, jobs))
    else:
        results = [run_cell(*job) for job in jobs]
    write_summary(results, spec.output_dir / "summary.csv")
    return results


def best_rate(results: List[CellResult], sampler: str, key: str, maximize: bool) -> Tuple[float, float]:
    """Rate with the best seed-averaged ``key`` for one sampler; returns ``(rate, value)``."""
    by_rate: Dict[float, List[float]] = {}
    for r in results:
        if r.sampler != sampler:
            continue
        v = getattr(r, key)
        by_rate.setdefault(r.rate, []).append(np.nan if v is None else v)
    scored = {
        rate: float(np.mean(vals)) for rate, vals in by_rate.items() if np.all(np.isfinite(vals))
    }
    if not scored:
        raise ValueError(f"no finite {key} for {sampler}")
    pick = (max if maximize else min)(scored, key=scored.get)
    return pick, scored[pick]


__all__ = [
    "SpecError",
    "ExperimentSpec",
    "SamplerSpec",
    "GroundTruthSpec",
    "CellResult",
    "load_spec",
    "parse_spec",
    "build_target",
    "generate_ground_truth",
    "run_experiment",
    "run_cell",
    "best_rate",
    "cell_name",
]
