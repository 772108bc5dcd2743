"""
catbranch: run catalytic branching diffusion experiments from a JSON config.

    python catbranch.py gronwall --config configs/cyclic.json --plot
    python catbranch.py check-conditions --config configs/log_modulus.json

Every run writes {experiment}-{fixture}-{seed}.json (summary with the fully
resolved config) and .csv (primary series), plus .svg with --plot. The exit
status is 0 for Pass, 2 for Fail, 3 for Inconclusive and 1 when the config
or the output directory is unusable.
"""

import argparse
import contextlib
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

import numpy as np  # noqa: E402
import psutil  # noqa: E402
from pydantic import (BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat,  # noqa: E402
                      ValidationError, model_validator)

from coefficients import (DEFAULT_BOX, DEFAULT_PAIRS, DEFAULT_TRUNCATION, CoefficientModel,  # noqa: E402
                          classify_zero_set, verify_extended_lipschitz)
from experiments import (DEFAULT_DELTA, DEFAULT_EPSILON, DEFAULT_GAPS, StoppingBand,  # noqa: E402
                         audit_with_reestimation, cascade_experiment, catalyst_trap_audit,
                         continuity_experiment, detect_tau_c0, detect_tau_eps, eta_bound_audit_batches,
                         explosion_experiment, gronwall_experiment, martingale_experiment, trap_audit)
from modulus import (PROBE_SCHEDULE_VERSION, TOL_DIV, TOL_POS, TOL_RATIO, ModulusDomainError,  # noqa: E402
                     ModulusSpec, PhiFamily, Side, check_growth_conditions, check_integral_divergence,
                     check_liminf_positive, check_slope_ratio, phi_bound_audit)
from sde_engine import (CPU_CORES, CPU_THREADS, SimConfig, batch_size_for, map_paths,  # noqa: E402
                        simulate_batch, simulate_coupled_batch)
from verdicts import Verdict, fold  # noqa: E402

logger = logging.getLogger(__name__)

SVG_SALT = "catbranch"
FLOAT_FORMAT = "%.17g"
EXIT_IO = 1


class ConfigError(Exception):
    """A config document that failed to parse or validate; carries every message."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ---------------------------------------------------------------------
# config
# ---------------------------------------------------------------------


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


class ModelBlock(_Block):
    d: int = Field(ge=1)
    family: Literal["cyclic", "sin_series", "constant", "radial"] = "cyclic"
    gamma: Optional[List[PositiveFloat]] = None
    theta: Optional[List[PositiveFloat]] = None
    truncation: int = Field(DEFAULT_TRUNCATION, ge=1)
    values: Optional[List[NonNegativeFloat]] = None
    scale: Optional[List[NonNegativeFloat]] = None
    power: NonNegativeFloat = 2.0
    alpha: Optional[List[float]] = None

    @model_validator(mode="after")
    def _lengths(self):
        for name in ("gamma", "theta", "values", "scale", "alpha"):
            value = getattr(self, name)
            if value is not None and len(value) != self.d:
                raise ValueError(f"{name} has {len(value)} entries, expected d={self.d}")
        return self

    def build(self) -> CoefficientModel:
        ones = [1.0] * self.d
        if self.family == "cyclic":
            return CoefficientModel.cyclic(self.gamma or ones, self.alpha)
        if self.family == "sin_series":
            return CoefficientModel.sin_series(self.theta or ones, self.truncation, self.alpha)
        if self.family == "constant":
            return CoefficientModel.constant(self.values or ones, self.alpha)
        return CoefficientModel.radial(self.scale or ones, self.power, self.alpha)


class ModulusBlock(_Block):
    family: Literal["constant", "log", "loglog", "power", "tabulated"] = "log"
    c0: Optional[PositiveFloat] = None
    c: PositiveFloat = 1.0
    p: float = 1.0
    s: Optional[List[PositiveFloat]] = None
    r: Optional[List[PositiveFloat]] = None
    delta: PositiveFloat = DEFAULT_DELTA
    epsilon: float = Field(DEFAULT_EPSILON, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _buildable(self):
        if self.family == "tabulated" and (self.s is None or self.r is None):
            raise ValueError("tabulated modulus needs both s and r columns")
        self.build()
        return self

    def build(self) -> ModulusSpec:
        if self.family == "constant":
            return ModulusSpec.constant(self.c, self.c0 or 0.1)
        if self.family == "log":
            return ModulusSpec.log(self.c0)
        if self.family == "loglog":
            return ModulusSpec.loglog(self.c0)
        if self.family == "power":
            return ModulusSpec.power(self.p, self.c0 or 0.1)
        return ModulusSpec.tabulated(self.s, self.r)


class GrowthBlock(_Block):
    """rho at infinity plus the growth-bound constant for the explosion dichotomy."""

    family: Literal["constant", "log", "loglog", "power"] = "log"
    k: Optional[PositiveFloat] = None
    c: PositiveFloat = 1.0
    p: float = 1.0
    C: PositiveFloat = 10.0
    k_dom: Optional[PositiveFloat] = None
    r_max: PositiveFloat = 1e4
    samples: int = Field(10_000, ge=1)

    @model_validator(mode="after")
    def _buildable(self):
        self.build()
        return self

    def build(self) -> ModulusSpec:
        if self.family == "constant":
            return ModulusSpec.constant(self.c, self.k or 1.0, side=Side.INFINITY)
        if self.family == "log":
            return ModulusSpec.log(self.k, side=Side.INFINITY)
        if self.family == "loglog":
            return ModulusSpec.loglog(self.k, side=Side.INFINITY)
        return ModulusSpec.power(self.p, self.k or 1.0, side=Side.INFINITY)


class SimBlock(_Block):
    dt: PositiveFloat = 1e-3
    T: PositiveFloat = 1.0
    n_paths: int = Field(1000, ge=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    M: PositiveFloat = 1e6
    record_stride: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.dt > self.T:
            raise ValueError(f"dt={self.dt} must not exceed T={self.T}")
        return self

    def build(self) -> SimConfig:
        return SimConfig(dt=self.dt, T=self.T, M=self.M, seed=self.seed, n_paths=self.n_paths,
                         record_stride=self.record_stride)


class InitialBlock(_Block):
    a: Optional[List[NonNegativeFloat]] = None
    gap: Optional[List[float]] = None


class ExperimentBlock(_Block):
    t: Optional[PositiveFloat] = None
    gaps: List[NonNegativeFloat] = Field(default_factory=lambda: list(DEFAULT_GAPS), min_length=1)
    C_hat: Optional[NonNegativeFloat] = None
    lipschitz_pairs: int = Field(DEFAULT_PAIRS, ge=1)
    box: PositiveFloat = DEFAULT_BOX
    tol_pos: PositiveFloat = TOL_POS
    tol_ratio: PositiveFloat = TOL_RATIO
    tol_div: PositiveFloat = TOL_DIV
    csv_paths: int = Field(10, ge=1)


class OutputBlock(_Block):
    dir: str = "results"
    plot: bool = False


class RunConfig(_Block):
    name: str = Field("fixture", pattern=r"^[A-Za-z0-9_.-]+$")
    model: ModelBlock
    modulus: ModulusBlock = Field(default_factory=ModulusBlock)
    growth: Optional[GrowthBlock] = None
    sim: SimBlock = Field(default_factory=SimBlock)
    initial: InitialBlock = Field(default_factory=InitialBlock)
    experiment: ExperimentBlock = Field(default_factory=ExperimentBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    @model_validator(mode="after")
    def _consistent(self):
        d = self.model.d
        a, gap = self.start, self.gap
        if a.size != d:
            raise ValueError(f"initial.a has {a.size} entries, expected d={d}")
        if gap.size != d:
            raise ValueError(f"initial.gap has {gap.size} entries, expected d={d}")
        if np.any(a + gap < 0):
            raise ValueError("initial.a + initial.gap must stay in the non-negative orthant")
        if not self.sim.M > float(np.max(np.maximum(a, a + gap))):
            raise ValueError(f"sim.M={self.sim.M} must exceed every initial coordinate")
        return self

    @property
    def start(self) -> np.ndarray:
        return np.ones(self.model.d) if self.initial.a is None else np.asarray(self.initial.a, dtype=float)

    @property
    def gap(self) -> np.ndarray:
        if self.initial.gap is not None:
            return np.asarray(self.initial.gap, dtype=float)
        gap = np.zeros(self.model.d)
        gap[0] = 1e-3
        return gap


def _messages(err: ValidationError) -> List[str]:
    out = []
    for e in err.errors():
        where = ".".join(str(part) for part in e["loc"]) or "config"
        out.append(f"{where}: {e['msg']}")
    return out


def parse_config(document: str) -> RunConfig:
    """Parse and validate a JSON config, reporting every problem at once."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as e:
        raise ConfigError([f"malformed JSON: {e}"]) from e
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_messages(e)) from e


def serialize_config(config: RunConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def load_config(path: Path, seed: Optional[int] = None, out: Optional[Path] = None,
                plot: Optional[bool] = None) -> RunConfig:
    """Read a config file and apply the --seed / --out / --plot overrides."""
    config = parse_config(Path(path).read_text(encoding="utf-8"))
    if seed is None and out is None and plot is None:
        return config
    data = config.model_dump(mode="json")
    if seed is not None:
        data["sim"]["seed"] = seed
    if out is not None:
        data["output"]["dir"] = str(out)
    if plot is not None:
        data["output"]["plot"] = plot
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_messages(e)) from e


# ---------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------


def write_atomic(path: Path, text: str):
    """Write through a temp file in the same directory, then rename over the target."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % float(value)
    return str(value)


def to_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def jsonable(obj):
    """Plain JSON types only; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def to_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def render_plot(x: Sequence[float], series: Dict[str, Sequence[float]], bound: Optional[Sequence[float]] = None,
                xlabel: str = "t", ylabel: str = "value", title: str = "") -> str:
    """A self-contained SVG line plot; identical input gives identical bytes."""
    if len(x) == 0 or not series or any(len(y) == 0 for y in series.values()):
        raise ValueError("cannot plot an empty series")
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        fig = Figure(figsize=(7.0, 4.5))
        ax = fig.subplots()
        for label, y in series.items():
            ax.plot(np.asarray(x, dtype=float), np.asarray(y, dtype=float), label=label, linewidth=1.4)
        if bound is not None:
            ax.plot(np.asarray(x, dtype=float), np.asarray(bound, dtype=float), "--", color="black",
                    label="bound", linewidth=1.2)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        if len(series) > 1 or bound is not None:
            ax.legend()
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


# ---------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------


@dataclass
class Outcome:
    verdict: Verdict
    summary: Dict
    header: List[str]
    rows: List[List]
    plot: Optional[Dict] = None


def _C_hat(config: RunConfig, model: CoefficientModel, r: ModulusSpec) -> float:
    if config.experiment.C_hat is not None:
        return config.experiment.C_hat
    return verify_extended_lipschitz(model, r, config.experiment.lipschitz_pairs, config.sim.seed,
                                     config.experiment.box).C_hat


def _simulate(config: RunConfig) -> Outcome:
    model, sim, a = config.model.build(), config.sim.build(), config.start
    batches = map_paths(lambda idx: simulate_batch(model, a, sim, idx), sim.n_paths, batch_size_for(sim, model.d))
    traps = trap_audit(batches)
    explosions = sum(int(np.count_nonzero(b.exploded_at >= 0)) for b in batches)
    shown = min(sim.n_paths, config.experiment.csv_paths)
    rows = []
    for b in batches:
        for i, p in enumerate(b.path_indices):
            if p >= shown:
                break
            rows.extend([int(p), t, *x] for t, x in zip(b.times, b.states[i]))
    first = batches[0]
    plot = {"x": first.times, "series": {f"x_{i + 1}": first.states[0, :, i] for i in range(model.d)},
            "xlabel": "t", "ylabel": "X_t", "title": "path 0"}
    summary = {"trap_audit": traps.to_dict(), "explosions": explosions, "n_paths": sim.n_paths}
    return Outcome(traps.verdict, summary, ["path", "t"] + [f"x_{i + 1}" for i in range(model.d)], rows, plot)


def _couple(config: RunConfig) -> Outcome:
    model, sim, r = config.model.build(), config.sim.build(), config.modulus.build()
    a, gap = config.start, config.gap
    batches = map_paths(lambda idx: simulate_coupled_batch(model, a, a + gap, sim, idx), sim.n_paths,
                        batch_size_for(sim, model.d, copies=2))
    band = StoppingBand.full(model.d, config.modulus.epsilon)
    audit = audit_with_reestimation(lambda C: eta_bound_audit_batches(batches, r, C, band, r.c0), model, r,
                                    _C_hat(config, model, r), config.experiment.lipschitz_pairs, sim.seed,
                                    config.experiment.box)
    run0 = batches[0].run(0)
    summary = {"band": band.to_dict(), "tau_c0": detect_tau_c0(run0, r.c0),
               "tau_eps": detect_tau_eps(run0, model, band), "zeta_T": float(run0.zeta[-1]),
               "eta_audit": audit.to_dict(), "catalyst_traps": catalyst_trap_audit(run0, model).to_dict()}
    d = model.d
    header = (["t"] + [f"x_{i + 1}" for i in range(d)] + [f"y_{i + 1}" for i in range(d)] + ["zeta"]
              + [f"xi_{i + 1}" for i in range(d)] + [f"eta_{i + 1}" for i in range(d)])
    rows = [[t, *x, *y, z, *xi, *eta]
            for t, x, y, z, xi, eta in zip(run0.times, run0.x.states, run0.y.states, run0.zeta, run0.xi, run0.eta)]
    plot = {"x": run0.times, "series": {"zeta": run0.zeta}, "xlabel": "t", "ylabel": "zeta_t",
            "title": "coupled path 0"}
    return Outcome(audit.verdict, summary, header, rows, plot)


def _gronwall(config: RunConfig) -> Outcome:
    model, sim, r = config.model.build(), config.sim.build(), config.modulus.build()
    report = gronwall_experiment(model, r, config.start, config.gap, config.modulus.delta,
                                 config.modulus.epsilon, None, sim, config.experiment.C_hat,
                                 config.experiment.lipschitz_pairs, config.experiment.box)
    header, rows = report.series()
    plot = {"x": report.t_grid, "series": {"log E[Phi]": report.log_means}, "bound": report.log_bound,
            "xlabel": "t", "ylabel": "log Phi_delta", "title": "Gronwall envelope"}
    return Outcome(report.verdict, report.to_dict(), header, rows, plot)


def _martingale(config: RunConfig) -> Outcome:
    model, sim = config.model.build(), config.sim.build()
    t = config.experiment.t or sim.T
    report = martingale_experiment(model, config.start, t, sim.n_paths, sim)
    header, rows = report.series()
    series = {f"mean_{i + 1}": report.grid_means[:, i] for i in range(model.d)}
    plot = {"x": report.t_grid, "series": series, "xlabel": "t", "ylabel": "E[exp(-alpha_i t) X_t^i]",
            "title": f"discounted means up to t={report.t:g}"}
    return Outcome(report.verdict, report.to_dict(), header, rows, plot)


def _continuity(config: RunConfig) -> Outcome:
    model, sim, r = config.model.build(), config.sim.build(), config.modulus.build()
    report = continuity_experiment(model, r, config.start, config.experiment.gaps, sim, config.modulus.epsilon)
    header, rows = report.series()
    plot = {"x": report.gaps, "series": {"median": report.medians, "p95": report.p95},
            "xlabel": "initial gap", "ylabel": "zeta at T", "title": "continuity sweep"}
    return Outcome(report.verdict, report.to_dict(), header, rows, plot)


def _explosion(config: RunConfig) -> Outcome:
    model, sim = config.model.build(), config.sim.build()
    growth = config.growth or GrowthBlock()
    rho = growth.build()
    report = explosion_experiment(model, rho, growth.C, sim, sim.n_paths, config.start, growth.k_dom,
                                  growth.r_max, growth.samples)
    summary = report.to_dict()
    summary["rho_conditions"] = [rep.to_dict() for rep in check_growth_conditions(rho)]
    header, rows = report.series()
    plot = None
    if report.first_times:
        times = sorted(report.first_times)
        plot = {"x": np.arange(1, len(times) + 1), "series": {"explosion time": times},
                "xlabel": "explosion rank", "ylabel": "t", "title": "explosion times"}
    return Outcome(report.verdict, summary, header, rows, plot)


def _check_conditions(config: RunConfig) -> Outcome:
    r = config.modulus.build()
    ex = config.experiment
    reports = [check_liminf_positive(r, tol_pos=ex.tol_pos), check_slope_ratio(r, tol_ratio=ex.tol_ratio),
               check_integral_divergence(r, tol_div=ex.tol_div)]
    if config.growth is not None:
        reports += check_growth_conditions(config.growth.build(), ex.tol_ratio, ex.tol_div)
    summary = {"conditions": [rep.to_dict() for rep in reports], "probe_schedule": PROBE_SCHEDULE_VERSION}
    try:
        fam = PhiFamily(r, config.modulus.delta)
        summary["phi_bound_audit"] = phi_bound_audit(fam, np.geomspace(r.c0 * 1e-8, r.c0, 50)).to_dict()
    except ModulusDomainError as e:
        summary["phi_bound_audit"] = {"skipped": f"Phi_delta needs r down to 0: {e}"}
    summary["zero_set"] = classify_zero_set(config.model.build(), seed=config.sim.seed).to_dict()

    verdict = fold(rep.verdict for rep in reports)
    rows = [[rep.condition_id.value, s, v] for rep in reports for s, v in rep.evidence]
    first = [(s, v) for s, v in reports[0].evidence if s > 0 and math.isfinite(v)]
    plot = None
    if first:
        plot = {"x": [math.log10(s) for s, _ in first], "series": {"r(s)": [v for _, v in first]},
                "xlabel": "log10 s", "ylabel": "r(s)", "title": "modulus on the probe tail"}
    return Outcome(verdict, summary, ["condition", "s", "value"], rows, plot)


def _cascade(config: RunConfig) -> Outcome:
    model, sim, r = config.model.build(), config.sim.build(), config.modulus.build()
    report = cascade_experiment(model, r, config.start, config.gap, sim, config.modulus.epsilon,
                                config.modulus.delta, config.experiment.C_hat, config.experiment.lipschitz_pairs,
                                config.experiment.box)
    header, rows = report.series()
    plot = None
    if rows:
        rows.sort(key=lambda row: (row[1], row[0]))
        plot = {"x": [row[1] for row in rows], "series": {"envelope margin": [row[2] for row in rows]},
                "xlabel": "trap time", "ylabel": "log-scale margin", "title": "post-trap stage"}
    return Outcome(report.verdict, report.to_dict(), header, rows, plot)


SUBCOMMANDS: Dict[str, Callable[[RunConfig], Outcome]] = {
    "simulate": _simulate,
    "couple": _couple,
    "gronwall": _gronwall,
    "martingale": _martingale,
    "continuity": _continuity,
    "explosion": _explosion,
    "check-conditions": _check_conditions,
    "cascade": _cascade,
}


def artifact_path(out_dir: Path, experiment: str, fixture: str, seed: int, ext: str) -> Path:
    return Path(out_dir) / f"{experiment}-{fixture}-{seed}.{ext}"


def run(subcommand: str, config_path: Path, seed: Optional[int] = None, out: Optional[Path] = None,
        plot: Optional[bool] = None) -> int:
    """Run one experiment and write its artifacts; returns the process exit status."""
    if subcommand not in SUBCOMMANDS:
        logger.error(f"unknown subcommand {subcommand!r}; choose from {sorted(SUBCOMMANDS)}")
        return EXIT_IO
    try:
        config = load_config(config_path, seed, out, plot)
    except ConfigError as e:
        for message in e.errors:
            logger.error(f"config: {message}")
        return EXIT_IO
    except OSError as e:
        logger.error(f"cannot read config {config_path}: {e}")
        return EXIT_IO

    logger.info(f"{subcommand}: fixture {config.name}, seed {config.sim.seed}")
    try:
        outcome = SUBCOMMANDS[subcommand](config)
    except ValueError as e:
        logger.error(f"{subcommand}: {e}")
        return EXIT_IO

    out_dir, used_seed = Path(config.output.dir), config.sim.seed
    summary = {"experiment": subcommand, "fixture": config.name, "seed": used_seed,
               "verdict": outcome.verdict.value, "exit_code": outcome.verdict.exit_code,
               "result": outcome.summary, "config": config.model_dump(mode="json")}
    try:
        write_atomic(artifact_path(out_dir, subcommand, config.name, used_seed, "json"), to_json(summary))
        write_atomic(artifact_path(out_dir, subcommand, config.name, used_seed, "csv"), to_csv(outcome.header, outcome.rows))
        if config.output.plot:
            if outcome.plot is None:
                logger.warning(f"{subcommand}: nothing to plot")
            else:
                svg = render_plot(**outcome.plot)
                write_atomic(artifact_path(out_dir, subcommand, config.name, used_seed, "svg"), svg)
    except OSError as e:
        logger.error(f"cannot write artifacts to {out_dir}: {e}")
        return EXIT_IO

    logger.info(f"✅ {subcommand}: {outcome.verdict.value} (artifacts in {out_dir})")
    return outcome.verdict.exit_code


def log_system_info():
    memory = psutil.virtual_memory()
    logger.info(f"🖥️ {CPU_CORES} cores / {CPU_THREADS} threads, "
                f"{memory.available / 2 ** 30:.1f} GiB of {memory.total / 2 ** 30:.1f} GiB available")


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="catbranch",
                                     description="Numerical experiments for catalytic branching diffusions")
    parser.add_argument("subcommand", choices=list(SUBCOMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="JSON run config")
    parser.add_argument("--seed", type=int, help="override sim.seed (unsigned 64-bit)")
    parser.add_argument("--out", type=Path, help="override output.dir")
    parser.add_argument("--plot", action="store_true", default=None, help="also write an SVG plot")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    log_system_info()
    return run(args.subcommand, args.config, args.seed, args.out, args.plot)


if __name__ == "__main__":
    sys.exit(main())
