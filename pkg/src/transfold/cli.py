"""Command-line interface.

Exit codes: 0 on success, 1 on usage or configuration errors, 2 when the
computation finished but declined to certify (a NonTransversal result, a
non-transversal fold met while building a limit curve, no attractor, or a
numerical breakdown).
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import io
from .continuation import ScanConfig, StepConfig, scan_folds, trace_branch
from .energy import build_allen_cahn, sweep_and_certify
from .errors import (
    ConfigError,
    DomainError,
    ExpressionError,
    NonSquareSystem,
    NotFound,
    NotOnZeroSet,
    SchemaViolation,
    TransfoldError,
)
from .genericity import genericity_experiment
from .problem import Point, get_problem, problem_from_config
from .singular_limit import LimitConfig, build_limit_curve, convergence_study
from .solve import enumerate_section
from .spectral import TolPolicy
from .transversality import DEFAULT_CERT_TOL, NON_TRANSVERSAL, CertTolerances, certify

DEFAULT_SEED = 20240917
OUTPUT_ENV = "TRANSFOLD_OUTPUT_DIR"
COMMANDS = ("certify", "trace", "folds", "generic", "limit", "pde", "section")
EXIT_OK, EXIT_USAGE, EXIT_DECLINED = 0, 1, 2

USAGE_ERRORS = (ConfigError, NotFound, ExpressionError, DomainError, NonSquareSystem, NotOnZeroSet, SchemaViolation)


@dataclass
class RunConfig:
    """Everything a run needs; unknown keys are rejected by :func:`parse_run_config`."""

    command: str
    problem: str | None = None
    problem_config: str | None = None
    point: list[float] | None = None
    t: float | None = None
    t_range: list[float] | None = None
    box: list[float] | None = None
    grid_density: int = 9
    samples: int = 100
    radius: float = 0.1
    eps_list: list[float] | None = None
    t_span: list[float] | None = None
    x_init: list[float] | None = None
    pde: int | None = None
    load: str = "t"
    y: str | None = None
    z: str | None = None
    diffusion: float | None = None
    tolerances: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    output_dir: str = "."
    format: str = "json"
    workers: int = 1

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        unknown = set(self.tolerances) - set(DEFAULT_CERT_TOL.as_dict())
        if unknown:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")

    def cert_tolerances(self) -> CertTolerances:
        d = DEFAULT_CERT_TOL.as_dict()
        d.update({k: float(v) for k, v in self.tolerances.items()})
        return CertTolerances.from_dict(d)


def parse_run_config(data: dict) -> RunConfig:
    """Strictly build a :class:`RunConfig` from a mapping."""
    if not isinstance(data, dict):
        raise ConfigError("run configuration must be a mapping")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "command" not in data:
        raise ConfigError("config is missing 'command'")
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_run_config(path) -> RunConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    return parse_run_config(data)


# -- helpers -------------------------------------------------------------------


def _floats(text, what: str) -> list[float]:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _problem(cfg: RunConfig):
    if cfg.problem_config:
        try:
            return problem_from_config(cfg.problem_config)
        except (ValueError, OSError) as exc:
            if isinstance(exc, TransfoldError):
                raise
            raise ConfigError(str(exc)) from None
    if not cfg.problem:
        raise ConfigError("--problem or --config is required")
    return get_problem(cfg.problem)


def _window(cfg: RunConfig, problem) -> tuple[float, float]:
    if cfg.t_range is not None:
        lo, hi = _floats(cfg.t_range, "t-range")
    else:
        lo, hi = problem.t_range
        pad = 1e-6 * (hi - lo)
        lo, hi = lo + pad, hi - pad
    if not lo < hi:
        raise ConfigError("t-range must be increasing")
    return lo, hi


def _box(cfg: RunConfig, n: int):
    lo, hi = _floats(cfg.box, "box") if cfg.box is not None else (-2.0, 2.0)
    return tuple((lo, hi) for _ in range(n))


def _out(cfg: RunConfig, name: str) -> Path:
    d = Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _field_arg(value):
    """A perturbation field: a file of numbers, or an expression in ``s``."""
    if value is None:
        return None
    if os.path.isfile(value):
        return np.loadtxt(value, delimiter=",", ndmin=1).ravel()
    try:
        return float(value)
    except ValueError:
        return value


def _say(msg: str) -> None:
    click.echo(msg, err=True)


# -- commands --------------------------------------------------------------------


def _cmd_certify(cfg, problem, tols, meta):
    if cfg.point is None:
        raise ConfigError("certify needs --point x1,...,xn,t")
    vals = _floats(cfg.point, "point")
    if len(vals) != problem.dim + 1:
        raise ConfigError(f"point needs {problem.dim + 1} numbers (x then t)")
    cert = certify(problem, Point(vals[:-1], vals[-1]), tols)
    path = io.write_json(_out(cfg, f"certify_{problem.name}.json"), cert, meta)
    _say(f"{cert.classification} -> {path}")
    return EXIT_DECLINED if cert.classification == NON_TRANSVERSAL else EXIT_OK


def _write_curves(cfg, stem, curves, meta):
    if cfg.format == "csv":
        for k, c in enumerate(curves):
            io.write_curve_csv(c, _out(cfg, f"{stem}_curve{k}.csv"), {**meta, "termination": c.termination})
    else:
        io.write_json(_out(cfg, f"{stem}_curves.json"), list(curves), meta)


def _cmd_trace(cfg, problem, tols, meta):
    if cfg.point is None:
        raise ConfigError("trace needs --point x1,...,xn,t")
    vals = _floats(cfg.point, "point")
    if len(vals) != problem.dim + 1:
        raise ConfigError(f"point needs {problem.dim + 1} numbers (x then t)")
    step = StepConfig(t_bounds=_window(cfg, problem))
    start = Point(vals[:-1], vals[-1])
    curves = [trace_branch(problem, start, d, step) for d in (1, -1)]
    _write_curves(cfg, f"trace_{problem.name}", curves, meta)
    _say(f"traced {sum(len(c) for c in curves)} nodes")
    return EXIT_OK


def _cmd_folds(cfg, problem, tols, meta):
    scan = ScanConfig(box=_box(cfg, problem.dim), t_window=_window(cfg, problem), grid_density=cfg.grid_density)
    result = scan_folds(problem, scan, tols)
    stem = f"folds_{problem.name}"
    io.write_json(_out(cfg, f"{stem}.json"), list(result.folds), {**meta, "scan": scan.as_dict(), "failures": result.failures})
    _write_curves(cfg, stem, result.curves, meta)
    for f in result.folds:
        _say(f"fold t={f.point.t:.12g} x={np.array2string(f.point.x, precision=12)} {f.certificate.classification}")
    bad = any(f.certificate.classification == NON_TRANSVERSAL for f in result.folds)
    return EXIT_DECLINED if bad else EXIT_OK


def _cmd_generic(cfg, problem, tols, meta):
    if cfg.samples < 0 or cfg.radius < 0:
        raise ConfigError("samples and radius must be non-negative")
    scan = ScanConfig(box=_box(cfg, problem.dim), t_window=_window(cfg, problem), grid_density=cfg.grid_density)
    report = genericity_experiment(problem, cfg.samples, cfg.radius, scan, cfg.seed, tols, cfg.workers)
    path = io.write_json(_out(cfg, f"generic_{problem.name}.json"), report, meta)
    _say(
        f"unperturbed {report.unperturbed_outcome}; failure_fraction {report.failure_fraction:g}; "
        f"inconclusive {report.inconclusive_fraction:g} -> {path}"
    )
    return EXIT_OK


def _cmd_limit(cfg, problem, tols, meta):
    if cfg.x_init is None or cfg.t_span is None:
        raise ConfigError("limit needs --x-init and --t-span")
    x_init = _floats(cfg.x_init, "x-init")
    t_span = _floats(cfg.t_span, "t-span")
    if len(t_span) != 2:
        raise ConfigError("t-span needs two numbers")
    lcfg = LimitConfig(tols=tols)
    limit = build_limit_curve(problem, x_init, t_span, lcfg)
    stem = f"limit_{problem.name}"
    io.write_limit_manifest(limit, cfg.output_dir, stem, meta)
    if cfg.eps_list:
        if t_span[1] <= t_span[0]:
            raise ConfigError("eps-flow integration needs an increasing t-span")
        table = convergence_study(problem, x_init, t_span, _floats(cfg.eps_list, "eps-list"), lcfg, workers=cfg.workers, limit=limit)
        for eps, trace in zip(table.eps, table.traces):
            io.write_trace_csv(trace, _out(cfg, f"{stem}_eps{eps:g}.csv"), {**meta, "epsilon": eps})
        summary = dataclasses.replace(table, traces=[])
        io.write_json(_out(cfg, f"{stem}_convergence.json"), summary, meta)
        for eps, d in zip(table.eps, table.distances):
            _say(f"eps={eps:g} sup-distance={d:.6g}")
    _say(f"{len(limit.jumps)} jump(s) at t={limit.jump_times}")
    return EXIT_OK


def _cmd_pde(cfg, problem, tols, meta):
    m = cfg.pde
    kwargs = {}
    if cfg.diffusion is not None:
        kwargs["diffusion"] = cfg.diffusion
    else:
        from .energy import CATALOG_DIFFUSION

        kwargs["diffusion"] = CATALOG_DIFFUSION
    ep = build_allen_cahn(m, load=cfg.load, y=_field_arg(cfg.y), z=_field_arg(cfg.z), **kwargs)
    lo, hi = _floats(cfg.t_range, "t-range") if cfg.t_range is not None else (-1.0, 1.0)
    meta = {**meta, "problem": ep.problem.name, "problem_hash": ep.problem.digest()}
    folds, curves = sweep_and_certify(ep, (lo, hi), tols=tols)
    stem = f"pde_{ep.problem.name}"
    io.write_json(_out(cfg, f"{stem}.json"), folds, meta)
    _write_curves(cfg, stem, curves, meta)
    for f in folds:
        c = f.energy_certificate
        _say(f"fold load={f.fold.point.t:.10g} {c.classification} gap={c.kernel.gap_ratio if c.kernel else math.inf:.3g}")
    bad = any(f.energy_certificate.classification == NON_TRANSVERSAL for f in folds)
    return EXIT_DECLINED if bad else EXIT_OK


def _cmd_section(cfg, problem, tols, meta):
    if cfg.t is None:
        raise ConfigError("section needs --t")
    section = enumerate_section(problem, float(cfg.t), _box(cfg, problem.dim), cfg.grid_density, workers=cfg.workers)
    stem = f"section_{problem.name}"
    if cfg.format == "csv":
        io.write_section_csv(section, _out(cfg, f"{stem}.csv"), meta)
    else:
        io.write_json(_out(cfg, f"{stem}.json"), section, meta)
    _say(f"{len(section.zeros)} zero(s) at t={section.t:g}")
    return EXIT_OK


HANDLERS = {
    "certify": _cmd_certify,
    "trace": _cmd_trace,
    "folds": _cmd_folds,
    "generic": _cmd_generic,
    "limit": _cmd_limit,
    "pde": _cmd_pde,
    "section": _cmd_section,
}


def run(config: RunConfig | dict) -> int:
    """Execute one command; returns the process exit code."""
    try:
        cfg = config if isinstance(config, RunConfig) else parse_run_config(config)
        tols = cfg.cert_tolerances()
        if cfg.command == "pde":
            if cfg.pde is None or int(cfg.pde) < 3:
                raise ConfigError("pde needs --pde m=<int> with m >= 3")
            problem = None
        else:
            problem = _problem(cfg)
        meta = io.make_metadata(seed=cfg.seed, tolerances=tols, problem=problem, command=cfg.command)
        return HANDLERS[cfg.command](cfg, problem, tols, meta)
    except USAGE_ERRORS as exc:
        _say(f"error: {type(exc).__name__}: {exc}")
        return EXIT_USAGE
    except TransfoldError as exc:
        _say(f"declined: {type(exc).__name__}: {exc}")
        return EXIT_DECLINED
    except (OSError, ValueError) as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE


# -- click wiring -------------------------------------------------------------------


def _common(f):
    options = [
        click.option("--problem", help="Catalog problem name."),
        click.option("--config", "problem_config", type=click.Path(), help="JSON/YAML problem definition."),
        click.option("--run-config", type=click.Path(exists=True), help="JSON/YAML RunConfig; flags override it."),
        click.option("--output-dir", envvar=OUTPUT_ENV, default=None, help=f"Output directory (env {OUTPUT_ENV}, default '.')."),
        click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None, help="Bulk output format."),
        click.option("--seed", type=int, default=None, help=f"Master RNG seed (default {DEFAULT_SEED})."),
        click.option("--tol", "tol", multiple=True, help="Tolerance override KEY=VALUE (zero_tol, margin_tol, rank_tol, ...)."),
        click.option("--workers", type=int, default=None, help="Threads for parallel maps."),
    ]
    for opt in reversed(options):
        f = opt(f)
    return f


def _invoke(command: str, **kwargs):
    base: dict = {}
    run_config = kwargs.pop("run_config", None)
    if run_config:
        try:
            base = dataclasses.asdict(load_run_config(run_config))
        except (TransfoldError, ValueError, OSError) as exc:
            _say(f"error: {exc}")
            sys.exit(EXIT_USAGE)
    base["command"] = command
    tol = kwargs.pop("tol", ())
    if tol:
        tols = dict(base.get("tolerances", {}))
        for item in tol:
            key, sep, value = item.partition("=")
            if not sep:
                _say(f"error: --tol expects KEY=VALUE, got {item!r}")
                sys.exit(EXIT_USAGE)
            try:
                tols[key.strip()] = float(value)
            except ValueError:
                _say(f"error: --tol {key}: not a number")
                sys.exit(EXIT_USAGE)
        base["tolerances"] = tols
    if "fmt" in kwargs:
        kwargs["format"] = kwargs.pop("fmt")
    for key, value in kwargs.items():
        if value is not None:
            base[key] = value
    sys.exit(run(base))


@click.group(invoke_without_command=True)
@click.option("--schema", is_flag=True, help="Print the JSON Schema of all output documents and exit.")
@click.version_option(package_name="transfold")
@click.pass_context
def main(ctx, schema):
    """Certified fold analysis for zero sets of F(x, t) = 0."""
    if schema:
        click.echo(json.dumps(io.schema_bundle(), indent=2, sort_keys=True))
        ctx.exit(0)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


@main.command("certify")
@_common
@click.option("--point", help="Comma-separated x1,...,xn,t.")
def certify_cmd(**kw):
    """Certify (T1)-(T3) at a zero of F."""
    _invoke("certify", **kw)


@main.command("trace")
@_common
@click.option("--point", help="Start point x1,...,xn,t on the zero set.")
@click.option("--t-range", help="Tracing window lo,hi.")
def trace_cmd(**kw):
    """Trace the branch through a point in both directions."""
    _invoke("trace", **kw)


@main.command("folds")
@_common
@click.option("--t-range", help="Parameter window lo,hi.")
@click.option("--box", help="Multistart box lo,hi applied to every coordinate (default -2,2).")
@click.option("--grid-density", type=int, default=None, help="Multistart nodes per coordinate.")
def folds_cmd(**kw):
    """Find, refine and certify all folds in a window."""
    _invoke("folds", **kw)


@main.command("generic")
@_common
@click.option("--samples", type=int, default=None, help="Number of random perturbations.")
@click.option("--radius", type=float, default=None, help="Perturbation radius.")
@click.option("--t-range", help="Parameter window lo,hi.")
@click.option("--box", help="Multistart box lo,hi.")
@click.option("--grid-density", type=int, default=None, help="Multistart nodes per coordinate.")
def generic_cmd(**kw):
    """Monte-Carlo genericity experiment over F + y + K x."""
    _invoke("generic", **kw)


@main.command("limit")
@_common
@click.option("--x-init", help="Initial state x1,...,xn.")
@click.option("--t-span", help="Time span t0,t1.")
@click.option("--eps-list", help="Comma-separated eps values for the convergence study.")
def limit_cmd(**kw):
    """Build the eps -> 0 limit curve and optionally compare eps-trajectories."""
    _invoke("limit", **kw)


def _pde_m(ctx, param, value):
    if value is None:
        return None
    text = value.split("=", 1)[1] if "=" in value else value
    try:
        return int(text)
    except ValueError:
        raise click.BadParameter("expected m=<int>") from None


@main.command("pde")
@_common
@click.option("--pde", callback=_pde_m, help="Grid size as m=<int>.")
@click.option("--load", help="Load amplitude l(t) as an expression in t.")
@click.option("--y", help="Additive perturbation: expression in s, a number, or a file.")
@click.option("--z", help="Multiplicative perturbation: expression in s, a number, or a file.")
@click.option("--diffusion", type=float, default=None, help="Diffusion coefficient.")
@click.option("--t-range", help="Load window lo,hi (default -1,1).")
def pde_cmd(**kw):
    """Allen-Cahn fold sweep with energy certificates."""
    kw.pop("problem", None)
    _invoke("pde", **kw)


@main.command("section")
@_common
@click.option("--t", type=float, default=None, help="Parameter value.")
@click.option("--box", help="Multistart box lo,hi.")
@click.option("--grid-density", type=int, default=None, help="Multistart nodes per coordinate.")
def section_cmd(**kw):
    """Enumerate the zeros of F(., t)."""
    _invoke("section", **kw)


if __name__ == "__main__":  # pragma: no cover
    main()
