"""Command-line front end.

Reads a JSON config describing the model (and optional run defaults),
dispatches to the theory and experiment layers, and writes JSON or CSV
reports. Reports go to ``--output`` files atomically (temp file + rename)
with one stdout summary line per grid point; without ``--output`` the report
itself is the stdout payload. Exit codes: 0 success, 1 domain failure,
2 usage or config error, 3 exhausted budget or excess censoring.
"""

from __future__ import annotations

import functools
import json
import os
import tempfile

import click
import numpy as np

from .distributions import FiniteDiscrete, Gaussian, Rademacher
from .errors import (
    AssumptionError,
    ConfigError,
    DegenerateEstimateError,
    ExcessCensoringError,
    InvalidChainError,
    InvalidInputError,
    NonConvergenceError,
)
from .experiments import (
    estimate_persistence_constant,
    estimate_speed,
    fit_block_exponents,
    fit_exit_statistics,
    sweep_window,
)
from .ratefn import RateFunction
from .simulator import run as run_walk
from .theory import ModelSpec, predict_limiting_speed, threshold_bounds
from .theory import validate as validate_model

_MODEL_KEYS = {"dists", "thresholds", "window", "initial_regime"}
_RUN_KEYS = {
    "version", "steps", "replicas", "seed", "n_grid", "samples", "cap",
    "horizon", "r", "dist", "r_lo", "r_hi", "output",
}
_DIST_FIELDS = {
    "gaussian": {"mu", "sigma2"},
    "rademacher": {"p"},
    "finite_discrete": {"atoms", "weights"},
}
_INT_RUN_KEYS = ("steps", "replicas", "seed", "samples", "cap", "horizon", "dist")
_FLOAT_RUN_KEYS = ("r", "r_lo", "r_hi")


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys {unknown} in {where}")


def _build_dist(obj, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    kind = obj.get("kind")
    if kind not in _DIST_FIELDS:
        raise ConfigError(f"{where}: kind must be one of {sorted(_DIST_FIELDS)}, got {kind!r}")
    _reject_unknown(obj, _DIST_FIELDS[kind] | {"kind"}, where)
    missing = sorted(_DIST_FIELDS[kind] - set(obj))
    if missing:
        raise ConfigError(f"{where} is missing {missing}")
    try:
        if kind == "gaussian":
            return Gaussian(mu=float(obj["mu"]), sigma2=float(obj["sigma2"]))
        if kind == "rademacher":
            return Rademacher(p=float(obj["p"]))
        return FiniteDiscrete(
            atoms=tuple(float(a) for a in obj["atoms"]),
            weights=tuple(float(w) for w in obj["weights"]),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from err


def _check_run_section(run_cfg: dict) -> None:
    _reject_unknown(run_cfg, _RUN_KEYS, "run")
    version = run_cfg.get("version")
    if version is not None and version not in ("delayed", "instantaneous"):
        raise ConfigError(f"run.version must be 'delayed' or 'instantaneous', got {version!r}")
    for key in _INT_RUN_KEYS:
        value = run_cfg.get(key)
        if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"run.{key} must be an integer, got {value!r}")
    for key in _FLOAT_RUN_KEYS:
        value = run_cfg.get(key)
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigError(f"run.{key} must be a number, got {value!r}")
    grid = run_cfg.get("n_grid")
    if grid is not None:
        if not isinstance(grid, list) or not all(
            isinstance(n, int) and not isinstance(n, bool) for n in grid
        ):
            raise ConfigError(f"run.n_grid must be a list of integers, got {grid!r}")
    output = run_cfg.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError(f"run.output must be a string, got {output!r}")


def load_config(path: str) -> tuple[ModelSpec, dict]:
    """Parse and structurally check a config file; unknown keys are errors."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    _reject_unknown(raw, {"model", "run"}, "config")
    model = raw.get("model")
    if not isinstance(model, dict):
        raise ConfigError("config needs a model object")
    _reject_unknown(model, _MODEL_KEYS, "model")
    for key in ("dists", "thresholds", "window"):
        if key not in model:
            raise ConfigError(f"model is missing {key!r}")
    if not isinstance(model["dists"], list):
        raise ConfigError("model.dists must be a list")
    dists = tuple(_build_dist(obj, f"model.dists[{i}]") for i, obj in enumerate(model["dists"]))
    try:
        spec = ModelSpec(
            dists=dists,
            thresholds=tuple(float(r) for r in model["thresholds"]),
            window=int(model["window"]),
            initial_regime=int(model.get("initial_regime", 0)),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"model: {err}") from err
    run_cfg = raw.get("run", {})
    if not isinstance(run_cfg, dict):
        raise ConfigError("run section must be an object")
    _check_run_section(run_cfg)
    return spec, run_cfg


def _fail(code: int, message: str) -> None:
    click.echo(message, err=True)
    raise SystemExit(code)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            fn(*args, **kwargs)
        except ConfigError as err:
            _fail(2, f"config error: {err}")
        except OSError as err:
            _fail(2, f"i/o error: {err}")
        except (NonConvergenceError, ExcessCensoringError) as err:
            _fail(3, f"budget error: {err}")
        except (AssumptionError, InvalidChainError, DegenerateEstimateError, InvalidInputError) as err:
            _fail(1, f"domain error: {err}")

    return wrapper


def _require_valid(spec: ModelSpec) -> None:
    report = validate_model(spec)
    if not report.passed:
        failed = [
            name
            for name, ok in (
                ("mean_ordering", report.mean_ordering),
                ("tail_support", report.tail_support),
                ("light_tails", report.light_tails),
            )
            if not ok
        ]
        for line in report.details:
            click.echo(f"warning: {line}", err=True)
        _fail(1, "model validation failed: " + ", ".join(failed))


def _resolve(name: str, flag, run_cfg: dict, default=None, required: bool = False):
    value = flag if flag is not None else run_cfg.get(name, default)
    if value is None and required:
        raise ConfigError(f"{name} is required (flag or run.{name})")
    return value


def _parse_int_list(text: str, what: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise click.BadParameter(f"{what} must be comma-separated integers, got {text!r}")


def _grid_from(flag, run_cfg) -> tuple[int, ...]:
    if flag is not None:
        return _parse_int_list(flag, "--n-grid")
    grid = run_cfg.get("n_grid")
    if grid is None:
        raise ConfigError("n_grid is required (flag --n-grid or run.n_grid)")
    return tuple(grid)


def _pick_dist(spec: ModelSpec, index: int):
    if not 0 <= index <= spec.l:
        raise click.BadParameter(f"--dist must be in [0, {spec.l}], got {index}")
    return spec.dists[index]


def _parse_r_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise click.BadParameter(f"--r-grid must look like lo:hi:step, got {text!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise click.BadParameter(f"--r-grid must be numeric lo:hi:step, got {text!r}")
    if not step > 0 or hi < lo:
        raise click.BadParameter(f"--r-grid needs hi >= lo and step > 0, got {text!r}")
    count = int(round((hi - lo) / step)) + 1
    if count > 1_000_000:
        raise click.BadParameter(f"--r-grid would produce {count} rows")
    return [lo + k * step for k in range(count)]


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".histwalk-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, output: str | None, summaries=()) -> None:
    if output:
        _write_atomic(output, text)
        for line in summaries:
            click.echo(line)
    else:
        click.echo(text, nl=False)


@click.group()
def main():
    """Workbench for random walks whose step law switches when the recent
    window average crosses fixed thresholds."""


@main.command(name="validate")
@click.argument("config", type=click.Path())
@_guarded
def cmd_validate(config):
    """Check mean ordering, threshold reachability and tail lightness."""
    spec, _ = load_config(config)
    report = validate_model(spec)
    click.echo(_dump_json(report.to_dict()), nl=False)
    if not report.passed:
        raise SystemExit(1)


@main.command(name="predict")
@click.argument("config", type=click.Path())
@click.option("--output", type=click.Path(), default=None, help="write JSON here instead of stdout")
@_guarded
def cmd_predict(config, output):
    """Per-regime exponents and the predicted limiting speed."""
    spec, _ = load_config(config)
    _require_valid(spec)
    report = predict_limiting_speed(spec)
    for warning in report.warnings:
        click.echo(f"warning: {warning}", err=True)
    _emit(_dump_json(report.to_dict()), output, [f"predicted_speed={report.predicted_speed}"])


@main.command(name="simulate")
@click.argument("config", type=click.Path())
@click.option("--version", type=click.Choice(["delayed", "instantaneous"]), default=None)
@click.option("--steps", type=int, default=None)
@click.option("--replicas", type=int, default=None)
@click.option("--seed", type=int, default=None, help="master seed; mandatory, never defaulted")
@click.option("--output", type=click.Path(), default=None)
@click.option("--trace", type=click.Path(), default=None, help="also write a one-replica checkpoint CSV")
@_guarded
def cmd_simulate(config, version, steps, replicas, seed, output, trace):
    """Estimate the speed with batch-means errors and sojourn statistics."""
    spec, run_cfg = load_config(config)
    version = _resolve("version", version, run_cfg, required=True)
    steps = int(_resolve("steps", steps, run_cfg, default=1_000_000))
    replicas = int(_resolve("replicas", replicas, run_cfg, default=4))
    seed = int(_resolve("seed", seed, run_cfg, required=True))
    _require_valid(spec)
    report = estimate_speed(spec, version, steps, replicas, seed)
    for warning in report.warnings:
        click.echo(f"warning: {warning}", err=True)
    if trace:
        _write_trace(spec, version, steps, seed, trace)
    _emit(
        _dump_json(report.to_dict()),
        output,
        [
            f"version={version} N={spec.window} est_speed={report.est_speed!r} "
            f"stderr={report.stderr!r}"
        ],
    )


def _write_trace(spec, version, steps, seed, path):
    res = run_walk(spec, version, steps, np.random.default_rng(np.random.SeedSequence(seed)))
    lines = ["n,X_n,regime,window_avg"]
    for t, x, reg, wavg in zip(
        res.trace.times, res.trace.positions, res.trace.regimes, res.trace.window_avgs
    ):
        lines.append(f"{int(t)},{float(x)!r},{int(reg)},{float(wavg)!r}")
    _write_atomic(path, "\n".join(lines) + "\n")


def _sweep_csv(sw) -> str:
    lines = ["N,est_speed,stderr,predicted_speed,gap"]
    for row in sw.rows():
        lines.append(
            f"{row['N']},{row['est_speed']!r},{row['stderr']!r},"
            f"{row['predicted_speed']!r},{row['gap']!r}"
        )
    return "\n".join(lines) + "\n"


@main.command(name="sweep")
@click.argument("config", type=click.Path())
@click.option("--version", type=click.Choice(["delayed", "instantaneous"]), default=None)
@click.option("--n-grid", "n_grid", type=str, default=None, help="comma-separated window sizes")
@click.option("--replicas", type=int, default=None)
@click.option("--seed", type=int, default=None, help="master seed; mandatory, never defaulted")
@click.option("--steps", type=int, default=None, help="fixed per-window budget; default grows with N")
@click.option("--output", type=click.Path(), default=None, help="CSV destination")
@click.option("--json", "json_path", type=click.Path(), default=None, help="full JSON report destination")
@_guarded
def cmd_sweep(config, version, n_grid, replicas, seed, steps, output, json_path):
    """Speed estimates across window sizes versus the predicted limit."""
    spec, run_cfg = load_config(config)
    version = _resolve("version", version, run_cfg, required=True)
    grid = _grid_from(n_grid, run_cfg)
    replicas = int(_resolve("replicas", replicas, run_cfg, default=4))
    seed = int(_resolve("seed", seed, run_cfg, required=True))
    steps = _resolve("steps", steps, run_cfg)
    _require_valid(spec)
    rule = None if steps is None else (lambda n: int(steps))
    sw = sweep_window(spec, version, grid, replicas, seed, steps_rule=rule)
    if not sw.monotone_within_noise:
        click.echo("warning: gaps to the predicted speed are not monotone within noise", err=True)
    if json_path:
        _write_atomic(json_path, _dump_json(sw.to_dict()))
    summaries = [
        f"N={row['N']} est_speed={row['est_speed']!r} stderr={row['stderr']!r} gap={row['gap']!r}"
        for row in sw.rows()
    ]
    summaries.append(
        f"predicted_speed={sw.predicted_speed!r} final_gap={sw.final_gap!r} "
        f"monotone_within_noise={sw.monotone_within_noise}"
    )
    _emit(_sweep_csv(sw), output, summaries)


@main.command(name="ratefn")
@click.argument("config", type=click.Path())
@click.option("--dist", "dist_index", type=int, required=True, help="regime index into model.dists")
@click.option("--r-grid", "r_grid", type=str, required=True, help="lo:hi:step, inclusive")
@click.option("--output", type=click.Path(), default=None, help="CSV destination")
@_guarded
def cmd_ratefn(config, dist_index, r_grid, output):
    """Tabulate the rate function and its optimal tilt on an r grid."""
    spec, _ = load_config(config)
    _require_valid(spec)
    d = _pick_dist(spec, dist_index)
    rate = RateFunction(d)
    lines = ["r,I_of_r,lambda_star"]
    for r in _parse_r_grid(r_grid):
        value, tilt = rate.solve(r)
        lines.append(f"{r:.10g},{value!r},{tilt!r}")
    _emit("\n".join(lines) + "\n", output, [f"rows={len(lines) - 1}"])


@main.command(name="blocks")
@click.argument("config", type=click.Path())
@click.option("--dist", "dist_index", type=int, required=True, help="regime index into model.dists")
@click.option("--n-grid", "n_grid", type=str, default=None, help="comma-separated window sizes")
@click.option("--samples", type=int, default=None)
@click.option("--seed", type=int, default=None, help="master seed; mandatory, never defaulted")
@click.option("--r-lo", "r_lo", type=float, default=None, help="defaults to the regime's lower threshold")
@click.option("--r-hi", "r_hi", type=float, default=None, help="defaults to the regime's upper threshold")
@click.option("--output", type=click.Path(), default=None)
@_guarded
def cmd_blocks(config, dist_index, n_grid, samples, seed, r_lo, r_hi, output):
    """Fit decay exponents of fresh-block threshold crossings."""
    spec, run_cfg = load_config(config)
    _require_valid(spec)
    d = _pick_dist(spec, dist_index)
    grid = _grid_from(n_grid, run_cfg)
    samples = int(_resolve("samples", samples, run_cfg, default=100_000))
    seed = int(_resolve("seed", seed, run_cfg, required=True))
    lo_default, hi_default = threshold_bounds(spec, dist_index)
    r_lo = float(_resolve("r_lo", r_lo, run_cfg, default=lo_default))
    r_hi = float(_resolve("r_hi", r_hi, run_cfg, default=hi_default))
    if not (np.isfinite(r_lo) and np.isfinite(r_hi)):
        _fail(2, f"regime {dist_index} has an unbounded side; pass --r-lo/--r-hi explicitly")
    report = fit_block_exponents(d, r_lo, r_hi, grid, samples, seed)
    for warning in report.warnings:
        click.echo(f"warning: {warning}", err=True)
    up_by_n = dict(zip(report.up.ns, report.up.values))
    dn_by_n = dict(zip(report.down.ns, report.down.values))
    bo_by_n = {} if report.both is None else dict(zip(report.both.ns, report.both.values))
    summaries = [
        f"N={n} p_up={up_by_n.get(n, 0.0)!r} p_down={dn_by_n.get(n, 0.0)!r} "
        f"p_both={bo_by_n.get(n, 0.0)!r}"
        for n in grid
    ]
    summaries.append(
        f"up_slope={report.up.slope!r} down_slope={report.down.slope!r} "
        f"both_slope={None if report.both is None else report.both.slope!r}"
    )
    _emit(_dump_json(report.to_dict()), output, summaries)


@main.command(name="exits")
@click.argument("config", type=click.Path())
@click.option("--dist", "dist_index", type=int, required=True, help="regime index into model.dists")
@click.option("--n-grid", "n_grid", type=str, default=None, help="comma-separated window sizes")
@click.option("--samples", type=int, default=None)
@click.option("--cap", type=int, default=None, help="per-stay step budget before censoring")
@click.option("--seed", type=int, default=None, help="master seed; mandatory, never defaulted")
@click.option("--r-lo", "r_lo", type=float, default=None, help="defaults to the regime's lower threshold")
@click.option("--r-hi", "r_hi", type=float, default=None, help="defaults to the regime's upper threshold")
@click.option("--output", type=click.Path(), default=None)
@_guarded
def cmd_exits(config, dist_index, n_grid, samples, cap, seed, r_lo, r_hi, output):
    """Fit exit-direction and mean-stay exponents for a fresh stay."""
    spec, run_cfg = load_config(config)
    _require_valid(spec)
    d = _pick_dist(spec, dist_index)
    grid = _grid_from(n_grid, run_cfg)
    samples = int(_resolve("samples", samples, run_cfg, default=10_000))
    cap = int(_resolve("cap", cap, run_cfg, default=10_000_000))
    seed = int(_resolve("seed", seed, run_cfg, required=True))
    lo_default, hi_default = threshold_bounds(spec, dist_index)
    r_lo = float(_resolve("r_lo", r_lo, run_cfg, default=lo_default))
    r_hi = float(_resolve("r_hi", r_hi, run_cfg, default=hi_default))
    if not (np.isfinite(r_lo) and np.isfinite(r_hi)):
        _fail(2, f"regime {dist_index} has an unbounded side; pass --r-lo/--r-hi explicitly")
    report = fit_exit_statistics(d, r_lo, r_hi, grid, samples, cap, seed)
    down_by_n = dict(zip(report.exit_down.ns, report.exit_down.values))
    stay_by_n = dict(zip(report.mean_stay.ns, report.mean_stay.values))
    summaries = [
        f"N={n} p_down={down_by_n.get(n, 0.0)!r} mean_stay={stay_by_n.get(n, 0.0)!r} "
        f"censored={frac!r}"
        for n, frac in zip(grid, report.censored_fractions)
    ]
    summaries.append(
        f"down_slope={report.exit_down.slope!r} stay_slope={report.mean_stay.slope!r}"
    )
    _emit(_dump_json(report.to_dict()), output, summaries)


@main.command(name="persistence")
@click.argument("config", type=click.Path())
@click.option("--dist", "dist_index", type=int, required=True, help="regime index into model.dists")
@click.option("--r", "r_level", type=float, default=None, help="level the running mean must hold")
@click.option("--horizon", type=int, default=None)
@click.option("--samples", type=int, default=None)
@click.option("--seed", type=int, default=None, help="master seed; mandatory, never defaulted")
@click.option("--output", type=click.Path(), default=None)
@_guarded
def cmd_persistence(config, dist_index, r_level, horizon, samples, seed, output):
    """Estimate the probability the running mean never dips below a level."""
    spec, run_cfg = load_config(config)
    _require_valid(spec)
    d = _pick_dist(spec, dist_index)
    r_level = _resolve("r", r_level, run_cfg, required=True)
    horizon = int(_resolve("horizon", horizon, run_cfg, required=True))
    samples = int(_resolve("samples", samples, run_cfg, default=100_000))
    seed = int(_resolve("seed", seed, run_cfg, required=True))
    estimate = estimate_persistence_constant(d, float(r_level), horizon, samples, seed)
    doc = {
        "dist": dist_index,
        "r": float(r_level),
        "horizon": horizon,
        "samples": samples,
        "master_seed": seed,
        "estimate": estimate,
    }
    _emit(_dump_json(doc), output, [f"estimate={estimate!r}"])


if __name__ == "__main__":
    main()
