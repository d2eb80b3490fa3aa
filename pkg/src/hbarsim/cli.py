"""Command-line front end.

Commands::

    hbarsim simulate free|photon|oscillator [params]
    hbarsim interference [params]
    hbarsim bound interferometer|cavity|sigma [params]
    hbarsim figure1
    hbarsim sweep TARGET --grid KEY=V1,V2,... [--set KEY=VALUE]
    hbarsim run CONFIG.json

Every leaf command also takes ``--config FILE`` (a JSON run configuration),
``--seed``, ``--output``, ``--format {csv,json}`` and ``--natural-units``.
Flags override config-file values, which override defaults.  Exit status is
0 on success, 2 on invalid input and 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Optional

import jsonschema
import numpy as np

from . import __version__
from . import free_particle as fp
from . import oscillator as osc
from . import photon as ph
from .ensemble import EnsembleConfig, EnsembleEstimate
from .errors import HbarSimError, NumericalError, ValidationError
from .noise import AGE_OF_UNIVERSE, PLANCK_TIME, SI, NoiseParams, max_sigma, negative_fluctuation_count

DEFAULT_SEED = 20151017
SEED_ENV = "HBARSIM_SEED"

FIGURE1_COLUMNS = ("omega_t", "mean_x", "mean_x2", "var_x")


@dataclass(frozen=True)
class Param:
    kind: type
    default: Any
    help: str = ""
    choices: Optional[tuple] = None


def _p(kind, default, help="", choices=None):
    return Param(kind, default, help, choices)


_MC = {
    "n_paths": _p(int, 100_000, "number of noise paths"),
    "n_steps": _p(int, 16, "grid cells per path"),
}

COMMANDS: dict[str, dict[str, Param]] = {
    "simulate free": {
        "tau": _p(float, 0.01, "noise strength tau [s]"),
        "t": _p(float, 10.0, "elapsed time [s]"),
        "p_bar": _p(float, 1.0, "peak momentum"),
        "delta": _p(float, 0.1, "momentum width"),
        "mass": _p(float, 1.0, "particle mass"),
        **_MC,
    },
    "simulate photon": {
        "tau": _p(float, 0.01, "noise strength tau [s]"),
        "t": _p(float, 100.0, "elapsed time [s]"),
        "exact_sampling": _p(bool, False, "keep sqrt(1+eps) unexpanded (diagnostic)"),
        **_MC,
    },
    "simulate oscillator": {
        "tau": _p(float, 0.01, "noise strength tau [s]"),
        "t": _p(float, 100.0, "elapsed time [s]"),
        "lambda": _p(float, 1.0, "coherent amplitude"),
        "omega": _p(float, 1.0, "angular frequency [1/s]"),
        "mass": _p(float, 1.0, "oscillator mass"),
        "mode": _p(str, "exact", "second-moment convention", ("exact", "paper")),
        **_MC,
    },
    "interference": {
        "tau": _p(float, 0.01, "noise strength tau [s]"),
        "omega": _p(float, 1.0, "angular frequency [1/s]"),
        "L": _p(float, 400.0, "slit-to-screen distance [m]"),
        "n_paths": _p(int, 1_000_000, "number of samples"),
    },
    "bound interferometer": {
        "L": _p(float, 1e3, "arm length [m]"),
        "nu": _p(float, 1e14, "light frequency [Hz]"),
        "delta_nu": _p(float, 1.0, "bandwidth [Hz]"),
        "power": _p(float, 10.0, "light power [W]"),
        "convention": _p(str, "omega_is_2pi_nu", "omega from nu", tuple(c.value for c in ph.OmegaConvention)),
    },
    "bound cavity": {
        "Q": _p(float, 1e15, "cavity quality factor"),
        "omega": _p(float, 3e15, "mode angular frequency [1/s]"),
        "lambda": _p(float, 1.0, "coherent amplitude"),
        "dhbar": _p(float, 0.01, "relative measurement error on hbar"),
    },
    "bound sigma": {
        "delta_t": _p(float, PLANCK_TIME, "correlation time [s]"),
        "T": _p(float, AGE_OF_UNIVERSE, "observation period [s]"),
    },
    "figure1": {
        "omega_tau": _p(float, 0.05, "dimensionless omega*tau"),
        "lambda": _p(float, 1.0, "coherent amplitude"),
        "omega_t_max": _p(float, 150.0, "end of the omega*t axis"),
        "n_points": _p(int, 1501, "samples on the omega*t axis"),
    },
}

SWEEP_TARGETS = {
    "free": "simulate free",
    "photon": "simulate photon",
    "oscillator": "simulate oscillator",
    "interference": "interference",
    "interferometer": "bound interferometer",
    "cavity": "bound cavity",
    "sigma": "bound sigma",
}

SI_ONLY = {"bound interferometer", "bound cavity", "bound sigma"}

RESULT_SCHEMA = {
    "type": "object",
    "required": ["meta", "columns", "rows"],
    "additionalProperties": False,
    "properties": {
        "meta": {
            "type": "object",
            "required": ["version", "command", "seed", "units", "parameters", "timestamp"],
            "properties": {
                "version": {"type": "string"},
                "command": {"type": "string"},
                "seed": {"type": "integer", "minimum": 0},
                "units": {"enum": ["SI", "natural"]},
                "parameters": {"type": "object"},
                "timestamp": {"type": "string"},
            },
        },
        "columns": {"type": "array", "items": {"type": "string"}},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": {"type": ["number", "string", "boolean", "null"]},
            },
        },
    },
}

CONFIG_KEYS = {"command", "parameters", "seed", "output_path", "output_format", "natural_units"}


@dataclass
class RunConfig:
    command: str
    parameters: dict = field(default_factory=dict)
    seed: Optional[int] = None
    output_path: Optional[str] = None
    output_format: str = "json"
    natural_units: bool = False


# -- parameter handling -------------------------------------------------------


def _coerce(command, name, value):
    spec = COMMANDS[command][name]
    try:
        if spec.kind is bool:
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                value = value.lower() in ("true", "1", "yes")
            else:
                value = bool(value)
        elif spec.kind is int:
            as_float = float(value)
            if not as_float.is_integer():
                raise ValueError(value)
            value = int(as_float)
        elif spec.kind is float:
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(value)
        else:
            value = str(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{command}: parameter {name!r} expects {spec.kind.__name__}, got {value!r}")
    if spec.choices and value not in spec.choices:
        raise ValidationError(f"{command}: parameter {name!r} must be one of {spec.choices}")
    return value


def resolve_parameters(command, *layers):
    """Merge parameter layers (lowest precedence first) over the defaults."""
    if command not in COMMANDS:
        raise ValidationError(f"unknown command {command!r}")
    schema = COMMANDS[command]
    merged = {k: p.default for k, p in schema.items()}
    for layer in layers:
        for k, v in layer.items():
            if k not in schema:
                raise ValidationError(f"{command}: unknown parameter {k!r}")
            if v is not None:
                merged[k] = _coerce(command, k, v)
    return merged


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}")
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    params = raw.get("parameters", {})
    if not isinstance(params, dict):
        raise ValidationError("config 'parameters' must be an object")
    fmt = raw.get("output_format", "json")
    if fmt not in ("csv", "json"):
        raise ValidationError("output_format must be 'csv' or 'json'")
    return RunConfig(
        command=raw.get("command", ""),
        parameters=params,
        seed=raw.get("seed"),
        output_path=raw.get("output_path"),
        output_format=fmt,
        natural_units=bool(raw.get("natural_units", False)),
    )


def default_seed():
    env = os.environ.get(SEED_ENV)
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise ValidationError(f"{SEED_ENV} must be an integer, got {env!r}")


# -- command implementations --------------------------------------------------


@dataclass(frozen=True)
class Context:
    seed: int
    natural_units: bool

    @property
    def hbar(self):
        return 1.0 if self.natural_units else SI.hbar

    @property
    def c(self):
        return 1.0 if self.natural_units else SI.c


def _regime(tau):
    return "standard QM limit" if tau == 0 else "fluctuating hbar"


def _row(quantity, closed, est=None, regime=None):
    row = {"quantity": quantity, "closed_form": closed}
    if est is None:
        row.update(mc_mean=None, mc_std_error=None, z_score=None, n_paths=None)
    else:
        z = est.z_score(closed)
        row.update(
            mc_mean=est.mean,
            mc_std_error=est.std_error,
            z_score=z if math.isfinite(z) else None,
            n_paths=est.n_paths,
        )
    row["regime"] = regime
    return row


def run_simulate_free(p, ctx):
    packet = fp.GaussianPacket(p["p_bar"], p["delta"], p["mass"], ctx.hbar)
    noise = NoiseParams(p["tau"])
    config = EnsembleConfig(p["n_paths"], ctx.seed, p["n_steps"], p["t"])
    dec = fp.mc_spread_decomposition(packet, noise, config)
    disp = EnsembleEstimate(dec.total_mean, dec.mean_std_error, dec.n_paths)
    spread = EnsembleEstimate(dec.total_variance, dec.total_variance_std_error, dec.n_paths)
    regime = _regime(noise.tau)
    return [
        _row("mean_displacement", fp.mean_displacement(packet, p["t"]), disp, regime),
        _row("spread_growth", fp.spread_growth(packet, noise, p["t"]), spread, regime),
        _row("diffusion_coefficient", fp.diffusion_coefficient(packet, noise), None, regime),
        _row("initial_position_variance", packet.initial_position_variance, None, regime),
    ]


def run_simulate_photon(p, ctx):
    noise = NoiseParams(p["tau"])
    config = EnsembleConfig(p["n_paths"], ctx.seed, p["n_steps"], p["t"])
    sampler = ph.mc_photon_spread_exact if p["exact_sampling"] else ph.mc_photon_spread
    dec = sampler(noise, ctx.c, config)
    travel = EnsembleEstimate(dec.total_mean, dec.mean_std_error, dec.n_paths)
    spread = EnsembleEstimate(dec.total_variance, dec.total_variance_std_error, dec.n_paths)
    regime = _regime(noise.tau)
    return [
        _row("mean_travel", ph.mean_travel(p["t"], ctx.c), travel, regime),
        _row("spread_growth", ph.photon_spread(noise, p["t"], ctx.c), spread, regime),
    ]


def run_simulate_oscillator(p, ctx):
    spec = osc.CoherentStateSpec(p["lambda"], p["omega"], p["mass"], ctx.hbar, p["mode"])
    noise = NoiseParams(p["tau"])
    t = p["t"]
    config = EnsembleConfig(p["n_paths"], ctx.seed, p["n_steps"], t)
    mc = osc.mc_oscillator(spec, noise, config)
    closed = osc.coherent_moments(spec, noise, t)
    regime = _regime(noise.tau)
    rows = [_row(name, getattr(closed, name), getattr(mc, name), regime) for name in closed._fields]
    rows.append(_row("ladder_modulus", abs(osc.mean_ladder(spec, noise, t)), mc.ladder_modulus, regime))
    rows.append(_row("number", spec.lam**2, mc.number, regime))
    rows.append(_row("uncertainty_product", osc.uncertainty_product(spec, noise, t), None, regime))
    return rows


def run_interference(p, ctx):
    noise = NoiseParams(p["tau"])
    config = ph.interference_config(p["L"], ctx.c, p["n_paths"], ctx.seed)
    est = ph.mc_interference(p["omega"], noise, p["L"], ctx.c, config)
    regime = _regime(noise.tau)
    closed = ph.interference_intensity(p["omega"], noise, p["L"], ctx.c)
    return [
        _row("central_fringe_intensity", closed, est, regime),
        _row("visibility", ph.visibility(p["omega"], noise, p["L"], ctx.c), None, regime),
        _row("decay_exponent", ph.decay_exponent(p["omega"], noise, p["L"], ctx.c), None, regime),
        _row("travel_time_variance", ph.travel_time_variance(noise, p["L"], ctx.c), None, regime),
        _row("effective_speed_variance", ph.effective_speed_variance(noise, p["L"], ctx.c), None, regime),
    ]


def run_bound_interferometer(p, ctx):
    spec = ph.InterferometerSpec(p["L"], p["nu"], p["delta_nu"], p["power"], p["convention"])
    tau_max, scale = ph.shot_noise_bound(spec, SI)
    return [{"tau_max_s": tau_max, "lambda_scale_GeV": scale, "omega": spec.omega}]


def run_bound_cavity(p, ctx):
    cavity = osc.CavitySpec(p["Q"], p["omega"])
    tau_max, scale = osc.cavity_bound(cavity, p["lambda"], p["dhbar"], SI)
    noise = NoiseParams(tau_max)
    return [
        {
            "tau_max_s": tau_max,
            "lambda_scale_GeV": scale,
            "q_omega_tau": cavity.quality_factor * cavity.omega * tau_max,
            "peak_time_s": osc.peak_time(cavity, noise),
            "decay_time_s": cavity.decay_time,
        }
    ]


def run_bound_sigma(p, ctx):
    sigma = max_sigma(p["delta_t"], p["T"])
    count = None
    if math.isfinite(sigma):
        count = negative_fluctuation_count(NoiseParams.from_sigma(sigma, p["delta_t"]), p["T"])
    return [{"sigma_max": sigma if math.isfinite(sigma) else None, "count_at_sigma_max": count}]


def figure1_rows(omega_tau=0.05, lam=1.0, omega_t_max=150.0, n_points=1501):
    """``figure1`` curves in units of powers of ``sqrt(hbar / (m omega))``.

    Natural units with ``omega = 1`` so that ``t`` is the ``omega t`` axis.
    """
    if n_points < 2 or not omega_t_max > 0:
        raise ValidationError("need n_points >= 2 and a positive omega_t_max")
    spec = osc.CoherentStateSpec(lam, 1.0, 1.0, 1.0, osc.MomentMode.PAPER)
    noise = NoiseParams(omega_tau)
    axis = np.arange(n_points) * omega_t_max / (n_points - 1)
    rows = []
    for wt in axis.tolist():
        m = osc.coherent_moments(spec, noise, wt)
        var_x, _ = osc.position_momentum_variances(spec, noise, wt)
        rows.append({"omega_t": wt, "mean_x": m.mean_x, "mean_x2": m.mean_x2, "var_x": var_x})
    return rows


def run_figure1(p, ctx):
    return figure1_rows(p["omega_tau"], p["lambda"], p["omega_t_max"], p["n_points"])


RUNNERS: dict[str, Callable] = {
    "simulate free": run_simulate_free,
    "simulate photon": run_simulate_photon,
    "simulate oscillator": run_simulate_oscillator,
    "interference": run_interference,
    "bound interferometer": run_bound_interferometer,
    "bound cavity": run_bound_cavity,
    "bound sigma": run_bound_sigma,
    "figure1": run_figure1,
}


def execute(command, params, ctx):
    if ctx.natural_units and command in SI_ONLY:
        raise ValidationError(f"{command} works in SI units only")
    return RUNNERS[command](params, ctx)


def parse_grid(items):
    grid = {}
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not values:
            raise ValidationError(f"grid entry must look like key=v1,v2,...: {item!r}")
        grid[key.strip()] = [v.strip() for v in values.split(",")]
    return grid


def run_sweep(target, grid, fixed, ctx):
    """One row per grid point (Cartesian product), grid values prefixed to the row."""
    command = SWEEP_TARGETS[target]
    keys = list(grid)
    rows = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        point = dict(zip(keys, combo))
        params = resolve_parameters(command, fixed, point)
        for row in execute(command, params, ctx):
            rows.append({**{f"grid_{k}": params[k] for k in keys}, **row})
    return rows


# -- output --------------------------------------------------------------------


def _columns(rows):
    cols = []
    for row in rows:
        for k in row:
            if k not in cols:
                cols.append(k)
    return cols


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def build_document(command, params, ctx, rows, timestamp=None):
    meta = {
        "version": __version__,
        "command": command,
        "seed": ctx.seed,
        "units": "natural" if ctx.natural_units or command == "figure1" else "SI",
        "parameters": params,
        "timestamp": timestamp or datetime.now(timezone.utc).isoformat(),
    }
    if "mode" in params:
        meta["mode"] = params["mode"]
    return {
        "meta": meta,
        "columns": _columns(rows),
        "rows": [{k: _jsonable(v) for k, v in row.items()} for row in rows],
    }


def validate_document(doc):
    try:
        jsonschema.validate(doc, RESULT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"result document invalid: {exc.message}")


def render(doc, fmt):
    if fmt == "json":
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    meta = doc["meta"]
    for key in ("version", "command", "seed", "units", "mode"):
        if key in meta:
            buf.write(f"# {key}: {meta[key]}\n")
    buf.write(f"# parameters: {json.dumps(meta['parameters'], sort_keys=True)}\n")
    buf.write(f"# timestamp: {meta['timestamp']}\n")
    writer = csv.DictWriter(buf, fieldnames=doc["columns"], lineterminator="\n")
    writer.writeheader()
    for row in doc["rows"]:
        writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def read_csv_result(text):
    """Parse a CSV result back into ``(meta_lines, rows)``; numbers as floats."""
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = value
        else:
            body.append(line)
    rows = []
    for row in csv.DictReader(body):
        parsed = {}
        for k, v in row.items():
            try:
                parsed[k] = float(v) if v != "" else None
            except ValueError:
                parsed[k] = v
        rows.append(parsed)
    return meta, rows


def write_output(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


# -- argument parsing ----------------------------------------------------------


def _add_common(parser):
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    parser.add_argument("--output", "-o", help="output file (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), help="output format")
    parser.add_argument("--natural-units", action="store_true", default=None, help="hbar = c = 1")


def _add_params(parser, command):
    for name, spec in COMMANDS[command].items():
        flags = ["--" + name]
        if "_" in name:
            flags.insert(0, "--" + name.replace("_", "-"))
        kwargs = dict(dest=f"param_{name}", default=None, help=f"{spec.help} (default: {spec.default})")
        if spec.kind is bool:
            kwargs.update(nargs="?", const="true")
        elif spec.kind is str:
            kwargs["choices"] = spec.choices
        parser.add_argument(*flags, **kwargs)


def build_parser():
    parser = argparse.ArgumentParser(prog="hbarsim", description="Stochastic Planck constant simulations.")
    parser.add_argument("--version", action="version", version=f"hbarsim {__version__}")
    sub = parser.add_subparsers(dest="group", required=True)

    simulate = sub.add_parser("simulate", help="Monte-Carlo vs closed form for one system")
    sim_sub = simulate.add_subparsers(dest="system", required=True)
    for system in ("free", "photon", "oscillator"):
        leaf = sim_sub.add_parser(system)
        _add_params(leaf, f"simulate {system}")
        _add_common(leaf)
        leaf.set_defaults(command=f"simulate {system}")

    leaf = sub.add_parser("interference", help="two-slit central fringe under hbar noise")
    _add_params(leaf, "interference")
    _add_common(leaf)
    leaf.set_defaults(command="interference")

    bound = sub.add_parser("bound", help="experimental bounds")
    bound_sub = bound.add_subparsers(dest="kind", required=True)
    for kind in ("interferometer", "cavity", "sigma"):
        leaf = bound_sub.add_parser(kind)
        _add_params(leaf, f"bound {kind}")
        _add_common(leaf)
        leaf.set_defaults(command=f"bound {kind}")

    leaf = sub.add_parser("figure1", help="coherent-state curves with omega*tau = 0.05")
    _add_params(leaf, "figure1")
    _add_common(leaf)
    leaf.set_defaults(command="figure1")

    sweep = sub.add_parser("sweep", help="Cartesian parameter grid over one command")
    sweep.add_argument("target", choices=sorted(SWEEP_TARGETS))
    sweep.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2,...")
    sweep.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="fixed")
    _add_common(sweep)
    sweep.set_defaults(command="sweep")

    run = sub.add_parser("run", help="execute a JSON run configuration")
    run.add_argument("config_file")
    run.add_argument("--output", "-o")
    run.set_defaults(command="run")
    return parser


def _finish(command, params, ctx, rows, output_path, fmt):
    doc = build_document(command, params, ctx, rows)
    validate_document(doc)
    write_output(render(doc, fmt), output_path)


def dispatch(args):
    if args.command == "run":
        cfg = load_config(args.config_file)
        if cfg.command not in COMMANDS:
            raise ValidationError(f"config command must be one of {sorted(COMMANDS)}")
        seed = cfg.seed if cfg.seed is not None else default_seed()
        ctx = Context(int(seed), cfg.natural_units)
        params = resolve_parameters(cfg.command, cfg.parameters)
        rows = execute(cfg.command, params, ctx)
        _finish(cfg.command, params, ctx, rows, args.output or cfg.output_path, cfg.output_format)
        return

    cfg = load_config(args.config) if args.config else RunConfig(command="")
    if cfg.command and args.command != "sweep" and cfg.command != args.command:
        raise ValidationError(f"config is for {cfg.command!r}, not {args.command!r}")
    seed = args.seed if args.seed is not None else cfg.seed if cfg.seed is not None else default_seed()
    if not 0 <= int(seed) < 2**64:
        raise ValidationError("seed must be a 64-bit unsigned integer")
    natural = args.natural_units if args.natural_units is not None else cfg.natural_units
    ctx = Context(int(seed), bool(natural))
    fmt = args.format or (cfg.output_format if args.config else ("csv" if args.command == "figure1" else "json"))
    output = args.output or cfg.output_path

    if args.command == "sweep":
        command = SWEEP_TARGETS[args.target]
        fixed = dict(item.partition("=")[::2] for item in args.fixed)
        base = cfg.parameters if cfg.command in ("", command) else {}
        grid = parse_grid(args.grid)
        for k in grid:
            if k not in COMMANDS[command]:
                raise ValidationError(f"{command}: unknown parameter {k!r}")
        rows = run_sweep(args.target, grid, {**base, **fixed}, ctx)
        params = {"target": command, "grid": grid, "fixed": resolve_parameters(command, base, fixed)}
        _finish("sweep", params, ctx, rows, output, fmt)
        return

    flags = {k[len("param_"):]: v for k, v in vars(args).items() if k.startswith("param_")}
    params = resolve_parameters(args.command, cfg.parameters, flags)
    rows = execute(args.command, params, ctx)
    _finish(args.command, params, ctx, rows, output, fmt)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        dispatch(args)
    except ValidationError as exc:
        print(f"hbarsim: invalid input: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"hbarsim: numerical failure: {exc}", file=sys.stderr)
        return 3
    except HbarSimError as exc:
        print(f"hbarsim: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
