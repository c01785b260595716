"""Command-line driver.

Each subcommand resolves a run configuration from built-in defaults, an
optional JSON config file (``--config``) and command-line flags, in that
order of precedence.  The resolved configuration is echoed into the output
so the run can be reproduced with ``--config <output file>``.

Exit codes: 0 success, 2 configuration or input error, 3 engine error,
4 fit did not converge.
"""

import argparse
import copy
import math
import sys

from . import __version__
from .analysis import fit_flat_rate_decay, fit_lorentzian
from .engines import calibrate_coupling
from .exceptions import (
    ConfigError,
    DataFormatError,
    DDPulseError,
    InvalidInputError,
    InvalidParameterError,
)
from .experiments import (
    Axis,
    SweepSpec,
    error_map,
    evaluate_point,
    leak_decay,
    leak_spectrum,
    resolve_couplings,
    spectrum_scan,
)
from .io import format_float, ingest_csv, load_config_source, render
from .sequences import PROTOCOLS, Envelope, normalize_protocol

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENGINE = 3
EXIT_NOT_CONVERGED = 4

SUBCOMMANDS = ("spectrum", "errormap", "leak-spectrum", "leak-decay", "sense", "fit", "calibrate")

FIG_PROTOCOLS = ["CP", "CPMG", "APCP", "XY16", "MLEV32Y"]

_SEQUENCE = {
    "protocol": "CPMG",
    "n": 256,
    "tau": 1.0,
    "pulse_model": None,
    "pi_duration": 0.0,
    "rabi": None,
    "rotation_fraction": 1.0,
    "detuning": 0.0,
    "mode": "amplitude",
    "envelope": {"kind": "rectangular"},
    "initial_phase": 0.0,
    "phase_cycle": False,
    "tau_seconds": None,
    "format": "csv",
}

_SENSING = {"sensing": {"f_larmor": 0.5, "coupling": "auto"}}


def _axis(name, start, stop, points):
    return {"name": name, "start": start, "stop": stop, "points": points}


DEFAULTS = {
    "spectrum": dict(
        _SEQUENCE, system=_SENSING, sweep={"axes": [_axis("f_larmor_2tau", 0.0, 2.0, 401)]}
    ),
    "errormap": dict(
        _SEQUENCE,
        system=_SENSING,
        sweep={"axes": [_axis("rotation_fraction", 0.5, 1.5, 201), _axis("detuning", 0.0, 1.0, 201)]},
    ),
    "leak-spectrum": dict(
        _SEQUENCE,
        pi_duration=0.25,
        system={"leak": {}},
        sweep={"axes": [_axis("delta_leak", 10.0, 30.0, 401)]},
    ),
    "leak-decay": dict(
        _SEQUENCE,
        protocol=FIG_PROTOCOLS,
        pi_duration=0.5,
        system={"leak": {}},
        sweep={"n_values": [32, 64, 128, 256, 512], "delta_range": [20.0, 25.0], "samples": 101},
    ),
    "sense": dict(_SEQUENCE, system=_SENSING),
    "fit": {"format": "csv", "fit": {"input": None, "model": "decay", "fit_offset": True, "offset": None}},
    "calibrate": {"protocol": "CPMG", "n": 256, "tau": 1.0, "format": "csv"},
}

_SYSTEM_KEYS = {"two_level": set(), "sensing": {"f_larmor", "coupling"}, "leak": {"delta"}}
_SWEEP_KEYS = {"leak-decay": {"n_values", "delta_range", "samples"}}
_FIT_KEYS = {"input", "model", "fit_offset", "offset"}
_ENVELOPE_KEYS = {"kind", "alpha", "slices"}


# --- configuration ----------------------------------------------------------

def _merge(base, update):
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "system":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _check_keys(block, allowed, where):
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")


def _number(cfg, key, where=None, integer=False, positive=False, allow_none=False):
    value = cfg.get(key)
    label = f"{where}.{key}" if where else key
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{label} must be a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{label} must be an integer, got {value!r}")
    if not math.isfinite(value) or (positive and value <= 0):
        raise ConfigError(f"{label} must be {'positive and ' if positive else ''}finite, got {value!r}")
    return int(value) if integer else float(value)


def _bool(cfg, key):
    value = cfg.get(key)
    if not isinstance(value, bool):
        raise ConfigError(f"{key} must be true or false, got {value!r}")
    return value


def _protocols(value, single=False):
    names = value if isinstance(value, list) else [value]
    if not names or not all(isinstance(p, str) for p in names):
        raise ConfigError(f"protocol must be a name or a list of names, got {value!r}")
    try:
        names = [normalize_protocol(p) for p in names]
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None
    if single and len(names) != 1:
        raise ConfigError("this subcommand takes a single protocol")
    return names[0] if not isinstance(value, list) else names


def resolve_config(subcommand, file_cfg=None, overrides=None):
    """Defaults, then file values, then flag values; validated and normalized."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    defaults = DEFAULTS[subcommand]
    allowed = set(defaults) | {"subcommand", "output"}
    cfg = copy.deepcopy(defaults)
    for source in (file_cfg or {}, overrides or {}):
        _check_keys(source, allowed, "config")
        if source.get("subcommand", subcommand) != subcommand:
            raise ConfigError(
                f"config is for subcommand {source['subcommand']!r}, not {subcommand!r}"
            )
        cfg = _merge(cfg, source)
    cfg["subcommand"] = subcommand
    cfg.pop("output", None)
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError(f"format must be 'csv' or 'json', got {cfg['format']!r}")

    if subcommand == "fit":
        return _resolve_fit(cfg)
    if subcommand == "calibrate":
        cfg["protocol"] = _protocols(cfg["protocol"], single=True)
        cfg["n"] = _number(cfg, "n", integer=True, positive=True)
        cfg["tau"] = _number(cfg, "tau", positive=True)
        return cfg
    return _resolve_sequence(subcommand, cfg)


def _resolve_fit(cfg):
    fit = cfg["fit"]
    _check_keys(fit, _FIT_KEYS, "fit")
    if not isinstance(fit.get("input"), str) or not fit["input"]:
        raise ConfigError("fit.input must name a CSV file")
    if fit.get("model") not in ("decay", "lorentzian"):
        raise ConfigError(f"fit.model must be 'decay' or 'lorentzian', got {fit.get('model')!r}")
    if not isinstance(fit.get("fit_offset"), bool):
        raise ConfigError("fit.fit_offset must be true or false")
    fit["offset"] = _number(fit, "offset", "fit", allow_none=True)
    if not fit["fit_offset"] and fit["offset"] is None:
        raise ConfigError("fit.offset is required when fit.fit_offset is false")
    return cfg


def _resolve_sequence(subcommand, cfg):
    cfg["protocol"] = _protocols(cfg["protocol"])
    cfg["n"] = _number(cfg, "n", integer=True, positive=True)
    cfg["tau"] = _number(cfg, "tau", positive=True)
    cfg["rotation_fraction"] = _number(cfg, "rotation_fraction")
    cfg["detuning"] = _number(cfg, "detuning")
    cfg["initial_phase"] = _number(cfg, "initial_phase")
    cfg["phase_cycle"] = _bool(cfg, "phase_cycle")
    cfg["tau_seconds"] = _number(cfg, "tau_seconds", positive=True, allow_none=True)
    if cfg["mode"] not in ("amplitude", "duration"):
        raise ConfigError(f"mode must be 'amplitude' or 'duration', got {cfg['mode']!r}")

    rabi = _number(cfg, "rabi", positive=True, allow_none=True)
    if rabi is not None:
        if cfg["pi_duration"] not in (0, 0.0, None) and not math.isclose(
            cfg["pi_duration"], 1 / (2 * rabi), rel_tol=1e-12
        ):
            raise ConfigError("give either pi_duration or rabi, not both")
        cfg["pi_duration"] = 1 / (2 * rabi)
    cfg["rabi"] = None
    cfg["pi_duration"] = _number(cfg, "pi_duration")
    if cfg["pi_duration"] < 0:
        raise ConfigError("pi_duration must be >= 0")
    inferred = "finite" if cfg["pi_duration"] > 0 else "delta"
    if cfg["pulse_model"] not in (None, inferred):
        raise ConfigError(
            f"pulse_model {cfg['pulse_model']!r} contradicts pi_duration={cfg['pi_duration']}"
        )
    cfg["pulse_model"] = inferred

    env = cfg["envelope"]
    _check_keys(env, _ENVELOPE_KEYS, "envelope")
    try:
        envelope = Envelope(**env)
    except (TypeError, InvalidInputError) as exc:
        raise ConfigError(f"bad envelope: {exc}") from None
    cfg["envelope"] = envelope.to_dict()

    system = cfg["system"]
    if not isinstance(system, dict) or len(system) != 1 or next(iter(system)) not in _SYSTEM_KEYS:
        raise ConfigError(
            "system must have exactly one block: two_level, sensing or leak"
        )
    (kind, block), = system.items()
    _check_keys(block, _SYSTEM_KEYS[kind], f"system.{kind}")
    if kind == "sensing":
        block.setdefault("f_larmor", 0.5)
        block.setdefault("coupling", "auto")
        block["f_larmor"] = _number(block, "f_larmor", "system.sensing")
        if block["coupling"] != "auto":
            block["coupling"] = _number(block, "coupling", "system.sensing")
    if kind == "leak":
        if subcommand == "leak-decay":
            if "delta" in block:
                raise ConfigError("leak-decay takes its detunings from sweep.delta_range")
        elif subcommand == "leak-spectrum":
            block.pop("delta", None)
        else:
            block["delta"] = _number(block, "delta", "system.leak")
        if inferred == "delta":
            raise ConfigError("the leak system needs finite pulses (pi_duration > 0)")

    wanted = {
        "spectrum": ("sensing",),
        "errormap": ("sensing", "two_level"),
        "leak-spectrum": ("leak",),
        "leak-decay": ("leak",),
        "sense": ("sensing", "two_level", "leak"),
    }[subcommand]
    if kind not in wanted:
        raise ConfigError(f"{subcommand} needs a {' or '.join(wanted)} system, got {kind}")

    if subcommand == "sense":
        cfg.pop("sweep", None)
    elif subcommand == "leak-decay":
        _resolve_decay_sweep(cfg)
    else:
        sweep = cfg["sweep"]
        _check_keys(sweep, {"axes"}, "sweep")
        axes = sweep.get("axes")
        if not isinstance(axes, list) or not axes:
            raise ConfigError("sweep.axes must be a non-empty list")
        for ax in axes:
            _check_keys(ax, {"name", "start", "stop", "points"}, "sweep axis")
            for key in ("start", "stop"):
                ax[key] = _number(ax, key, "sweep axis")
            ax["points"] = _number(ax, "points", "sweep axis", integer=True, positive=True)
    if subcommand == "leak-decay" and cfg["phase_cycle"]:
        raise ConfigError("phase_cycle is not available for leak-decay")
    return cfg


def _resolve_decay_sweep(cfg):
    sweep = cfg["sweep"]
    _check_keys(sweep, _SWEEP_KEYS["leak-decay"], "sweep")
    n_values = sweep.get("n_values")
    if not isinstance(n_values, list) or not n_values:
        raise ConfigError("sweep.n_values must be a non-empty list")
    sweep["n_values"] = [_number({"n": n}, "n", "sweep.n_values", integer=True, positive=True)
                         for n in n_values]
    rng = sweep.get("delta_range")
    if not isinstance(rng, list) or len(rng) != 2:
        raise ConfigError("sweep.delta_range must be [low, high]")
    sweep["delta_range"] = [_number({"d": d}, "d", "sweep.delta_range") for d in rng]
    sweep["samples"] = _number(sweep, "samples", "sweep", integer=True, positive=True)
    if not isinstance(cfg["protocol"], list):
        cfg["protocol"] = [cfg["protocol"]]


def sweep_spec(cfg):
    """SweepSpec for a resolved spectrum/errormap/leak-spectrum/sense config."""
    (kind, block), = cfg["system"].items()
    axes = [Axis(a["name"], a["start"], a["stop"], a["points"]) for a in cfg.get("sweep", {}).get("axes", [])]
    # sense evaluates one point; give SweepSpec a placeholder axis it never uses
    axis1 = axes[0] if axes else Axis("detuning", 0.0, 1.0, 2)
    protocol = tuple(cfg["protocol"]) if isinstance(cfg["protocol"], list) else cfg["protocol"]
    return SweepSpec(
        axis1=axis1,
        axis2=axes[1] if len(axes) > 1 else None,
        protocol=protocol,
        n=cfg["n"],
        tau=cfg["tau"],
        pi_duration=cfg["pi_duration"],
        rotation_fraction=cfg["rotation_fraction"],
        detuning=cfg["detuning"],
        mode=cfg["mode"],
        envelope=Envelope(**cfg["envelope"]),
        f_larmor=block.get("f_larmor", 0.5),
        coupling=block.get("coupling", 0.0),
        interaction=kind == "sensing",
        delta_leak=block.get("delta", 20.0),
        initial_phase=cfg["initial_phase"],
        phase_cycle=cfg["phase_cycle"],
    ), kind


# --- running ----------------------------------------------------------------

_SI = {
    "f_larmor": ("f_larmor_hz", lambda v, ts: v / ts),
    "f_larmor_2tau": ("f_larmor_hz", lambda v, ts: v / (2 * ts)),
    "detuning": ("detuning_hz", lambda v, ts: v / ts),
    "delta_leak": ("delta_leak_hz", lambda v, ts: v / ts),
    "pi_duration": ("pi_duration_s", lambda v, ts: v * ts),
}


def _with_si(result, tau_seconds):
    header = result.header
    rows = list(result.rows())
    if tau_seconds is None:
        return header, rows
    axis_names = list(result.axes)
    extra = [(i, _SI[name]) for i, name in enumerate(axis_names) if name in _SI]
    k = len(axis_names)
    header = header[:k] + [label for _, (label, _) in extra] + header[k:]
    rows = [row[:k] + tuple(f(row[i], tau_seconds) for i, (_, f) in extra) + row[k:] for row in rows]
    return header, rows


def _sense(cfg, spec, kind):
    engine = {"sensing": "sensing", "two_level": "two_level", "leak": "leak"}[kind]
    couplings = resolve_couplings(spec) if kind == "sensing" else {}
    p = {
        "protocols": tuple(normalize_protocol(x) for x in spec.protocol_list),
        "n": spec.n, "tau": spec.tau, "pi_duration": spec.pi_duration,
        "rotation_fraction": spec.rotation_fraction, "detuning": spec.detuning,
        "mode": spec.mode, "envelope": spec.envelope, "f_larmor": spec.f_larmor,
        "couplings": couplings, "interaction": True, "delta_leak": spec.delta_leak,
        "initial_phase": spec.initial_phase, "phase_cycle": spec.phase_cycle,
    }
    values = evaluate_point((engine, p))
    per = ["p1", "p2", "p3"] if kind == "leak" else ["p_up"]
    if spec.phase_cycle:
        per = [c + "_diff" for c in per]
    protos = list(p["protocols"])
    columns = per if len(protos) == 1 else [f"{c}_{q}" for q in protos for c in per]
    return columns, [tuple(values)], {"couplings": couplings}


def execute(cfg, workers=None):
    """Run a resolved configuration.

    Returns
    -------
    header, rows, metadata, exit_code
    """
    sub = cfg["subcommand"]
    if sub == "calibrate":
        a = calibrate_coupling(cfg["n"], cfg["tau"], cfg["protocol"])
        return ["coupling"], [(a,)], {}, EXIT_OK
    if sub == "fit":
        return _run_fit(cfg)
    if sub == "leak-decay":
        sw = cfg["sweep"]
        result = leak_decay(
            cfg["protocol"], sw["n_values"], cfg["pi_duration"], sw["delta_range"],
            sw["samples"], cfg["tau"], Envelope(**cfg["envelope"]), workers,
        )
        header, rows = _with_si(result, cfg["tau_seconds"])
        return header, rows, {}, EXIT_OK
    spec, kind = sweep_spec(cfg)
    if sub == "sense":
        header, rows, meta = _sense(cfg, spec, kind)
        return header, rows, meta, EXIT_OK
    if sub == "spectrum":
        result = spectrum_scan(spec, workers)
    elif sub == "errormap":
        result = error_map(spec, interaction=kind == "sensing", workers=workers)
    else:
        result = leak_spectrum(spec, workers)
    header, rows = _with_si(result, cfg["tau_seconds"])
    return header, rows, {"couplings": result.metadata.get("couplings", {})}, EXIT_OK


def _run_fit(cfg):
    fit = cfg["fit"]
    data = ingest_csv(fit["input"])
    if fit["model"] == "decay":
        r = fit_flat_rate_decay(data, fit["fit_offset"], fit["offset"] or 0.0)
        header = ["gamma_max", "t2", "amplitude", "offset"]
        row = (r.gamma_max, r.t2, r.amplitude, r.offset)
    else:
        r = fit_lorentzian(data, fit["fit_offset"], 1.0 if fit["offset"] is None else fit["offset"])
        header = ["center", "fwhm", "depth", "asymptote"]
        row = (r.center, r.fwhm, r.depth, r.asymptote)
    d = r.diagnostics
    header = header + ["residual_norm", "iterations", "converged"]
    row = row + (d.residual_norm, d.iterations, float(d.converged))
    meta = {"fit_status": d.status}
    return header, [row], meta, EXIT_OK if d.converged else EXIT_NOT_CONVERGED


# --- argument parsing ------------------------------------------------------

def _csv_list(text):
    return [s for s in (p.strip() for p in text.split(",")) if s]


def _axis_flag(text):
    parts = text.split(":")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("axis must be NAME:START:STOP:POINTS")
    name, start, stop, points = parts
    try:
        return _axis(name, float(start), float(stop), int(points))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad axis {text!r}") from None


def _add_common(p):
    p.add_argument("--config", help="JSON config, or a previous output file to rerun")
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"))


def _add_sequence(p):
    g = p.add_argument_group("sequence")
    g.add_argument("--protocol", type=_csv_list, help=f"one or more of {','.join(PROTOCOLS)}")
    g.add_argument("--n", type=int, help="number of pi pulses")
    g.add_argument("--tau", type=float, help="pi-pulse spacing")
    g.add_argument("--pulse-model", choices=("delta", "finite"))
    g.add_argument("--pi-duration", type=float, help="pi-pulse duration in units of tau")
    g.add_argument("--rabi", type=float, help="Rabi frequency in 1/tau (alternative to --pi-duration)")
    g.add_argument("--rotation-fraction", type=float)
    g.add_argument("--detuning", type=float, help="drive detuning in 1/tau")
    g.add_argument("--mode", choices=("amplitude", "duration"))
    g.add_argument("--envelope", choices=("rectangular", "tukey"))
    g.add_argument("--tukey-alpha", type=float)
    g.add_argument("--slices", type=int)
    g.add_argument("--phase-cycle", action="store_true", default=None)
    g.add_argument("--tau-seconds", type=float, help="add SI-unit columns")
    g.add_argument("--workers", type=int, help="worker processes (default: $DDPULSE_WORKERS or 1)")
    s = p.add_argument_group("system")
    s.add_argument("--f-larmor", type=float, help="target Larmor frequency in 1/tau")
    s.add_argument("--coupling", help="coupling in 1/tau, or 'auto'")
    s.add_argument("--interaction", choices=("on", "off"))
    s.add_argument("--delta-leak", type=float, help="third-level detuning in 1/tau")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ddpulse", description="Dynamical-decoupling pulse sequence simulator."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    for name, help_text in (
        ("spectrum", "sensor response against target Larmor frequency"),
        ("errormap", "response over rotation fraction and detuning"),
        ("leak-spectrum", "three-level populations against leak detuning"),
        ("sense", "single-point evaluation"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        _add_sequence(p)
        if name != "sense":
            p.add_argument("--axis", action="append", type=_axis_flag,
                           help="NAME:START:STOP:POINTS (repeat for a 2-D sweep)")

    p = sub.add_parser("leak-decay", help="detuning-averaged leak population against pulse count")
    _add_common(p)
    _add_sequence(p)
    p.add_argument("--n-values", type=_csv_list, help="comma-separated pulse counts")
    p.add_argument("--delta-range", type=_csv_list, help="LOW,HIGH leak detuning band")
    p.add_argument("--samples", type=int, help="detunings averaged over the band")

    p = sub.add_parser("fit", help="fit a decay or Lorentzian to CSV data")
    _add_common(p)
    p.add_argument("--input", help="CSV with x,y[,sigma] columns")
    p.add_argument("--model", choices=("decay", "lorentzian"))
    p.add_argument("--fix-offset", type=float, metavar="VALUE",
                   help="hold the offset (decay) or asymptote (lorentzian) fixed")

    p = sub.add_parser("calibrate", help="coupling that flips the sensor on resonance")
    _add_common(p)
    p.add_argument("--protocol", help="protocol name")
    p.add_argument("--n", type=int)
    p.add_argument("--tau", type=float)
    return parser


def _overrides(args):
    """Translate parsed flags into a partial config."""
    o = {}
    simple = ("n", "tau", "pulse_model", "pi_duration", "rabi", "rotation_fraction", "detuning",
              "mode", "phase_cycle", "tau_seconds", "format")
    for key in simple:
        value = getattr(args, key, None)
        if value is not None:
            o[key] = value
    protocol = getattr(args, "protocol", None)
    if protocol is not None:
        if isinstance(protocol, list):
            o["protocol"] = protocol[0] if len(protocol) == 1 else protocol
        else:
            o["protocol"] = protocol

    env = {}
    if getattr(args, "envelope", None):
        env["kind"] = args.envelope
    if getattr(args, "tukey_alpha", None) is not None:
        env["alpha"] = args.tukey_alpha
    if getattr(args, "slices", None) is not None:
        env["slices"] = args.slices
    if env:
        o["envelope"] = env

    if getattr(args, "axis", None):
        o["sweep"] = {"axes": args.axis}
    if args.subcommand == "leak-decay":
        sweep = {}
        if args.n_values is not None:
            sweep["n_values"] = [_flag_number(v, int, "--n-values") for v in args.n_values]
        if args.delta_range is not None:
            sweep["delta_range"] = [_flag_number(v, float, "--delta-range") for v in args.delta_range]
        if args.samples is not None:
            sweep["samples"] = args.samples
        if sweep:
            o["sweep"] = sweep

    if args.subcommand == "fit":
        fit = {}
        if args.input is not None:
            fit["input"] = args.input
        if args.model is not None:
            fit["model"] = args.model
        if args.fix_offset is not None:
            fit["fit_offset"] = False
            fit["offset"] = args.fix_offset
        if fit:
            o["fit"] = fit
    return o


def _flag_number(text, kind, flag):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{flag}: bad value {text!r}") from None


def _system_overrides(args, cfg):
    """Apply --interaction/--f-larmor/--coupling/--delta-leak to the system block."""
    if not hasattr(args, "interaction"):
        return cfg
    if args.interaction == "off":
        if any(v is not None for v in (args.f_larmor, args.coupling)):
            raise ConfigError("--f-larmor/--coupling need --interaction on")
        cfg["system"] = {"two_level": {}}
    elif args.interaction == "on":
        current = cfg.get("system", {})
        cfg["system"] = current if "sensing" in current else {"sensing": {}}
    if args.f_larmor is not None or args.coupling is not None:
        sensing = cfg.setdefault("system", {}).get("sensing")
        if sensing is None:
            raise ConfigError("--f-larmor/--coupling apply to the sensing system only")
        if args.f_larmor is not None:
            sensing["f_larmor"] = args.f_larmor
        if args.coupling is not None:
            sensing["coupling"] = (
                "auto" if args.coupling == "auto" else _flag_number(args.coupling, float, "--coupling")
            )
    if args.delta_leak is not None:
        leak = cfg.get("system", {}).get("leak")
        if leak is None:
            raise ConfigError("--delta-leak applies to the leak system only")
        leak["delta"] = args.delta_leak
    return cfg


def run(argv=None, stdout=None):
    """Parse ``argv``, run, write output; returns the exit code."""
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        file_cfg = load_config_source(args.config) if args.config else {}
        overrides = _overrides(args)
        merged = resolve_config(args.subcommand, file_cfg, overrides)
        merged = resolve_config(args.subcommand, _system_overrides(args, merged))
        header, rows, meta, code = execute(merged, getattr(args, "workers", None))
        text = render(merged["format"], header, rows, merged, meta)
        if args.output:
            with open(args.output, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        if args.subcommand == "calibrate":
            stdout.write(format_float(rows[0][0]) + "\n")
        elif not args.output:
            stdout.write(text)
        if code == EXIT_NOT_CONVERGED:
            print("ddpulse: fit did not converge", file=sys.stderr)
        return code
    except (ConfigError, DataFormatError, InvalidInputError, InvalidParameterError) as exc:
        print(f"ddpulse: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"ddpulse: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DDPulseError as exc:
        print(f"ddpulse: engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE


def main(argv=None):
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
