"""Parameter sweeps: spectra, error maps, leak spectra and leak decay.

Every sweep point is evaluated independently by a module-level function, so
points can be farmed out to worker processes.  Results are collected by grid
index, which keeps the output identical for any worker count.
"""

import dataclasses
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import __version__
from .engines import (
    EngineOptions,
    ErrorModel,
    LeakModel,
    SensingModel,
    calibrate_coupling,
    run_leak,
    run_sensing,
    run_two_level,
)
from .exceptions import InvalidCountError, InvalidInputError
from .sequences import RECTANGULAR, Envelope, build_schedule, check_pulse_count, normalize_protocol

WORKERS_ENV = "DDPULSE_WORKERS"


def default_workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidInputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class Axis:
    """Uniform grid ``start + i (stop - start)/(points - 1)``, ``i = 0..points-1``.

    Refining to ``2 points - 1`` reproduces the coarse coordinates bit for bit.
    """

    name: str
    start: float
    stop: float
    points: int

    def __post_init__(self):
        if int(self.points) != self.points or self.points < 2:
            raise InvalidInputError(f"axis {self.name!r}: points must be an integer >= 2")
        if not (math.isfinite(self.start) and math.isfinite(self.stop) and self.start < self.stop):
            raise InvalidInputError(f"axis {self.name!r}: need finite start < stop")

    @property
    def values(self):
        step = (self.stop - self.start) / (self.points - 1)
        return self.start + np.arange(self.points) * step

    def to_dict(self):
        return dataclasses.asdict(self)


#: Axis names accepted by sweeps, mapped to the SweepSpec field they set.
SWEEPABLE = {
    "f_larmor": "f_larmor",
    "f_larmor_2tau": "f_larmor",
    "rotation_fraction": "rotation_fraction",
    "detuning": "detuning",
    "delta_leak": "delta_leak",
    "pi_duration": "pi_duration",
}


@dataclass(frozen=True)
class SweepSpec:
    """Axes plus the fixed parameters of a sweep.

    Frequencies are in ``1/tau``; ``pi_duration`` is in ``tau`` (0 selects
    delta pulses).  ``coupling="auto"`` calibrates the equal ``a_zz = a_zx``
    coupling for the protocol and pulse count.  ``protocol`` may be a tuple,
    in which case each protocol gets its own value column.
    """

    axis1: Axis
    axis2: Axis = None
    protocol: object = "CPMG"
    n: int = 256
    tau: float = 1.0
    pi_duration: float = 0.0
    rotation_fraction: float = 1.0
    detuning: float = 0.0
    mode: str = "amplitude"
    envelope: Envelope = RECTANGULAR
    f_larmor: float = 0.5
    coupling: object = "auto"
    interaction: bool = True
    delta_leak: float = 20.0
    initial_phase: float = 0.0
    phase_cycle: bool = False

    def __post_init__(self):
        for ax in self.axes:
            if ax.name not in SWEEPABLE:
                raise InvalidInputError(
                    f"cannot sweep {ax.name!r}; choose from {', '.join(SWEEPABLE)}"
                )
        if self.axis2 is not None and SWEEPABLE[self.axis1.name] == SWEEPABLE[self.axis2.name]:
            raise InvalidInputError("both axes set the same parameter")
        protocols = tuple(normalize_protocol(p) for p in self.protocol_list)
        for p in protocols:
            check_pulse_count(p, self.n)

    @property
    def axes(self):
        return (self.axis1,) if self.axis2 is None else (self.axis1, self.axis2)

    @property
    def protocol_list(self):
        if isinstance(self.protocol, str):
            return (self.protocol,)
        return tuple(self.protocol)

    def to_dict(self):
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Axis):
                v = v.to_dict()
            elif isinstance(v, Envelope):
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d


@dataclass
class GridResult:
    """Sweep output.

    ``values`` has shape ``(len(axis_1), [len(axis_2),] len(columns))``.
    """

    axes: dict
    columns: list
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def rows(self):
        """Long-format rows: axis coordinates followed by the value columns."""
        coords = list(self.axes.values())
        flat = self.values.reshape(-1, len(self.columns))
        for point, vals in zip(itertools.product(*coords), flat):
            yield tuple(float(c) for c in point) + tuple(float(v) for v in vals)

    @property
    def header(self):
        return list(self.axes) + list(self.columns)


# --- per-point evaluation -------------------------------------------------

@lru_cache(maxsize=256)
def _schedule(protocol, n, tau, pi_duration, fraction, mode, envelope, initial_phase):
    return build_schedule(protocol, n, tau, pi_duration, fraction, mode, envelope, initial_phase)


def _point_schedule(p, protocol, initial_phase, kind):
    # amplitude-scaled errors live in the ErrorModel so one schedule serves a whole
    # map; the leak engine takes no ErrorModel, so its schedule carries them
    fraction = p["rotation_fraction"] if p["mode"] == "duration" or kind == "leak" else 1.0
    return _schedule(
        protocol, p["n"], p["tau"], p["pi_duration"], fraction, p["mode"],
        p["envelope"], initial_phase,
    )


def _point_errors(p):
    fraction = 1.0 if p["mode"] == "duration" else p["rotation_fraction"]
    return ErrorModel(fraction, p["detuning"])


def _single(kind, p, protocol, initial_phase):
    schedule = _point_schedule(p, protocol, initial_phase, kind)
    if kind == "two_level":
        return (run_two_level(schedule, _point_errors(p)),)
    if kind == "sensing":
        a = p["couplings"][protocol] if p["interaction"] else 0.0
        model = SensingModel.equal_coupling(a, p["f_larmor"])
        return (run_sensing(schedule, _point_errors(p), model),)
    if kind == "leak":
        return tuple(float(v) for v in run_leak(schedule, LeakModel(p["delta_leak"])))
    raise InvalidInputError(f"unknown sweep kind {kind!r}")


def evaluate_point(task):
    """Values for one sweep point; ``task = (kind, params)``."""
    kind, p = task
    out = []
    for protocol in p["protocols"]:
        vals = _single(kind, p, protocol, p["initial_phase"])
        if p["phase_cycle"]:
            flipped = _single(kind, p, protocol, p["initial_phase"] + math.pi)
            vals = tuple(a - b for a, b in zip(vals, flipped))
        out.extend(vals)
    return tuple(out)


def _map(tasks, workers):
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(tasks) < 2:
        return [evaluate_point(t) for t in tasks]
    chunk = max(1, len(tasks) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(evaluate_point, tasks, chunksize=chunk))


def resolve_couplings(spec):
    """Per-protocol coupling; ``"auto"`` triggers calibration."""
    out = {}
    for protocol in spec.protocol_list:
        protocol = normalize_protocol(protocol)
        if spec.coupling == "auto":
            out[protocol] = calibrate_coupling(spec.n, spec.tau, protocol)
        else:
            out[protocol] = float(spec.coupling)
    return out


def _base_params(spec, couplings):
    p = {f.name: getattr(spec, f.name) for f in dataclasses.fields(spec) if not f.name.startswith("axis")}
    p["protocols"] = tuple(normalize_protocol(x) for x in spec.protocol_list)
    p["couplings"] = couplings
    p["pulse_model"] = "delta" if spec.pi_duration == 0 else "finite"
    return p


def _value_columns(spec, per_protocol):
    protocols = [normalize_protocol(x) for x in spec.protocol_list]
    if len(protocols) == 1:
        return list(per_protocol)
    return [f"{c}_{proto}" for proto in protocols for c in per_protocol]


def run_sweep(kind, spec, workers=None):
    """Evaluate ``spec`` on its full grid with engine ``kind``.

    ``kind`` is ``"two_level"``, ``"sensing"`` or ``"leak"``.
    """
    couplings = resolve_couplings(spec) if kind == "sensing" else {}
    base = _base_params(spec, couplings)
    grids = [ax.values for ax in spec.axes]
    tasks = []
    for point in itertools.product(*grids):
        p = dict(base)
        for ax, v in zip(spec.axes, point):
            v = float(v)
            if ax.name == "f_larmor_2tau":
                v = v / 2
            p[SWEEPABLE[ax.name]] = v
        tasks.append((kind, p))
    results = _map(tasks, workers)
    per_protocol = ["p1", "p2", "p3"] if kind == "leak" else ["p_up"]
    if base["phase_cycle"]:
        per_protocol = [c + "_diff" for c in per_protocol]
    columns = _value_columns(spec, per_protocol)
    shape = tuple(len(g) for g in grids) + (len(columns),)
    values = np.array(results, dtype=float).reshape(shape)
    metadata = {
        "kind": kind,
        "config": spec.to_dict(),
        "couplings": couplings,
        "version": __version__,
    }
    return GridResult({ax.name: ax.values for ax in spec.axes}, columns, values, metadata)


def spectrum_scan(spec, workers=None):
    """Sensor spin-up probability against the target Larmor frequency.

    The axis is ``f_larmor_2tau`` (units of ``1/(2 tau)``, resonance at 1) or
    ``f_larmor`` (units of ``1/tau``).
    """
    if spec.axis2 is not None or spec.axis1.name not in ("f_larmor", "f_larmor_2tau"):
        raise InvalidInputError("spectrum_scan sweeps a single f_larmor axis")
    return run_sweep("sensing", spec, workers)


def error_map(spec, interaction=True, workers=None):
    """2-D map over rotation fraction and detuning.

    With ``interaction=False`` the bare qubit is simulated (no target spin);
    otherwise the target sits at ``spec.f_larmor`` (default on resonance).
    """
    names = {ax.name for ax in spec.axes}
    if spec.axis2 is None or names != {"rotation_fraction", "detuning"}:
        raise InvalidInputError("error_map needs rotation_fraction and detuning axes")
    if interaction:
        return run_sweep("sensing", dataclasses.replace(spec, interaction=True), workers)
    return run_sweep("two_level", spec, workers)


def leak_spectrum(spec, workers=None):
    """Final three-level populations against the third-level detuning."""
    if spec.axis2 is not None or spec.axis1.name != "delta_leak":
        raise InvalidInputError("leak_spectrum sweeps a single delta_leak axis")
    if spec.pi_duration <= 0:
        raise InvalidInputError("leak_spectrum needs finite-width pulses (pi_duration > 0)")
    return run_sweep("leak", spec, workers)


def leak_decay(
    protocols,
    n_values,
    pi_duration_over_period=0.5,
    delta_range=(20.0, 25.0),
    samples=101,
    tau=1.0,
    envelope=RECTANGULAR,
    workers=None,
):
    """Correct-state probability averaged over a band of leak detunings.

    For each protocol and pulse count the ``p2`` population is averaged over
    ``samples`` evenly spaced detunings spanning ``delta_range`` (inclusive).
    Pulse counts that the protocol cannot realize (below or not a multiple
    of its block length) are reported as NaN.

    Returns
    -------
    GridResult
        Axis ``n``; one ``p2_<protocol>`` column per protocol.
    """
    protocols = [normalize_protocol(p) for p in protocols]
    n_values = [int(n) for n in n_values]
    if any(n <= 0 for n in n_values):
        raise InvalidCountError("pulse counts must be positive")
    lo, hi = (float(x) for x in delta_range)
    if not lo < hi:
        raise InvalidInputError("delta_range needs low < high")
    if int(samples) != samples or samples < 2:
        raise InvalidInputError("samples must be an integer >= 2")
    deltas = Axis("delta_leak", lo, hi, int(samples)).values

    valid = {}
    tasks = []
    for proto in protocols:
        for n in n_values:
            try:
                check_pulse_count(proto, n)
            except InvalidCountError:
                valid[proto, n] = False
                continue
            valid[proto, n] = True
            base = {
                "protocols": (proto,), "n": n, "tau": float(tau),
                "pi_duration": float(pi_duration_over_period), "rotation_fraction": 1.0,
                "mode": "amplitude", "envelope": envelope, "initial_phase": 0.0,
                "phase_cycle": False, "detuning": 0.0,
            }
            tasks.extend(("leak", dict(base, delta_leak=float(d))) for d in deltas)
    results = iter(_map(tasks, workers))

    values = np.full((len(n_values), len(protocols)), np.nan)
    for j, proto in enumerate(protocols):
        for i, n in enumerate(n_values):
            if valid[proto, n]:
                p2 = [next(results)[1] for _ in deltas]
                values[i, j] = math.fsum(p2) / len(p2)
    metadata = {
        "kind": "leak_decay",
        "config": {
            "protocols": protocols, "n_values": n_values,
            "pi_duration_over_period": pi_duration_over_period,
            "delta_range": [lo, hi], "samples": int(samples), "tau": tau,
            "envelope": envelope.to_dict(),
        },
        "version": __version__,
    }
    return GridResult(
        {"n": np.array(n_values, dtype=float)},
        [f"p2_{p}" for p in protocols],
        values,
        metadata,
    )
