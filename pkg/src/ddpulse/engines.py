"""Propagation of the three physical models through a pulse schedule.

Units: frequencies are given in units of ``1/tau`` and converted with the
schedule's ``tau``.  A detuning ``d`` accumulates phase ``2 pi d`` per
``tau`` of free evolution, and a Rabi frequency ``w`` rotates by ``2 pi w T``
in time ``T``, so the nominal pi pulse lasts ``1/(2 w)``.

Models
------
two-level
    ``H = 2 pi (d/2) sz`` between pulses, plus the drive
    ``2 pi (f w/2)(cos(phi) sx + sin(phi) sy)`` during them.
sensing
    Sensor (x) target with ``2 pi [(d/2) sz.1 + (fL/2) 1.sz
    + (sz/2).(a_zz sz/2 + a_zx sx/2)]``; the drive acts on the sensor only.
    The target starts maximally mixed.
leak
    Levels 1, 2, 3 with ``2 pi delta |3><3|``; the drive couples 1-2 and 2-3
    with equal strength and the same phase.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DDPulseError, InvalidInputError, ModelMismatchError
from .quantum import (
    IDENTITY_2,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    conjugate_density,
    expm_hermitian,
    partial_trace_second,
    rotation_unitary,
)
from .sequences import build_schedule

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class ErrorModel:
    """Pulse errors shared by every pulse and free interval.

    Attributes
    ----------
    rotation_fraction : float
        Realized rotation over nominal rotation at zero detuning (1 = perfect).
    detuning : float
        Drive detuning from the sensor resonance, in ``1/tau``.
    """

    rotation_fraction: float = 1.0
    detuning: float = 0.0

    def __post_init__(self):
        if not (self.rotation_fraction >= 0 and math.isfinite(self.rotation_fraction)):
            raise InvalidInputError(
                f"rotation_fraction must be finite and >= 0, got {self.rotation_fraction}"
            )
        if not math.isfinite(self.detuning):
            raise InvalidInputError(f"detuning must be finite, got {self.detuning}")


PERFECT = ErrorModel()


@dataclass(frozen=True)
class SensingModel:
    """Target spin: Larmor frequency and the two secular coupling terms (1/tau)."""

    f_larmor: float = 0.5
    a_zz: float = 0.0
    a_zx: float = 0.0

    @classmethod
    def equal_coupling(cls, coupling, f_larmor=0.5):
        return cls(f_larmor=f_larmor, a_zz=coupling, a_zx=coupling)


@dataclass(frozen=True)
class LeakModel:
    """Third level at detuning ``delta_leak``; ``rabi`` defaults to the schedule's."""

    delta_leak: float
    rabi: float = None

    def __post_init__(self):
        if not math.isfinite(self.delta_leak):
            raise InvalidInputError(f"delta_leak must be finite, got {self.delta_leak}")
        if self.rabi is not None and not self.rabi > 0:
            raise InvalidInputError(f"rabi must be > 0, got {self.rabi}")


@dataclass(frozen=True)
class EngineOptions:
    """``pulse_model`` is ``"delta"``, ``"finite"`` or None (taken from the schedule)."""

    pulse_model: str = None

    def __post_init__(self):
        if self.pulse_model not in (None, "delta", "finite"):
            raise InvalidInputError(f"unknown pulse model {self.pulse_model!r}")


DEFAULT_OPTIONS = EngineOptions()


def _resolve_model(schedule, opts):
    model = opts.pulse_model or ("delta" if schedule.is_delta else "finite")
    if model == "delta" and not schedule.is_delta:
        raise ModelMismatchError("delta pulse model requires zero pulse durations")
    if model == "finite" and any(ev.duration == 0 for ev in schedule.events):
        raise ModelMismatchError("finite pulse model requires nonzero pulse durations")
    return model


class _System:
    """Free Hamiltonian plus drive operators for one physical model."""

    def __init__(self, free_h, drive_x, drive_y, embed):
        self.free_h = free_h
        self.drive_x = drive_x
        self.drive_y = drive_y
        self.embed = embed  # maps a 2x2 sensor rotation into the full space


def _two_level_system(errors, tau):
    free = TWO_PI * (errors.detuning / tau / 2) * SIGMA_Z
    return _System(free, SIGMA_X / 2, SIGMA_Y / 2, lambda R: R)


def _sensing_system(errors, model, tau):
    target = model.a_zz * SIGMA_Z / 2 + model.a_zx * SIGMA_X / 2
    free = TWO_PI / tau * (
        (errors.detuning / 2) * np.kron(SIGMA_Z, IDENTITY_2)
        + (model.f_larmor / 2) * np.kron(IDENTITY_2, SIGMA_Z)
        + np.kron(SIGMA_Z / 2, target)
    )
    return _System(
        free,
        np.kron(SIGMA_X / 2, IDENTITY_2),
        np.kron(SIGMA_Y / 2, IDENTITY_2),
        lambda R: np.kron(R, IDENTITY_2),
    )


def _leak_system(model, tau):
    free = np.zeros((3, 3), dtype=complex)
    free[2, 2] = TWO_PI * model.delta_leak / tau
    # cos(phi) Dx + sin(phi) Dy == e^{-i phi}(|1><2| + |2><3|) + h.c.
    raising = np.zeros((3, 3), dtype=complex)
    raising[0, 1] = raising[1, 2] = 1.0
    dx = (raising + raising.T) / 2
    dy = (-1j * raising + 1j * raising.T) / 2
    return _System(free, dx, dy, None)


def _pulse_propagator(system, ev, fraction):
    weights = ev.envelope.weights()
    dt = ev.duration / len(weights)
    rabi = fraction * ev.rabi
    drive = math.cos(ev.phase) * system.drive_x + math.sin(ev.phase) * system.drive_y
    U = None
    for w in weights:
        step = expm_hermitian(system.free_h + TWO_PI * rabi * w * drive, dt)
        U = step if U is None else step @ U
    return U


def _sequence_unitary(schedule, system, errors, model):
    """Total propagator; one matrix product per pulse."""
    gaps, pulses, first, steps = schedule.plan
    f = errors.rotation_fraction
    if model == "delta":
        P = [system.embed(rotation_unitary(f * ev.angle, ev.phase)) for ev in pulses]
    else:
        P = [_pulse_propagator(system, ev, f) for ev in pulses]
    F = [expm_hermitian(system.free_h, gap) for gap in gaps]
    combined = {}
    U = P[first]
    for key in steps:
        step = combined.get(key)
        if step is None:
            step = combined[key] = P[key[1]] @ F[key[0]]
        U = step @ U
    return U


def run_two_level(schedule, errors=PERFECT, opts=DEFAULT_OPTIONS):
    """Spin-up probability of a bare driven qubit that starts spin-up.

    Perfect pulses return 0: the pi/2 (pi)^n pi/2 train is a net pi rotation.
    """
    model = _resolve_model(schedule, opts)
    U = _sequence_unitary(schedule, _two_level_system(errors, schedule.tau), errors, model)
    return float(abs(U[0, 0]) ** 2)


def run_sensing(schedule, errors=PERFECT, model=SensingModel(), opts=DEFAULT_OPTIONS):
    """Sensor spin-up probability with a maximally mixed target spin."""
    pulse_model = _resolve_model(schedule, opts)
    system = _sensing_system(errors, model, schedule.tau)
    U = _sequence_unitary(schedule, system, errors, pulse_model)
    rho0 = np.kron(np.diag([1.0, 0.0]), IDENTITY_2 / 2)
    sensor = partial_trace_second(conjugate_density(rho0, U))
    return float(sensor[0, 0].real)


def _check_leak_rabi(schedule, rabi):
    # schedule Rabi frequencies are absolute; LeakModel values are per tau
    for ev in schedule.events:
        if not math.isclose(ev.rabi * schedule.tau, rabi, rel_tol=1e-9):
            raise ModelMismatchError(
                f"schedule Rabi frequency {ev.rabi * schedule.tau:.6g}/tau does not "
                f"match LeakModel.rabi={rabi:.6g}/tau"
            )


def run_leak(schedule, model, opts=DEFAULT_OPTIONS):
    """Final populations ``[p1, p2, p3]`` of the three-level system, starting in ``|1>``.

    Raises
    ------
    ModelMismatchError
        For delta-pulse schedules (the leak needs a finite Rabi frequency) or
        when ``model.rabi`` disagrees with the schedule's pulses.
    """
    if schedule.is_delta or opts.pulse_model == "delta":
        raise ModelMismatchError("the leak model requires finite-width pulses")
    _resolve_model(schedule, opts)
    if model.rabi is not None:
        _check_leak_rabi(schedule, model.rabi)
    U = _sequence_unitary(schedule, _leak_system(model, schedule.tau), PERFECT, "finite")
    return np.abs(U[:, 0]) ** 2


def single_pulse_probability(rabi, duration, detuning=0.0, phase=0.0):
    """Transition probability of one rectangular pulse on a two-level system.

    Computed by propagation (not the closed-form Rabi formula) so it can be
    checked against it.
    """
    H = TWO_PI * (
        (detuning / 2) * SIGMA_Z
        + (rabi / 2) * (math.cos(phase) * SIGMA_X + math.sin(phase) * SIGMA_Y)
    )
    U = expm_hermitian(H, duration)
    return float(abs(U[1, 0]) ** 2)


def calibrate_coupling(n, tau=1.0, protocol="CPMG", rel_tol=1e-12):
    """Coupling that makes an ideal sequence flip the sensor on resonance.

    Uses delta pulses with no errors and ``f_larmor = 1/(2 tau)``, equal
    ``a_zz = a_zx = a``.  The first maximum of ``P_up(a)`` is bracketed by a
    coarse scan and then located by bisection on the sign of the
    central-difference slope.

    Returns
    -------
    float
        Coupling ``a`` in units of ``1/tau``.
    """
    schedule = build_schedule(protocol, n, tau=tau)

    def p_up(a):
        return run_sensing(schedule, PERFECT, SensingModel.equal_coupling(a, 0.5))

    step = 1.0 / (16 * schedule.n)
    prev, cur = 0.0, p_up(step)
    k = 1
    while not (cur < prev and prev > 0.5):
        k += 1
        if k > 64 * 16:
            raise DDPulseError("no maximum of the sensing probability found")
        prev, cur = cur, p_up(k * step)
    lo, hi = (k - 2) * step, k * step

    h = 1e-7 * hi
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if p_up(mid + h) - p_up(mid - h) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
