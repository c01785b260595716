"""Protocol phase tables and timed pulse schedules.

A sequence is an initial pi/2 pulse, ``n`` pi pulses spaced by ``tau`` and a
final pi/2 pulse.  Pulse centers sit at ``0, tau/2, 3 tau/2, ...,
(n - 1/2) tau, n tau``; the pi/2 pulses are along x and the pi-pulse phases
follow the protocol's repeating block.

Phase letters: ``x`` = 0, ``y`` = pi/2, ``X`` = x-bar = pi, ``Y`` = y-bar = 3 pi/2.
"""

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .exceptions import InvalidCountError, InvalidInputError, PulseOverlapError

PHASE_OF = {"x": 0.0, "y": 0.5 * np.pi, "X": np.pi, "Y": 1.5 * np.pi}

_XY8 = "xyxy" "yxyx"
_XY16 = _XY8 + "XYXY" "YXYX"
_XY32 = _XY16 + "XYXY" "YXYX" "xyxy" "yxyx"
_XY64 = _XY32 + "XYXY" "YXYX" "xyxy" "yxyx" "xyxy" "yxyx" "XYXY" "YXYX"
_MLEV8 = "xxXX" "XxxX"
_MLEV32 = (
    "xxXX" "XxxX" "XXxx" "xXXx"
    "xxxX" "XXxx" "XXXx" "xxXX"
)


def _to_y(block):
    return block.replace("x", "y").replace("X", "Y")


#: Repeating pi-pulse phase blocks, keyed by canonical protocol name.
PROTOCOL_BLOCKS = {
    "CP": "xx",
    "CPMG": "yy",
    "APCP": "xX",
    "XY4": "xyxy",
    "XY8": _XY8,
    "XY16": _XY16,
    "XY32": _XY32,
    "XY64": _XY64,
    "MLEV8": _MLEV8,
    "MLEV32": _MLEV32,
    "MLEV8Y": _to_y(_MLEV8),
    "MLEV32Y": _to_y(_MLEV32),
}

PROTOCOLS = tuple(PROTOCOL_BLOCKS)

_CANONICAL = {name.lower(): name for name in PROTOCOL_BLOCKS}


def normalize_protocol(name):
    """Map a case-insensitive protocol label onto its canonical spelling."""
    try:
        return _CANONICAL[str(name).strip().lower()]
    except KeyError:
        raise InvalidInputError(
            f"unknown protocol {name!r}; expected one of {', '.join(PROTOCOLS)}"
        ) from None


def block_length(protocol):
    return len(PROTOCOL_BLOCKS[normalize_protocol(protocol)])


def check_pulse_count(protocol, n):
    protocol = normalize_protocol(protocol)
    if isinstance(n, bool) or int(n) != n:
        raise InvalidCountError(f"pulse count must be an integer, got {n!r}")
    n = int(n)
    block = len(PROTOCOL_BLOCKS[protocol])
    if n <= 0 or n % 2 or n % block:
        raise InvalidCountError(
            f"{protocol} needs a positive pulse count that is a multiple of "
            f"{max(block, 2)}, got n={n}"
        )
    return n


def protocol_phases(protocol, n):
    """Phases (radians) of the ``n`` pi pulses of ``protocol``.

    Raises
    ------
    InvalidCountError
        If ``n`` is not a positive multiple of the protocol block length.
    """
    protocol = normalize_protocol(protocol)
    n = check_pulse_count(protocol, n)
    return list(_phase_cycle(protocol, n))


@lru_cache(maxsize=None)
def _phase_cycle(protocol, n):
    block = PROTOCOL_BLOCKS[protocol]
    return tuple(PHASE_OF[c] for c in block) * (n // len(block))


@dataclass(frozen=True)
class Envelope:
    """Pulse envelope.

    ``kind="rectangular"`` is a constant drive.  ``kind="tukey"`` is a
    cosine-tapered window with taper fraction ``alpha`` sampled at the
    midpoints of ``slices`` equal-time pieces; the slice amplitudes are
    renormalized so the pulse area equals that of the rectangular pulse.
    """

    kind: str = "rectangular"
    alpha: float = 0.5
    slices: int = 64

    def __post_init__(self):
        if self.kind not in ("rectangular", "tukey"):
            raise InvalidInputError(f"unknown envelope kind {self.kind!r}")
        if self.kind == "tukey":
            if not 0.0 <= self.alpha <= 1.0:
                raise InvalidInputError(f"tukey alpha must be in [0, 1], got {self.alpha}")
            if int(self.slices) != self.slices or self.slices < 1:
                raise InvalidInputError(f"slices must be a positive integer, got {self.slices}")

    def weights(self):
        """Relative slice amplitudes with unit mean."""
        if self.kind == "rectangular":
            return np.ones(1)
        return _tukey_weights(float(self.alpha), int(self.slices))

    def to_dict(self):
        if self.kind == "rectangular":
            return {"kind": "rectangular"}
        return {"kind": "tukey", "alpha": self.alpha, "slices": self.slices}


RECTANGULAR = Envelope()


@lru_cache(maxsize=64)
def _tukey_weights(alpha, slices):
    x = (np.arange(slices) + 0.5) / slices
    w = np.ones(slices)
    if alpha > 0:
        edge = alpha / 2
        lo = x < edge
        hi = x > 1 - edge
        w[lo] = 0.5 * (1 + np.cos(np.pi * (x[lo] / edge - 1)))
        w[hi] = 0.5 * (1 + np.cos(np.pi * ((1 - x[hi]) / edge - 1)))
    w = w / w.mean()
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class PulseEvent:
    """One pulse of a schedule.

    ``angle`` is the rotation produced at zero detuning before any
    :class:`~ddpulse.engines.ErrorModel` scaling; ``duration`` is zero for
    delta pulses.
    """

    kind: str
    phase: float
    center: float
    duration: float
    angle: float
    envelope: Envelope = RECTANGULAR

    @property
    def start(self):
        return self.center - 0.5 * self.duration

    @property
    def end(self):
        return self.center + 0.5 * self.duration

    @property
    def rabi(self):
        """Rectangular-equivalent Rabi frequency, ``angle / (2 pi duration)``."""
        if self.duration == 0:
            return float("inf")
        return self.angle / (2 * np.pi * self.duration)


@dataclass(frozen=True)
class SequenceSchedule:
    protocol: str
    n: int
    tau: float
    pi_duration: float
    events: tuple = field(repr=False)

    @property
    def is_delta(self):
        return all(ev.duration == 0 for ev in self.events)

    @property
    def start(self):
        return self.events[0].start

    @property
    def total(self):
        """End time of the final pi/2 pulse (origin at the first pulse center)."""
        return self.events[-1].end

    @property
    def centers(self):
        return [ev.center for ev in self.events]

    @cached_property
    def plan(self):
        """Deduplicated propagation plan ``(gaps, pulses, first, steps)``.

        ``pulses`` holds one representative event per distinct pulse,
        ``gaps`` the distinct free-evolution durations (rounded to 1e-12 tau) and
        ``steps`` the ``(gap index, pulse index)`` pairs following the first
        pulse, in time order.
        """
        gap_index = {}
        pulse_index = {}
        pulses = []

        def pulse_id(ev):
            key = (ev.phase, ev.duration, ev.angle, ev.envelope)
            if key not in pulse_index:
                pulse_index[key] = len(pulses)
                pulses.append(ev)
            return pulse_index[key]

        first = pulse_id(self.events[0])
        steps = []
        prev_end = self.events[0].end
        for ev in self.events[1:]:
            gap = round((ev.start - prev_end) / self.tau, 12) * self.tau
            g = gap_index.setdefault(gap, len(gap_index))
            steps.append((g, pulse_id(ev)))
            prev_end = ev.end
        return tuple(gap_index), tuple(pulses), first, tuple(steps)


_MODES = {
    "amplitude": "amplitude",
    "amplitude-scaled": "amplitude",
    "duration": "duration",
    "duration-scaled": "duration",
}


def build_schedule(
    protocol,
    n,
    tau=1.0,
    pi_duration=0.0,
    rotation_fraction=1.0,
    mode="amplitude",
    envelope=RECTANGULAR,
    initial_phase=0.0,
):
    """Timed pulse list for ``protocol`` with ``n`` pi pulses.

    Parameters
    ----------
    protocol : str
        Protocol label, case-insensitive.
    n : int
        Number of pi pulses.
    tau : float
        Spacing of pi-pulse centers; all times are absolute multiples of it.
    pi_duration : float
        Nominal pi-pulse duration in units of ``tau`` (0 for delta pulses).
        pi/2 pulses last half as long at the same Rabi frequency.
    rotation_fraction : float
        Rotation realized by each pulse relative to nominal.
    mode : {"amplitude", "duration"}
        How ``rotation_fraction`` is realized: by scaling the drive amplitude
        at fixed duration, or by scaling the duration at fixed amplitude.
    envelope : Envelope
    initial_phase : float
        Phase of the first pi/2 pulse (pi for the phase-cycled partner run).

    Raises
    ------
    PulseOverlapError
        If neighbouring pulses would overlap.  With equal Rabi frequencies
        the pi/2-pi gap closes first, at ``pi_duration = 2/3``.
    """
    protocol = normalize_protocol(protocol)
    phases = protocol_phases(protocol, n)
    tau = float(tau)
    if not (np.isfinite(tau) and tau > 0):
        raise InvalidInputError(f"tau must be positive, got {tau}")
    pi_duration = float(pi_duration)
    f = float(rotation_fraction)
    if pi_duration < 0 or not np.isfinite(pi_duration):
        raise InvalidInputError(f"pi_duration must be >= 0, got {pi_duration}")
    if f < 0 or not np.isfinite(f):
        raise InvalidInputError(f"rotation_fraction must be >= 0, got {f}")
    try:
        mode = _MODES[mode]
    except KeyError:
        raise InvalidInputError(f"unknown rotation mode {mode!r}") from None
    if not isinstance(envelope, Envelope):
        raise InvalidInputError("envelope must be an Envelope")

    t_pi = pi_duration * tau
    if mode == "duration":
        t_pi *= f
    # pi/2 -> first pi gap: tau/2 - (t_pi/4 + t_pi/2) >= 0; pi -> pi gap: tau - t_pi >= 0
    if 0.75 * t_pi > 0.5 * tau * (1 + 1e-12):
        raise PulseOverlapError(
            f"pulse duration {t_pi / tau:.6g} tau exceeds 2/3 tau; "
            "the pi/2 and pi pulses would overlap"
        )
    env = envelope if t_pi > 0 else RECTANGULAR

    events = [PulseEvent("half", float(initial_phase), 0.0, 0.5 * t_pi, 0.5 * np.pi * f, env)]
    for k, ph in enumerate(phases):
        events.append(PulseEvent("full", ph, (k + 0.5) * tau, t_pi, np.pi * f, env))
    events.append(PulseEvent("half", 0.0, n * tau, 0.5 * t_pi, 0.5 * np.pi * f, env))
    return SequenceSchedule(protocol, n, tau, pi_duration, tuple(events))
