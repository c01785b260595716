"""Independent reference implementations used by the tests.

Nothing here imports the package's propagation code.  The protocol tables
are re-transcribed, the Hamiltonians are written out element by element,
and time evolution uses classical fourth-order Runge-Kutta on a fine grid
instead of eigendecomposition.
"""

import math

import numpy as np
from scipy.linalg import expm

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)

# Table I, one token per pulse, "-" marks the negative axis
_T = {
    "CP": "x x",
    "CPMG": "y y",
    "APCP": "x -x",
    "XY4": "x y x y",
    "XY8": "x y x y y x y x",
    "XY16": "x y x y y x y x -x -y -x -y -y -x -y -x",
    "MLEV8": "x x -x -x -x x x -x",
    "MLEV32": (
        "x x -x -x -x x x -x -x -x x x x -x -x x "
        "x x x -x -x -x x x -x -x -x x x x -x -x"
    ),
}
_T["XY32"] = _T["XY16"] + " " + (
    "-x -y -x -y -y -x -y -x x y x y y x y x"
)
_T["XY64"] = _T["XY32"] + " " + (
    "-x -y -x -y -y -x -y -x x y x y y x y x "
    "x y x y y x y x -x -y -x -y -y -x -y -x"
)
_T["MLEV8Y"] = _T["MLEV8"].replace("x", "y")
_T["MLEV32Y"] = _T["MLEV32"].replace("x", "y")

_ANGLE = {"x": 0.0, "y": math.pi / 2, "-x": math.pi, "-y": 3 * math.pi / 2}

ORACLE_PROTOCOLS = tuple(_T)


def oracle_phases(protocol, n):
    tokens = _T[protocol].split()
    assert n % len(tokens) == 0
    return [_ANGLE[t] for t in tokens] * (n // len(tokens))


def tukey_slices(alpha, slices):
    """Slice amplitudes of a Tukey window, normalized to unit mean."""
    out = []
    for k in range(slices):
        x = (k + 0.5) / slices
        if alpha > 0 and x < alpha / 2:
            w = 0.5 * (1 - math.cos(2 * math.pi * x / alpha))
        elif alpha > 0 and x > 1 - alpha / 2:
            w = 0.5 * (1 - math.cos(2 * math.pi * (1 - x) / alpha))
        else:
            w = 1.0
        out.append(w)
    mean = sum(out) / len(out)
    return [w / mean for w in out]


def timeline(protocol, n, tau, t_pi, fraction=1.0, mode="amplitude", slices=None, initial_phase=0.0):
    """Pulses as ``(start, duration, rabi_angular, phase, weights)`` plus delta flags.

    ``t_pi`` is the absolute nominal pi duration; ``rabi_angular`` is the
    angular Rabi rate of the drive term ``(rabi/2)(cos sx + sin sy)``.
    """
    phases = [initial_phase] + oracle_phases(protocol, n) + [0.0]
    centers = [0.0] + [(k + 0.5) * tau for k in range(n)] + [n * tau]
    kinds = ["half"] + ["full"] * n + ["half"]
    pulses = []
    for c, ph, kind in zip(centers, phases, kinds):
        theta = (math.pi if kind == "full" else math.pi / 2) * fraction
        dur = t_pi if kind == "full" else t_pi / 2
        if mode == "duration":
            dur *= fraction
        pulses.append({"center": c, "duration": dur, "theta": theta, "phase": ph})
    for p in pulses:
        p["start"] = p["center"] - p["duration"] / 2
        p["rate"] = p["theta"] / p["duration"] if p["duration"] > 0 else None
        p["weights"] = slices or [1.0]
    return pulses


def rk4_evolve(segments, dim, min_total_steps=10_000, max_h_norm=0.01):
    """Propagate ``dU/dt = -i H U`` through piecewise-constant segments.

    ``segments`` is a list of ``(duration, H)`` or ``("kick", U)``.  Each
    segment gets a share of at least ``min_total_steps`` RK4 steps, refined so
    that ``h |H| <= max_h_norm``.
    """
    total = sum(d for d, _ in segments if not isinstance(d, str))
    U = np.eye(dim, dtype=complex)
    for dur, H in segments:
        if isinstance(dur, str):
            U = H @ U
            continue
        if dur <= 0:
            continue
        norm = np.linalg.norm(H, 2)
        m = max(1, math.ceil(min_total_steps * dur / total), math.ceil(norm * dur / max_h_norm))
        h = dur / m
        A = -1j * H
        k1 = A
        k2 = A @ (np.eye(dim) + 0.5 * h * k1)
        k3 = A @ (np.eye(dim) + 0.5 * h * k2)
        k4 = A @ (np.eye(dim) + h * k3)
        step = np.eye(dim) + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        U = np.linalg.matrix_power(step, m) @ U
    return U


def _kick(theta, phase, embed):
    gen = 0.5 * theta * (math.cos(phase) * SX + math.sin(phase) * SY)
    return embed(expm(-1j * gen))


def _segments(pulses, free_h, drive, embed):
    """Free evolution between pulses, constant-amplitude pieces during them."""
    segs = []
    t = pulses[0]["start"]
    for p in pulses:
        if p["start"] > t:
            segs.append((p["start"] - t, free_h))
        if p["duration"] == 0:
            segs.append(("kick", _kick(p["theta"], p["phase"], embed)))
            t = p["start"]
            continue
        dt = p["duration"] / len(p["weights"])
        for w in p["weights"]:
            segs.append((dt, free_h + w * p["rate"] * drive(p["phase"])))
        t = p["start"] + p["duration"]
    return segs


def two_level_oracle(pulses, detuning, tau):
    free = math.pi * detuning / tau * SZ

    def drive(ph):
        return 0.5 * (math.cos(ph) * SX + math.sin(ph) * SY)

    U = rk4_evolve(_segments(pulses, free, drive, lambda R: R), 2)
    return abs(U[0, 0]) ** 2


def sensing_oracle(pulses, detuning, f_larmor, a_zz, a_zx, tau):
    w = 2 * math.pi / tau
    free = w * (
        0.5 * detuning * np.kron(SZ, I2)
        + 0.5 * f_larmor * np.kron(I2, SZ)
        + 0.25 * a_zz * np.kron(SZ, SZ)
        + 0.25 * a_zx * np.kron(SZ, SX)
    )

    def drive(ph):
        return 0.5 * np.kron(math.cos(ph) * SX + math.sin(ph) * SY, I2)

    U = rk4_evolve(_segments(pulses, free, drive, lambda R: np.kron(R, I2)), 4)
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = rho[1, 1] = 0.5  # sensor up, target mixed
    rho = U @ rho @ U.conj().T
    return (rho[0, 0] + rho[1, 1]).real


def leak_oracle(pulses, delta, tau):
    free = np.zeros((3, 3), dtype=complex)
    free[2, 2] = 2 * math.pi * delta / tau

    def drive(ph):
        D = np.zeros((3, 3), dtype=complex)
        D[0, 1] = D[1, 2] = 0.5 * np.exp(-1j * ph)
        D[1, 0] = D[2, 1] = 0.5 * np.exp(1j * ph)
        return D

    U = rk4_evolve(_segments(pulses, free, drive, None), 3)
    return np.abs(U[:, 0]) ** 2


def rabi_formula(rabi, duration, detuning):
    """``omega^2/Omega^2 sin^2(Omega T/2)`` with angular ``Omega = 2 pi sqrt(w^2 + d^2)``."""
    big = math.hypot(rabi, detuning)
    if big == 0:
        return 0.0
    return (rabi / big) ** 2 * math.sin(math.pi * big * duration) ** 2


def uniform_rate_average(t, gamma_max, samples=100_000):
    """Midpoint-rule average of ``exp(-g t)`` over ``g`` uniform in ``[0, gamma_max]``."""
    g = (np.arange(samples) + 0.5) / samples * gamma_max
    return np.mean(np.exp(-np.outer(np.atleast_1d(t), g)), axis=1)
