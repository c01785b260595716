from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddpulse.exceptions import InvalidCountError, InvalidInputError, PulseOverlapError
from ddpulse.sequences import (
    PROTOCOLS,
    Envelope,
    block_length,
    build_schedule,
    protocol_phases,
)
from oracles import ORACLE_PROTOCOLS, oracle_phases, tukey_slices

X, Y, XB, YB = 0.0, np.pi / 2, np.pi, 1.5 * np.pi


def test_all_protocols_present():
    assert set(PROTOCOLS) == set(ORACLE_PROTOCOLS)
    assert len(PROTOCOLS) == 12


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_phases_match_table(protocol):
    n = 2 * max(block_length(protocol), 2)
    assert np.allclose(protocol_phases(protocol, n), oracle_phases(protocol, n))


def test_examples():
    assert protocol_phases("XY4", 4) == [X, Y, X, Y]
    assert protocol_phases("APCP", 4) == [X, XB, X, XB]
    assert protocol_phases("MLEV8", 8) == [X, X, XB, XB, XB, X, X, XB]
    assert protocol_phases("xy4", 4) == protocol_phases("XY4", 4)


def test_block_lengths():
    expected = {"CP": 2, "CPMG": 2, "APCP": 2, "XY4": 4, "XY8": 8, "XY16": 16, "XY32": 32,
                "XY64": 64, "MLEV8": 8, "MLEV32": 32, "MLEV8Y": 8, "MLEV32Y": 32}
    assert {p: block_length(p) for p in PROTOCOLS} == expected


def test_y_variants():
    for base in ("MLEV8", "MLEV32"):
        n = block_length(base)
        shifted = [(ph + np.pi / 2) % (2 * np.pi) for ph in protocol_phases(base, n)]
        assert np.allclose(shifted, protocol_phases(base + "Y", n))


@pytest.mark.parametrize("protocol,n", [("XY16", 24), ("CPMG", 3), ("CP", 0), ("MLEV32", 16), ("XY4", -4)])
def test_invalid_counts(protocol, n):
    with pytest.raises(InvalidCountError, match="multiple"):
        protocol_phases(protocol, n)


def test_unknown_protocol():
    with pytest.raises(InvalidInputError):
        protocol_phases("XY12", 12)


def test_cpmg_two_pulse_geometry():
    s = build_schedule("CPMG", 2, tau=1.0)
    assert s.centers == [0.0, 0.5, 1.5, 2.0]
    assert [ev.phase for ev in s.events] == [X, Y, Y, X]
    assert s.is_delta


def test_overlap_boundary():
    build_schedule("CPMG", 2, pi_duration=2 / 3)
    with pytest.raises(PulseOverlapError):
        build_schedule("CPMG", 2, pi_duration=2 / 3 + 1e-9)
    # duration-scaled errors lengthen the pulses
    with pytest.raises(PulseOverlapError):
        build_schedule("CPMG", 2, pi_duration=0.6, rotation_fraction=1.2, mode="duration")


def test_finite_durations():
    s = build_schedule("XY4", 4, tau=2.0, pi_duration=0.25)
    durations = [ev.duration for ev in s.events]
    assert durations == [0.25, 0.5, 0.5, 0.5, 0.5, 0.25]
    assert all(np.isclose(ev.rabi, 1.0) for ev in s.events)
    assert np.isclose(s.total, 8.0 + 0.125)


@given(st.sampled_from(PROTOCOLS), st.integers(1, 4), st.floats(0.0, 0.66), st.floats(0.1, 10))
def test_gap_multiset(protocol, reps, pi_duration, tau):
    n = reps * max(block_length(protocol), 2)
    s = build_schedule(protocol, n, tau=tau, pi_duration=pi_duration)
    gaps = [b.start - a.end for a, b in zip(s.events, s.events[1:])]
    t_pi = pi_duration * tau
    edge = tau / 2 - 0.75 * t_pi
    inner = tau - t_pi
    assert len(gaps) == n + 1
    assert np.allclose(sorted(gaps), sorted([edge, edge] + [inner] * (n - 1)), atol=1e-12 * tau)
    assert all(g >= -1e-12 * tau for g in gaps)


@given(st.sampled_from(PROTOCOLS), st.integers(2, 4))
def test_phases_periodic(protocol, reps):
    b = max(block_length(protocol), 2)
    ph = protocol_phases(protocol, reps * b)
    assert ph == ph[:b] * reps


def test_deterministic():
    a = build_schedule("MLEV32Y", 64, pi_duration=0.3, envelope=Envelope("tukey", 0.4, 16))
    b = build_schedule("mlev32y", 64, pi_duration=0.3, envelope=Envelope("tukey", 0.4, 16))
    assert a == b


def test_tukey_area_and_shape():
    for alpha in (0.0, 0.3, 1.0):
        env = Envelope("tukey", alpha, 32)
        w = env.weights()
        assert np.isclose(w.mean(), 1.0, atol=1e-14)
        assert np.allclose(w, tukey_slices(alpha, 32), atol=1e-13)
    assert np.allclose(Envelope("tukey", 0.0, 8).weights(), 1.0)
    with pytest.raises(InvalidInputError):
        Envelope("tukey", 1.5)
    with pytest.raises(InvalidInputError):
        Envelope("gaussian")


def test_rotation_fraction_modes():
    amp = build_schedule("CP", 2, pi_duration=0.2, rotation_fraction=0.9)
    dur = build_schedule("CP", 2, pi_duration=0.2, rotation_fraction=0.9, mode="duration")
    assert np.isclose(amp.events[1].angle, 0.9 * np.pi) and np.isclose(amp.events[1].duration, 0.2)
    assert np.isclose(dur.events[1].duration, 0.18)
    assert np.isclose(amp.events[1].rabi, 0.9 * 2.5) and np.isclose(dur.events[1].rabi, 2.5)
    with pytest.raises(InvalidInputError):
        build_schedule("CP", 2, mode="phase")


def test_plan_dedups():
    s = build_schedule("XY16", 256, pi_duration=0.1)
    gaps, pulses, first, steps = s.plan
    assert len(gaps) == 2
    assert len(pulses) <= 6
    assert len(steps) == 257
    assert sorted(Counter(g for g, _ in steps).values()) == [2, 255]
