import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ddpulse.analysis import flat_rate_decay_model
from ddpulse.cli import resolve_config, run
from ddpulse.exceptions import ConfigError, DataFormatError
from ddpulse.io import format_float, ingest_csv, strip_timestamp

DOCS = os.path.join(os.path.dirname(__file__), os.pardir, "docs")


def call(*argv):
    out = io.StringIO()
    code = run(list(argv), stdout=out)
    return code, out.getvalue()


def test_calibrate_prints_coupling():
    code, out = call("calibrate", "--protocol", "xy16", "--n", "256", "--tau", "1")
    assert code == 0
    assert float(out) == pytest.approx(0.0061359787, rel=1e-8)


def test_invalid_count_is_config_error():
    code, _ = call("errormap", "--protocol", "xy16", "--n", "24")
    assert code == 2


def test_unknown_flag_and_key(tmp_path):
    assert call("sense", "--bogus", "1")[0] == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 16, "whatever": 1}))
    assert call("sense", "--config", str(cfg))[0] == 2
    cfg.write_text(json.dumps({"system": {"sensing": {"f_larmor": 0.5, "extra": 1}}}))
    assert call("sense", "--config", str(cfg))[0] == 2
    cfg.write_text(json.dumps({"system": {"sensing": {}, "leak": {"delta": 1.0}}}))
    assert call("sense", "--config", str(cfg))[0] == 2
    cfg.write_text("{not json")
    assert call("sense", "--config", str(cfg))[0] == 2


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 16, "protocol": "XY8", "detuning": 0.2}))
    resolved = resolve_config("sense", json.loads(cfg.read_text()), {"n": 32})
    assert resolved["n"] == 32 and resolved["protocol"] == "XY8" and resolved["detuning"] == 0.2


def test_resolution_errors():
    with pytest.raises(ConfigError):
        resolve_config("sense", {"pi_duration": 0.2, "pulse_model": "delta"})
    with pytest.raises(ConfigError):
        resolve_config("sense", {"pi_duration": 0.2, "rabi": 1.0})
    with pytest.raises(ConfigError):
        resolve_config("leak-spectrum", {"pi_duration": 0.0})
    with pytest.raises(ConfigError):
        resolve_config("spectrum", {"subcommand": "errormap"})
    assert resolve_config("sense", {"rabi": 2.0})["pi_duration"] == 0.25


def test_spectrum_fig2_columns(tmp_path):
    out = tmp_path / "fig2.csv"
    code, _ = call("spectrum", "--config", os.path.join(DOCS, "fig2.cfg"), "--n", "32",
                   "--axis", "f_larmor_2tau:0.9:1.1:5", "-o", str(out))
    assert code == 0
    header = [l for l in out.read_text().splitlines() if not l.startswith("#")][0]
    assert header == "f_larmor_2tau,p_up_CP,p_up_CPMG,p_up_APCP,p_up_XY16,p_up_MLEV32Y"


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_round_trip_and_parallelism(tmp_path, fmt):
    first = tmp_path / f"a.{fmt}"
    second = tmp_path / f"b.{fmt}"
    code, _ = call("errormap", "--protocol", "APCP,XY16", "--n", "32", "--pi-duration", "0.2",
                   "--axis", "rotation_fraction:0.8:1.2:3", "--axis", "detuning:0:1:4",
                   "--format", fmt, "-o", str(first))
    assert code == 0
    code, _ = call("errormap", "--config", str(first), "--workers", "2", "-o", str(second))
    assert code == 0
    assert strip_timestamp(first.read_text()) == strip_timestamp(second.read_text())


def test_tau_seconds_columns():
    code, out = call("leak-spectrum", "--n", "16", "--axis", "delta_leak:20:21:2", "--tau-seconds", "1e-3")
    assert code == 0
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    assert lines[0] == "delta_leak,delta_leak_hz,p1,p2,p3"
    assert lines[1].split(",")[1] == "20000"


def test_sense_and_phase_cycle():
    code, out = call("sense", "--n", "16", "--interaction", "off", "--phase-cycle", "--format", "json")
    assert code == 0
    record = json.loads(out)
    assert record["columns"] == ["p_up_diff"]
    assert record["data"][0][0] == pytest.approx(-1.0, abs=1e-12)


def test_leak_decay_cli():
    code, out = call("leak-decay", "--protocol", "CPMG,XY16", "--n-values", "8,16", "--samples", "3")
    assert code == 0
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert rows[0] == "n,p2_CPMG,p2_XY16"
    assert rows[1].endswith(",nan")


def write_series(path, header, rows):
    path.write_text(header + "\n" + "\n".join(",".join(format_float(v) for v in r) for r in rows) + "\n")


def test_fit_decay_and_exit_codes(tmp_path):
    t = np.linspace(0, 0.2, 40)
    data = tmp_path / "decay.csv"
    write_series(data, "x,y", zip(t[::-1], flat_rate_decay_model(t[::-1], 50.0)))
    code, out = call("fit", "--input", str(data), "--model", "decay")
    assert code == 0
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert rows[0].startswith("gamma_max,t2,")
    assert float(rows[1].split(",")[0]) == pytest.approx(50.0, rel=1e-6)

    flat = tmp_path / "flat.csv"
    write_series(flat, "x,y", [(x, 0.5) for x in t])
    assert call("fit", "--input", str(flat))[0] == 4
    assert call("fit", "--input", str(tmp_path / "missing.csv"))[0] == 2


def test_ingest_csv(tmp_path):
    two = tmp_path / "two.csv"
    two.write_text("x,y\n3,1\n1,2\n2,3\n")
    s = ingest_csv(two)
    assert list(s.x) == [1, 2, 3] and list(s.y) == [2, 3, 1] and s.sigma is None

    three = tmp_path / "three.csv"
    three.write_text("# comment\nsigma,X,y\n0.1,1,2\n0.2,2,3\n")
    s = ingest_csv(three)
    assert list(s.sigma) == [0.1, 0.2]

    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,1\n2,2\n3,3\n4,4\n5,5\n6,oops\n")
    with pytest.raises(DataFormatError) as info:
        ingest_csv(bad)
    assert info.value.line == 7 and "line 7" in str(info.value)

    dup = tmp_path / "dup.csv"
    dup.write_text("x,y\n1,1\n1,2\n")
    with pytest.raises(DataFormatError):
        ingest_csv(dup)
    hdr = tmp_path / "hdr.csv"
    hdr.write_text("t,v\n1,1\n")
    with pytest.raises(DataFormatError):
        ingest_csv(hdr)


def test_full_precision_output():
    assert float(format_float(0.1 + 0.2)) == 0.1 + 0.2
    assert format_float(np.nan) == "nan"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ddpulse", "calibrate", "--n", "16"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and float(proc.stdout) > 0
