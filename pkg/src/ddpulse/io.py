"""CSV/JSON emission and ingestion.

Output files carry the resolved run configuration so a run can be repeated
from its own output.  CSV files put it in ``#`` comment lines above the
header; JSON files in the ``config`` field of the record.
"""

import csv
import io
import json
import math
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .analysis import DataSeries
from .exceptions import ConfigError, DataFormatError

CONFIG_PREFIX = "# config: "
TIMESTAMP_PREFIX = "# timestamp: "


def format_float(v):
    """Round-trip decimal form (17 significant digits)."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


def dump_config(config):
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def timestamp():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def render_csv(header, rows, config, metadata=None, stamp=None):
    buf = io.StringIO()
    buf.write(f"# ddpulse {__version__}\n")
    buf.write(f"{TIMESTAMP_PREFIX}{stamp or timestamp()}\n")
    buf.write(f"{CONFIG_PREFIX}{dump_config(config)}\n")
    for key, value in sorted((metadata or {}).items()):
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) for v in row])
    return buf.getvalue()


def _json_number(v):
    v = float(v)
    return None if math.isnan(v) else v


def render_json(header, rows, config, metadata=None, stamp=None):
    record = {
        "version": __version__,
        "timestamp": stamp or timestamp(),
        "config": config,
        "metadata": metadata or {},
        "columns": list(header),
        "data": [[_json_number(v) for v in row] for row in rows],
    }
    return json.dumps(record, sort_keys=True, indent=1) + "\n"


def render(fmt, header, rows, config, metadata=None, stamp=None):
    if fmt == "csv":
        return render_csv(header, rows, config, metadata, stamp)
    if fmt == "json":
        return render_json(header, rows, config, metadata, stamp)
    raise ConfigError(f"unknown output format {fmt!r}")


def strip_timestamp(text):
    """Output text with the timestamp removed, for reproducibility checks."""
    if text.lstrip().startswith("{"):
        record = json.loads(text)
        record.pop("timestamp", None)
        return json.dumps(record, sort_keys=True)
    return "".join(
        line for line in text.splitlines(keepends=True) if not line.startswith(TIMESTAMP_PREFIX)
    )


def load_config_source(path):
    """Read a run configuration.

    Accepts a plain JSON config, a JSON output record (its ``config`` field)
    or a CSV output file (its ``# config:`` line).
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if text.lstrip().startswith("#"):
        for line in text.splitlines():
            if line.startswith(CONFIG_PREFIX):
                return _parse_json(line[len(CONFIG_PREFIX):], path)
            if not line.startswith("#"):
                break
        raise ConfigError(f"{path}: no '# config:' line in CSV header")
    data = _parse_json(text, path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "config" in data and "data" in data and "columns" in data:
        data = data["config"]
    return data


def _parse_json(text, path):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


_SERIES_COLUMNS = ("x", "y", "sigma")


def ingest_csv(path):
    """Load a :class:`~ddpulse.analysis.DataSeries` from a CSV file.

    The first non-comment row is a header naming ``x`` and ``y`` and
    optionally ``sigma`` (any order, case-insensitive).  Lines starting with
    ``#`` and blank lines are skipped.  Rows are stable-sorted by ``x``.

    Raises
    ------
    DataFormatError
        With the 1-based line number of the first bad row, or on duplicate
        ``x`` values.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        columns = None
        records = []
        for row in reader:
            line = reader.line_num
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            cells = [c.strip() for c in row]
            if columns is None:
                columns = _header(cells, line)
                continue
            if len(cells) != len(columns):
                raise DataFormatError(
                    f"line {line}: expected {len(columns)} fields, got {len(cells)}", line
                )
            try:
                values = [float(c) for c in cells]
            except ValueError:
                raise DataFormatError(f"line {line}: non-numeric value in {cells}", line) from None
            if not all(math.isfinite(v) for v in values):
                raise DataFormatError(f"line {line}: non-finite value", line)
            records.append((line, dict(zip(columns, values))))
    if columns is None:
        raise DataFormatError(f"{path}: no header row")
    if not records:
        raise DataFormatError(f"{path}: no data rows")

    records.sort(key=lambda r: r[1]["x"])
    for (_, a), (line, b) in zip(records, records[1:]):
        if a["x"] == b["x"]:
            raise DataFormatError(f"line {line}: duplicate x value {format_float(b['x'])}", line)
    x = np.array([r["x"] for _, r in records])
    y = np.array([r["y"] for _, r in records])
    sigma = np.array([r["sigma"] for _, r in records]) if "sigma" in columns else None
    if sigma is not None and np.any(sigma <= 0):
        bad = next(line for line, r in records if r["sigma"] <= 0)
        raise DataFormatError(f"line {bad}: sigma must be positive", bad)
    return DataSeries(x, y, sigma)


def _header(cells, line):
    names = [c.lower() for c in cells]
    unknown = [c for c in names if c not in _SERIES_COLUMNS]
    if unknown or "x" not in names or "y" not in names or len(set(names)) != len(names):
        raise DataFormatError(
            f"line {line}: header must name columns x, y and optionally sigma, got {cells}", line
        )
    return names
