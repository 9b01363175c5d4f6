"""CSV tables, JSON result records and run manifests.

CSV conventions: UTF-8, ``.`` decimal separator, ``#`` comment lines, a
single header row.  Floats are written with ``repr`` so every value reads
back bit-exactly.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io as _io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .cfgfile import config_digest
from .errors import ValidationError
from .fringe import FringeScan, RatioPoint

SCHEMA_VERSION = 1

SCAN_HEADER = ("position_m", "counts", "dwell_s")
RATIO_HEADERS = {
    "curve": ("distance_m", "ratio", "ratio_err"),
    "offsets": ("offset_m", "ratio", "ratio_err"),
    "powers": ("power_w", "ratio", "ratio_err"),
    "ratios": ("grating_power_w", "ratio", "ratio_err"),
}


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def atomic_write_text(path, text):
    """Write ``text`` next to ``path`` and rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(header, rows):
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _read_csv(path, expected=None):
    """Header and float rows of a CSV file; ``expected`` lists acceptable headers."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValidationError(f"{path}: empty table")
    rows = list(csv.reader(lines))
    header = tuple(h.strip() for h in rows[0])
    if expected is not None and header not in expected:
        raise ValidationError(f"{path}: unexpected header {','.join(header)!r}; "
                              f"expected one of {[','.join(h) for h in expected]}")
    data = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValidationError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise ValidationError(f"{path}: row {i}: {exc}") from exc
    return header, np.array(data, dtype=float).reshape(-1, len(header))


# ------------------------------------------------------------------ fringe scans
def format_scan(scan: FringeScan):
    rows = ((x, c, scan.dwell_time) for x, c in zip(scan.positions, scan.counts))
    return render_csv(SCAN_HEADER, rows)


def write_scan(path, scan):
    atomic_write_text(path, format_scan(scan))


def read_scan(path):
    _, data = _read_csv(path, [SCAN_HEADER])
    if data.shape[0] == 0:
        raise ValidationError(f"{path}: no data rows")
    dwell = data[:, 2]
    if not np.all(dwell == dwell[0]):
        raise ValidationError(f"{path}: dwell_s must be the same on every row")
    return FringeScan(data[:, 0], data[:, 1], float(dwell[0]), metadata={"source": str(path)})


# ----------------------------------------------------------------- ratio tables
def format_ratio_points(points, kind="curve"):
    return render_csv(RATIO_HEADERS[kind], ((p.abscissa, p.ratio, p.ratio_err) for p in points))


def write_ratio_points(path, points, kind="curve"):
    atomic_write_text(path, format_ratio_points(points, kind))


def read_ratio_points(path, kind=None):
    """RatioPoints from any of the ratio tables, or only ``kind`` when given."""
    expected = list(RATIO_HEADERS.values()) if kind is None else [RATIO_HEADERS[kind]]
    _, data = _read_csv(path, expected)
    return [RatioPoint(float(a), float(r), float(e)) for a, r, e in data]


# ------------------------------------------------------------------- manifests
@dataclass
class RunManifest:
    config_digest: str
    tool_version: str
    command: str
    timestamp: str
    inputs: list = field(default_factory=list)
    seed: int = None


def utc_timestamp():
    """UTC ISO-8601 time; honours SOURCE_DATE_EPOCH for reproducible sidecars."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
           else _dt.datetime.now(_dt.timezone.utc))
    return now.replace(microsecond=0).isoformat().replace("+00:00", "Z")


def make_manifest(config=None, command=None, inputs=(), seed=None):
    return RunManifest(
        config_digest=config_digest(config) if config is not None else "",
        tool_version=__version__,
        command=command if command is not None else " ".join(sys.argv),
        timestamp=utc_timestamp(),
        inputs=[str(p) for p in inputs],
        seed=None if seed is None else int(seed),
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def result_document(kind, result, manifest: RunManifest):
    """Versioned JSON record: ``{"schema", "manifest", "result"}``."""
    return {
        "schema": f"recoil-sigma/{kind}/{SCHEMA_VERSION}",
        "manifest": _jsonable(asdict(manifest)),
        "result": _jsonable(result),
    }


def load_schema(kind):
    """The JSON Schema shipped for output ``kind`` (e.g. ``"fit-sigma"``)."""
    text = (resources.files("recoil_sigma") / "schemas" / f"{kind}.json").read_text(encoding="utf-8")
    return json.loads(text)


def dumps(doc):
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"
