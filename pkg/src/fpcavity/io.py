"""Dataset and configuration files.

Formats (UTF-8, ``.`` decimal separator):

* geometry config: flat JSON object with keys ``length_m``, ``radius_x_m``,
  ``radius_y_m``, ``mirror_diameter_m``, ``roughness_rms_m``;
* ring-down design: flat JSON with ``tc_s, u0, p_background, p_saturated,
  attenuations_db, t_start_s, t_end_s, n_points, shots, seed``;
* ring-down dataset: CSV ``time_s,attenuation_db,detected,total``;
* thermal dataset: CSV ``temperature_k,tc_s[,tc_err_s]``.

Floats are written with ``repr`` so that every file round-trips exactly.
"""

import csv
import hashlib
import io
import json
import math
from importlib import resources

import numpy as np

from .errors import DatasetParseError, InvalidDesign
from .loss_budget import ThermalDataset, ThermalPoint
from .resonator_modes import CavityGeometry
from .ringdown import RingdownCurve, RingdownDataset, SimulationDesign

__all__ = [
    "GEOMETRY_FIELDS",
    "DESIGN_FIELDS",
    "dumps_json",
    "file_digest",
    "load_geometry",
    "geometry_from_dict",
    "reference_geometry_path",
    "reference_design_path",
    "load_design",
    "design_from_dict",
    "design_to_dict",
    "read_ringdown_csv",
    "write_ringdown_csv",
    "format_ringdown_csv",
    "read_thermal_csv",
    "write_thermal_csv",
    "format_thermal_csv",
]

GEOMETRY_FIELDS = ("length_m", "radius_x_m", "radius_y_m", "mirror_diameter_m", "roughness_rms_m")
DESIGN_FIELDS = (
    "tc_s", "u0", "p_background", "p_saturated", "attenuations_db",
    "t_start_s", "t_end_s", "n_points", "shots", "seed",
)
RINGDOWN_HEADER = ("time_s", "attenuation_db", "detected", "total")
THERMAL_HEADER = ("temperature_k", "tc_s", "tc_err_s")


def dumps_json(obj):
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return "sha256:" + h.hexdigest()


def _data_path(name):
    return str(resources.files("fpcavity") / "data" / name)


def reference_geometry_path():
    return _data_path("reference_geometry.json")


def reference_design_path():
    return _data_path("reference_ringdown_design.json")


def _load_json_object(path):
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None
    if not isinstance(obj, dict):
        raise DatasetParseError(f"{path}: expected a JSON object")
    return obj


def _number(obj, key, where):
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DatasetParseError(f"{where}: field '{key}' must be a number, got {value!r}")
    return float(value)


def _integer(obj, key, where):
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise DatasetParseError(f"{where}: field '{key}' must be an integer, got {value!r}")
    return value


def _check_keys(obj, required, where, optional=()):
    missing = [k for k in required if k not in obj]
    if missing:
        raise DatasetParseError(f"{where}: missing field(s) {', '.join(repr(k) for k in missing)}")
    unknown = sorted(set(obj) - set(required) - set(optional))
    if unknown:
        raise DatasetParseError(f"{where}: unknown field(s) {', '.join(repr(k) for k in unknown)}")


def geometry_from_dict(obj, where="geometry"):
    _check_keys(obj, GEOMETRY_FIELDS, where)
    return CavityGeometry(**{k: _number(obj, k, where) for k in GEOMETRY_FIELDS})


def load_geometry(path=None):
    """Read a geometry config; ``None`` gives the packaged 51 GHz cavity."""
    path = path or reference_geometry_path()
    return geometry_from_dict(_load_json_object(path), str(path))


def design_from_dict(obj, where="design"):
    _check_keys(obj, DESIGN_FIELDS[:-1], where, optional=("seed",))
    atts = obj["attenuations_db"]
    if not isinstance(atts, list) or not all(
        isinstance(a, (int, float)) and not isinstance(a, bool) for a in atts
    ):
        raise DatasetParseError(f"{where}: field 'attenuations_db' must be a list of numbers")
    seed = obj.get("seed")
    if seed is not None:
        seed = _integer(obj, "seed", where)
        if not 0 <= seed < 2**64:
            raise InvalidDesign(f"{where}: seed must be an unsigned 64-bit integer")
    return SimulationDesign(
        tc_s=_number(obj, "tc_s", where),
        u0=_number(obj, "u0", where),
        p_background=_number(obj, "p_background", where),
        p_saturated=_number(obj, "p_saturated", where),
        attenuations_db=tuple(float(a) for a in atts),
        t_start_s=_number(obj, "t_start_s", where),
        t_end_s=_number(obj, "t_end_s", where),
        n_points=_integer(obj, "n_points", where),
        shots=_integer(obj, "shots", where),
        seed=seed,
    )


def design_to_dict(design):
    return {
        "tc_s": design.tc_s,
        "u0": design.u0,
        "p_background": design.p_background,
        "p_saturated": design.p_saturated,
        "attenuations_db": list(design.attenuations_db),
        "t_start_s": design.t_start_s,
        "t_end_s": design.t_end_s,
        "n_points": design.n_points,
        "shots": design.shots,
        "seed": design.seed,
    }


def load_design(path=None):
    path = path or reference_design_path()
    return design_from_dict(_load_json_object(path), str(path))


def _csv_rows(text, header, optional_last=False, where="csv"):
    reader = csv.reader(io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise DatasetParseError(f"{where}: empty file", 1) from None
    first = [h.strip() for h in first]
    allowed = (list(header), list(header[:-1])) if optional_last else (list(header),)
    if first not in allowed:
        raise DatasetParseError(
            f"{where}: expected header {','.join(header)}, got {','.join(first)}", 1
        )
    ncol = len(first)
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != ncol:
            raise DatasetParseError(f"{where}: expected {ncol} columns, got {len(row)}", line)
        yield line, [c.strip() for c in row]


def _parse_float(text, name, line, where):
    try:
        value = float(text)
    except ValueError:
        raise DatasetParseError(f"{where}: {name} is not a number: {text!r}", line) from None
    if not math.isfinite(value):
        raise DatasetParseError(f"{where}: {name} is not finite: {text!r}", line)
    return value


def _parse_int(text, name, line, where):
    try:
        return int(text)
    except ValueError:
        raise DatasetParseError(f"{where}: {name} is not an integer: {text!r}", line) from None


def _read_text(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return fh.read()


def parse_ringdown_csv(text, where="ringdown csv"):
    groups = {}
    for line, (t, att, det, tot) in _csv_rows(text, RINGDOWN_HEADER, where=where):
        t = _parse_float(t, "time_s", line, where)
        att = _parse_float(att, "attenuation_db", line, where)
        det = _parse_int(det, "detected", line, where)
        tot = _parse_int(tot, "total", line, where)
        if t < 0 or att < 0:
            raise DatasetParseError(f"{where}: negative time or attenuation", line)
        if tot <= 0 or det < 0 or det > tot:
            raise DatasetParseError(f"{where}: need 0 <= detected <= total, total > 0", line)
        rows = groups.setdefault(att, {})
        if t in rows:
            raise DatasetParseError(
                f"{where}: duplicate time {t!r} for attenuation {att!r} dB", line
            )
        rows[t] = (det, tot)
    if not groups:
        raise DatasetParseError(f"{where}: no data rows")
    curves = []
    for att, rows in groups.items():
        times = sorted(rows)
        curves.append(RingdownCurve(
            att, times, [rows[t][0] for t in times], [rows[t][1] for t in times]
        ))
    return RingdownDataset(curves)


def read_ringdown_csv(path):
    return parse_ringdown_csv(_read_text(path), str(path))


def format_ringdown_csv(data):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(RINGDOWN_HEADER)
    for c in data.curves:
        for t, d, n in zip(c.time_s.tolist(), c.detected.tolist(), c.total.tolist()):
            writer.writerow([repr(float(t)), repr(c.attenuation_db), d, n])
    return out.getvalue()


def write_ringdown_csv(data, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_ringdown_csv(data))


def parse_thermal_csv(text, where="thermal csv"):
    points = []
    seen = {}
    for line, row in _csv_rows(text, THERMAL_HEADER, optional_last=True, where=where):
        temp = _parse_float(row[0], "temperature_k", line, where)
        tc = _parse_float(row[1], "tc_s", line, where)
        err = None
        if len(row) == 3 and row[2] != "":
            err = _parse_float(row[2], "tc_err_s", line, where)
            if err <= 0:
                raise DatasetParseError(f"{where}: tc_err_s must be > 0", line)
        if temp <= 0 or tc <= 0:
            raise DatasetParseError(f"{where}: temperature_k and tc_s must be > 0", line)
        if temp in seen:
            raise DatasetParseError(
                f"{where}: duplicate temperature {temp!r} K (first on line {seen[temp]})", line
            )
        seen[temp] = line
        points.append(ThermalPoint(temp, tc, err))
    if not points:
        raise DatasetParseError(f"{where}: no data rows")
    return ThermalDataset(points)


def read_thermal_csv(path):
    return parse_thermal_csv(_read_text(path), str(path))


def format_thermal_csv(data):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    with_err = any(p.tc_err_s is not None for p in data.points)
    writer.writerow(THERMAL_HEADER if with_err else THERMAL_HEADER[:2])
    for p in data.points:
        row = [repr(float(p.temperature_k)), repr(float(p.tc_s))]
        if with_err:
            row.append("" if p.tc_err_s is None else repr(float(p.tc_err_s)))
        writer.writerow(row)
    return out.getvalue()


def write_thermal_csv(data, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_thermal_csv(data))


def format_samples_csv(header, columns):
    """Plot-ready samples: one header line, then one row per sample."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([repr(float(v)) for v in np.asarray(row, dtype=float)])
    return out.getvalue()
