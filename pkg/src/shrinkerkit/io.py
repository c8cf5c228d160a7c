"""Surface CSV files, deterministic JSON verdicts and flow-trace directories.

Surface files start with one header line::

    # kind=profile, n=2, closed=0, endA=axis, endB=cone:<slope>:<radius>, orientation=1

followed by ``x,r`` (profiles) or ``x,y`` (planar curves) rows. Floats are
written with 17 significant digits, so files round-trip exactly.
"""
import json
import math
import os
from pathlib import Path

import numpy as np

from .geometry import End, PlanarCurve, ProfileCurve, geometric_data

FLOAT_FMT = "%.17g"


class MalformedFile(ValueError):
    """A surface file, trace directory or manifest cannot be parsed."""


# ---------------------------------------------------------------------------
# surfaces


def _curve(obj):
    return obj.curve if hasattr(obj, "curve") and obj.curve is not None else obj


def surface_header(curve):
    curve = _curve(curve)
    if isinstance(curve, ProfileCurve):
        ends = (curve.end_a.token(), curve.end_b.token())
        closed = 0
    else:
        ends = ("none", "none")
        closed = int(curve.closed)
    return (f"# kind={curve.kind}, n={curve.n}, closed={closed}, endA={ends[0]}, "
            f"endB={ends[1]}, orientation={curve.orientation}")


def write_surface(path, curve):
    """Write a planar or profile curve (or a sample set's curve) as CSV."""
    curve = _curve(curve)
    lines = [surface_header(curve)]
    lines += [f"{FLOAT_FMT % a},{FLOAT_FMT % b}" for a, b in curve.nodes]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def parse_header(line):
    if not line.startswith("#"):
        raise MalformedFile("missing '# kind=...' header line")
    fields = {}
    for part in line[1:].split(","):
        if "=" not in part:
            raise MalformedFile(f"bad header field {part.strip()!r}")
        k, v = part.split("=", 1)
        fields[k.strip()] = v.strip()
    for k in ("kind", "n", "closed", "endA", "endB"):
        if k not in fields:
            raise MalformedFile(f"header lacks {k!r}")
    return fields


def read_surface(path):
    """Read a surface CSV into a PlanarCurve or ProfileCurve.

    Raises
    ------
    MalformedFile
    """
    try:
        text = Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as e:
        raise MalformedFile(f"cannot read {path}: {e}") from e
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MalformedFile(f"{path} is empty")
    h = parse_header(lines[0])
    try:
        rows = [tuple(float(v) for v in ln.split(",")) for ln in lines[1:]]
        P = np.array(rows, dtype=float)
        orientation = int(h.get("orientation", 1))
        if P.ndim != 2 or P.shape[1] != 2:
            raise ValueError("rows must have two columns")
        if not np.all(np.isfinite(P)):
            raise ValueError("non-finite coordinate")
        if h["kind"] == "profile":
            return ProfileCurve(P, End.parse(h["endA"]), End.parse(h["endB"]), orientation)
        if h["kind"] == "planar":
            return PlanarCurve(P, closed=h["closed"] in ("1", "true", "True"),
                               orientation=orientation)
    except ValueError as e:
        raise MalformedFile(f"{path}: {e}") from e
    raise MalformedFile(f"{path}: unknown kind {h['kind']!r}")


def write_series(path, columns):
    """Write named numeric columns (equal length) as a CSV with a header row."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    lines = [",".join(names)] + [",".join(FLOAT_FMT % v for v in row) for row in data]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


# ---------------------------------------------------------------------------
# JSON


def plain(obj):
    """Convert numpy scalars and arrays, tuples and dataclass-like objects to JSON types."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "as_dict"):
        return plain(obj.as_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _float(x):
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = FLOAT_FMT % x
    if all(c not in s for c in ".eEn"):
        s += ".0"
    return s


def _encode(obj, indent, level):
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _float(obj)
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[" + ",".join(pad + _encode(v, indent, level + 1) for v in obj) + end + "]"
    if not obj:
        return "{}"
    items = sorted(obj.items())
    return "{" + ",".join(pad + json.dumps(k) + ": " + _encode(v, indent, level + 1)
                          for k, v in items) + end + "}"


def dumps(obj, indent=1):
    """Deterministic JSON: sorted keys, floats with 17 significant digits."""
    return _encode(plain(obj), indent, 0) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="ascii")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="ascii"))
    except (OSError, ValueError) as e:
        raise MalformedFile(f"cannot read JSON {path}: {e}") from e


# ---------------------------------------------------------------------------
# flow traces


def write_trace(directory, trace):
    """One surface CSV per saved slice plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for k, S in enumerate(trace.surfaces):
        name = f"slice_{k:04d}.csv"
        write_surface(d / name, S)
        files.append(name)
    manifest = {
        "times": list(map(float, trace.times)),
        "files": files,
        "status": trace.status,
        "T_est": float(trace.T_est),
        "x0_est": list(trace.x0_est) if trace.x0_est is not None else None,
        "steps": int(trace.steps),
        "controller": trace.controller.as_dict(),
    }
    write_json(d / "manifest.json", manifest)
    return d / "manifest.json"


def read_trace(directory):
    """Load a trace directory written by :func:`write_trace`.

    Raises
    ------
    MalformedFile
    """
    from .flow import Controller, FlowTrace

    d = Path(directory)
    m = read_json(d / "manifest.json")
    try:
        times, files = m["times"], m["files"]
    except (KeyError, TypeError) as e:
        raise MalformedFile(f"manifest lacks {e}") from e
    if len(times) != len(files):
        raise MalformedFile("manifest times and files differ in length")
    surfaces = [geometric_data(read_surface(os.path.join(d, f))) for f in files]
    ctrl = m.get("controller") or {}
    try:
        controller = Controller(**ctrl)
    except TypeError as e:
        raise MalformedFile(f"bad controller in manifest: {e}") from e
    x0 = m.get("x0_est")
    return FlowTrace(list(map(float, times)), surfaces, controller, m.get("status", "running"),
                     float(m.get("T_est", float("nan"))), tuple(x0) if x0 is not None else None,
                     steps=int(m.get("steps", 0)))
