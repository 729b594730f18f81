"""JSON and CSV serialization of every public result type.

JSON documents have the shape ``{"metadata": {...}, "payload": <value>}``.
Dataclass instances encode as objects tagged with ``"__type__"``, arrays
as ``{"__ndarray__": dtype, "shape": [...], "data": [...]}`` and
non-finite floats as the strings ``"nan"``, ``"inf"`` and ``"-inf"`` so
that the output is strict JSON.  Floats are written with ``repr``, which
round-trips exactly.

CSV files start with ``# key: value`` metadata lines followed by a
header row.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import io as _io
import json
import math
import os
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .continuation import BranchCurve, FoldRecord, ScanConfig, StepConfig
from .energy import PdeFold
from .errors import SchemaViolation
from .genericity import GenericityReport, PerturbationSample, SampleOutcome, SymmetricPerturbation
from .problem import Point
from .singular_limit import ConvergenceTable, FlowConfig, FlowTrace, Jump, LimitConfig, LimitCurve, LimitSegment, ODEConfig
from .solve import NewtonConfig, ZeroSetSection
from .spectral import KernelPair, RankReport, TolPolicy
from .transversality import AugmentedPoint, CertTolerances, EnergyCertificate, TransversalityCertificate

_SPECIAL = {"nan": math.nan, "inf": math.inf, "-inf": -math.inf}

REGISTRY = {
    cls.__name__: cls
    for cls in (
        Point,
        KernelPair,
        RankReport,
        TolPolicy,
        CertTolerances,
        TransversalityCertificate,
        EnergyCertificate,
        AugmentedPoint,
        NewtonConfig,
        ZeroSetSection,
        StepConfig,
        FoldRecord,
        BranchCurve,
        ScanConfig,
        PerturbationSample,
        SymmetricPerturbation,
        SampleOutcome,
        GenericityReport,
        ODEConfig,
        FlowConfig,
        LimitConfig,
        FlowTrace,
        LimitSegment,
        Jump,
        LimitCurve,
        ConvergenceTable,
        PdeFold,
    )
}

CLASSIFICATIONS = ["Regular", "TransversalSingular", "NonTransversal"]


# -- encoding ---------------------------------------------------------------


def _float(x: float):
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def encode(obj):
    """Convert ``obj`` into plain JSON-compatible data."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(obj)
    if isinstance(obj, np.ndarray):
        if obj.dtype.kind == "f":
            data = [_float(v) for v in obj.ravel()]
        else:
            data = [encode(v) for v in obj.ravel().tolist()]
        return {"__ndarray__": str(obj.dtype), "shape": list(obj.shape), "data": data}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        name = type(obj).__name__
        if name not in REGISTRY:
            raise TypeError(f"{name} is not serializable")
        out = {"__type__": name}
        for f in dataclasses.fields(obj):
            out[f.name] = encode(getattr(obj, f.name))
        return out
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _decode_typed(value, annotation: str):
    if isinstance(value, dict):
        return decode(value)
    if isinstance(value, str) and "float" in annotation and value in _SPECIAL:
        return _SPECIAL[value]
    if isinstance(value, list):
        if annotation.startswith("tuple"):
            inner = annotation[len("tuple[") :] if annotation.startswith("tuple[") else ""
            return tuple(_decode_typed(v, inner) for v in value)
        inner = annotation[len("list[") :] if annotation.startswith("list[") else ""
        return [_decode_typed(v, inner) for v in value]
    return value


def decode(data):
    """Inverse of :func:`encode`."""
    if isinstance(data, dict):
        if "__ndarray__" in data:
            vals = [_SPECIAL.get(v, v) if isinstance(v, str) else v for v in data["data"]]
            return np.array(vals, dtype=data["__ndarray__"]).reshape(data["shape"])
        if "__type__" in data:
            cls = REGISTRY[data["__type__"]]
            kwargs = {}
            for f in dataclasses.fields(cls):
                if f.name in data:
                    kwargs[f.name] = _decode_typed(data[f.name], str(f.type))
            return cls(**kwargs)
        return {k: decode(v) for k, v in data.items()}
    if isinstance(data, list):
        return [decode(v) for v in data]
    return data


# -- schemas ------------------------------------------------------------------


def _field_schema(annotation: str) -> dict:
    a = annotation.replace(" ", "")
    optional = a.endswith("|None")
    base = a[: -len("|None")] if optional else a
    if base == "float":
        s = {"$ref": "#/$defs/float"}
    elif base == "int":
        s = {"type": "integer"}
    elif base == "str":
        s = {"type": "string"}
    elif base == "bool":
        s = {"type": "boolean"}
    elif base == "np.ndarray":
        s = {"$ref": "#/$defs/ndarray"}
    elif base == "dict":
        s = {"type": "object"}
    elif base.startswith(("tuple", "list")):
        s = {"type": "array"}
    elif base in REGISTRY:
        s = {"$ref": f"#/$defs/{base}"}
    else:
        s = {}
    if optional and s:
        return {"anyOf": [s, {"type": "null"}]}
    return s


def _class_schema(cls) -> dict:
    props = {"__type__": {"const": cls.__name__}}
    required = ["__type__"]
    for f in dataclasses.fields(cls):
        props[f.name] = _field_schema(str(f.type))
        if f.name == "classification":
            props[f.name] = {"enum": CLASSIFICATIONS}
        if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            required.append(f.name)
    return {"type": "object", "properties": props, "required": required, "additionalProperties": False}


def schema_bundle() -> dict:
    """JSON Schema of every serializable type (the ``--schema`` output)."""
    defs = {name: _class_schema(cls) for name, cls in sorted(REGISTRY.items())}
    defs["float"] = {"anyOf": [{"type": "number"}, {"enum": sorted(_SPECIAL)}]}
    defs["ndarray"] = {
        "type": "object",
        "properties": {
            "__ndarray__": {"type": "string"},
            "shape": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            "data": {"type": "array"},
        },
        "required": ["__ndarray__", "shape", "data"],
        "additionalProperties": False,
    }
    defs["metadata"] = {
        "type": "object",
        "properties": {
            "tool": {"type": "string"},
            "version": {"type": "string"},
            "seed": {"type": ["integer", "null"]},
            "tolerances": {"type": ["object", "null"]},
            "problem": {"type": ["string", "null"]},
            "problem_hash": {"type": ["string", "null"]},
            "timestamp": {"type": "string"},
        },
        "required": ["tool", "version", "timestamp"],
    }
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "transfold document",
        "type": "object",
        "properties": {"metadata": {"$ref": "#/$defs/metadata"}, "payload": {}},
        "required": ["metadata", "payload"],
        "$defs": defs,
    }


def _path_str(path) -> str:
    parts = ["$"]
    for p in path:
        parts.append(f"[{p}]" if isinstance(p, int) else f".{p}")
    return "".join(parts)


def validate(data, type_name: str | None = None) -> None:
    """Validate an encoded value (or a whole document) and raise :class:`SchemaViolation`."""
    bundle = schema_bundle()
    if type_name is None:
        schema = bundle
    else:
        if type_name not in REGISTRY:
            raise SchemaViolation(f"unknown type {type_name!r}", path="$.__type__")
        schema = {"$defs": bundle["$defs"], "$ref": f"#/$defs/{type_name}"}
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), str(e.absolute_path)))
    if errors:
        err = max(errors, key=lambda e: len(e.absolute_path))
        if err.validator == "required":
            missing = err.message.split("'")[1] if "'" in err.message else ""
            path = _path_str(list(err.absolute_path) + ([missing] if missing else []))
        elif err.validator == "additionalProperties":
            path = _path_str(list(err.absolute_path))
        else:
            path = _path_str(err.absolute_path)
        raise SchemaViolation(err.message, path=path)


def _validate_tree(data) -> None:
    """Validate every tagged object inside ``data`` against its type schema."""
    if isinstance(data, dict):
        if "__type__" in data:
            validate(data, data["__type__"])
            return
        for v in data.values():
            _validate_tree(v)
    elif isinstance(data, list):
        for v in data:
            _validate_tree(v)


# -- documents ----------------------------------------------------------------


def make_metadata(seed: int | None = None, tolerances=None, problem=None, **extra) -> dict:
    """Metadata header; the timestamp honours ``SOURCE_DATE_EPOCH`` when set."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (
        _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc)
        if epoch
        else _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0)
    )
    tol = tolerances.as_dict() if hasattr(tolerances, "as_dict") else tolerances
    meta = {
        "tool": "transfold",
        "version": __version__,
        "seed": None if seed is None else int(seed),
        "tolerances": tol,
        "problem": getattr(problem, "name", problem),
        "problem_hash": problem.digest() if hasattr(problem, "digest") else None,
        "timestamp": now.isoformat(),
    }
    meta.update({k: encode(v) for k, v in extra.items()})
    return meta


def to_json(obj, metadata: dict | None = None) -> str:
    doc = {"metadata": metadata if metadata is not None else make_metadata(), "payload": encode(obj)}
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def from_json(text: str, expected_type: str | None = None):
    """Parse a document (or bare payload), validate it, and rebuild the object."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid JSON ({exc.msg} at line {exc.lineno})", path="$") from None
    if isinstance(data, dict) and "payload" in data and "metadata" in data:
        validate(data)
        payload = data["payload"]
    else:
        payload = data
    if expected_type is not None:
        if not isinstance(payload, dict) or payload.get("__type__") != expected_type:
            raise SchemaViolation(f"expected {expected_type}", path="$.__type__")
    _validate_tree(payload)
    try:
        return decode(payload)
    except (TypeError, ValueError, KeyError) as exc:
        raise SchemaViolation(f"cannot rebuild object ({exc})", path="$") from None


def read_metadata(text: str) -> dict:
    return json.loads(text)["metadata"]


def serialize(obj, metadata: dict | None = None) -> str:
    return to_json(obj, metadata)


def deserialize(text: str, expected_type: str | None = None):
    return from_json(text, expected_type)


def write_json(path, obj, metadata: dict | None = None) -> Path:
    path = Path(path)
    path.write_text(to_json(obj, metadata), encoding="utf-8")
    return path


def read_json(path, expected_type: str | None = None):
    return from_json(Path(path).read_text(encoding="utf-8"), expected_type)


def strip_timestamp(text: str) -> str:
    """Drop timestamp lines/fields so outputs can be compared byte-for-byte."""
    return "\n".join(line for line in text.splitlines() if "timestamp" not in line)


# -- equality -------------------------------------------------------------------


def deep_equal(a, b, rtol: float = 1e-15) -> bool:
    """Structural equality; floats compared to ``rtol``, NaN equal to NaN."""
    if dataclasses.is_dataclass(a) and not isinstance(a, type):
        if type(a) is not type(b):
            return False
        return all(deep_equal(getattr(a, f.name), getattr(b, f.name), rtol) for f in dataclasses.fields(a))
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        a, b = np.asarray(a), np.asarray(b)
        if a.shape != b.shape:
            return False
        if a.dtype.kind in "fc" or b.dtype.kind in "fc":
            return bool(np.all((a == b) | (np.isnan(a) & np.isnan(b)) | np.isclose(a, b, rtol=rtol, atol=0.0)))
        return bool(np.array_equal(a, b))
    if isinstance(a, (float, np.floating)) or isinstance(b, (float, np.floating)):
        if not isinstance(b, (int, float, np.number)) or not isinstance(a, (int, float, np.number)):
            return False
        a, b = float(a), float(b)
        if math.isnan(a) or math.isnan(b):
            return math.isnan(a) and math.isnan(b)
        return a == b or abs(a - b) <= rtol * max(abs(a), abs(b))
    if isinstance(a, (list, tuple)):
        return isinstance(b, (list, tuple)) and len(a) == len(b) and all(deep_equal(x, y, rtol) for x, y in zip(a, b))
    if isinstance(a, dict):
        return isinstance(b, dict) and a.keys() == b.keys() and all(deep_equal(a[k], b[k], rtol) for k in a)
    return a == b


# -- CSV --------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _open_out(path_or_file):
    if hasattr(path_or_file, "write"):
        return path_or_file, False
    return open(path_or_file, "w", newline="", encoding="utf-8"), True


def _write_csv(path_or_file, header, rows, metadata):
    fh, close = _open_out(path_or_file)
    try:
        for key in sorted(metadata or {}):
            fh.write(f"# {key}: {json.dumps(metadata[key], sort_keys=True)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    finally:
        if close:
            fh.close()


def read_csv(path_or_text) -> tuple[dict, list[str], list[list[str]]]:
    """Return ``(metadata, header, rows)``; accepts a path or the file text."""
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text(encoding="utf-8")
    else:
        text = path_or_text
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = json.loads(value)
        elif line:
            body.append(line)
    rows = list(csv.reader(_io.StringIO("\n".join(body))))
    return meta, rows[0], rows[1:]


def write_curve_csv(curve: BranchCurve, path_or_file, metadata: dict | None = None) -> None:
    """Columns ``s, t, x1..xn, tau_x1..tau_xn, tau_t, class``."""
    n = curve.x.shape[1]
    header = ["s", "t"] + [f"x{i + 1}" for i in range(n)] + [f"tau_x{i + 1}" for i in range(n)] + ["tau_t", "class"]
    rows = (
        [curve.arclength[k], curve.t[k], *curve.x[k], *curve.tangents[k], curve.classifications[k]]
        for k in range(len(curve.t))
    )
    _write_csv(path_or_file, header, rows, metadata)


def read_curve_csv(path_or_text) -> BranchCurve:
    meta, header, rows = read_csv(path_or_text)
    n = sum(1 for h in header if h.startswith("x"))
    arr = np.array([[float(v) for v in r[:-1]] for r in rows]).reshape(len(rows), 2 + 2 * n + 1)
    return BranchCurve(
        x=arr[:, 2 : 2 + n],
        t=arr[:, 1],
        tangents=arr[:, 2 + n :],
        classifications=[r[-1] for r in rows],
        arclength=arr[:, 0],
        termination=meta.get("termination", ""),
    )


def write_trace_csv(trace: FlowTrace, path_or_file, metadata: dict | None = None) -> None:
    """Columns ``t, x1..xn`` (``s`` instead of ``t`` for the inner flow)."""
    n = trace.states.shape[1]
    header = ["s" if trace.inner_flow else "t"] + [f"x{i + 1}" for i in range(n)]
    rows = ([t, *x] for t, x in zip(trace.times, trace.states))
    _write_csv(path_or_file, header, rows, metadata)


def read_trace_csv(path_or_text) -> tuple[np.ndarray, np.ndarray]:
    _, header, rows = read_csv(path_or_text)
    arr = np.array([[float(v) for v in r] for r in rows]).reshape(len(rows), len(header))
    return arr[:, 0], arr[:, 1:]


def write_section_csv(section: ZeroSetSection, path_or_file, metadata: dict | None = None) -> None:
    """Columns ``t, root_index, x1..xn, residual``."""
    n = len(section.zeros[0]) if section.zeros else 0
    header = ["t", "root_index"] + [f"x{i + 1}" for i in range(n)] + ["residual"]
    rows = ([section.t, str(k), *z, r] for k, (z, r) in enumerate(zip(section.zeros, section.residuals)))
    _write_csv(path_or_file, header, rows, metadata)


def read_section_csv(path_or_text) -> list[tuple[float, np.ndarray, float]]:
    _, _, rows = read_csv(path_or_text)
    return [(float(r[0]), np.array([float(v) for v in r[2:-1]]), float(r[-1])) for r in rows]


def write_limit_manifest(limit: LimitCurve, directory, stem: str = "limit", metadata: dict | None = None) -> Path:
    """Write segment and jump-trace CSVs plus a JSON manifest referencing them."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"t_span": list(limit.t_span), "segments": [], "jumps": [], "hypotheses": encode(limit.hypotheses)}
    for k, seg in enumerate(limit.segments):
        name = f"{stem}_segment{k}.csv"
        write_curve_csv(seg.branch, directory / name, metadata)
        manifest["segments"].append({"file": name, "stability": seg.stability})
    for k, jump in enumerate(limit.jumps):
        name = f"{stem}_jump{k}.csv"
        write_trace_csv(jump.inner_trace, directory / name, metadata)
        manifest["jumps"].append(
            {
                "t_jump": _float(jump.t_jump),
                "x_minus": [_float(v) for v in jump.x_minus],
                "x_plus": [_float(v) for v in jump.x_plus],
                "inner_trace": name,
                "seed_sign": jump.seed_sign,
            }
        )
    path = directory / f"{stem}.json"
    doc = {"metadata": metadata or make_metadata(), "payload": manifest}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path
