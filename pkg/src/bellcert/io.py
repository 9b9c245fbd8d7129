"""JSON device files and certification reports.

Complex numbers are stored as ``[re, im]`` pairs. Python's float repr is
the shortest string that round-trips, so parse -> serialize -> parse is
exact.
"""
from __future__ import annotations

import datetime as _dt
import json
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .devices import DeviceRealization, ProjectorFamily, validate_device
from .engine import Refusal, SelfTestCertificate, Tolerances
from .errors import ValidationError
from .ideal import ANGLES, SETTINGS, Angle
from .linalg import BipartiteShape
from .statistics import DeviationReport, ProbabilityTable

SCHEMA_VERSION = 1


class DeviceFileError(ValidationError):
    pass


def _pairs(a: np.ndarray):
    a = np.asarray(a, dtype=complex)
    if a.ndim == 1:
        return [[float(z.real), float(z.imag)] for z in a]
    return [_pairs(row) for row in a]


def _complex(x, what: str) -> np.ndarray:
    try:
        arr = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as e:
        raise DeviceFileError(f"{what}: malformed numbers ({e})") from None
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise DeviceFileError(f"{what}: expected [re, im] pairs, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DeviceFileError(f"{what}: non-finite numbers")
    return arr[..., 0] + 1j * arr[..., 1]


def _plain(obj):
    """Turn numpy scalars/arrays and enums into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, Angle):
        return obj.tag
    return obj


def device_to_dict(d: DeviceRealization) -> dict[str, Any]:
    def fam(f: ProjectorFamily):
        return {a.tag: [_pairs(f.ops[a.index, 0]), _pairs(f.ops[a.index, 1])] for a in ANGLES}

    return {
        "schemaVersion": SCHEMA_VERSION,
        "dimA": d.shape.dim_a,
        "dimB": d.shape.dim_b,
        "psi": _pairs(d.psi),
        "famA": fam(d.fam_a),
        "famB": fam(d.fam_b),
        "provenance": _plain(d.provenance),
    }


def dumps_device(d: DeviceRealization) -> str:
    return json.dumps(device_to_dict(d), indent=1) + "\n"


def write_device(d: DeviceRealization, path) -> None:
    Path(path).write_text(dumps_device(d))


def device_from_dict(doc: dict[str, Any], validate: bool = True) -> DeviceRealization:
    if not isinstance(doc, dict):
        raise DeviceFileError("device file must hold a JSON object")
    version = doc.get("schemaVersion")
    if version != SCHEMA_VERSION:
        raise DeviceFileError(f"unsupported schemaVersion {version!r}")
    missing = [k for k in ("dimA", "dimB", "psi", "famA", "famB") if k not in doc]
    if missing:
        raise DeviceFileError(f"missing fields: {', '.join(missing)}")
    dim_a, dim_b = doc["dimA"], doc["dimB"]
    if not all(isinstance(v, int) and v >= 1 for v in (dim_a, dim_b)):
        raise DeviceFileError("dimA and dimB must be positive integers")
    psi = _complex(doc["psi"], "psi")
    if psi.shape != (dim_a * dim_b,):
        raise DeviceFileError(f"psi has shape {psi.shape}, expected ({dim_a * dim_b},)")

    fams = []
    for key, dim in (("famA", dim_a), ("famB", dim_b)):
        raw = doc[key]
        if not isinstance(raw, dict) or sorted(raw) != sorted(a.tag for a in ANGLES):
            raise DeviceFileError(f"{key} must map each of minus/zero/plus to two matrices")
        ops = np.empty((3, 2, dim, dim), dtype=complex)
        for a in ANGLES:
            pair = raw[a.tag]
            if not isinstance(pair, list) or len(pair) != 2:
                raise DeviceFileError(f"{key}[{a.tag}] must hold exactly two matrices")
            for x in (0, 1):
                m = _complex(pair[x], f"{key}[{a.tag}][{x}]")
                if m.shape != (dim, dim):
                    raise DeviceFileError(f"{key}[{a.tag}][{x}] has shape {m.shape}, expected ({dim}, {dim})")
                ops[a.index, x] = m
        fams.append(ProjectorFamily(ops))

    d = DeviceRealization(BipartiteShape(dim_a, dim_b), psi, fams[0], fams[1],
                          dict(doc.get("provenance") or {}))
    if validate:
        problems = validate_device(d)
        if problems:
            raise DeviceFileError("invalid device: " + "; ".join(map(str, problems)), problems)
    return d


def parse_device(path, max_dim: int | None = None) -> DeviceRealization:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise DeviceFileError(f"{path}: not valid JSON ({e})") from None
    if max_dim is not None and isinstance(doc, dict):
        dims = [doc.get("dimA"), doc.get("dimB")]
        if all(isinstance(v, int) for v in dims) and max(dims) > max_dim:
            raise DeviceFileError(f"{path}: side dimension {max(dims)} exceeds cap {max_dim}")
    return device_from_dict(doc)


# -- reports --------------------------------------------------------------------

def table_rows(real: ProbabilityTable, reference: ProbabilityTable, report: DeviationReport):
    rows = []
    for a in SETTINGS:
        for b in SETTINGS:
            rows.append({
                "a": a.label(),
                "b": b.label(),
                "p": real[a, b],
                "ideal": reference[a, b],
                "deviation": float(report.per_entry[a.angle.index, b.angle.index, a.outcome, b.outcome]),
            })
    return rows


def build_report(d: DeviceRealization, result: SelfTestCertificate | Refusal, tol: Tolerances,
                 source: str | None = None, timestamp: bool = True) -> dict[str, Any]:
    stages = result.stages
    gate = result.gate
    gate_doc = None
    if gate is not None:
        gate_doc = {
            "max_abs_deviation": gate.max_abs_deviation,
            "worst_entry": [gate.worst_entry[0].label(), gate.worst_entry[1].label()],
            "deviations": [{"a": a.label(), "b": b.label(), "deviation": v} for a, b, v in gate.entries()],
            "tol": gate.tol,
            "passed": gate.passed,
        }
    if isinstance(result, SelfTestCertificate):
        verdict = "certified"
        cert = {**result.residuals, "dim_e_a": result.dim_e_a, "dim_e_b": result.dim_e_b}
        refusal = None
    else:
        verdict = f"refused({result.stage})"
        cert = None
        refusal = {"stage": result.stage, "diagnostics": result.diagnostics}
    doc = {
        "tool": {"name": "bellcert", "version": __version__},
        "device": {"source": source, "dimA": d.shape.dim_a, "dimB": d.shape.dim_b,
                   "provenance": d.provenance},
        "tolerances": tol.as_dict(),
        "verdict": verdict,
        "gate": gate_doc,
        "propositions": stages.get("propositions"),
        "isomorphism": stages.get("isomorphism"),
        "extraction": stages.get("extraction"),
        "certificate": cert,
        "refusal": refusal,
    }
    if timestamp:
        doc["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return _plain(doc)


def dumps_report(doc: dict[str, Any]) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _fmt(x) -> str:
    return f"{x:.3e}" if isinstance(x, float) else str(x)


def render_report(doc: dict[str, Any]) -> str:
    """Human-readable summary derived from the machine-readable report."""
    lines = [f"verdict: {doc['verdict']}"]
    dev = doc["device"]
    lines.append(f"device: {dev.get('source') or '<memory>'} ({dev['dimA']}x{dev['dimB']})")
    tol = doc["tolerances"]
    lines.append("tolerances: " + ", ".join(f"{k}={_fmt(v)}" for k, v in tol.items()))
    gate = doc.get("gate")
    if gate:
        a, b = gate["worst_entry"]
        lines.append(f"stats gate: max |p - p_ideal| = {_fmt(gate['max_abs_deviation'])} at a={a} b={b}"
                     f" ({'pass' if gate['passed'] else 'FAIL'})")
    for section in ("propositions", "isomorphism", "extraction"):
        vals = doc.get(section)
        if vals:
            lines.append(f"{section}: " + ", ".join(f"{k}={_fmt(v)}" for k, v in vals.items()))
    cert = doc.get("certificate")
    if cert:
        lines.append(f"conditions: cond1={_fmt(cert['cond1'])} cond2={_fmt(cert['cond2'])} "
                     f"cond3={_fmt(cert['cond3'])}")
        lines.append(f"garbage dimensions: E_A={cert['dim_e_a']} E_B={cert['dim_e_b']}")
    ref = doc.get("refusal")
    if ref:
        lines.append(f"refused at stage '{ref['stage']}': "
                     + ", ".join(f"{k}={_fmt(v)}" for k, v in ref["diagnostics"].items()))
    return "\n".join(lines) + "\n"
