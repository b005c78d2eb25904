"""Self-describing containers: one JSON header line followed by raw little-endian arrays.

The header lists every array (name, dtype, shape, byte offset) and a sha256
of the payload, so truncated or edited files are rejected on load.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .beta import TwistorMap
from .geometry import metric_from_spec
from .polar import PolarGrid
from .transforms import BoundaryField, BoundaryGrid, ModeField

MAGIC = "twistor-container"
VERSION = 1


class ContainerError(ValueError):
    """Raised for unreadable, truncated or inconsistent container files."""


def _fmt(x):
    """Round-trippable, deterministic float formatting for JSON output."""
    if isinstance(x, dict):
        return {str(k): _fmt(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_fmt(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.ndarray):
        return _fmt(x.tolist())
    return x


def _iter(o, indent, sort_keys, level=0):
    nl = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," if indent else ", "
    if isinstance(o, dict):
        if not o:
            yield "{}"
            return
        items = sorted(o.items()) if sort_keys else o.items()
        parts = []
        for k, v in items:
            parts.append(json.dumps(str(k)) + ": " + "".join(_iter(v, indent, sort_keys, level + 1)))
        yield "{" + nl + (sep + nl if indent else sep).join(parts) + end + "}"
    elif isinstance(o, list):
        if not o:
            yield "[]"
            return
        yield "[" + ", ".join("".join(_iter(v, None, sort_keys, level + 1)) for v in o) + "]"
    elif isinstance(o, bool) or o is None:
        yield json.dumps(o)
    elif isinstance(o, float):
        yield "%.17g" % o if np.isfinite(o) else json.dumps(o)
    elif isinstance(o, int):
        yield str(o)
    else:
        yield json.dumps(o)


def dumps_json(obj, indent: int | None = 2) -> str:
    """JSON text with every float written to 17 significant digits and sorted keys."""
    return "".join(_iter(_fmt(obj), indent, True))


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_json(obj) + "\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["%.17g" % v if isinstance(v, (float, np.floating)) else v for v in row])


# ----------------------------------------------------------------- container
def write_container(path, kind: str, meta: dict, arrays: dict) -> None:
    blobs, table, off = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        a = a.astype(a.dtype.newbyteorder("<"))
        raw = a.tobytes()
        table.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": off,
                      "nbytes": len(raw)})
        blobs.append(raw)
        off += len(raw)
    payload = b"".join(blobs)
    header = {"magic": MAGIC, "version": VERSION, "kind": kind, "meta": meta, "arrays": table,
              "sha256": hashlib.sha256(payload).hexdigest()}
    with open(path, "wb") as fh:
        fh.write(dumps_json(header, indent=None).encode() + b"\n")
        fh.write(payload)


def read_container(path, kind: str | None = None) -> tuple[dict, dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ContainerError(f"cannot read {path}: {exc}") from exc
    cut = data.find(b"\n")
    if cut < 0:
        raise ContainerError("missing header line")
    try:
        header = json.loads(data[:cut].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"malformed header: {exc}") from exc
    if not isinstance(header, dict) or header.get("magic") != MAGIC:
        raise ContainerError("not a twistor container")
    if kind is not None and header.get("kind") != kind:
        raise ContainerError(f"expected a {kind} container, found {header.get('kind')!r}")
    payload = data[cut + 1:]
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise ContainerError("payload checksum mismatch (file truncated or corrupted)")
    arrays = {}
    try:
        for entry in header["arrays"]:
            raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
            arrays[entry["name"]] = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
    except (KeyError, TypeError, ValueError) as exc:
        raise ContainerError(f"inconsistent array table: {exc}") from exc
    return header, arrays


def _grid_meta(g: PolarGrid) -> dict:
    return {"R": g.R, "n_r": g.n_r, "n_theta": g.n_theta}


def _grid_from(meta: dict) -> PolarGrid:
    return PolarGrid(float(meta["R"]), int(meta["n_r"]), int(meta["n_theta"]))


def save_mode_field(path, f: ModeField, extra: dict | None = None) -> None:
    meta = {"grid": _grid_meta(f.grid), "k_values": list(f.k_values), "weight": f.weight, **(extra or {})}
    write_container(path, "ModeField", meta, {"coeffs": f.coeffs})


def load_mode_field(path) -> ModeField:
    h, a = read_container(path, "ModeField")
    m = h["meta"]
    try:
        return ModeField(_grid_from(m["grid"]), tuple(m["k_values"]), a["coeffs"], m["weight"])
    except (KeyError, ValueError) as exc:
        raise ContainerError(f"bad ModeField container: {exc}") from exc


def save_boundary_field(path, h: BoundaryField, extra: dict | None = None) -> None:
    meta = {"n_omega": h.bgrid.n_omega, "n_alpha": h.bgrid.n_alpha, **(extra or {})}
    write_container(path, "BoundaryField", meta, {"samples": h.samples})


def load_boundary_field(path) -> BoundaryField:
    hd, a = read_container(path, "BoundaryField")
    m = hd["meta"]
    try:
        return BoundaryField(BoundaryGrid(int(m["n_omega"]), int(m["n_alpha"])), a["samples"])
    except (KeyError, ValueError) as exc:
        raise ContainerError(f"bad BoundaryField container: {exc}") from exc


def save_twistor_map(path, tm: TwistorMap, extra: dict | None = None) -> None:
    meta = {
        "grid": _grid_meta(tm.grid), "k_max": tm.k_max, "provenance": tm.provenance,
        "metric": tm.metric_ref.spec if tm.metric_ref is not None else None,
        "k_even": list(tm.component0.k_values), "k_odd": list(tm.component1.k_values), **(extra or {}),
    }
    write_container(path, "TwistorMap", meta, {"component0": tm.component0.coeffs,
                                               "component1": tm.component1.coeffs})


def load_twistor_map(path) -> TwistorMap:
    h, a = read_container(path, "TwistorMap")
    m = h["meta"]
    try:
        g = _grid_from(m["grid"])
        c0 = ModeField(g, tuple(m["k_even"]), a["component0"])
        c1 = ModeField(g, tuple(m["k_odd"]), a["component1"])
        metric = metric_from_spec(m["metric"]) if m.get("metric") else None
        return TwistorMap(c0, c1, int(m["k_max"]), metric_ref=metric, provenance=m.get("provenance", "file"),
                          info={k: v for k, v in m.items() if k not in ("grid", "k_even", "k_odd")})
    except (KeyError, ValueError, TypeError) as exc:
        raise ContainerError(f"bad TwistorMap container: {exc}") from exc


__all__ = ["ContainerError", "dumps_json", "write_json", "write_csv", "write_container", "read_container",
           "save_mode_field", "load_mode_field", "save_boundary_field", "load_boundary_field",
           "save_twistor_map", "load_twistor_map"]
