"""Serialization: binary tensor files, PGM abundance maps, JSON configs,
scene directories and CSV traces.

Tensor file layout (all little-endian)::

    8 bytes   magic  b"ETNSR\\0\\0\\1"
    u32       order N
    N x u64   extents
    f64 ...   row-major payload, prod(extents) values
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import struct
from pathlib import Path

import numpy as np

from .extrapolation import ExtrapConfig
from .solver import EntfConfig

MAGIC = b"ETNSR\x00\x00\x01"
_U64_MAX = 2**64 - 1

SCENE_FILES = {
    "endmembers": "endmembers.etnsr",
    "abundances": "abundances.etnsr",
    "clean": "clean.etnsr",
    "noisy": "noisy.etnsr",
}
TRACE_HEADER = ("iter", "objective", "rel_change_x", "rel_change_y")
CYCLE_HEADER = ("cycle", "iter", "residual_x", "residual_y", "accepted")


class TensorFormatError(ValueError):
    """A tensor file is malformed."""


class BadMagicError(TensorFormatError):
    pass


class TruncatedPayloadError(TensorFormatError):
    pass


class ExtentOverflowError(TensorFormatError):
    pass


class ConfigError(ValueError):
    """A config document has unknown keys or invalid values."""


# ---------------------------------------------------------------- tensors


def encode_tensor(t) -> bytes:
    t = np.asarray(t, dtype=np.float64)
    head = MAGIC + struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}Q", *t.shape)
    return head + np.ascontiguousarray(t, dtype="<f8").tobytes(order="C")


def decode_tensor(buf: bytes, name: str = "<buffer>") -> np.ndarray:
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{name}: bad magic, not a tensor file")
    pos = len(MAGIC)
    if len(buf) < pos + 4:
        raise TruncatedPayloadError(f"{name}: truncated payload (header ends before the order field)")
    (order,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if len(buf) < pos + 8 * order:
        raise TruncatedPayloadError(f"{name}: truncated payload (header ends inside the extents)")
    extents = struct.unpack_from(f"<{order}Q", buf, pos)
    pos += 8 * order
    count = 1
    for e in extents:
        count *= e
        if count * 8 > _U64_MAX:
            raise ExtentOverflowError(f"{name}: extent overflow, {extents} exceeds 64-bit byte count")
    need = count * 8
    have = len(buf) - pos
    if have < need:
        raise TruncatedPayloadError(f"{name}: truncated payload, expected {need} bytes, found {have}")
    if have > need:
        raise TensorFormatError(f"{name}: {have - need} trailing bytes after payload")
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=pos)
    return data.astype(np.float64).reshape(extents)


def write_tensor(path, t) -> None:
    Path(path).write_bytes(encode_tensor(t))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes(), str(path))


# ---------------------------------------------------------------- images


def normalize_slice(s) -> np.ndarray:
    """Min-max scale to 0..255 as uint8; a constant slice becomes 128."""
    s = np.asarray(s, dtype=np.float64)
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        return np.full(s.shape, 128, dtype=np.uint8)
    return np.rint((s - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(path, img) -> None:
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError(f"PGM image must be 2-D, got shape {img.shape}")
    # rows are the second spatial mode so that image width = J
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: incomplete PGM header")
        fields.append(buf[start:pos])
    pos += 1
    if fields[0] != b"P5" or int(fields[3]) != 255:
        raise ValueError(f"{path}: only 8-bit binary PGM (P5, maxval 255) is supported")
    w, h = int(fields[1]), int(fields[2])
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h, offset=pos)
    return data.reshape(h, w).copy()


def write_abundance_maps(y, out_dir) -> list:
    """One ``map_<idx>.pgm`` per abundance slice, each normalized on its own.

    Pixel ``(j, k)`` of slice ``i`` lands at image row ``k``, column ``j``.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 3:
        raise ValueError(f"abundances must be r x J x K, got shape {y.shape}")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise ValueError("abundances must be finite and nonnegative")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(y.shape[0]):
        p = out / f"map_{i}.pgm"
        write_pgm(p, normalize_slice(y[i]).T)
        paths.append(p)
    return paths


# ---------------------------------------------------------------- configs


@dataclasses.dataclass
class SceneParams:
    bands: int = 16
    width: int = 12
    height: int = 12
    endmembers: int = 3
    snr: float | None = None
    seed: int = 0
    endmember_family: str = "smooth"
    abundance_family: str = "dirichlet"


@dataclasses.dataclass
class RunConfig:
    """Everything a run needs: solver, extrapolation and scene settings.

    The solver section may omit ``r``; it is then taken from the command
    line or the scene's endmember count.
    """

    method: str = "entf"
    solver: dict = dataclasses.field(default_factory=dict)
    extrapolation: dict = dataclasses.field(default_factory=dict)
    scene: SceneParams = dataclasses.field(default_factory=SceneParams)


def _field_names(cls) -> set:
    return {f.name for f in dataclasses.fields(cls)}


def _reject_unknown(section: str, given: dict, allowed: set) -> None:
    extra = sorted(set(given) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(extra)}")


def parse_run_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be an object")
    _reject_unknown("config", doc, {"method", "solver", "extrapolation", "scene"})
    solver = dict(doc.get("solver") or {})
    extrap = dict(doc.get("extrapolation") or {})
    scene = dict(doc.get("scene") or {})
    _reject_unknown("solver", solver, _field_names(EntfConfig))
    _reject_unknown("extrapolation", extrap, _field_names(ExtrapConfig) - {"method"})
    _reject_unknown("scene", scene, _field_names(SceneParams))
    method = doc.get("method", "entf")
    if method not in ("entf", "entf-rre", "entf-tet"):
        raise ConfigError(f"unknown method {method!r}")
    return RunConfig(method=method, solver=solver, extrapolation=extrap, scene=SceneParams(**scene))


def load_run_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from exc
    return parse_run_config(doc)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def dump_json(path, doc) -> None:
    """Deterministic JSON (non-finite floats become null)."""
    Path(path).write_text(json.dumps(_jsonable(doc), indent=2) + "\n")


def run_config_document(method: str, solver: EntfConfig, extrap: ExtrapConfig | None, scene=None) -> dict:
    doc = {"method": method, "solver": dataclasses.asdict(solver)}
    if extrap is not None:
        e = dataclasses.asdict(extrap)
        e.pop("method")
        doc["extrapolation"] = e
    if scene is not None:
        doc["scene"] = dataclasses.asdict(scene)
    return doc


# ---------------------------------------------------------------- scenes


def save_scene(scene, out_dir, params: SceneParams | None = None) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for key, fname in SCENE_FILES.items():
        write_tensor(out / fname, getattr(scene, key))
    manifest = {
        "kind": "scene",
        "files": dict(SCENE_FILES),
        "shape": list(scene.clean.shape),
        "endmembers": int(scene.endmembers.shape[1]),
        "seed": scene.seed,
        "target_snr_db": params.snr if params is not None else None,
        "realized_snr_db": scene.snr_db,
    }
    dump_json(out / "manifest.json", manifest)
    return manifest


def load_scene_tensors(scene_dir) -> dict:
    d = Path(scene_dir)
    return {key: read_tensor(d / fname) for key, fname in SCENE_FILES.items()}


# ---------------------------------------------------------------- traces


def write_trace_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for it, obj, rx, ry in rows:
            w.writerow([it, repr(float(obj)), repr(float(rx)), repr(float(ry))])


def read_trace_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise ValueError(f"{path}: expected header {','.join(TRACE_HEADER)}")
    return [(int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in rows[1:]]


def write_cycles_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CYCLE_HEADER)
        for cycle, it, rx, ry, ok in rows:
            w.writerow([cycle, it, repr(float(rx)), repr(float(ry)), int(bool(ok))])


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise PermissionError(f"{p}: directory is not writable")
    return p
