"""Binary model archives: a JSON manifest followed by a float64 payload.

Layout::

    b"GAITSHAP\\n"                magic
    8-byte little-endian length   of the manifest
    manifest                      UTF-8 JSON, keys sorted
    payload                       contiguous little-endian float64 tensors

The archive holds no timestamps, so saving the same model twice gives
identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CorruptArchive, ShapeMismatch, VersionMismatch
from .nn.model import ModelParams, ModelSpec, init_params

MAGIC = b"GAITSHAP\n"
FORMAT_VERSION = 1
_LEN = struct.Struct("<Q")


def _manifest(spec: ModelSpec, params: ModelParams, training_config, metrics_summary):
    index, offset = [], 0
    for role, tensors in (("weight", params.weights), ("state", params.state)):
        for name, arr in tensors.items():
            n = int(np.asarray(arr).size) * 8
            index.append({"name": name, "role": role, "shape": list(np.shape(arr)),
                          "byte_offset": offset, "byte_length": n})
            offset += n
    return {
        "format_version": FORMAT_VERSION,
        "model_kind": spec.kind,
        "spec": spec.to_dict(),
        "training_config": training_config or {},
        "metrics_summary": metrics_summary or {},
        "weight_index": index,
    }, offset


def _check_against_spec(spec: ModelSpec, params: ModelParams) -> None:
    ref = init_params(spec, 0)
    for section, got, want in (("weights", params.weights, ref.weights),
                               ("state", params.state, ref.state)):
        if set(got) != set(want):
            raise ShapeMismatch(f"{section} names do not match the model spec: "
                                f"{sorted(set(got) ^ set(want))}")
        for k, v in want.items():
            if np.shape(got[k]) != v.shape:
                raise ShapeMismatch(f"{k}: shape {np.shape(got[k])}, spec wants {v.shape}")


def save_model(spec: ModelSpec, params: ModelParams, path, training_config: Optional[dict] = None,
               metrics_summary: Optional[dict] = None) -> None:
    _check_against_spec(spec, params)
    manifest, _ = _manifest(spec, params, training_config, metrics_summary)
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in params.items())
    Path(path).write_bytes(MAGIC + _LEN.pack(len(head)) + head + payload)


def read_manifest(path) -> tuple[dict, bytes]:
    """Parse the header; returns ``(manifest, payload bytes)``."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC) or len(raw) < len(MAGIC) + _LEN.size:
        raise CorruptArchive(f"{path}: not a model archive")
    start = len(MAGIC) + _LEN.size
    (n,) = _LEN.unpack(raw[len(MAGIC):start])
    if start + n > len(raw):
        raise CorruptArchive(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[start:start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptArchive(f"{path}: unreadable manifest ({exc})") from exc
    return manifest, raw[start + n:]


def load_model(path) -> tuple[ModelSpec, ModelParams]:
    """Load and validate an archive written by :func:`save_model`."""
    manifest, payload = read_manifest(path)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"archive format {version}, expected {FORMAT_VERSION}")
    try:
        spec = ModelSpec.from_dict(manifest["spec"])
        index = manifest["weight_index"]
    except (KeyError, TypeError) as exc:
        raise CorruptArchive(f"{path}: incomplete manifest ({exc})") from exc

    weights, state = {}, {}
    for entry in index:
        off, length = int(entry["byte_offset"]), int(entry["byte_length"])
        shape = tuple(int(s) for s in entry["shape"])
        if off < 0 or length < 0 or off + length > len(payload) or length % 8:
            raise CorruptArchive(f"{entry['name']}: byte range outside the payload")
        if int(np.prod(shape)) * 8 != length:
            raise ShapeMismatch(f"{entry['name']}: shape {shape} does not match {length} bytes")
        arr = np.frombuffer(payload, dtype="<f8", count=length // 8, offset=off)
        target = state if entry.get("role") == "state" else weights
        target[entry["name"]] = arr.astype(np.float64).reshape(shape)
    expected = sum(int(e["byte_length"]) for e in index)
    if expected != len(payload):
        raise CorruptArchive(f"payload holds {len(payload)} bytes, index describes {expected}")
    params = ModelParams(weights, state)
    _check_against_spec(spec, params)
    return spec, params
