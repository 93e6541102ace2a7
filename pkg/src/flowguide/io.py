"""Bit-exact file formats and PLY export.

Binary layouts are little-endian and fixed rather than self-describing so
golden-file tests stay byte-exact across languages: 4 ASCII magic bytes,
u32 version, u32 grid resolution, u32 width (C or D), u32 record count, then
per record three u16 coordinates followed by the f32 row. Derived JSON
documents carry SHA-256 digests of their source files so a correspondence or
clustering can never silently be applied to the wrong shape.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    BadVersion,
    DigestMismatch,
    SchemaMismatch,
    TruncatedFile,
    UnsortedPositions,
    WriteFailure,
)
from .partition import CORRESPONDENCE_METHODS, ClusterAssignment, FeatureField
from .slat import LatentState, StructuredLatent, is_canonical, structured_latent_from_arrays
from .toyflows import ARCHITECTURES, TrainableField

SLAT_MAGIC = b"SLAT"
FFLD_MAGIC = b"FFLD"
FORMAT_VERSION = 1

CLUSTERS_SCHEMA = "flowguide.clusters/1"
CORRESPONDENCE_SCHEMA = "flowguide.correspondence/1"
PARAMS_SCHEMA = "flowguide.params/1"
MANIFEST_SCHEMA = "flowguide.manifest/1"

_HEADER = struct.Struct("<4sIIII")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _encode_grid(magic: bytes, resolution: int, width: int, positions: np.ndarray, rows: np.ndarray) -> bytes:
    count = len(positions)
    record = np.dtype([("pos", "<u2", (3,)), ("row", "<f4", (width,))])
    body = np.empty(count, dtype=record)
    body["pos"] = positions
    body["row"] = rows
    return _HEADER.pack(magic, FORMAT_VERSION, resolution, width, count) + body.tobytes()


def _decode_grid(raw: bytes, magic: bytes) -> tuple[int, int, np.ndarray, np.ndarray]:
    if len(raw) < _HEADER.size:
        raise TruncatedFile(len(raw), _HEADER.size - len(raw))
    got_magic, version, resolution, width, count = _HEADER.unpack_from(raw)
    if got_magic != magic:
        raise BadMagic(got_magic)
    if version != FORMAT_VERSION:
        raise BadVersion(version)
    record = np.dtype([("pos", "<u2", (3,)), ("row", "<f4", (width,))])
    expected = _HEADER.size + count * record.itemsize
    if len(raw) < expected:
        raise TruncatedFile(len(raw), expected - len(raw))
    if len(raw) > expected:
        raise SchemaMismatch(f"{len(raw) - expected} trailing bytes after {count} records")
    body = np.frombuffer(raw, dtype=record, count=count, offset=_HEADER.size)
    positions = body["pos"].astype(np.int64)
    if not is_canonical(positions):
        bad = 1
        for i in range(1, count):
            if tuple(positions[i][::-1]) <= tuple(positions[i - 1][::-1]):
                bad = i
                break
        raise UnsortedPositions(bad)
    return int(resolution), int(width), positions, body["row"].astype(np.float64)


def write_slat(latent: StructuredLatent | LatentState, path) -> None:
    """Persist a structured latent; values are stored as f32."""
    if isinstance(latent, LatentState):
        latent = structured_latent_from_arrays(
            latent.base.grid_resolution,
            latent.base.channels,
            latent.base.positions,
            latent.values,
        )
    payload = _encode_grid(
        SLAT_MAGIC, latent.grid_resolution, latent.channels, latent.positions, latent.values
    )
    Path(path).write_bytes(payload)


def read_slat(path) -> StructuredLatent:
    resolution, channels, positions, values = _decode_grid(Path(path).read_bytes(), SLAT_MAGIC)
    return structured_latent_from_arrays(resolution, channels, positions, values)


def write_ffld(features: FeatureField, positions: np.ndarray, resolution: int, path) -> None:
    """Persist per-voxel features together with the voxel positions they align to."""
    if len(features.features) != len(positions):
        raise SchemaMismatch(
            f"feature rows {len(features.features)} != positions {len(positions)}"
        )
    payload = _encode_grid(
        FFLD_MAGIC, resolution, features.dimension, np.asarray(positions), features.features
    )
    Path(path).write_bytes(payload)


def read_ffld(path) -> tuple[FeatureField, np.ndarray, int]:
    """Returns (field, positions, resolution); shape_id is the file stem."""
    resolution, _, positions, rows = _decode_grid(Path(path).read_bytes(), FFLD_MAGIC)
    field = FeatureField(shape_id=Path(path).stem, features=rows)
    return field, positions.astype(np.int32), resolution


def _write_json(document: dict, path) -> None:
    try:
        Path(path).write_text(json.dumps(document, sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise WriteFailure(path, str(exc)) from exc


def _read_json(path) -> dict:
    try:
        document = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(document, dict):
        raise SchemaMismatch(f"top level of {path} is not an object")
    return document


def _require_schema(document: dict, expected: str) -> None:
    if document.get("schema") != expected:
        raise SchemaMismatch(f"expected schema {expected!r}, got {document.get('schema')!r}")


def write_clusters(assignment: ClusterAssignment, features_digest: str, path) -> None:
    _write_json(
        {
            "schema": CLUSTERS_SCHEMA,
            "k": assignment.k,
            "labels": [int(v) for v in assignment.labels],
            "inertia": float(assignment.inertia),
            "features_digest": features_digest,
        },
        path,
    )


def read_clusters(path, expected_features_digest: str | None = None) -> dict:
    """Load a clusters document: keys k, labels, inertia, features_digest."""
    doc = _read_json(path)
    _require_schema(doc, CLUSTERS_SCHEMA)
    k = doc.get("k")
    labels = doc.get("labels")
    if not isinstance(k, int) or k < 1 or not isinstance(labels, list):
        raise SchemaMismatch("clusters document needs integer k >= 1 and a labels array")
    arr = np.asarray(labels)
    if arr.size == 0 or arr.dtype.kind not in "iu" or arr.min() < 0 or arr.max() >= k:
        raise SchemaMismatch(f"labels must be integers in [0, {k - 1}]")
    if "features_digest" not in doc or "inertia" not in doc:
        raise SchemaMismatch("clusters document missing features_digest or inertia")
    if expected_features_digest is not None and doc["features_digest"] != expected_features_digest:
        raise DigestMismatch("features", expected_features_digest, doc["features_digest"])
    return {
        "k": k,
        "labels": arr.astype(np.int64),
        "inertia": float(doc["inertia"]),
        "features_digest": doc["features_digest"],
    }


@dataclass
class CorrespondenceDocument:
    """Serialized query -> appearance voxel map, digest-bound to its sources."""

    method: str
    target: np.ndarray
    appearance_length: int
    query_slat_digest: str
    appearance_slat_digest: str
    query_features_digest: str
    appearance_features_digest: str


def write_correspondence(doc: CorrespondenceDocument, path) -> None:
    _write_json(
        {
            "schema": CORRESPONDENCE_SCHEMA,
            "method": doc.method,
            "target": [int(v) for v in doc.target],
            "appearance_length": int(doc.appearance_length),
            "query_slat_digest": doc.query_slat_digest,
            "appearance_slat_digest": doc.appearance_slat_digest,
            "query_features_digest": doc.query_features_digest,
            "appearance_features_digest": doc.appearance_features_digest,
        },
        path,
    )


def read_correspondence(
    path,
    query_slat_digest: str | None = None,
    appearance_slat_digest: str | None = None,
) -> CorrespondenceDocument:
    doc = _read_json(path)
    _require_schema(doc, CORRESPONDENCE_SCHEMA)
    if doc.get("method") not in CORRESPONDENCE_METHODS:
        raise SchemaMismatch(f"unknown correspondence method {doc.get('method')!r}")
    target = np.asarray(doc.get("target", []))
    length = doc.get("appearance_length")
    if target.size == 0 or target.dtype.kind not in "iu":
        raise SchemaMismatch("target must be a non-empty integer array")
    if not isinstance(length, int) or target.min() < 0 or target.max() >= length:
        raise SchemaMismatch("target indices must lie in [0, appearance_length)")
    try:
        out = CorrespondenceDocument(
            method=doc["method"],
            target=target.astype(np.int64),
            appearance_length=length,
            query_slat_digest=doc["query_slat_digest"],
            appearance_slat_digest=doc["appearance_slat_digest"],
            query_features_digest=doc["query_features_digest"],
            appearance_features_digest=doc["appearance_features_digest"],
        )
    except KeyError as exc:
        raise SchemaMismatch(f"correspondence document missing {exc}") from exc
    if query_slat_digest is not None and out.query_slat_digest != query_slat_digest:
        raise DigestMismatch("query slat", query_slat_digest, out.query_slat_digest)
    if appearance_slat_digest is not None and out.appearance_slat_digest != appearance_slat_digest:
        raise DigestMismatch("appearance slat", appearance_slat_digest, out.appearance_slat_digest)
    return out


def write_params(field: TrainableField, path) -> None:
    _write_json(
        {
            "schema": PARAMS_SCHEMA,
            "architecture": field.architecture,
            "channels": field.channels,
            "condition_width": field.condition_width,
            "time_degree": field.time_degree,
            "hidden": field.hidden,
            "params": {k: v.tolist() for k, v in field.params.items()},
        },
        path,
    )


def read_params(path) -> TrainableField:
    doc = _read_json(path)
    _require_schema(doc, PARAMS_SCHEMA)
    if doc.get("architecture") not in ARCHITECTURES:
        raise SchemaMismatch(f"unknown architecture {doc.get('architecture')!r}")
    try:
        params = {k: np.asarray(v, dtype=np.float64) for k, v in doc["params"].items()}
        return TrainableField(
            architecture=doc["architecture"],
            channels=int(doc["channels"]),
            condition_width=int(doc["condition_width"]),
            time_degree=int(doc["time_degree"]),
            hidden=int(doc["hidden"]),
            params=params,
        )
    except KeyError as exc:
        raise SchemaMismatch(f"params document missing {exc}") from exc


def _pca_colors(values: np.ndarray) -> np.ndarray:
    """Project latent rows to 3 principal components, min-max scaled to 0..255.

    Zero-variance directions (and any missing components when C < 3) map to
    mid-gray 128 so constant latents render uniformly.
    """
    n = len(values)
    colors = np.full((n, 3), 128, dtype=np.int64)
    if n < 2:
        return colors
    centered = values - values.mean(axis=0)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(float(s[0]), 1.0)
    for comp in range(min(3, len(s))):
        if s[comp] <= 1e-12 * scale:
            continue
        axis = vt[comp]
        if axis[np.argmax(np.abs(axis))] < 0:
            axis = -axis  # fix the arbitrary SVD sign for reproducible colors
        proj = centered @ axis
        lo, hi = proj.min(), proj.max()
        if hi - lo <= 1e-12 * scale:
            continue
        colors[:, comp] = np.rint((proj - lo) / (hi - lo) * 255).astype(np.int64)
    return colors


def export_ply(latent: StructuredLatent | LatentState, path) -> None:
    """ASCII PLY point cloud: voxel centers in [0,1]^3, PCA-derived colors."""
    if isinstance(latent, LatentState):
        positions = latent.base.positions
        values = np.asarray(latent.values, dtype=np.float64)
        resolution = latent.base.grid_resolution
    else:
        positions = latent.positions
        values = latent.values
        resolution = latent.grid_resolution
    colors = _pca_colors(values)
    centers = (positions + 0.5) / resolution
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(positions)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    for (x, y, z), (r, g, b) in zip(centers, colors):
        lines.append(f"{x!r} {y!r} {z!r} {r} {g} {b}")
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise WriteFailure(path, str(exc)) from exc


def write_manifest(path, command: str, config: dict, inputs: dict, outputs: dict) -> None:
    """Record the digests that make a run reproducible. No wall-clock data,
    so identical runs produce identical manifests."""
    _write_json(
        {
            "schema": MANIFEST_SCHEMA,
            "command": command,
            "config": config,
            "inputs": {str(k): v for k, v in inputs.items()},
            "outputs": {str(k): v for k, v in outputs.items()},
        },
        path,
    )
