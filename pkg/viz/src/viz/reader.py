"""Readers for the documented run-directory artifacts.

Independent of the solver package on purpose: these functions encode the
public file contract (JSON manifest, full-precision CSV, raw row-major
little-endian float64 snapshots with a JSON sidecar) and nothing else.
"""

import glob
import json
import os

import numpy as np

from .errors import SchemaMismatch

__all__ = [
    "read_manifest",
    "read_series",
    "read_snapshot",
    "list_snapshots",
    "pick_snapshot",
]


def read_manifest(run_dir):
    """The run manifest as a plain dict; its presence marks a run directory."""
    path = os.path.join(run_dir, "manifest.json")
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"no readable manifest at {path}: {exc}") from exc
    if not isinstance(manifest, dict) or "subcommand" not in manifest:
        raise SchemaMismatch(f"{path} is not a run manifest")
    return manifest


def read_series(path):
    """A solver CSV as {column: float array}."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh if line.strip()]
    except OSError as exc:
        raise SchemaMismatch(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise SchemaMismatch(f"{path} is empty")
    names = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    if any(len(row) != len(names) for row in rows):
        raise SchemaMismatch(f"{path} has ragged rows")
    try:
        return {
            name: np.array([float(row[i]) for row in rows])
            for i, name in enumerate(names)
        }
    except ValueError as exc:
        raise SchemaMismatch(f"{path} has a non-numeric cell: {exc}") from exc


def read_snapshot(base_path):
    """(fields, sidecar) from base_path.bin / base_path.json."""
    try:
        with open(base_path + ".json", encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"unreadable snapshot sidecar {base_path}.json: {exc}") from exc
    if sidecar.get("dtype") != "<f8" or sidecar.get("order") != "C":
        raise SchemaMismatch(f"snapshot {base_path} is not row-major little-endian f8")
    try:
        with open(base_path + ".bin", "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise SchemaMismatch(f"cannot read {base_path}.bin: {exc}") from exc
    fields = {}
    offset = 0
    for entry in sidecar.get("fields", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise SchemaMismatch(f"snapshot {base_path}.bin shorter than its sidecar")
        fields[entry["name"]] = np.frombuffer(
            raw, dtype="<f8", count=count, offset=offset
        ).reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise SchemaMismatch(f"snapshot {base_path}.bin longer than its sidecar")
    return fields, sidecar


def list_snapshots(run_dir):
    """Snapshot base paths in index order, with their sidecar times."""
    sidecars = sorted(glob.glob(os.path.join(run_dir, "snapshot_*.json")))
    out = []
    for path in sidecars:
        base = path[: -len(".json")]
        try:
            with open(path, encoding="utf-8") as fh:
                t = float(json.load(fh)["time"])
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"unreadable snapshot sidecar {path}: {exc}") from exc
        out.append((base, t))
    return out


def pick_snapshot(run_dir, time=None):
    """The snapshot base path nearest the requested time (default: last)."""
    snaps = list_snapshots(run_dir)
    if not snaps:
        raise SchemaMismatch(f"{run_dir} contains no snapshots")
    if time is None:
        return snaps[-1][0]
    return min(snaps, key=lambda item: abs(item[1] - time))[0]
