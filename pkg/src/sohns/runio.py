"""Persistent run artifacts: manifest, atomic file writers, raw snapshots.

Every output lands via write-temp-rename in the run directory, and the
manifest indexes each file with its hash the moment it is complete, so an
interrupted run never lists a partial file. Field snapshots are raw
little-endian 64-bit floats, row-major, one .bin per snapshot with a JSON
sidecar naming the fields and shapes. CSVs carry full-precision floats
('%.17g') and their columns are documented in a schema.json written
alongside.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import ParseError, SchemaMismatch

__all__ = [
    "MANIFEST_NAME",
    "SCHEMA_NAME",
    "RunManifest",
    "RunWriter",
    "atomic_write_bytes",
    "read_manifest",
    "read_snapshot",
    "read_series",
]

MANIFEST_NAME = "manifest.json"
SCHEMA_NAME = "schema.json"


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def atomic_write_bytes(path, data):
    """Write-temp-rename in the target directory; no partial file survives."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


@dataclass
class RunManifest:
    """Everything needed to reproduce and index one run."""

    subcommand: str
    config: dict
    coefficients: dict
    code_version: str
    seed: object = None
    threads: object = None
    created: str = ""
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def __post_init__(self):
        if not self.created:
            self.created = datetime.now(timezone.utc).isoformat()

    def to_dict(self):
        return _jsonable(
            {
                "subcommand": self.subcommand,
                "config": self.config,
                "coefficients": self.coefficients,
                "code_version": self.code_version,
                "seed": self.seed,
                "threads": self.threads,
                "created": self.created,
                "inputs": self.inputs,
                "outputs": self.outputs,
            }
        )

    def serialize(self):
        return _canonical(self.to_dict())

    @classmethod
    def parse(cls, text):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"manifest is not valid JSON: {exc}") from exc
        try:
            return cls(**raw)
        except TypeError as exc:
            raise SchemaMismatch(f"manifest fields do not match: {exc}") from exc

    def content_hash(self):
        """Hash of everything that determines the outputs.

        Volatile bookkeeping (created, threads, the output index itself) is
        excluded, so the same configuration pins the same hash across runs.
        """
        core = {
            "subcommand": self.subcommand,
            "config": self.config,
            "coefficients": self.coefficients,
            "code_version": self.code_version,
            "seed": self.seed,
            "inputs": self.inputs,
        }
        return sha256_bytes(_canonical(_jsonable(core)).encode())


def _format_value(value):
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(value)
    return str(value)


class RunWriter:
    """Owns one run directory: manifest first, then indexed atomic outputs."""

    def __init__(self, out_dir, manifest):
        self.dir = out_dir
        self.manifest = manifest
        os.makedirs(out_dir, exist_ok=True)
        self._schema = {}
        self._write_manifest()

    def _write_manifest(self):
        atomic_write_bytes(
            os.path.join(self.dir, MANIFEST_NAME), self.manifest.serialize().encode()
        )

    def write_bytes(self, name, data):
        path = os.path.join(self.dir, name)
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        atomic_write_bytes(path, data)
        self.manifest.outputs = [o for o in self.manifest.outputs if o["name"] != name]
        self.manifest.outputs.append(
            {"name": name, "sha256": sha256_bytes(data), "bytes": len(data)}
        )
        self._write_manifest()
        return path

    def write_text(self, name, text):
        return self.write_bytes(name, text.encode())

    def write_json(self, name, obj):
        return self.write_text(name, _canonical(_jsonable(obj)))

    def write_csv(self, name, columns, rows):
        """columns: {name: description}; rows: iterables matching the order."""
        lines = [",".join(columns)]
        for row in rows:
            lines.append(",".join(_format_value(v) for v in row))
        self._schema[name] = dict(columns)
        return self.write_text(name, "\n".join(lines) + "\n")

    def write_snapshot(self, name, fields, time, meta=None):
        """fields: {name: float array}; writes name.bin plus name.json."""
        arrays = {k: np.ascontiguousarray(v, dtype="<f8") for k, v in fields.items()}
        data = b"".join(a.tobytes() for a in arrays.values())
        sidecar = {
            "fields": [{"name": k, "shape": list(a.shape)} for k, a in arrays.items()],
            "time": float(time),
            "dtype": "<f8",
            "order": "C",
            "endianness": "little",
        }
        if meta:
            sidecar.update(_jsonable(meta))
        self.write_bytes(name + ".bin", data)
        self.write_json(name + ".json", sidecar)

    def finish(self):
        if self._schema:
            self.write_json(SCHEMA_NAME, self._schema)
        self._write_manifest()


def read_manifest(run_dir):
    path = os.path.join(run_dir, MANIFEST_NAME)
    try:
        with open(path, encoding="utf-8") as fh:
            return RunManifest.parse(fh.read())
    except OSError as exc:
        raise SchemaMismatch(f"no readable manifest at {path}: {exc}") from exc


def read_snapshot(base_path):
    """(fields, sidecar) from base_path.bin / base_path.json."""
    try:
        with open(base_path + ".json", encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"unreadable snapshot sidecar {base_path}.json: {exc}") from exc
    if sidecar.get("dtype") != "<f8" or sidecar.get("order") != "C":
        raise SchemaMismatch(f"snapshot {base_path} is not row-major little-endian f8")
    with open(base_path + ".bin", "rb") as fh:
        raw = fh.read()
    fields = {}
    offset = 0
    for entry in sidecar["fields"]:
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


def read_series(path):
    """A CSV written by write_csv, as {column: float array}."""
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines:
        raise SchemaMismatch(f"{path} is empty")
    names = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    if any(len(r) != len(names) for r in rows):
        raise SchemaMismatch(f"{path} has ragged rows")
    return {
        name: np.array([float(r[i]) for r in rows]) for i, name in enumerate(names)
    }
