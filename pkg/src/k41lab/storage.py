"""Persistence: binary field checkpoints, canonical JSON, CSV tables.

Checkpoint layout (little-endian throughout):

    magic   "K41F"           4 bytes
    version uint32           currently 1
    d       uint32
    n       uint32
    L       float64
    count   uint64           number of canonical modes
    per canonical mode: d int32 lattice coordinates, then d complex
    coefficients as (real, imag) float64 pairs

so the file size is exactly 32 + count * (4 d + 16 d) bytes.  Reality
reconstructs the mirrored half on load.

JSON output is byte-stable: keys sorted, floats rendered with %.17g (exact
round trip).  Every emitted file embeds provenance (config hash, seed,
package version).
"""

import hashlib
import json
import struct

import numpy as np

from . import __version__
from .errors import (CheckpointInvariantError, CheckpointMagicError,
                     CheckpointTruncatedError, ConfigError)
from .spectral import SpectralField, build_lattice

MAGIC = b"K41F"
VERSION = 1
HEADER = struct.Struct("<4sIIIdQ")
DIVERGENCE_LOAD_TOL = 1e-8


def write_checkpoint(field, path):
    """Serialize a spectral field (canonical half only) to the binary layout."""
    lat = field.lattice
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, lat.d, lat.n, lat.L, lat.n_half))
        coords = lat.half_modes.astype("<i4")
        coeffs = field.coeffs.astype("<c16")
        rec = np.empty(lat.n_half,
                       dtype=[("m", "<i4", (lat.d,)), ("c", "<c16", (lat.d,))])
        rec["m"] = coords
        rec["c"] = coeffs
        fh.write(rec.tobytes())


def read_checkpoint(path):
    """Load and validate a checkpoint; errors are typed per failure mode."""
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        if len(head) < HEADER.size:
            raise CheckpointTruncatedError(f"{path}: header truncated")
        magic, version, d, n, L, count = HEADER.unpack(head)
        if magic != MAGIC:
            raise CheckpointMagicError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise CheckpointMagicError(f"{path}: unsupported version {version}")
        lat = build_lattice(d, L, n)
        if count != lat.n_half:
            raise CheckpointInvariantError(
                f"{path}: mode count {count} does not match lattice ({lat.n_half})")
        body = fh.read()
    rec_dtype = np.dtype([("m", "<i4", (d,)), ("c", "<c16", (d,))])
    expected = count * rec_dtype.itemsize
    if len(body) < expected:
        raise CheckpointTruncatedError(
            f"{path}: body has {len(body)} bytes, expected {expected}")
    rec = np.frombuffer(body[:expected], dtype=rec_dtype)
    if not np.array_equal(rec["m"], lat.half_modes.astype(np.int32)):
        raise CheckpointInvariantError(f"{path}: mode list not in canonical order")
    field = SpectralField(lat, rec["c"].astype(complex))
    if field.max_divergence() > DIVERGENCE_LOAD_TOL:
        raise CheckpointInvariantError(
            f"{path}: field violates incompressibility "
            f"({field.max_divergence():.2e} > {DIVERGENCE_LOAD_TOL})")
    return field


# ---------------------------------------------------------------------------
# canonical JSON

def _render(obj, parts):
    if obj is None:
        parts.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        parts.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            raise ConfigError("non-finite float in JSON output")
        parts.append(format(x, ".17g"))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, item in enumerate(obj):
            if i:
                parts.append(",")
            _render(item, parts)
        parts.append("]")
    elif isinstance(obj, dict):
        parts.append("{")
        for i, key in enumerate(sorted(obj)):
            if i:
                parts.append(",")
            if not isinstance(key, str):
                raise ConfigError("JSON object keys must be strings")
            parts.append(json.dumps(key, ensure_ascii=False))
            parts.append(":")
            _render(obj[key], parts)
        parts.append("}")
    else:
        raise ConfigError(f"cannot serialize {type(obj).__name__} to JSON")


def dumps_canonical(obj):
    """Deterministic JSON: sorted keys, %.17g floats (exact round trip)."""
    parts = []
    _render(obj, parts)
    return "".join(parts)


RUNTIME_KEYS = ("out", "threads")


def experiment_config(resolved):
    """The resolved config minus runtime keys (output path, worker count).

    Worker count and output location do not affect results, so they are
    excluded from the recorded config and its hash; this is what makes
    outputs byte-identical across 1..N workers.
    """
    return {k: v for k, v in resolved.items() if k not in RUNTIME_KEYS}


def config_hash(resolved):
    return hashlib.sha256(
        dumps_canonical(experiment_config(resolved)).encode("utf-8")).hexdigest()


def provenance_block(resolved):
    return {
        "config_sha256": config_hash(resolved),
        "seed": resolved["seed"],
        "version": __version__,
    }


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(payload))
        fh.write("\n")


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, header, rows, provenance):
    """CSV table with a provenance comment line; floats at %.17g."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# k41lab version={provenance['version']} "
                 f"config_sha256={provenance['config_sha256']} "
                 f"seed={provenance['seed']}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")
