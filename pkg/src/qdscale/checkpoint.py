"""Parameter checkpoint container.

One file per model: a single-line JSON header — an array of
``{"name", "shape", "offset"}`` entries — terminated by a newline, followed by
the raw payload: each array as little-endian float64, row-major, concatenated
in header order. Offsets are byte positions into the payload section and are
validated on read.
"""

import json

import numpy as np

from .errors import ConfigurationError

_MAGIC = "qdscale-checkpoint-v1"


def save_checkpoint(path, named_arrays):
    """Write ``[(name, array), ...]`` to ``path`` in header order."""
    entries = []
    payloads = []
    offset = 0
    seen = set()
    for name, arr in named_arrays:
        if name in seen:
            raise ConfigurationError("checkpoint: duplicate parameter name %r" % name)
        seen.add(name)
        a = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        raw = a.astype("<f8").tobytes()
        payloads.append(raw)
        offset += len(raw)
    header = {"format": _MAGIC, "entries": entries}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for raw in payloads:
            fh.write(raw)


def load_checkpoint(path):
    """Read a checkpoint file back into an ordered ``{name: array}`` dict."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError("checkpoint: unreadable header in %s: %s" % (path, exc))
    if not isinstance(header, dict) or header.get("format") != _MAGIC:
        raise ConfigurationError("checkpoint: %s is not a %s file" % (path, _MAGIC))
    out = {}
    expected_offset = 0
    for entry in header["entries"]:
        name = entry["name"]
        shape = tuple(entry["shape"])
        offset = entry["offset"]
        if offset != expected_offset:
            raise ConfigurationError(
                "checkpoint: offset of %r is %d, expected %d" % (name, offset, expected_offset)
            )
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        raw = payload[offset : offset + nbytes]
        if len(raw) != nbytes:
            raise ConfigurationError(
                "checkpoint: payload truncated at parameter %r (%d of %d bytes)"
                % (name, len(raw), nbytes)
            )
        out[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        expected_offset = offset + nbytes
    if expected_offset != len(payload):
        raise ConfigurationError(
            "checkpoint: %d trailing payload bytes" % (len(payload) - expected_offset)
        )
    return out


def load_into(path, named_tensors):
    """Load a checkpoint into ``[(name, Tensor), ...]``, validating shapes."""
    stored = load_checkpoint(path)
    for name, tensor in named_tensors:
        if name not in stored:
            raise ConfigurationError("checkpoint: missing parameter %r" % name)
        arr = stored.pop(name)
        if arr.shape != tensor.data.shape:
            raise ConfigurationError(
                "checkpoint: shape mismatch at %r: stored %r, model %r"
                % (name, arr.shape, tensor.data.shape)
            )
        tensor.data = arr.copy()
    if stored:
        raise ConfigurationError(
            "checkpoint: unused parameters %r" % sorted(stored.keys())
        )
