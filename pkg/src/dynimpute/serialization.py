"""Self-describing JSON envelope for fitted imputers and supermodels.

The envelope is a JSON object::

    {"format": "dynimpute-model", "version": 1, "strategy": ..., "kind": ...,
     "schema_hash": ..., "seed": ..., "payload": <base64 pickle>}

Only load files from trusted sources: the payload is a pickle.
"""
from __future__ import annotations

import base64
import hashlib
import json
import pickle
from pathlib import Path

from .exceptions import ValidationError

FORMAT = "dynimpute-model"
VERSION = 1


def _describe(model):
    schema = getattr(model, "schema", None)
    return {
        "strategy": getattr(model, "strategy", None) or type(model).__name__,
        "kind": type(model).__name__,
        "schema_hash": schema.digest() if schema is not None else None,
        "seed": getattr(model, "seed", None),
    }


def dumps(model) -> str:
    """Serialize a fitted model to an envelope string."""
    blob = pickle.dumps(model, protocol=pickle.HIGHEST_PROTOCOL)
    envelope = {"format": FORMAT, "version": VERSION, **_describe(model),
                "sha256": hashlib.sha256(blob).hexdigest(),
                "payload": base64.b64encode(blob).decode("ascii")}
    return json.dumps(envelope, sort_keys=True)


def loads(text: str):
    """Inverse of :func:`dumps`; checks format, version and integrity."""
    try:
        envelope = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"model file is not JSON: {exc}") from exc
    if not isinstance(envelope, dict) or envelope.get("format") != FORMAT:
        raise ValidationError("not a dynimpute model envelope")
    if "version" not in envelope:
        raise ValidationError("model envelope lacks a version field")
    if envelope["version"] != VERSION:
        raise ValidationError(f"unsupported model envelope version {envelope['version']}")
    blob = base64.b64decode(envelope["payload"])
    if hashlib.sha256(blob).hexdigest() != envelope.get("sha256"):
        raise ValidationError("model payload is corrupted (checksum mismatch)")
    model = pickle.loads(blob)
    found = _describe(model)["schema_hash"]
    if found != envelope.get("schema_hash"):
        raise ValidationError("model schema does not match the envelope's schema hash")
    return model


def save_model(model, path):
    Path(path).write_text(dumps(model))


def load_model(path):
    return loads(Path(path).read_text())


def read_envelope(path) -> dict:
    """Envelope metadata without unpickling the payload."""
    envelope = json.loads(Path(path).read_text())
    envelope.pop("payload", None)
    return envelope
