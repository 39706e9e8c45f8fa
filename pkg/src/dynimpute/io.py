"""Episode files: long-format CSV or JSON, one record per (episode, landmark).

Columns are ``ID``, ``admission_id`` (optional), ``LM``, one column per
predictor, ``eventtime`` and ``type``. Missing predictor values are written
as ``NA`` in CSV and ``null`` in JSON. Floats are written with their
shortest round-trip representation, so reading a written file gives back
bit-identical values.

A JSON file is either a list of records or an object
``{"schema": [...], "records": [...]}`` that also carries the predictor
schema.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .datamodel import ADMISSION, ID, LM, TIME, TYPE, Schema, _coerce, validate_episode_frame
from .exceptions import ValidationError

NA_TOKEN = "NA"
RESERVED = (ID, ADMISSION, LM, TIME, TYPE)


def _columns(frame, schema):
    cols = [ID]
    if ADMISSION in frame.columns:
        cols.append(ADMISSION)
    return cols + [LM, *schema.names, TIME, TYPE]


def infer_schema(frame: pd.DataFrame) -> Schema:
    """Schema guessed from column contents, used when none is supplied.

    0/1 columns become binary, other integer-valued columns counts, and the
    rest continuous.
    """
    preds = []
    for col in frame.columns:
        if col in RESERVED:
            continue
        obs = pd.to_numeric(frame[col], errors="coerce").dropna()
        if len(obs) and obs.isin((0.0, 1.0)).all():
            kind = "binary"
        elif len(obs) and (obs == np.round(obs)).all() and (obs >= 0).all():
            kind = "count"
        else:
            kind = "continuous"
        preds.append({"name": col, "kind": kind})
    return Schema(preds)


def write_episodes(frame: pd.DataFrame, path, schema: Schema):
    """Write an episode frame as CSV or JSON, chosen by file suffix."""
    path = Path(path)
    cols = _columns(frame, schema)
    out = frame[cols]
    if path.suffix.lower() == ".json":
        records = []
        for rec in out.to_dict(orient="records"):
            records.append({k: (None if isinstance(v, float) and math.isnan(v) else _plain(v))
                            for k, v in rec.items()})
        path.write_text(json.dumps({"schema": schema.to_list(), "records": records}))
    else:
        out.to_csv(path, index=False, na_rep=NA_TOKEN)


def _plain(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def read_episodes(path, schema: Schema | None = None):
    """Read an episode file.

    Returns
    -------
    frame : DataFrame
    schema : Schema
        ``schema`` if given, else the one stored in a JSON file, else one
        inferred from the columns.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        if isinstance(data, dict):
            if schema is None and "schema" in data:
                schema = Schema.from_list(data["schema"])
            data = data.get("records", [])
        frame = pd.DataFrame.from_records(data)
    else:
        frame = pd.read_csv(path, na_values=[NA_TOKEN, ""], keep_default_na=False,
                            float_precision="round_trip")
    for col in (ID, LM, TIME, TYPE):
        if col not in frame.columns:
            raise ValidationError(f"episode file lacks column {col!r}")
    if schema is None:
        schema = infer_schema(frame)
    frame = _coerce(frame, schema)
    validate_episode_frame(frame, schema)
    return frame, schema


def read_rows(path, schema: Schema) -> pd.DataFrame:
    """Read landmark rows that need no outcome columns (bedside input).

    Only ``ID``, ``LM`` and the schema's predictors are required; missing
    predictor columns are treated as entirely missing.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        if isinstance(data, dict):
            data = data.get("records", [data])
        frame = pd.DataFrame.from_records(data)
    else:
        frame = pd.read_csv(path, na_values=[NA_TOKEN, ""], keep_default_na=False,
                            float_precision="round_trip")
    for col in (ID, LM):
        if col not in frame.columns:
            raise ValidationError(f"row file lacks column {col!r}")
    for name in schema.names:
        frame[name] = frame[name].astype(np.float64) if name in frame.columns else np.nan
    frame[LM] = frame[LM].astype(np.int64)
    if frame.duplicated([ID, LM]).any():
        raise ValidationError("duplicate (ID, LM) rows")
    return frame
