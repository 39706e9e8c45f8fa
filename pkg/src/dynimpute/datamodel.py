"""Episodes, landmark rows, predictor schemas and the stacked landmark dataset.

Frames used throughout the package are long-format :class:`pandas.DataFrame`
objects with one row per (episode, landmark). Column names follow the
stacked-dataset layout used for landmark supermodels:

``ID``, ``LM``, ``eventtime``, ``type`` plus ``admission_id`` and one column
per predictor. Missing predictor values are ``NaN``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ValidationError

ID = "ID"
LM = "LM"
TIME = "eventtime"
TYPE = "type"
ADMISSION = "admission_id"

CENSORED, CLABSI, DEATH, DISCHARGE = 0, 1, 2, 3
EVENT_TYPES = (CENSORED, CLABSI, DEATH, DISCHARGE)
KINDS = ("continuous", "binary", "count", "ordinal")

MERGE_GAP_HOURS = 48.0


@dataclass(frozen=True)
class PredictorSchema:
    """Role of a single predictor.

    ``linked_catheter_type`` ties a lumen count to the binary catheter-type
    predictor that gates it; ``fixed_count`` is the lumen count forced when
    that type is present (2 for dialysis catheters, 1 for ports).
    ``indicator_group`` lets several predictors share one missing indicator.
    """

    name: str
    kind: str = "continuous"
    log_transform: bool = False
    linked_catheter_type: str | None = None
    baseline_only: bool = False
    fixed_count: int | None = None
    indicator_group: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"predictor {self.name!r}: unknown kind {self.kind!r}")
        if self.log_transform and self.kind != "continuous":
            raise ValidationError(f"predictor {self.name!r}: log_transform requires a continuous kind")

    @property
    def is_categorical(self):
        return self.kind in ("binary", "ordinal")


class Schema(Sequence):
    """Ordered, validated collection of :class:`PredictorSchema` entries."""

    def __init__(self, predictors: Iterable[PredictorSchema | Mapping]):
        preds = tuple(p if isinstance(p, PredictorSchema) else PredictorSchema(**p) for p in predictors)
        names = [p.name for p in preds]
        if len(set(names)) != len(names):
            raise ValidationError("predictor names must be unique")
        reserved = {ID, LM, TIME, TYPE, ADMISSION}
        if reserved & set(names):
            raise ValidationError(f"predictor names collide with reserved columns {sorted(reserved & set(names))}")
        by_name = {p.name: p for p in preds}
        for p in preds:
            if p.linked_catheter_type is not None:
                link = by_name.get(p.linked_catheter_type)
                if link is None or link.kind != "binary":
                    raise ValidationError(
                        f"predictor {p.name!r}: linked_catheter_type {p.linked_catheter_type!r} "
                        "must name an existing binary predictor"
                    )
        self._preds = preds
        self._by_name = MappingProxyType(by_name)

    def __getitem__(self, item):
        if isinstance(item, str):
            return self._by_name[item]
        return self._preds[item]

    def __len__(self):
        return len(self._preds)

    def __eq__(self, other):
        return isinstance(other, Schema) and self._preds == other._preds

    def __hash__(self):
        return hash(self._preds)

    def __reduce__(self):
        return (Schema, (self._preds,))

    def __repr__(self):
        return f"Schema({[p.name for p in self._preds]})"

    @property
    def names(self):
        return [p.name for p in self._preds]

    def of_kind(self, *kinds):
        return [p.name for p in self._preds if p.kind in kinds]

    @property
    def log_names(self):
        return [p.name for p in self._preds if p.log_transform]

    @property
    def lumen_links(self):
        return {p.name: p.linked_catheter_type for p in self._preds if p.linked_catheter_type}

    def to_list(self):
        return [asdict(p) for p in self._preds]

    @classmethod
    def from_list(cls, items):
        return cls(PredictorSchema(**d) for d in items)

    def digest(self):
        """Stable sha256 of the schema, used to tag serialized models."""
        blob = json.dumps(self.to_list(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class LandmarkRow:
    """Predictor values of one episode at integer landmark day ``s``.

    Missing entries are stored as ``NaN``; ``mask`` is True where observed.
    """

    s: int
    values: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", MappingProxyType({k: float(v) for k, v in self.values.items()}))
        for k, v in self.values.items():
            if math.isinf(v):
                raise ValidationError(f"landmark {self.s}: non-finite value for {k!r}")

    def __reduce__(self):
        return (LandmarkRow, (self.s, dict(self.values)))

    @property
    def mask(self):
        return {k: not math.isnan(v) for k, v in self.values.items()}


@dataclass(frozen=True)
class Episode:
    """One patient-catheter episode.

    ``origin`` is the hour (on the admission clock) of the first catheter
    observation, which is landmark 0.
    """

    episode_id: int
    admission_id: int
    event_time: float
    event_type: int
    rows: tuple = ()
    origin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(sorted(self.rows, key=lambda r: r.s)))
        if self.event_type not in EVENT_TYPES:
            raise ValidationError(f"episode {self.episode_id}: unknown event type {self.event_type}")
        if not self.event_time > 0:
            raise ValidationError(f"episode {self.episode_id}: event_time must be > 0, got {self.event_time}")
        lms = [r.s for r in self.rows]
        if len(set(lms)) != len(lms):
            raise ValidationError(f"episode {self.episode_id}: duplicate landmark rows")
        if lms and self.event_time < lms[-1]:
            raise ValidationError(f"episode {self.episode_id}: event_time precedes last landmark row")


@dataclass
class StackedDataset:
    """Stacked landmark super-dataset.

    Every row satisfies ``LM < eventtime <= LM + horizon``; rows whose
    original event falls beyond the horizon are administratively censored.
    """

    frame: pd.DataFrame
    horizon: float = 7.0
    s0: int = 0
    sL: int = 30

    def __len__(self):
        return len(self.frame)


def merge_catheters_into_episodes(intervals, gap_hours=MERGE_GAP_HOURS, window_hours=MERGE_GAP_HOURS):
    """Merge catheter intervals into patient-catheter episodes.

    Parameters
    ----------
    intervals : iterable of (admission_id, start, end)
        Catheter observation intervals in hours.
    gap_hours : float
        Consecutive catheters whose gap is at most this many hours belong to
        the same episode.
    window_hours : float
        The at-risk window extends this long past the last removal.

    Returns
    -------
    list of Episode
        Row-less shells; ``event_time`` is the window length in days and the
        event type is discharge (removal for longer than the window).
    """
    by_adm = {}
    for adm, start, end in intervals:
        start, end = float(start), float(end)
        if start > end:
            raise ValidationError(f"admission {adm}: interval start {start} after end {end}")
        by_adm.setdefault(adm, []).append((start, end))

    episodes = []
    next_id = 1
    for adm in sorted(by_adm, key=str):
        spans = sorted(by_adm[adm])
        cur_start, cur_end = spans[0]
        merged = []
        for start, end in spans[1:]:
            if start - cur_end <= gap_hours:
                cur_end = max(cur_end, end)
            else:
                merged.append((cur_start, cur_end))
                cur_start, cur_end = start, end
        merged.append((cur_start, cur_end))
        for start, end in merged:
            length_days = (end + window_hours - start) / 24.0
            episodes.append(Episode(next_id, adm, length_days, DISCHARGE, (), origin=start))
            next_id += 1
    return episodes


def episodes_to_frame(episodes: Sequence[Episode], schema: Schema) -> pd.DataFrame:
    """Long-format frame, one row per landmark row of each episode."""
    records = []
    for ep in episodes:
        for row in ep.rows:
            rec = {ID: ep.episode_id, ADMISSION: ep.admission_id, LM: int(row.s)}
            for name in schema.names:
                rec[name] = row.values.get(name, np.nan)
            rec[TIME] = float(ep.event_time)
            rec[TYPE] = int(ep.event_type)
            records.append(rec)
    cols = [ID, ADMISSION, LM, *schema.names, TIME, TYPE]
    frame = pd.DataFrame.from_records(records, columns=cols)
    return _coerce(frame, schema)


def frame_to_episodes(frame: pd.DataFrame, schema: Schema) -> list[Episode]:
    out = []
    for eid, grp in frame.sort_values([ID, LM]).groupby(ID, sort=True):
        rows = tuple(
            LandmarkRow(int(r[LM]), {n: r[n] for n in schema.names}) for _, r in grp.iterrows()
        )
        first = grp.iloc[0]
        adm = grp[ADMISSION].iloc[0] if ADMISSION in grp else eid
        adm = adm.item() if hasattr(adm, "item") else adm
        out.append(Episode(eid, adm, float(first[TIME]), int(first[TYPE]), rows))
    return out


def _coerce(frame, schema):
    frame = frame.copy()
    frame[LM] = frame[LM].astype(np.int64)
    frame[TYPE] = frame[TYPE].astype(np.int64)
    frame[TIME] = frame[TIME].astype(np.float64)
    for name in schema.names:
        frame[name] = frame[name].astype(np.float64)
    return frame


def validate_episode_frame(frame: pd.DataFrame, schema: Schema):
    """Check structural invariants of an episode (or stacked) frame.

    Raises :class:`ValidationError` naming the first offending row.
    """
    missing = [c for c in (ID, LM, TIME, TYPE, *schema.names) if c not in frame.columns]
    if missing:
        raise ValidationError(f"frame lacks columns {missing}")
    if frame.duplicated([ID, LM]).any():
        idx = frame.index[frame.duplicated([ID, LM])][0]
        raise ValidationError(f"row {idx}: duplicate (ID, LM)")
    if not frame[TYPE].isin(EVENT_TYPES).all():
        raise ValidationError("unknown event type code")
    if (frame[TIME] <= 0).any():
        idx = frame.index[frame[TIME] <= 0][0]
        raise ValidationError(f"row {idx}: episode event time must be > 0")
    for p in schema:
        col = frame[p.name]
        obs = col.dropna()
        if np.isinf(obs).any():
            raise ValidationError(f"predictor {p.name!r}: non-finite value")
        if p.kind == "binary" and not obs.isin((0.0, 1.0)).all():
            raise ValidationError(f"predictor {p.name!r}: binary values must be 0/1")
        if p.kind in ("count", "ordinal") and (obs < 0).any():
            raise ValidationError(f"predictor {p.name!r}: counts must be >= 0")


def stack_landmarks(episodes, schema: Schema, s0=0, sL=30, w=7.0) -> StackedDataset:
    """Build the stacked landmark super-dataset.

    For each landmark ``s`` in ``[s0, sL]`` every episode still event-free at
    ``s`` contributes its landmark row; follow-up is cut at ``s + w``.
    Episodes lacking a recorded row at an at-risk landmark get an all-missing
    row, with static predictors copied from their first recorded row.

    Parameters
    ----------
    episodes : DataFrame or sequence of Episode
    schema : Schema
    s0, sL : int
        First and last landmark day.
    w : float
        Prediction horizon in days.
    """
    if s0 > sL:
        raise ValidationError(f"s0={s0} exceeds sL={sL}")
    if not w > 0:
        raise ValidationError("horizon must be positive")
    frame = episodes if isinstance(episodes, pd.DataFrame) else episodes_to_frame(episodes, schema)
    cols = [ID, ADMISSION, LM, *schema.names, TIME, TYPE]
    if frame.empty:
        return StackedDataset(pd.DataFrame(columns=cols), float(w), s0, sL)
    if ADMISSION not in frame:
        frame = frame.assign(**{ADMISSION: frame[ID]})
    frame = frame.sort_values([ID, LM], kind="mergesort")

    heads = frame.groupby(ID, sort=True).head(1).set_index(ID)
    event_time = heads[TIME]
    last_lm = np.floor(np.nextafter(event_time.to_numpy(), -np.inf)).astype(np.int64)
    n_rows = np.clip(np.minimum(last_lm, sL) - s0 + 1, 0, None)
    ids = np.repeat(heads.index.to_numpy(), n_rows)
    lms = np.concatenate([np.arange(s0, s0 + k) for k in n_rows]) if len(n_rows) else np.array([], int)
    skeleton = pd.DataFrame({ID: ids, LM: lms.astype(np.int64)})

    body = frame[[ID, LM, *schema.names]]
    stacked = skeleton.merge(body, on=[ID, LM], how="left")
    static = [p.name for p in schema if p.baseline_only]
    if static:
        first_static = heads[static]
        stacked[static] = first_static.loc[stacked[ID]].to_numpy()
    raw_t = event_time.loc[stacked[ID]].to_numpy()
    raw_type = heads[TYPE].loc[stacked[ID]].to_numpy()
    s = stacked[LM].to_numpy().astype(float)
    beyond = raw_t > s + w
    stacked[ADMISSION] = heads[ADMISSION].loc[stacked[ID]].to_numpy()
    stacked[TIME] = np.where(beyond, s + w, raw_t)
    stacked[TYPE] = np.where(beyond, CENSORED, raw_type).astype(np.int64)
    stacked = stacked[cols].reset_index(drop=True)
    return StackedDataset(_coerce(stacked, schema), float(w), s0, sL)


def apply_lumen_rules(data, schema: Schema):
    """Deterministic lumen rewrites applied before any imputation.

    A lumen count is set to 0 (and marked observed) when its catheter type is
    absent; when the type is present and the predictor declares a
    ``fixed_count``, the count is forced to that value.

    Accepts a :class:`LandmarkRow` or a frame and returns the same kind.
    """
    links = schema.lumen_links
    if isinstance(data, LandmarkRow):
        vals = dict(data.values)
        for name, link in links.items():
            t = vals.get(link, np.nan)
            if t == 0:
                vals[name] = 0.0
            elif t == 1 and schema[name].fixed_count is not None:
                vals[name] = float(schema[name].fixed_count)
        return LandmarkRow(data.s, vals)
    out = data.copy()
    for name, link in links.items():
        t = out[link].to_numpy()
        v = out[name].to_numpy(dtype=float).copy()
        v[t == 0] = 0.0
        fixed = schema[name].fixed_count
        if fixed is not None:
            v[t == 1] = float(fixed)
        out[name] = v
    return out


class LogTransformer(TransformerMixin, BaseEstimator):
    """Natural log of the schema's log-flagged predictors.

    Stateless; ``fit`` only validates. Missing values stay missing.
    """

    def __init__(self, schema=None):
        self.schema = schema

    def fit(self, X, y=None):
        self._check(X)
        return self

    def _check(self, X):
        for name in self.schema.log_names:
            col = X[name]
            bad = col.notna() & ~(col > 0)
            if bad.any():
                idx = col.index[bad.to_numpy()][0]
                raise ValidationError(f"row {idx}: nonpositive value {col[idx]} for log-transformed {name!r}")

    def transform(self, X):
        self._check(X)
        out = X.copy()
        for name in self.schema.log_names:
            out[name] = np.log(out[name].to_numpy(dtype=float))
        return out

    def inverse_transform(self, X):
        out = X.copy()
        for name in self.schema.log_names:
            out[name] = np.exp(out[name].to_numpy(dtype=float))
        return out


def transform_labs(frame, schema):
    """Log-transform flagged laboratory predictors."""
    return LogTransformer(schema).fit_transform(frame)
