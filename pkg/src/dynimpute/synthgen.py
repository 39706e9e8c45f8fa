"""Synthetic longitudinal cohorts with competing risks and missingness.

Each episode carries a latent severity ``u ~ N(0, sigma_u^2)``. Every
predictor is driven by a latent process ``mean + loading * u + a_t`` where
``a_t`` is a stationary AR(1) series across daily landmarks; binary, count
and ordinal predictors are derived from that latent value. Event times come
from cause-specific hazards that are constant within each day.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.special import logit

from .datamodel import ADMISSION, ID, LM, TIME, TYPE, PredictorSchema, Schema, _coerce
from .exceptions import ConfigError

SEVERITY = "severity"
MECHANISMS = ("MCAR", "MAR", "MNAR", "INFORMATIVE")


@dataclass(frozen=True)
class PredictorProcess:
    """Latent process ``mean + loading * u + a_t``; ``a_t`` is AR(1) with
    coefficient ``rho`` and innovation SD ``noise_sd``."""

    mean: float = 0.0
    noise_sd: float = 1.0
    rho: float = 0.0
    loading: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError("AR(1) coefficient must lie in [0, 1)")
        if self.noise_sd < 0:
            raise ConfigError("noise SD must be >= 0")


@dataclass
class GeneratorConfig:
    n_episodes: int = 3000
    schema: Schema = None
    processes: dict = field(default_factory=dict)
    cause_coefficients: dict = field(default_factory=dict)
    severity_effects: dict = field(default_factory=dict)
    baseline_rates: dict = field(default_factory=dict)
    random_intercept_sd: float = 1.0
    max_days: int = 60
    multi_episode_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.schema is None:
            self.schema = desk_schema()
        elif not isinstance(self.schema, Schema):
            self.schema = Schema(self.schema)
        self.processes = {k: v if isinstance(v, PredictorProcess) else PredictorProcess(**v)
                          for k, v in self.processes.items()}
        self.baseline_rates = {int(k): float(v) for k, v in self.baseline_rates.items()}
        self.cause_coefficients = {int(k): dict(v) for k, v in self.cause_coefficients.items()}
        self.severity_effects = {int(k): float(v) for k, v in self.severity_effects.items()}
        if any(r <= 0 for r in self.baseline_rates.values()):
            raise ConfigError("baseline rates must be > 0")
        if self.random_intercept_sd < 0:
            raise ConfigError("random intercept SD must be >= 0")
        if not set(self.baseline_rates) <= {1, 2, 3}:
            raise ConfigError("causes must be among 1, 2, 3")
        for cause, coefs in self.cause_coefficients.items():
            unknown = set(coefs) - set(self.schema.names)
            if unknown:
                raise ConfigError(f"cause {cause}: unknown predictors {sorted(unknown)}")

    def process(self, name):
        return self.processes.get(name, PredictorProcess())

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "schema" in d and d["schema"] is not None:
            d["schema"] = Schema.from_list(d["schema"])
        return cls(**d)


@dataclass(frozen=True)
class MissingnessSpec:
    """Missingness imposed on ``targets``.

    ``driver`` names a complete predictor for MAR; MNAR always drives on the
    masked value itself and INFORMATIVE on the latent severity. Drivers are
    standardized, so ``strength`` is a log-odds change per driver SD.
    """

    mechanism: str
    rate: float
    targets: tuple = ()
    driver: str | None = None
    strength: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"unknown missingness mechanism {self.mechanism!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError("missingness rate must be in [0, 1]")
        if self.mechanism == "MAR" and not self.driver:
            raise ConfigError("MAR missingness requires a driver predictor")


def desk_schema():
    return Schema([
        PredictorSchema("age", "continuous", baseline_only=True),
        PredictorSchema("icu", "binary"),
        PredictorSchema("cvc", "binary"),
        PredictorSchema("cvc_lumens", "count", linked_catheter_type="cvc"),
        PredictorSchema("temperature", "continuous"),
        PredictorSchema("urea", "continuous", log_transform=True),
    ])


def desk_config(n_episodes=3000, seed=0, **overrides):
    """Default desk-scale generator (6 predictors, CLABSI near 3.1%)."""
    cfg = dict(
        n_episodes=n_episodes,
        schema=desk_schema(),
        processes={
            "age": PredictorProcess(60.0, 15.0, 0.0, 2.0),
            "icu": PredictorProcess(-1.0, 0.6, 0.8, 0.5),
            "cvc": PredictorProcess(0.4, 0.45, 0.9, 0.0),
            "cvc_lumens": PredictorProcess(1.6, 0.3, 0.9, 0.1),
            "temperature": PredictorProcess(36.8, 0.4, 0.5, 0.15),
            "urea": PredictorProcess(3.5, 0.25, 0.7, 0.1),
        },
        cause_coefficients={
            1: {"icu": 0.5, "cvc_lumens": 0.25, "temperature": 0.8, "urea": 0.6},
            2: {"icu": 1.0, "urea": 0.5, "age": 0.02},
            3: {"icu": -0.7, "temperature": -0.2},
        },
        severity_effects={1: 0.9, 2: 0.5, 3: -0.2},
        baseline_rates={1: 0.00129, 2: 0.01, 3: 0.13},
        random_intercept_sd=1.0,
        seed=seed,
    )
    cfg.update(overrides)
    return GeneratorConfig(**cfg)


def desk_missingness(informative_strength=-2.0):
    """Missingness preset: lab and vital values are measured more often in
    sicker episodes, lumen counts are missing at random."""
    return [
        MissingnessSpec("MCAR", 0.4, ("cvc_lumens",)),
        MissingnessSpec("MCAR", 0.02, ("age",)),
        MissingnessSpec("INFORMATIVE", 0.3, ("temperature",), strength=informative_strength),
        MissingnessSpec("INFORMATIVE", 0.8, ("urea",), strength=informative_strength),
    ]


def _latent_paths(rng, n, days, proc, u, static):
    if static:
        a = rng.normal(0.0, proc.noise_sd, size=(n, 1)) * np.ones((1, days))
    else:
        a = np.empty((n, days))
        sd0 = proc.noise_sd / math.sqrt(1.0 - proc.rho**2)
        a[:, 0] = rng.normal(0.0, sd0, size=n)
        eps = rng.normal(0.0, proc.noise_sd, size=(n, days - 1))
        for t in range(1, days):
            a[:, t] = proc.rho * a[:, t - 1] + eps[:, t - 1]
    return proc.mean + proc.loading * u[:, None] + a


def _simulate_values(cfg, rng, u):
    """Predictor arrays (n, days) on the raw scale and on the model scale."""
    n, days = cfg.n_episodes, cfg.max_days
    raw, model = {}, {}
    for p in cfg.schema:
        if p.linked_catheter_type:
            continue
        latent = _latent_paths(rng, n, days, cfg.process(p.name), u, p.baseline_only)
        raw[p.name], model[p.name] = _derive(p, latent)
    for p in cfg.schema:
        if not p.linked_catheter_type:
            continue
        latent = _latent_paths(rng, n, days, cfg.process(p.name), u, p.baseline_only)
        vals, _ = _derive(p, latent)
        present = raw[p.linked_catheter_type] == 1
        vals = np.where(present, np.maximum(vals, 1.0), 0.0)
        raw[p.name] = model[p.name] = vals
    return raw, model


def _derive(p, latent):
    if p.kind == "continuous":
        return (np.exp(latent), latent) if p.log_transform else (latent, latent)
    if p.kind == "binary":
        v = (latent > 0).astype(float)
        return v, v
    v = np.maximum(np.round(latent), 0.0)
    return v, v


def _simulate(cfg):
    """Latent severity, predictor arrays and event times for ``cfg``."""
    schema = cfg.schema
    n = int(cfg.n_episodes)
    rng = np.random.default_rng(cfg.seed)
    u = rng.normal(0.0, cfg.random_intercept_sd, size=n) if cfg.random_intercept_sd > 0 else np.zeros(n)
    raw, model = _simulate_values(cfg, rng, u)

    days = cfg.max_days
    causes = sorted(cfg.baseline_rates)
    lp = {}
    for j in causes:
        eta = np.full((n, days), cfg.severity_effects.get(j, 0.0)) * u[:, None]
        for name, b in cfg.cause_coefficients.get(j, {}).items():
            center = cfg.process(name).mean if schema[name].kind == "continuous" else 0.0
            eta = eta + b * (model[name] - center)
        lp[j] = np.log(cfg.baseline_rates[j]) + eta

    event_time = np.full(n, float(days))
    event_type = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    for d in range(days):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        draws = np.column_stack([rng.exponential(1.0, idx.size) / np.exp(lp[j][idx, d]) for j in causes])
        first = draws.argmin(axis=1)
        wait = draws[np.arange(idx.size), first]
        hit = wait < 1.0
        event_time[idx[hit]] = d + wait[hit]
        event_type[idx[hit]] = np.asarray(causes)[first[hit]]
        alive[idx[hit]] = False
    extra = rng.random(n) < cfg.multi_episode_prob
    return u, raw, event_time, event_type, extra


def generate_cohort(config: GeneratorConfig) -> pd.DataFrame:
    """Simulate a fully observed cohort.

    Returns a long-format frame (one row per episode landmark) with columns
    ``ID, admission_id, LM, <predictors>, eventtime, type, severity``.
    Episodes still event-free after ``max_days`` are censored there.
    """
    cfg = config
    schema = cfg.schema
    cols = [ID, ADMISSION, LM, *schema.names, TIME, TYPE, SEVERITY]
    n = int(cfg.n_episodes)
    if n <= 0:
        return pd.DataFrame(columns=cols)
    u, raw, event_time, event_type, extra = _simulate(cfg)

    # consecutive episodes share an admission with probability multi_episode_prob
    extra[0] = False
    admission = np.cumsum(~extra)

    n_rows = np.clip(np.ceil(event_time).astype(np.int64), 1, cfg.max_days)
    ep = np.repeat(np.arange(n), n_rows)
    lm = np.arange(len(ep)) - np.repeat(np.cumsum(n_rows) - n_rows, n_rows)
    frame = pd.DataFrame({ID: ep + 1, ADMISSION: admission[ep], LM: lm})
    for name in schema.names:
        frame[name] = raw[name][ep, lm]
    frame[TIME] = event_time[ep]
    frame[TYPE] = event_type[ep]
    frame[SEVERITY] = u[ep]
    return _coerce(frame[cols], schema)


def calibrate_baseline(config: GeneratorConfig, target=0.031, cause=1, n_pilot=20000, tol=5e-4, max_iter=30):
    """Bisect the baseline rate of ``cause`` so its episode-level frequency
    matches ``target`` in a pilot simulation with common random numbers."""
    def freq(log_rate):
        rates = dict(config.baseline_rates)
        rates[cause] = math.exp(log_rate)
        pilot = replace(config, n_episodes=n_pilot, baseline_rates=rates)
        return float(np.mean(_simulate(pilot)[3] == cause))

    start = math.log(config.baseline_rates[cause])
    lo, hi = start - 4.0, start + 4.0
    mid = start
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f = freq(mid)
        if abs(f - target) < tol:
            break
        lo, hi = (mid, hi) if f < target else (lo, mid)
    rates = dict(config.baseline_rates)
    rates[cause] = math.exp(mid)
    return replace(config, baseline_rates=rates)


def _standardize(x):
    x = np.asarray(x, dtype=float)
    sd = np.nanstd(x)
    if not sd > 0:
        return np.zeros_like(x)
    return (x - np.nanmean(x)) / sd


def impose_missingness(cohort: pd.DataFrame, specs, schema: Schema, seed=0) -> pd.DataFrame:
    """Mask predictor values according to ``specs``.

    MCAR masks with probability ``rate``. The other mechanisms shift the
    log-odds of missingness by ``strength`` times a standardized driver: a
    complete predictor (MAR), the masked value itself (MNAR) or the
    episode's latent severity (INFORMATIVE). Static predictors are masked
    once per episode.
    """
    rng = np.random.default_rng(seed)
    out = cohort.copy()
    original = cohort
    for spec in specs:
        for t in spec.targets:
            if t not in schema.names:
                raise ConfigError(f"missingness target {t!r} is not a predictor")
        if spec.mechanism == "MAR":
            if spec.driver not in schema.names:
                raise ConfigError(f"unknown MAR driver {spec.driver!r}")
            if spec.driver in spec.targets:
                raise ConfigError("a MAR driver cannot be one of its own targets")
        if spec.mechanism == "INFORMATIVE" and SEVERITY not in cohort:
            raise ConfigError("INFORMATIVE missingness needs the cohort's latent severity column")
        for t in spec.targets:
            if spec.rate <= 0.0:
                continue
            if spec.mechanism == "MCAR" or spec.rate >= 1.0:
                prob = np.full(len(out), spec.rate)
            else:
                if spec.mechanism == "MAR":
                    z = _standardize(original[spec.driver])
                elif spec.mechanism == "MNAR":
                    z = _standardize(original[t])
                else:
                    z = _standardize(original[SEVERITY])
                z = np.nan_to_num(z)
                prob = 1.0 / (1.0 + np.exp(-(logit(spec.rate) + spec.strength * z)))
            draw = rng.random(len(out))
            hit = draw < prob
            if schema[t].baseline_only:
                first = out.groupby(ID, sort=False)[LM].transform("min").to_numpy() == out[LM].to_numpy()
                per_ep = pd.Series(np.where(first, hit, False), index=out.index).groupby(out[ID]).transform("max")
                hit = per_ep.to_numpy(dtype=bool)
            col = out[t].to_numpy(dtype=float).copy()
            col[hit] = np.nan
            out[t] = col
    return out


def episode_missing_fraction(frame: pd.DataFrame, names):
    """Per-episode fraction of missing entries over ``names``."""
    miss = frame[list(names)].isna().mean(axis=1)
    return miss.groupby(frame[ID]).mean()
