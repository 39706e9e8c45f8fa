import numpy as np
import pandas as pd
import pytest

from dynimpute.datamodel import ID, LM, TIME, TYPE, PredictorSchema, Schema
from dynimpute.exceptions import ConfigError
from dynimpute.synthgen import (
    SEVERITY,
    GeneratorConfig,
    MissingnessSpec,
    PredictorProcess,
    calibrate_baseline,
    desk_config,
    desk_missingness,
    episode_missing_fraction,
    generate_cohort,
    impose_missingness,
)


def _episodes(frame):
    return frame.groupby(ID).first()


def _simple(n, seed=0, **kw):
    schema = Schema([PredictorSchema("x"), PredictorSchema("b", "binary")])
    base = dict(n_episodes=n, schema=schema, baseline_rates={1: 0.05, 2: 0.05, 3: 0.1},
                random_intercept_sd=0.0, seed=seed)
    base.update(kw)
    return GeneratorConfig(**base)


def test_null_coefficients_give_rate_proportional_causes():
    eps = _episodes(generate_cohort(_simple(10000, seed=3)))
    events = eps[eps[TYPE] > 0]
    assert len(events) > 0.99 * len(eps)
    freq = events[TYPE].value_counts(normalize=True)
    for j, expected in {1: 0.25, 2: 0.25, 3: 0.5}.items():
        assert abs(freq[j] - expected) < 0.02


def test_independent_noise_has_no_autocorrelation():
    cfg = _simple(5000, seed=4, baseline_rates={3: 0.1}, processes={"x": PredictorProcess(0.0, 1.0, 0.0)})
    frame = generate_cohort(cfg).sort_values([ID, LM])
    nxt = frame.groupby(ID)["x"].shift(-1)
    ok = nxt.notna()
    assert abs(np.corrcoef(frame["x"][ok], nxt[ok])[0, 1]) < 0.05


def test_ar1_autocorrelation_matches_rho():
    cfg = _simple(3000, seed=4, baseline_rates={3: 0.05}, processes={"x": PredictorProcess(0.0, 1.0, 0.7)})
    frame = generate_cohort(cfg).sort_values([ID, LM])
    nxt = frame.groupby(ID)["x"].shift(-1)
    ok = nxt.notna()
    assert np.corrcoef(frame["x"][ok], nxt[ok])[0, 1] == pytest.approx(0.7, abs=0.05)


def test_same_seed_same_cohort():
    a = generate_cohort(desk_config(300, seed=9))
    b = generate_cohort(desk_config(300, seed=9))
    pd.testing.assert_frame_equal(a, b)
    assert not a.equals(generate_cohort(desk_config(300, seed=10)))


def test_zero_episodes_is_empty():
    assert len(generate_cohort(desk_config(0))) == 0


def test_cohort_structure():
    cfg = desk_config(500, seed=1)
    frame = generate_cohort(cfg)
    eps = _episodes(frame)
    assert (frame[LM] < frame[TIME]).all()
    assert (frame.groupby(ID)[LM].max() + 1 == np.ceil(eps[TIME]).clip(upper=cfg.max_days)).all()
    # lumen counts follow catheter presence
    assert (frame.loc[frame["cvc"] == 0, "cvc_lumens"] == 0).all()
    assert (frame.loc[frame["cvc"] == 1, "cvc_lumens"] >= 1).all()
    assert (frame.groupby(ID)["age"].nunique() == 1).all()
    assert (frame["urea"] > 0).all()


def test_config_validation():
    with pytest.raises(ConfigError):
        _simple(10, baseline_rates={1: 0.0})
    with pytest.raises(ConfigError):
        _simple(10, random_intercept_sd=-1.0)
    with pytest.raises(ConfigError):
        PredictorProcess(rho=1.0)
    with pytest.raises(ConfigError):
        _simple(10, cause_coefficients={1: {"nope": 1.0}})
    with pytest.raises(ConfigError):
        MissingnessSpec("MAR", 0.2, ("x",))
    with pytest.raises(ConfigError):
        MissingnessSpec("MCAR", 1.5, ("x",))
    with pytest.raises(ConfigError):
        MissingnessSpec("SOMETIMES", 0.5, ("x",))


def test_from_dict_round_trip():
    cfg = GeneratorConfig.from_dict({"n_episodes": 5, "schema": [{"name": "x"}], "baseline_rates": {"1": 0.1},
                                     "processes": {"x": {"mean": 1.0, "noise_sd": 0.5}}})
    assert cfg.baseline_rates == {1: 0.1} and cfg.process("x").mean == 1.0


@pytest.fixture(scope="module")
def desk_full():
    cfg = desk_config(2000, seed=2)
    return cfg, generate_cohort(cfg)


def test_mcar_rate(desk_full):
    cfg, frame = desk_full
    big = pd.concat([frame] * (100000 // len(frame) + 1), ignore_index=True).iloc[:100000]
    out = impose_missingness(big, [MissingnessSpec("MCAR", 0.3, ("temperature",))], cfg.schema, seed=1)
    assert abs(out["temperature"].isna().mean() - 0.3) < 0.01


def test_rate_edges_and_untouched_columns(desk_full):
    cfg, frame = desk_full
    none = impose_missingness(frame, [MissingnessSpec("MAR", 0.0, ("urea",), driver="icu", strength=1.0)],
                              cfg.schema)
    assert none["urea"].notna().all()
    full = impose_missingness(frame, [MissingnessSpec("MNAR", 1.0, ("urea", "temperature"), strength=1.0)],
                              cfg.schema)
    assert full["urea"].isna().all() and full["temperature"].isna().all()
    for col in ("icu", "cvc", "cvc_lumens", "age", TIME, TYPE):
        pd.testing.assert_series_equal(full[col], frame[col])


def test_unknown_driver_or_target(desk_full):
    cfg, frame = desk_full
    with pytest.raises(ConfigError):
        impose_missingness(frame, [MissingnessSpec("MAR", 0.2, ("urea",), driver="bmi")], cfg.schema)
    with pytest.raises(ConfigError):
        impose_missingness(frame, [MissingnessSpec("MCAR", 0.2, ("bmi",))], cfg.schema)
    with pytest.raises(ConfigError):
        impose_missingness(frame.drop(columns=SEVERITY),
                           [MissingnessSpec("INFORMATIVE", 0.2, ("urea",), strength=1.0)], cfg.schema)


def test_static_predictor_masked_per_episode(desk_full):
    cfg, frame = desk_full
    out = impose_missingness(frame, [MissingnessSpec("MCAR", 0.5, ("age",))], cfg.schema, seed=3)
    assert (out.groupby(ID)["age"].apply(lambda s: s.isna().nunique()) == 1).all()


def test_mar_direction(desk_full):
    cfg, frame = desk_full
    out = impose_missingness(frame, [MissingnessSpec("MAR", 0.3, ("urea",), driver="temperature",
                                                     strength=1.5)], cfg.schema, seed=2)
    miss = out["urea"].isna()
    assert frame["temperature"][miss].mean() > frame["temperature"][~miss].mean()


@pytest.mark.parametrize("strength", [2.0, -2.0])
def test_informative_missingness_correlates_with_outcome(strength):
    cfg = desk_config(5000, seed=6)
    frame = generate_cohort(cfg)
    spec = [MissingnessSpec("INFORMATIVE", 0.5, ("temperature", "urea"), strength=strength)]
    out = impose_missingness(frame, spec, cfg.schema, seed=6)
    frac = episode_missing_fraction(out, ["temperature", "urea"])
    eps = _episodes(out).loc[frac.index]
    clabsi = ((eps[TYPE] == 1) & (eps[TIME] <= 7)).astype(float)
    corr = np.corrcoef(frac, clabsi)[0, 1]
    assert np.sign(corr) == np.sign(strength) and abs(corr) > 0.05


def test_desk_prevalence_near_target():
    eps = _episodes(generate_cohort(desk_config(20000, seed=0)))
    assert (eps[TYPE] == 1).mean() == pytest.approx(0.031, abs=0.004)


def test_calibrate_baseline_hits_target():
    cfg = calibrate_baseline(desk_config(1000, baseline_rates={1: 0.005, 2: 0.01, 3: 0.13}), target=0.05,
                             n_pilot=10000, tol=1e-3)
    eps = _episodes(generate_cohort(GeneratorConfig(**{**cfg.__dict__, "n_episodes": 10000})))
    assert (eps[TYPE] == 1).mean() == pytest.approx(0.05, abs=0.005)


def test_desk_missingness_levels(desk_full):
    cfg, frame = desk_full
    out = impose_missingness(frame, desk_missingness(), cfg.schema, seed=0)
    assert out["urea"].isna().mean() > out["temperature"].isna().mean() > 0.1
    assert out["icu"].notna().all()
