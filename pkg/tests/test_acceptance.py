"""Acceptance criteria 1-12, each reported as one PASS/FAIL line."""
import filecmp
import time

import numpy as np
import pandas as pd
import pytest
from scipy.special import expit

from dynimpute.datamodel import ID, LM, TIME, TYPE, PredictorSchema, Schema, stack_landmarks
from dynimpute.harness import ExperimentConfig, prepare, run_experiment, split_by_admission
from dynimpute.imputers import MICEImputer, MissForestImputer, make_imputer
from dynimpute.landmark import LandmarkSupermodel
from dynimpute.metrics import calibration_slope, eci, oe_ratio, scaled_brier
from dynimpute.solvers import fit_cox_breslow, fit_glm
from dynimpute.synthgen import (
    GeneratorConfig,
    PredictorProcess,
    desk_config,
    desk_missingness,
    generate_cohort,
    impose_missingness,
)

RUNTIME_ORDER = ["missing_indicator", "median_mode", "locf", "regression", "mixed_model", "missforest", "mice_xx"]


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number:>2}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return report


@pytest.fixture(scope="module")
def desk():
    cfg = desk_config(3000, seed=0)
    cohort = impose_missingness(generate_cohort(cfg), desk_missingness(), cfg.schema, seed=0)
    return cfg.schema, prepare(cohort, cfg.schema)


def test_criterion_01_stacking_fixture(ex_episodes, ex_schema, ex_expected, verdict):
    t0 = time.perf_counter()
    got = stack_landmarks(ex_episodes, ex_schema, s0=0, sL=30, w=7).frame
    elapsed = time.perf_counter() - t0
    triples = [tuple(r) for r in got[[ID, LM, TIME, TYPE]].itertuples(index=False)]
    expected = [tuple(r) for r in ex_expected[[ID, LM, TIME, TYPE]].itertuples(index=False)]
    ok = triples == expected and elapsed < 1.0
    verdict(1, ok, f"{len(triples)} stacked rows match the reference stacking, {elapsed:.3f}s")


def test_criterion_02_cox_oracle(verdict):
    rng = np.random.default_rng(2024)
    n = 2000
    x = (rng.random(n) < 0.5).astype(float)
    t = rng.exponential(1.0, n) / np.where(x == 1, 2.0, 1.0)
    c = rng.exponential(2.0, n)
    times, status = np.minimum(t, c), (t <= c).astype(float)
    t0 = time.perf_counter()
    beta = fit_cox_breslow(times, status, x).coefficients[0]
    elapsed = time.perf_counter() - t0

    # brute-force partial likelihood (no ties) over beta in [0, 2], step 1e-4
    order = np.argsort(times)
    xs, ds = x[order], status[order] == 1
    n1 = np.cumsum(xs[::-1])[::-1][ds]
    n0 = (np.arange(n, 0, -1))[ds] - n1
    grid = np.round(np.arange(0, 20001) * 1e-4, 4)
    best, arg = -np.inf, None
    for chunk in np.array_split(grid, 40):
        ll = chunk * xs[ds].sum() - np.log(n0[None, :] + n1[None, :] * np.exp(chunk)[:, None]).sum(1)
        k = int(np.argmax(ll))
        if ll[k] > best:
            best, arg = ll[k], chunk[k]
    ok = abs(beta - np.log(2)) <= 0.1 and abs(beta - arg) <= 1e-3 and elapsed < 10
    verdict(2, ok, f"beta={beta:.5f}, ln2={np.log(2):.5f}, grid argmax={arg:.4f}, {elapsed:.2f}s")


def test_criterion_03_glm_oracle(verdict):
    x = np.r_[np.zeros(40), np.ones(50)]
    y = np.r_[np.ones(10), np.zeros(30), np.ones(30), np.zeros(20)]
    slope = fit_glm(x, y, "binomial", ridge=0.0).coefficients[1]
    closed = np.log((10 / 30) ** -1 * (30 / 20))
    verdict(3, abs(slope - closed) <= 1e-6, f"slope={slope:.10f}, log OR={closed:.10f}")


@pytest.fixture(scope="module")
def constant_hazard():
    """Two causes with time-constant hazards r_j exp(b_j x) and a static x."""
    schema = Schema([PredictorSchema("x", baseline_only=True)])
    rates, betas = {1: 0.02, 2: 0.06}, {1: 0.5, 2: -0.3}
    cfg = GeneratorConfig(n_episodes=5000, schema=schema, processes={"x": PredictorProcess(0.0, 1.0)},
                          cause_coefficients={j: {"x": b} for j, b in betas.items()}, baseline_rates=rates,
                          random_intercept_sd=0.0, seed=44)
    t0 = time.perf_counter()
    stacked = prepare(generate_cohort(cfg), schema)
    model = LandmarkSupermodel(["x"], icu=None, causes=(1, 2)).fit(stacked)
    requests = pd.DataFrame([(s, x) for s in (0, 3, 7) for x in (-1.0, 0.0, 1.0)], columns=[LM, "x"])
    S = model.predict_survival(requests)
    F = np.array([model.predict_cif(requests, j) for j in (1, 2)])
    elapsed = time.perf_counter() - t0

    rng = np.random.default_rng(7)
    mc_s, mc_f1 = [], []
    for _, req in requests.iterrows():
        lam = np.array([rates[j] * np.exp(betas[j] * req["x"]) for j in (1, 2)])
        # hazards are memoryless: paths alive at s restart there
        draws = rng.exponential(1.0, (100000, 2)) / lam
        first = draws.min(axis=1)
        mc_s.append(np.mean(first > 7))
        mc_f1.append(np.mean((draws[:, 0] <= draws[:, 1]) & (first <= 7)))
    return model, stacked, requests, S, F, np.array(mc_s), np.array(mc_f1), elapsed


def test_criterion_04_simulation_oracle(constant_hazard, verdict):
    _, _, _, S, F, mc_s, mc_f1, elapsed = constant_hazard
    err_s, err_f = np.max(np.abs(S - mc_s)), np.max(np.abs(F[0] - mc_f1))
    ok = err_s <= 0.02 and err_f <= 0.02 and elapsed < 120
    verdict(4, ok, f"max |S - MC|={err_s:.4f}, max |F1 - MC|={err_f:.4f} over s in (0,3,7) x 3 covariate "
                   f"values, fit+predict {elapsed:.1f}s")


def test_criterion_05_adding_up(constant_hazard, verdict):
    model, stacked, requests, S, F, *_ = constant_hazard
    rows = pd.concat([requests, stacked.sample(2000, random_state=0)[[LM, "x"]]], ignore_index=True)
    S_all = model.predict_survival(rows)
    F_all = sum(model.predict_cif(rows, j) for j in (1, 2))
    gap = float(np.max(np.abs(1 - S_all - F_all)))
    verdict(5, gap <= 0.01, f"max |1 - S - sum F| = {gap:.5f} over {len(rows)} requests")


@pytest.fixture(scope="module")
def desk_split_full(desk):
    schema, stacked = desk
    train, valid = split_by_admission(stacked, 2 / 3, seed=1)
    return schema, train, valid


def test_criterion_06_deployment_contract(desk_split_full, verdict):
    schema, train, valid = desk_split_full
    tags = RUNTIME_ORDER + ["mice_yx"] + [f"{t}+ind" for t in RUNTIME_ORDER[1:] + ["mice_yx"]]
    picks = np.random.default_rng(6).choice(len(valid), size=200, replace=False)
    bad = {}
    for tag in tags:
        imp = make_imputer(tag, schema, seed=11).fit(train)
        batch = imp.impute(valid)
        names = list(imp.get_feature_names_out())
        mismatches = 0
        for i in picks:
            eid, s = valid[ID].iloc[i], valid[LM].iloc[i]
            rows = imp.impute_row(valid[(valid[ID] == eid) & (valid[LM] <= s)])
            for c, row in enumerate(rows):
                if not np.array_equal(row[names].to_numpy(float), batch[c].loc[i, names].to_numpy(float)):
                    mismatches += 1
        if mismatches:
            bad[tag] = mismatches
    verdict(6, not bad, f"{len(tags)} strategies x 200 rows, single-row == in-batch"
                        + (f"; mismatches {bad}" if bad else " exactly"))


def test_criterion_07_chained_equations(desk_split_full, verdict):
    schema, train, valid = desk_split_full
    imp = MICEImputer(schema, m=10, maxit=10, seed=3).fit(train)
    done = imp.impute(valid)
    cols = imp._columns()
    worst = 0.0
    for j, name in enumerate(cols):
        sd = train[name].std()
        if not train[name].isna().any() or not sd > 0:
            continue
        spread = np.ptp(imp.chain_means_[:, 4:10, j], axis=1).max() / sd
        worst = max(worst, spread)
    complete = all(not d[schema.names].isna().any().any() for d in done)
    ok = len(done) == 10 and complete and worst < 0.5
    verdict(7, ok, f"{len(done)} completed validation sets, max chain-mean range over iterations 5-10 = "
                   f"{worst:.3f} observed SD")


def test_criterion_08_missforest_nmse(verdict):
    rng = np.random.default_rng(8)
    n = 2000
    x1, x2, noise = rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)
    mask = rng.random(n) < 0.3
    schema = Schema([PredictorSchema("x1"), PredictorSchema("x2"), PredictorSchema("y")])
    base = pd.DataFrame({ID: np.arange(n), LM: 0, "x1": x1, "x2": x2})
    noisy = MissForestImputer(schema, seed=1).fit(base.assign(y=np.where(mask, np.nan, noise)))
    additive = MissForestImputer(schema, seed=1).fit(base.assign(y=np.where(mask, np.nan, x1 + x2)))
    a, b = noisy.oob_nmse_["y"], additive.oob_nmse_["y"]
    verdict(8, 0.9 <= a <= 1.25 and b < 0.5, f"noise target NMSE={a:.3f}, y=x1+x2 NMSE={b:.3f}")


def test_criterion_09_metric_self_calibration(verdict):
    rng = np.random.default_rng(9)
    p = expit(rng.normal(-1.5, 1.2, 10000))
    y = (rng.random(10000) < p).astype(float)
    slope, oe, e, sb = calibration_slope(p, y), oe_ratio(p, y), eci(p, y), scaled_brier(p, y)
    ybar = y.mean()
    oracle = 1 - np.mean(p * (1 - p)) / (ybar * (1 - ybar))
    ok = abs(slope - 1) <= 0.1 and abs(oe - 1) <= 0.05 and e <= 0.5 and abs(sb - oracle) <= 0.02
    verdict(9, ok, f"slope={slope:.3f}, O/E={oe:.3f}, ECI={e:.3f}, scaled Brier={sb:.4f} vs oracle {oracle:.4f}")


@pytest.mark.slow
def test_criterion_10_directional_replication(verdict):
    t0 = time.perf_counter()
    wins, lines = 0, []
    for seed in range(5):
        cfg = ExperimentConfig(
            data={"generator": {"preset": "desk", "n_episodes": 3000, "seed": seed}, "missingness": "desk"},
            strategies=["missing_indicator", "median_mode"], n_splits=20, seed=seed)
        metrics = run_experiment(cfg).metrics
        auc = metrics[(metrics["metric"] == "auroc") & (metrics["landmark"] <= 7) & (metrics["status"] == "ok")]
        means = auc.pivot_table(index="landmark", columns="strategy", values="value", aggfunc="mean")
        diff = means["missing_indicator"] - means["median_mode"]
        won = len(diff) == 8 and bool((diff > 0).all())
        wins += won
        lines.append(f"seed {seed}: {'win' if won else 'loss'} (min diff {diff.min():+.3f}, "
                     f"mean diff {diff.mean():+.3f})")
    elapsed = time.perf_counter() - t0
    ok = wins >= 4 and elapsed < 1800
    verdict(10, ok, f"MI > MM at every landmark 0-7 in {wins}/5 seeds, {elapsed / 60:.1f} min; "
                    + "; ".join(lines))


@pytest.mark.slow
def test_criterion_11_runtime_ordering(desk, verdict):
    schema, stacked = desk
    times = {tag: [] for tag in RUNTIME_ORDER}
    for split in range(5):
        train, valid = split_by_admission(stacked, 2 / 3, seed=100 + split)
        for tag in RUNTIME_ORDER:
            imp = make_imputer(tag, schema, seed=split)
            t0 = time.perf_counter()
            imp.fit_impute(train)
            imp.impute(valid)
            times[tag].append(time.perf_counter() - t0)
    med = {tag: float(np.median(v)) for tag, v in times.items()}
    checks = [med[a] < med[b] for a, b in zip(RUNTIME_ORDER[:4], RUNTIME_ORDER[1:5])]
    checks += [med["mixed_model"] <= med["missforest"], med["missforest"] < med["mice_xx"]]
    broken = [f"{a} !< {b}" for ok, a, b in zip(checks, RUNTIME_ORDER[:-1], RUNTIME_ORDER[1:]) if not ok]
    detail = ", ".join(f"{t}={med[t]:.3f}s" for t in RUNTIME_ORDER)
    verdict(11, all(checks), f"impute-phase medians over 5 splits: {detail}"
                             + (f"; order broken at {broken}" if broken else ""))


def test_criterion_12_determinism(tmp_path, verdict):
    dirs = []
    for run in ("a", "b"):
        cfg = ExperimentConfig(
            data={"generator": {"preset": "desk", "n_episodes": 1000, "seed": 5}, "missingness": "desk"},
            strategies=["missing_indicator", "locf", "mice_xx", "missforest+ind"], n_splits=2, seed=12,
            imputer_params={"mice_xx": {"m": 3, "maxit": 3}, "missforest": {"ntrees": 20, "maxiter": 3}},
            output_dir=str(tmp_path / run), save_models="none")
        run_experiment(cfg)
        dirs.append(tmp_path / run / "metrics.csv")
    same = filecmp.cmp(dirs[0], dirs[1], shallow=False)
    size = dirs[0].stat().st_size
    verdict(12, same, f"two runs of the same config give {'bit-identical' if same else 'different'} "
                      f"metrics.csv ({size} bytes)")
