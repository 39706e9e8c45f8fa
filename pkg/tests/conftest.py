import numpy as np
import pandas as pd
import pytest

from dynimpute.datamodel import ID, LM, TIME, TYPE, Episode, LandmarkRow, PredictorSchema, Schema
from dynimpute.harness import prepare, split_by_admission
from dynimpute.synthgen import desk_config, desk_missingness, generate_cohort, impose_missingness

NA = np.nan

# Reference stacked data for four example episodes: (ID, LM, eventtime, type, icu, urea)
STACKED_EXAMPLE = [
    (1, 0, 4.42, 1, 0, 25), (1, 1, 4.42, 1, 0, NA), (1, 2, 4.42, 1, 0, 26), (1, 3, 4.42, 1, 1, NA),
    (1, 4, 4.42, 1, 0, 28),
    (2, 0, 7.00, 0, 1, 55), (2, 1, 8.00, 0, 1, 38), (2, 2, 9.00, 0, 1, 41), (2, 3, 9.34, 1, 1, 51),
    (2, 4, 9.34, 1, 1, 52), (2, 5, 9.34, 1, 1, NA), (2, 6, 9.34, 1, 1, 43), (2, 7, 9.34, 1, 1, 39),
    (2, 8, 9.34, 1, 1, NA), (2, 9, 9.34, 1, 1, 57),
    (3, 0, 1.29, 2, 1, 32), (3, 1, 1.29, 2, 1, NA),
    (4, 0, 4.56, 3, 0, 59), (4, 1, 4.56, 3, 0, 47), (4, 2, 4.56, 3, 0, 38), (4, 3, 4.56, 3, 0, 45),
    (4, 4, 4.56, 3, 0, 41),
]
RAW_EVENTS = {1: (4.42, 1), 2: (9.34, 1), 3: (1.29, 2), 4: (4.56, 3)}


@pytest.fixture
def ex_schema():
    return Schema([PredictorSchema("icu", "binary"), PredictorSchema("urea", "continuous", log_transform=True)])


@pytest.fixture
def ex_episodes():
    rows = {}
    for eid, s, _, _, icu, urea in STACKED_EXAMPLE:
        rows.setdefault(eid, []).append(LandmarkRow(s, {"icu": icu, "urea": urea}))
    return [Episode(eid, eid, t, typ, tuple(rows[eid])) for eid, (t, typ) in RAW_EVENTS.items()]


@pytest.fixture
def ex_expected():
    return pd.DataFrame(STACKED_EXAMPLE, columns=[ID, LM, TIME, TYPE, "icu", "urea"])


@pytest.fixture(scope="session")
def desk_schema_():
    return desk_config().schema


@pytest.fixture(scope="session")
def desk_stacked():
    """Prepared desk cohort (1200 episodes) with informative missingness."""
    cfg = desk_config(n_episodes=1200, seed=11)
    cohort = impose_missingness(generate_cohort(cfg), desk_missingness(), cfg.schema, seed=11)
    return prepare(cohort, cfg.schema)


@pytest.fixture(scope="session")
def desk_split(desk_stacked):
    return split_by_admission(desk_stacked, 2 / 3, seed=5)
