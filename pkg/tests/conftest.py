"""Shared fixtures.

Case datasets are expensive to generate (minutes each on one core), so the
first run writes them to ``tests/.cache`` (or ``$CASIMIR_TEST_CACHE``) and
later runs reload them. A cached file is only trusted if its header matches
the current case settings and a few incidences regenerate bit-for-bit.
"""
import os
from pathlib import Path

import numpy as np
import pytest

from casimir_inverse import __version__
from casimir_inverse.cases import case_ranges
from casimir_inverse.dataset import (
    _ranges_to_str,
    generate_dataset,
    make_incidence,
    read_dataset,
    write_dataset,
)

CACHE = Path(os.environ.get("CASIMIR_TEST_CACHE", Path(__file__).parent / ".cache"))
DATA_SEED = 11
_loaded = {}


def _cache_is_current(ds, case):
    if ds.case != case or ds.master_seed != DATA_SEED:
        return False
    if _ranges_to_str(ds.ranges) != _ranges_to_str(case_ranges(case)):
        return False
    for pos in (0, len(ds) // 2, len(ds) - 1):
        inc = ds.incidences[pos]
        fresh = make_incidence(inc.index, DATA_SEED, ds.ranges, ds.grid, ds.schema, ds.quad)
        if not (np.array_equal(fresh.X, inc.X) and np.array_equal(fresh.Y, inc.Y)):
            return False
    return True


def case_dataset(case):
    """Full-size dataset of ``case`` generated from master seed 11."""
    if case in _loaded:
        return _loaded[case]
    path = CACHE / f"{case}-seed{DATA_SEED}.csv"
    ds = None
    if path.exists():
        ds = read_dataset(path)
        if not _cache_is_current(ds, case):
            ds = None
    if ds is None:
        ds = generate_dataset(case, DATA_SEED)
        CACHE.mkdir(parents=True, exist_ok=True)
        write_dataset(ds, path, extra_header={"generated_by": f"test cache {__version__}"})
    _loaded[case] = ds
    return ds


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# Reduced budgets for the silicon-case models shared by the pipeline and
# acceptance tests. The denoiser uses a larger step than the default because
# it gets 2e4 epochs instead of 1e6.
SILICON_CHARACTERIZER = dict(learning_rate=0.1, epochs=5_000, batch_size=200, seed=1)
SILICON_DENOISER = dict(learning_rate=0.05, epochs=20_000, batch_size=200, seed=1)


@pytest.fixture(scope="session")
def silicon_split():
    from casimir_inverse.dataset import split_dataset

    return split_dataset(case_dataset("silicon"), 1600)


@pytest.fixture(scope="session")
def silicon_characterizer(silicon_split):
    from casimir_inverse.neuralnet import TrainConfig
    from casimir_inverse.pipeline import train_characterizer

    return train_characterizer(silicon_split[0], TrainConfig(**SILICON_CHARACTERIZER))[0]


@pytest.fixture(scope="session")
def silicon_denoiser(silicon_split):
    from casimir_inverse.cases import NOISE_SIGMA
    from casimir_inverse.neuralnet import TrainConfig
    from casimir_inverse.pipeline import characterizer_meta, train_denoiser

    train_set = silicon_split[0]
    cfg = TrainConfig(**SILICON_DENOISER)
    meta = {"grid": characterizer_meta(train_set, cfg)["grid"]}
    return train_denoiser(train_set.X, NOISE_SIGMA, cfg, meta=meta)[0]
