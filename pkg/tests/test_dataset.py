import math

import numpy as np
import pytest

from casimir_inverse.cases import TRAINING_EXAMPLES, case_ranges
from casimir_inverse.dataset import (
    Dataset,
    TargetSchema,
    add_noise,
    feature_vector,
    gap_grid,
    generate_dataset,
    noisy_copy,
    params_from_target,
    read_dataset,
    read_header,
    regenerate_from_header,
    split_dataset,
    target_vector,
    write_dataset,
)
from casimir_inverse.errors import ConfigurationError, DomainError, ParseError, SchemaError
from casimir_inverse.lifshitz import QuadratureConfig, force_curve
from casimir_inverse.materials import SUM_RULE_LIMIT, FilmSample, SamplingRanges, oscillator_strength

from conftest import case_dataset

NM = 1e-9
SMALL_GRID = gap_grid(20 * NM, 1000 * NM, 6)


@pytest.fixture(scope="module")
def small_ds():
    return generate_dataset("two-pole-a", 5, n=12, grid=SMALL_GRID)


# --- grid ------------------------------------------------------------------------------


def test_case_grid():
    g = gap_grid(5 * NM, 2500 * NM, 20)
    gaps = g.gaps
    assert gaps[0] == 5 * NM and gaps[-1] == 2500 * NM
    assert gaps[1] / gaps[0] == pytest.approx(500 ** (1 / 19), rel=1e-14)
    assert 500 ** (1 / 19) == pytest.approx(1.38692, abs=1e-5)
    assert np.all(np.diff(gaps) > 0)
    np.testing.assert_allclose(np.diff(np.log(gaps)), math.log(500) / 19, rtol=1e-12)


def test_silicon_grid_and_two_point_grid():
    g = gap_grid(50 * NM, 2500 * NM, 20).gaps
    assert (g[0], g[-1]) == (50 * NM, 2500 * NM)
    assert list(gap_grid(3e-8, 6e-8, 2).gaps) == [3e-8, 6e-8]


def test_grid_errors():
    for args in [(0, 1e-6, 20), (1e-6, 1e-7, 20), (1e-8, 1e-6, 1)]:
        with pytest.raises(DomainError):
            gap_grid(*args)


# --- targets --------------------------------------------------------------------------


def test_target_vector_examples():
    schema = TargetSchema.from_ranges(case_ranges("two-pole-a"))
    assert schema.free_names == ["t", "w02"]
    film = FilmSample.from_params(dict(t=100 * NM, w01=0.0, wp1=1e15, g1=1e14,
                                       w02=1e15, wp2=4e15, g2=4e14))
    y = target_vector(film, schema)
    assert y[0] == pytest.approx(-23.0259, abs=1e-4)
    assert y[0] == pytest.approx(math.log(1e-10), rel=1e-15)
    assert y[1] == pytest.approx(34.5388, abs=1e-4)


def test_all_fixed_schema_is_empty():
    bounds = dict(t=(1e-7, 1e-7), w01=(0, 0), wp1=(1e15, 1e15), g1=(1e14, 1e14))
    schema = TargetSchema.from_ranges(SamplingRanges(bounds))
    assert schema.n_outputs == 0
    film = FilmSample.from_params({k: lo for k, (lo, _) in bounds.items()})
    assert target_vector(film, schema).shape == (0,)


def test_schema_sizes_per_case():
    assert TargetSchema.from_ranges(case_ranges("four-pole")).n_outputs == 12
    assert TargetSchema.from_ranges(case_ranges("silicon")).n_outputs == 13


def test_target_roundtrip():
    schema = TargetSchema.from_ranges(case_ranges("silicon"))
    sample = TRAINING_EXAMPLES["ii"]
    back = params_from_target(target_vector(sample, schema), schema, {})
    for k, v in sample.params().items():
        assert back[k] == pytest.approx(v, rel=1e-14)


# --- features -------------------------------------------------------------------------

S1_I_FEATURES = [
    7.38275855337, 6.82642627231, 6.13365480544, 5.32771733382, 4.45443028587,
    3.57374549929, 2.74574614956, 2.01746434548, 1.41625582546, 0.950374771085,
    0.613008436926, 0.386569762594, 0.246914208975, 0.167732083344, 0.124435475282,
    0.0972149259297, 0.0736991544303, 0.0511900016431, 0.037815446183, 0.049432998799,
]


def test_feature_vector_locked():
    x = feature_vector(TRAINING_EXAMPLES["i"], gap_grid(5 * NM, 2500 * NM, 20))
    assert x.shape == (20,) and np.all(np.isfinite(x))
    np.testing.assert_allclose(x, S1_I_FEATURES, rtol=1e-9)


def test_feature_vector_converged():
    grid = gap_grid(5 * NM, 2500 * NM, 20)
    sample = TRAINING_EXAMPLES["i"]
    base = feature_vector(sample, grid)
    fine = feature_vector(sample, grid, QuadratureConfig(rel_tol=1e-10, gl_nodes=32))
    np.testing.assert_allclose(base, fine, rtol=1e-6)


def test_pec_features_nearly_flat():
    # thermal corrections grow as d^3, so constancy is checked below ~1 um
    grid = gap_grid(5 * NM, 1000 * NM, 20)
    x = force_curve(None, grid.gaps, pec=True).dpnorm_dz
    assert np.all(np.abs(x) < 0.02)


# --- generation --------------------------------------------------------------------------


def test_generated_shapes_and_ranges(small_ds):
    assert len(small_ds) == 12
    assert small_ds.X.shape == (12, 6) and small_ds.Y.shape == (12, 2)
    assert np.all(np.isfinite(small_ds.X)) and np.all(np.isfinite(small_ds.Y))
    for inc in small_ds.incidences:
        p = inc.sample.params()
        assert 3e14 <= p["w02"] <= 1.25e16 and 10 * NM <= p["t"] <= 500 * NM
        np.testing.assert_array_equal(inc.Y, target_vector(inc.sample, small_ds.schema))


def test_generation_is_deterministic(tmp_path, small_ds):
    again = generate_dataset("two-pole-a", 5, n=12, grid=SMALL_GRID)
    write_dataset(small_ds, tmp_path / "a.csv")
    write_dataset(again, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_parallel_generation_matches_serial(small_ds):
    par = generate_dataset("two-pole-a", 5, n=12, grid=SMALL_GRID, workers=2)
    np.testing.assert_array_equal(par.X, small_ds.X)
    np.testing.assert_array_equal(par.Y, small_ds.Y)


def test_prefix_is_stable(small_ds):
    # incidence i depends only on (master seed, i)
    head = generate_dataset("two-pole-a", 5, n=4, grid=SMALL_GRID)
    np.testing.assert_array_equal(head.X, small_ds.X[:4])


def test_unknown_case_needs_settings():
    with pytest.raises(ConfigurationError):
        generate_dataset("three-pole", 1, n=3)


def test_full_two_pole_dataset_in_range():
    ds = case_dataset("two-pole-a")
    assert len(ds) == 1000
    p = np.array([[inc.sample.params()[k] for k in ("t", "w02")] for inc in ds.incidences])
    assert p[:, 0].min() >= 10 * NM and p[:, 0].max() <= 500 * NM
    assert p[:, 1].min() >= 3e14 and p[:, 1].max() <= 1.25e16


def test_full_four_pole_dataset_obeys_table_and_sum_rule():
    ds = case_dataset("four-pole")
    assert len(ds) == 2000 and ds.Y.shape == (2000, 12)
    ranges = case_ranges("four-pole")
    for inc in ds.incidences:
        assert ranges.contains(inc.sample.params())
        assert oscillator_strength(inc.sample.film) <= SUM_RULE_LIMIT * (1 + 1e-12)


# --- split and noise ---------------------------------------------------------------------


def _toy(n):
    ds = generate_dataset("two-pole-a", 1, n=2, grid=gap_grid(1e-7, 2e-7, 2))
    inc = ds.incidences[0]
    incs = [type(inc)(i, inc.X + i, inc.Y, inc.sample) for i in range(n)]
    return Dataset(incs, ds.grid, ds.schema, ds.case, 3, ds.ranges)


@pytest.mark.parametrize("n, n_train", [(1000, 800), (2000, 1600), (50, 49)])
def test_split_sizes(n, n_train):
    train, test = split_dataset(_toy(n), n_train)
    assert (len(train), len(test)) == (n_train, n - n_train)
    ids = {i.index for i in train.incidences} | {i.index for i in test.incidences}
    assert len(ids) == n


def test_split_is_deterministic_and_seeded():
    ds = _toy(100)
    a = [i.index for i in split_dataset(ds, 80)[1].incidences]
    b = [i.index for i in split_dataset(ds, 80)[1].incidences]
    c = [i.index for i in split_dataset(ds, 80, seed=4)[1].incidences]
    assert a == b and a != c


def test_split_errors():
    with pytest.raises(DomainError):
        split_dataset(_toy(10), 10)
    with pytest.raises(DomainError):
        split_dataset(_toy(10), 0)


def test_noise_statistics():
    x = add_noise(np.zeros(100_000), 0.02, np.random.default_rng(1))
    assert abs(x.mean()) < 3 * 0.02 / math.sqrt(len(x))
    assert x.std() == pytest.approx(0.02, rel=0.02)


def test_zero_noise_and_independent_streams(small_ds):
    X = small_ds.X
    np.testing.assert_array_equal(add_noise(X, 0.0, np.random.default_rng(0)), X)
    noisy = noisy_copy(small_ds, 0.02, 9)
    d0 = noisy.incidences[0].X - small_ds.incidences[0].X
    d1 = noisy.incidences[1].X - small_ds.incidences[1].X
    assert not np.allclose(d0, d1)
    np.testing.assert_array_equal(noisy.Y, small_ds.Y)
    assert noisy.noise_sigma == 0.02
    with pytest.raises(DomainError):
        add_noise(X, -1.0, np.random.default_rng(0))


# --- file IO ---------------------------------------------------------------------------


def test_roundtrip(tmp_path, small_ds):
    path = tmp_path / "ds.csv"
    write_dataset(small_ds, path)
    back = read_dataset(path)
    np.testing.assert_array_equal(back.X, small_ds.X)
    np.testing.assert_array_equal(back.Y, small_ds.Y)
    assert [i.sample for i in back.incidences] == [i.sample for i in small_ds.incidences]
    assert (back.case, back.master_seed, back.grid, back.schema) == (
        small_ds.case, small_ds.master_seed, small_ds.grid, small_ds.schema)
    write_dataset(back, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


def test_header_records_provenance(tmp_path, small_ds):
    write_dataset(small_ds, tmp_path / "ds.csv")
    h = read_header(tmp_path / "ds.csv")
    assert h["case"] == "two-pole-a" and h["seed"] == "5"
    assert h["feature"] == "dPnorm_dz_per_um" and h["sampling_law"] == "log-uniform"


def test_regenerate_from_header(tmp_path, small_ds):
    path = tmp_path / "ds.csv"
    write_dataset(small_ds, path)
    write_dataset(regenerate_from_header(path), tmp_path / "re.csv")
    assert (tmp_path / "re.csv").read_bytes() == path.read_bytes()


def test_wrong_column_count(tmp_path, small_ds):
    path = tmp_path / "ds.csv"
    write_dataset(small_ds, path)
    lines = path.read_text().splitlines()
    n_header = sum(1 for l in lines if l.startswith("#"))
    lines[n_header + 2] += ",1.0"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as err:
        read_dataset(path)
    assert err.value.line == n_header + 3


def test_missing_rows_and_bad_magic(tmp_path, small_ds):
    path = tmp_path / "ds.csv"
    write_dataset(small_ds, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(SchemaError):
        read_dataset(path)
    path.write_text("idx,X1\n0,1\n")
    with pytest.raises(SchemaError):
        read_dataset(path)
