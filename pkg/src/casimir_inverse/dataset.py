"""Feature/target vectors, seeded dataset generation, splitting, noise and CSV IO."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .cases import CASE_DEFAULTS, N_FEATURES, case_ranges
from .errors import ConfigurationError, DomainError, NumericError, ParseError, SchemaError
from .lifshitz import DEFAULT_QUAD, FilmStack, QuadratureConfig, force_curve
from .materials import FilmSample, SamplingRanges, param_names, sample_film

log = logging.getLogger(__name__)

THICKNESS_UNIT = 1e3  # meters; ln(t / 1e3 m) keeps t and frequencies comparable
FILE_MAGIC = "casimir-dataset"


@dataclass(frozen=True)
class GapGrid:
    d_min: float
    d_max: float
    count: int

    @property
    def gaps(self):
        i = np.arange(self.count)
        g = self.d_min * (self.d_max / self.d_min) ** (i / (self.count - 1))
        g[0], g[-1] = self.d_min, self.d_max
        return g


def gap_grid(d_min, d_max, count=N_FEATURES):
    """Log-spaced grid of gap distances from ``d_min`` to ``d_max`` inclusive."""
    if not (0 < d_min < d_max) or not math.isfinite(d_max):
        raise DomainError(f"need 0 < d_min < d_max, got {d_min}, {d_max}")
    if int(count) != count or count < 2:
        raise DomainError(f"grid needs at least 2 points, got {count}")
    return GapGrid(float(d_min), float(d_max), int(count))


@dataclass(frozen=True)
class TargetSchema:
    """Ordered parameter names and which of them are network outputs."""

    names: tuple
    free: tuple

    @property
    def free_names(self):
        return [n for n, f in zip(self.names, self.free) if f]

    @property
    def n_outputs(self):
        return sum(self.free)

    @classmethod
    def from_ranges(cls, ranges):
        names = tuple(ranges.names)
        return cls(names, tuple(ranges.is_free(n) for n in names))


def _unit(name):
    return THICKNESS_UNIT if name == "t" else 1.0


def target_vector(sample, schema):
    """Natural log of the free parameters in schema units."""
    params = sample.params()
    out = []
    for name in schema.free_names:
        v = params[name]
        if not v > 0:
            raise DomainError(f"free parameter {name} must be > 0, got {v}")
        out.append(math.log(v / _unit(name)))
    return np.array(out, dtype=float)


def params_from_target(y, schema, fixed):
    """Invert :func:`target_vector`; ``fixed`` supplies the non-free values."""
    params = dict(fixed)
    for name, v in zip(schema.free_names, y):
        params[name] = math.exp(v) * _unit(name)
    return params


def feature_vector(sample, grid, quad=DEFAULT_QUAD):
    """Gap derivative of the normalized pressure (per micrometer) on the grid."""
    stack = FilmStack(sample.film, sample.thickness_t)
    x = force_curve(stack, grid.gaps, quad).dpnorm_dz
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite feature value")
    return x


@dataclass
class Incidence:
    index: int
    X: np.ndarray
    Y: np.ndarray
    sample: FilmSample


@dataclass
class Dataset:
    incidences: list
    grid: GapGrid
    schema: TargetSchema
    case: str
    master_seed: int
    ranges: SamplingRanges
    noise_sigma: float = 0.0
    quad: QuadratureConfig = field(default=DEFAULT_QUAD)

    def __len__(self):
        return len(self.incidences)

    @property
    def X(self):
        return np.array([inc.X for inc in self.incidences]).reshape(len(self), self.grid.count)

    @property
    def Y(self):
        return np.array([inc.Y for inc in self.incidences]).reshape(len(self), self.schema.n_outputs)

    def subset(self, indices):
        return replace(self, incidences=[self.incidences[i] for i in indices])


def incidence_rng(master_seed, index, attempt=0):
    """Independent generator for one incidence, stable across runs and platforms."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, index, attempt]))


MAX_ATTEMPTS = 100


def make_incidence(index, master_seed, ranges, grid, schema, quad=DEFAULT_QUAD):
    for attempt in range(MAX_ATTEMPTS):
        rng = incidence_rng(master_seed, index, attempt)
        sample = sample_film(ranges, rng)
        try:
            X = feature_vector(sample, grid, quad)
        except NumericError as exc:
            log.warning("incidence %d attempt %d failed (%s); redrawing", index, attempt, exc)
            continue
        return Incidence(index, X, target_vector(sample, schema), sample)
    raise NumericError(f"incidence {index}: {MAX_ATTEMPTS} consecutive numeric failures")


def _make_incidence_args(args):
    return make_incidence(*args)


def generate_dataset(case, master_seed, *, n=None, ranges=None, grid=None, quad=DEFAULT_QUAD,
                     workers=1, progress=None):
    """Generate ``n`` incidences for ``case`` from one master seed.

    ``ranges`` and ``grid`` default to the built-in settings for ``case``.
    Output order is by incidence index whatever the number of workers.
    """
    defaults = CASE_DEFAULTS.get(case)
    if defaults is None and (ranges is None or grid is None or n is None):
        raise ConfigurationError(f"unknown case {case!r} needs explicit ranges, grid and n")
    if ranges is None:
        ranges = case_ranges(case)
    if grid is None:
        grid = gap_grid(defaults.d_min, defaults.d_max, N_FEATURES)
    if n is None:
        n = defaults.n_total
    schema = TargetSchema.from_ranges(ranges)
    jobs = [(i, int(master_seed), ranges, grid, schema, quad) for i in range(n)]
    incidences = []
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            for inc in pool.map(_make_incidence_args, jobs, chunksize=8):
                incidences.append(inc)
                if progress:
                    progress(len(incidences), n)
    else:
        for job in jobs:
            incidences.append(make_incidence(*job))
            if progress:
                progress(len(incidences), n)
    return Dataset(incidences, grid, schema, case, int(master_seed), ranges, 0.0, quad)


def split_dataset(ds, n_train, seed=None):
    """Seeded shuffle into disjoint (train, test) subsets."""
    n = len(ds)
    if int(n_train) != n_train or not 0 < n_train < n:
        raise DomainError(f"need 0 < n_train < {n}, got {n_train}")
    seed = ds.master_seed if seed is None else seed
    perm = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B117])).permutation(n)
    return ds.subset(sorted(perm[:n_train])), ds.subset(sorted(perm[n_train:]))


def add_noise(X, sigma, rng):
    """Additive zero-mean Gaussian noise of standard deviation ``sigma``."""
    if sigma < 0:
        raise DomainError(f"sigma must be >= 0, got {sigma}")
    X = np.asarray(X, dtype=float)
    if sigma == 0:
        return X.copy()
    return X + rng.normal(0.0, sigma, size=X.shape)


def noisy_copy(ds, sigma, seed):
    """Dataset with noise added to every X; Y and provenance are untouched."""
    incs = []
    for inc in ds.incidences:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), inc.index, 0x4015E]))
        incs.append(replace(inc, X=add_noise(inc.X, sigma, rng)))
    return replace(ds, incidences=incs, noise_sigma=float(sigma))


# --- file IO -------------------------------------------------------------------


def _fmt(v):
    return f"{v:.17g}"


def _ranges_to_str(ranges):
    parts = [f"{k}:{_fmt(lo)}:{_fmt(hi)}" for k, (lo, hi) in ranges.bounds.items()]
    parts += [f"{k}={src}*{_fmt(f)}" for k, (src, f) in ranges.tied.items()]
    return ";".join(parts)


def _ranges_from_str(text, law):
    bounds, tied = {}, {}
    for part in text.split(";"):
        if "=" in part:
            k, rhs = part.split("=")
            src, f = rhs.split("*")
            tied[k] = (src, float(f))
        else:
            k, lo, hi = part.split(":")
            bounds[k] = (float(lo), float(hi))
    return SamplingRanges(bounds, tied, law)


def _header(ds):
    names = param_names(ds.ranges.n_poles)
    return {
        "format": f"{FILE_MAGIC} 1",
        "tool_version": __version__,
        "case": ds.case,
        "seed": str(ds.master_seed),
        "n_incidences": str(len(ds)),
        "grid_d_min_m": _fmt(ds.grid.d_min),
        "grid_d_max_m": _fmt(ds.grid.d_max),
        "grid_count": str(ds.grid.count),
        "feature": "dPnorm_dz_per_um",
        "schema": ",".join(f"{n}{'' if f else '!'}" for n, f in zip(ds.schema.names, ds.schema.free)),
        "target": "ln(t/1e3 m),ln(omega/(rad/s))",
        "sampling_law": ds.ranges.law,
        "ranges": _ranges_to_str(ds.ranges),
        "quad_rel_tol": _fmt(ds.quad.rel_tol),
        "quad_gl_nodes": str(ds.quad.gl_nodes),
        "noise_sigma": _fmt(ds.noise_sigma),
        "columns": ",".join(
            ["idx"]
            + [f"X{i + 1}" for i in range(ds.grid.count)]
            + [f"Y_{n}" for n in ds.schema.free_names]
            + ["t_m"]
            + [f"{n}_radps" for n in names[1:]]
        ),
    }


def write_dataset(ds, path, extra_header=None):
    header = _header(ds)
    header.update(extra_header or {})
    names = param_names(ds.ranges.n_poles)
    lines = [f"# {k}={v}" for k, v in header.items()]
    for inc in ds.incidences:
        p = inc.sample.params()
        row = [str(inc.index)] + [_fmt(v) for v in inc.X] + [_fmt(v) for v in inc.Y]
        row += [_fmt(p["t"])] + [_fmt(p[n]) for n in names[1:]]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_header(path):
    header = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            header[key] = value
    return header


def read_dataset(path):
    header = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if not sep:
                    raise ParseError(f"malformed header line {line!r}", lineno)
                header[key] = value
            elif line.strip():
                rows.append((lineno, line))
    if not header.get("format", "").startswith(FILE_MAGIC):
        raise SchemaError(f"{path}: not a dataset file (missing format header)")
    try:
        grid = gap_grid(float(header["grid_d_min_m"]), float(header["grid_d_max_m"]),
                        int(header["grid_count"]))
        entries = header["schema"].split(",")
        schema = TargetSchema(tuple(e.rstrip("!") for e in entries),
                              tuple(not e.endswith("!") for e in entries))
        ranges = _ranges_from_str(header["ranges"], header["sampling_law"])
        quad = replace(DEFAULT_QUAD, rel_tol=float(header["quad_rel_tol"]),
                       gl_nodes=int(header["quad_gl_nodes"]))
        n_expected = int(header["n_incidences"])
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: bad header ({exc})") from exc
    if list(schema.names) != ranges.names:
        raise SchemaError(f"{path}: schema {schema.names} does not match ranges")

    names = ranges.names
    n_cols = 1 + grid.count + schema.n_outputs + len(names)
    incidences = []
    for lineno, line in rows:
        cells = line.split(",")
        if len(cells) != n_cols:
            raise ParseError(f"expected {n_cols} columns, found {len(cells)}", lineno)
        try:
            vals = [float(c) for c in cells[1:]]
            idx = int(cells[0])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
        X = np.array(vals[: grid.count])
        Y = np.array(vals[grid.count: grid.count + schema.n_outputs])
        raw = vals[grid.count + schema.n_outputs:]
        params = {"t": raw[0]}
        params.update(zip(names[1:], raw[1:]))
        incidences.append(Incidence(idx, X, Y, FilmSample.from_params(params)))
    if len(incidences) != n_expected:
        raise SchemaError(f"{path}: header declares {n_expected} incidences, found {len(incidences)}")
    return Dataset(incidences, grid, schema, header["case"], int(header["seed"]), ranges,
                   float(header["noise_sigma"]), quad)


def regenerate_from_header(path, **kwargs):
    """Rebuild a clean dataset from the metadata in a dataset file header."""
    h = read_header(path)
    grid = gap_grid(float(h["grid_d_min_m"]), float(h["grid_d_max_m"]), int(h["grid_count"]))
    ranges = _ranges_from_str(h["ranges"], h["sampling_law"])
    quad = replace(DEFAULT_QUAD, rel_tol=float(h["quad_rel_tol"]), gl_nodes=int(h["quad_gl_nodes"]))
    return generate_dataset(h["case"], int(h["seed"]), n=int(h["n_incidences"]), ranges=ranges,
                            grid=grid, quad=quad, **kwargs)
