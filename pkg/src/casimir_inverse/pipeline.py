"""End-to-end experiments: characterize films from force curves, denoise, report."""
from __future__ import annotations

import hashlib
import logging
import math
import os
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .cases import CASE_DEFAULTS, DENOISER_DEFAULTS, N_FEATURES, case_ranges
from .dataset import (
    Dataset,
    GapGrid,
    TargetSchema,
    _ranges_from_str,
    _ranges_to_str,
    gap_grid,
    generate_dataset,
    params_from_target,
    split_dataset,
    write_dataset,
)
from .errors import ConfigurationError, DomainError
from .materials import FilmSample, SamplingRanges, eval_eps_real_freq
from .neuralnet import (
    EvalReport,
    Mlp,
    TrainConfig,
    evaluate_rmse,
    fit_standardization,
    forward,
    mlp_init,
    train,
    write_model,
)

log = logging.getLogger(__name__)

DEFAULT_OMEGA_GRID = np.geomspace(1e14, 1e17, 400)


@dataclass
class CaseConfig:
    case: str
    grid: GapGrid
    ranges: SamplingRanges
    n_total: int
    n_train: int
    train: TrainConfig
    hidden: tuple = (20, 20, 20)
    data_seed: int = 0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not 0 < self.n_train < self.n_total:
            raise ConfigurationError(f"need 0 < n_train < n_total, got {self.n_train}/{self.n_total}")
        if self.train.batch_size > self.n_train:
            raise ConfigurationError("batch size exceeds the training split")

    @property
    def schema(self):
        return TargetSchema.from_ranges(self.ranges)

    @property
    def arch(self):
        return (self.grid.count, *self.hidden, self.schema.n_outputs)


def default_case_config(case, *, data_seed=0, train_seed=0, epochs=None, law="log-uniform"):
    """Built-in settings for ``case``; ``epochs`` overrides the default budget."""
    if case not in CASE_DEFAULTS:
        raise ConfigurationError(f"unknown case {case!r}")
    d = CASE_DEFAULTS[case]
    cfg = TrainConfig(d.learning_rate, d.epochs if epochs is None else epochs, d.batch_size,
                      train_seed, "log-target-sse")
    return CaseConfig(case, gap_grid(d.d_min, d.d_max, N_FEATURES), case_ranges(case, law),
                      d.n_total, d.n_train, cfg, d.hidden, data_seed)


def _schema_str(schema):
    return ",".join(f"{n}{'' if f else '!'}" for n, f in zip(schema.names, schema.free))


def _grid_str(grid):
    return f"{grid.d_min:.17g}:{grid.d_max:.17g}:{grid.count}"


def code_digest():
    """SHA-256 over the package sources, recorded in manifests."""
    h = hashlib.sha256()
    root = Path(__file__).parent
    for p in sorted(root.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def characterizer_meta(ds, cfg):
    return {
        "kind": "characterizer",
        "case": ds.case,
        "grid": _grid_str(ds.grid),
        "schema": _schema_str(ds.schema),
        "ranges": _ranges_to_str(ds.ranges),
        "sampling_law": ds.ranges.law,
        "train_config_digest": cfg.digest(),
    }


def train_characterizer(train_set, cfg, hidden=(20, 20, 20)):
    """Fit input standardization on the training split and run SGD."""
    arch = (train_set.grid.count, *hidden, train_set.schema.n_outputs)
    mlp = mlp_init(arch, cfg.seed)
    fit_standardization(mlp, train_set.X)
    mlp.meta = characterizer_meta(train_set, cfg)
    mlp, history = train(mlp, mlp.standardize(train_set.X), train_set.Y, cfg)
    return mlp, history


def schema_units(schema):
    return [1e3 if n == "t" else 1.0 for n in schema.free_names]


def evaluate(mlp, test_set):
    return evaluate_rmse(mlp, test_set.X, test_set.Y, test_set.schema.free_names,
                         schema_units(test_set.schema))


def _comments(header):
    return [f"# {k}={v}" for k, v in (header or {}).items()]


def write_report(report, out_dir, header=None):
    out_dir = Path(out_dir)
    lines = _comments(header) + ["parameter,rmse"] + [f"{n},{v:.17g}" for n, v in zip(report.names, report.rmse)]
    (out_dir / "report.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for j, name in enumerate(report.names):
        rows = _comments(header) + ["true,predicted"] + [
            f"{t:.17g},{p:.17g}" for t, p in zip(report.true[:, j], report.predicted[:, j])
        ]
        (out_dir / f"scatter_{name}.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_manifest(path, items):
    text = "".join(f"{k}={v}\n" for k, v in items.items())
    Path(path).write_text(text, encoding="utf-8")


def run_case(config, out_dir, dataset=None):
    """Train and evaluate one case on a generated or supplied dataset.

    Returns (model, report, list of written paths). On failure every file
    written by this call is removed again.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    before = set(out_dir.iterdir())
    try:
        if dataset is None:
            dataset = generate_dataset(config.case, config.data_seed, n=config.n_total,
                                       ranges=config.ranges, grid=config.grid)
        if len(dataset) != config.n_total:
            raise ConfigurationError(f"dataset has {len(dataset)} incidences, config expects {config.n_total}")
        write_dataset(dataset, out_dir / "dataset.csv")
        train_set, test_set = split_dataset(dataset, config.n_train)
        mlp, history = train_characterizer(train_set, config.train, config.hidden)
        write_model(mlp, out_dir / "model.txt")
        report = evaluate(mlp, test_set)
        write_report(report, out_dir)
        hist = ["epoch,loss"] + [f"{i},{v:.17g}" for i, v in enumerate(history)]
        (out_dir / "loss_history.csv").write_text("\n".join(hist) + "\n", encoding="utf-8")
        write_manifest(out_dir / "manifest", {
            "tool_version": __version__,
            "code_digest": code_digest(),
            "case": config.case,
            "data_seed": config.data_seed,
            "train_seed": config.train.seed,
            "n_total": config.n_total,
            "n_train": config.n_train,
            "grid": _grid_str(config.grid),
            "sampling_law": config.ranges.law,
            "hidden": ",".join(map(str, config.hidden)),
            "learning_rate": repr(config.train.learning_rate),
            "epochs": config.train.epochs,
            "batch_size": config.train.batch_size,
            "train_config_digest": config.train.digest(),
        })
    except BaseException:
        for p in set(out_dir.iterdir()) - before:
            if p.is_dir():
                shutil.rmtree(p)
            else:
                p.unlink()
        raise
    written = sorted(set(out_dir.iterdir()) - before)
    return mlp, report, written


# --- prediction ---------------------------------------------------------------


@dataclass
class PredictedFilm:
    sample: FilmSample
    source: object = None


def _model_schema_ranges(mlp):
    try:
        entries = mlp.meta["schema"].split(",")
        ranges = _ranges_from_str(mlp.meta["ranges"], mlp.meta.get("sampling_law", "log-uniform"))
    except KeyError as exc:
        raise ConfigurationError(f"model lacks {exc} metadata needed to rebuild a film") from exc
    schema = TargetSchema(tuple(e.rstrip("!") for e in entries), tuple(not e.endswith("!") for e in entries))
    return schema, ranges


def output_to_film(y, schema, ranges):
    fixed = {n: lo for n, (lo, hi) in ranges.bounds.items() if not schema.free[schema.names.index(n)]}
    params = params_from_target(y, schema, fixed)
    for name, (src, factor) in ranges.tied.items():
        params[name] = factor * params[src]
    return FilmSample.from_params(params)


def predict_film(mlp, X, source=None):
    """Film parameters predicted from one raw feature vector."""
    X = np.asarray(X, dtype=float)
    if X.shape != (mlp.sizes[0],):
        raise DomainError(f"feature vector must have length {mlp.sizes[0]}")
    schema, ranges = _model_schema_ranges(mlp)
    y = mlp.predict(X)[0]
    return PredictedFilm(output_to_film(y, schema, ranges), source)


def predict_spectrum(film, omega=DEFAULT_OMEGA_GRID):
    """Rows of (omega, Re eps, Im eps) for a film on an ascending grid."""
    if isinstance(film, PredictedFilm):
        film = film.sample
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 1 or len(omega) == 0 or np.any(np.diff(omega) <= 0):
        raise DomainError("frequency grid must be non-empty and strictly ascending")
    eps = np.atleast_1d(eval_eps_real_freq(film.film, omega))
    return np.column_stack([omega, eps.real, eps.imag])


def write_spectrum(table, path, header=None):
    rows = _comments(header) + ["omega_radps,re_eps,im_eps"] + [",".join(f"{v:.17g}" for v in r) for r in table]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


# --- denoising ------------------------------------------------------------------


def train_denoiser(X_clean, sigma, cfg, hidden=DENOISER_DEFAULTS["hidden"], meta=None):
    """Autoencoder trained to map freshly noised copies of ``X_clean`` back to it.

    Inputs are standardized with statistics of the clean training features;
    the affine output layer emits raw feature values, so the reconstruction
    cost is the plain sum of squares in raw units.
    """
    X_clean = np.asarray(X_clean, dtype=float)
    n_feat = X_clean.shape[1]
    ae = mlp_init((n_feat, *hidden, n_feat), cfg.seed)
    fit_standardization(ae, X_clean)
    ae.meta = {"kind": "denoiser", "noise_sigma": repr(float(sigma)),
               "train_config_digest": cfg.digest(), **(meta or {})}
    mean, std = ae.x_mean, ae.x_std

    def present(xb, rng):
        if sigma > 0:
            xb = xb + rng.normal(0.0, sigma, size=xb.shape)
        return (xb - mean) / std

    cfg = replace(cfg, cost="reconstruction-sse")
    return train(ae, X_clean, X_clean, cfg, input_fn=present)


def denoise(ae, X_noisy):
    """Denoised features in raw units (one vector or one row per sample)."""
    X_noisy = np.asarray(X_noisy, dtype=float)
    if X_noisy.shape[-1] != ae.sizes[0]:
        raise DomainError(f"feature vector must have length {ae.sizes[0]}")
    X_hat = ae.predict(X_noisy)
    return X_hat[0] if X_noisy.ndim == 1 else X_hat


def end_to_end(ae, mlp, X_noisy, source=None):
    """Denoise then characterize."""
    if ae.sizes[0] != mlp.sizes[0] or ae.sizes[-1] != mlp.sizes[0]:
        raise ConfigurationError(f"denoiser arch {ae.sizes} does not fit characterizer input {mlp.sizes[0]}")
    g_ae, g_mlp = ae.meta.get("grid"), mlp.meta.get("grid")
    if g_ae is not None and g_mlp is not None and g_ae != g_mlp:
        raise ConfigurationError(f"denoiser grid {g_ae} differs from characterizer grid {g_mlp}")
    return predict_film(mlp, denoise(ae, X_noisy), source)


def damping_rmse_check(report):
    """Mean RMSE over damping rates and over resonance/plasma frequencies.

    Returns (mean_gamma, mean_freq, holds); logs a warning if damping rates
    are predicted better than the frequencies.
    """
    r = report.rmse_dict()
    gam = [v for k, v in r.items() if k.startswith("g")]
    freq = [v for k, v in r.items() if k.startswith(("wp", "w0"))]
    mg, mf = float(np.mean(gam)), float(np.mean(freq))
    holds = mg > mf
    if not holds:
        log.warning("damping-rate RMSE %.4g does not exceed frequency RMSE %.4g", mg, mf)
    return mg, mf, holds
