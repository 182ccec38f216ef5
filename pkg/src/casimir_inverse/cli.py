"""Command-line entry point.

Subcommands are thin wrappers over the library; all numerics live elsewhere.
Exit codes: 0 success, 1 domain/configuration error, 2 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .cases import (
    CASE_DEFAULTS,
    CASE_TAGS,
    DENOISER_DEFAULTS,
    FOUR_POLE_EXAMPLES,
    N_FEATURES,
    NM,
    SILICON_EXAMPLES,
    TRAINING_EXAMPLES,
    case_ranges,
    two_pole_film,
)
from .config import RunConfig
from .dataset import (
    feature_vector,
    gap_grid,
    generate_dataset,
    noisy_copy,
    read_dataset,
    split_dataset,
    write_dataset,
)
from .errors import ConfigurationError, DomainError, NumericError, ParseError, SchemaError
from .lifshitz import DEFAULT_QUAD, FilmStack, force_curve
from .materials import FilmSample, param_names
from .neuralnet import TrainConfig, read_model, write_model
from .pipeline import (
    characterizer_meta,
    end_to_end,
    evaluate,
    predict_film,
    predict_spectrum,
    train_characterizer,
    train_denoiser,
    denoise,
    write_report,
    write_spectrum,
)

log = logging.getLogger("casimir_inverse")

REFERENCE_FILMS = {**TRAINING_EXAMPLES, **FOUR_POLE_EXAMPLES, **SILICON_EXAMPLES}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _build_parser():
    p = _Parser(prog="casimir-inverse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def cmd(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="run-configuration file")
        return s

    def film_args(s):
        s.add_argument("--case", choices=CASE_TAGS)
        s.add_argument("--t-nm", type=float, help="film thickness in nm")
        s.add_argument("--w02", type=float, help="two-pole resonance frequency in rad/s")
        s.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                       help="pole parameter in rad/s, e.g. wp1=3e15 (repeatable)")
        s.add_argument("--example", choices=sorted(REFERENCE_FILMS), help="named reference film")

    s = cmd("gen", "generate a dataset")
    s.add_argument("--case", choices=CASE_TAGS)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--law", choices=("log-uniform", "uniform"))
    s.add_argument("--workers", type=int)
    s.add_argument("--noise-sigma", type=float)
    s.add_argument("--noise-seed", type=int)

    s = cmd("train", "train a characterizer on a dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", default="model.txt")
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--n-train", type=int)
    s.add_argument("--hidden")

    s = cmd("eval", "evaluate a characterizer on the test split")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--out-dir", default=".")

    s = cmd("predict", "predict film parameters from a feature vector")
    s.add_argument("--model", required=True)
    s.add_argument("--features", help="comma-separated feature vector")
    s.add_argument("--dataset")
    s.add_argument("--index", type=int, help="row position in --dataset")
    film_args(s)
    s.add_argument("--spectrum-out")

    s = cmd("denoise-train", "train a denoising autoencoder")
    s.add_argument("--dataset", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", default="denoiser.txt")
    s.add_argument("--sigma", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--n-train", type=int)
    s.add_argument("--hidden")

    s = cmd("denoise", "denoise feature vectors (optionally characterize them)")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--noise-sigma", type=float, help="add noise to the dataset first")
    s.add_argument("--noise-seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--characterizer", help="characterizer model for end-to-end prediction")
    s.add_argument("--predictions-out")

    s = cmd("force-curve", "pressure, normalized pressure and its gap derivative")
    film_args(s)
    s.add_argument("--d-min-nm", type=float)
    s.add_argument("--d-max-nm", type=float)
    s.add_argument("--count", type=int)
    s.add_argument("--out")

    s = cmd("spectrum", "permittivity spectrum of a film")
    film_args(s)
    s.add_argument("--model", help="characterizer; predicts the film from --features")
    s.add_argument("--features")
    s.add_argument("--omega-min", type=float)
    s.add_argument("--omega-max", type=float)
    s.add_argument("--points", type=int)
    s.add_argument("--out")
    return p


def _config(args):
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    return cfg


def _need_seed(args, cfg):
    seed = args.seed if args.seed is not None else cfg.get("run", "seed")
    if seed is None:
        raise ConfigurationError(f"{args.command} requires --seed (or run.seed in the config file)")
    return int(seed)


def _header(cfg, **extra):
    return {"tool_version": __version__, "config_digest": cfg.digest(), **extra}


def _hidden(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _out_text(text, path):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _film_from_args(args, cfg):
    case = args.case or cfg.get("run", "case")
    if args.example:
        return REFERENCE_FILMS[args.example], case
    if case in ("two-pole-a", "two-pole-b") and not args.param:
        if args.t_nm is None or args.w02 is None:
            raise ConfigurationError("two-pole films need --t-nm and --w02")
        return two_pole_film(case, args.t_nm * NM, args.w02), case
    params = {}
    for item in args.param:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--param expects NAME=VALUE, got {item!r}")
        try:
            params[name.strip()] = float(value)
        except ValueError as exc:
            raise ConfigurationError(f"bad value in --param {item!r}") from exc
    if args.t_nm is None:
        raise ConfigurationError("film needs --t-nm")
    params["t"] = args.t_nm * NM
    n_poles = (len(params) - 1) // 3
    if n_poles < 1 or sorted(params) != sorted(param_names(n_poles)):
        raise ConfigurationError(f"--param must give every pole parameter; got {sorted(params)}")
    return FilmSample.from_params(params), case


def _grid(args, cfg, case):
    d = CASE_DEFAULTS.get(case or "two-pole-a")
    d_min = args.d_min_nm if args.d_min_nm is not None else cfg.get("dataset", "d_min_nm")
    d_max = args.d_max_nm if args.d_max_nm is not None else cfg.get("dataset", "d_max_nm")
    count = args.count if args.count is not None else cfg.get("dataset", "count", N_FEATURES)
    return gap_grid(d_min * NM if d_min is not None else d.d_min,
                    d_max * NM if d_max is not None else d.d_max, count)


def _quad(cfg):
    return replace(DEFAULT_QUAD, rel_tol=cfg.get("quadrature", "rel_tol", DEFAULT_QUAD.rel_tol),
                   gl_nodes=cfg.get("quadrature", "gl_nodes", DEFAULT_QUAD.gl_nodes))


def _pick(flag, cfg, section, key, default):
    if flag is not None:
        return flag
    return cfg.get(section, key, default)


# --- subcommands -------------------------------------------------------------------


def cmd_gen(args, cfg):
    seed = _need_seed(args, cfg)
    case = args.case or cfg.get("run", "case")
    if case is None:
        raise ConfigurationError("gen requires --case (or run.case)")
    d = CASE_DEFAULTS[case]
    law = _pick(args.law, cfg, "dataset", "law", "log-uniform")
    grid = gap_grid(cfg.get("dataset", "d_min_nm", d.d_min / NM) * NM,
                    cfg.get("dataset", "d_max_nm", d.d_max / NM) * NM,
                    cfg.get("dataset", "count", N_FEATURES))
    n = _pick(args.n, cfg, "dataset", "n", d.n_total)
    workers = _pick(args.workers, cfg, "dataset", "workers", 1)

    def progress(i, total):
        if i % 50 == 0 or i == total:
            log.info("generated %d/%d incidences", i, total)

    ds = generate_dataset(case, seed, n=n, ranges=case_ranges(case, law), grid=grid,
                          quad=_quad(cfg), workers=workers, progress=progress)
    sigma = _pick(args.noise_sigma, cfg, "dataset", "noise_sigma", 0.0)
    extra = {"config_digest": cfg.digest()}
    if sigma > 0:
        noise_seed = _pick(args.noise_seed, cfg, "dataset", "noise_seed", seed)
        ds = noisy_copy(ds, sigma, noise_seed)
        extra["noise_seed"] = str(noise_seed)
    write_dataset(ds, args.out, extra_header=extra)
    log.info("wrote %s", args.out)


def _train_config(args, cfg, section, defaults, cost):
    return TrainConfig(
        learning_rate=_pick(args.lr, cfg, section, "learning_rate", defaults["learning_rate"]),
        epochs=_pick(args.epochs, cfg, section, "epochs", defaults["epochs"]),
        batch_size=_pick(args.batch_size, cfg, section, "batch_size", defaults["batch_size"]),
        seed=_need_seed(args, cfg),
        cost=cost,
        weight_tol=cfg.get("train", "weight_tol") if section == "train" else None,
    )


def cmd_train(args, cfg):
    ds = read_dataset(args.dataset)
    d = CASE_DEFAULTS.get(ds.case)
    defaults = dict(learning_rate=d.learning_rate, epochs=d.epochs, batch_size=d.batch_size)
    tcfg = _train_config(args, cfg, "train", defaults, "log-target-sse")
    n_train = _pick(args.n_train, cfg, "train", "n_train", d.n_train)
    hidden = _hidden(args.hidden) if args.hidden else cfg.get("train", "hidden", d.hidden)
    train_set, _ = split_dataset(ds, n_train)
    log.info("training %s on %d incidences for %d epochs", ds.case, n_train, tcfg.epochs)
    mlp, history = train_characterizer(train_set, tcfg, hidden)
    mlp.meta.update({"n_train": str(n_train), "split_seed": str(ds.master_seed),
                     "config_digest": cfg.digest(), "tool_version": __version__})
    write_model(mlp, args.out)
    if len(history):
        log.info("final training loss %.6g", history[-1])


def cmd_eval(args, cfg):
    mlp = read_model(args.model)
    ds = read_dataset(args.dataset)
    if mlp.meta.get("schema") != characterizer_meta(ds, TrainConfig())["schema"]:
        raise ConfigurationError("model and dataset use different target schemas")
    n_train = int(mlp.meta.get("n_train", CASE_DEFAULTS[ds.case].n_train))
    _, test_set = split_dataset(ds, n_train, int(mlp.meta.get("split_seed", ds.master_seed)))
    report = evaluate(mlp, test_set)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out, _header(cfg, model=Path(args.model).name, dataset=Path(args.dataset).name))
    for name, v in zip(report.names, report.rmse):
        sys.stdout.write(f"{name},{v:.6g}\n")


def _features(args, cfg, n):
    if args.features:
        try:
            x = np.array([float(v) for v in args.features.split(",")])
        except ValueError as exc:
            raise ConfigurationError("--features must be comma-separated numbers") from exc
        return x
    if getattr(args, "dataset", None):
        ds = read_dataset(args.dataset)
        return ds.incidences[args.index or 0].X
    film, case = _film_from_args(args, cfg)
    d = CASE_DEFAULTS[case or "two-pole-a"]
    return feature_vector(film, gap_grid(d.d_min, d.d_max, n), _quad(cfg))


def _film_lines(film):
    return "".join(f"{k}={v:.17g}\n" for k, v in film.params().items())


def cmd_predict(args, cfg):
    mlp = read_model(args.model)
    x = _features(args, cfg, mlp.sizes[0])
    pred = predict_film(mlp, x)
    sys.stdout.write(_film_lines(pred.sample))
    if args.spectrum_out:
        write_spectrum(predict_spectrum(pred), args.spectrum_out, _header(cfg))


def cmd_denoise_train(args, cfg):
    ds = read_dataset(args.dataset)
    d = CASE_DEFAULTS.get(ds.case)
    tcfg = _train_config(args, cfg, "denoise", DENOISER_DEFAULTS, "reconstruction-sse")
    sigma = _pick(args.sigma, cfg, "denoise", "sigma", 0.02)
    n_train = _pick(args.n_train, cfg, "train", "n_train", d.n_train)
    hidden = _hidden(args.hidden) if args.hidden else cfg.get("denoise", "hidden", DENOISER_DEFAULTS["hidden"])
    train_set, _ = split_dataset(ds, n_train)
    ae, history = train_denoiser(train_set.X, sigma, tcfg, hidden, meta={
        "grid": characterizer_meta(ds, tcfg)["grid"], "n_train": str(n_train),
        "split_seed": str(ds.master_seed), "config_digest": cfg.digest(), "tool_version": __version__})
    write_model(ae, args.out)
    if len(history):
        log.info("final reconstruction loss %.6g", history[-1])


def cmd_denoise(args, cfg):
    ae = read_model(args.model)
    ds = read_dataset(args.dataset)
    sigma = _pick(args.noise_sigma, cfg, "dataset", "noise_sigma", 0.0)
    if sigma > 0:
        ds = noisy_copy(ds, sigma, _pick(args.noise_seed, cfg, "dataset", "noise_seed", ds.master_seed))
    X_hat = denoise(ae, ds.X)
    rows = [f"# {k}={v}" for k, v in _header(cfg).items()]
    rows.append(",".join(["idx"] + [f"Xhat{i + 1}" for i in range(X_hat.shape[1])]))
    for inc, xh in zip(ds.incidences, X_hat):
        rows.append(",".join([str(inc.index)] + [f"{v:.17g}" for v in xh]))
    Path(args.out).write_text("\n".join(rows) + "\n", encoding="utf-8")
    if args.characterizer:
        mlp = read_model(args.characterizer)
        lines = []
        for inc in ds.incidences:
            pred = end_to_end(ae, mlp, inc.X, inc.index)
            p = pred.sample.params()
            if not lines:
                lines.append(",".join(["idx"] + list(p)))
            lines.append(",".join([str(inc.index)] + [f"{v:.17g}" for v in p.values()]))
        _out_text("\n".join(lines) + "\n", args.predictions_out)


def cmd_force_curve(args, cfg):
    film, case = _film_from_args(args, cfg)
    grid = _grid(args, cfg, case)
    fc = force_curve(FilmStack(film.film, film.thickness_t), grid.gaps, _quad(cfg))
    text = fc.to_csv(header_comments=[f"{k}={v}" for k, v in _header(cfg).items()])
    _out_text(text, args.out)


def cmd_spectrum(args, cfg):
    if args.model:
        mlp = read_model(args.model)
        film = predict_film(mlp, _features(args, cfg, mlp.sizes[0])).sample
    else:
        film, _ = _film_from_args(args, cfg)
    omega = np.geomspace(_pick(args.omega_min, cfg, "spectrum", "omega_min", 1e14),
                         _pick(args.omega_max, cfg, "spectrum", "omega_max", 1e17),
                         _pick(args.points, cfg, "spectrum", "points", 400))
    table = predict_spectrum(film, omega)
    if args.out:
        write_spectrum(table, args.out, _header(cfg))
    else:
        rows = ["omega_radps,re_eps,im_eps"] + [",".join(f"{v:.17g}" for v in r) for r in table]
        sys.stdout.write("\n".join(rows) + "\n")


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "denoise-train": cmd_denoise_train,
    "denoise": cmd_denoise,
    "force-curve": cmd_force_curve,
    "spectrum": cmd_spectrum,
}


def dispatch(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args, _config(args))
    except (DomainError, ConfigurationError, ParseError, SchemaError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
