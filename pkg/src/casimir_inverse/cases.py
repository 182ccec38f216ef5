"""Parameter ranges, hyperparameters and reference films of the four studied cases.

Frequencies are in rad/s, thicknesses in meters.
"""
from __future__ import annotations

from dataclasses import dataclass

from .materials import FilmSample, SamplingRanges, param_names

NM = 1e-9
E15 = 1e15

CASE_TAGS = ("two-pole-a", "two-pole-b", "four-pole", "silicon")


def _four_pole_bounds(t_range, table):
    bounds = {"t": (t_range[0] * NM, t_range[1] * NM)}
    for name, (lo, hi) in zip(param_names(4)[1:], table):
        bounds[name] = (lo * E15, hi * E15)
    return bounds


def case_ranges(tag, law="log-uniform"):
    if tag == "two-pole-a":
        return SamplingRanges(
            bounds={
                "t": (10 * NM, 500 * NM),
                "w01": (0.0, 0.0),
                "wp1": (1e15, 1e15),
                "g1": (1e14, 1e14),
                "w02": (3e14, 1.25e16),
            },
            tied={"wp2": ("w02", 4.0), "g2": ("w02", 0.4)},
            law=law,
        )
    if tag == "two-pole-b":
        return SamplingRanges(
            bounds={
                "t": (20 * NM, 300 * NM),
                "w01": (0.0, 0.0),
                "wp1": (5e14, 5e14),
                "g1": (2e14, 2e14),
                "w02": (3e14, 2.5e16),
            },
            tied={"wp2": ("w02", 2.0), "g2": ("w02", 0.8)},
            law=law,
        )
    if tag == "four-pole":
        table = [
            (0.0, 0.0),
            (0.316, 5),
            (0.034, 6.05),
            (0.316, 5),
            (0.657, 21.3),
            (0.131, 23.3),
            (1.33, 13.9),
            (2.47, 39.8),
            (0.893, 57.5),
            (6.96, 41.6),
            (7.49, 48.9),
            (5.32, 198),
        ]
        return SamplingRanges(bounds=_four_pole_bounds((10, 500), table), law=law)
    if tag == "silicon":
        table = [
            (0.5, 12.5),
            (0.33, 33.4),
            (0.029, 2.24),
            (0.719, 13.3),
            (0.462, 33.2),
            (0.04, 4.07),
            (1.01, 23.6),
            (1.09, 46.5),
            (0.067, 5.79),
            (1.84, 31.2),
            (1.08, 36.7),
            (0.159, 6.89),
        ]
        return SamplingRanges(bounds=_four_pole_bounds((100, 500), table), law=law)
    raise KeyError(f"unknown case {tag!r}; expected one of {CASE_TAGS}")


@dataclass(frozen=True)
class CaseDefaults:
    d_min: float
    d_max: float
    n_total: int
    n_train: int
    epochs: int
    learning_rate: float = 0.1
    batch_size: int = 200
    hidden: tuple = (20, 20, 20)


CASE_DEFAULTS = {
    "two-pole-a": CaseDefaults(5 * NM, 2500 * NM, 1000, 800, 5_000_000),
    "two-pole-b": CaseDefaults(5 * NM, 2500 * NM, 1000, 800, 5_000_000),
    "four-pole": CaseDefaults(5 * NM, 2500 * NM, 2000, 1600, 400_000),
    "silicon": CaseDefaults(50 * NM, 2500 * NM, 2000, 1600, 800_000),
}

N_FEATURES = 20

DENOISER_DEFAULTS = dict(hidden=(12, 4, 12), learning_rate=0.004, epochs=1_000_000, batch_size=200)
NOISE_SIGMA = 0.02


def _film(t_nm, *poles):
    params = {"t": t_nm * NM}
    for n, (w0, wp, g) in enumerate(poles, start=1):
        params[f"w0{n}"], params[f"wp{n}"], params[f"g{n}"] = w0 * E15, wp * E15, g * E15
    return FilmSample.from_params(params)


# Training-data examples (i)-(iii).
TRAINING_EXAMPLES = {
    "i": _film(467, (5.51, 7.67, 0.579), (6.02, 5.4, 1.5), (15.9, 20.6, 2), (19.3, 24.7, 3.78)),
    "ii": _film(167, (0.746, 2.08, 0.071), (1.42, 2.63, 0.288), (13.1, 13.2, 2.52), (14.1, 11.9, 2.33)),
    "iii": _film(152, (3.19, 8.03, 0.246), (3.58, 6.76, 0.734), (4.04, 15.1, 0.871), (6.15, 7.73, 0.418)),
}


def two_pole_film(tag, t, w02):
    """Two-pole film of case ``tag`` with the dependent parameters filled in."""
    r = case_ranges(tag)
    params = {name: lo for name, (lo, _) in r.bounds.items()}
    params["t"], params["w02"] = t, w02
    for name, (src, factor) in r.tied.items():
        params[name] = factor * params[src]
    return FilmSample.from_params(params)


# Predicted / true (t, w02) pairs for the two two-pole spectra examples.
TWO_POLE_EXAMPLES = {
    "3a": dict(case="two-pole-a", true=(385 * NM, 0.365 * E15), predicted=(394 * NM, 0.366 * E15)),
    "3b": dict(case="two-pole-b", true=(63 * NM, 8.74 * E15), predicted=(63 * NM, 8.65 * E15)),
}

# True four-pole films behind the three spectra examples of the four-pole case.
FOUR_POLE_EXAMPLES = {
    "5a": _film(194, (0, 3, 0.612), (0.513, 2.12, 0.978), (9.53, 26.2, 10.8), (14.8, 25.2, 19.1)),
    "5b": _film(294, (0, 0.334, 0.0871), (4.03, 13.6, 10.5), (7.29, 12.7, 19.8), (22, 38.5, 110)),
    "5c": _film(48, (0, 0.727, 0.463), (0.386, 1.23, 0.635), (8.2, 19.4, 8.02), (15.4, 24.2, 31.7)),
}

# True films of the silicon-case examples; "6a" is the fitted silicon film.
SILICON_EXAMPLES = {
    "6a": _film(324, (5.2, 9, 0.6), (5.7, 9, 1), (6.45, 15.4, 1), (8.1, 8, 1.2)),
    "6b": _film(468, (1.07, 1.35, 0.066), (1.56, 2.33, 0.496), (2.22, 6.1, 0.359), (3.29, 1.98, 0.564)),
    "6c": _film(129, (1.8, 3.34, 0.273), (2.13, 2.09, 0.693), (4.76, 10.5, 1.2), (12.3, 15.1, 2.62)),
}
