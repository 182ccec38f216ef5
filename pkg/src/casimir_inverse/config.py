"""Run-configuration files: flat ``key = value`` lines grouped in sections.

Example::

    [run]
    case = four-pole
    seed = 7

    [train]
    epochs = 20000
    learning_rate = 0.1

Unknown sections or keys are rejected. Command-line flags override file values.
"""
from __future__ import annotations

import configparser
import hashlib

from .errors import ConfigurationError


def _hidden(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


SCHEMA = {
    "run": {"case": str, "seed": int, "out_dir": str},
    "dataset": {
        "n": int,
        "law": str,
        "d_min_nm": float,
        "d_max_nm": float,
        "count": int,
        "workers": int,
        "noise_sigma": float,
        "noise_seed": int,
    },
    "train": {
        "epochs": int,
        "learning_rate": float,
        "batch_size": int,
        "n_train": int,
        "hidden": _hidden,
        "weight_tol": float,
    },
    "denoise": {"sigma": float, "epochs": int, "learning_rate": float, "batch_size": int, "hidden": _hidden},
    "quadrature": {"rel_tol": float, "gl_nodes": int},
    "spectrum": {"omega_min": float, "omega_max": float, "points": int},
}


class RunConfig:
    """Resolved settings: flag value, else file value, else the caller's default."""

    def __init__(self, values=None):
        self.values = dict(values or {})

    @classmethod
    def from_file(cls, path):
        parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
        values = {}
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigurationError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigurationError(f"{path}: unknown key {key!r} in [{section}]")
                try:
                    values[(section, key)] = SCHEMA[section][key](raw.strip())
                except ValueError as exc:
                    raise ConfigurationError(f"{path}: bad value for {section}.{key}: {raw!r}") from exc
        return cls(values)

    def override(self, section, key, value):
        if key not in SCHEMA.get(section, {}):
            raise ConfigurationError(f"unknown setting {section}.{key}")
        if value is not None:
            self.values[(section, key)] = value

    def get(self, section, key, default=None):
        return self.values.get((section, key), default)

    def digest(self):
        text = ";".join(f"{s}.{k}={v!r}" for (s, k), v in sorted(self.values.items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]
