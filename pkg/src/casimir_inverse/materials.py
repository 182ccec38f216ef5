"""Lorentz-Drude permittivities, unit conversion and random film sampling.

All frequencies are angular frequencies in rad/s and lengths are in meters.
A pole with zero resonance frequency is a Drude (free-carrier) term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from .errors import ConfigurationError, DomainError

# CODATA values, fixed (hbar as published to 10 digits rather than h / 2 pi)
HBAR = 1.054571817e-34  # J s
C = 299792458.0  # m/s
KB = 1.380649e-23  # J/K
E_CHARGE = 1.602176634e-19  # C


@dataclass(frozen=True)
class PhysConstants:
    hbar: float = HBAR
    c: float = C
    kB: float = KB
    e_charge: float = E_CHARGE


PHYS = PhysConstants()


def ev_to_radps(energy):
    """Convert a photon energy in eV to an angular frequency in rad/s."""
    energy = np.asarray(energy, dtype=float)
    if np.any(energy < 0):
        raise DomainError(f"energy must be non-negative, got {energy}")
    out = energy * E_CHARGE / HBAR
    return float(out) if out.ndim == 0 else out


SUM_RULE_LIMIT = ev_to_radps(33.0)


@dataclass(frozen=True)
class Pole:
    omega0: float
    omegap: float
    gamma: float

    def __post_init__(self):
        if not (self.omega0 >= 0 and math.isfinite(self.omega0)):
            raise DomainError(f"omega0 must be finite and >= 0, got {self.omega0}")
        if not (self.omegap > 0 and math.isfinite(self.omegap)):
            raise DomainError(f"omegap must be finite and > 0, got {self.omegap}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise DomainError(f"gamma must be finite and > 0, got {self.gamma}")

    @property
    def is_drude(self):
        return self.omega0 == 0.0


@dataclass(frozen=True)
class LorentzDrudeModel:
    """Ordered list of poles.

    An empty pole list is vacuum (permittivity 1 everywhere); it is accepted
    so that vacuum layers can share the same code path.
    """

    poles: tuple[Pole, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "poles", tuple(self.poles))

    @property
    def n_poles(self):
        return len(self.poles)

    @property
    def has_drude(self):
        return any(p.is_drude for p in self.poles)

    def arrays(self):
        """Return (omega0, omegap, gamma) as 1-D arrays."""
        if not self.poles:
            z = np.zeros(0)
            return z, z, z
        a = np.array([(p.omega0, p.omegap, p.gamma) for p in self.poles])
        return a[:, 0], a[:, 1], a[:, 2]

    def drude_weight(self):
        """Coefficient S of the small-frequency divergence eps(i xi) ~ S / xi."""
        return sum(p.omegap**2 / p.gamma for p in self.poles if p.is_drude)

    def static_eps(self):
        """eps(i0) for a model without Drude poles."""
        if self.has_drude:
            raise DomainError("static permittivity diverges for a model with a Drude pole")
        return 1.0 + sum(p.omegap**2 / p.omega0**2 for p in self.poles)


VACUUM = LorentzDrudeModel(())


def gold_drude():
    """Drude model for gold: plasma frequency 9 eV, damping 0.035 eV."""
    return LorentzDrudeModel((Pole(0.0, ev_to_radps(9.0), ev_to_radps(0.035)),))


def eval_eps_imag_axis(model, xi):
    """Permittivity on the imaginary frequency axis, eps(i xi).

    ``xi`` may be a scalar or an array. The result is real and >= 1.
    """
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr < 0) or np.any(~np.isfinite(xi_arr)):
        raise DomainError("xi must be finite and >= 0")
    w0, wp, g = model.arrays()
    if model.has_drude and np.any(xi_arr == 0):
        raise DomainError("eps(i0) is singular for a model with a Drude pole")
    x = xi_arr[..., None]
    out = 1.0 + np.sum(wp**2 / (w0**2 + x * x + g * x), axis=-1)
    return float(out) if out.ndim == 0 else out


def eval_eps_real_freq(model, omega):
    """Complex permittivity on the real frequency axis."""
    om = np.asarray(omega, dtype=float)
    if np.any(om <= 0) or np.any(~np.isfinite(om)):
        raise DomainError("omega must be finite and > 0")
    w0, wp, g = model.arrays()
    x = om[..., None]
    out = 1.0 + np.sum(wp**2 / (w0**2 - x * x - 1j * x * g), axis=-1)
    return complex(out) if out.ndim == 0 else out


def oscillator_strength(model):
    """Root of the summed squared plasma frequencies, in rad/s."""
    return math.sqrt(sum(p.omegap**2 for p in model.poles))


# Canonical parameter order of the target vector. Thickness first, then
# (omega0, omegap, gamma) for each pole.
def param_names(n_poles):
    names = ["t"]
    for n in range(1, n_poles + 1):
        names += [f"w0{n}", f"wp{n}", f"g{n}"]
    return names


@dataclass(frozen=True)
class FilmSample:
    thickness_t: float
    film: LorentzDrudeModel

    def params(self):
        """Dict of canonical parameter name -> value (meters / rad/s)."""
        out = {"t": self.thickness_t}
        for n, p in enumerate(self.film.poles, start=1):
            out[f"w0{n}"] = p.omega0
            out[f"wp{n}"] = p.omegap
            out[f"g{n}"] = p.gamma
        return out

    @classmethod
    def from_params(cls, params):
        n_poles = (len(params) - 1) // 3
        poles = tuple(
            Pole(params[f"w0{n}"], params[f"wp{n}"], params[f"g{n}"])
            for n in range(1, n_poles + 1)
        )
        return cls(float(params["t"]), LorentzDrudeModel(poles))


SAMPLING_LAWS = ("log-uniform", "uniform")


@dataclass
class SamplingRanges:
    """Closed sampling interval for every parameter of a film.

    ``bounds`` maps each canonical name to ``(lo, hi)``; ``lo == hi`` marks a
    fixed parameter. ``tied`` maps a parameter to ``(source, factor)`` and
    sets it to ``factor * source`` after the draw, e.g. ``wp2 = 4 * w02``.
    """

    bounds: dict
    tied: dict = field(default_factory=dict)
    law: str = "log-uniform"

    def __post_init__(self):
        if self.law not in SAMPLING_LAWS:
            raise ConfigurationError(f"unknown sampling law {self.law!r}")
        n_poles = (len(self.bounds) + len(self.tied) - 1) // 3
        expected = set(param_names(n_poles))
        given = set(self.bounds) | set(self.tied)
        if given != expected or set(self.bounds) & set(self.tied):
            raise ConfigurationError(
                f"ranges must cover exactly {sorted(expected)}, got {sorted(given)}"
            )
        for name, (lo, hi) in self.bounds.items():
            if not (0 <= lo <= hi) or not math.isfinite(hi):
                raise ConfigurationError(f"bad interval for {name}: [{lo}, {hi}]")
        for name, (src, factor) in self.tied.items():
            if src not in self.bounds or factor <= 0:
                raise ConfigurationError(f"bad tie for {name}: {src} x {factor}")

    @property
    def n_poles(self):
        return (len(self.bounds) + len(self.tied) - 1) // 3

    @property
    def names(self):
        return param_names(self.n_poles)

    def is_free(self, name):
        """True if the parameter is drawn at random (not fixed, not tied)."""
        if name in self.tied:
            return False
        lo, hi = self.bounds[name]
        return lo < hi

    def contains(self, params, rtol=1e-12):
        for name, (lo, hi) in self.bounds.items():
            v = params[name]
            if v < lo * (1 - rtol) or v > hi * (1 + rtol):
                return False
        return True


def _draw(lo, hi, law, rng):
    if lo == hi:
        return float(lo)
    if law == "log-uniform" and lo > 0:
        return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
    return float(rng.uniform(lo, hi))


MAX_REJECTIONS = 10**6


def sample_film(ranges, rng):
    """Draw a film inside ``ranges`` that satisfies the oscillator-strength cap.

    Violations of the sum rule reject the whole draw.
    """
    for _ in range(MAX_REJECTIONS):
        params = {}
        for name in ranges.names:
            if name in ranges.tied:
                continue
            lo, hi = ranges.bounds[name]
            params[name] = _draw(lo, hi, ranges.law, rng)
        for name, (src, factor) in ranges.tied.items():
            params[name] = factor * params[src]
        sample = FilmSample.from_params(params)
        if oscillator_strength(sample.film) <= SUM_RULE_LIMIT:
            return sample
    raise ConfigurationError(
        f"{MAX_REJECTIONS} consecutive draws violated the oscillator-strength limit"
    )
