"""Equilibrium Casimir pressure between a gold plate and a film-coated gold plate.

The pressure is evaluated on the imaginary frequency axis as a Matsubara sum
over xi_u = 2 pi u kB T / hbar with the u = 0 term halved. The lateral
wavevector integral is carried out in the variable y = 2 q0 d, shifted to
s = y - 2 xi d / c, so the integrand carries a plain exp(-s) factor.

Sign convention: the attractive pressure is reported as a positive number.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import roots_legendre

from .errors import DomainError, NumericError
from .materials import C, HBAR, KB, VACUUM, LorentzDrudeModel, eval_eps_imag_axis, gold_drude

POLARIZATIONS = ("p", "s")
KPAR_SCHEMES = ("gauss-legendre-on-y", "adaptive")


@dataclass(frozen=True)
class FilmStack:
    """Gold plate | vacuum gap | film of thickness t | gold substrate."""

    film: LorentzDrudeModel
    thickness_t: float
    plate1: LorentzDrudeModel = field(default_factory=gold_drude)
    substrate: LorentzDrudeModel = field(default_factory=gold_drude)
    temperature_T: float = 300.0

    def __post_init__(self):
        if not self.thickness_t > 0:
            raise DomainError(f"film thickness must be > 0, got {self.thickness_t}")
        if not self.temperature_T > 0:
            raise DomainError(f"temperature must be > 0, got {self.temperature_T}")


@dataclass(frozen=True)
class QuadratureConfig:
    """Discretisation controls for the pressure evaluation.

    ``gl_nodes`` is the number of Gauss-Legendre nodes in each panel of the
    graded composite rule on s in [0, y_max].
    """

    rel_tol: float = 1e-8
    matsubara_consecutive_small: int = 3
    kpar_scheme: str = "gauss-legendre-on-y"
    gl_nodes: int = 16
    y_max: float = 60.0
    max_terms: int = 1_000_000

    def __post_init__(self):
        if not 0 < self.rel_tol < 1e-2:
            raise DomainError(f"rel_tol must lie in (0, 1e-2), got {self.rel_tol}")
        if self.gl_nodes < 16:
            raise DomainError(f"gl_nodes must be >= 16, got {self.gl_nodes}")
        if self.kpar_scheme not in KPAR_SCHEMES:
            raise DomainError(f"unknown kpar scheme {self.kpar_scheme!r}")
        if self.matsubara_consecutive_small < 1:
            raise DomainError("matsubara_consecutive_small must be >= 1")


DEFAULT_QUAD = QuadratureConfig()


@dataclass
class ForceCurve:
    gaps_d: np.ndarray
    pressure_P: np.ndarray
    p_norm: np.ndarray
    dpnorm_dz: np.ndarray

    def to_csv(self, path=None, header_comments=()):
        """Write ``d_nm,P_Pa,P_norm,dPnorm_dz_per_um`` rows; returns the text."""
        lines = [f"# {c}" for c in header_comments]
        lines.append("d_nm,P_Pa,P_norm,dPnorm_dz_per_um")
        for row in zip(self.gaps_d * 1e9, self.pressure_P, self.p_norm, self.dpnorm_dz):
            lines.append(",".join(f"{v:.17g}" for v in row))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def matsubara_xi(u, T):
    """Matsubara frequency xi_u = 2 pi u kB T / hbar in rad/s."""
    if np.any(np.asarray(u) < 0) or not T > 0:
        raise DomainError("need u >= 0 and T > 0")
    out = 2.0 * math.pi * np.asarray(u, dtype=float) * KB * T / HBAR
    return float(out) if out.ndim == 0 else out


def q_perp(eps_ixi, xi, kpar):
    """Perpendicular decay constant sqrt(eps (xi/c)^2 + kpar^2) in 1/m."""
    return np.sqrt(eps_ixi * (xi / C) ** 2 + kpar**2)


# Numerators use difference-of-squares forms: eps_b qa - eps_a qb and qa - qb
# cancel badly once both permittivities approach 1 at high xi.
def _rp(eps_a, eps_b, qa, qb, xc2, k2):
    den = eps_b * qa + eps_a * qb
    return (eps_b - eps_a) * (eps_a * eps_b * xc2 + (eps_a + eps_b) * k2) / (den * den)


def _rs(eps_a, eps_b, qa, qb, xc2):
    den = qa + qb
    return (eps_a - eps_b) * xc2 / (den * den)


def fresnel_r(eps_a, eps_b, xi, kpar, pol):
    """Fresnel coefficient of the a|b interface at imaginary frequency i xi."""
    if pol not in POLARIZATIONS:
        raise DomainError(f"polarization must be 'p' or 's', got {pol!r}")
    if np.any((np.asarray(xi) == 0) & (np.asarray(kpar) == 0)):
        raise DomainError("xi and kpar cannot both vanish")
    qa = q_perp(eps_a, xi, kpar)
    qb = q_perp(eps_b, xi, kpar)
    xc2 = (np.asarray(xi, dtype=float) / C) ** 2
    if pol == "p":
        return _rp(eps_a, eps_b, qa, qb, xc2, np.asarray(kpar, dtype=float) ** 2)
    return _rs(eps_a, eps_b, qa, qb, xc2)


def _compose(r02, r23, q2, t):
    # r20 = -r02 turns the back-interface denominator into 1 + r02 r23 e.
    e = np.exp(-2.0 * q2 * t)
    return (r02 + r23 * e) / (1.0 + r02 * r23 * e)


def _static_rp(model_a, model_b):
    """xi -> 0 limit of r_p at fixed kpar > 0 (all q tend to kpar)."""
    sa, sb = model_a.drude_weight(), model_b.drude_weight()
    if sa > 0 or sb > 0:
        return (sb - sa) / (sb + sa)
    ea, eb = model_a.static_eps(), model_b.static_eps()
    return (eb - ea) / (eb + ea)


def film_reflection(stack, xi, kpar, pol):
    """Reflection from vacuum onto the film backed by the substrate.

    At xi = 0 the zero-frequency limit is used: Drude layers behave as
    ideal conductors for p polarization and r_s vanishes.
    """
    if pol not in POLARIZATIONS:
        raise DomainError(f"polarization must be 'p' or 's', got {pol!r}")
    xi = np.asarray(xi, dtype=float)
    kpar = np.asarray(kpar, dtype=float)
    if np.any(xi < 0) or np.any(kpar < 0):
        raise DomainError("xi and kpar must be >= 0")
    if np.any((xi == 0) & (kpar == 0)):
        raise DomainError("xi and kpar cannot both vanish")
    if np.all(xi == 0):
        if pol == "s":
            return np.zeros(np.broadcast(xi, kpar).shape)[()]
        r02 = _static_rp(VACUUM, stack.film)
        r23 = _static_rp(stack.film, stack.substrate)
        return _compose(r02, r23, kpar, stack.thickness_t)
    if np.any(xi == 0):
        raise DomainError("mixed zero and non-zero xi are not supported")
    e2 = eval_eps_imag_axis(stack.film, xi)
    e3 = eval_eps_imag_axis(stack.substrate, xi)
    q0 = q_perp(1.0, xi, kpar)
    q2 = q_perp(e2, xi, kpar)
    q3 = q_perp(e3, xi, kpar)
    xc2, k2 = (xi / C) ** 2, kpar**2
    if pol == "p":
        r02, r23 = _rp(1.0, e2, q0, q2, xc2, k2), _rp(e2, e3, q2, q3, xc2, k2)
    else:
        r02, r23 = _rs(1.0, e2, q0, q2, xc2), _rs(e2, e3, q2, q3, xc2)
    return _compose(r02, r23, q2, stack.thickness_t)


def pec_pressure(d):
    """Pressure between perfect conductors at zero temperature, hbar c pi^2 / (240 d^4)."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0):
        raise DomainError(f"gap must be > 0, got {d}")
    out = HBAR * C * math.pi**2 / (240.0 * d_arr**4)
    return float(out) if out.ndim == 0 else out


# --- quadrature ------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _gl(n):
    x, w = roots_legendre(n)
    return x, w


@functools.lru_cache(maxsize=256)
def _panel_rule(h_min, y_max, n):
    """Composite Gauss-Legendre on [0, y_max] with panels doubling from h_min."""
    edges = [0.0]
    h = h_min
    while edges[-1] + h < y_max:
        edges.append(edges[-1] + h)
        h *= 2.0
    edges.append(y_max)
    x, w = _gl(n)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        nodes.append(a + half * (x + 1.0))
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _smallest_panel(stack, d, xi1):
    # Resolve the film round-trip factor exp(-y t / d) and the branch points
    # of q2(s), which sit a distance ~ 2 xi d / c from s = 0.
    scale = 1.0
    if stack is not None:
        scale = min(scale, d / stack.thickness_t)
    scale = min(scale, 2.0 * xi1 * d / C)
    return 0.25 * scale


# --- Matsubara sum ------------------------------------------------------------


def _one_minus(r, y):
    # 1 - r exp(-y) without cancellation when r -> 1 and y -> 0
    return (1.0 - r) - r * np.expm1(-y)


def _integrands(R, y):
    """Return (x/(1-x), x/(1-x)^2) for x = R exp(-y)."""
    x = R * np.exp(-y)
    om = _one_minus(R, y)
    if np.any(om <= 0):
        raise NumericError("round-trip factor reached 1; a reflection coefficient exceeds unity")
    return x / om, x / (om * om)


def _pec_R(shape):
    return np.ones(shape)


def _block_R(stack, xi, y0, s, d, pec):
    """Round-trip products r01 * r02_tilde for both polarizations.

    ``xi``, ``y0`` have shape (U, 1), ``s`` shape (1, S).
    """
    shape = np.broadcast(xi, s).shape
    if pec:
        one = _pec_R(shape)
        return one, one
    xi_flat = xi[:, 0]
    e1 = eval_eps_imag_axis(stack.plate1, xi_flat)[:, None]
    e2 = eval_eps_imag_axis(stack.film, xi_flat)[:, None]
    e3 = eval_eps_imag_axis(stack.substrate, xi_flat)[:, None]
    two_d = 2.0 * d
    q0 = (y0 + s) / two_d
    k2 = s * (s + 2.0 * y0) / (two_d * two_d)
    xc2 = (xi / C) ** 2
    q1 = np.sqrt(k2 + e1 * xc2)
    q2 = np.sqrt(k2 + e2 * xc2)
    q3 = np.sqrt(k2 + e3 * xc2)
    t = stack.thickness_t
    Rp = _rp(1.0, e1, q0, q1, xc2, k2) * _compose(
        _rp(1.0, e2, q0, q2, xc2, k2), _rp(e2, e3, q2, q3, xc2, k2), q2, t)
    Rs = _rs(1.0, e1, q0, q1, xc2) * _compose(_rs(1.0, e2, q0, q2, xc2), _rs(e2, e3, q2, q3, xc2), q2, t)
    return Rp, Rs


def _zero_R(stack, s, d, pec):
    k = s / (2.0 * d)
    if pec:
        one = np.ones_like(s)
        return one, one
    r01 = _static_rp(VACUUM, stack.plate1)
    r02 = _static_rp(VACUUM, stack.film)
    r23 = _static_rp(stack.film, stack.substrate)
    Rp = r01 * _compose(r02, r23, k, stack.thickness_t) * np.ones_like(s)
    return Rp, np.zeros_like(s)


def _gl_terms(Rp, Rs, s, y, w):
    """Integrate y^2 F and y^3 G over the node set for each row.

    ``Rp``, ``Rs`` already carry exp(-y0), so the round trip is R exp(-s).
    """
    Fp, Gp = _integrands(Rp, s)
    Fs, Gs = _integrands(Rs, s)
    y2 = y * y
    tP = (y2 * (Fp + Fs)) @ w
    tD = (y2 * y * (Gp + Gs)) @ w
    return tP, tD


def _adaptive_term(stack, xi, d, pec, quad):
    """Adaptive quadrature of one Matsubara term; slow reference route."""
    y0 = 2.0 * xi * d / C

    def f(s, which):
        s_arr = np.array([[s]])
        if xi == 0:
            Rp, Rs = _zero_R(stack, s_arr, d, pec)
        else:
            Rp, Rs = _block_R(stack, np.array([[xi]]), np.array([[y0]]), s_arr, d, pec)
        y = y0 + s_arr
        Fp, Gp = _integrands(Rp, y)
        Fs, Gs = _integrands(Rs, y)
        if which == 0:
            return float((y * y * (Fp + Fs))[0, 0])
        return float((y**3 * (Gp + Gs))[0, 0])

    eps = quad.rel_tol * 1e-2
    out = []
    for which in (0, 1):
        val, _ = integrate.quad(f, 0.0, np.inf, args=(which,), epsabs=0.0, epsrel=eps, limit=500)
        out.append(val)
    return out[0], out[1]


def _tail(term, prev):
    """Estimate of the Matsubara sum left over after ``term``.

    Treats the remaining terms as geometric with the last observed ratio;
    never less than the term itself, infinite while terms are not shrinking.
    """
    term, prev = abs(term), abs(prev)
    if term == 0.0:
        return 0.0
    if not term < prev:
        return math.inf
    ratio = term / prev
    return term * max(1.0, ratio / (1.0 - ratio))


def _pressure_and_derivative(stack, d, quad, pec=False):
    """Return (P, dP/dd) in Pa and Pa/m."""
    if not d > 0:
        raise DomainError(f"gap must be > 0, got {d}")
    T = 300.0 if stack is None else stack.temperature_T
    xi1 = 2.0 * math.pi * KB * T / HBAR
    two_d = 2.0 * d
    adaptive = quad.kpar_scheme == "adaptive"
    if not adaptive:
        s, w = _panel_rule(_smallest_panel(stack, d, xi1), quad.y_max, quad.gl_nodes)
        s = s[None, :]

    if adaptive:
        tP0, tD0 = _adaptive_term(stack, 0.0, d, pec, quad)
    else:
        Rp, Rs = _zero_R(stack, s, d, pec)
        tP0, tD0 = _gl_terms(Rp, Rs, s, s, w)
        tP0, tD0 = float(tP0[0]), float(tD0[0])
    sum_P = 0.5 * tP0
    sum_D = 0.5 * tD0

    small = 0
    prev_P, prev_D = tP0, tD0
    u = 1
    block = 64
    tol = quad.rel_tol
    need = quad.matsubara_consecutive_small
    while True:
        if u > quad.max_terms:
            raise NumericError(
                f"Matsubara sum not converged after {quad.max_terms} terms at d={d:g} m",
                partial=(sum_P, sum_D),
            )
        us = np.arange(u, u + block, dtype=float)
        xi = xi1 * us
        if adaptive:
            pairs = [_adaptive_term(stack, x, d, pec, quad) for x in xi]
            tP = np.array([p[0] for p in pairs])
            tD = np.array([p[1] for p in pairs])
        else:
            xi_c = xi[:, None]
            y0 = two_d * xi_c / C
            Rp, Rs = _block_R(stack, xi_c, y0, s, d, pec)
            # exp(-y0) is factored out of R so huge y0 only underflows the term
            tP, tD = _gl_terms(Rp * np.exp(-y0), Rs * np.exp(-y0), s, y0 + s, w)
        done = False
        for i in range(len(us)):
            sum_P += tP[i]
            sum_D += tD[i]
            if (_tail(tP[i], prev_P) < tol * abs(sum_P)
                    and _tail(tD[i], prev_D) < tol * abs(sum_D)):
                small += 1
                if small >= need:
                    done = True
                    break
            else:
                small = 0
            prev_P, prev_D = tP[i], tD[i]
        if done:
            break
        u += block
        block = min(block * 2, 4096)

    if not (math.isfinite(sum_P) and math.isfinite(sum_D)):
        raise NumericError(f"non-finite pressure at d={d:g} m", partial=(sum_P, sum_D))
    pref = KB * T / math.pi
    P = pref * sum_P / two_d**3
    dP = -2.0 * pref * sum_D / two_d**4
    return P, dP


def casimir_pressure(stack, d, quad=DEFAULT_QUAD, *, pec=False):
    """Attractive Casimir pressure magnitude in Pa.

    ``pec=True`` forces the perfect-conductor reflection coefficients
    (r_p = 1, r_s = -1 on both plates); ``stack`` may then be None.
    """
    return _pressure_and_derivative(stack, d, quad, pec)[0]


def normalized_pressure(stack, d, quad=DEFAULT_QUAD, *, pec=False):
    return casimir_pressure(stack, d, quad, pec=pec) / pec_pressure(d)


def _normalized_pair(stack, d, quad, pec):
    P, dP = _pressure_and_derivative(stack, d, quad, pec)
    pp = pec_pressure(d)
    pn = P / pp
    # d(P/P_P)/dd = P'/P_P + 4 P / (d P_P); reported per micrometer of gap
    dpn = (dP / pp + 4.0 * pn / d) * 1e-6
    return P, pn, dpn


def dpnorm_dz(stack, d, quad=DEFAULT_QUAD, *, pec=False):
    """Gap derivative of the normalized pressure, per micrometer."""
    return _normalized_pair(stack, d, quad, pec)[2]


def force_curve(stack, gaps, quad=DEFAULT_QUAD, *, pec=False):
    """Evaluate P, P/P_P and its gap derivative on ``gaps`` (meters)."""
    gaps = np.asarray(gaps, dtype=float)
    rows = [_normalized_pair(stack, float(d), quad, pec) for d in gaps]
    P, pn, dpn = (np.array(col) for col in zip(*rows)) if rows else (np.zeros(0),) * 3
    return ForceCurve(gaps, P, pn, dpn)
