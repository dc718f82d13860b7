"""Closed-form solutions used as golden references."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import OutOfDomain, UnknownEntry
from .poisson import coefficients_A, eval_P_star, q_for_unit_growth
from .rational_map import RationalDerivative, eval_f, eval_g

HUNTINGFORD_M1 = 32 / 25
HUNTINGFORD_M2 = 1 / 5
HUNTINGFORD_T0 = 0.25 * math.log(3 / 5)


# -- Huntingford ------------------------------------------------------------------

def huntingford_coeffs(t: float, M1: float = HUNTINGFORD_M1, M2: float = HUNTINGFORD_M2) -> np.ndarray:
    """Taylor coefficients (a_1, a_2, a_3) of the cubic solution with a_1 = e^t."""
    return np.array([math.exp(t), M1 / (math.exp(2 * t) + 3 * math.exp(-2 * t) * M2),
                     math.exp(-3 * t) * M2])


def huntingford_map(t: float) -> RationalDerivative:
    """Cubic map with moments M_1 = 32/25, M_2 = 1/5 at time ``t >= t_0``."""
    if t < HUNTINGFORD_T0 - 1e-15:
        raise OutOfDomain(f"t = {t} precedes t_0 = {HUNTINGFORD_T0}")
    return RationalDerivative.from_taylor(huntingford_coeffs(t))


# -- off-center disk ----------------------------------------------------------------

def offcenter_params(s: float):
    """(a(s), b(s)) of the off-center disk family, time being the pole position."""
    if not (s > 1.0) or s == 2.0 or not math.isfinite(s):
        raise OutOfDomain(f"off-center disk needs 1 < s < inf, s != 2 (got {s})")
    root = math.sqrt((s * s - 1) ** 2 + 16)
    a = 1 / s + (s * s - 1) * (s * s + 1 + root) / (2 * s * (s * s - 4))
    b = 0.5 * s * (s * s + 1 - root)
    return a, b


def offcenter_disk_map(s: float) -> RationalDerivative:
    """g = b (z^2 - 2 s z + s a) / (z - s)^2; at s = 2 the limit 6 / (z - 2)^2."""
    if s == 2.0:
        return RationalDerivative(6.0, [], [2.0], [2])
    a, b = offcenter_params(s)
    disc = np.sqrt(complex(s * s - s * a))
    # conjugate pair first with positive imaginary part, real pair ascending
    zeros = sorted([s + disc, s - disc], key=lambda z: (z.real, -z.imag))
    return RationalDerivative(b, zeros, [s], [2])


def offcenter_f(z, s: float):
    """f(z) = b z (z - a) / (z - s), or 3z / (2 - z) at s = 2."""
    z = np.asarray(z, dtype=complex)
    if s == 2.0:
        return 3 * z / (2 - z)
    a, b = offcenter_params(s)
    return b * z * (z - a) / (z - s)


def offcenter_identity_residuals(s: float):
    """Values of f(1/s) and of the residue condition; they should be 1 and 4."""
    a, b = offcenter_params(s)
    fixed = b * (1 - a * s) / (s * (1 - s * s))
    res = b * b * (1 - 2 * s * s + a * s ** 3) * (a - s) / (s * (1 - s * s) ** 2)
    return fixed, res


def offcenter_q(s: float) -> float:
    """Source strength making the pole move with unit speed, ds/dt = 1."""
    rd = offcenter_disk_map(s)
    if rd.m < rd.n:
        raise OutOfDomain("q is not defined by the partial-fraction route at s = 2")
    pd = coefficients_A(rd, 1.0)
    return float(1.0 / (s * eval_P_star(pd, rd, s)).real)


# -- simple entries -----------------------------------------------------------------

def disk_map(t: float, a0: float = 1.0) -> RationalDerivative:
    """Centered disk under unit growth: f = a0 e^t z."""
    return RationalDerivative(a0 * math.exp(t), [])


def cardioid_map(t: float) -> RationalDerivative:
    """Unit-growth solution f = 2 e^t z - e^(-2t) z^2 / 2, single zero 2 e^(3t)."""
    return RationalDerivative.from_taylor([2 * math.exp(t), -0.5 * math.exp(-2 * t)])


@dataclass(frozen=True)
class CardioidReference:
    A1: float
    A0: float
    mu: float
    log_rate: float


def cardioid_reference(w: float, b: float, q: float) -> CardioidReference:
    """Closed-form Poisson data and zero velocity for g = b (z - w), w > 1 real."""
    if not w > 1:
        raise OutOfDomain("cardioid reference needs w > 1")
    A1 = q * w / (b * b * (1 - w * w))
    A0 = A1 / w
    return CardioidReference(A1, A0, -A0, -3 * A0)


@dataclass(frozen=True)
class TwoRootFields:
    alpha: float
    beta: float
    product_rate_sign: int
    ratio_rate_sign: int


def two_real_roots_fields(omega1: float, omega2: float) -> TwoRootFields:
    """Scaled log-velocity fields of two real zeros 1 < w1 < w2 (polynomial, m = 2).

    ``(|b|^2/q) d log w_{1,2}/dt = alpha +- beta (w1 w2 - 3)/(w2 - w1)``.
    The product always grows; the ratio ``w2/w1`` shrinks exactly when
    ``w1 w2 > 3`` (the sign returned is that of ``d/dt (w2/w1)``).
    """
    if not 1 < omega1 < omega2:
        raise OutOfDomain("need 1 < omega1 < omega2")
    den = (omega1 ** 2 - 1) * (omega2 ** 2 - 1) * (omega1 * omega2 - 1)
    alpha = 2 * (1 + omega1 * omega2) / den
    beta = (omega1 + omega2) / den
    s = omega1 * omega2 - 3
    ratio_sign = 0 if abs(s) <= 1e-12 * omega1 * omega2 else (-1 if s > 0 else 1)
    return TwoRootFields(alpha, beta, 1, ratio_sign)


# -- registry -----------------------------------------------------------------------

@dataclass(frozen=True)
class GalleryEntry:
    """A named closed-form solution.

    ``q`` returns the source strength of the entry's own time variable.
    """

    name: str
    description: str
    domain: tuple
    map: Callable[[float], RationalDerivative]
    q: Callable[[float], float]
    f: Callable | None = None
    milestones: dict = field(default_factory=dict)

    def g(self, z, t: float):
        return eval_g(self.map(t), z)

    def f_eval(self, z, t: float):
        if self.f is not None:
            return self.f(z, t)
        return eval_f(self.map(t), z)

    def check_domain(self, t: float):
        lo, hi = self.domain
        if not (lo <= t <= hi):
            raise OutOfDomain(f"{self.name}: t = {t} outside [{lo}, {hi}]")


def _taylor_f(coeffs_fn):
    def f(z, t):
        a = coeffs_fn(t)
        z = np.asarray(z, dtype=complex)
        return z * np.polynomial.polynomial.polyval(z, a)
    return f


REGISTRY = {
    "huntingford": GalleryEntry(
        "huntingford", "cubic map with M1 = 32/25, M2 = 1/5 and a1 = e^t",
        (HUNTINGFORD_T0, math.inf), huntingford_map,
        lambda t: q_for_unit_growth(huntingford_map(t)),
        _taylor_f(huntingford_coeffs),
        {"t0": HUNTINGFORD_T0, "cusp": 0.0}),
    "offcenter": GalleryEntry(
        "offcenter", "off-center disk, time = position of the double pole",
        (1.0, math.inf), offcenter_disk_map, offcenter_q,
        lambda z, s: offcenter_f(z, s), {"pole_drop": 2.0}),
    "disk": GalleryEntry(
        "disk", "centered unit disk under unit growth", (-math.inf, math.inf), disk_map,
        lambda t: math.exp(2 * t), lambda z, t: math.exp(t) * np.asarray(z, dtype=complex)),
    "cardioid": GalleryEntry(
        "cardioid", "single-zero polynomial map under unit growth", (-math.inf, math.inf),
        cardioid_map, lambda t: q_for_unit_growth(cardioid_map(t)),
        _taylor_f(lambda t: np.array([2 * math.exp(t), -0.5 * math.exp(-2 * t)]))),
}


def get_entry(name: str) -> GalleryEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownEntry(name) from None


def list_entries() -> list:
    return sorted(REGISTRY)


def emit(name: str, t: float) -> RationalDerivative:
    entry = get_entry(name)
    if name == "offcenter" and not t > 1:
        raise OutOfDomain("off-center disk needs t > 1")
    if name == "huntingford" and t < HUNTINGFORD_T0:
        raise OutOfDomain(f"t precedes t_0 = {HUNTINGFORD_T0}")
    return entry.map(t)


def pg_residual(entry: GalleryEntry, t: float, nodes: int = 512, h: float = 1e-5) -> float:
    """max |Re(f_t conj(z f')) - q(t)| on the circle with a centered difference in t."""
    z = np.exp(2j * np.pi * np.arange(nodes) / nodes)
    ft = (entry.f_eval(z, t + h) - entry.f_eval(z, t - h)) / (2 * h)
    fp = eval_g(entry.map(t), z)
    return float(np.max(np.abs((ft * np.conj(z * fp)).real - entry.q(t))))


def cusp_exponent(rd: RationalDerivative, z0: complex, phis=None) -> float:
    """Fitted power p of the boundary cusp at a zero ``z0`` of g on the circle.

    Near the cusp the image of the circle, written in the frame of the
    tangent direction ``f''(z0) z0^2``, is ``y ~ |x|^p``; p = 3/2 for a
    generic zero on the circle.  Reported only: there is no pass bar.
    """
    z0 = complex(z0)
    if abs(abs(z0) - 1) > 1e-12:
        raise ValueError("z0 must lie on the unit circle")
    phis = np.logspace(-3.5, -1.5, 24) if phis is None else np.asarray(phis, float)
    h = 1e-4
    fpp = (eval_g(rd, z0 * (1 + h)) - eval_g(rd, z0 * (1 - h))) / (2 * h * z0)
    # (z - z0)^2 ~ -z0^2 phi^2 along the circle
    u = -fpp * z0 * z0
    u /= abs(u)
    w0 = eval_f(rd, z0)
    d = (eval_f(rd, z0 * np.exp(1j * phis)) - w0) / u
    return float(np.polyfit(np.log(np.abs(d.real)), np.log(np.abs(d.imag)), 1)[0])


__all__ = [
    "HUNTINGFORD_M1", "HUNTINGFORD_M2", "HUNTINGFORD_T0", "huntingford_coeffs",
    "huntingford_map", "offcenter_params", "offcenter_disk_map", "offcenter_f",
    "offcenter_identity_residuals", "offcenter_q", "disk_map", "cardioid_map",
    "CardioidReference", "cardioid_reference", "TwoRootFields", "two_real_roots_fields",
    "GalleryEntry", "REGISTRY", "get_entry", "list_entries", "emit", "pg_residual",
    "cusp_exponent",
]
