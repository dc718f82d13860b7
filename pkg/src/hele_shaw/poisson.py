"""Poisson-Schwarz function P of the boundary data q/|f'|^2 and its reflection.

For a rational derivative g with simple zeros ``w_k`` the function P is
rational with simple poles at the zeros of g::

    P(z) = A0 + sum_k 2 A_k / (z - w_k),    A_k = q / (g'(w_k) g*(w_k))

and satisfies ``P + P* = 2q / (g g*)`` identically.  A second route writes
``P = N / B`` with ``B = b prod(z - w_k)`` and solves a small real-linear
system for the polynomial N; it stays well conditioned when zeros collide
and is used by the coefficient dynamics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import ConstraintViolated, NearMultipleZero, NonLocallyUnivalent, ZeroHit
from .rational_map import POLE_CLEARANCE, RationalDerivative, eval_g, eval_g_star

#: zeros closer than this are not treated as simple
ZERO_GAP_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class PoissonData:
    """Partial-fraction data of P for one map and one source strength.

    Attributes
    ----------
    A : ndarray
        Coefficients A_1..A_m, aligned with ``rd.zeros``.
    A_inf : complex
        Value of P at infinity (zero unless m = n).
    A0 : complex
        Constant term of the partial-fraction form.
    q : float
        Source strength.
    mu_total : float
        Total mass of the boundary measure, equal to P(0).
    """

    A: np.ndarray
    A_inf: complex
    A0: complex
    q: float
    mu_total: float

    def scaled(self, factor: float) -> "PoissonData":
        """Same data for source strength ``factor * q`` (P is linear in q)."""
        return PoissonData(self.A * factor, self.A_inf * factor, self.A0 * factor,
                           self.q * factor, self.mu_total * factor)


def _g_prime_at_zeros(rd: RationalDerivative) -> np.ndarray:
    """g'(w_k) from the product form, without differentiating numerically."""
    w = rd.zeros
    diff = w[:, None] - w[None, :]
    np.fill_diagonal(diff, 1.0)
    num = rd.b * np.prod(diff, axis=1)
    den = np.prod((w[:, None] - rd.poles[None, :]) ** rd.orders, axis=1)
    return num / den


def min_zero_gap(rd: RationalDerivative) -> float:
    if rd.m < 2:
        return float("inf")
    d = np.abs(rd.zeros[:, None] - rd.zeros[None, :])
    np.fill_diagonal(d, np.inf)
    return float(d.min())


def coefficients_A(rd: RationalDerivative, q: float, zero_gap_tol: float = ZERO_GAP_TOL,
                   rel_tol: float = 1e-10) -> PoissonData:
    """Partial-fraction coefficients of P.

    Raises
    ------
    NearMultipleZero
        Two zeros are closer than ``zero_gap_tol``.
    ConstraintViolated
        The total mass is not real positive (the data are inconsistent).
        Its imaginary part is compared with the size of the terms summed,
        so cancellation near a pole drop does not trip the check.
    """
    if rd.m < rd.n:
        raise ValueError("partial-fraction form of P needs m >= n")
    if min_zero_gap(rd) < zero_gap_tol:
        raise NearMultipleZero(f"zeros closer than {zero_gap_tol:g}")
    A = q / (_g_prime_at_zeros(rd) * eval_g_star(rd, rd.zeros)) if rd.m else np.zeros(0, complex)
    if rd.m == rd.n:
        A_inf = q / (rd.b * np.conj(rd.g0()))
    else:
        A_inf = 0.0 + 0j
    s = np.sum(A / rd.zeros) if rd.m else 0.0
    A0 = A_inf + s
    mu = A_inf - s
    size = max(abs(mu), abs(A_inf), float(np.sum(np.abs(A / rd.zeros))) if rd.m else 0.0, 1e-300)
    if abs(mu.imag) > rel_tol * size or mu.real <= 0:
        raise ConstraintViolated(f"total mass {mu} is not real positive")
    return PoissonData(np.asarray(A, dtype=complex), complex(A_inf), complex(A0), float(q), float(mu.real))


def eval_P(pd: PoissonData, rd: RationalDerivative, z):
    """P(z) = A0 + sum 2 A_k / (z - w_k)."""
    z = np.asarray(z, dtype=complex)
    if rd.m and np.any(np.abs(z[..., None] - rd.zeros) < POLE_CLEARANCE):
        raise ZeroHit("P evaluated at a zero of g")
    return pd.A0 + np.sum(2 * pd.A / (z[..., None] - rd.zeros), axis=-1)


def eval_P_star(pd: PoissonData, rd: RationalDerivative, z):
    """P*(z) = conj(P(1/conj(z))); infinite arguments give P*(inf) = mu_total."""
    z = np.asarray(z, dtype=complex)
    inf = ~np.isfinite(z)
    zz = np.where(inf, 0.0, z)
    if rd.m:
        refl = 1.0 / np.conj(rd.zeros)
        if np.any(np.abs(zz[..., None] - refl)[~inf] < POLE_CLEARANCE):
            raise ZeroHit("P* evaluated at a reflected zero of g")
    terms = 2 * np.conj(pd.A) * zz[..., None] / (1.0 - np.conj(rd.zeros) * zz[..., None])
    out = np.conj(pd.A0) + np.sum(terms, axis=-1)
    if np.any(inf):
        out = np.where(inf, pd.mu_total + 0j, out)
    return out


def check_reflection_identity(pd: PoissonData, rd: RationalDerivative, samples: int = 200,
                              seed: int = 0, points=None) -> float:
    """Max scaled residual of P + P* - 2q/(g g*) over sample points.

    Points are drawn in the annulus 1/3 <= |z| <= 3 (default) and rejected
    when closer than 1e-2 to a zero, pole or their reflections.  Each
    residual is divided by ``max(1, |P|, |P*|)`` so that the bar is
    independent of the overall scale of the data.
    """
    if points is None:
        rng = np.random.default_rng(seed)
        bad = np.concatenate([rd.zeros, rd.poles, 1 / np.conj(rd.zeros), 1 / np.conj(rd.poles)])
        pts = []
        while len(pts) < samples:
            z = np.exp(rng.uniform(np.log(1 / 3), np.log(3))) * np.exp(2j * np.pi * rng.random())
            if bad.size == 0 or np.min(np.abs(z - bad)) > 1e-2:
                pts.append(z)
        points = np.array(pts)
    points = np.asarray(points, dtype=complex)
    P = eval_P(pd, rd, points)
    Ps = eval_P_star(pd, rd, points)
    R = 2 * pd.q / (eval_g(rd, points) * eval_g_star(rd, points))
    scale = np.maximum(1.0, np.maximum(np.abs(P), np.abs(Ps)))
    return float(np.max(np.abs(P + Ps - R) / scale))


def boundary_mass(rd: RationalDerivative, nodes: int = 1024) -> float:
    """(1/2pi) * integral of d(theta)/|f'(e^{i theta})|^2 by the trapezoid rule."""
    if nodes < 256:
        raise ValueError("nodes must be at least 256")
    mods = np.concatenate([np.abs(rd.zeros), np.abs(rd.poles)])
    if np.any(mods <= 1.0):
        raise NonLocallyUnivalent("a zero or pole of g lies in the closed unit disk")
    z = np.exp(2j * np.pi * np.arange(nodes) / nodes)
    return float(np.mean(1.0 / np.abs(eval_g(rd, z)) ** 2))


def q_for_unit_growth(rd: RationalDerivative, nodes: int = 1024) -> float:
    """Source strength making the boundary measure a probability measure."""
    return 1.0 / boundary_mass(rd, nodes)


def mu_per_unit_q(rd: RationalDerivative) -> float:
    """Total mass for q = 1, algebraically; robust to colliding zeros."""
    try:
        return coefficients_A(rd, 1.0).mu_total
    except NearMultipleZero:
        N = poisson_numerator(rd.numerator(), rd.denominator(), 1.0)
        return float((N[0] / rd.numerator()[0]).real)


# -- numerator route -----------------------------------------------------------

def _laurent_hermitian(x: np.ndarray, y: np.ndarray, kmax: int) -> np.ndarray:
    """Coefficients k = 0..kmax of x(z) * conj(y)(1/z) on the circle."""
    out = np.zeros(kmax + 1, dtype=complex)
    for k in range(kmax + 1):
        if k < x.size:
            lim = min(x.size - k, y.size)
            out[k] = np.dot(x[k: k + lim], np.conj(y[:lim]))
    return out


def poisson_numerator(numer, denom, q: float) -> np.ndarray:
    """Polynomial N with P = N / B for g = B / C.

    Solves ``N B* + N* B = 2q C C*`` on the circle together with
    ``Im P(0) = 0``.  ``numer`` and ``denom`` are ascending coefficient
    arrays of B and C.  The degree of N is ``max(deg B, deg C)``.
    """
    B = np.asarray(numer, dtype=complex)
    C = np.asarray(denom, dtype=complex)
    D = max(B.size, C.size) - 1
    rhs = 2 * q * _laurent_hermitian(C, C, D)

    def lhs(Nc):
        return _laurent_hermitian(Nc, B, D) + _laurent_hermitian(B, Nc, D)

    cols = []
    for i in range(2 * (D + 1)):
        e = np.zeros(D + 1, dtype=complex)
        e[i % (D + 1)] = 1.0 if i <= D else 1j
        v = lhs(e)
        row = np.concatenate([[v[0].real], v[1:].real, v[1:].imag,
                              [(e[0] * np.conj(B[0])).imag]])
        cols.append(row)
    M = np.array(cols).T
    r = np.concatenate([[rhs[0].real], rhs[1:].real, rhs[1:].imag, [0.0]])
    x = np.linalg.solve(M, r)
    return x[: D + 1] + 1j * x[D + 1:]


def poisson_numerator_from_data(pd: PoissonData, rd: RationalDerivative) -> np.ndarray:
    """N = P * B expanded from the partial-fraction data (simple zeros)."""
    B = rd.numerator()
    N = pd.A0 * B
    for k, w in enumerate(rd.zeros):
        rest = rd.b * npoly.polyfromroots(np.delete(rd.zeros, k)) if rd.m > 1 else np.array([rd.b])
        N = npoly.polyadd(N, 2 * pd.A[k] * rest)
    D = max(rd.m, rd.n)
    N = np.asarray(N, dtype=complex)
    return np.concatenate([N, np.zeros(max(0, D + 1 - N.size), dtype=complex)])


__all__ = [
    "ZERO_GAP_TOL", "PoissonData", "coefficients_A", "eval_P", "eval_P_star",
    "check_reflection_identity", "boundary_mass", "q_for_unit_growth", "mu_per_unit_q",
    "poisson_numerator", "poisson_numerator_from_data", "min_zero_gap",
]
