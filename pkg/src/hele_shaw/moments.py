"""Harmonic moments of the fluid domain and the coefficient inequalities they imply.

Two independent routes compute ``M_k = (1/pi) * integral of z^k over the domain``:

* the contour route, a trapezoid rule for ``(1/2pi) * int f^k conj(f) f' zeta dtheta``
  on equispaced boundary nodes;
* Richardson's formula, an exact finite sum over index tuples of the
  Taylor coefficients of a polynomial map.
"""
from __future__ import annotations

import io
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NonLocallyUnivalent, TupleBlowup
from .rational_map import (
    RationalDerivative,
    TaylorSeries,
    boundary_values,
    eval_g,
    taylor_coeffs,
)

#: maximum number of index tuples Richardson's formula may enumerate
DEFAULT_TUPLE_BUDGET = 10 ** 7


@dataclass(frozen=True, eq=False)
class MomentVector:
    """Moments M_0..M_K with the Kuznetsova quantity N_0 = M_0 - a_1^2."""

    M: np.ndarray
    N0: float
    Q_accum: float = 0.0

    @property
    def M0(self) -> float:
        return float(self.M[0].real)


def _polynomial_series(rd: RationalDerivative) -> TaylorSeries:
    return taylor_coeffs(rd, rd.m + 1)


def _boundary(obj, nodes: int):
    """Equispaced circle nodes with f and f' there."""
    if isinstance(obj, TaylorSeries):
        z = np.exp(2j * np.pi * np.arange(nodes) / nodes)
        return z, obj(z), obj.derivative(z)
    rd = obj
    if rd.ell and np.any(np.abs(rd.poles) <= 1.0):
        raise NonLocallyUnivalent("a pole of g lies in the closed unit disk")
    if rd.n == 0:
        s = _polynomial_series(rd)
        z = np.exp(2j * np.pi * np.arange(nodes) / nodes)
        return z, s(z), eval_g(rd, z)
    return boundary_values(rd, nodes)


def moments_contour_all(obj, K: int, nodes: int = 1024) -> np.ndarray:
    """M_0..M_K by the trapezoid rule on ``nodes`` boundary points."""
    if nodes < 512:
        raise ValueError("nodes must be at least 512")
    z, f, fp = _boundary(obj, nodes)
    base = np.conj(f) * fp * z
    out = np.empty(K + 1, dtype=complex)
    power = np.ones_like(f)
    for k in range(K + 1):
        out[k] = np.mean(power * base)
        power = power * f
    return out


def moments_contour(obj, k: int, nodes: int = 1024) -> complex:
    """Harmonic moment M_k from boundary quadrature.

    Parameters
    ----------
    obj : RationalDerivative or TaylorSeries
        The map.  Only its poles need to lie outside the closed disk.
    k : int
        Moment index.
    nodes : int
        Number of equispaced nodes (at least 512).
    """
    return complex(moments_contour_all(obj, k, nodes)[k])


def moments_richardson(series: TaylorSeries, k: int, budget: int = DEFAULT_TUPLE_BUDGET) -> complex:
    """Exact enumeration of Richardson's tuple sum for M_k.

    ``M_k = sum i_1 a_{i_1} ... a_{i_{k+1}} conj(a_{i_1 + ... + i_{k+1}})``
    over tuples of positive indices; coefficients beyond the stored order
    are zero.
    """
    a = np.trim_zeros(np.asarray(series.coeffs, dtype=complex), "b")
    N = a.size
    if N == 0:
        return 0j
    if N ** (k + 1) > budget:
        raise TupleBlowup(f"{N}^{k + 1} tuples exceed the budget {budget}")
    idx = np.array(list(itertools.product(range(1, N + 1), repeat=k + 1)), dtype=int)
    total = idx.sum(axis=1)
    keep = total <= N
    idx, total = idx[keep], total[keep]
    terms = idx[:, 0] * np.prod(a[idx - 1], axis=1) * np.conj(a[total - 1])
    return complex(np.sum(terms))


def moment_vector(obj, K: int, Q: float = 0.0, nodes: int = 1024) -> MomentVector:
    """M_0..M_K by Richardson for polynomial maps and by contour otherwise.

    N_0 is formed as ``sum_{j>=2} j |a_j|^2`` for polynomial maps, which
    avoids the cancellation in ``M_0 - a_1^2`` once a_1 is large.
    """
    if isinstance(obj, TaylorSeries):
        series = obj
    elif obj.n == 0:
        series = _polynomial_series(obj)
    else:
        series = None
    if series is not None:
        M = np.array([moments_richardson(series, k) for k in range(K + 1)])
        a = series.coeffs
        N0 = float(np.sum(np.arange(2, a.size + 1) * np.abs(a[1:]) ** 2))
    else:
        M = moments_contour_all(obj, K, nodes)
        a1 = abs(obj.g0())
        N0 = float(M[0].real - a1 ** 2)
    return MomentVector(M, N0, float(Q))


# -- trajectory report ---------------------------------------------------------

@dataclass
class CheckResult:
    passed: bool
    max_residual: float
    tol: float
    note: str = ""


@dataclass
class MomentReport:
    checks: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_json(self) -> str:
        body = {
            "passed": bool(self.passed),
            "checks": {k: {"passed": bool(c.passed), "max_residual": float(c.max_residual),
                           "tol": float(c.tol), "note": c.note} for k, c in self.checks.items()},
        }
        return json.dumps(body, indent=2, sort_keys=True)

    def residual_csv(self) -> str:
        names = sorted(self.series)
        buf = io.StringIO()
        buf.write(",".join(names) + "\n")
        for row in zip(*(self.series[n] for n in names)):
            buf.write(",".join("%.17g" % v for v in row) + "\n")
        return buf.getvalue()


def trajectory_moment_report(traj, tol: float = 1e-8, mono_tol: float = 1e-10,
                             recompute: bool = False, nodes: int = 1024) -> MomentReport:
    """Conservation and Kuznetsova-type inequalities along a trajectory.

    Tolerances are relative to ``1 + |M_k(0)|`` for the conserved moments,
    to ``1 + M_0(0) + 2Q`` for the mass balance and the a_1 bounds, and to
    ``1 + N_0(0)`` for the monotonicity of N_0.

    Parameters
    ----------
    traj : Trajectory
        Needs at least 3 samples.
    recompute : bool
        Recompute moments from each sample's map instead of trusting the
        stored values.
    """
    samples = traj.samples
    if len(samples) < 3:
        raise ValueError("moment report needs at least 3 samples")
    K = samples[0].moments.M.size - 1
    if recompute:
        mv = [moment_vector(s.state.rd, K, s.state.Q, nodes) for s in samples]
    else:
        mv = [s.moments for s in samples]
    M = np.array([v.M for v in mv])
    N0 = np.array([v.N0 for v in mv])
    Q = np.array([v.Q_accum for v in mv])
    a1 = np.array([s.series.a1.real for s in samples])
    M00 = M[0, 0].real
    scale = 1.0 + M00 + 2 * Q
    rep = MomentReport()

    if K >= 1:
        drift = np.abs(M[:, 1:] - M[0, 1:]) / (1.0 + np.abs(M[0, 1:]))
        r = float(drift.max())
        rep.checks["moment_conservation"] = CheckResult(r <= tol, r, tol)
        for k in range(1, K + 1):
            rep.series[f"M{k}_drift"] = np.abs(M[:, k] - M[0, k])
    bal = np.abs(M[:, 0].real - M00 - 2 * Q)
    r = float((bal / scale).max())
    rep.checks["mass_balance"] = CheckResult(r <= tol, r, tol)
    rep.series["mass_balance"] = bal

    inc = np.diff(N0) / (1.0 + abs(N0[0]))
    r = float(max(0.0, inc.max()))
    rep.checks["N0_nonincreasing"] = CheckResult(r <= mono_tol, r, mono_tol)
    rep.checks["N0_nonnegative"] = CheckResult(bool(N0.min() >= -tol * scale.max()),
                                               float(max(0.0, -N0.min())), tol)
    rep.series["N0"] = N0

    lower = a1[0] ** 2 + 2 * Q - a1 ** 2
    r = float(max(0.0, (lower / scale).max()))
    rep.checks["a1_lower_bound"] = CheckResult(r <= tol, r, tol)

    worst = 0.0
    bound_N0 = max(N0[0], 0.0)
    for s in samples:
        a = s.series.coeffs
        k = np.arange(2, a.size + 1)
        worst = max(worst, float(np.max(np.abs(a[1:]) - np.sqrt(bound_N0 / k), initial=0.0)))
    rep.checks["coefficient_bound"] = CheckResult(worst <= tol * (1 + bound_N0), worst, tol)

    ratio = a1 / np.sqrt(M00 + 2 * Q)
    dec = float(max(0.0, (-np.diff(ratio)).max(initial=0.0)))
    over = float(max(0.0, (ratio - 1.0).max()))
    rep.checks["a1_ratio_monotone"] = CheckResult(dec <= tol and over <= tol, max(dec, over), tol)
    rep.series["a1_ratio"] = ratio
    rep.series["t"] = np.array([s.state.t for s in samples])
    return rep


__all__ = [
    "MomentVector", "moments_contour", "moments_contour_all", "moments_richardson",
    "moment_vector", "trajectory_moment_report", "MomentReport", "CheckResult",
    "DEFAULT_TUPLE_BUDGET",
]
