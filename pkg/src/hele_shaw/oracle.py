"""Spectral Lowner-Kufarev integrator on Taylor coefficients.

This route never looks at zeros or poles.  It samples the boundary data
``q / |f'|^2`` on the circle, turns it into the analytic function P by a
discrete Fourier transform, and evolves the coefficients of f by the
triple product ``df/dt = z f' P``.  Agreement with the root dynamics is
therefore a check of two unrelated pieces of code.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import linear_sum_assignment

from .errors import BoundaryZero, UnderResolved
from .rational_map import RationalDerivative, TaylorSeries, taylor_coeffs

UNIT_GROWTH = "unit_growth"
#: |f'| below this on the sampled circle means a cusp is imminent
MIN_BOUNDARY_DERIVATIVE = 1e-8
#: relative size of the top quarter of coefficients that triggers refinement
SPECTRAL_FLOOR = 1e-13
MAX_NODES = 1 << 17
MAX_ORDER = 1024


@dataclass(frozen=True, eq=False)
class SpectralState:
    """Truncated Taylor series of f with its source strength.

    ``q_mode`` is ``"unit_growth"`` or a positive float.  ``node_count`` is
    the initial number of circle nodes; P_spectral refines it when the
    Fourier tail of the boundary data is not negligible.
    """

    t: float
    coeffs: TaylorSeries
    q_mode: object = UNIT_GROWTH
    node_count: int = 256
    Q: float = 0.0

    @property
    def N(self) -> int:
        return self.coeffs.order

    @classmethod
    def from_map(cls, rd: RationalDerivative, t: float = 0.0, q_mode=UNIT_GROWTH,
                 N: int = 64, node_count: int | None = None) -> "SpectralState":
        N = max(N, rd.m + 2)
        return cls(float(t), taylor_coeffs(rd, N), q_mode, node_count or 4 * N)

    def q(self) -> float:
        if self.q_mode == UNIT_GROWTH:
            fp = self.coeffs.derivative(np.exp(2j * np.pi * np.arange(self.node_count) / self.node_count))
            return float(1.0 / np.mean(1.0 / np.abs(fp) ** 2))
        return float(self.q_mode)


def _boundary_data(a: np.ndarray, nodes: int):
    z = np.exp(2j * np.pi * np.arange(nodes) / nodes)
    fp = np.polynomial.polynomial.polyval(z, a * np.arange(1, a.size + 1))
    mod = np.abs(fp)
    if mod.min() < MIN_BOUNDARY_DERIVATIVE:
        raise BoundaryZero(f"|f'| = {mod.min():.3g} on the circle")
    return 1.0 / mod ** 2


def _P_coefficients(a: np.ndarray, q_mode, nodes: int, count: int):
    """(p_0..p_{count-1}, q, nodes actually used)."""
    while True:
        u = _boundary_data(a, nodes)
        uhat = np.fft.fft(u) / nodes
        half = nodes // 2
        tail = np.abs(uhat[half // 2: half]).max()
        # roundoff in the transform is relative to the largest sample
        if tail <= max(1e-15 * abs(uhat[0]), 1e-15 * u.max()) and half > count:
            break
        if nodes >= MAX_NODES:
            raise UnderResolved(f"boundary data unresolved with {nodes} nodes")
        nodes *= 2
    q = 1.0 / uhat[0].real if q_mode == UNIT_GROWTH else float(q_mode)
    p = 2 * q * uhat[:count]
    p[0] = q * uhat[0].real
    return p, q, nodes


def P_spectral(state: SpectralState) -> TaylorSeries:
    """Taylor coefficients p_0..p_{N-1} of P from sampled boundary data.

    ``p_0`` is the mean of ``u = q/|f'|^2`` and ``p_k = 2 u_k`` for the
    positive Fourier modes, so that ``Re P = u`` on the circle and P(0) is
    real.  The coefficient array is returned inside a ``TaylorSeries``
    whose ``coeffs[k]`` is p_k.

    Raises
    ------
    BoundaryZero
        |f'| drops below 1e-8 on the sampled circle.
    """
    p, _, _ = _P_coefficients(state.coeffs.coeffs, state.q_mode, state.node_count, state.N)
    return TaylorSeries(p)


def _lk(a: np.ndarray, p: np.ndarray) -> np.ndarray:
    N = a.size
    ja = a * np.arange(1, N + 1)
    # d a_k = sum_{j=1..k} j a_j p_{k-j}
    return np.convolve(ja, p[:N])[:N]


def lk_coefficient_rhs(state: SpectralState) -> np.ndarray:
    """da_k/dt for k = 1..N from the truncated product z f' P."""
    p, _, _ = _P_coefficients(state.coeffs.coeffs, state.q_mode, state.node_count, state.N)
    return _lk(state.coeffs.coeffs, p)


def _tail_size(a: np.ndarray) -> float:
    N = a.size
    return float(np.abs(a[(3 * N) // 4:]).max() / max(1.0, np.abs(a).max()))


def run_oracle(initial: SpectralState, t_end: float, sample_dt: float | None = None,
               rtol: float = 1e-11, atol: float = 1e-14, max_order: int = MAX_ORDER) -> list:
    """Integrate the coefficient system with scipy's DOP853.

    Series shorter than 8 coefficients are padded with zeros.  The run is
    split at the sample times (every ``sample_dt``, default a
    single segment).  After each segment the top quarter of the
    coefficients is inspected; if it exceeds the spectral floor the
    segment is repeated with twice as many coefficients.

    Raises
    ------
    UnderResolved
        The order would exceed ``max_order``, or the boundary data need
        more than the maximal number of nodes.
    """
    if t_end < initial.t:
        raise ValueError("t_end precedes the initial time")
    a = np.asarray(initial.coeffs.coeffs, dtype=complex)
    if a.size < 8:
        a = np.concatenate([a, np.zeros(8 - a.size, dtype=complex)])
    if _tail_size(a) > SPECTRAL_FLOOR:
        raise UnderResolved("initial coefficients are not resolved")
    if sample_dt is None or sample_dt <= 0:
        grid = [initial.t, t_end]
    else:
        k = int(math.floor((t_end - initial.t) / sample_dt + 1e-9))
        grid = [initial.t + i * sample_dt for i in range(k + 1)]
        if t_end - grid[-1] > 1e-12 * max(1.0, abs(t_end)):
            grid.append(t_end)
    states = [initial]
    nodes = max(initial.node_count, 4 * a.size)
    Q = initial.Q
    for t0, t1 in zip(grid[:-1], grid[1:]):
        while True:
            N = a.size
            box = {"nodes": nodes}

            def fun(t, y):
                p, q, box["nodes"] = _P_coefficients(y[:N], initial.q_mode, box["nodes"], N)
                return np.concatenate([_lk(y[:N], p), [q]])

            sol = solve_ivp(fun, (t0, t1), np.concatenate([a, [Q]]), method="DOP853",
                            rtol=rtol, atol=atol)
            if not sol.success:
                raise UnderResolved(f"spectral integration failed at t = {t0}: {sol.message}")
            y = sol.y[:, -1]
            nodes = box["nodes"]
            if _tail_size(y[:N]) <= SPECTRAL_FLOOR:
                break
            if 2 * N > max_order:
                raise UnderResolved(f"coefficient tail still large at order {N}")
            a = np.concatenate([a, np.zeros(N, dtype=complex)])
            nodes = max(nodes, 4 * a.size)
        a = y[:N].copy()
        a[0] = a[0].real
        Q = float(y[N].real)
        states.append(SpectralState(float(t1), TaylorSeries(a), initial.q_mode, nodes, Q))
    return states


# -- comparison ------------------------------------------------------------------

def _truncated_zeros(a: np.ndarray, rel: float = 1e-13) -> np.ndarray:
    g = a * np.arange(1, a.size + 1)
    scale = np.abs(g).max()
    top = np.nonzero(np.abs(g) > rel * scale)[0]
    g = g[: top[-1] + 1] if top.size else g[:1]
    if g.size < 2:
        return np.zeros(0, dtype=complex)
    return np.roots(g[::-1])


@dataclass
class CrossReport:
    times: list = field(default_factory=list)
    coeff_diff: list = field(default_factory=list)
    zero_diff: list = field(default_factory=list)
    coeff_tol: float = 1e-7
    zero_tol: float = 1e-6

    @property
    def max_coeff_diff(self) -> float:
        return max(self.coeff_diff, default=0.0)

    @property
    def max_zero_diff(self) -> float:
        return max(self.zero_diff, default=0.0)

    @property
    def passed(self) -> bool:
        return bool(self.times) and self.max_coeff_diff <= self.coeff_tol \
            and self.max_zero_diff <= self.zero_tol

    def to_json(self) -> str:
        return json.dumps({
            "passed": self.passed, "compared_samples": len(self.times),
            "max_coeff_diff": self.max_coeff_diff, "max_zero_diff": self.max_zero_diff,
            "coeff_tol": self.coeff_tol, "zero_tol": self.zero_tol,
        }, indent=2, sort_keys=True)


def cross_validate(traj, oracle_states, coeff_tol: float = 1e-7, zero_tol: float = 1e-6,
                   time_tol: float = 1e-9) -> CrossReport:
    """Compare a root-dynamics trajectory with oracle states at shared times.

    Zeros are compared only inside the disk of convergence of the Taylor
    series (90 % of the smallest pole modulus); each trajectory zero is
    paired with an oracle root by minimal total distance.  For polynomial
    trajectories of degree m + 1 the oracle roots come from its first
    m + 1 coefficients.
    """
    rep = CrossReport(coeff_tol=coeff_tol, zero_tol=zero_tol)
    by_time = sorted(oracle_states, key=lambda s: s.t)
    otimes = np.array([s.t for s in by_time])
    for s in traj.samples:
        if otimes.size == 0:
            break
        i = int(np.argmin(np.abs(otimes - s.state.t)))
        if abs(otimes[i] - s.state.t) > time_tol:
            continue
        o = by_time[i].coeffs.coeffs
        rd = s.state.rd
        mine = taylor_coeffs(rd, o.size).coeffs
        rep.times.append(float(s.state.t))
        rep.coeff_diff.append(float(np.abs(mine - o).max()))
        radius = 0.9 * float(np.abs(rd.poles).min()) if rd.ell else math.inf
        w = rd.zeros[np.abs(rd.zeros) < radius]
        if w.size:
            # a polynomial flow keeps its degree: higher oracle coefficients are
            # integration noise whose spurious roots would crowd the true ones
            roots = _truncated_zeros(o[: rd.m + 1] if rd.n == 0 else o)
            if roots.size < w.size:
                rep.zero_diff.append(math.inf)
                continue
            cost = np.abs(w[:, None] - roots[None, :])
            r, c = linear_sum_assignment(cost)
            rep.zero_diff.append(float(cost[r, c].max()))
        else:
            rep.zero_diff.append(0.0)
    return rep


# -- files -----------------------------------------------------------------------

def states_to_csv(states) -> str:
    """t, Q, then a{k}_re, a{k}_im for k = 1..N (shorter series padded with 0)."""
    N = max(s.N for s in states)
    buf = io.StringIO()
    cols = ["t", "Q"] + [f"a{k}_{p}" for k in range(1, N + 1) for p in ("re", "im")]
    buf.write(",".join(cols) + "\n")
    for s in states:
        a = np.zeros(N, dtype=complex)
        a[: s.N] = s.coeffs.coeffs
        row = [s.t, s.Q] + [v for c in a for v in (c.real, c.imag)]
        buf.write(",".join("%.17g" % v for v in row) + "\n")
    return buf.getvalue()


def states_from_csv(text: str, q_mode=UNIT_GROWTH) -> list:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header[:2] != ["t", "Q"]:
        raise ValueError("not an oracle coefficient file")
    out = []
    for ln in lines[1:]:
        v = np.array([float(x) for x in ln.split(",")])
        a = v[2::2] + 1j * v[3::2]
        out.append(SpectralState(float(v[0]), TaylorSeries(a), q_mode, 4 * a.size, float(v[1])))
    return out


def run_oracle_config(cfg) -> list:
    """Oracle run described by a simulation ``RunConfig``."""
    init = SpectralState.from_map(cfg.map, cfg.t_span[0], cfg.q_mode, cfg.oracle_N)
    return run_oracle(init, cfg.t_span[1], cfg.sample_dt, rtol=min(cfg.rtol, 1e-10))


__all__ = [
    "SpectralState", "P_spectral", "lk_coefficient_rhs", "run_oracle", "cross_validate",
    "CrossReport", "states_to_csv", "states_from_csv", "run_oracle_config",
    "MIN_BOUNDARY_DERIVATIVE", "SPECTRAL_FLOOR",
]
