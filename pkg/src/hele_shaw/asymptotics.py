"""Large-time diagnostics for global runs.

Every check here turns a limit statement about t -> infinity into something
measurable on a finite trajectory: fitted slopes of log-residuals against
log a_1, monotonicity over the tail of the run, and two-sided bands for
quantities that should stay comparable to a power of a_1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import RegimeMismatch
from .moments import CheckResult, MomentReport
from .poisson import coefficients_A
from .rational_map import RationalDerivative, fraction_coeffs, to_log_rational

#: residuals below this (relative to the size of the target) count as exact
NOISE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class AsymptoticTargets:
    """Limit configuration of the rescaled zeros.

    Attributes
    ----------
    omega_hat : ndarray
        The m solutions of ``w^m = -1 / ((m+1) conj(M_m))``, principal root
        first, then rotated by the m-th roots of unity.
    r_gap : int
        First index r >= 1 with ``M_r != 0`` (0 if every M_1..M_m vanishes).
    product : complex
        ``prod(omega_hat) = (-1)^m / ((m+1) conj(M_m))``, the exactly conserved
        product of the rescaled zeros.
    """

    omega_hat: np.ndarray
    r_gap: int
    product: complex


def targets_from_moments(M, m: int, tol: float = 1e-12) -> AsymptoticTargets:
    """Targets from the moments ``M_0..M_m`` of a polynomial map of degree m+1."""
    M = np.asarray(M, dtype=complex)
    if m < 1:
        return AsymptoticTargets(np.zeros(0, complex), 0, 1.0 + 0j)
    scale = tol * (1.0 + abs(M[0]))
    r = next((k for k in range(1, M.size) if abs(M[k]) > scale), 0)
    if abs(M[m]) <= scale:
        return AsymptoticTargets(np.zeros(0, complex), r, complex("nan"))
    c = -1.0 / ((m + 1) * np.conj(M[m]))
    root = np.abs(c) ** (1.0 / m) * np.exp(1j * np.angle(c) / m)
    hat = root * np.exp(2j * np.pi * np.arange(m) / m)
    return AsymptoticTargets(hat, r, complex((-1) ** m / ((m + 1) * np.conj(M[m]))))


def rescaled_zeros(state) -> np.ndarray:
    """Zeros of g divided by ``a_1^((m+2)/m)``."""
    rd = state.rd if hasattr(state, "rd") else state
    if rd.n:
        raise ValueError("rescaled zeros are defined for polynomial maps")
    if rd.m == 0:
        return np.zeros(0, dtype=complex)
    a1 = rd.g0()
    if not (abs(a1.imag) <= 1e-9 * abs(a1) and a1.real > 0):
        raise ValueError("a_1 must be real positive")
    return rd.zeros * a1.real ** (-(rd.m + 2) / rd.m)


def fitted_slope(x, y, floor: float = 0.0) -> float:
    """Least-squares slope of log y against log x over points with y > floor."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    keep = (y > floor) & (x > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


@dataclass
class AsymptoticReport(MomentReport):
    """Checks plus per-sample series and scalar findings (fits, bands)."""

    values: dict = field(default_factory=dict)

    def to_json(self) -> str:
        import json
        body = json.loads(super().to_json())
        body["values"] = _jsonable(self.values)
        return json.dumps(body, indent=2, sort_keys=True)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, complex) or isinstance(v, np.complexfloating):
        return [float(v.real), float(v.imag)]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _assign(zt: np.ndarray, hat: np.ndarray) -> np.ndarray:
    cost = np.abs(zt[:, None] - hat[None, :])
    _, cols = linear_sum_assignment(cost)
    return cols


def _tail(n: int, frac: float) -> slice:
    return slice(max(0, int(math.floor(n * (1 - frac)))), n)


def convergence_report(traj, targets: AsymptoticTargets | None = None,
                       product_tol: float = 1e-8, moments: str = "sample") -> AsymptoticReport:
    """Rescaled-zero convergence and coefficient decay along a polynomial run.

    Parameters
    ----------
    traj : Trajectory
        Polynomial run (n = 0) with at least 3 samples.
    targets : AsymptoticTargets, optional
        Defaults to the targets of the first sample's moments.
    moments : {"sample", "initial"}
        Which moments the decay residuals ``a_k a_1^k - conj(M_{k-1})`` use.
        With ``"sample"`` each sample is compared with its own (conserved)
        moments, which removes integrator drift from the residual.

    Notes
    -----
    Gated checks: the conserved product of rescaled zeros, the zero mismatch
    not growing over the last decade of samples, stable labels over the
    final quarter, negative fitted decay slopes and the bound r <= m.
    """
    samples = traj.samples
    if len(samples) < 3:
        raise ValueError("convergence report needs at least 3 samples")
    rd0 = samples[0].state.rd
    if rd0.n:
        raise ValueError("convergence report needs a polynomial run")
    m = rd0.m
    M0 = samples[0].moments.M
    if targets is None:
        targets = targets_from_moments(M0, m)
    rep = AsymptoticReport()
    a1 = np.array([s.series.a1.real for s in samples])
    t = np.array([s.state.t for s in samples])
    rep.series["t"] = t
    rep.series["a1"] = a1
    rep.values["omega_hat"] = list(targets.omega_hat)
    rep.values["r_gap"] = targets.r_gap
    if m == 0:
        rep.checks["trivial"] = CheckResult(True, 0.0, 0.0, "no zeros")
        return rep

    mismatch = np.empty(len(samples))
    prod_res = np.empty(len(samples))
    labels = []
    for i, s in enumerate(samples):
        zt = rescaled_zeros(s.state)
        cols = _assign(zt, targets.omega_hat)
        labels.append(tuple(cols))
        mismatch[i] = np.max(np.abs(zt - targets.omega_hat[cols]))
        prod_res[i] = abs(np.prod(zt) - targets.product)
    rel = prod_res / abs(targets.product)
    rep.series["mismatch"] = mismatch
    rep.series["product_residual"] = rel
    rep.checks["conserved_product"] = CheckResult(bool(rel.max() <= product_tol), float(rel.max()),
                                                  product_tol)

    decade = max(2, len(samples) // 10)
    last = mismatch[-decade:]
    growth = float(max(0.0, np.max(np.diff(last)) if last.size > 1 else 0.0))
    rep.checks["mismatch_decreasing"] = CheckResult(growth <= 1e-9, growth, 1e-9,
                                                    "over the last decade of samples")
    rep.values["final_mismatch"] = float(mismatch[-1])
    quarter = labels[_tail(len(labels), 0.25)]
    rep.checks["labels_stable"] = CheckResult(len(set(quarter)) == 1, float(len(set(quarter)) - 1), 0.0)

    # coefficient decay a_k a_1^k -> conj(M_{k-1})
    slopes = {}
    worst = -math.inf
    for k in range(2, m + 2):
        res = np.empty(len(samples))
        for i, s in enumerate(samples):
            Mk = s.moments.M[k - 1] if moments == "sample" else M0[k - 1]
            res[i] = abs(s.series.coeffs[k - 1] * a1[i] ** k - np.conj(Mk))
        rep.series[f"decay{k}"] = res
        floor = NOISE_FLOOR * (1.0 + abs(M0[k - 1]))
        half = _tail(len(samples), 0.5)
        if res[half].max() <= floor:
            slopes[k] = None
            continue
        slopes[k] = fitted_slope(a1[half], res[half], floor)
        worst = max(worst, slopes[k])
    rep.values["decay_slopes"] = slopes
    ok = worst < 0 or worst == -math.inf
    rep.checks["decay_slopes_negative"] = CheckResult(bool(ok), float(max(worst, 0.0)), 0.0,
                                                      "fitted over the second half of the run")

    r = targets.r_gap
    if r >= 2:
        for s_ in range(2, r + 1):
            rep.series[f"gap{s_}"] = np.array([abs(s.series.coeffs[s_ - 1]) * a1[i] ** (r + 1)
                                               for i, s in enumerate(samples)])
        gap_slope = max(fitted_slope(a1, rep.series[f"gap{s_}"], NOISE_FLOOR) for s_ in range(2, r + 1))
        rep.values["gap_slope"] = gap_slope
        rep.checks["gap_decay"] = CheckResult(bool(not gap_slope >= 0), float(max(gap_slope, 0.0)), 0.0)
    rep.checks["r_le_m"] = CheckResult(0 < r <= m, float(r), float(m))
    return rep


# -- poles ------------------------------------------------------------------------

def pole_envelope_check(traj, tol: float = 1e-6) -> AsymptoticReport:
    """Pole envelope, strict outward motion and the Harnack sandwich.

    The envelope is
    ``(|p0| + 1/|p0| - 2)/a_1(0) <= |p(t)|/a_1(t) <= (|p0| + 1/|p0| + 2)/a_1(0)``.
    The Harnack sandwich is checked on sample increments:
    ``Delta log|p| / Delta log a_1`` lies between ``(x-1)/(x+1)`` and
    ``(x+1)/(x-1)`` evaluated at the start of the increment (x = |p|),
    which bounds the instantaneous ratio on the whole interval because
    |p| increases.
    """
    samples = traj.samples
    if len(samples) < 2 or samples[0].state.rd.n == 0:
        raise ValueError("pole checks need a rational run with at least 2 samples")
    a1 = np.array([s.series.a1.real for s in samples])
    P = np.array([np.abs(s.state.rd.poles) for s in samples])
    rep = AsymptoticReport()
    rep.series["t"] = np.array([s.state.t for s in samples])
    p0 = P[0]
    lo = (p0 + 1 / p0 - 2) / a1[0]
    hi = (p0 + 1 / p0 + 2) / a1[0]
    ratio = P / a1[:, None]
    viol = np.maximum(lo - ratio, ratio - hi).max(initial=-math.inf)
    rep.checks["envelope"] = CheckResult(bool(viol <= tol), float(max(viol, 0.0)), tol)
    rep.values["envelope"] = [[float(a), float(b)] for a, b in zip(lo, hi)]
    for j in range(P.shape[1]):
        rep.series[f"pole{j + 1}_ratio"] = ratio[:, j]

    dlogp = np.diff(np.log(P), axis=0)
    rep.checks["poles_outward"] = CheckResult(bool(np.all(dlogp > 0)),
                                              float(max(0.0, -dlogp.min(initial=0.0))), 0.0)
    dloga = np.diff(np.log(a1))
    ok = dloga > 0
    x = P[:-1][ok]
    h = dlogp[ok] / dloga[ok, None]
    below = (x - 1) / (x + 1) - h
    above = h - (x + 1) / (x - 1)
    hv = float(max(0.0, below.max(initial=0.0), above.max(initial=0.0)))
    rep.checks["harnack"] = CheckResult(hv <= tol, hv, tol)
    return rep


# -- coefficient families ---------------------------------------------------------

def _families(rd: RationalDerivative):
    lr = to_log_rational(rd)
    bt, ct = fraction_coeffs(rd)
    return lr.rational_numerator, lr.rational_denominator, bt, ct, lr


def _f_on_circle(rd: RationalDerivative, series, z):
    if rd.n == 0:
        return series(z), series.derivative(z)
    lr = to_log_rational(rd)
    return lr(z), lr.derivative(z)


def coefficient_scaling_check(traj, band: float = 0.25, nodes: int = 512,
                              truncations=(2, 4, 8)) -> AsymptoticReport:
    """Growth laws of the fraction coefficients against powers of a_1.

    A family "bounded above" passes when its scaled value has a fitted slope
    (against log a_1, over the second half of the run) at most ``band``;
    "two-sided" families need ``|slope| <= band``.  Truncation errors
    ``sup |f - f_N|`` and ``sup |f' - f_N'|`` are recorded with their fitted
    exponents ``s_N`` (reported only).  The final check evaluates
    ``sup |[f - sqrt(2Q + M_0(0)) z] (2Q)^((r+1)/2) - conj(M_r) z^(r+1)|``
    on the circle and requires it to shrink over the second half of the run.
    """
    samples = traj.samples
    if len(samples) < 3:
        raise ValueError("coefficient scaling needs at least 3 samples")
    rd0 = samples[0].state.rd
    n, ell, m = rd0.n, rd0.ell, rd0.m
    a1 = np.array([s.series.a1.real for s in samples])
    half = _tail(len(samples), 0.5)
    rep = AsymptoticReport()
    rep.series["t"] = np.array([s.state.t for s in samples])
    z = np.exp(2j * np.pi * np.arange(nodes) / nodes)

    upper, twosided = {}, {}
    for s in samples:
        rd = s.state.rd
        b, c, bt, ct, _ = _families(rd)
        A = s.series.a1.real
        for j in range(1, c.size - 1):
            upper.setdefault(f"c{j}", []).append(abs(c[j]) * A ** j)
        if c.size > 1:
            twosided.setdefault(f"c{c.size - 1}", []).append(abs(c[-1]) * A ** (c.size - 1))
        twosided.setdefault("b1", []).append(abs(b[0]) / A)
        for j in range(2, b.size + 1):
            upper.setdefault(f"b{j}", []).append(abs(b[j - 1]))
        for j in range(1, ct.size - 1):
            upper.setdefault(f"ct{j}", []).append(abs(ct[j]) * A ** j)
        if ct.size > 1:
            twosided.setdefault(f"ct{ct.size - 1}", []).append(abs(ct[-1]) * A ** (ct.size - 1))
        twosided.setdefault("bt0", []).append(abs(bt[0]) / A)
        for j in range(1, bt.size):
            upper.setdefault(f"bt{j}", []).append(abs(bt[j]))

    fits = {}
    worst_up, worst_two = 0.0, 0.0
    for name, vals in upper.items():
        v = np.array(vals)
        rep.series[name] = v
        sl = fitted_slope(a1[half], v[half], NOISE_FLOOR * (1 + v.max()))
        fits[name] = sl
        if math.isfinite(sl):
            worst_up = max(worst_up, sl)
    for name, vals in twosided.items():
        v = np.array(vals)
        rep.series[name] = v
        sl = fitted_slope(a1[half], v[half])
        fits[name] = sl
        if math.isfinite(sl):
            worst_two = max(worst_two, abs(sl))
    rep.values["family_slopes"] = fits
    rep.values["families"] = {"n": n, "ell": ell, "m": m}
    rep.checks["bounded_above"] = CheckResult(worst_up <= band, worst_up, band)
    rep.checks["two_sided"] = CheckResult(worst_two <= band, worst_two, band)

    # truncation errors and their exponents
    sN = {}
    for N in truncations:
        e0, e1 = [], []
        for s in samples:
            f, fp = _f_on_circle(s.state.rd, s.series, z)
            a = s.series.coeffs[:N]
            fN = z * np.polynomial.polynomial.polyval(z, a)
            fNp = np.polynomial.polynomial.polyval(z, a * np.arange(1, a.size + 1))
            e0.append(float(np.max(np.abs(f - fN))))
            e1.append(float(np.max(np.abs(fp - fNp))))
        e0, e1 = np.array(e0), np.array(e1)
        rep.series[f"trunc{N}"] = e0
        rep.series[f"trunc{N}_d"] = e1
        sN[N] = -fitted_slope(a1[half], e0[half], 1e-14)
    rep.values["s_N"] = sN

    # asymptotic boundary shape
    M_first = samples[0].moments.M
    scale = 1e-12 * (1 + abs(M_first[0]))
    r = next((k for k in range(1, M_first.size) if abs(M_first[k]) > scale), None)
    if r is not None and len(samples) >= 3:
        # 2Q is taken from the mass balance 2Q = M_0(t) - M_0(0) with
        # M_0 = a_1^2 + N_0; the integrated Q drifts by rtol * Q, which the
        # factor (2Q)^((r+1)/2) would amplify beyond the limit being checked
        N00 = samples[0].moments.N0
        A0 = samples[0].series.a1.real
        vals, amax = [], []
        for s in samples[1:]:
            A, N0 = s.series.a1.real, s.moments.N0
            twoQ = (A - A0) * (A + A0) + N0 - N00
            if twoQ <= 0:
                continue
            f, _ = _f_on_circle(s.state.rd, s.series, z)
            lead = (f - A * z) - N0 / (A + math.sqrt(A * A + N0)) * z
            expr = lead * twoQ ** ((r + 1) / 2) - np.conj(M_first[r]) * z ** (r + 1)
            vals.append(float(np.max(np.abs(expr))))
            amax.append(A)
        vals, amax = np.array(vals), np.array(amax)
        rep.series["shape_residual"] = vals
        h = _tail(vals.size, 0.5)
        slope = fitted_slope(amax[h], vals[h]) if vals.size >= 3 else float("nan")
        rep.values["shape_slope"] = slope
        rep.values["r"] = r
        ok = bool(vals.size >= 3 and slope < 0 and vals[-1] < vals[h][0])
        rep.checks["shape_limit"] = CheckResult(ok, float(vals[-1]) if vals.size else float("nan"), 0.0,
                                                "residual must shrink over the second half")
    return rep


# -- repulsion -------------------------------------------------------------------

@dataclass
class RepulsionReport:
    regime: str
    predicates: dict
    values: dict

    @property
    def passed(self) -> bool:
        return all(self.predicates.values())


def repulsion_predicates(state, eps: float = 0.05, separation: float = 5.0,
                         tol: float = 1e-9) -> RepulsionReport:
    """Sign predicates for two real zeros or one zero close to the circle.

    Regime ``"two_real"``: n = 0, m = 2, zeros real with ``1 < w1 < w2``.
    The product ``w1 w2`` grows and the ratio ``w2/w1`` moves with sign
    ``-sign(w1 w2 - 3)``.

    Regime ``"one_close"``: n = 0, one zero with ``1 < |w1| < 1 + eps`` and
    the others pairwise at least ``separation`` apart; then ``|w1|`` grows.
    """
    from .dynamics import rhs
    rd = state.rd
    if rd.n:
        raise RegimeMismatch("repulsion predicates need a polynomial map")
    w = rd.zeros
    d = rhs(state)
    logrates = d.omega_dot / w
    if rd.m == 2 and np.all(np.abs(w.imag) <= 1e-12 * np.abs(w)) and np.all(w.real > 1):
        order = np.argsort(w.real)
        w1, w2 = w.real[order]
        r1, r2 = logrates[order].real
        prod_rate = w1 * w2 * (r1 + r2)
        ratio_rate = (w2 / w1) * (r2 - r1)
        s = w1 * w2 - 3
        expected = 0 if abs(s) <= 1e-12 * w1 * w2 else -int(np.sign(s))
        scale = abs(w2 / w1) * (abs(r1) + abs(r2))
        if expected == 0:
            ratio_ok = abs(ratio_rate) <= tol * max(scale, 1.0)
        else:
            ratio_ok = np.sign(ratio_rate) == expected and abs(ratio_rate) > tol * scale
        q = d.q
        den = (w1 ** 2 - 1) * (w2 ** 2 - 1) * (w1 * w2 - 1)
        alpha = 2 * (1 + w1 * w2) / den
        beta = (w1 + w2) / den
        k = abs(rd.b) ** 2 / q
        return RepulsionReport("two_real", {
            "product_increasing": bool(prod_rate > 0),
            "ratio_sign": bool(ratio_ok),
        }, {"product_rate": prod_rate, "ratio_rate": ratio_rate, "alpha": alpha, "beta": beta,
            "scaled_log_rates": [k * r1, k * r2], "expected_ratio_sign": expected})
    if rd.m >= 2:
        k = int(np.argmin(np.abs(w)))
        others = np.delete(w, k)
        if 1 < abs(w[k]) < 1 + eps:
            dd = np.abs(w[:, None] - w[None, :])
            np.fill_diagonal(dd, np.inf)
            if dd.min() >= separation:
                rate = float(logrates[k].real)
                pd = coefficients_A(rd, d.q)
                approx = -3 * d.q / (abs(rd.b) ** 2 * (1 - abs(w[k]) ** 2)
                                     * np.prod(np.abs(w[k] - others) ** 2))
                return RepulsionReport("one_close", {"moves_out": rate > 0},
                                       {"log_rate": rate, "approximation": float(approx),
                                        "A": list(pd.A)})
    raise RegimeMismatch("configuration fits neither the two-real-zero nor the one-close-zero regime")


__all__ = [
    "NOISE_FLOOR", "AsymptoticTargets", "AsymptoticReport", "RepulsionReport",
    "targets_from_moments", "rescaled_zeros", "fitted_slope", "convergence_report",
    "pole_envelope_check", "coefficient_scaling_check", "repulsion_predicates",
]
