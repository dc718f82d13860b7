"""Time evolution of the zeros, poles and scale factor of g = f'.

The state is integrated in one of two representations:

* root mode, ``[w_1..w_m, p_1..p_l, log b, Q]``, driven by the partial-fraction
  coefficients of P;
* coefficient mode, ``[B_0..B_m, p_1..p_l, Q]`` with ``B = b prod(z - w_k)``,
  driven by ``g' = (z g P)'``.  It is smooth through collisions of zeros and
  through the loss of the pole at infinity, and is used only across short
  windows around such events.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import linear_sum_assignment

from ._ode import DormandPrince
from .errors import (
    ConfigError,
    ConstraintViolated,
    HeleShawError,
    SimulationError,
    StepSizeUnderflow,
    WindowTooSmall,
)
from .moments import MomentVector, moment_vector
from .poisson import (
    PoissonData,
    check_reflection_identity,
    coefficients_A,
    eval_P,
    eval_P_star,
    mu_per_unit_q,
    poisson_numerator,
)
from .rational_map import (
    RationalDerivative,
    TaylorSeries,
    leading_coeff,
    map_from_spec,
    map_to_spec,
    taylor_coeffs,
)

UNIT_GROWTH = "unit_growth"
#: events are located to this accuracy in time
EVENT_TIME_TOL = 1e-8


@dataclass(frozen=True)
class EventThresholds:
    cusp: float = 1e-4
    collision: float = 1e-5
    escape: float = 1e6


@dataclass(frozen=True, eq=False)
class SimState:
    """One instant of a run.

    ``q_mode`` is either ``"unit_growth"`` or a positive float (constant q).
    ``mode`` records which representation produced the state.
    """

    t: float
    rd: RationalDerivative
    q_mode: object = UNIT_GROWTH
    constraint_residual: float = 0.0
    Q: float = 0.0
    mode: str = "roots"


@dataclass(frozen=True)
class EventRecord:
    kind: str
    time: float
    payload: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "time": self.time, "payload": self.payload},
                          sort_keys=True)


@dataclass(frozen=True)
class Derivatives:
    omega_dot: np.ndarray
    zeta_dot: np.ndarray
    b_dot: complex
    q: float


def source_strength(rd: RationalDerivative, q_mode) -> float:
    """q for the given mode; unit growth normalizes the boundary mass to 1."""
    if q_mode == UNIT_GROWTH:
        return 1.0 / mu_per_unit_q(rd)
    return float(q_mode)


# -- right-hand sides ------------------------------------------------------------

def interior_log_rates(rd: RationalDerivative, pd: PoissonData) -> np.ndarray:
    """d log w_k / dt from the residue form of the zero dynamics."""
    w, A = rd.zeros, pd.A
    if rd.m == 0:
        return np.zeros(0, dtype=complex)
    diff = w[:, None] - w[None, :]
    np.fill_diagonal(diff, 1.0)
    pair = 2 * (A[:, None] + A[None, :]) / diff
    np.fill_diagonal(pair, 0.0)
    poles = np.sum(rd.orders * 2 * A[:, None] / (w[:, None] - rd.poles[None, :]), axis=1)
    return -(pd.A0 + 2 * A / w + pair.sum(axis=1) - poles)


def exterior_log_rates(rd: RationalDerivative, pd: PoissonData) -> np.ndarray:
    """d log w_k / dt from the exterior Poisson form."""
    w, A = rd.zeros, pd.A
    if rd.m == 0:
        return np.zeros(0, dtype=complex)
    s = 1.0 + np.sum(1.0 / (1.0 - np.conj(w)[None, :] * w[:, None]), axis=1)
    s = s - np.sum(rd.orders / (1.0 - np.conj(rd.poles)[None, :] * w[:, None]), axis=1)
    return eval_P_star(pd, rd, w) - 2 * A / w * s


def rhs(state: SimState, check: bool = False, rel_tol: float = 1e-9) -> Derivatives:
    """Velocities of zeros, poles and scale factor.

    With ``check=True`` both forms of the zero dynamics are evaluated and a
    relative disagreement above ``rel_tol`` raises ``ConstraintViolated``.
    """
    rd = state.rd
    q = source_strength(rd, state.q_mode)
    pd = coefficients_A(rd, q)
    lw = interior_log_rates(rd, pd)
    if check and rd.m:
        lw2 = exterior_log_rates(rd, pd)
        err = float(np.max(np.abs(lw - lw2)) / max(np.max(np.abs(lw)), 1e-300))
        if err > rel_tol:
            raise ConstraintViolated(f"zero dynamics forms disagree (relative {err:.3g})")
    zeta_dot = rd.poles * eval_P_star(pd, rd, rd.poles) if rd.ell else np.zeros(0, complex)
    return Derivatives(rd.zeros * lw, zeta_dot, (rd.m - rd.n + 1) * pd.A0 * rd.b, q)


def identity_residuals(rd: RationalDerivative, q: float = 1.0) -> dict:
    """Residuals of the algebraic identities behind the dynamics.

    ``reflection``: scaled max of ``|P + P* - 2q/(g g*)|`` off the circle;
    ``im_P0``: ``|Im P(0)|``; ``pole_antisymmetry``: ``|P*(p_j) + P(p_j)|``
    scaled by ``max(1, |P(p_j)|)``; ``two_forms``: disagreement of the two
    expressions for the zero velocities relative to their largest entry.
    """
    pd = coefficients_A(rd, q)
    out = {"reflection": check_reflection_identity(pd, rd),
           "im_P0": float(abs(complex(eval_P(pd, rd, 0.0)).imag)) if rd.m else 0.0}
    if rd.ell:
        P = eval_P(pd, rd, rd.poles)
        Ps = eval_P_star(pd, rd, rd.poles)
        out["pole_antisymmetry"] = float(np.max(np.abs(P + Ps) / np.maximum(1.0, np.abs(P))))
    else:
        out["pole_antisymmetry"] = 0.0
    if rd.m:
        lw, lw2 = interior_log_rates(rd, pd), exterior_log_rates(rd, pd)
        out["two_forms"] = float(np.max(np.abs(lw - lw2)) / max(np.max(np.abs(lw)), 1e-300))
    else:
        out["two_forms"] = 0.0
    return out


def coefficient_rhs(numer, poles=(), orders=None, q: float = 1.0, numerator_P=None):
    """Time derivatives of the numerator B of g = B / C and of the poles.

    Parameters
    ----------
    numer : array_like
        Ascending coefficients of B.
    poles, orders : array_like
        Distinct poles of g and their orders.
    q : float
        Source strength (ignored when ``numerator_P`` is given).
    numerator_P : array_like, optional
        Precomputed numerator N of P = N / B.

    Returns
    -------
    numer_dot, poles_dot : ndarray
    """
    B = np.asarray(numer, dtype=complex)
    poles = np.asarray(poles, dtype=complex).reshape(-1)
    orders = np.ones(poles.size, int) if orders is None else np.asarray(orders, int)
    C = npoly.polyfromroots(np.repeat(poles, orders)).astype(complex) if poles.size else np.ones(1, complex)
    N = poisson_numerator(B, C, q) if numerator_P is None else np.asarray(numerator_P, dtype=complex)
    zN = np.concatenate([[0.0], N])
    zeta_dot = -poles * npoly.polyval(poles, N) / npoly.polyval(poles, B) if poles.size else np.zeros(0, complex)
    dB = npoly.polyder(zN)
    for p, k, pd_ in zip(poles, orders, zeta_dot):
        quot, _ = npoly.polydiv(npoly.polyadd(zN, B * pd_), np.array([-p, 1.0]))
        dB = npoly.polysub(dB, k * np.asarray(quot))
    dB = np.asarray(dB, dtype=complex)
    out = np.zeros(B.size, dtype=complex)
    n = min(B.size, dB.size)
    out[:n] = dB[:n]
    return out, zeta_dot


# -- state packing ----------------------------------------------------------------

class _Layout:
    def __init__(self, m, poles, orders):
        self.m = m
        self.ell = len(poles)
        self.orders = np.asarray(orders, int)
        self.n = int(self.orders.sum())

    def pack_roots(self, rd: RationalDerivative, Q: float) -> np.ndarray:
        return np.concatenate([rd.zeros, rd.poles, [np.log(rd.b + 0j), Q]]).astype(complex)

    def unpack_roots(self, y) -> RationalDerivative:
        m, l = self.m, self.ell
        return RationalDerivative(np.exp(y[m + l]), y[:m], y[m: m + l], self.orders)

    def pack_coeffs(self, rd: RationalDerivative, Q: float) -> np.ndarray:
        return np.concatenate([rd.numerator(), rd.poles, [Q]]).astype(complex)

    def coeff_parts(self, y):
        m, l = self.m, self.ell
        return y[: m + 1], y[m + 1: m + 1 + l], y[-1].real

    def a1_roots(self, y) -> complex:
        m, l = self.m, self.ell
        return (-1) ** (m - self.n) * np.exp(y[m + l]) * np.prod(y[:m]) / np.prod(np.repeat(y[m: m + l], self.orders))

    def a1_coeffs(self, y) -> complex:
        B, p, _ = self.coeff_parts(y)
        return B[0] / np.prod(np.repeat(-p, self.orders))


def _match(new, old):
    """Reorder ``new`` to minimize total distance to ``old``."""
    if len(new) != len(old) or len(new) == 0:
        return np.asarray(new)
    cost = np.abs(np.asarray(new)[None, :] - np.asarray(old)[:, None])
    cost = np.where(np.isfinite(cost), cost, 1e300)
    _, col = linear_sum_assignment(cost)
    return np.asarray(new)[col]


def _roots_of(B) -> np.ndarray:
    B = np.asarray(B, dtype=complex)
    if B.size <= 1:
        return np.zeros(0, dtype=complex)
    return np.roots(B[::-1]).astype(complex)


# -- configuration and trajectory ---------------------------------------------------

@dataclass
class RunConfig:
    """Everything that determines a run; see ``from_dict`` for the JSON keys."""

    map: RationalDerivative
    q_mode: object = UNIT_GROWTH
    t_span: tuple = (0.0, 1.0)
    rtol: float = 1e-9
    atol: float = 1e-12
    thresholds: EventThresholds = field(default_factory=EventThresholds)
    sample_dt: float = 0.01
    collision_continuation: bool = False
    cusp_continuation: bool | None = None
    collision_window: float = 1e-3
    taylor_order: int = 16
    moment_nodes: int = 1024
    check_two_forms: bool = False
    engine: str = "roots"
    out_dir: str | None = None
    oracle_N: int = 64

    @property
    def continue_through_cusp(self) -> bool:
        return self.collision_continuation if self.cusp_continuation is None else self.cusp_continuation

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        if "map" not in d:
            raise ConfigError("missing", "map")
        try:
            rd = map_from_spec(d["map"])
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"invalid map spec ({exc})", "map") from None
        kw = {"map": rd}
        qm = d.get("q_mode", UNIT_GROWTH)
        if qm == UNIT_GROWTH:
            kw["q_mode"] = UNIT_GROWTH
        elif isinstance(qm, dict) and "constant" in qm:
            q = qm["constant"]
            if not isinstance(q, (int, float)) or q <= 0:
                raise ConfigError("constant q must be a positive number", "q_mode.constant")
            kw["q_mode"] = float(q)
        else:
            raise ConfigError('expected "unit_growth" or {"constant": q}', "q_mode")
        if "t_span" in d:
            ts = d["t_span"]
            if not (isinstance(ts, (list, tuple)) and len(ts) == 2 and ts[1] > ts[0]):
                raise ConfigError("must be an increasing pair [t0, t1]", "t_span")
            kw["t_span"] = (float(ts[0]), float(ts[1]))
        for key in ("rtol", "atol", "sample_dt", "collision_window"):
            if key in d:
                v = d[key]
                if not isinstance(v, (int, float)) or v <= 0:
                    raise ConfigError("must be a positive number", key)
                kw[key] = float(v)
        for key in ("taylor_order", "moment_nodes", "oracle_N"):
            if key in d:
                v = d[key]
                if not isinstance(v, int) or v < 1:
                    raise ConfigError("must be a positive integer", key)
                kw[key] = v
        for key in ("collision_continuation", "cusp_continuation", "check_two_forms"):
            if key in d:
                if not isinstance(d[key], bool):
                    raise ConfigError("must be true or false", key)
                kw[key] = d[key]
        if "events" in d:
            ev = d["events"]
            if not isinstance(ev, dict):
                raise ConfigError("must be an object", "events")
            th = {}
            for key in ("cusp", "collision", "escape"):
                if key in ev:
                    if not isinstance(ev[key], (int, float)) or ev[key] <= 0:
                        raise ConfigError("must be a positive number", f"events.{key}")
                    th[key] = float(ev[key])
            kw["thresholds"] = EventThresholds(**th)
        if "engine" in d:
            if d["engine"] not in ("roots", "spectral", "both"):
                raise ConfigError('must be "roots", "spectral" or "both"', "engine")
            kw["engine"] = d["engine"]
        if "out_dir" in d:
            kw["out_dir"] = str(d["out_dir"])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = {
            "map": map_to_spec(self.map),
            "q_mode": self.q_mode if self.q_mode == UNIT_GROWTH else {"constant": self.q_mode},
            "t_span": list(self.t_span), "rtol": self.rtol, "atol": self.atol,
            "events": {"cusp": self.thresholds.cusp, "collision": self.thresholds.collision,
                       "escape": self.thresholds.escape},
            "sample_dt": self.sample_dt, "collision_continuation": self.collision_continuation,
            "collision_window": self.collision_window, "taylor_order": self.taylor_order,
            "engine": self.engine,
        }
        if self.cusp_continuation is not None:
            d["cusp_continuation"] = self.cusp_continuation
        return d


@dataclass(frozen=True, eq=False)
class Sample:
    state: SimState
    series: TaylorSeries
    moments: MomentVector


def _fmt(x: float) -> str:
    return "%.17g" % x


@dataclass(eq=False)
class Trajectory:
    """Sampled run with its event log.

    ``status`` is ``"completed"``, ``"event"`` (terminated by a fatal or
    non-continued event) or ``"error"``.
    """

    config: RunConfig | None = None
    samples: list = field(default_factory=list)
    events: list = field(default_factory=list)
    status: str = "completed"
    message: str = ""

    @property
    def times(self) -> np.ndarray:
        return np.array([s.state.t for s in self.samples])

    @property
    def a1(self) -> np.ndarray:
        return np.array([s.series.a1.real for s in self.samples])

    @property
    def zeros(self) -> np.ndarray:
        return np.array([s.state.rd.zeros for s in self.samples])

    @property
    def poles(self) -> np.ndarray:
        return np.array([s.state.rd.poles for s in self.samples])

    @property
    def Q(self) -> np.ndarray:
        return np.array([s.state.Q for s in self.samples])

    def csv_header(self) -> list:
        rd = self.samples[0].state.rd
        K = self.samples[0].moments.M.size - 1
        cols = ["t", "a1", "b_re", "b_im"]
        for k in range(1, rd.m + 1):
            cols += [f"om{k}_re", f"om{k}_im"]
        for j in range(1, rd.n + 1):
            cols += [f"ze{j}_re", f"ze{j}_im"]
        for k in range(K + 1):
            cols += [f"M{k}_re", f"M{k}_im"]
        return cols + ["N0", "constraint_residual", "Q"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.csv_header()) + "\n")
        for s in self.samples:
            rd = s.state.rd
            row = [s.state.t, s.series.a1.real, rd.b.real, rd.b.imag]
            for w in rd.zeros:
                row += [w.real, w.imag]
            for p in rd.pole_sequence:
                row += [p.real, p.imag]
            for M in s.moments.M:
                row += [M.real, M.imag]
            row += [s.moments.N0, s.state.constraint_residual, s.state.Q]
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def events_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    @classmethod
    def from_csv(cls, text: str, q_mode=UNIT_GROWTH, taylor_order: int = 16) -> "Trajectory":
        """Rebuild samples from a trajectory CSV (poles are regrouped by equality)."""
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        header = lines[0].split(",")
        m = sum(1 for c in header if c.startswith("om") and c.endswith("_re"))
        n = sum(1 for c in header if c.startswith("ze") and c.endswith("_re"))
        K = sum(1 for c in header if c.startswith("M") and c.endswith("_re")) - 1
        col = {c: i for i, c in enumerate(header)}
        traj = cls()
        for ln in lines[1:]:
            v = [float(x) for x in ln.split(",")]
            zeros = [complex(v[col[f"om{k}_re"]], v[col[f"om{k}_im"]]) for k in range(1, m + 1)]
            seq = [complex(v[col[f"ze{j}_re"]], v[col[f"ze{j}_im"]]) for j in range(1, n + 1)]
            poles, orders = [], []
            for p in seq:
                if poles and p == poles[-1]:
                    orders[-1] += 1
                else:
                    poles.append(p)
                    orders.append(1)
            rd = RationalDerivative(complex(v[col["b_re"]], v[col["b_im"]]), zeros, poles, orders)
            M = np.array([complex(v[col[f"M{k}_re"]], v[col[f"M{k}_im"]]) for k in range(K + 1)])
            Q = v[col["Q"]] if "Q" in col else 0.0
            st = SimState(v[col["t"]], rd, q_mode, v[col["constraint_residual"]], Q)
            traj.samples.append(Sample(st, taylor_coeffs(rd, max(taylor_order, rd.m + 1)),
                                       MomentVector(M, v[col["N0"]], Q)))
        return traj


# -- engine ---------------------------------------------------------------------------

class _Run:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        rd0 = cfg.map
        leading_coeff(rd0)
        if rd0.m < rd0.n:
            raise ConfigError("the map must have m >= n", "map")
        self.L = _Layout(rd0.m, rd0.poles, rd0.orders)
        self.th = cfg.thresholds
        self.traj = Trajectory(cfg)
        self.root_stepper = DormandPrince(self._root_fun, cfg.rtol, cfg.atol)
        self.coeff_stepper = DormandPrince(self._coeff_fun, cfg.rtol, cfg.atol)
        self.t0, self.t1 = cfg.t_span
        self.k_sample = 0
        self.last_sample_t = -math.inf
        self.last_zeros = rd0.zeros
        self.cusp_entry = {}
        self.residual = 0.0

    # right-hand sides
    def _root_fun(self, t, y):
        rd = self.L.unpack_roots(y)
        d = rhs(SimState(t, rd, self.cfg.q_mode), check=self.cfg.check_two_forms)
        m, l = self.L.m, self.L.ell
        out = np.empty_like(y)
        out[:m] = d.omega_dot
        out[m: m + l] = d.zeta_dot
        out[m + l] = d.b_dot / rd.b
        out[-1] = d.q
        return out

    def _coeff_fun(self, t, y):
        B, p, _ = self.L.coeff_parts(y)
        C = npoly.polyfromroots(np.repeat(p, self.L.orders)).astype(complex) if p.size else np.ones(1, complex)
        if self.cfg.q_mode == UNIT_GROWTH:
            N1 = poisson_numerator(B, C, 1.0)
            q = 1.0 / (N1[0] / B[0]).real
            N = q * N1
        else:
            q = float(self.cfg.q_mode)
            N = poisson_numerator(B, C, q)
        dB, dp = coefficient_rhs(B, p, self.L.orders, numerator_P=N)
        return np.concatenate([dB, dp, [q]])

    # constraint
    def _rephase(self, y, mode):
        y = y.copy()
        a1 = self.L.a1_roots(y) if mode == "roots" else self.L.a1_coeffs(y)
        self.residual = abs(a1.imag) / abs(a1)
        phi = np.angle(a1)
        if mode == "roots":
            y[self.L.m + self.L.ell] -= 1j * phi
        else:
            y[: self.L.m + 1] *= np.exp(-1j * phi)
        y[-1] = y[-1].real
        return y

    # sampling
    def _next_sample_time(self):
        t = self.t0 + (self.k_sample + 1) * self.cfg.sample_dt
        return self.t1 if t >= self.t1 - 1e-12 * max(1.0, abs(self.t1)) else t

    def _rd_from(self, y, mode):
        if mode == "roots":
            return self.L.unpack_roots(y)
        B, p, _ = self.L.coeff_parts(y)
        w = _roots_of(B)
        if w.size != self.L.m or not np.all(np.isfinite(w)):
            return None
        w = _match(w, self.last_zeros)
        return RationalDerivative(B[-1], w, p, self.L.orders)

    def _sample(self, t, y, mode):
        if t <= self.last_sample_t:
            return
        rd = self._rd_from(y, mode)
        if rd is None:
            return
        Q = float(y[-1].real)
        N = max(self.cfg.taylor_order, rd.m + 1)
        st = SimState(float(t), rd, self.cfg.q_mode, self.residual, Q, mode)
        series = taylor_coeffs(rd, N)
        mv = moment_vector(rd, rd.m, Q, self.cfg.moment_nodes)
        self.traj.samples.append(Sample(st, series, mv))
        self.last_sample_t = t
        self.last_zeros = rd.zeros

    def _advance_sampled(self, stepper, mode, t, y, t_end):
        """Integrate without event scanning up to ``t_end``, sampling on the grid."""
        f, h = None, None
        while t < t_end:
            ts = self._next_sample_time()
            target = min(ts, t_end)
            t, y, f, h = stepper.advance(t, y, f, h, target)
            y = self._rephase(y, mode)
            if t >= ts:
                self._sample(t, y, mode)
                self.k_sample += 1
        return y

    # event functions (root mode)
    def _radii(self, y):
        return np.abs(y[: self.L.m]) - 1.0

    def _gap(self, y):
        w = y[: self.L.m]
        if w.size < 2:
            return math.inf
        d = np.abs(w[:, None] - w[None, :])
        np.fill_diagonal(d, np.inf)
        return float(d.min())

    def _far(self, y):
        w = y[: self.L.m]
        if w.size == 0:
            return 0.0
        if self.L.m == self.L.n:
            # degeneration of the polynomial part: |B|_inf / |b| for B = b prod(z - w)
            return float(np.abs(np.poly(w)).max())
        r = float(np.abs(w).max())
        if self.L.m > self.L.n:
            a1 = abs(self.L.a1_roots(y))
            r *= a1 ** (-(self.L.m + 2) / self.L.m)
        return r

    def _bisect(self, t0, y0, f0, t1, fn):
        """Locate the first sign change of ``fn(t, y)`` from nonnegative to negative."""
        lo, hi = t0, t1
        y_hi, f_hi = None, None
        while hi - lo > EVENT_TIME_TOL:
            mid = 0.5 * (lo + hi)
            trial = self.root_stepper.single_step(t0, y0, mid - t0, f0)
            if trial is None:
                hi = mid
                continue
            ym = trial[0]
            if fn(mid, ym) < 0:
                hi, y_hi, f_hi = mid, ym, trial[2]
            else:
                lo = mid
        if y_hi is None:
            trial = self.root_stepper.single_step(t0, y0, hi - t0, f0)
            y_hi, f_hi = trial[0], trial[2]
        return hi, y_hi, f_hi

    def _radial_velocity(self, k, y, f):
        return float((np.conj(y[k]) * f[k]).real)

    def _scan(self, t0, y0, f0, t1, y1, f1):
        """Earliest event inside the accepted step, or None."""
        th, m = self.th, self.L.m
        found = []
        g0, g1 = self._gap(y0), self._gap(y1)
        if g0 >= th.collision > g1:
            te, ye, _ = self._bisect(t0, y0, f0, t1, lambda t, y: self._gap(y) - th.collision)
            w = ye[:m]
            d = np.abs(w[:, None] - w[None, :])
            np.fill_diagonal(d, np.inf)
            i, j = np.unravel_index(np.argmin(d), d.shape)
            found.append((te, "Collision", ye, {
                "indices": [int(min(i, j)), int(max(i, j))],
                "positions": [[w[i].real, w[i].imag], [w[j].real, w[j].imag]],
                "gap": float(d[i, j])}))
        r0, r1 = self._radii(y0), self._radii(y1)
        for k in range(m):
            if r0[k] >= th.cusp > r1[k]:
                te, _, _ = self._bisect(t0, y0, f0, t1, lambda t, y, k=k: self._radii(y)[k] - th.cusp)
                self.cusp_entry.setdefault(k, te)
            if r0[k] > 0 >= r1[k]:
                te, ye, _ = self._bisect(t0, y0, f0, t1, lambda t, y, k=k: self._radii(y)[k])
                found.append((te, "Cusp", ye, {
                    "index": k, "tangential": False, "min_gap": 0.0,
                    "entry_time": self.cusp_entry.get(k, te),
                    "position": [ye[k].real, ye[k].imag]}))
                continue
            if min(r0[k], r1[k]) < 10 * th.cusp:
                v0, v1 = self._radial_velocity(k, y0, f0), self._radial_velocity(k, y1, f1)
                if v0 < 0 <= v1:
                    def vel(t, y, k=k):
                        fy = self.root_stepper._eval(t, y)
                        return -1.0 if fy is None else -self._radial_velocity(k, y, fy)
                    te, ye, _ = self._bisect(t0, y0, f0, t1, vel)
                    gap = float(self._radii(ye)[k])
                    if gap < th.cusp:
                        if k not in self.cusp_entry:
                            self.cusp_entry[k] = self._bisect(
                                t0, y0, f0, te, lambda t, y, k=k: self._radii(y)[k] - th.cusp)[0]
                        found.append((te, "Cusp", ye, {
                            "index": k, "tangential": True, "min_gap": gap,
                            "entry_time": self.cusp_entry[k],
                            "position": [ye[k].real, ye[k].imag]}))
        far0, far1 = self._far(y0), self._far(y1)
        if far0 <= th.escape < far1:
            te, ye, _ = self._bisect(t0, y0, f0, t1, lambda t, y: th.escape - self._far(y))
            kind = "PoleDrop" if self.L.m == self.L.n else "Escape"
            k = int(np.argmax(np.abs(ye[:m])))
            found.append((te, kind, ye, {"index": k, "position": "infinity" if kind == "PoleDrop"
                                         else [ye[k].real, ye[k].imag]}))
        if not found:
            return None
        return min(found, key=lambda e: e[0])

    # continuation
    def _to_coeffs(self, y):
        rd = self.L.unpack_roots(y)
        return self.L.pack_coeffs(rd, float(y[-1].real))

    def _from_coeffs(self, y, reference):
        B, p, Q = self.L.coeff_parts(y)
        w = _match(_roots_of(B), reference)
        rd = RationalDerivative(B[-1], w, p, self.L.orders)
        return self.L.pack_roots(rd, Q)

    def _coefficient_window(self, t_start, yc, t_event, reference, need_gap):
        """Integrate coefficients from ``t_start`` past ``t_event`` until roots resolve."""
        w = self.cfg.collision_window
        t = t_start
        for i in range(12):
            t_end = min(self.t1, t_event + w * 2 ** i)
            yc = self._advance_sampled(self.coeff_stepper, "coefficients", t, yc, t_end)
            t = t_end
            B = yc[: self.L.m + 1]
            roots = _roots_of(B)
            ok = roots.size == self.L.m and np.all(np.isfinite(roots))
            if ok:
                gap = math.inf
                if roots.size > 1:
                    d = np.abs(roots[:, None] - roots[None, :])
                    np.fill_diagonal(d, np.inf)
                    gap = float(d.min())
                far = self._far(self._from_coeffs(yc, reference))
                if gap >= need_gap and far < self.th.escape:
                    return t, self._from_coeffs(yc, reference), w * 2 ** i
            if t >= self.t1:
                return t, None, w * 2 ** i
        raise WindowTooSmall(f"roots unresolved after window {w * 2 ** 11:g}")

    def run(self) -> Trajectory:
        cfg, L = self.cfg, self.L
        t = self.t0
        y = L.pack_roots(cfg.map, 0.0)
        self.residual = 0.0
        self._sample(t, y, "roots")
        f, h = None, None
        history = [(t, y)]
        stepper = self.root_stepper
        try:
            while t < self.t1:
                ts = self._next_sample_time()
                t_new, y_new, f_new, h = stepper.advance(t, y, f, h, ts)
                y_new = self._rephase(y_new, "roots")
                ev = self._scan(t, y, f if f is not None else stepper._eval(t, y), t_new, y_new, f_new)
                if ev is not None:
                    te, ye, kind, payload = ev[0], ev[2], ev[1], ev[3]
                    rec = EventRecord(kind, float(te), payload)
                    if kind == "Collision" and cfg.collision_continuation:
                        t, y = self._continue_collision(te, history, payload)
                        self.traj.events.append(EventRecord(kind, float(te), dict(payload, **self._window_info)))
                        f, h, history = None, None, [(t, y)]
                        continue
                    if kind == "Cusp" and payload["tangential"] and cfg.continue_through_cusp:
                        self.traj.events.append(rec)
                    elif kind == "PoleDrop":
                        self.traj.events.append(rec)
                        yc = self._to_coeffs(ye)
                        t_res, y_res, used = self._coefficient_window(te, yc, te, ye[: L.m], 0.0)
                        if y_res is None:
                            self.traj.status = "completed"
                            return self.traj
                        t, y, f, h, history = t_res, y_res, None, None, [(t_res, y_res)]
                        continue
                    else:
                        self.traj.events.append(rec)
                        self.residual = 0.0
                        self._sample(te, self._rephase(ye, "roots"), "roots")
                        self.traj.status = "event"
                        self.traj.message = f"terminated by {kind} at t = {te:.12g}"
                        return self.traj
                t, y, f = t_new, y_new, f_new
                history.append((t, y))
                if len(history) > 4096:
                    history = history[-2048:]
                if t >= ts:
                    self._sample(t, y, "roots")
                    self.k_sample += 1
        except (HeleShawError, np.linalg.LinAlgError) as exc:
            self.traj.status = "error"
            self.traj.message = str(exc)
            raise SimulationError(f"simulation failed near t = {t:.12g}: {exc}", self.traj) from exc
        return self.traj

    def _continue_collision(self, te, history, payload):
        w = self.cfg.collision_window
        t_a = te - w
        t_b, y_b = history[0]
        for tt, yy in history:
            if tt <= t_a:
                t_b, y_b = tt, yy
        t_a = max(t_a, t_b)
        y_a = self._advance_sampled(self.root_stepper, "roots", t_b, y_b, t_a) if t_a > t_b else y_b
        reference = y_a[: self.L.m]
        yc = self._to_coeffs(y_a)
        t_res, y_res, used = self._coefficient_window(t_a, yc, te, reference, 100 * self.th.collision)
        self._window_info = {"window": used, "labels": "minimal total distance matching",
                             "resumed_at": t_res}
        if y_res is None:
            raise WindowTooSmall("run ended inside a collision window")
        return t_res, y_res


# -- public API ------------------------------------------------------------------------

def run_simulation(config) -> Trajectory:
    """Integrate a run described by a ``RunConfig`` or its dict form."""
    cfg = config if isinstance(config, RunConfig) else RunConfig.from_dict(config)
    return _Run(cfg).run()


def step(state: SimState, h: float, rtol: float = 1e-9, atol: float = 1e-12) -> SimState:
    """Advance a state by exactly ``h >= 0`` in root mode (adaptive substeps, no events)."""
    if h < 0:
        raise ValueError("step integrates forward in time only")
    if h == 0:
        return state
    L = _Layout(state.rd.m, state.rd.poles, state.rd.orders)

    def fun(t, y):
        rd = L.unpack_roots(y)
        d = rhs(SimState(t, rd, state.q_mode))
        return np.concatenate([d.omega_dot, d.zeta_dot, [d.b_dot / rd.b, d.q]])

    stepper = DormandPrince(fun, rtol, atol)
    t, y = state.t, L.pack_roots(state.rd, state.Q)
    t_end = state.t + h
    f, hh = None, None
    residual = 0.0
    while t < t_end:
        t, y, f, hh = stepper.advance(t, y, f, hh, t_end)
        a1 = L.a1_roots(y)
        residual = max(residual, abs(a1.imag) / abs(a1))
        y = y.copy()
        y[L.m + L.ell] -= 1j * np.angle(a1)
    return SimState(t_end, L.unpack_roots(y), state.q_mode, residual, float(y[-1].real), "roots")


def detect_events(state: SimState, thresholds: EventThresholds = EventThresholds()) -> list:
    """Threshold predicates evaluated at a single state (no time localization)."""
    rd, out = state.rd, []
    if rd.m:
        r = np.abs(rd.zeros) - 1.0
        k = int(np.argmin(r))
        if r[k] < thresholds.cusp:
            out.append(EventRecord("Cusp", state.t, {"index": k, "min_gap": float(r[k])}))
        if rd.m > 1:
            d = np.abs(rd.zeros[:, None] - rd.zeros[None, :])
            np.fill_diagonal(d, np.inf)
            i, j = np.unravel_index(np.argmin(d), d.shape)
            if d[i, j] < thresholds.collision:
                out.append(EventRecord("Collision", state.t, {"indices": sorted([int(i), int(j)]),
                                                              "gap": float(d[i, j])}))
        far = float(np.abs(rd.zeros).max())
        if rd.m == rd.n and np.abs(np.poly(rd.zeros)).max() > thresholds.escape:
            out.append(EventRecord("PoleDrop", state.t, {"position": "infinity"}))
        elif rd.m > rd.n:
            a1 = abs(rd.g0())
            if far * a1 ** (-(rd.m + 2) / rd.m) > thresholds.escape:
                out.append(EventRecord("Escape", state.t, {"index": int(np.argmax(np.abs(rd.zeros)))}))
    return out


def continue_through_collision(traj: Trajectory, window: float = 1e-3) -> Trajectory:
    """Continue a run that stopped at a Collision through a coefficient window.

    The run is repeated from its configuration with continuation enabled, so
    the result is identical to having asked for continuation up front.
    Trajectories without a pending collision are returned unchanged.
    """
    pending = traj.status == "event" and traj.events and traj.events[-1].kind == "Collision"
    if not pending:
        return traj
    if traj.config is None:
        raise ValueError("trajectory carries no configuration to continue from")
    cfg = replace(traj.config, collision_continuation=True, collision_window=window,
                  cusp_continuation=traj.config.cusp_continuation
                  if traj.config.cusp_continuation is not None else False)
    return run_simulation(cfg)


@dataclass
class ConservationSeries:
    times: np.ndarray
    residual: np.ndarray
    arg_residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(self.residual.max())

    @property
    def max_arg_residual(self) -> float:
        return float(self.arg_residual.max())


def conservation_rate(state: SimState) -> complex:
    """Predicted d/dt (sum log w_k - sum log p_j) at a state."""
    rd = state.rd
    q = source_strength(rd, state.q_mode)
    mu = q * mu_per_unit_q(rd)
    if rd.m > rd.n:
        return complex((rd.m - rd.n + 2) * mu)
    if rd.m == rd.n:
        return 2 * (mu - q / (rd.b * np.conj(rd.g0())))
    raise ValueError("conservation law needs m >= n")


def _derivative_weights(x: np.ndarray, x0: float) -> np.ndarray:
    """Weights of the interpolating-polynomial derivative at ``x0``."""
    d = (x - x0) / max(np.abs(x - x0).max(), 1e-300)
    V = np.vander(d, increasing=True).T
    e = np.zeros(x.size)
    e[1] = 1.0
    return np.linalg.solve(V, e) / max(np.abs(x - x0).max(), 1e-300)


def conservation_residual(traj: Trajectory, points: int = 5) -> ConservationSeries:
    """Finite-difference residual of the log-sum conservation law.

    The derivative at each sample comes from the polynomial through the
    ``points`` nearest samples (a centered 5-point stencil on a uniform
    grid, fourth order); runs with fewer samples fall back to 3 points.
    The argument residual compares imaginary parts, i.e. the rotation of
    the zeros against the rotation of the poles.
    """
    t = traj.times
    if np.unique(t).size < 3:
        raise ValueError("conservation residual needs at least 3 distinct sample times")
    if t.size < points:
        points = 3
    half = points // 2
    S = np.array([np.sum(np.log(s.state.rd.zeros)) - np.sum(np.log(s.state.rd.pole_sequence))
                  for s in traj.samples])
    S = S.real + 1j * np.unwrap(S.imag)
    idx = np.arange(half, t.size - half)
    dS = np.array([_derivative_weights(t[i - half: i + half + 1], t[i]) @ S[i - half: i + half + 1]
                   for i in idx])
    rate = np.array([conservation_rate(traj.samples[i].state) for i in idx])
    return ConservationSeries(t[idx], np.abs(dS - rate), np.abs(dS.imag - rate.imag))


__all__ = [
    "UNIT_GROWTH", "EventThresholds", "SimState", "EventRecord", "Derivatives", "RunConfig",
    "Sample", "Trajectory", "ConservationSeries", "source_strength", "interior_log_rates",
    "exterior_log_rates", "identity_residuals", "rhs", "coefficient_rhs", "step", "detect_events",
    "continue_through_collision", "conservation_rate", "conservation_residual", "run_simulation",
    "StepSizeUnderflow",
]
