"""Rational derivative g = f' of the conformal map, its series and antiderivative.

The map f is normalized by f(0) = 0, f'(0) > 0 and its derivative is stored
through its divisor::

    g(z) = b * prod(z - w_k) / prod(z - p_j) ** n_j

Zeros are kept as a flat list (repetitions allowed), distinct poles carry an
explicit integer order.  All objects are immutable; all functions are pure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (
    ConstraintViolated,
    DegenerateDecomposition,
    NonLocallyUnivalent,
    PathBlocked,
    PoleHit,
    PoleInsideDisk,
)

#: absolute clearance from poles for evaluation and integration paths
POLE_CLEARANCE = 1e-8
#: distinct poles closer than this are treated as an undeclared multiple pole
POLE_MERGE_TOL = 1e-6


def _frozen(a, dtype=complex):
    arr = np.array(a, dtype=dtype).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RationalDerivative:
    """Scale factor, zeros and poles (with orders) of g = f'.

    Parameters
    ----------
    b : complex
        Scale factor.
    zeros : array_like
        Zeros of g, repeated according to multiplicity.
    poles : array_like, optional
        Distinct finite poles of g.
    orders : array_like of int, optional
        Order of each pole (defaults to simple poles).
    """

    b: complex
    zeros: np.ndarray
    poles: np.ndarray = field(default=())
    orders: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "b", complex(self.b))
        object.__setattr__(self, "zeros", _frozen(self.zeros))
        object.__setattr__(self, "poles", _frozen(self.poles))
        if self.orders is None:
            orders = np.ones(self.poles.size, dtype=int)
        else:
            orders = np.array(self.orders, dtype=int).reshape(-1)
        if orders.size != self.poles.size:
            raise ValueError("one order per distinct pole is required")
        if np.any(orders < 1):
            raise ValueError("pole orders must be positive integers")
        orders.setflags(write=False)
        object.__setattr__(self, "orders", orders)
        if not (np.isfinite(self.b) and np.all(np.isfinite(self.zeros))
                and np.all(np.isfinite(self.poles))):
            raise ValueError("map data must be finite")

    # -- structure ---------------------------------------------------------
    @property
    def m(self) -> int:
        return int(self.zeros.size)

    @property
    def n(self) -> int:
        return int(self.orders.sum())

    @property
    def ell(self) -> int:
        return int(self.poles.size)

    @property
    def pole_sequence(self) -> np.ndarray:
        """Poles repeated according to their orders (length n)."""
        return np.repeat(self.poles, self.orders)

    def numerator(self) -> np.ndarray:
        """Ascending coefficients of b * prod(z - w_k)."""
        return self.b * npoly.polyfromroots(self.zeros) if self.m else np.array([self.b])

    def denominator(self) -> np.ndarray:
        """Ascending coefficients of prod(z - p_j) ** n_j (monic)."""
        if not self.n:
            return np.array([1.0 + 0j])
        return npoly.polyfromroots(self.pole_sequence).astype(complex)

    def g0(self) -> complex:
        """g(0), computed from the divisor without cancellation."""
        return self.b * np.prod(-self.zeros) / np.prod((-self.pole_sequence))

    def with_scale(self, b) -> "RationalDerivative":
        return RationalDerivative(b, self.zeros, self.poles, self.orders)

    def normalized(self) -> "RationalDerivative":
        """Copy with the phase of b rotated so that g(0) > 0."""
        g0 = self.g0()
        if g0 == 0:
            raise ConstraintViolated("g(0) = 0: a zero sits at the origin")
        return self.with_scale(self.b * abs(g0) / g0)

    @classmethod
    def from_roots(cls, zeros, poles=(), orders=None, a1=1.0) -> "RationalDerivative":
        """Build the map whose derivative has the given divisor and g(0) = a1."""
        rd = cls(1.0, zeros, poles, orders)
        return rd.with_scale(a1 / rd.g0())

    @classmethod
    def from_fraction(cls, numer, poles=(), orders=None) -> "RationalDerivative":
        """Build from ascending numerator coefficients and a pole list."""
        numer = np.trim_zeros(np.asarray(numer, dtype=complex), "b")
        if numer.size == 0:
            raise ValueError("zero numerator")
        zeros = np.roots(numer[::-1]) if numer.size > 1 else []
        return cls(numer[-1], zeros, poles, orders)

    @classmethod
    def from_taylor(cls, coeffs) -> "RationalDerivative":
        """Polynomial map f = sum_j a_j z^j from coefficients a_1..a_N."""
        a = np.asarray(coeffs, dtype=complex)
        gcoef = a * np.arange(1, a.size + 1)
        return cls.from_fraction(gcoef)

    def __repr__(self):
        return (f"RationalDerivative(b={self.b!r}, zeros={self.zeros.tolist()!r}, "
                f"poles={self.poles.tolist()!r}, orders={self.orders.tolist()!r})")


@dataclass(frozen=True, eq=False)
class TaylorSeries:
    """Truncated power series f_N(z) = a_1 z + ... + a_N z^N."""

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _frozen(self.coeffs))

    @property
    def order(self) -> int:
        return int(self.coeffs.size)

    @property
    def a1(self) -> complex:
        return self.coeffs[0]

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return z * npoly.polyval(z, self.coeffs)

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        return npoly.polyval(z, self.coeffs * np.arange(1, self.order + 1))


# -- evaluation -------------------------------------------------------------

def _check_clearance(z, points, exc, what):
    if points.size == 0:
        return
    d = np.abs(np.asarray(z)[..., None] - points)
    if np.any(d < POLE_CLEARANCE):
        raise exc(f"evaluation point within {POLE_CLEARANCE:g} of a {what}")


def eval_g(rd: RationalDerivative, z):
    """g(z) = b prod(z - w_k) / prod(z - p_j)^n_j."""
    z = np.asarray(z, dtype=complex)
    _check_clearance(z, rd.poles, PoleHit, "pole")
    num = rd.b * np.prod(z[..., None] - rd.zeros, axis=-1)
    den = np.prod((z[..., None] - rd.poles) ** rd.orders, axis=-1)
    return num / den


def eval_g_star(rd: RationalDerivative, z):
    """Reflected derivative g*(z) = conj(g(1/conj(z))).

    Evaluated as ``conj(b) z^(n-m) prod(1 - conj(w_k) z) / prod(1 - conj(p_j) z)^n_j``
    so that points near the origin are handled without forming 1/conj(z).
    """
    z = np.asarray(z, dtype=complex)
    if rd.ell:
        _check_clearance(z, 1.0 / np.conj(rd.poles), PoleHit, "reflected pole")
    if rd.m > rd.n and np.any(z == 0):
        raise PoleHit("g* has a pole at the origin when m > n")
    num = np.conj(rd.b) * np.prod(1.0 - np.conj(rd.zeros) * z[..., None], axis=-1)
    den = np.prod((1.0 - np.conj(rd.poles) * z[..., None]) ** rd.orders, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.where(z == 0, 1.0 + 0j, z ** float(rd.n - rd.m)) if rd.m <= rd.n else z ** float(rd.n - rd.m)
    return power * num / den


def eval_f(rd: RationalDerivative, z, quad_nodes: int = 32, clearance: float = POLE_CLEARANCE):
    """f(z) = integral of g along the straight segment [0, z].

    Composite Gauss-Legendre with ``quad_nodes`` nodes per panel; panels are
    refined near poles so that each panel is short compared to its distance
    from the nearest pole.
    """
    z = np.asarray(z, dtype=complex)
    flat = z.reshape(-1)
    x, w = np.polynomial.legendre.leggauss(quad_nodes)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    out = np.empty(flat.size, dtype=complex)
    for i, zi in enumerate(flat):
        if zi == 0:
            out[i] = 0.0
            continue
        npan = 1
        if rd.ell:
            # distance from each pole to the segment [0, zi]
            s = np.clip(np.real(rd.poles * np.conj(zi)) / abs(zi) ** 2, 0.0, 1.0)
            dist = np.abs(rd.poles - s * zi)
            if dist.min() < clearance:
                raise PathBlocked(f"segment [0, {zi}] passes within {clearance:g} of a pole")
            npan = int(min(512, max(1, np.ceil(abs(zi) / (2.0 * dist.min())))))
        edges = np.linspace(0.0, 1.0, npan + 1)
        h = np.diff(edges)
        s = (edges[:-1, None] + h[:, None] * x[None, :]).reshape(-1)
        ws = (h[:, None] * w[None, :]).reshape(-1)
        out[i] = zi * np.dot(ws, eval_g(rd, s * zi))
    return out.reshape(z.shape)


# -- series -----------------------------------------------------------------

def _inverse_linear_series(d: complex, order: int, power: int, N: int) -> np.ndarray:
    """Coefficients of (u + d)^(-power) up to u^(N-1)."""
    base = (1.0 / d) * (-1.0 / d) ** np.arange(N)
    out = np.zeros(N, dtype=complex)
    out[0] = 1.0
    for _ in range(power):
        out = np.convolve(out, base)[:N]
    return out


def taylor_coeffs(rd: RationalDerivative, N: int) -> TaylorSeries:
    """Taylor coefficients a_1..a_N of f by exact truncated convolution."""
    if rd.ell and np.any(np.abs(rd.poles) <= 1.0):
        raise PoleInsideDisk("series expansion requires all poles outside the closed disk")
    g = np.zeros(N, dtype=complex)
    num = rd.numerator()[:N]
    g[: num.size] = num
    for p, k in zip(rd.poles, rd.orders):
        g = np.convolve(g, _inverse_linear_series(-p, N, int(k), N))[:N]
    return TaylorSeries(g / np.arange(1, N + 1))


def leading_coeff(rd: RationalDerivative, rel_tol: float = 1e-10) -> float:
    """a_1 = (-1)^(m-n) b prod(w_k) / prod(p_j); must be real and positive."""
    a1 = (-1) ** (rd.m - rd.n) * rd.b * np.prod(rd.zeros) / np.prod(rd.pole_sequence)
    if abs(a1.imag) > rel_tol * abs(a1) or a1.real <= 0:
        raise ConstraintViolated(f"a_1 = {a1} is not real positive; rotate b first")
    return float(a1.real)


# -- diagnostics --------------------------------------------------------------

@dataclass(frozen=True)
class UnivalenceReport:
    locally_univalent: bool
    boundary_simple: bool
    min_zero_modulus: float


def _polygon_is_simple(p: np.ndarray) -> bool:
    """True when the closed polygon through ``p`` has no proper self-crossing."""
    a = p
    b = np.roll(p, -1)
    n = p.size
    scale = np.max(np.abs(p)) + 1.0
    eps = 1e-12 * scale ** 2

    def orient(o, u, v):
        return ((u - o).real * (v - o).imag - (u - o).imag * (v - o).real)

    lo_x = np.minimum(a.real, b.real)
    hi_x = np.maximum(a.real, b.real)
    lo_y = np.minimum(a.imag, b.imag)
    hi_y = np.maximum(a.imag, b.imag)
    for i in range(n - 2):
        j = np.arange(i + 2, n if i else n - 1)
        if j.size == 0:
            continue
        box = ((lo_x[j] <= hi_x[i]) & (hi_x[j] >= lo_x[i])
               & (lo_y[j] <= hi_y[i]) & (hi_y[j] >= lo_y[i]))
        j = j[box]
        if j.size == 0:
            continue
        d1 = orient(a[i], b[i], a[j])
        d2 = orient(a[i], b[i], b[j])
        d3 = orient(a[j], b[j], a[i])
        d4 = orient(a[j], b[j], b[i])
        cross = (((d1 > eps) & (d2 < -eps)) | ((d1 < -eps) & (d2 > eps))) & \
                (((d3 > eps) & (d4 < -eps)) | ((d3 < -eps) & (d4 > eps)))
        if np.any(cross):
            return False
    return True


def univalence_report(rd: RationalDerivative, boundary_samples: int = 1024,
                      tol: float = 0.0) -> UnivalenceReport:
    """Local univalence from the divisor, simplicity of the sampled boundary image.

    ``tol`` is the margin required outside the unit circle: a zero or pole
    counts as outside only if its modulus exceeds ``1 + tol``.
    """
    if boundary_samples < 256:
        raise ValueError("boundary_samples must be at least 256")
    mods = np.concatenate([np.abs(rd.zeros), np.abs(rd.poles)])
    locally = bool(np.all(mods > 1.0 + tol))
    min_zero = float(np.abs(rd.zeros).min()) if rd.m else float("inf")
    theta = 2 * np.pi * np.arange(boundary_samples) / boundary_samples
    try:
        image = eval_f(rd, np.exp(1j * theta))
        simple = _polygon_is_simple(image)
    except PathBlocked:
        simple = False
    return UnivalenceReport(locally, simple, min_zero)


# -- log-rational form --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LogRationalForm:
    """f written as logarithmic terms plus a single rational function.

    ``f(z) = sum_j e_j log(1 - z/p_j) + (b_1 z + ... + b_K z^K) / (c_0 + ... + c_L z^L)``
    with ``c_0 = 1``.  The partial-fraction pieces used to build it are kept
    as well: ``pole_coeffs[j][k-1]`` multiplies ``(z - p_j)^(-k)`` and
    ``poly_coeffs[k]`` multiplies ``z^k``.
    """

    poles: np.ndarray
    orders: np.ndarray
    residues: np.ndarray
    pole_coeffs: tuple
    poly_coeffs: np.ndarray
    rational_numerator: np.ndarray
    rational_denominator: np.ndarray

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = npoly.polyval(z, np.concatenate([[0.0], self.rational_numerator]))
        out = out / npoly.polyval(z, self.rational_denominator)
        for e, p in zip(self.residues, self.poles):
            if e != 0:
                out = out + e * np.log(1.0 - z / p)
        return out

    def evaluate_partial_fractions(self, z):
        """Same function assembled term by term from the partial fractions."""
        z = np.asarray(z, dtype=complex)
        out = npoly.polyval(z, self.poly_coeffs) - self.poly_coeffs[0]
        for e, p, cs in zip(self.residues, self.poles, self.pole_coeffs):
            if e != 0:
                out = out + e * np.log(1.0 - z / p)
            for k, c in enumerate(cs, start=1):
                out = out + c * ((z - p) ** (-k) - (-p) ** (-k))
        return out

    def derivative(self, z):
        """f'(z) from the rational numerator/denominator pair and log terms."""
        z = np.asarray(z, dtype=complex)
        num = np.concatenate([[0.0], self.rational_numerator])
        den = self.rational_denominator
        N, D = npoly.polyval(z, num), npoly.polyval(z, den)
        dN, dD = npoly.polyval(z, npoly.polyder(num)), npoly.polyval(z, npoly.polyder(den))
        out = (dN * D - N * dD) / D ** 2
        for e, p in zip(self.residues, self.poles):
            out = out + e / (z - p)
        return out

    def rational_taylor(self, N: int) -> np.ndarray:
        """Taylor coefficients of the pure rational part (a-tilde_1..a-tilde_N)."""
        num = np.zeros(N + 1, dtype=complex)
        k = min(N, self.rational_numerator.size)
        num[1: k + 1] = self.rational_numerator[:k]
        den = self.rational_denominator
        out = np.zeros(N + 1, dtype=complex)
        # recursive division by a series with unit constant term
        for i in range(N + 1):
            acc = num[i]
            for j in range(1, min(i, den.size - 1) + 1):
                acc -= den[j] * out[i - j]
            out[i] = acc
        return out[1:]


def _principal_parts(rd: RationalDerivative, j: int) -> np.ndarray:
    """Coefficients r_1..r_nj of sum_k r_k (z - p_j)^(-k) at pole j."""
    p, nj = rd.poles[j], int(rd.orders[j])
    # h(u) = g(p + u) u^nj expanded to order nj - 1
    h = rd.b * npoly.polyfromroots(rd.zeros - p)[:nj] if rd.m else np.array([rd.b])
    h = np.concatenate([h, np.zeros(max(0, nj - h.size), dtype=complex)])
    for i in range(rd.ell):
        if i != j:
            h = np.convolve(h, _inverse_linear_series(p - rd.poles[i], nj, int(rd.orders[i]), nj))[:nj]
    # r_{nj - s} = h_s
    return h[::-1]


def to_log_rational(rd: RationalDerivative, merge_tol: float = POLE_MERGE_TOL) -> LogRationalForm:
    """Partial-fraction decomposition of g and term-wise antiderivative."""
    if rd.ell > 1:
        gaps = np.abs(rd.poles[:, None] - rd.poles[None, :])
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() < merge_tol:
            raise DegenerateDecomposition(
                f"poles closer than {merge_tol:g}; declare them as one multiple pole")
    residues = np.zeros(rd.ell, dtype=complex)
    pole_coeffs = []
    for j in range(rd.ell):
        r = _principal_parts(rd, j)
        residues[j] = r[0]
        # integral of r_k (z-p)^-k for k >= 2 is -r_k/(k-1) (z-p)^(1-k)
        pole_coeffs.append(np.array([-r[k] / k for k in range(1, r.size)], dtype=complex))
    quotient, _ = npoly.polydiv(rd.numerator(), rd.denominator())
    quotient = np.atleast_1d(quotient) if rd.m >= rd.n else np.zeros(1, dtype=complex)
    poly = np.concatenate([[0.0], quotient / np.arange(1, quotient.size + 1)]).astype(complex)
    const = 0.0 + 0j
    for e, p, cs in zip(residues, rd.poles, pole_coeffs):
        const -= e * np.log(-p + 0j)
        for k, c in enumerate(cs, start=1):
            const -= c * (-p) ** (-k)
    poly[0] = const

    # single-fraction rational part with denominator prod (1 - z/p_j)^(n_j - 1)
    den = np.array([1.0 + 0j])
    for p, k in zip(rd.poles, rd.orders):
        for _ in range(int(k) - 1):
            den = npoly.polymul(den, [1.0, -1.0 / p])
    num = npoly.polymul(np.concatenate([[0.0], poly[1:]]), den)
    for j, (p, cs) in enumerate(zip(rd.poles, pole_coeffs)):
        nj = int(rd.orders[j])
        rest = np.array([1.0 + 0j])
        for i, (pi, ki) in enumerate(zip(rd.poles, rd.orders)):
            if i != j:
                for _ in range(int(ki) - 1):
                    rest = npoly.polymul(rest, [1.0, -1.0 / pi])
        for k, c in enumerate(cs, start=1):
            # den / (z - p)^k  =  (-1/p)^(nj-1) (z - p)^(nj-1-k) * rest
            part = npoly.polymul(rest, npoly.polyfromroots([p] * (nj - 1 - k))) if nj - 1 - k else rest
            part = (-1.0 / p) ** (nj - 1) * np.asarray(part, dtype=complex)
            term = npoly.polysub(part, (-p) ** (-k) * den)
            num = npoly.polyadd(num, c * term)
    num = np.asarray(num, dtype=complex)
    size = rd.m - rd.ell + 2 if rd.m >= rd.n else max(num.size, 2)
    num = np.concatenate([num, np.zeros(max(0, size - num.size), dtype=complex)])[:size]
    return LogRationalForm(
        poles=rd.poles, orders=rd.orders, residues=residues,
        pole_coeffs=tuple(pole_coeffs), poly_coeffs=poly,
        rational_numerator=num[1:], rational_denominator=np.asarray(den, dtype=complex),
    )


def fraction_coeffs(rd: RationalDerivative):
    """g as a single fraction with unit constant denominator term.

    Returns ``(b_tilde, c_tilde)`` with ``g = sum b_tilde_j z^j / sum c_tilde_j z^j``
    and ``c_tilde[0] == 1``.
    """
    den = rd.denominator()
    return rd.numerator() / den[0], den / den[0]


def boundary_values(rd: RationalDerivative, nodes: int):
    """f and f' on equispaced nodes of the unit circle, plus the nodes."""
    if rd.ell and np.any(np.abs(rd.poles) <= 1.0):
        raise NonLocallyUnivalent("a pole lies in the closed unit disk")
    z = np.exp(2j * np.pi * np.arange(nodes) / nodes)
    lr = to_log_rational(rd)
    return z, lr(z), eval_g(rd, z)


def random_map(rng, max_m: int = 4, max_n: int = 2, radius=(1.2, 4.0),
               separation: float = 0.05) -> RationalDerivative:
    """Random locally univalent map with a_1 = 1.

    Zeros and poles are drawn with moduli in ``radius`` and arguments
    uniform, keeping all points at least ``separation`` apart; pole
    orders are 1 or 2 and the total pole order never exceeds the number
    of zeros.
    """
    m = int(rng.integers(1, max_m + 1))
    n_target = int(rng.integers(0, min(max_n, m) + 1))
    pts = []

    def draw():
        while True:
            z = rng.uniform(*radius) * np.exp(2j * np.pi * rng.random())
            if all(abs(z - p) >= separation for p in pts):
                pts.append(z)
                return z

    zeros = [draw() for _ in range(m)]
    poles, orders, n = [], [], 0
    while n < n_target:
        k = 2 if n_target - n >= 2 and rng.random() < 0.3 else 1
        poles.append(draw())
        orders.append(k)
        n += k
    return RationalDerivative.from_roots(zeros, poles, orders, a1=1.0)


# -- JSON map specification ---------------------------------------------------

def _c(v):
    return complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)


def _pair(z):
    z = complex(z)
    return [z.real, z.imag]


def map_from_spec(spec: dict) -> RationalDerivative:
    """Parse ``{"b", "zeros", "poles"}`` or ``{"taylor"}`` map specifications."""
    if "taylor" in spec:
        return RationalDerivative.from_taylor([_c(v) for v in spec["taylor"]])
    poles = spec.get("poles", [])
    return RationalDerivative(
        _c(spec.get("b", [1.0, 0.0])),
        [_c(v) for v in spec.get("zeros", [])],
        [_c(p["z"]) for p in poles],
        [int(p.get("order", 1)) for p in poles],
    )


def map_to_spec(rd: RationalDerivative) -> dict:
    return {
        "b": _pair(rd.b),
        "zeros": [_pair(w) for w in rd.zeros],
        "poles": [{"z": _pair(p), "order": int(k)} for p, k in zip(rd.poles, rd.orders)],
    }


def taylor_to_spec(series: TaylorSeries) -> dict:
    return {"taylor": [_pair(a) for a in series.coeffs]}


__all__ = [
    "POLE_CLEARANCE", "POLE_MERGE_TOL", "RationalDerivative", "TaylorSeries",
    "LogRationalForm", "UnivalenceReport", "eval_g", "eval_g_star", "eval_f",
    "taylor_coeffs", "leading_coeff", "univalence_report", "to_log_rational",
    "fraction_coeffs", "boundary_values", "random_map", "map_from_spec", "map_to_spec",
    "taylor_to_spec",
]
