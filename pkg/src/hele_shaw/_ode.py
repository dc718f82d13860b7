"""Embedded Dormand-Prince 5(4) stepper working directly on complex vectors."""
from __future__ import annotations

import numpy as np

from .errors import HeleShawError, StepSizeUnderflow

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class DormandPrince:
    """Adaptive explicit Runge-Kutta stepper with FSAL reuse.

    Parameters
    ----------
    fun : callable
        ``fun(t, y) -> dy/dt`` on complex arrays.  Raising a package error or
        returning non-finite values rejects the current trial step.
    rtol, atol : float
        Mixed error tolerance per component.
    """

    safety = 0.75
    min_factor = 0.2
    max_factor = 5.0

    def __init__(self, fun, rtol: float = 1e-9, atol: float = 1e-12):
        self.fun = fun
        self.rtol = rtol
        self.atol = atol

    def _eval(self, t, y):
        try:
            with np.errstate(all="ignore"):
                out = np.asarray(self.fun(t, y), dtype=complex)
        except (HeleShawError, ZeroDivisionError, FloatingPointError, np.linalg.LinAlgError):
            return None
        return out if np.all(np.isfinite(out)) else None

    def single_step(self, t, y, h, f0=None):
        """One trial step; returns ``(y_new, err_norm, f_new)`` or ``None``."""
        if f0 is None:
            f0 = self._eval(t, y)
            if f0 is None:
                return None
        K = [f0]
        for i in range(1, 7):
            yi = y + h * sum(a * k for a, k in zip(_A[i], K))
            ki = self._eval(t + _C[i] * h, yi)
            if ki is None:
                return None
            K.append(ki)
        y_new = y + h * sum(b * k for b, k in zip(_B5, K) if b != 0.0)
        err = h * sum(e * k for e, k in zip(_E, K))
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
        norm = float(np.max(np.abs(err / scale))) if y.size else 0.0
        return y_new, norm, K[6]

    def initial_step(self, t, y, f0, direction=1.0):
        scale = self.atol + self.rtol * np.abs(y)
        d0 = np.sqrt(np.mean(np.abs(y / scale) ** 2))
        d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        trial = self.single_step(t, y, h0 * direction, f0)
        if trial is None:
            return h0 * 1e-3
        f1 = self._eval(t + h0, trial[0])
        if f1 is None:
            return h0 * 1e-3
        d2 = np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2)) / h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1 / 5)
        return min(100 * h0, h1)

    def advance(self, t, y, f0, h, t_max):
        """Take one accepted step of size at most ``t_max - t``.

        Returns ``(t_new, y_new, f_new, h_next)``.
        """
        if f0 is None:
            f0 = self._eval(t, y)
            if f0 is None:
                raise StepSizeUnderflow(f"right-hand side undefined at t = {t}")
        if h is None or h <= 0:
            h = self.initial_step(t, y, f0)
        while True:
            last = h >= t_max - t
            hh = t_max - t if last else h
            if hh < 1e-14 * max(1.0, abs(t)):
                if last:
                    return t_max, y, f0, h
                raise StepSizeUnderflow(f"step size underflow at t = {t}")
            trial = self.single_step(t, y, hh, f0)
            if trial is None:
                h = hh * 0.25
                continue
            y_new, err, f_new = trial
            if err <= 1.0:
                factor = self.max_factor if err == 0 else min(
                    self.max_factor, self.safety * err ** (-1 / 5))
                h_next = max(h, hh) * factor if not last else max(h, hh * factor)
                return (t_max if last else t + hh), y_new, f_new, h_next
            h = hh * max(self.min_factor, self.safety * err ** (-1 / 5))
