"""Large-time laws: rescaled zeros, coefficient decay, pole envelopes, repulsion."""
import math

import numpy as np
import pytest

from hele_shaw import (
    RationalDerivative,
    RegimeMismatch,
    RunConfig,
    coefficient_scaling_check,
    convergence_report,
    moment_vector,
    pole_envelope_check,
    repulsion_predicates,
    rescaled_zeros,
    run_simulation,
    taylor_coeffs,
    targets_from_moments,
)
from hele_shaw.dynamics import SimState
from hele_shaw.gallery import HUNTINGFORD_M1, HUNTINGFORD_M2, two_real_roots_fields


def _state(rd, t=0.0):
    return SimState(t, rd)


# -- targets and rescaling --------------------------------------------------------------

def test_huntingford_targets():
    tg = targets_from_moments([1.0, HUNTINGFORD_M1, HUNTINGFORD_M2], 2)
    np.testing.assert_allclose(np.sort_complex(tg.omega_hat),
                               np.sort_complex([1j * math.sqrt(5 / 3), -1j * math.sqrt(5 / 3)]),
                               atol=1e-14)
    assert tg.r_gap == 1
    # product of the two roots of w^2 = -5/3
    assert tg.product == pytest.approx(5 / 3, abs=1e-14)
    assert np.prod(tg.omega_hat) == pytest.approx(tg.product, abs=1e-14)


def test_targets_gap_index():
    tg = targets_from_moments([1.0, 0.0, 0.3], 2)
    assert tg.r_gap == 2


def test_rescaled_zeros():
    np.testing.assert_allclose(rescaled_zeros(RationalDerivative(-0.5, [2.0])), [2.0])
    # a_1 = 4 with one zero at 8: 8 / 4^3 = 1/8
    rd = RationalDerivative(-0.5, [8.0])
    assert rd.g0() == pytest.approx(4)
    np.testing.assert_allclose(rescaled_zeros(rd), [8 / 4 ** 3])


def test_rescaled_zeros_needs_polynomial():
    with pytest.raises(ValueError):
        rescaled_zeros(RationalDerivative(1, [3], [2]))


# -- convergence on a global run -----------------------------------------------------------

def test_convergence_huntingford(huntingford_long):
    rep = convergence_report(huntingford_long)
    assert rep.passed, rep.to_json()
    assert huntingford_long.samples[-1].series.a1.real >= 1e3
    assert rep.values["final_mismatch"] <= 1e-2
    assert rep.series["product_residual"].max() <= 1e-8


def test_convergence_k2_decay_rate(huntingford_long):
    rep = convergence_report(huntingford_long)
    a1, d2 = rep.series["a1"], rep.series["decay2"]
    lo, hi = np.argmin(np.abs(a1 - 100)), np.argmin(np.abs(a1 - 1000))
    assert d2[lo] / d2[hi] >= 10


def test_convergence_disk_is_trivial():
    traj = run_simulation(RunConfig(RationalDerivative(1.0, []), t_span=(0, 1), sample_dt=0.1))
    rep = convergence_report(traj)
    assert rep.passed and "trivial" in rep.checks


def test_convergence_odd_map_gap():
    # f = z + 0.1 z^3 stays odd, so M_1 = 0 and the gap index is 2
    rd = RationalDerivative.from_taylor([1.0, 0.0, 0.1])
    traj = run_simulation(RunConfig(rd, t_span=(0, 3.0), sample_dt=0.05))
    rep = convergence_report(traj)
    assert rep.values["r_gap"] == 2
    assert rep.checks["gap_decay"].passed and rep.checks["r_le_m"].passed


# -- poles ------------------------------------------------------------------------------------

def test_pole_envelope_offcenter(offcenter_run):
    rep = pole_envelope_check(offcenter_run)
    assert rep.passed, rep.to_json()


def test_pole_envelope_values():
    # |p0| = 2, a_1 = 1: envelope [0.5, 4.5]
    rd = RationalDerivative.from_roots([3.0, 4.0], [2.0], [2], a1=1.0)
    traj = run_simulation(RunConfig(rd, t_span=(0, 0.2), sample_dt=0.05))
    rep = pole_envelope_check(traj)
    lo, hi = rep.values["envelope"][0]
    assert (lo, hi) == pytest.approx((0.5, 4.5))
    assert rep.passed


def test_pole_envelope_random_runs(random_rational_runs):
    for traj in random_rational_runs:
        rep = pole_envelope_check(traj)
        assert rep.passed, rep.to_json()


def test_pole_envelope_needs_poles():
    traj = run_simulation(RunConfig(RationalDerivative(1.0, []), t_span=(0, 0.2), sample_dt=0.1))
    with pytest.raises(ValueError):
        pole_envelope_check(traj)


@pytest.fixture(scope="module")
def rational_long():
    rd = RationalDerivative.from_roots([3.0, -4.0], [2.0], [1])
    return run_simulation(RunConfig(rd, t_span=(0, 5), sample_dt=0.05))


def test_coefficient_scaling_rational(rational_long):
    assert rational_long.samples[-1].series.a1.real >= 100
    rep = coefficient_scaling_check(rational_long)
    assert rep.passed, rep.to_json()
    assert set(rep.values["s_N"]) == {2, 4, 8}
    # the pole term keeps f - f_2 of size a_1^(-3)
    assert rep.values["s_N"][2] == pytest.approx(3, abs=0.1)


def test_pole_envelope_long_rational(rational_long):
    assert pole_envelope_check(rational_long).passed


def test_coefficient_scaling_polynomial(huntingford_long):
    rep = coefficient_scaling_check(huntingford_long)
    assert rep.passed, rep.to_json()
    assert rep.values["r"] == 1


# -- repulsion ------------------------------------------------------------------------------

def test_repulsion_two_real():
    rd = RationalDerivative.from_roots([2.0, 3.0])
    rep = repulsion_predicates(_state(rd))
    assert rep.regime == "two_real" and rep.passed
    fields = two_real_roots_fields(2.0, 3.0)
    assert rep.values["alpha"] == pytest.approx(fields.alpha)
    assert rep.values["beta"] == pytest.approx(fields.beta)
    assert rep.values["expected_ratio_sign"] == -1


def test_repulsion_scaled_rates_match_closed_form():
    for w1, w2 in [(1.2, 2.0), (2.0, 3.0), (1.5, 2.0)]:
        rd = RationalDerivative.from_roots([w1, w2])
        rep = repulsion_predicates(_state(rd))
        f = two_real_roots_fields(w1, w2)
        d = f.beta * (w1 * w2 - 3) / (w2 - w1)
        np.testing.assert_allclose(rep.values["scaled_log_rates"], [f.alpha + d, f.alpha - d],
                                   rtol=1e-10)


def test_repulsion_threshold():
    rep = repulsion_predicates(_state(RationalDerivative.from_roots([1.5, 2.0])))
    assert rep.values["expected_ratio_sign"] == 0
    assert rep.passed
    assert abs(rep.values["ratio_rate"]) <= 1e-12


def test_repulsion_one_close():
    rd = RationalDerivative.from_roots([1.01, 12.0, -12.0j])
    rep = repulsion_predicates(_state(rd))
    assert rep.regime == "one_close" and rep.passed
    assert rep.values["log_rate"] > 0


def test_repulsion_regime_mismatch():
    with pytest.raises(RegimeMismatch):
        repulsion_predicates(_state(RationalDerivative.from_roots([2.0, 3.0j])))
    with pytest.raises(RegimeMismatch):
        repulsion_predicates(_state(RationalDerivative.from_roots([2.0], [3.0], [1])))


# -- conserved product ------------------------------------------------------------------------

def test_conserved_product_along_run(huntingford_long):
    M = huntingford_long.samples[0].moments.M
    expected = 1 / (3 * np.conj(M[2]))
    for s in huntingford_long.samples[:: max(1, len(huntingford_long.samples) // 50)]:
        assert abs(np.prod(rescaled_zeros(s.state)) - expected) <= 1e-8 * abs(expected)


def test_conserved_product_from_taylor_data():
    # prod(zeros)/a_1^(m+2) only depends on a_1 and a_(m+1): check it against M_m
    a = np.array([1.7, 0.3 - 0.2j, 0.05 + 0.01j])
    rd = RationalDerivative.from_taylor(a)
    M = moment_vector(taylor_coeffs(rd, 3), 2).M
    assert np.prod(rescaled_zeros(rd)) == pytest.approx(1 / (3 * np.conj(M[2])), rel=1e-12)
