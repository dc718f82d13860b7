"""Zero/pole dynamics: right-hand sides, stepping, events and runs."""
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from hele_shaw import (
    ConfigError,
    NearMultipleZero,
    RationalDerivative,
    RunConfig,
    SimState,
    Trajectory,
    coefficients_A,
    conservation_residual,
    continue_through_collision,
    detect_events,
    eval_P,
    random_map,
    rhs,
    run_simulation,
    step,
    taylor_coeffs,
    to_log_rational,
)
from hele_shaw.dynamics import (
    EventThresholds,
    coefficient_rhs,
    conservation_rate,
    identity_residuals,
    interior_log_rates,
)
from hele_shaw.gallery import (
    HUNTINGFORD_T0,
    cardioid_reference,
    huntingford_map,
    offcenter_disk_map,
    offcenter_params,
)

CARDIOID = RationalDerivative(-1, [2])
seeds = st.integers(0, 2 ** 32 - 1)


def _rand(seed, **kw):
    return random_map(np.random.default_rng(seed), **kw)


def _match(a, b):
    """max distance between two point sets after sorting by nearest pairing."""
    from scipy.optimize import linear_sum_assignment
    cost = np.abs(np.asarray(a)[:, None] - np.asarray(b)[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())


# -- right-hand side ------------------------------------------------------------------

def test_cardioid_zero_velocity():
    d = rhs(SimState(0.0, CARDIOID, 1.0), check=True)
    assert d.omega_dot[0] == pytest.approx(2.0, abs=1e-14)
    # both forms of the log-rate by hand: -(A0 + 2A_1/w) and P*(w) - (2A_1/w)(1 + 1/(1 - |w|^2))
    pd = coefficients_A(CARDIOID, 1.0)
    assert interior_log_rates(CARDIOID, pd)[0] == pytest.approx(1.0, abs=1e-15)
    assert 5 / 9 + (2 / 3) * (2 / 3) == pytest.approx(1.0)


def test_disk_scale_rate():
    a, q = 1.5, 0.7
    d = rhs(SimState(0.0, RationalDerivative(a, []), q))
    assert d.b_dot == pytest.approx(q / a, abs=1e-15)
    # dM_0/dt = d(a^2)/dt = 2 a da/dt = 2q
    assert 2 * a * d.b_dot.real == pytest.approx(2 * q)


def test_two_zeros_at_product_three_share_log_rate():
    rd = RationalDerivative.from_roots([1.5, 2.0])
    d = rhs(SimState(0.0, rd, 1.0))
    lr = d.omega_dot / rd.zeros
    assert lr[0].real > 0
    assert abs(lr[0] - lr[1]) <= 1e-13 * abs(lr[0])


def test_rhs_refuses_multiple_zero():
    rd = RationalDerivative.from_roots([2.0, 2.0 + 1e-9])
    with pytest.raises(NearMultipleZero):
        rhs(SimState(0.0, rd, 1.0))


@given(seeds)
def test_identity_residuals_random(seed):
    res = identity_residuals(_rand(seed))
    assert res["reflection"] <= 1e-10
    assert res["im_P0"] <= 1e-10
    assert res["pole_antisymmetry"] <= 1e-10
    assert res["two_forms"] <= 1e-9


@given(seeds)
def test_unit_growth_a1_rate(seed):
    rd = _rand(seed)
    d = rhs(SimState(0.0, rd))
    # d log a_1/dt = d log b + sum d log w - sum d log p = P(0) = 1
    rate = d.b_dot / rd.b + np.sum(d.omega_dot / rd.zeros) - np.sum(
        rd.orders * d.zeta_dot / rd.poles)
    assert rate == pytest.approx(1.0, abs=1e-9)


# -- coefficient route ------------------------------------------------------------------

def test_coefficient_rhs_disk():
    dB, dp = coefficient_rhs([2.0], q=1.0)
    assert dB[0] == pytest.approx(0.5)
    assert dp.size == 0


def test_coefficient_rhs_cardioid():
    # d/dz (z g P) with z g P = z^2/3 + 2z/3
    dB, _ = coefficient_rhs(CARDIOID.numerator(), q=1.0)
    np.testing.assert_allclose(dB, [2 / 3, 2 / 3], atol=1e-14)


@settings(max_examples=15)
@given(seeds)
def test_coefficient_rhs_matches_root_motion(seed):
    # one-sided second-order differences of the numerator along the root motion
    rng = np.random.default_rng(seed)
    rd = RationalDerivative.from_roots(rng.uniform(1.3, 3, 2) * np.exp(2j * np.pi * rng.random(2)))
    st0 = SimState(0.0, rd, 1.0)
    dB, _ = coefficient_rhs(rd.numerator(), q=1.0)
    errs = []
    for h in (2e-4, 1e-4):
        s1, s2 = step(st0, h, rtol=1e-13, atol=1e-15), step(st0, 2 * h, rtol=1e-13, atol=1e-15)
        fd = (-3 * rd.numerator() + 4 * s1.rd.numerator() - s2.rd.numerator()) / (2 * h)
        errs.append(np.max(np.abs(fd - dB)) / max(1.0, np.abs(dB).max()))
    assert errs[1] <= 1e-3
    assert errs[1] <= errs[0] / 3 or errs[1] <= 1e-9


@settings(max_examples=15)
@given(seeds)
def test_coefficient_rhs_rational_poles(seed):
    rd = _rand(seed, max_n=2)
    if not rd.ell:
        return
    pd = coefficients_A(rd, 1.0)
    d = rhs(SimState(0.0, rd, 1.0))
    _, dp = coefficient_rhs(rd.numerator(), rd.poles, rd.orders, q=1.0)
    np.testing.assert_allclose(dp, d.zeta_dot, rtol=1e-8, atol=1e-12)
    assert pd.mu_total > 0


# -- step ----------------------------------------------------------------------------------

def test_step_cardioid_against_closed_system():
    def closed(t, y):
        w, b = y
        ref = cardioid_reference(w, b, 1.0)
        return [w * ref.log_rate, 2 * ref.A0 * b]

    ref = solve_ivp(closed, (0, 0.1), [2.0, -1.0], method="DOP853", rtol=1e-13, atol=1e-15)
    out = step(SimState(0.0, CARDIOID, 1.0), 0.1)
    assert out.rd.zeros[0] == pytest.approx(ref.y[0, -1], abs=1e-8)
    assert out.rd.b == pytest.approx(ref.y[1, -1], abs=1e-8)


def test_step_disk_closed_form():
    out = step(SimState(0.0, RationalDerivative(1.2, []), 1.0), 1.0)
    assert abs(out.rd.b - math.sqrt(1.44 + 2)) <= 1e-10
    assert out.Q == pytest.approx(1.0, abs=1e-12)


def test_zero_step_is_identity():
    st0 = SimState(0.3, CARDIOID, 1.0)
    assert step(st0, 0.0) is st0
    with pytest.raises(ValueError):
        step(st0, -0.1)


@settings(max_examples=10)
@given(seeds)
def test_log_derivative_pde(seed):
    # d/dt log g = z P (log g)' + (z P)' at |z| = 1.3, by differences in t
    rd = _rand(seed, max_n=2, radius=(1.5, 4.0))
    rng = np.random.default_rng(seed)
    z = 1.3 * np.exp(2j * np.pi * rng.random(60))
    pts = np.concatenate([rd.zeros, rd.poles])
    z = z[np.min(np.abs(z[:, None] - pts[None, :]), axis=1) > 0.1][:20]
    if z.size == 0:
        return
    h = 1e-4
    st0 = SimState(0.0, rd, 1.0)
    states = [step(st0, k * h, rtol=1e-13, atol=1e-15).rd for k in (1, 2, 3)]

    def logg(r):
        return (np.log(r.b) + np.sum(np.log(z[:, None] - r.zeros), axis=1)
                - np.sum(r.orders * np.log(z[:, None] - r.poles), axis=1))

    def unwrap(d):
        return d - 2j * np.pi * np.round(d.imag / (2 * np.pi))

    # third-order one-sided stencil (the integrator only runs forward)
    l0 = logg(rd)
    d1, d2, d3 = (unwrap(logg(r) - l0) for r in states)
    dlog = (18 * d1 - 9 * d2 + 2 * d3) / (6 * h)
    pd = coefficients_A(rd, 1.0)
    P = eval_P(pd, rd, z)
    dP = np.sum(-2 * pd.A / (z[:, None] - rd.zeros) ** 2, axis=1)
    dlg = np.sum(1 / (z[:, None] - rd.zeros), axis=1) - np.sum(rd.orders / (z[:, None] - rd.poles), axis=1)
    pred = z * P * dlg + P + z * dP
    assert np.max(np.abs(dlog - pred)) <= 1e-5 * max(1.0, np.abs(pred).max())


# -- events -----------------------------------------------------------------------------------

def test_cusp_threshold_is_immediate():
    rd = RationalDerivative(-1, [1 + 0.5e-4])
    kinds = [e.kind for e in detect_events(SimState(0.0, rd))]
    assert kinds == ["Cusp"]


def test_collision_threshold():
    rd = RationalDerivative.from_roots([2.0, 2.0 + 1e-6])
    assert "Collision" in [e.kind for e in detect_events(SimState(0.0, rd))]


def test_pole_drop_threshold():
    rd = RationalDerivative(1e-7, [3e3, -4e3], [2.0], [2])
    kinds = [e.kind for e in detect_events(SimState(0.0, rd), EventThresholds(escape=1e6))]
    assert "PoleDrop" in kinds


def test_no_events_for_regular_state():
    assert detect_events(SimState(0.0, huntingford_map(1.0))) == []


def test_cardioid_run_without_events():
    traj = run_simulation(RunConfig(RationalDerivative(-1, [2]), t_span=(0, 10), sample_dt=0.5))
    assert traj.status == "completed" and traj.events == []
    np.testing.assert_allclose(traj.a1, 2 * np.exp(traj.times), rtol=1e-8)


def test_huntingford_event_order(huntingford_events):
    ev = [(e.kind, e.time) for e in huntingford_events.events]
    assert [k for k, _ in ev] == ["Collision", "Cusp", "Collision"]
    assert ev[0][1] < 0 and abs(ev[1][1]) <= 2e-3 and ev[2][1] > 0


def test_huntingford_stops_at_collision_by_default():
    t0 = HUNTINGFORD_T0 + 1e-3
    traj = run_simulation(RunConfig(huntingford_map(t0), t_span=(t0, 1.0)))
    assert traj.status == "event"
    assert traj.events[-1].kind == "Collision" and traj.events[-1].time < 0


def test_huntingford_tracks_closed_form(huntingford_events):
    # zeros against the closed-form family at every sample away from events
    worst = 0.0
    for s in huntingford_events.samples:
        t = s.state.t
        if any(abs(t - e.time) < 5e-3 for e in huntingford_events.events) or t > 1.0:
            continue
        worst = max(worst, _match(s.state.rd.zeros, huntingford_map(t).zeros))
    assert worst <= 1e-6


def test_collision_pair_symmetric_functions_continuous(huntingford_events):
    # first collision: conjugate pair -> two real zeros; second: the reverse
    first, _, second = huntingford_events.events
    for ev, real_side in ((first, "after"), (second, "before")):
        near = [s for s in huntingford_events.samples if abs(s.state.t - ev.time) < 0.05]
        for s in near:
            ref = huntingford_map(s.state.t).zeros
            w = s.state.rd.zeros
            assert abs(w.sum() - ref.sum()) <= 1e-6
            assert abs(np.prod(w) - np.prod(ref)) <= 1e-6
        before = [s for s in near if s.state.t < ev.time - 2e-3][-1].state.rd.zeros
        after = [s for s in near if s.state.t > ev.time + 2e-3][0].state.rd.zeros
        real, pair = (after, before) if real_side == "after" else (before, after)
        assert np.all(np.abs(real.imag) <= 1e-9)
        assert abs(pair[0] - np.conj(pair[1])) <= 1e-9 and abs(pair[0].imag) > 1e-4


def test_collision_of_two_real_zeros_continues_as_pair():
    cfg = RunConfig(RationalDerivative.from_roots([2.0, 2.5]), t_span=(0, 0.5), sample_dt=0.01)
    stopped = run_simulation(cfg)
    assert stopped.status == "event" and stopped.events[-1].kind == "Collision"
    cont = continue_through_collision(stopped)
    assert cont.status == "completed"
    w = cont.samples[-1].state.rd.zeros
    assert abs(w[0] - np.conj(w[1])) <= 1e-8 * abs(w[0])
    assert abs(w[0].imag) > 1e-3


def test_continue_without_collision_is_identity():
    traj = run_simulation(RunConfig(RationalDerivative(1, []), t_span=(0, 0.1)))
    assert continue_through_collision(traj) is traj


# -- conservation law ------------------------------------------------------------------------

def test_cardioid_conservation_rate():
    st0 = SimState(0.0, CARDIOID, 1.0)
    assert conservation_rate(st0) == pytest.approx(3 * (1 / 3))
    traj = run_simulation(RunConfig(CARDIOID, t_span=(0, 0.2), sample_dt=1e-3))
    assert conservation_residual(traj).max_residual <= 1e-6


def test_polynomial_conservation():
    rd = RationalDerivative.from_roots([1.6 + 0.4j, -2.1 - 1j])
    traj = run_simulation(RunConfig(rd, t_span=(0, 0.3), sample_dt=1e-3))
    cons = conservation_residual(traj)
    assert cons.max_residual <= 1e-6 and cons.max_arg_residual <= 1e-6


def test_conservation_needs_three_times():
    traj = run_simulation(RunConfig(CARDIOID, t_span=(0, 0.01), sample_dt=0.01))
    traj.samples = traj.samples[:2]
    with pytest.raises(ValueError):
        conservation_residual(traj)


# -- runs --------------------------------------------------------------------------------------

def test_disk_run_closed_form():
    traj = run_simulation({"map": {"b": [1.0, 0.0]}, "t_span": [0, 1], "sample_dt": 0.1})
    assert traj.status == "completed" and not traj.events
    np.testing.assert_allclose(traj.a1, np.exp(traj.times), rtol=1e-10)


def test_offcenter_from_three_pole_moves_out():
    traj = run_simulation(RunConfig(offcenter_disk_map(3.0), t_span=(0, 0.5), sample_dt=0.01))
    r = np.abs(traj.poles[:, 0])
    assert np.all(np.diff(r) > 0)


def test_offcenter_run_follows_family(offcenter_run):
    kinds = [e.kind for e in offcenter_run.events]
    assert kinds == ["PoleDrop"]
    assert offcenter_run.events[0].payload.get("position") == "infinity"
    worst = 0.0
    for s in offcenter_run.samples:
        p = s.state.rd.poles[0].real
        if abs(p - 2.0) < 1e-2:
            continue
        a, _ = offcenter_params(p)
        w = s.state.rd.zeros
        worst = max(worst, abs(w.sum() - 2 * p) / p, abs(np.prod(w) - p * a) / abs(p * a))
    assert worst <= 1e-7


def test_residues_constant_on_rational_runs(random_rational_runs, offcenter_run):
    for traj in random_rational_runs + [offcenter_run]:
        e = np.array([to_log_rational(s.state.rd).residues for s in traj.samples])
        assert np.max(np.abs(e - e[0])) <= 1e-8 * max(1.0, np.abs(e[0]).max())


def test_constraint_residual_small(random_rational_runs):
    for traj in random_rational_runs:
        assert max(s.state.constraint_residual for s in traj.samples) <= 1e-8


def test_determinism():
    cfg = RunConfig(huntingford_map(0.2), t_span=(0.2, 0.6), sample_dt=0.02)
    assert run_simulation(cfg).to_csv() == run_simulation(cfg).to_csv()


# -- trajectory files and configs -------------------------------------------------------------

def test_csv_round_trip(offcenter_run):
    text = offcenter_run.to_csv()
    back = Trajectory.from_csv(text)
    assert back.to_csv() == text
    header = text.splitlines()[0].split(",")
    assert header[:4] == ["t", "a1", "b_re", "b_im"] and header[-3:] == ["N0", "constraint_residual", "Q"]
    assert all(len(line.split(",")) == len(header) for line in text.splitlines())


def test_events_jsonl(huntingford_events):
    lines = huntingford_events.events_jsonl().splitlines()
    assert [json.loads(x)["kind"] for x in lines] == ["Collision", "Cusp", "Collision"]


def test_config_round_trip():
    cfg = RunConfig(huntingford_map(0.1), q_mode=2.0, t_span=(0.1, 0.3), collision_continuation=True)
    back = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back.q_mode == 2.0 and back.t_span == (0.1, 0.3) and back.collision_continuation


@pytest.mark.parametrize("bad, field", [
    ({"t_span": [1, 0]}, "t_span"),
    ({"q_mode": {"constant": -1}}, "q_mode.constant"),
    ({"rtol": 0}, "rtol"),
    ({"events": {"cusp": "x"}}, "events.cusp"),
    ({"engine": "fast"}, "engine"),
    ({"taylor_order": 2.5}, "taylor_order"),
])
def test_config_errors_name_field(bad, field):
    d = {"map": {"b": [1, 0]}, **bad}
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict(d)
    assert exc.value.field == field


def test_config_missing_map():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"t_span": [0, 1]})


def test_series_attached_to_samples(huntingford_window):
    s = huntingford_window.samples[3]
    np.testing.assert_allclose(s.series.coeffs[:3], taylor_coeffs(s.state.rd, 3).coeffs)
