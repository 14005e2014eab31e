import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from petrosim import engine
from petrosim.engine import (AlgebraicLoop, DuplicateName, Event, InvalidEvent, ModelSpec,
                             NonFiniteValue, NonPositiveTau, UndefinedReference)

import oracles
from conftest import decay_model


# -- compile ------------------------------------------------------------------

def test_single_constant_compiles():
    m = engine.compile(ModelSpec().add(engine.constant("c", 5)))
    assert list(m.evaluation_order) == ["c"]
    assert m.initial_state()["c"] == 5.0


def test_two_cycle_is_algebraic_loop():
    spec = ModelSpec().add(engine.auxiliary("a", lambda b: b, ["b"]),
                           engine.auxiliary("b", lambda a: a, ["a"]))
    with pytest.raises(AlgebraicLoop) as err:
        engine.compile(spec)
    assert set(err.value.members) == {"a", "b"}


def test_cycle_through_stock_is_allowed():
    m = decay_model()
    assert m.evaluation_order[-1] == "S"
    assert m.stocks == ("S",)


def test_undefined_reference():
    spec = ModelSpec().add(engine.auxiliary("a", lambda x: x, ["missing"]))
    with pytest.raises(UndefinedReference) as err:
        engine.compile(spec)
    assert err.value.name == "missing"


def test_duplicate_name():
    spec = ModelSpec().add(engine.constant("c", 1), engine.constant("c", 2))
    with pytest.raises(DuplicateName):
        engine.compile(spec)


def test_empty_model_rejected():
    with pytest.raises(engine.ModelError):
        engine.compile(ModelSpec())


def test_constant_with_dependency_rejected():
    with pytest.raises(engine.ModelError):
        engine.VariableDef("c", "constant", inputs=("x",), initial_value=1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=2, max_value=8), st.data())
def test_random_graphs_acyclicity(n, data):
    """Any graph is accepted iff every cycle passes through a stock."""
    edges = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                               max_size=3 * n))
    kinds = data.draw(st.lists(st.sampled_from(["auxiliary", "stock"]), min_size=n, max_size=n))
    deps = {i: sorted({b for a, b in edges if a == i}) for i in range(n)}
    spec = ModelSpec()
    for i in range(n):
        inputs = [f"v{j}" for j in deps[i]]
        fn = lambda *xs: math.fsum(xs) * 0.0  # noqa: E731
        if kinds[i] == "stock":
            spec.add(engine.VariableDef(f"v{i}", "stock", fn, tuple(inputs), initial_value=1.0))
        else:
            spec.add(engine.auxiliary(f"v{i}", fn, inputs))

    # reference: DFS over non-stock nodes only
    color = {}

    def has_cycle(u):
        color[u] = 1
        for v in deps[u]:
            if kinds[v] == "stock":
                continue
            if color.get(v) == 1 or (color.get(v) is None and has_cycle(v)):
                return True
        color[u] = 2
        return False

    cyclic = any(kinds[u] != "stock" and color.get(u) is None and has_cycle(u)
                 for u in range(n))
    if cyclic:
        with pytest.raises(AlgebraicLoop):
            engine.compile(spec)
    else:
        engine.compile(spec)


# -- step ---------------------------------------------------------------------

def test_one_euler_step():
    m = decay_model()
    s = engine.step(m, m.initial_state(), 0.1)
    assert s["S"] == pytest.approx(0.9, abs=1e-15)
    assert s.t == pytest.approx(0.1)


def test_zero_flow_conserves():
    m = decay_model(k=0.0)
    s = m.initial_state()
    for dt in (0.01, 1.0, 7.5):
        s = engine.step(m, s, dt)
        assert s["S"] == 1.0


def test_exponential_after_1000_steps():
    m = decay_model()
    s = m.initial_state()
    for _ in range(1000):
        s = engine.step(m, s, 0.001)
    assert s["S"] == pytest.approx(oracles.exp_decay(1.0), abs=1e-3)
    assert s["S"] == pytest.approx(oracles.euler_decay(0.001, 1000), rel=1e-12)


def test_step_rejects_non_finite():
    spec = ModelSpec().add(
        engine.constant("k", 1e308),
        engine.flow("grow", lambda s, k: k * s * 10.0, ("S", "k")),
        engine.stock("S", 1e308, inflows=("grow",)),
    )
    m = engine.compile(spec)
    with pytest.raises(NonFiniteValue) as err:
        engine.simulate(m, horizon=3)
    assert err.value.name in ("grow", "S")


def test_domain_error_reports_variable():
    spec = ModelSpec().add(engine.constant("x", -1.0),
                           engine.auxiliary("y", math.log, ("x",)))
    with pytest.raises(engine.SimulationError) as err:
        engine.compile(spec).initial_state()
    assert "y" in str(err.value)


def test_rk4_is_fourth_order():
    m = decay_model()
    errs = []
    for dt in (0.1, 0.05):
        s = m.initial_state()
        for _ in range(round(1 / dt)):
            s = engine.rk4_step(m, s, dt)
        errs.append(abs(s["S"] - oracles.exp_decay(1.0)))
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.1)


# -- simulate -----------------------------------------------------------------

def test_grid_size():
    traj = engine.simulate(decay_model(), horizon=10)
    assert len(traj) == 11
    assert traj.times.tolist() == list(range(11))


def test_event_switches_decay_on():
    m = decay_model(k=0.0)
    traj = engine.simulate(m, horizon=10, events=[Event(5, "k", 0.5)])
    s = traj["S"]
    assert np.all(s[:6] == 1.0)
    assert np.all(np.diff(s[5:]) < 0)


def test_event_snaps_to_nearest_grid_point_ties_earlier():
    m = decay_model(k=0.0, dt_=1.0)
    for t_event, first_decay_row in ((4.5, 4), (4.6, 5), (4.4, 4)):
        s = engine.simulate(m, horizon=10, events=[Event(t_event, "k", 1.0)])["S"]
        assert s[first_decay_row] == 1.0
        assert s[first_decay_row + 1] < 1.0


def test_event_validation():
    m = decay_model()
    with pytest.raises(InvalidEvent):
        engine.simulate(m, horizon=5, events=[Event(6, "k", 0.0)])
    with pytest.raises(InvalidEvent):
        engine.simulate(m, horizon=5, events=[Event(1, "S", 0.0)])
    with pytest.raises(InvalidEvent):
        engine.simulate(m, horizon=5, events=[Event(1, "nope", 0.0)])


def test_half_step_richardson():
    """Euler error at t=1 is O(dt): halving dt roughly halves it, and the
    extrapolation 2*y(dt/2) - y(dt) is far more accurate than either."""
    exact = oracles.exp_decay(1.0)
    y = {}
    for dt in (0.1, 0.05):
        y[dt] = engine.simulate(decay_model(dt_=dt), horizon=1.0)["S"][-1]
    e1, e2 = abs(y[0.1] - exact), abs(y[0.05] - exact)
    assert abs(y[0.1] - y[0.05]) == pytest.approx(e1 - e2, rel=1e-9)
    assert e1 / e2 == pytest.approx(2.0, rel=0.1)
    assert abs(2 * y[0.05] - y[0.1] - exact) < e2 / 10


def test_trajectory_accessors():
    traj = engine.simulate(decay_model(), horizon=3)
    assert "S" in traj
    assert traj.row(1)["S"] == traj["S"][1]
    assert traj.at(2.2).t == 2.0
    assert traj.rows[0]["k"] == 1.0


# -- builtins -----------------------------------------------------------------

@pytest.mark.parametrize("start,duration,t,expected", [
    (0, 210, 100, 1.0),
    (0, 210, 210, 0.0),
    (5, 0, 5, 0.0),
    (0, 210, 0, 1.0),
    (10, 5, 9.999, 0.0),
])
def test_pulse(start, duration, t, expected):
    assert engine.pulse(start, duration, t) == expected


def test_pulse_rejects_negative_duration():
    with pytest.raises(ValueError):
        engine.pulse(0, -1, 0)


@given(st.floats(-1e3, 1e3), st.floats(0, 1e3), st.floats(-1e3, 2e3))
def test_pulse_idempotent(s, d, t):
    p = engine.pulse(s, d, t)
    assert p * p == p


def test_smooth_examples():
    assert engine.smooth(3.0, 3.0, 17.0, 1.0) == 3.0
    assert engine.smooth(1.0, 0.0, 10.0, 1.0) == pytest.approx(0.1)
    with pytest.raises(NonPositiveTau):
        engine.smooth(1.0, 0.0, 0.0, 1.0)


def test_smooth_first_order_response():
    state = 0.0
    for _ in range(1000):
        state = engine.smooth(1.0, state, 10.0, 0.01)
    assert state == pytest.approx(1 - math.exp(-1), abs=1e-3)
    assert state == pytest.approx(oracles.smooth_step_response(10.0, 0.01, 1000), rel=1e-12)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(0.01, 1e3), st.floats(0, 1))
def test_smooth_contraction(x, s, tau, frac):
    dt = max(tau * frac, 1e-9)
    s2 = engine.smooth(x, s, tau, dt)
    assert abs(s2 - x) <= abs(s - x) * (1 + 1e-12) + 1e-9


def test_smoothed_derivative_constant_decays_to_zero():
    d = 0.5
    for _ in range(400):
        d = engine.smoothed_derivative(4.0, 4.0, 1.0, d, 10.0)
    assert abs(d) < 1e-15


def test_smoothed_derivative_ramp():
    d, prev = 0.0, 0.0
    for k in range(1, 200):
        cur = 2.0 * k * 0.1
        d = engine.smoothed_derivative(cur, prev, 0.1, d, 0.1)
        prev = cur
    assert d == pytest.approx(2.0, rel=1e-12)


def test_smoothed_derivative_step_matches_unrolled_recurrence():
    ref = oracles.smoothed_derivative_step(5.0, 1.0, 20)
    d, prev = 0.0, 0.0
    got = []
    for _ in range(20):
        d = engine.smoothed_derivative(1.0, prev, 1.0, d, 5.0)
        prev = 1.0
        got.append(d)
    assert got == pytest.approx(ref, rel=1e-15)
    assert got[0] == pytest.approx(1.0 / 5.0)
    for a, b in zip(got, got[1:]):
        assert b == pytest.approx(a * (1 - 1.0 / 5.0), rel=1e-12)


def test_smoothed_derivative_rejects_bad_tau():
    with pytest.raises(NonPositiveTau):
        engine.smoothed_derivative(1.0, 0.0, 1.0, 0.0, -1.0)


def test_model_smooth_matches_builtin():
    spec = ModelSpec().add(engine.constant("x", 1.0))
    engine.add_smooth(spec, "s", "x", 10.0, 0.0)
    traj = engine.simulate(engine.compile(spec), horizon=30)
    ref, state = [], 0.0
    for _ in range(31):
        ref.append(state)
        state = engine.smooth(1.0, state, 10.0, 1.0)
    assert traj["s"].tolist() == ref


def test_model_smoothed_derivative_matches_builtin():
    spec = ModelSpec().add(engine.auxiliary("x", lambda t: 0.5 * t * t, (engine.TIME,)))
    engine.add_smoothed_derivative(spec, "d", "x", 4.0, 0.0)
    traj = engine.simulate(engine.compile(spec), horizon=20)
    d, prev, ref = 0.0, 0.0, []
    for k in range(21):
        ref.append(d)
        # the state at k+1 uses the backward difference evaluated at k
        d = engine.smoothed_derivative(0.5 * k * k, prev, 1.0, d, 4.0)
        prev = 0.5 * k * k
    assert traj["d"] == pytest.approx(ref, rel=1e-12, abs=1e-15)


def test_add_smooth_rejects_non_positive_literal_tau():
    with pytest.raises(NonPositiveTau):
        engine.add_smooth(ModelSpec(), "s", "x", 0.0, 0.0)


# -- properties ---------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5.0))
def test_euler_error_bounded_by_dt(lam):
    """max |S - e^{-lam t}| on [0,1] stays below C*dt and shrinks linearly."""
    errs = []
    for dt in (0.02, 0.01):
        traj = engine.simulate(decay_model(k=lam, dt_=dt), horizon=1.0)
        errs.append(np.max(np.abs(traj["S"] - np.exp(-lam * traj.times))))
    c = lam * lam  # bound on |S''|/2 * t * e^{...} times slack
    assert errs[0] <= c * 0.02
    assert 1.6 < errs[0] / errs[1] < 2.4


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=5), st.integers(1, 50))
def test_zero_net_flow_stock_bit_identical(levels, horizon):
    spec = ModelSpec().add(engine.auxiliary("noise", lambda t: math.sin(t), (engine.TIME,)))
    for i, lv in enumerate(levels):
        spec.add(engine.flow(f"f{i}", lambda n: n - n, ("noise",)),
                 engine.stock(f"S{i}", lv, inflows=(f"f{i}",)))
    traj = engine.simulate(engine.compile(spec), horizon=horizon)
    for i, lv in enumerate(levels):
        assert np.all(traj[f"S{i}"] == lv)


def test_determinism_bit_identical():
    def run():
        m = decay_model(k=0.3)
        return engine.simulate(m, horizon=50, events=[Event(10, "k", 0.7)]).data
    a, b = run(), run()
    assert a.tobytes() == b.tobytes()
