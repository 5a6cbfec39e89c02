import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from barotrack.baro_fusion import (
    BaroModel, FilterParams, HeightFilter, KfState, barometric_formula_height, fuse_stream,
    height_to_pressure, kf_predict, kf_update, pressure_to_height,
)
from barotrack.errors import NonMonotonicTime

DT = 1.0 / 30.0


def reference_filter(zs, accs, dt, q, r, h0, p0):
    """Textbook predict/update with the short-form covariance update."""
    x = np.array([h0, 0.0])
    p = np.diag(p0)
    f = np.array([[1, dt], [0, 1]])
    g = np.array([0.5 * dt * dt, dt])
    out = []
    for k, (z, a) in enumerate(zip(zs, accs)):
        if k > 0:
            x = f @ x + g * a
            p = f @ p @ f.T + q * np.outer(g, g)
        s = p[0, 0] + r
        kk = p[:, 0] / s
        x = x + kk * (z - x[0])
        p = p - np.outer(kk, p[0, :])
        out.append(x[0])
    return np.array(out)


def test_pressure_height_examples():
    m = BaroModel(8.43, 0.0, 1013.25)
    assert pressure_to_height(1013.25, m) == 0.0
    assert pressure_to_height(1013.13, m) == pytest.approx(8.43 * 0.12, abs=1e-9)
    assert pressure_to_height(1013.13, m) == pytest.approx(1.01, abs=0.01)
    assert pressure_to_height(1013.25, BaroModel(8.43, 2.5, 1013.25)) == 2.5
    with pytest.raises(ValueError):
        pressure_to_height(0.0, m)


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.floats(7, 10), st.floats(-5, 5), st.floats(950, 1050))
def test_height_pressure_inverse(h, scale, bias, ref):
    m = BaroModel(scale, bias, ref)
    assert pressure_to_height(height_to_pressure(h, m), m) == pytest.approx(h, abs=1e-9)


def test_linear_model_vs_barometric_formula():
    # local slope of the standard atmosphere by central difference
    def slope(p):
        return (barometric_formula_height(p - 0.01) - barometric_formula_height(p + 0.01)) / 0.02

    assert slope(1013.25) == pytest.approx(8.33, abs=0.01)
    # the default scale is that slope a little above sea level (~998 hPa), within 1.5% at sea level
    assert slope(997.8) == pytest.approx(8.43, abs=0.01)
    assert abs(slope(1013.25) / 8.43 - 1) < 0.015
    # with the local slope the linear model is within 1 cm over a few metres of climb
    p0 = 1013.25
    ps = p0 - np.linspace(0, 0.4, 20)
    exact = barometric_formula_height(ps, p0)
    lin = pressure_to_height(ps, BaroModel(slope(p0 - 0.2), 0.0, p0))
    assert np.abs(exact - lin).max() < 0.01


def test_predict_examples():
    s = KfState.initial(0.0)
    assert kf_predict(s, 0.0, DT).height == 0.0
    s1 = KfState.initial(0.0, velocity=1.0)
    assert kf_predict(s1, 0.0, DT).height == pytest.approx(1 / 30)
    s2 = kf_predict(KfState.initial(0.0), 9.0, 0.1)
    assert s2.x[0] == pytest.approx(0.045)
    assert s2.x[1] == pytest.approx(0.9)
    with pytest.raises(ValueError):
        kf_predict(s, 0.0, 0.0)


def test_update_limits():
    s = KfState(np.array([0.3, 0.0]), np.zeros((2, 2)), 0.5, 0.0025)
    new, out = kf_update(s, 5.0)
    assert out.h == pytest.approx(0.3)
    s = KfState(np.array([0.3, 0.0]), np.eye(2), 0.5, 1e-15)
    new, out = kf_update(s, 5.0)
    assert out.h == pytest.approx(5.0, abs=1e-9)


def test_constant_truth_convergence():
    s = KfState.initial(0.0)
    for _ in range(300):
        s = kf_predict(s, 0.0, DT)
        s, out = kf_update(s, 1.0)
    assert abs(out.h - 1.0) < 0.01


def test_joseph_form_matches_textbook(rng):
    n = 400
    t = np.arange(n) * DT
    h = 0.5 * np.sin(t)
    a = -0.5 * np.sin(t)
    z = h + 0.05 * rng.standard_normal(n)
    params = FilterParams()
    m = BaroModel()
    frames = [(ti, height_to_pressure(zi, m), ai) for ti, zi, ai in zip(t, z, a)]
    ours = np.array([f.h for f in fuse_stream(frames, m, params, init_height=0.0)])
    ref = reference_filter(z, a, DT, params.q_accel, params.r_meas, 0.0,
                           (params.p0_height, params.p0_velocity))
    assert np.abs(ours - ref).max() < 1e-8


def test_sinusoid_noiseless_rmse():
    t = np.arange(600) * DT
    h = 0.4 * np.sin(1.3 * t) + 0.2 * np.sin(0.4 * t)
    a = -0.4 * 1.69 * np.sin(1.3 * t) - 0.2 * 0.16 * np.sin(0.4 * t)
    m = BaroModel(8.3, 0.7, 1001.0)
    out = fuse_stream(zip(t, height_to_pressure(h, m), a), m)
    rmse = np.sqrt(np.mean((np.array([o.h for o in out]) - h) ** 2))
    assert rmse < 0.02


def test_noise_variance_reduction(rng):
    n = 300
    t = np.arange(n) * DT
    h = np.full(n, 1.2)
    z = h + 0.05 * rng.standard_normal(n)
    m = BaroModel()
    out = np.array([o.h for o in fuse_stream(zip(t, height_to_pressure(z, m), np.zeros(n)), m)])
    assert np.var(out[30:]) < 0.7 * np.var(z[30:])
    assert np.sqrt(np.mean((out - h) ** 2)) < np.sqrt(np.mean((z - h) ** 2))


def test_constant_input_constant_output():
    m = BaroModel()
    out = fuse_stream([(k * DT, 1010.0, 0.0) for k in range(50)], m)
    hs = np.array([o.h for o in out])
    assert np.allclose(hs, hs[0], atol=1e-12)


def test_nonmonotonic_time():
    f = HeightFilter(BaroModel())
    f.step(1.0, 1000.0, 0.0)
    with pytest.raises(NonMonotonicTime):
        f.step(0.5, 1000.0, 0.0)


def test_gap_bridged_by_multiple_predicts():
    # a 5-frame gap with constant acceleration matches 5 explicit predicts
    params = FilterParams()
    f = HeightFilter(BaroModel(), params)
    f.step(0.0, 1013.25, 0.0)
    s = f.state
    f.step(5 * DT, 1013.25, 1.0)
    ref = s
    for _ in range(5):
        ref = kf_predict(ref, 1.0, DT)
    ref, out = kf_update(ref, 0.0)
    assert np.allclose(f.state.x, ref.x)
    assert np.allclose(f.state.P, ref.P)


def test_gravity_subtraction_flag():
    m = BaroModel()
    raw = fuse_stream([(k * DT, 1013.25, 9.80665) for k in range(30)], m,
                      FilterParams(subtract_gravity=True))
    assert abs(raw[-1].h) < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(1e-3, 0.5), st.floats(-20, 20), st.floats(-3, 3)),
                min_size=1, max_size=60),
       st.floats(1e-3, 5), st.floats(1e-5, 1))
def test_covariance_stays_psd(steps, q, r):
    s = KfState(np.zeros(2), np.eye(2), q, r)
    for dt, a, z in steps:
        s = kf_predict(s, a, dt)
        s, _ = kf_update(s, z)
        assert np.allclose(s.P, s.P.T)
        assert np.linalg.eigvalsh(s.P).min() >= -1e-9


def test_deterministic(rng):
    frames = [(k * DT, 1000 + 0.01 * rng.standard_normal(), rng.standard_normal()) for k in range(100)]
    a = [o.h for o in fuse_stream(frames, BaroModel())]
    b = [o.h for o in fuse_stream(frames, BaroModel())]
    assert a == b
