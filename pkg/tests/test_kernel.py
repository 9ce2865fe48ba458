import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from t2primesim.kernel import (FieldStep, field_rotation, relaxation_factors, rot3,
                               split_rotation, step_m4, step_m7, transition7)
from t2primesim.model import TissueParams

TIS = TissueParams(1.0, 0.8, 0.07)
NORELAX = TissueParams(1.0, math.inf, math.inf)

unit = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3)
angle = st.floats(-10, 10)


def test_rot3_zero_angle_is_identity():
    assert np.array_equal(rot3((0.0, 0.0, 1.0), 0.0), np.eye(3))


def test_rot3_z_quarter_turn():
    np.testing.assert_allclose(rot3((0, 0, 1), math.pi / 2) @ [1, 0, 0], [0, 1, 0], atol=1e-15)


@given(unit, angle)
def test_rot3_orthonormal(axis, theta):
    u = np.asarray(axis) / np.linalg.norm(axis)
    R = rot3(u, theta)
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(R) - 1.0) < 1e-12
    v = np.array([0.3, -0.7, 0.2])
    assert abs(np.linalg.norm(R @ v) - np.linalg.norm(v)) < 1e-12


def test_zero_field_rotation_is_identity():
    assert np.array_equal(field_rotation((0.0, 0.0, 0.0), 1e-6), np.eye(3))


def test_field_step_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        FieldStep(0, 0, 0, 0.0)


def test_split_rotation_no_b1():
    f = FieldStep(0.0, 0.0, 1234.0, 1e-6)
    rxy, rz, _ = split_rotation(f)
    assert np.array_equal(rxy, np.eye(3))
    np.testing.assert_allclose(rz, rot3((0, 0, 1), -1234.0 * 1e-6), atol=1e-15)


def test_split_rotation_no_bz():
    dt = 1e-6
    _, rz, drz = split_rotation(FieldStep(100.0, 50.0, 0.0, dt))
    assert np.array_equal(rz, np.eye(3))
    np.testing.assert_allclose(drz, [[0, dt, 0], [-dt, 0, 0], [0, 0, 0]], atol=0)


def _split_error(rng, bmax, dt, n=200):
    worst = 0.0
    for _ in range(n):
        b = rng.uniform(-1, 1, 3)
        b *= rng.uniform(0, bmax) / np.linalg.norm(b)
        rxy, rz, _ = split_rotation(FieldStep(b[0], b[1], b[2], dt))
        worst = max(worst, np.abs(rxy @ rz - field_rotation(b, dt)).max())
    return worst


@pytest.mark.xfail(strict=True, reason="commutator error is |b_xy||b_z|dt^2/2, about 2e-3 "
                   "at 2pi*10 kHz and 1 us; the 1e-8 bound does not hold (see ledger)")
def test_split_matches_unsplit_stated_bound(rng):
    assert _split_error(rng, 2 * math.pi * 1e4, 1e-6) < 1e-8


def test_split_error_is_second_order(rng):
    bmax = 2 * math.pi * 1e4
    e1 = _split_error(np.random.default_rng(3), bmax, 1e-6)
    e2 = _split_error(np.random.default_rng(3), bmax, 0.5e-6)
    assert 3.5 < e1 / e2 < 4.5
    assert e1 <= bmax ** 2 * 1e-12 / 2


def test_relaxation_factors():
    f = relaxation_factors(TIS, 1e-3)
    assert f.e1 == math.exp(-1e-3 / 0.8) and f.e2 == math.exp(-1e-3 / 0.07)
    assert f.recovery == 1.0 - f.e1


def test_step_m4_recovery_half():
    t = TissueParams(1.0, 0.5, 0.1)
    out = step_m4([0, 0, 0, 1], FieldStep(0, 0, 0, 0.5 * math.log(2)), t)
    assert abs(out[2] - 0.5) < 1e-15 and out[3] == 1.0


def test_step_m4_bz_only():
    dt, bz = 1e-4, 3000.0
    out = step_m4([1, 0, 0, 1], FieldStep(0, 0, bz, dt), TIS)
    e2 = math.exp(-dt / TIS.t2)
    th = -bz * dt
    e1 = math.exp(-dt / TIS.t1)
    np.testing.assert_allclose(out, [e2 * math.cos(th), e2 * math.sin(th), 1 - e1, 1],
                               atol=1e-15)


def test_step_m4_hard_pulse_about_x():
    dt = 1e-5
    out = step_m4([0, 0, 1, 1], FieldStep(math.pi / 2 / dt, 0, 0, dt), TIS)
    e2 = math.exp(-dt / TIS.t2)
    # rotation about +x by -pi/2 takes z to +y
    np.testing.assert_allclose(out[:3], [0, e2, 1 - math.exp(-dt / TIS.t1)], atol=1e-12)


def test_step_m7_derivative_accrual():
    dt = 1e-6
    out = step_m7([1, 0, 0, 1, 0, 0, 0], FieldStep(0, 0, 0, dt), TIS)
    e2 = math.exp(-dt / TIS.t2)
    np.testing.assert_allclose(out[4:], [0, -dt * e2, 0], atol=1e-20)


def test_step_m7_zero_state():
    out = step_m7([0, 0, 0, 1, 0, 0, 0], FieldStep(10, 20, 30, 1e-3), TIS)
    assert np.array_equal(out[4:], [0, 0, 0])
    assert out[2] == pytest.approx(1 - math.exp(-1e-3 / TIS.t1), rel=1e-12)
    assert out[3] == 1.0


def test_step_m7_top_equals_step_m4(rng):
    s = np.r_[rng.normal(size=3), 1.0, rng.normal(size=3) * 1e-3]
    f = FieldStep(*rng.normal(size=3) * 1e4, 1e-6)
    out = step_m7(s, f, TIS)
    assert np.array_equal(out[:4], step_m4(s[:4], f, TIS))
    assert out[3] == 1.0


def test_transition7_block_structure(rng):
    T = transition7(FieldStep(*rng.normal(size=3) * 1e4, 1e-6), TIS)
    assert np.all(T[:4, 4:] == 0)
    assert np.array_equal(T[3], [0, 0, 0, 1, 0, 0, 0])


def test_single_step_finite_difference(rng):
    d = 1e-4
    for _ in range(20):
        s = np.r_[rng.normal(size=3), 1.0, rng.normal(size=3) * 1e-4]
        b = rng.normal(size=3) * 1e4
        dt = 1e-6
        out = step_m7(s, FieldStep(b[0], b[1], b[2], dt), TIS)
        # the derivative block of the input also needs to be carried: perturb the state linearly
        p = step_m4(np.r_[s[:3] + d * s[4:], 1.0], FieldStep(b[0], b[1], b[2] + d, dt), TIS)
        m = step_m4(np.r_[s[:3] - d * s[4:], 1.0], FieldStep(b[0], b[1], b[2] - d, dt), TIS)
        fd = (p[:3] - m[:3]) / (2 * d)
        np.testing.assert_allclose(out[4:], fd, rtol=1e-6, atol=1e-9 * np.abs(fd).max())


def test_norm_bounded_from_equilibrium(rng):
    s = np.array([0, 0, 1, 1, 0, 0, 0], float)
    for _ in range(1000):
        s = step_m7(s, FieldStep(*rng.normal(size=3) * 2e4, 1e-6), TIS)
        assert np.linalg.norm(s[:3]) <= 1 + 1e-9
        assert s[3] == 1.0
