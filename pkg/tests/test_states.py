import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wildcurrents.states import (
    IQ,
    ZERO_STATE,
    Domain,
    KAtom,
    StateZ,
    assemble_V,
    assemble_V_array,
    atom_z7,
    constitutive_residual,
    constitutive_residual_array,
    disassemble_V,
    materialize,
)

finite = st.floats(-10, 10, allow_nan=False)


def test_zero_state_assembles_to_zero_matrix():
    assert np.array_equal(assemble_V(ZERO_STATE), np.zeros((4, 3)))


def test_assemble_atom_theta_zero_plus():
    V = assemble_V(materialize(KAtom(0.0, 1)))
    expected = [[0.5, 0, 1], [0, -0.5, 0], [1, 0, 0], [1, 0, 1]]
    np.testing.assert_allclose(V, expected, atol=1e-15)


def test_assemble_atom_theta_half_pi_minus():
    V = assemble_V(materialize(KAtom(np.pi / 2, -1)))
    expected = [[-0.5, 0, 0], [0, 0.5, 1], [0, 1, 0], [0, -1, -1]]
    np.testing.assert_allclose(V, expected, atol=1e-15)


def test_assemble_layout_with_pressure():
    z = StateZ(b=0.3, w=(0.1, -0.2), v=(0.4, 0.5), m11=0.25, m12=-0.1, q=0.7)
    V = assemble_V(z)
    np.testing.assert_allclose(V[:2, :2], z.M + 0.7 * np.eye(2))
    assert V[2, 2] == 0.0
    np.testing.assert_array_equal(V[:3, :3], V[:3, :3].T)
    np.testing.assert_allclose(V[3], [0.1, -0.2, 0.3])


def test_materialize_examples():
    z = materialize(KAtom(0.0, 1))
    assert z.b == 1 and z.w == (1, 0) and z.v == (1, 0)
    np.testing.assert_allclose(z.M, np.diag([0.5, -0.5]))
    z = materialize(KAtom(np.pi, 1))
    np.testing.assert_allclose(z.v, (-1, 0), atol=1e-15)
    np.testing.assert_allclose(z.w, (-1, 0), atol=1e-15)
    np.testing.assert_allclose(z.M, np.diag([0.5, -0.5]), atol=1e-15)
    z = materialize(KAtom(0.0, -1))
    assert z.b == -1 and z.w == (-1, 0) and z.v == (1, 0)


@given(st.floats(0, 2 * np.pi), st.sampled_from([-1, 1]), st.floats(-1, 1))
def test_atoms_satisfy_constitutive_relations(theta, s, q):
    res = constitutive_residual(materialize(KAtom(theta, s), q))
    np.testing.assert_allclose(res, 0.0, atol=1e-14)


def test_constitutive_residual_examples():
    assert constitutive_residual(ZERO_STATE) == pytest.approx((0, 0, 2))
    z = StateZ(b=1.0, v=(1.0, 0.0))
    assert constitutive_residual(z) == pytest.approx((1 / np.sqrt(2), 1.0, 0.0))


def test_atom_chart_matches_materialize():
    th = np.linspace(0, 2 * np.pi, 17)
    for s in (-1, 1):
        pts = atom_z7(th, s)
        for t, p in zip(th, pts):
            np.testing.assert_allclose(p, materialize(KAtom(t, s)).z7, atol=1e-15)


def test_trace_is_projected_out():
    z = StateZ.from_parts(M=[[2.0, 1.0], [3.0, 0.0]])
    assert np.trace(z.M) == 0.0
    assert z.m11 == 1.0 and z.m12 == 2.0


def test_round_trip_many_random_states():
    rng = np.random.default_rng(0)
    S = rng.normal(size=(100000, 8))
    back = disassemble_V(assemble_V_array(S))
    assert np.max(np.abs(back - S)) <= 1e-14


@settings(max_examples=50)
@given(st.lists(finite, min_size=8, max_size=8), st.floats(0, 2 * np.pi))
def test_residual_rotation_invariance(a, phi):
    z = StateZ.from_array(np.array(a))
    R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    rz = StateZ.from_parts(z.b, R @ z.w, R @ z.v, R @ z.M @ R.T, z.q)
    np.testing.assert_allclose(constitutive_residual(rz), constitutive_residual(z), rtol=1e-12, atol=1e-11)


def test_residual_array_matches_scalar():
    rng = np.random.default_rng(1)
    S = rng.normal(size=(20, 8))
    arr = np.stack(constitutive_residual_array(S), -1)
    for s, row in zip(S, arr):
        np.testing.assert_allclose(row, constitutive_residual(StateZ.from_array(s)))


def test_state_arithmetic_and_validation():
    a = materialize(KAtom(0.3, 1), 0.2)
    b = materialize(KAtom(1.1, -1), -0.4)
    np.testing.assert_allclose((a - b + b).as_array(), a.as_array(), atol=1e-15)
    np.testing.assert_allclose((2 * a).as_array(), 2 * a.as_array())
    assert (-a).as_array()[IQ] == -0.2
    with pytest.raises(ValueError):
        StateZ(b=np.nan)
    with pytest.raises(ValueError):
        KAtom(0.0, 0)
    assert KAtom(-np.pi / 2, 1).theta == pytest.approx(1.5 * np.pi)


def test_domain_measures_and_containment():
    ball = Domain.ball(2.0)
    assert ball.measure == pytest.approx(32 * np.pi / 3)
    box = Domain.box((1.0, 2.0, 0.5))
    assert box.measure == pytest.approx(8.0)
    assert ball.contains([[1.9, 0, 0]])[0] and not ball.contains([[2.1, 0, 0]])[0]
    assert box.contains_ball([0, 0, 0], 0.5) and not box.contains_ball([0, 0, 0.1], 0.5)
    with pytest.raises(ValueError):
        Domain.ball(0.0)
    with pytest.raises(ValueError):
        Domain("torus")
