import numpy as np
import pytest

from wildcurrents.errors import AllAtomsCoincident, DegenerateDenominator, ZeroMatrix
from wildcurrents.hull import Decomposition, membership
from wildcurrents.states import ZERO_STATE, KAtom, StateZ, assemble_V, atom_z7, materialize
from wildcurrents.wavecone import (
    CONE_TOL,
    LOWER_BOUND_C,
    lambda_hull_spot_check,
    lambda_residual,
    oscillation_direction,
    xi_for_segment,
)

H1 = materialize(KAtom(0.0, 1))
H2 = materialize(KAtom(np.pi / 2, -1))


def parallel(a, b, tol=1e-8):
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    return min(np.linalg.norm(a - b), np.linalg.norm(a + b)) <= tol


def test_reference_pair_certificate():
    cert = lambda_residual(0.5 * (H2 - H1))
    assert cert.residual <= 1e-12 and cert.in_cone
    assert parallel(cert.xi, np.array([1.0, 1.0, -1.0]))
    assert np.linalg.norm(cert.xi) == pytest.approx(1.0)


def test_generic_state_is_not_in_cone():
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert lambda_residual(StateZ.from_array(rng.normal(size=8))).residual > 1e-4


def test_identical_atoms_give_zero_matrix():
    with pytest.raises(ZeroMatrix):
        lambda_residual(H1 - H1)
    with pytest.raises(ZeroMatrix):
        lambda_hull_spot_check(KAtom(1.0, 1), KAtom(1.0, 1))


def test_xi_formula_examples():
    np.testing.assert_allclose(xi_for_segment(H1, H2), [1.0, 1.0, -1.0], atol=1e-15)
    xi = xi_for_segment(H1, materialize(KAtom(np.pi, 1)))
    np.testing.assert_allclose(xi, [0.0, 1.0, 0.0], atol=1e-15)
    with pytest.raises(DegenerateDenominator):
        xi_for_segment(materialize(KAtom(0.4, 1)), materialize(KAtom(-0.4, -1)))


def test_xi_formula_rows_annihilate():
    V = assemble_V(0.5 * (H2 - H1))
    np.testing.assert_allclose(V @ np.array([1.0, 1.0, -1.0]), 0.0, atol=1e-15)


def test_xi_formula_agrees_with_svd():
    rng = np.random.default_rng(1)
    done = 0
    while done < 500:
        a = KAtom(rng.uniform(0, 2 * np.pi), int(rng.choice([-1, 1])))
        b = KAtom(rng.uniform(0, 2 * np.pi), int(rng.choice([-1, 1])))
        ha, hb = materialize(a), materialize(b)
        if abs(hb.v[0] - ha.v[0]) < 1e-3:
            continue
        lam = rng.uniform(0.05, 1)
        zbar = 0.5 * lam * (hb - ha)
        xi = xi_for_segment(ha, hb)
        V = assemble_V(zbar)
        assert np.linalg.norm(V @ xi) <= 1e-10 * np.linalg.norm(V) * np.linalg.norm(xi)
        assert parallel(xi, lambda_residual(zbar).xi, 1e-8)
        done += 1


def test_spot_checks():
    assert lambda_hull_spot_check(KAtom(0, 1), KAtom(np.pi / 2, -1))
    assert lambda_hull_spot_check(KAtom(0, 1), KAtom(np.pi, 1))
    rng = np.random.default_rng(2)
    for _ in range(10000 // 20):
        a = KAtom(rng.uniform(0, 2 * np.pi), int(rng.choice([-1, 1])))
        b = KAtom(rng.uniform(0, 2 * np.pi), int(rng.choice([-1, 1])))
        assert lambda_hull_spot_check(a, b)


def test_direction_at_origin():
    dec = Decomposition(
        (KAtom(0, 1), KAtom(np.pi, 1), KAtom(np.pi / 2, -1), KAtom(1.5 * np.pi, -1)), np.full(4, 0.25)
    )
    d = oscillation_direction(ZERO_STATE, dec, delta=0.1)
    assert d.zbar.q == 0.0
    amp = np.hypot(np.hypot(*d.zbar.v), d.zbar.b)
    assert amp == pytest.approx(np.sqrt(6) / 8)
    assert amp >= LOWER_BOUND_C * 2
    assert d.lower_bound_ok and d.certificate.in_cone and d.segment_ok


def test_direction_two_atom_example():
    atoms = (KAtom(0, 1), KAtom(np.pi, 1))
    dec = Decomposition(atoms, [0.6, 0.4])
    z = StateZ.from_array(np.append(dec.recombine(), 0.0))
    d = oscillation_direction(z, dec)
    np.testing.assert_allclose(d.zbar.v, (-0.4, 0.0), atol=1e-15)
    assert d.certificate.residual <= CONE_TOL


def test_single_atom_decomposition_is_rejected():
    with pytest.raises(AllAtomsCoincident):
        oscillation_direction(H1, Decomposition((KAtom(0, 1),), [1.0]))


def test_uniform_weight_rescaling_keeps_direction():
    rng = np.random.default_rng(4)
    w = rng.uniform(0.1, 1, 6)
    w /= w.sum()
    z7 = 0.8 * w @ atom_z7(rng.uniform(0, 2 * np.pi, 6), rng.choice([-1, 1], 6))
    dec = membership(z7).decomposition
    z = StateZ.from_array(np.append(z7, 0.0))
    d1 = oscillation_direction(z, dec)
    d2 = oscillation_direction(z, Decomposition(dec.atoms, (3 * dec.weights) / (3 * dec.weights).sum()))
    assert d1.pair == d2.pair
    np.testing.assert_allclose(d1.zbar.as_array(), d2.zbar.as_array(), atol=1e-15)


def test_random_interior_states_meet_all_three_guarantees():
    rng = np.random.default_rng(5)
    for _ in range(60):
        n = rng.integers(2, 9)
        w = rng.uniform(0.01, 1, n)
        w /= w.sum()
        z7 = 0.9 * w @ atom_z7(rng.uniform(0, 2 * np.pi, n), rng.choice([-1, 1], n))
        z = StateZ.from_array(np.append(z7, 0.0))
        d = oscillation_direction(z, membership(z7).decomposition, delta=0.02)
        deficit = 2 - (z.v[0] ** 2 + z.v[1] ** 2 + z.b**2)
        assert d.certificate.residual <= 1e-8
        assert np.hypot(np.hypot(*d.zbar.v), d.zbar.b) >= LOWER_BOUND_C * deficit - 1e-9
