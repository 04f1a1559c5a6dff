import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wildcurrents.errors import NumericalDegeneracy
from wildcurrents.hull import (
    Decomposition,
    SimplexChart,
    caratheodory_reduce,
    certified_ball_radius,
    interior_U,
    interior_margin_at_zero,
    lmo,
    membership,
    support,
)
from wildcurrents.states import ZERO_STATE, KAtom, StateZ, atom_z7, materialize


def dense_atoms(n):
    th = np.arange(n) * (2 * np.pi / n)
    return np.vstack([atom_z7(th, 1), atom_z7(th, -1)])


def e(i):
    out = np.zeros(7)
    out[i] = 1.0
    return out


def test_lmo_pure_velocity_cost():
    atom, val = lmo(e(3))
    assert atom.theta == pytest.approx(np.pi, abs=1e-12) and atom.s == 1
    assert val == pytest.approx(-1.0, abs=1e-12)


def test_lmo_pure_tracer_cost():
    atom, val = lmo(e(0))
    assert atom.s == -1 and atom.theta == pytest.approx(0.0, abs=1e-12)
    assert val == pytest.approx(-1.0, abs=1e-12)


def test_lmo_stress_cost_picks_smallest_angle():
    atom, val = lmo(e(5))
    assert val == pytest.approx(-0.5, abs=1e-12)
    assert atom.theta == pytest.approx(np.pi / 2, abs=1e-9) and atom.s == 1


def test_lmo_never_worse_than_dense_grid():
    rng = np.random.default_rng(0)
    grid = dense_atoms(1 << 17)
    C = rng.normal(size=(10000, 7))
    for chunk in np.array_split(C, 50):
        brute = (grid @ chunk.T).min(axis=0)
        ours = np.array([lmo(c)[1] for c in chunk])
        assert np.all(ours <= brute + 1e-9)


def test_lmo_against_million_point_grid():
    rng = np.random.default_rng(1)
    grid = dense_atoms(500000)
    for c in rng.normal(size=(40, 7)):
        atom, val = lmo(c)
        assert val <= (grid @ c).min() + 1e-9
        assert val == pytest.approx(materialize(atom).z7 @ c, abs=1e-12)


def test_support_is_negated_lmo():
    c = np.arange(7.0) - 3
    assert support(c) == pytest.approx(-lmo(-c)[1])


def test_lmo_rejects_bad_input():
    with pytest.raises(ValueError):
        lmo(np.ones(6))
    with pytest.raises(ValueError):
        lmo(np.full(7, np.nan))


def test_origin_is_inside_with_symmetric_decomposition():
    res = membership(np.zeros(7))
    assert res.inside and res.distance <= 1e-10
    assert np.linalg.norm(res.decomposition.recombine()) <= 1e-10
    # the reference four-atom combination is a valid decomposition too
    ref = Decomposition(
        (KAtom(0, 1), KAtom(np.pi, 1), KAtom(np.pi / 2, -1), KAtom(1.5 * np.pi, -1)), np.full(4, 0.25)
    )
    assert np.linalg.norm(ref.recombine()) <= 1e-15


def test_scaled_shell_point_is_outside_with_certificate():
    z = materialize(KAtom(0.0, 1)).as_array()[:7].copy()
    z[[0, 3, 4]] *= 1.2
    res = membership(z)
    assert not res.inside and res.gap > 0
    sep = res.separator
    assert sep @ z > support(sep) + res.gap - 1e-12
    brute = (dense_atoms(500000) @ sep).max()
    assert sep @ z > brute


def test_midpoint_of_two_atoms_is_inside():
    z = 0.5 * materialize(KAtom(0, 1)).z7 + 0.5 * materialize(KAtom(np.pi, -1)).z7
    res = membership(z)
    assert res.inside
    assert np.linalg.norm(res.decomposition.recombine() - z) <= 1e-10
    assert len(res.decomposition) <= 8


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_contracted_combinations_are_inside(seed):
    rng = np.random.default_rng(seed)
    n = rng.integers(2, 12)
    w = rng.uniform(0.01, 1.0, n)
    w /= w.sum()
    z = 0.9 * (w @ atom_z7(rng.uniform(0, 2 * np.pi, n), rng.choice([-1, 1], n)))
    res = membership(z)
    assert res.inside
    assert np.linalg.norm(res.decomposition.recombine() - z) <= 1e-9
    assert np.all(res.decomposition.weights >= 0)


def test_caratheodory_leaves_small_decompositions():
    atoms = (KAtom(0, 1), KAtom(np.pi, 1), KAtom(np.pi / 2, -1), KAtom(1.5 * np.pi, -1))
    dec = caratheodory_reduce(atoms, np.full(4, 0.25))
    assert dec.atoms == atoms
    np.testing.assert_allclose(dec.weights, 0.25)


def test_caratheodory_reduces_twenty_atoms():
    rng = np.random.default_rng(3)
    atoms = [KAtom(t, s) for t, s in zip(rng.uniform(0, 2 * np.pi, 20), rng.choice([-1, 1], 20))]
    w = rng.uniform(size=20)
    w /= w.sum()
    before = w @ atom_z7([a.theta for a in atoms], [a.s for a in atoms])
    dec = caratheodory_reduce(atoms, w)
    assert len(dec) <= 8
    assert np.linalg.norm(dec.recombine() - before) <= 1e-9


def test_caratheodory_merges_duplicates():
    dec = caratheodory_reduce([KAtom(1.0, 1), KAtom(1.0, 1), KAtom(2.0, -1)], [0.2, 0.3, 0.5])
    assert len(dec) == 2
    np.testing.assert_allclose(sorted(dec.weights), [0.5, 0.5])


def test_caratheodory_rejects_bad_weights():
    with pytest.raises(ValueError):
        caratheodory_reduce([KAtom(0, 1)], [0.5])


def test_decomposition_validation():
    with pytest.raises(ValueError):
        Decomposition((KAtom(0, 1),), [1.2])
    with pytest.raises(ValueError):
        Decomposition(tuple(KAtom(i, 1) for i in range(9)), np.full(9, 1 / 9))


def test_interior_examples():
    ok, dec = interior_U(ZERO_STATE, 0.05)
    assert ok and dec is not None
    assert not interior_U(materialize(KAtom(0, 1)), 1e-3)[0]
    assert not interior_U(ZERO_STATE.with_q(1.0), 1e-3)[0]
    with pytest.raises(ValueError):
        interior_U(ZERO_STATE, 0.0)


def test_margin_at_origin_is_one_half():
    m = interior_margin_at_zero()
    assert m == pytest.approx(0.5, abs=1e-6)
    assert certified_ball_radius(m) == pytest.approx(m / np.sqrt(7))


def test_simplex_chart_is_a_sound_sufficient_test():
    rng = np.random.default_rng(5)
    w = rng.uniform(0.05, 1, 8)
    z = 0.5 * (w / w.sum()) @ atom_z7(rng.uniform(0, 2 * np.pi, 8), rng.choice([-1, 1], 8))
    dec = membership(z).decomposition
    if len(dec) < 8:
        with pytest.raises(NumericalDegeneracy):
            SimplexChart(dec)
        return
    chart = SimplexChart(dec)
    np.testing.assert_allclose(chart.coordinates(z), dec.weights, atol=1e-8)
    pts = z + 0.05 * rng.normal(size=(200, 7))
    r = chart.inradius_at(pts)
    for p in pts[r > 0]:
        assert membership(p).inside
