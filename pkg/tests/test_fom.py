import numpy as np
import pytest
from scipy.constants import epsilon_0, mu_0
from scipy.integrate import dblquad

from aefie_mor import assemble_fom, assemble_system, discretize_dipole, solve_fom
from aefie_mor.fom import (
    DegenerateGeometryError,
    assemble_inductance,
    assemble_potential,
    assemble_resistance,
    collinear_integral,
    mutual_inductance,
    mutual_potential,
    relative_residual,
    segment_pair_integral,
    self_inductance,
    self_potential,
    system_matrix,
)


def _closed_form(a1, b1, a2, b2):
    """iint 1/(t - s) for s in [a1, b1] below t in [a2, b2]."""
    def F(u):
        return 0.0 if u == 0 else u * np.log(u) - u
    return F(b2 - a1) - F(a2 - a1) - F(b2 - b1) + F(a2 - b1)


# -- kernel integrals --------------------------------------------------------------

@pytest.mark.parametrize("iv", [
    (0.0, 1.0, 1.0, 2.0),      # touching, equal
    (0.0, 1.0, 1.0, 1.5),      # touching, half cell
    (0.0, 0.5, 0.5, 2.0),
    (0.0, 1.0, 3.0, 4.0),      # separated
    (-2.0, -1.5, 0.25, 0.5),
])
def test_collinear_integral_matches_closed_form(iv):
    expect = _closed_form(*iv)
    assert collinear_integral(*iv) == pytest.approx(expect, rel=1e-9)
    # swapping the roles of the two intervals is the same integral
    a1, b1, a2, b2 = iv
    assert collinear_integral(a2, b2, a1, b1) == pytest.approx(expect, rel=1e-9)


def test_collinear_integral_rejects_overlap():
    with pytest.raises(DegenerateGeometryError):
        collinear_integral(0.0, 1.0, 0.5, 1.5)


def test_self_inductance_closed_form():
    assert self_inductance(0.1, 1e-3) == pytest.approx(8.596634731961036e-08, rel=1e-12)


def test_self_inductance_vs_regularized_double_integral():
    a, ell = 1e-3, 0.1
    v, _ = dblquad(lambda t, s: 1 / np.sqrt((s - t) ** 2 + a * a), 0, ell, 0, ell,
                   epsabs=1e-13, epsrel=1e-12)
    oracle = mu_0 / (4 * np.pi) * v
    assert self_inductance(ell, a) == pytest.approx(oracle, rel=1e-2)


def test_far_collinear_mutual_inductance_point_limit():
    ell, d = 0.01, 1.0
    seg_a = ([0, 0, 0], [0, 0, ell])
    seg_b = ([0, 0, d], [0, 0, d + ell])
    point = mu_0 / (4 * np.pi) * ell ** 2 / d
    assert mutual_inductance(seg_a, seg_b) == pytest.approx(point, rel=1e-2)


def test_far_parallel_offset_mutual_uses_tensor_rule():
    # parallel but not collinear: point limit still holds
    ell, d = 0.01, 1.0
    seg_a = ([0, 0, 0], [0, 0, ell])
    seg_b = ([d, 0, 0], [d, 0, ell])
    point = mu_0 / (4 * np.pi) * ell ** 2 / d
    assert mutual_inductance(seg_a, seg_b) == pytest.approx(point, rel=1e-2)


def test_perpendicular_segments_decouple():
    seg_a = ([0, 0, 0], [0, 0, 0.1])
    seg_b = ([0.5, 0, 0], [0.6, 0, 0])
    assert mutual_inductance(seg_a, seg_b) == 0.0


def test_far_potential_point_limit():
    ell, d = 0.01, 2.0
    p = mutual_potential(([0, 0, 0], [0, 0, ell]), ([0, 0, d], [0, 0, d + ell]))
    assert p == pytest.approx(1 / (4 * np.pi * epsilon_0 * d), rel=1e-2)


def test_coincident_segments_rejected():
    seg = ([0, 0, 0], [0, 0, 1])
    with pytest.raises(DegenerateGeometryError):
        segment_pair_integral(*seg, *seg)


def test_self_potential_decreases_with_cell_length():
    # an end cell is half as long as an interior cell, so its self term is larger
    m = discretize_dipole(1.0, 1e-4, 0.0, 20)
    P = assemble_potential(m)
    assert P[0, 0] > P[1, 1]
    assert P[-1, -1] > P[1, 1]
    assert self_potential(0.025, 1e-4) > self_potential(0.05, 1e-4)


def test_mutual_entries_match_brute_force_quadrature():
    m = discretize_dipole(1.0, 1e-4, 0.0, 6)
    L = assemble_inductance(m)
    P = assemble_potential(m)
    z = m.axis_nodes
    cells = m.charge_cells
    for i, j in [(0, 1), (0, 3), (2, 5)]:
        v, _ = dblquad(lambda t, s: 1 / abs(t - s), z[i], z[i + 1], z[j], z[j + 1],
                       epsabs=0, epsrel=1e-11)
        assert L[i, j] == pytest.approx(mu_0 / (4 * np.pi) * v, rel=1e-6)
    for i, j in [(0, 1), (1, 2), (0, 6)]:
        (a1, b1), (a2, b2) = cells[i], cells[j]
        v, _ = dblquad(lambda t, s: 1 / abs(t - s), a1, b1, a2, b2, epsabs=0, epsrel=1e-11)
        expect = v / (4 * np.pi * epsilon_0 * (b1 - a1) * (b2 - a2))
        assert P[i, j] == pytest.approx(expect, rel=1e-6)


# -- assembled matrices -------------------------------------------------------------

def test_resistance_example():
    with pytest.warns(UserWarning):
        m = discretize_dipole(1.0, 1e-3, 1.68e-8, 499)
    R = assemble_resistance(m)
    ell = m.segment_lengths[0]
    assert ell == pytest.approx(2.004e-3, rel=1e-3)
    expect = 1.68e-8 * ell / (np.pi * 1e-6)
    assert R[0, 0] == pytest.approx(expect, rel=1e-14)
    assert 1.68e-8 * 2.004e-3 / (np.pi * 1e-6) == pytest.approx(1.0716e-5, rel=1e-4)
    np.testing.assert_allclose(np.diag(R), R[0, 0], rtol=1e-12)
    assert np.count_nonzero(R - np.diag(np.diag(R))) == 0


def test_resistance_pec():
    m = discretize_dipole(1.0, 1e-3, 0.0, 5)
    assert not np.any(assemble_resistance(m))


def test_symmetry_exact(default_fom):
    assert np.abs(default_fom.L - default_fom.L.T).max() == 0
    assert np.abs(default_fom.P - default_fom.P.T).max() == 0


@pytest.mark.parametrize("assemble", [assemble_inductance, assemble_potential])
def test_reciprocity_of_quadrature(default_model, assemble):
    M = assemble(default_model, symmetrize=False)
    off = ~np.eye(M.shape[0], dtype=bool)
    assert (np.abs(M - M.T)[off] / np.abs(M)[off]).max() <= 1e-12


@pytest.mark.parametrize("assemble", [assemble_inductance, assemble_potential])
def test_quadrature_converged(default_model, assemble):
    a = assemble(default_model, order=8)
    b = assemble(default_model, order=16)
    off = ~np.eye(a.shape[0], dtype=bool)
    assert (np.abs(a - b)[off] / np.abs(b)[off]).max() < 1e-3


@pytest.mark.parametrize("n", [3, 10, 25, 50])
def test_positive_definite_small_models(n):
    fm = assemble_fom(discretize_dipole(1.0, 1e-4, 1.68e-8, n))
    assert np.linalg.eigvalsh(fm.L).min() > 0
    assert np.linalg.eigvalsh(fm.P).min() > 0
    assert np.all(np.diag(fm.R) > 0)


# -- system ----------------------------------------------------------------------

def test_system_blocks(small_fom, small_model):
    fm = small_fom
    ns, nn = fm.n_currents, fm.n_potentials
    w = 2 * np.pi * 3.7e6
    inst = assemble_system(fm, w, small_model.feed_segment, 1.0)
    A = inst.A
    tau = fm.time_unit
    np.testing.assert_allclose(A[:ns, :ns], fm.R + 1j * w * fm.L, rtol=1e-14)
    np.testing.assert_array_equal(A[:ns, ns:], fm.S.T)
    np.testing.assert_allclose(A[ns:, :ns], tau * (fm.P @ fm.S), rtol=1e-14)
    np.testing.assert_allclose(A[ns:, ns:], -1j * w * tau * np.eye(nn), rtol=1e-15)
    assert np.count_nonzero(inst.b) == 1
    assert inst.b[small_model.feed_segment] == 1.0


def test_si_time_unit_gives_literal_blocks(small_model):
    fm = assemble_fom(small_model, time_unit=1.0)
    ns = fm.n_currents
    w = 1234.5
    A = system_matrix(fm, w)
    np.testing.assert_allclose(A[:ns, :ns], fm.R + 1j * w * fm.L, rtol=1e-15)
    np.testing.assert_allclose(A[ns:, :ns], fm.P @ fm.S, rtol=1e-15)
    np.testing.assert_array_equal(A[ns:, ns:], -1j * w * np.eye(fm.n_potentials))


def test_system_at_dc(small_fom, small_model):
    fm = small_fom
    ns = fm.n_currents
    A = assemble_system(fm, 0.0, small_model.feed_segment).A
    np.testing.assert_array_equal(A[:ns, :ns], fm.R)
    np.testing.assert_array_equal(A[ns:, ns:], 0)


def test_system_rejects_negative_omega(small_fom):
    with pytest.raises(ValueError):
        assemble_system(small_fom, -1.0, 0)


def test_default_system_size(default_fom, default_model):
    inst = assemble_system(default_fom, 1.0, default_model.feed_segment)
    assert inst.A.shape == (999, 999)


def test_apply_matches_matrix(small_fom, rng):
    w = np.array([0.6, 6e3, 6e8])
    X = rng.standard_normal((small_fom.size, 3)) + 1j * rng.standard_normal((small_fom.size, 3))
    direct = np.column_stack([system_matrix(small_fom, w[k]) @ X[:, k] for k in range(3)])
    np.testing.assert_allclose(small_fom.apply(X, w), direct, rtol=1e-12, atol=1e-12 * np.abs(direct).max())


# -- solve -----------------------------------------------------------------------

def test_zero_excitation(small_fom):
    x = solve_fom(assemble_system(small_fom, 10.0, 4, 0.0))
    assert not np.any(x)


def test_linearity(small_fom, small_model):
    w = 2 * np.pi * 1e5
    x1 = solve_fom(assemble_system(small_fom, w, small_model.feed_segment, 1.0))
    x2 = solve_fom(assemble_system(small_fom, w, small_model.feed_segment, 2.0))
    np.testing.assert_allclose(x2, 2 * x1, rtol=1e-10)


def test_default_residual_at_1mhz(default_fom, default_model):
    inst = assemble_system(default_fom, 2 * np.pi * 1e6, default_model.feed_segment)
    x = solve_fom(inst)
    assert relative_residual(inst.A, x, inst.b) <= 1e-10


def test_pec_singular_at_dc():
    from aefie_mor.fom import FomSolveError

    fm = assemble_fom(discretize_dipole(1.0, 1e-4, 0.0, 6))
    with pytest.raises(FomSolveError) as info:
        solve_fom(assemble_system(fm, 0.0, 2))
    assert info.value.omega == 0.0


def test_export_roundtrip(tmp_path, small_fom, small_model):
    import scipy.io

    from aefie_mor.fom import export_matrix_market

    paths = export_matrix_market(small_fom, tmp_path, [1e6], small_model.feed_segment)
    names = sorted(p.name for p in paths)
    assert names == ["A_0.mtx", "L.mtx", "P.mtx", "R.mtx", "S.mtx", "b_0.mtx"]
    np.testing.assert_array_equal(scipy.io.mmread(tmp_path / "L.mtx"), small_fom.L)
    np.testing.assert_array_equal(scipy.io.mmread(tmp_path / "P.mtx"), small_fom.P)
    np.testing.assert_array_equal(scipy.io.mmread(tmp_path / "S.mtx").toarray(), small_fom.S)
    np.testing.assert_array_equal(scipy.io.mmread(tmp_path / "R.mtx").toarray(), small_fom.R)
    A = scipy.io.mmread(tmp_path / "A_0.mtx")
    np.testing.assert_array_equal(A, system_matrix(small_fom, 2 * np.pi * 1e6))
    assert (tmp_path / "A_0.mtx").read_text().startswith("%%MatrixMarket matrix array complex general")
