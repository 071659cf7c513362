import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from displat.errors import EmptySupport, WindowTooSmall
from displat.lattice import (BILAPLACIAN_STENCIL, CompactPotential, GridFunction, GridWindow,
                             KernelMatrix, WeightedNormSpec, apply_bilaplacian, apply_hamiltonian,
                             apply_J, apply_laplacian, hamiltonian_banded, hamiltonian_matrix,
                             parity, sup_kernel_norm, weighted_norm)
from displat.free import free_kernel_bilaplacian
from displat.potentials import plateau_profile, v1, v2_values, v3

W = GridWindow(-20, 20)
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


# -- containers ----------------------------------------------------------------------

def test_window_minimum_size():
    GridWindow(0, 4)
    with pytest.raises(WindowTooSmall):
        GridWindow(0, 3)
    with pytest.raises(WindowTooSmall):
        GridWindow(3, 0)


def test_window_geometry():
    w = GridWindow.centered(3, center=10)
    assert (w.n_min, w.n_max, w.size) == (7, 13, 7)
    assert w.contains(10, margin=3) and not w.contains(8, margin=2)
    assert list(w.position([7, 13])) == [0, 6]


def test_grid_function_validation():
    with pytest.raises(ValueError):
        GridFunction(W, np.zeros(3))
    bad = np.zeros(W.size)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        GridFunction(W, bad)


def test_grid_function_at_pads_with_zero():
    phi = GridFunction.from_callable(W, lambda n: n + 1.0)
    assert phi.at(np.array([0, 100, -100])).tolist() == [1.0, 0.0, 0.0]


def test_kernel_matrix_shape_check():
    with pytest.raises(ValueError):
        KernelMatrix([0, 1], [0], np.zeros((1, 1)))


def test_potential_derived_data():
    V = CompactPotential(-1, [2.0, 0.0, -3.0])
    assert V.support.tolist() == [-1, 1]
    np.testing.assert_allclose(V.v ** 2, np.abs(V.V_support))
    np.testing.assert_allclose(V.U * V.v ** 2, V.V_support)
    assert V.l1_norm == 5.0
    assert V.v_tilde.tolist() == pytest.approx([-np.sqrt(2), -np.sqrt(3)])


def test_potential_round_trip(tmp_path):
    V = v1()
    V.save(tmp_path / "v.json")
    assert CompactPotential.load(tmp_path / "v.json") == V
    assert V.shifted(3).support.tolist() == (V.support + 3).tolist()


def test_zero_potential_has_no_support():
    with pytest.raises(EmptySupport):
        CompactPotential.zero().require_support()


def test_v1_values():
    V = v1()
    assert V.n0 == -2 and V.values.tolist() == [-1.0, 4.0, -3.0, 4.0, -1.0]


# -- stencils -----------------------------------------------------------------------

def test_laplacian_of_delta():
    out = apply_laplacian(GridFunction.delta(W)).values
    assert out[W.position([-1, 0, 1])].tolist() == [1, -2, 1]
    assert np.count_nonzero(out) == 3


def test_laplacian_annihilates_affine():
    for fn in (lambda n: np.ones(n.shape), lambda n: n.astype(float)):
        out = apply_laplacian(GridFunction.from_callable(W, fn))
        assert np.abs(out.interior(1)).max() == 0.0


def test_bilaplacian_of_delta():
    out = apply_bilaplacian(GridFunction.delta(W)).values
    assert out[W.position(np.arange(-2, 3))].tolist() == BILAPLACIAN_STENCIL.tolist()
    assert np.count_nonzero(out) == 5


def test_bilaplacian_affine_and_alternating():
    lin = GridFunction.from_callable(W, lambda n: 3.0 * n - 2.0)
    assert np.abs(apply_bilaplacian(lin).interior()).max() == 0.0
    alt = GridFunction.from_callable(W, lambda n: 2.5 * parity(n))
    np.testing.assert_array_equal(apply_bilaplacian(alt).interior(), 16 * alt.interior())


def test_hamiltonian_with_zero_potential():
    phi = GridFunction.from_callable(W, lambda n: np.cos(n))
    np.testing.assert_array_equal(apply_hamiltonian(phi, CompactPotential.zero()).values,
                                  apply_bilaplacian(phi).values)


def test_plateau_profile_solves_both_thresholds():
    phi = GridFunction.from_callable(W, plateau_profile)
    assert np.abs(apply_hamiltonian(phi, v1()).interior()).max() == 0.0
    out = apply_bilaplacian(phi).values + v2_values(W.indices) * phi.values
    np.testing.assert_array_equal(out[W.interior_mask()], 16 * phi.interior())
    # The alternating profile is the 16-solution for the compact V3.
    jphi = apply_J(phi)
    out = apply_hamiltonian(jphi, v3()).interior()
    np.testing.assert_array_equal(out, 16 * jphi.interior())


def test_hamiltonian_rejects_support_in_margin():
    phi = GridFunction(GridWindow(-3, 3), np.ones(7))
    with pytest.raises(WindowTooSmall):
        apply_hamiltonian(phi, v1())


def test_hamiltonian_matrix_matches_stencil(rng):
    V = v1()
    win = GridWindow(-10, 10)
    phi = rng.standard_normal(win.size)
    H = hamiltonian_matrix(V, win)
    np.testing.assert_allclose(H @ phi, apply_hamiltonian(GridFunction(win, phi), V).values.real,
                               atol=1e-12)
    band = hamiltonian_banded(V, win)
    np.testing.assert_array_equal(band[0], np.diag(H))
    np.testing.assert_array_equal(band[1, :-1], np.diag(H, -1))
    np.testing.assert_array_equal(band[2, :-2], np.diag(H, -2))


def test_J_examples():
    d0, d1 = GridFunction.delta(W, 0), GridFunction.delta(W, 1)
    np.testing.assert_array_equal(apply_J(d0).values, d0.values)
    np.testing.assert_array_equal(apply_J(d1).values, -d1.values)


def test_weighted_norm_examples(rng):
    assert weighted_norm(GridFunction.delta(W), WeightedNormSpec(3.7)) == 1.0
    assert weighted_norm(GridFunction.delta(W, 1), WeightedNormSpec(1.0)) == pytest.approx(
        np.sqrt(2))
    phi = GridFunction(W, rng.standard_normal(W.size))
    assert weighted_norm(phi, WeightedNormSpec(0.0)) == pytest.approx(
        np.linalg.norm(phi.values), rel=1e-14)


def test_sup_kernel_norm_examples():
    assert sup_kernel_norm(np.eye(4)) == 1.0
    assert sup_kernel_norm(np.zeros((3, 3))) == 0.0
    assert sup_kernel_norm(free_kernel_bilaplacian(0.0, np.arange(-5, 6))) == pytest.approx(1.0)


# -- properties -----------------------------------------------------------------------

padded = arrays(np.float64, 40, elements=finite)


@settings(max_examples=50, deadline=None)
@given(padded)
def test_fourier_symbol(core):
    N = 64
    vals = np.zeros(N)
    vals[12:52] = core
    out = apply_bilaplacian(GridFunction(GridWindow(0, N - 1), vals)).values
    x = 2 * np.pi * np.fft.fftfreq(N)
    lhs, rhs = np.fft.fft(out), (2 - 2 * np.cos(x)) ** 2 * np.fft.fft(vals)
    scale = max(np.abs(rhs).max(), 1e-300)
    assert np.abs(lhs - rhs).max() <= 1e-10 * scale + 1e-300


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, W.size, elements=finite))
def test_bilaplacian_is_laplacian_squared(vals):
    phi = GridFunction(W, vals)
    direct = apply_bilaplacian(phi).interior()
    twice = apply_laplacian(apply_laplacian(phi)).interior()
    scale = max(np.abs(vals).max(), 1.0)
    assert np.abs(direct - twice).max() <= 1e-12 * scale


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, W.size, elements=finite))
def test_reflection_commutes(vals):
    phi, mirrored = GridFunction(W, vals), GridFunction(W, vals[::-1])
    tol = 1e-13 * max(np.abs(vals).max(), 1.0)
    np.testing.assert_allclose(apply_bilaplacian(phi).values[::-1],
                               apply_bilaplacian(mirrored).values, rtol=0, atol=tol)
    np.testing.assert_allclose(apply_laplacian(phi).values[::-1],
                               apply_laplacian(mirrored).values, rtol=0, atol=tol)


@pytest.mark.property
@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, W.size, elements=finite))
def test_J_conjugates_laplacian(vals):
    phi = GridFunction(W, vals)
    lhs = apply_J(apply_laplacian(apply_J(phi))).interior(1)
    rhs = -apply_laplacian(phi).interior(1) - 4 * phi.interior(1)
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(np.abs(vals).max(), 1.0)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, W.size, elements=finite))
def test_J_is_involution(vals):
    phi = GridFunction(W, vals)
    np.testing.assert_array_equal(apply_J(apply_J(phi)).values, phi.values)
