import warnings

import numpy as np
import pytest

from displat.errors import QuadratureNotConverged, WavefrontCollision, WindowTooSmall
from displat.evolution import (QuadratureSpec, beam_propagators, observation_block,
                               oracle_propagator, perturbed_decay_fit, spectral_function,
                               spectral_oracle, stone_integrand, stone_kernel, stone_kernels,
                               wavefront_clearance)
from displat.free import free_beam_kernels, kernel_row
from displat.lattice import CompactPotential, GridWindow

ZERO = CompactPotential.zero()
W512 = GridWindow.centered(256)
BLOCK = np.arange(-10, 11)


def free_block(flow, t, sites=BLOCK):
    """Free kernel on sites x sites from its row."""
    span = int(np.ptp(sites))
    _, row = kernel_row(flow, t, np.arange(-span, span + 1))
    return row[sites[:, None] - sites[None, :] + span]


@pytest.fixture(scope="module")
def free_oracle():
    return spectral_oracle(ZERO, W512, 0.0)


@pytest.fixture(scope="module")
def v1_oracle(V1):
    return spectral_oracle(V1, GridWindow.centered(1024), 0.0)


# -- oracle ---------------------------------------------------------------------------

def test_oracle_is_sound(V1, V_regular):
    for V in (V1, V_regular):
        o = spectral_oracle(V, W512)
        assert o.max_residual(V) < 1e-10
        assert o.orthonormality_error() < 1e-10


def test_free_spectrum_in_band():
    o = spectral_oracle(ZERO, W512)
    assert o.eigenvalues.min() >= -1e-12 and o.eigenvalues.max() <= 16 + 1e-12
    assert o.bound_states.size == 0


def test_attractive_delta_has_one_bound_state():
    o = spectral_oracle(CompactPotential(0, [-5.0]), W512)
    assert (o.eigenvalues < 0).sum() == 1


@pytest.mark.parametrize("c", [1.0, -1.0])
def test_delta_has_no_embedded_warning(c):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        o = spectral_oracle(CompactPotential(0, [c]), W512)
    assert not o.warnings


@pytest.mark.property
def test_spectral_projectors_complete(V1):
    o = spectral_oracle(V1, W512)
    total = o.projector(o.ac_mask) + o.projector(o.bound_mask) + o.projector(o.edge_mask)
    assert np.linalg.norm(total - np.eye(W512.size)) < 1e-9


def test_time_zero_is_ac_projector(V1):
    o = spectral_oracle(V1, W512)
    K = oracle_propagator(o, 0.0, "schrodinger").entries
    assert np.abs(K - o.projector(o.ac_mask)).max() < 1e-12


@pytest.mark.property
def test_energy_conservation(V1):
    o = spectral_oracle(V1, W512, 0.0)
    cols = np.arange(-5, 6)
    ref = np.linalg.norm(oracle_propagator(o, 0.0, "schrodinger", cols=cols).entries, axis=0)
    for t in (1.0, 17.0, 300.0):
        K = oracle_propagator(o, t, "schrodinger", cols=cols).entries
        assert np.abs(np.linalg.norm(K, axis=0) - ref).max() < 1e-10


def test_window_must_contain_support(V1):
    with pytest.raises(WindowTooSmall):
        spectral_oracle(V1.shifted(300), W512)
    o = spectral_oracle(V1, W512)
    with pytest.raises(WindowTooSmall):
        oracle_propagator(o, 1.0, "schrodinger", rows=[1000])


def test_oracle_matches_free_kernel(free_oracle):
    for t in (1.0, 5.0, 10.0):
        K = oracle_propagator(free_oracle, t, "schrodinger", BLOCK, BLOCK).entries
        assert np.abs(K - free_block("bilaplacian", t)).max() < 1e-6
    # A longer time needs a window the front has not crossed.
    o = spectral_oracle(ZERO, GridWindow.centered(1024), 0.0)
    K = oracle_propagator(o, 50.0, "schrodinger", BLOCK, BLOCK).entries
    assert np.abs(K - free_block("bilaplacian", 50.0)).max() < 1e-6


def test_unknown_kind():
    with pytest.raises(ValueError):
        spectral_function("heat", 1.0, [1.0])


# -- Stone quadrature ---------------------------------------------------------------

def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(panels=32)
    with pytest.raises(ValueError):
        QuadratureSpec(budget=4)
    with pytest.raises(ValueError):
        QuadratureSpec(ratio=1.5)
    assert QuadratureSpec().doubled().panels == 128


def test_free_integrand_is_cosine():
    for psi in (0.1, 0.7, 1.4):
        K = stone_integrand(psi, ZERO, BLOCK, BLOCK)
        k = np.abs(BLOCK[:, None] - BLOCK[None, :])
        assert np.abs(K - 1j * np.cos(2 * psi * k)).max() < 1e-12


def test_integrand_diagonal_is_imaginary(V1):
    for psi in (0.2, 0.9, 1.5):
        K = stone_integrand(psi, V1, BLOCK, BLOCK)
        assert np.abs(np.diag(K).real).max() < 1e-10 * max(1.0, np.abs(K).max())


def test_stone_free_kernel():
    K = stone_kernel(1.0, ZERO, "schrodinger", BLOCK, BLOCK)
    assert np.abs(K.entries - free_block("bilaplacian", 1.0)).max() < 1e-8


def test_stone_agrees_with_oracle(V1, v1_oracle):
    times = [1.0, 10.0, 50.0]
    for t, K in zip(times, stone_kernels(times, V1, "schrodinger", BLOCK, BLOCK)):
        ref = oracle_propagator(v1_oracle, t, "schrodinger", BLOCK, BLOCK).entries
        assert np.abs(K.entries - ref).max() < 1e-5


def test_stone_kernel_symmetric(V1):
    K = stone_kernel(3.0, V1, "schrodinger", BLOCK, BLOCK).entries
    assert np.abs(K - K.T).max() < 1e-9


def test_stone_convergence_check(V1):
    coarse = QuadratureSpec(panels=64, order=2, budget=8, depth=0, tol=1e-14)
    with pytest.raises(QuadratureNotConverged):
        stone_kernel(200.0, V1, "schrodinger", BLOCK, BLOCK, coarse)


def test_stone_kind_validation(V1):
    with pytest.raises(ValueError):
        stone_kernel(1.0, V1, "cos", BLOCK, BLOCK)


# -- beams ------------------------------------------------------------------------------

def test_free_beams_match_closed_form(free_oracle):
    t = 6.0
    cos, sin_c = beam_propagators(t, ZERO, BLOCK, BLOCK, oracle=free_oracle)
    assert np.abs(cos.entries - free_block("cos", t)).max() < 1e-6
    assert np.abs(sin_c.entries - free_block("sinc", t)).max() < 1e-6
    ref_cos, _ = free_beam_kernels(t, np.arange(-3, 4))
    assert np.abs(cos.entries[10, 7:14] - ref_cos.entries[0]).max() < 1e-6


def test_beam_cos_is_half_sum(V1):
    o = spectral_oracle(V1, W512, 0.0)
    cos, _ = beam_propagators(4.0, V1, BLOCK, BLOCK, oracle=o)
    ref = oracle_propagator(o, 4.0, "cos", BLOCK, BLOCK).entries
    assert np.abs(cos.entries - ref).max() < 1e-6


def test_beams_at_small_time_are_projector(V1):
    o = spectral_oracle(V1, W512, 0.0)
    P = o.projector(o.ac_mask)[np.ix_(o.positions(BLOCK), o.positions(BLOCK))]
    for K in beam_propagators(1e-9, V1, BLOCK, BLOCK, oracle=o):
        assert np.abs(K.entries - P).max() < 1e-8


def test_stone_beams_match_oracle(V1, v1_oracle):
    small = np.arange(-3, 4)
    got = beam_propagators(2.0, V1, small, small, source="stone")
    ref = beam_propagators(2.0, V1, small, small, oracle=v1_oracle)
    for a, b in zip(got, ref):
        assert np.abs(a.entries - b.entries).max() < 1e-5


def test_beam_kernels_symmetric(V1):
    o = spectral_oracle(V1, W512, 0.0)
    for K in beam_propagators(3.0, V1, BLOCK, BLOCK, oracle=o):
        assert np.abs(K.entries - K.entries.T).max() < 1e-12


def test_beam_source_validation(V1):
    with pytest.raises(ValueError):
        beam_propagators(1.0, V1, BLOCK, BLOCK, source="magic")
    with pytest.raises(ValueError):
        beam_propagators(1.0, V1, BLOCK, BLOCK)


# -- decay fits ----------------------------------------------------------------------------

def test_observation_block(V1):
    win = GridWindow.centered(100)
    assert observation_block(V1, win, 5).tolist() == list(range(-7, 8))
    assert observation_block(ZERO, win, 3).tolist() == list(range(-3, 4))


def test_wavefront_collision(V1):
    with pytest.raises(WavefrontCollision):
        perturbed_decay_fit(V1, "schrodinger", (50.0, 2000.0), window=512)
    win = GridWindow.centered(256)
    assert wavefront_clearance("schrodinger", win, [0], 10.0) > 0
    assert wavefront_clearance("schrodinger", win, [0], 1000.0) < 0


def test_decay_fit_report_fields(V1):
    rep = perturbed_decay_fit(V1, "cos", (5.0, 20.0), window=512, samples=9)
    ex = rep.extra
    assert ex["kind"] == "cos" and ex["window"] == [-256, 255]
    assert ex["wavefront_collision"] is False and ex["wavefront_clearance"] > 50
    assert len(ex["bound_states"]) >= 1
    assert np.isfinite(rep.fitted_exponent)


def test_decay_fit_reports_collision(V1):
    rep = perturbed_decay_fit(V1, "schrodinger", (50.0, 400.0), window=512, samples=9,
                              wavefront="report")
    assert rep.extra["wavefront_collision"] is True
