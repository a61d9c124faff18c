import numpy as np
import pytest

from hall_edge_lab.errors import ValidationError
from hall_edge_lab.lattice import (CYLINDER, TORUS, HaldaneParams, LatticeModel, bloch_hamiltonian,
                                   bloch_hamiltonian_batch, build_custom, build_haldane,
                                   cell_interaction, effective_1d_hamiltonian, haldane_mass_at_K,
                                   k_grid, validate_model)


def hand_written_blocks(p, k1):
    """A(k1) and V(k1) of the Haldane effective operator, written out by hand."""
    t1, t2, f, W = p.t1, p.t2, p.phi, p.W
    e = np.exp
    A = np.array([[-t2 * e(1j * f) * e(-1j * k1) - t2 * e(-1j * f), 0],
                  [-t1, -t2 * e(-1j * f) * e(-1j * k1) - t2 * e(1j * f)]])
    V = np.array([[W - t2 * e(1j * f) * e(1j * k1) - t2 * e(-1j * f) * e(-1j * k1),
                   -t1 * e(-1j * k1) - t1],
                  [-t1 * e(1j * k1) - t1,
                   -W - t2 * e(-1j * f) * e(1j * k1) - t2 * e(1j * f) * e(-1j * k1)]])
    return A, V


@pytest.mark.parametrize("k1", [0.0, 0.37, 2.1, np.pi])
@pytest.mark.parametrize("boundary", [TORUS, CYLINDER])
def test_effective_operator_blocks(k1, boundary):
    p = HaldaneParams(1.0, 0.5, 0.7, 0.3)
    m = build_haldane(p, 6, 0.0, False, boundary)
    H = effective_1d_hamiltonian(m, k1)
    A, V = hand_written_blocks(p, k1)
    x2 = 2
    assert np.allclose(H[2 * x2:2 * x2 + 2, 2 * x2:2 * x2 + 2], V, atol=1e-15)
    assert np.allclose(H[2 * x2:2 * x2 + 2, 2 * x2 + 2:2 * x2 + 4], A, atol=1e-15)


def test_nearest_neighbour_only_blocks():
    p = HaldaneParams(1.0, 0.0, 0.0, 0.0)
    m = build_haldane(p, 5, 0.0, False, TORUS)
    k1 = 0.9
    H = effective_1d_hamiltonian(m, k1)
    assert np.array_equal(H[0:2, 2:4], np.array([[0, 0], [-1, 0]]))
    assert np.isclose(H[0, 1], -(np.exp(-1j * k1) + 1))


@pytest.mark.parametrize("spinful", [False, True])
def test_effective_operator_exactly_hermitian(spinful):
    m = build_haldane(HaldaneParams(1.0, 0.4, 1.1, 0.2), 9, 0.1, spinful)
    for k1 in k_grid(17):
        H = effective_1d_hamiltonian(m, k1)
        assert np.array_equal(H, H.conj().T)


def test_torus_and_cylinder_agree_in_the_interior():
    p = HaldaneParams(1.0, 0.0, 0.0, 0.0)
    t = effective_1d_hamiltonian(build_haldane(p, 8, 0.0, False, TORUS), 0.3)
    c = effective_1d_hamiltonian(build_haldane(p, 8, 0.0, False, CYLINDER), 0.3)
    # cylinder rows 1..7 are torus rows 1..7; rows 0 and 8 are Dirichlet
    inner = slice(2, 16)
    assert np.array_equal(t[inner, inner], c[inner, inner])
    assert not np.any(c[0:2]) and not np.any(c[-2:])


def test_bloch_at_origin():
    p = HaldaneParams(1.0, 0.3, 0.8, 0.4)
    m = build_haldane(p, 6, 0.0, False, TORUS)
    e = np.linalg.eigvalsh(bloch_hamiltonian(m, (0.0, 0.0)))
    root = np.sqrt(p.W ** 2 + 9 * p.t1 ** 2)
    expect = -6 * p.t2 * np.cos(p.phi) + np.array([-root, root])
    assert np.allclose(e, expect, atol=1e-13)


def test_bloch_spectrum_equals_torus_effective_spectrum():
    L = 7
    m = build_haldane(HaldaneParams(1.0, 0.5, 1.3, 0.2), L, 0.0, False, TORUS)
    for k1 in (0.0, 1.1, 4.0):
        ks = np.array([[k1, k2] for k2 in k_grid(L)])
        bloch = np.sort(np.linalg.eigvalsh(bloch_hamiltonian_batch(m, ks)).ravel())
        eff = np.linalg.eigvalsh(effective_1d_hamiltonian(m, k1))
        assert np.allclose(bloch, eff, atol=1e-10)


def test_bloch_periodic_in_k1():
    m = build_haldane(HaldaneParams(1.0, 0.5, 0.4, 0.1), 6, 0.0, False, TORUS)
    a = bloch_hamiltonian(m, (0.3, 1.2))
    b = bloch_hamiltonian(m, (0.3 + 2 * np.pi, 1.2))
    assert np.allclose(a, b, atol=1e-14)


def test_bloch_rejects_cylinder():
    m = build_haldane(HaldaneParams(1.0, 0.5, 0.4, 0.1), 6)
    with pytest.raises(ValidationError):
        bloch_hamiltonian(m, (0.0, 0.0))


def test_particle_hole_symmetric_without_t2():
    m = build_haldane(HaldaneParams(1.0, 0.0, 0.0, 0.0), 6, 0.0, False, TORUS)
    g = k_grid(24)
    K1, K2 = np.meshgrid(g, g, indexing="ij")
    e = np.linalg.eigvalsh(bloch_hamiltonian_batch(m, np.stack([K1, K2], -1)))
    assert np.allclose(np.sort(e.ravel()), np.sort(-e.ravel()), atol=1e-12)


def test_topological_instance_is_gapped():
    m = build_haldane(HaldaneParams(1.0, 0.5, np.pi / 2, 0.0), 6, 0.0, False, TORUS)
    g = k_grid(512)
    K1, K2 = np.meshgrid(g, g, indexing="ij")
    e = np.linalg.eigvalsh(bloch_hamiltonian_batch(m, np.stack([K1, K2], -1)))
    assert (e[..., 1] - e[..., 0]).min() > 1.0


def test_builder_rejects_bad_input():
    with pytest.raises(ValidationError):
        build_haldane(HaldaneParams(1.0, 0.5, 0.1, 0.0), 3)
    with pytest.raises(ValidationError):
        HaldaneParams(1.0, float("nan"), 0.1, 0.0)
    with pytest.raises(ValidationError):
        HaldaneParams(-1.0, 0.5, 0.1, 0.0)


def test_spinful_duplicates_blocks():
    m = build_haldane(HaldaneParams(1.0, 0.5, 0.3, 0.1), 5, 0.0, True)
    up, dn = m.spin_blocks()
    assert np.array_equal(up.hop, dn.hop)
    assert validate_model(m).ok


def test_model_arrays_are_read_only():
    m = build_haldane(HaldaneParams(1.0, 0.5, 0.3, 0.1), 5)
    with pytest.raises(ValueError):
        m.hop[1, 1, 1, 0, 0] = 3.0


def test_validate_flags_hermiticity_fault():
    recs = [(0, 0, 0, 1, -1.0, 0.0), (0, 0, 1, 0, -1.0, 0.25), (1, 0, 0, 0, 0.5, 0.0),
            (-1, 0, 0, 0, 0.5, 0.0)]
    m = build_custom(2, 5, recs, boundary=TORUS)
    rep = validate_model(m)
    assert not rep.ok
    assert rep.violations["hermiticity"] == pytest.approx(0.25)


def test_validate_flags_dirichlet_fault():
    good = build_haldane(HaldaneParams(1.0, 0.5, 0.3, 0.1), 5)
    hop = np.array(good.hop)
    hop[1, 0, 1] = np.eye(2)
    bad = LatticeModel(good.M, good.L, hop, 0.0, CYLINDER, None, False, "broken")
    assert validate_model(good).ok
    assert validate_model(bad).violations["dirichlet"] == pytest.approx(1.0)


def test_interaction_kernel_is_symmetric():
    m = build_haldane(HaldaneParams(1.0, 0.5, 0.3, 0.1), 6, 0.0, True)
    mi = m.with_interaction(cell_interaction(m, 1.0, 0.3))
    assert validate_model(mi).ok


def test_mass_at_dirac_point():
    assert haldane_mass_at_K(HaldaneParams(1.0, 0.5, np.pi / 2, 3 * np.sqrt(3) * 0.5)) == pytest.approx(0.0)
