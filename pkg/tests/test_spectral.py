import numpy as np
import pytest

from hall_edge_lab.errors import NoGap
from hall_edge_lab.lattice import TORUS, HaldaneParams, build_haldane, effective_1d_active, k_grid
from hall_edge_lab.spectral import (audit_assumptions, band_structure, bulk_window, detect_edge_states,
                                    diagonalize_grid, row_density)

TOPO = HaldaneParams(1.0, 0.5, np.pi / 2, 0.0)
TRIVIAL = HaldaneParams(1.0, 0.5, np.pi / 2, 10 * 3 * np.sqrt(3) * 0.5)


def test_branch_count_equals_dimension():
    m = build_haldane(TOPO, 10, 0.0, False)
    branches = band_structure(m, 24)
    assert len(branches) == effective_1d_active(m, 0.0).shape[0]
    for b in branches:
        assert len(b.energies) == 24
        assert np.allclose(np.linalg.norm(b.vectors, axis=1), 1.0)


def test_branches_reproduce_eigenvalues():
    m = build_haldane(TOPO, 8, 0.0, False)
    branches = band_structure(m, 16)
    E = np.sort(np.array([b.energies for b in branches]), axis=0)
    for i, k in enumerate(k_grid(16)):
        assert np.allclose(E[:, i], np.linalg.eigvalsh(effective_1d_active(m, k)), atol=1e-12)


def test_spectrum_symmetric_without_t2():
    m = build_haldane(HaldaneParams(1.0, 0.0, 0.0, 0.0), 8, 0.0, False, TORUS)
    e, _ = diagonalize_grid(m, k_grid(12))
    assert np.allclose(np.sort(e, axis=1), -np.sort(e, axis=1)[:, ::-1], atol=1e-12)


def test_worker_count_does_not_change_results():
    m = build_haldane(TOPO, 12, 0.0, True)
    e1, v1 = diagonalize_grid(m, k_grid(20), workers=1)
    e4, v4 = diagonalize_grid(m, k_grid(20), workers=4)
    assert np.array_equal(e1, e4)
    assert np.array_equal(v1, v4)


def test_flagship_edge_census(flagship_edges, flagship_cylinder):
    assert len(flagship_edges) == 4
    for side in (0, flagship_cylinder.L):
        states = [e for e in flagship_edges if e.side == side]
        assert len(states) == 2
        assert len({e.omega for e in states}) == 1
    assert {e.omega for e in flagship_edges if e.side == 0} != {e.omega for e in flagship_edges if e.side != 0}
    for e in flagship_edges:
        assert e.decay_rate > 0
        assert abs(np.linalg.norm(e.xi) - 1) < 1e-12


def test_spin_partners_agree(flagship_edges):
    by_side = {}
    for e in flagship_edges:
        by_side.setdefault(e.side, []).append(e)
    for pair in by_side.values():
        a, b = pair
        assert abs(a.k_F - b.k_F) <= 1e-12
        assert abs(a.v_e - b.v_e) <= 1e-12


def test_edge_localization(flagship_edges, flagship_cylinder):
    m = flagship_cylinder
    for e in flagship_edges:
        dens = row_density(m, e.xi)
        far = dens[m.L // 2 + 1:] if e.side == 0 else dens[:m.L // 2]
        assert far.sum() <= np.exp(-e.decay_rate * m.L / 4)


def test_trivial_phase_has_no_edge_states():
    m = build_haldane(TRIVIAL, 40, 0.0, True)
    assert detect_edge_states(m, grid=40) == []
    v = audit_assumptions(m, grid=40)
    assert v.n_edge == 0 and not v.single_channel


def test_spinless_audit():
    m = build_haldane(TOPO, 40, 0.0, False)
    v = audit_assumptions(m, grid=40)
    assert v.n_edge == 2
    assert not v.failed


def test_flagship_audit(flagship_cylinder, flagship_edges):
    v = audit_assumptions(flagship_cylinder, grid=40, edges=flagship_edges)
    assert v.n_edge == 4 and v.single_channel and v.spin_degenerate
    assert not v.failed


def test_velocity_converges_quadratically():
    m = build_haldane(TOPO, 40, 0.0, False)
    vs = []
    for g in (40, 80, 160, 320):
        e = [x for x in detect_edge_states(m, grid=g) if x.side == 0][0]
        vs.append(e.v_e)
    d = np.abs(np.diff(vs))
    ratios = d[:-1] / d[1:]
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_mu_in_band_raises():
    m = build_haldane(TOPO, 20, 2.0, False)
    with pytest.raises(NoGap):
        detect_edge_states(m, grid=20)


def test_bulk_window_brackets_mu():
    m = build_haldane(TOPO, 20, 0.0, False)
    lo, hi = bulk_window(m, 0.0)
    assert lo < 0 < hi
