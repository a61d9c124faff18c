import numpy as np
import pytest

from hall_edge_lab.ed_oracle import (MAX_MODES, build_fock_system, ed_correlator, ed_schwinger_term,
                                     ed_time_ordered, ed_ward_check, quarter_offset_betas,
                                     wick_rotation_check, wick_sweep)
from hall_edge_lab.errors import TooLarge, ValidationError
from hall_edge_lab.lattice import HaldaneParams, build_custom, build_haldane, cell_interaction
from hall_edge_lab.response import (FreeSystem, bubble_correlator, current_operator, schwinger_2pt_free,
                                    schwinger_term)

P = HaldaneParams(1.0, 0.5, np.pi / 2, 0.2)


@pytest.fixture(scope="module")
def free_model():
    return build_haldane(P, 4, 0.1, False)


@pytest.fixture(scope="module")
def free_ed(free_model):
    return build_fock_system(free_model, 0.0, 2, beta=2.0)


@pytest.fixture(scope="module")
def interacting_ed():
    m = build_haldane(P, 4, 0.0, False)
    m = m.with_interaction(cell_interaction(m, 1.0, 0.5))
    return build_fock_system(m, 0.3, 2, beta=3.0)


def hubbard_dimer(t, U):
    recs = [(z, 0, r, r, -t, 0.0) for z in (1, -1) for r in (0, 1)]
    m = build_custom(2, 2, recs, spinful=True)
    w = np.zeros((3, m.n_rows, 3, 2, 2))
    w[1, :, 1] = [[0, U / 2], [U / 2, 0]]
    return m.with_interaction(w)


def test_gibbs_weights_normalized(free_ed):
    assert free_ed.gibbs_normalization() == pytest.approx(1.0, abs=1e-14)
    assert free_ed.with_beta(7.0).gibbs_normalization() == pytest.approx(1.0, abs=1e-14)


def test_free_spectrum_from_single_particle_levels(free_model, free_ed):
    fs = FreeSystem(free_model, 2, workers=1)
    eps = np.sort(fs.eig[0][0].ravel() - free_model.mu)
    E = free_ed.spectrum()
    assert E[0] == pytest.approx(eps[eps < 0].sum(), abs=1e-12)
    assert E[-1] == pytest.approx(eps[eps > 0].sum(), abs=1e-12)


@pytest.mark.parametrize("U", [0.0, 1.0, 4.0])
def test_hubbard_dimer_ground_state(U):
    t = 0.7
    sys = build_fock_system(hubbard_dimer(t, U), 1.0, 2, beta=1.0)
    te = 2 * t  # both x1 hops connect the two sites
    exact = (U - np.sqrt(U ** 2 + 16 * te ** 2)) / 2 - U / 2
    assert sys.sectors[2].E.min() == pytest.approx(exact, abs=1e-12)
    assert sys.E0 == pytest.approx(exact, abs=1e-12)


@pytest.mark.parametrize("mu_idx,nu_idx", [(0, 0), (0, 1), (1, 1), (2, 2), (1, 2), (2, 0)])
def test_free_correlator_matches_bubble(free_model, free_ed, mu_idx, nu_idx):
    beta = free_ed.beta
    rows = free_ed.rows
    eta, p1 = 2 * np.pi / beta, np.pi
    ed = ed_correlator(free_ed, mu_idx, nu_idx, eta, p1, rows, [2])
    bub = bubble_correlator(free_model, free_model.mu, beta, eta, p1, mu_idx, nu_idx,
                            y2_set=[[2]], L1=2).values[0, 0]
    assert abs(ed - bub) < 1e-11


def test_free_schwinger_term(free_model, free_ed):
    ref = schwinger_term(free_model, free_model.mu, free_ed.beta, 1, L1=2)
    assert ed_schwinger_term(free_ed, [1]) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("x0", [0.7, -0.7, 0.0])
def test_free_two_point_function(free_model, free_ed, x0):
    i = free_ed.mode(1, 1, 0)
    j = free_ed.mode(0, 2, 1)
    ed = ed_time_ordered(free_ed, free_ed.c[i], free_ed.cd[j], x0, fermionic=True)
    ref = schwinger_2pt_free(free_model, free_model.mu, free_ed.beta, (x0, 1, 1), (0, 0, 2), L1=2)
    assert abs(ed - ref[0, 1]) < 1e-12


def test_kms(interacting_ed):
    s = interacting_ed
    a, b = s.c[3], s.cd[5]
    near_beta = ed_time_ordered(s, a, b, s.beta - 1e-9, fermionic=True)
    at_zero = ed_time_ordered(s, a, b, 0.0, fermionic=True)
    assert abs(near_beta + at_zero) < 1e-7


def test_interaction_changes_spectrum(interacting_ed):
    m = interacting_ed.m
    free = build_fock_system(m, 0.0, 2, beta=3.0)
    assert np.abs(free.spectrum() - interacting_ed.spectrum()).max() > 1e-3


@pytest.mark.parametrize("nu_idx", [0, 1])
@pytest.mark.parametrize("p", [(2 * np.pi / 3.0, np.pi), (4 * np.pi / 3.0, np.pi), (2 * np.pi / 3.0, 0.0)])
def test_interacting_ward_identity(interacting_ed, p, nu_idx):
    res, scale = ed_ward_check(interacting_ed, p, nu_idx)
    assert res <= 1e-10 * max(scale, 1.0)


def test_wick_rotation_error_decays_with_beta(interacting_ed):
    s = interacting_ed
    rows = s.rows
    A = s.one_body(current_operator(s.m, 0, rows), np.pi)
    B = s.one_body(current_operator(s.m, 1, rows), -np.pi)
    betas = quarter_offset_betas(0.5, [2, 4, 8, 16])
    out = wick_sweep(s, A, B, 0.5, betas, [40.0, 160.0])
    assert out["beta_slope"] == pytest.approx(-1.0, abs=0.1)
    assert np.all(out["errors"] <= out["C"] * out["shapes"] * (1 + 1e-12))
    r = wick_rotation_check(s.with_beta(betas[0]), A, B, 40.0, 0.5, C=out["C"])
    assert r.error <= r.bound * (1 + 1e-12)


def test_wick_validation(interacting_ed):
    with pytest.raises(ValidationError):
        wick_rotation_check(interacting_ed, interacting_ed.c[0], interacting_ed.cd[0], 1.0, 0.0)


def test_size_cap():
    m = build_haldane(P, 4, 0.0, True)
    with pytest.raises(TooLarge):
        build_fock_system(m, 0.0, 2)
    assert MAX_MODES == 14


def test_row_count_mismatch():
    with pytest.raises(ValidationError):
        build_fock_system(build_haldane(P, 4, 0.0, False), 0.0, 2, L2=2)


def test_time_argument_range(free_ed):
    with pytest.raises(ValidationError):
        ed_time_ordered(free_ed, free_ed.c[0], free_ed.cd[0], free_ed.beta)
