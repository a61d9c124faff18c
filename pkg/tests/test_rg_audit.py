import itertools

import numpy as np
import pytest

from hall_edge_lab.errors import BetaBoundViolated, NoContraction, TooLarge, ValidationError
from hall_edge_lab.rg_audit import (BetaModel, GNTree, chain_tree, constant_beta_nu, count_labelings,
                                    dimension_table, dimensional_bound_audit, endpoints, enumerate_trees,
                                    flow_iterate, geometric_beta, geometric_lambda_drift, inner_vertices,
                                    linear_beta_nu, nu_closed_form_constant, nu_fixed_point,
                                    scale_labelings, scaling_dimension, unlabeled_shapes)


def schroeder(nmax):
    """Little Schroeder numbers by their three-term recurrence."""
    s = [0, 1, 1]
    for n in range(2, nmax):
        s.append(((6 * n - 3) * s[n] - (n - 2) * s[n - 1]) // (n + 1))
    return s[1:nmax + 1]


def brute_labelings(shape, h_root):
    """All maps inner vertex -> [h_root + 1, 0] obeying the strict ordering."""
    verts = inner_vertices(shape)
    out = 0
    for labels in itertools.product(range(h_root + 1, 1), repeat=len(verts)):
        lab = dict(zip(verts, labels))
        if all(lab[v] > lab[v[:-1]] for v in verts if v):
            out += 1
    return out


def test_shape_counts():
    assert [len(unlabeled_shapes(n)) for n in range(1, 9)] == schroeder(8)
    assert schroeder(8) == [1, 1, 3, 11, 45, 197, 903, 4279]


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_shapes_are_valid_and_distinct(n):
    shapes = unlabeled_shapes(n)
    assert len(set(shapes)) == len(shapes)
    for s in shapes:
        assert len(endpoints(s)) == n

        def ok(t):
            return t == () or (len(t) >= 2 and all(ok(c) for c in t))

        assert ok(s)


@pytest.mark.parametrize("n,h", [(2, -3), (3, -4), (4, -5), (5, -4)])
def test_labelling_counts_against_brute_force(n, h):
    for s in unlabeled_shapes(n):
        brute = brute_labelings(s, h)
        assert count_labelings(s, h) == brute
        assert sum(1 for _ in scale_labelings(s, h)) == brute


def test_small_census():
    stream, census = enumerate_trees(2, -3)
    assert census.labeled == 3 and census.unlabeled == 1
    assert sorted(t.scales[()] for t in stream) == [-2, -1, 0]
    _, census = enumerate_trees(4, -5)
    assert census.labeled == 125


def test_labelled_trees_respect_ordering():
    stream, _ = enumerate_trees(4, -4)
    for t in stream:
        for v in inner_vertices(t.shape):
            assert t.h_root + 1 <= t.scale(v) <= 0
            assert t.scale(v) > t.parent_scale(v) or (v == () and t.scale(v) == t.h_root + 1)
        for e in endpoints(t.shape):
            assert t.scale(e) == t.scale(e[:-1]) + 1


def test_top_vertex_parent():
    s = ((), ())
    assert GNTree(s, -4, {(): -3}).parent_scale(()) == -4
    assert GNTree(s, -4, {(): -1}).parent_scale(()) == -3


def test_largest_census_streams_lazily():
    stream, census = enumerate_trees(8, -12)
    assert census.unlabeled == 4279 <= census.bound
    first = next(stream)
    assert first.n == 8


@pytest.mark.parametrize("n,h,exc", [(9, -3, TooLarge), (3, -13, TooLarge), (3, 0, ValidationError)])
def test_caps(n, h, exc):
    with pytest.raises(exc):
        enumerate_trees(n, h)


def test_scaling_dimensions():
    assert scaling_dimension(2) == 1 and scaling_dimension(2, renormalized=False) == -1
    assert scaling_dimension(4) == 1 and scaling_dimension(4, renormalized=False) == 0
    assert scaling_dimension(2, 0, 1) == 1 and scaling_dimension(2, 0, 1, renormalized=False) == 0
    assert scaling_dimension(6) == 1
    assert scaling_dimension(0, 0, 3) == 1


def test_renormalized_dimensions_positive_without_phi():
    table = dimension_table(12)
    for (nPsi, nPhi, nA), D in table.items():
        if nPhi == 0 and nPsi > 0:
            assert D >= 1, (nPsi, nA)
    assert table[(2, 2, 0)] == 0


@pytest.mark.parametrize("args", [(3,), (2, 1), (-2,), (2.5,)])
def test_scaling_dimension_validation(args):
    with pytest.raises(ValidationError):
        scaling_dimension(*args)


def test_bound_audit_on_chain():
    t = chain_tree(4, -6)
    P = {v: (2, 0, 0) for v in inner_vertices(t.shape)}
    P.update({e: (2, 0, 0) for e in endpoints(t.shape)})
    P[()] = (2, 0, 0)
    a = dimensional_bound_audit(t, P)
    assert a.summable and not a.summable_bare
    # each inner vertex sits one scale above its parent
    assert a.log2_factor == -4 and a.log2_factor_bare == 4


def test_bound_audit_rejects_inconsistent_fields():
    t = chain_tree(1, -3)
    with pytest.raises(ValidationError):
        dimensional_bound_audit(t, {(): (6, 0, 0), (0,): (2, 0, 0), (1,): (2, 0, 0)})


def test_lambda_flow_matches_closed_form():
    lam, theta = 0.2, 0.5
    traj = flow_iterate({"lam": lam}, geometric_beta(lam, theta), -30)
    for h, l in zip(traj.scales, traj.lam):
        assert l - lam == pytest.approx(geometric_lambda_drift(lam, theta, h), rel=1e-12, abs=1e-16)
    assert all(traj.envelope_report()["within"].values())
    assert traj.speed_report()["within"]


def test_z_flow_is_product():
    lam, theta = 0.1, 0.7
    traj = flow_iterate({}, geometric_beta(lam, theta, which=("z",), sign=-1.0), -15)
    expect = np.cumprod([1.0] + [1 - lam ** 2 * 2.0 ** (theta * k) for k in range(0, -15, -1)])
    assert np.allclose(traj.Z, expect, rtol=1e-14)


def test_nu_recursion():
    model = BetaModel({"nu": lambda k, s: 0.0}, 1.0, 0.5, 0.1)
    traj = flow_iterate({"nu": 1e-3}, model, -5)
    assert traj.nu == pytest.approx([1e-3 * 2 ** i for i in range(6)])


def test_beta_envelope_enforced():
    model = BetaModel({"v": lambda k, s: 0.5}, 1.0, 0.5, 0.1)
    with pytest.raises(BetaBoundViolated):
        flow_iterate({}, model, -3)


def test_nu_fixed_point_constant_beta():
    r = nu_fixed_point(constant_beta_nu(0.05), theta=0.5, h_min=-20)
    assert np.allclose(r.nu, nu_closed_form_constant(0.05, 0.5, -20), rtol=1e-12)


def test_nu_fixed_point_linear_beta():
    r = nu_fixed_point(theta=0.5, h_min=-20, lam=0.1)
    assert r.contraction < 1 and r.within_envelope
    f = linear_beta_nu(0.1)
    # fixed point: applying the map once more leaves nu unchanged
    again = nu_fixed_point(lambda j, nu: f(j, r.nu), theta=0.5, h_min=-20, lam=0.1)
    assert np.allclose(again.nu, r.nu, rtol=1e-12)


def test_contraction_scales_with_coupling():
    a = nu_fixed_point(lam=0.1).contraction
    b = nu_fixed_point(lam=0.05).contraction
    assert a / b == pytest.approx(2.0, rel=1e-6)


def test_no_contraction_for_large_coupling():
    with pytest.raises(NoContraction):
        nu_fixed_point(lam=1.0)
