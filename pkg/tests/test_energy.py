import numpy as np
import pytest
from scipy.spatial import Delaunay

from frankoseen import fem
from frankoseen.energy import (FrankConstants, boundary_error, constraint_error, energy,
                               energy_and_gradient, energy_gradient, first_variation,
                               freedericksz_threshold, helein_margin, modified_constants)
from frankoseen.fem import DofMap
from frankoseen.mesh import _finalize, build_ball_mesh, build_box_mesh

from conftest import random_unit_field


def radial(X):
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def wavy_H(X):
    return np.stack([np.sin(X[..., 1]), 1.0 + X[..., 0] * X[..., 2], np.cos(X[..., 0])], axis=-1)


# ------------------------------------------------------------ constants

def test_modified_constants_examples():
    mc = modified_constants(FrankConstants(1, 1, 1))
    assert (mc.c0, mc.c1, mc.c2, mc.c3) == (1, 0, 0, 0)
    mc = modified_constants(FrankConstants(1, 0.1, 1))
    assert mc.c0 == 0.1
    assert (mc.c1, mc.c2, mc.c3) == pytest.approx((0.9, 0.0, 0.9))
    mc = modified_constants(FrankConstants(1, 2, 2))
    assert (mc.c0, mc.c1, mc.c2, mc.c3) == (1, 0, 1, 1)


@pytest.mark.parametrize("bad", [dict(k1=0, k2=1, k3=1), dict(k1=1, k2=-1, k3=1),
                                 dict(k1=1, k2=1, k3=1, chi_A=-0.1)])
def test_frank_constants_reject_invalid(bad):
    with pytest.raises(ValueError):
        FrankConstants(**bad)


def test_helein_margin_examples():
    assert helein_margin(FrankConstants(1, .75, 1)) == pytest.approx(-1)
    assert helein_margin(FrankConstants(1, .75, 3)) == pytest.approx(1)
    assert helein_margin(FrankConstants(1, .75, 5)) == pytest.approx(3)
    assert helein_margin(FrankConstants(1, 1, 1)) == 1


def test_freedericksz_threshold():
    assert freedericksz_threshold(2.3, 1.21, 0.5) == pytest.approx(1.3787, abs=1e-4)
    assert freedericksz_threshold(1, 1, 0.5) == 1
    assert freedericksz_threshold(2.3, 1.21, 1.0) == pytest.approx(freedericksz_threshold(2.3, 1.21, 0.5) / 2)
    with pytest.raises(ValueError):
        freedericksz_threshold(1, 0, 0.5)
    with pytest.raises(ValueError):
        freedericksz_threshold(1, 1, 0)


# --------------------------------------------------------------- energy

def test_constant_field_has_zero_energy(unit_cube):
    n = np.tile([0.0, 0.0, 1.0], (unit_cube.n_vertices, 1))
    b = energy(unit_cube, n, FrankConstants(1, 2, 3))
    assert all(abs(v) < 1e-13 for v in b.as_dict().values())
    f = first_variation(unit_cube, n, FrankConstants(1, 2, 3),
                        DofMap.from_dirichlet(unit_cube.n_vertices, unit_cube.boundary_nodes))
    assert np.abs(f).max() < 1e-13


def test_shear_field_hand_integrals(unit_cube):
    X = unit_cube.vertices
    n = np.column_stack([X[:, 1], 0 * X[:, 0], 0 * X[:, 0]])
    b = energy(unit_cube, n, FrankConstants(1, 1, 2))
    assert b.one_constant == pytest.approx(0.5, rel=1e-12)
    assert b.bend == pytest.approx(1 / 3, rel=1e-12)
    assert b.bend_w == pytest.approx(1 / 6, rel=1e-12)
    assert b.splay == pytest.approx(0, abs=1e-14)
    assert b.twist == pytest.approx(0, abs=1e-14)
    assert b.total == pytest.approx(2 / 3, rel=1e-12)


def test_total_is_sum_of_parts(unit_cube):
    n = random_unit_field(unit_cube.n_vertices, 3)
    b = energy(unit_cube, n, FrankConstants(2, 1, 3, chi_A=0.5, H=(0, 1, 2)))
    parts = b.one_constant + b.splay_w + b.twist_w + b.bend_w + b.magnetic
    assert b.total == pytest.approx(parts, rel=1e-12)
    assert min(b.splay, b.twist, b.bend) >= 0


def test_one_constant_reduces_to_dirichlet(unit_cube):
    n = random_unit_field(unit_cube.n_vertices, 4)
    b = energy(unit_cube, n, FrankConstants(1, 1, 1))
    K = fem.vector_stiffness(unit_cube)
    flat = n.T.ravel()
    assert b.elastic == pytest.approx(0.5 * flat @ K @ flat, rel=1e-12)


def test_lagrange_identity(unit_cube):
    n = random_unit_field(unit_cube.n_vertices, 5) * 1.3
    b = energy(unit_cube, n, FrankConstants(1, 1, 1))
    bary, w = fem.quadrature_rule(4)
    nq = fem.values_at_points(unit_cube, n, bary)
    curl = fem.curl_from_gradient(fem.field_gradients(unit_cube, n))
    integrand = np.einsum("mqi,mqi->mq", nq, nq) * np.sum(curl ** 2, axis=1)[:, None]
    ref = float((integrand @ w) @ unit_cube.geometry.volumes)
    assert b.twist + b.bend == pytest.approx(ref, rel=1e-10)


def test_magnetic_energy_bounds(unit_cube):
    rng = np.random.default_rng(1)
    H = np.array([0.3, -1.0, 2.0])
    fc = FrankConstants(1, 1, 1, chi_A=0.7, H=H)
    for seed in range(5):
        n = random_unit_field(unit_cube.n_vertices, seed) * rng.uniform(0.5, 1.5)
        b = energy(unit_cube, n, fc)
        sup = np.max(np.sum(n * n, axis=1))
        assert b.magnetic <= 0
        assert b.magnetic >= -0.5 * fc.chi_A * sup * (H @ H) * unit_cube.volume - 1e-12
    # aligned unit field attains -(chi/2)|H|^2 |Omega|
    n = np.tile(H / np.linalg.norm(H), (unit_cube.n_vertices, 1))
    assert energy(unit_cube, n, fc).magnetic == pytest.approx(-0.5 * 0.7 * (H @ H), rel=1e-12)


def test_variable_field_uses_exact_quadrature():
    m = build_box_mesh((0, 0, 0), (1, 1, 1), 1, 1, 1)
    n = np.tile([1.0, 0.0, 0.0], (m.n_vertices, 1))
    fc = FrankConstants(1, 1, 1, chi_A=2.0, H=lambda X: np.stack([X[..., 0], 0 * X[..., 0], 0 * X[..., 0]], -1))
    # -(chi/2) int x^2 over the unit cube
    assert energy(m, n, fc).magnetic == pytest.approx(-1 / 3, rel=1e-12)


def test_vertex_reordering_invariance():
    m = build_box_mesh((0, 0, 0), (1, 1, 0.5), 2, 2, 2)
    rng = np.random.default_rng(7)
    n = random_unit_field(m.n_vertices, 8)
    perm = rng.permutation(m.n_vertices)
    inv = np.argsort(perm)
    m2 = _finalize(m.vertices[perm], inv[m.tets], lambda c: np.full(len(c), "b", dtype=object))
    fc = FrankConstants(2.3, 1.5, 4.8, chi_A=1.21, H=(0, 0, 9.5))
    assert energy(m2, n[perm], fc).total == pytest.approx(energy(m, n, fc).total, rel=1e-12)


# ------------------------------------------------------ first variation

TERM_CONSTANTS = {
    "one_constant": (FrankConstants(1, 1, 1), "one_constant"),
    "splay": (FrankConstants(2, 1, 1), "splay_w"),
    "twist": (FrankConstants(1, 2, 1), "twist_w"),
    "bend": (FrankConstants(1, 1, 2), "bend_w"),
    "magnetic": (FrankConstants(1, 1, 1, chi_A=1.3, H=(0.4, -1.0, 0.7)), "magnetic"),
    "magnetic_variable": (FrankConstants(1, 1, 1, chi_A=1.3, H=wavy_H), "magnetic"),
}


@pytest.mark.parametrize("term", sorted(TERM_CONSTANTS))
def test_gradient_matches_finite_differences_per_term(term):
    fc, attr = TERM_CONSTANTS[term]
    m = build_box_mesh((0, 0, 0), (1, 1, 1), 2, 1, 1)
    rng = np.random.default_rng(11)
    n = rng.standard_normal((m.n_vertices, 3))
    v = rng.standard_normal((m.n_vertices, 3))
    name = "magnetic" if term.startswith("magnetic") else term
    _, g = energy_and_gradient(m, n, fc, terms=(name,))
    e = 1e-5
    fd = (getattr(energy(m, n + e * v, fc), attr) - getattr(energy(m, n - e * v, fc), attr)) / (2 * e)
    assert np.sum(g * v) == pytest.approx(fd, rel=1e-6)


def test_first_variation_full_energy():
    m = build_box_mesh((0, 0, 0), (1, 1, 1), 2, 1, 1)
    fc = FrankConstants(2.3, 1.5, 4.8, chi_A=1.21, H=wavy_H)
    dm = DofMap.from_dirichlet(m.n_vertices, [0, 1])
    rng = np.random.default_rng(12)
    n = rng.standard_normal((m.n_vertices, 3))
    v = dm.extend(rng.standard_normal(3 * dm.n_free))
    f = first_variation(m, n, fc, dm)
    e = 1e-5
    fd = (energy(m, n + e * v, fc).total - energy(m, n - e * v, fc).total) / (2 * e)
    assert -f @ dm.restrict(v) == pytest.approx(fd, rel=1e-6)


def test_first_variation_one_constant_is_stiffness(unit_cube):
    dm = DofMap.from_dirichlet(unit_cube.n_vertices, unit_cube.boundary_nodes)
    n = random_unit_field(unit_cube.n_vertices, 9)
    f = first_variation(unit_cube, n, FrankConstants(3, 3, 3), dm)
    K = fem.vector_stiffness(unit_cube)
    expect = -3 * dm.restrict((K @ n.T.ravel()).reshape(3, -1).T)
    assert np.allclose(f, expect, atol=1e-12)


def test_energy_gradient_wrapper(unit_cube):
    n = random_unit_field(unit_cube.n_vertices, 2)
    fc = FrankConstants(1, 2, 3)
    assert np.array_equal(energy_gradient(unit_cube, n, fc), energy_and_gradient(unit_cube, n, fc)[1])
    assert energy_and_gradient(unit_cube, n, fc, want_gradient=False)[1] is None


# ---------------------------------------------------------- diagnostics

def _err1_oracle(mesh, q):
    """Clip each tet at the zero level of the linear interpolant, tessellate
    both pieces with Delaunay and integrate |u| simplex by simplex."""
    total = 0.0
    for tet in mesh.tets:
        P = mesh.vertices[tet]
        u = q[tet]
        pts = [(P[a], u[a]) for a in range(4)]
        for a in range(4):
            for b in range(a + 1, 4):
                if u[a] * u[b] < 0:
                    t = u[a] / (u[a] - u[b])
                    pts.append((P[a] + t * (P[b] - P[a]), 0.0))
        for sign in (1, -1):
            piece = [(x, val) for x, val in pts if sign * val >= 0]
            X = np.array([x for x, _ in piece])
            if len(X) < 4 or np.linalg.matrix_rank(X[1:] - X[0]) < 3:
                continue
            vals = np.array([val for _, val in piece])
            for s in Delaunay(X).simplices:
                vol = abs(np.linalg.det(X[s[1:]] - X[s[0]])) / 6
                total += vol * sign * vals[s].mean()
    return total


def test_constraint_error_unit_field_is_zero(unit_cube):
    n = random_unit_field(unit_cube.n_vertices)
    assert constraint_error(unit_cube, n, 1) == pytest.approx(0, abs=1e-14)
    assert constraint_error(unit_cube, n, np.inf) == pytest.approx(0, abs=1e-14)


def test_constraint_error_single_node(unit_cube):
    n = random_unit_field(unit_cube.n_vertices)
    z = 13                       # centre vertex of the 2x2x2 cube
    n[z] *= np.sqrt(2)
    assert constraint_error(unit_cube, n, "inf") == pytest.approx(1.0, rel=1e-14)
    omega = fem.lumped_mass_weights(unit_cube)[z]
    assert constraint_error(unit_cube, n, 1) == pytest.approx(omega, rel=1e-12)
    q = np.sum(n * n, axis=1) - 1
    assert constraint_error(unit_cube, n, 1) == pytest.approx(_err1_oracle(unit_cube, q), rel=1e-12)


def test_constraint_error_matches_clipping_oracle():
    m = build_ball_mesh(1.0, cells=5, jitter=0.1)
    rng = np.random.default_rng(3)
    n = random_unit_field(m.n_vertices) * rng.uniform(0.7, 1.3, size=(m.n_vertices, 1))
    q = np.sum(n * n, axis=1) - 1
    assert constraint_error(m, n, 1) == pytest.approx(_err1_oracle(m, q), rel=1e-10)


def test_constraint_error_rejects_p(unit_cube):
    with pytest.raises(ValueError):
        constraint_error(unit_cube, np.ones((unit_cube.n_vertices, 3)), 2)


def test_boundary_error():
    m = build_box_mesh((0, 0, 0), (1, 1, 1), 2, 2, 2)
    g = lambda X: X @ np.array([[1.0, 2, 0], [0, 1, 0], [3, 0, 1]]).T + 0.5
    assert boundary_error(m, fem.interpolate(g, m), g) == pytest.approx(0, abs=1e-12)
    e3 = lambda X: np.tile([0.0, 0.0, 1.0], (len(X), 1))
    assert boundary_error(m, fem.interpolate(e3, m), e3) == 0
    coarse, fine = build_ball_mesh(1.0, 0), build_ball_mesh(1.0, 1)
    ec = boundary_error(coarse, fem.interpolate(radial, coarse), radial)
    ef = boundary_error(fine, fem.interpolate(radial, fine), radial)
    assert 0 < ef < ec


# ----------------------------------------------------- hedgehog values

@pytest.fixture(scope="module")
def hedgehog_fine():
    m = build_ball_mesh(1.0, cells=47, jitter=0.1)      # h = 2^{-9/2}
    return energy(m, fem.interpolate(radial, m), FrankConstants(1, 0.1, 1))


def test_hedgehog_interpolant_splay_and_bend(hedgehog_fine):
    assert hedgehog_fine.splay == pytest.approx(49.4, rel=0.15)
    assert hedgehog_fine.bend == pytest.approx(0.141, rel=0.15)


@pytest.mark.xfail(strict=True, reason="twist of the interpolated hedgehog is a pure mesh artefact; "
                                       "the structured ball mesh produces about half the tabulated value")
def test_hedgehog_interpolant_twist(hedgehog_fine):
    assert hedgehog_fine.twist == pytest.approx(0.0351, rel=0.15)
