import math

import numpy as np
import pytest

from conelrt import geometry as geo


def fd_reference(cs, x, h=1e-5):
    n = cs.dim
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        hi = geo.project(cs, x + e).point
        lo = geo.project(cs, x - e).point
        J[:, j] = (hi - lo) / (2 * h)
    return J


def test_orthant_jacobian_example():
    J = geo.jacobian(geo.orthant(3), np.array([1.0, -2.0, 3.0]))
    np.testing.assert_allclose(J.entries, np.diag([1.0, 0.0, 1.0]))
    assert J.exactness == geo.CLOSED_FORM


def test_monotone_jacobian_example():
    J = geo.jacobian(geo.monotone(3), np.array([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(J.entries, np.full((3, 3), 1.0 / 3.0))
    assert J.exactness == geo.CLOSED_FORM


def test_subspace_jacobian_example():
    J = geo.jacobian(geo.span_of([[1.0, 1.0]]), np.array([0.3, -0.7]))
    np.testing.assert_allclose(J.entries, [[0.5, 0.5], [0.5, 0.5]])


@pytest.mark.parametrize("make", [
    lambda rng: geo.orthant(8),
    lambda rng: geo.monotone(8),
    lambda rng: geo.subspace(np.linalg.qr(rng.standard_normal((8, 3)))[0]),
    lambda rng: geo.poly_subspace(8, 2),
])
def test_closed_form_matches_finite_differences_on_50_points(make):
    rng = np.random.default_rng(21)
    cs = make(rng)
    done = 0
    while done < 50:
        x = 2.0 * rng.standard_normal(cs.dim)
        try:
            J = geo.jacobian(cs, x)
        except geo.BoundaryDegeneracyError:
            continue
        ref = fd_reference(cs, x)
        assert np.max(np.abs(J.entries - ref)) <= 1e-4, cs.tag
        done += 1


def test_spectral_norm_bounded_by_one():
    rng = np.random.default_rng(22)
    sets = [geo.orthant(7), geo.monotone(7), geo.circular(7, math.pi / 5),
            geo.product_circular(7, math.pi / 5), geo.k_monotone(7, 1),
            geo.poly_subspace(7, 1)]
    for cs in sets:
        for _ in range(5):
            x = 2.0 * rng.standard_normal(cs.dim)
            try:
                J = geo.jacobian(cs, x).entries
            except geo.BoundaryDegeneracyError:
                continue
            s = np.linalg.svd(J, compute_uv=False)[0]
            assert s <= 1 + 1e-6, cs.tag
            s2 = np.linalg.svd(np.eye(cs.dim) - J, compute_uv=False)[0]
            assert s2 <= 1 + 1e-4, cs.tag


def test_polyhedral_closed_forms_are_orthogonal_projections():
    rng = np.random.default_rng(23)
    for cs in (geo.orthant(9), geo.monotone(9), geo.poly_subspace(9, 2)):
        x = rng.standard_normal(9)
        J = geo.jacobian(cs, x)
        assert J.exactness == geo.CLOSED_FORM
        M = J.entries
        np.testing.assert_allclose(M, M.T, atol=1e-8)
        np.testing.assert_allclose(M @ M, M, atol=1e-8)


def test_trace_equals_face_dim_for_closed_forms():
    rng = np.random.default_rng(24)
    for cs in (geo.orthant(11), geo.monotone(11), geo.poly_subspace(11, 3)):
        x = rng.standard_normal(11)
        J = geo.jacobian(cs, x)
        fd = geo.project(cs, x).face_dim
        assert np.trace(J.entries) == pytest.approx(fd, abs=1e-9)


def test_kmono_fd_trace_near_face_dim():
    rng = np.random.default_rng(25)
    cs = geo.k_monotone(8, 1)
    x = 2.0 * rng.standard_normal(8)
    J = geo.jacobian(cs, x)
    assert J.exactness == geo.FINITE_DIFFERENCE
    fd = geo.project(cs, x).face_dim
    assert np.trace(J.entries) == pytest.approx(fd, abs=1e-3)


def test_degeneracy_detection():
    with pytest.raises(geo.BoundaryDegeneracyError):
        geo.jacobian(geo.orthant(3), np.array([1.0, 0.0, 2.0]))
    # circular-cone boundary point: ||w|| == tan(alpha) * t exactly
    with pytest.raises(geo.BoundaryDegeneracyError):
        geo.jacobian(geo.circular(2, math.pi / 4), np.array([1.0, 1.0]))
    # unconstrained fit exactly on the l1 sphere
    with pytest.raises(geo.BoundaryDegeneracyError):
        geo.jacobian(geo.l1_image(np.eye(2), 1.0), np.array([0.6, 0.4]))


def test_circular_fd_jacobian_flag():
    J = geo.jacobian(geo.circular(4, math.pi / 6), np.array([0.1, 1.0, -0.5, 0.2]))
    assert J.exactness == geo.FINITE_DIFFERENCE
