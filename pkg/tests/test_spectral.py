import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracch.spectral import (
    Field,
    SpectralError,
    apply_power,
    build_cosine_operator,
    build_custom_operator,
    change_of_basis,
    dual_norm,
    frac_norm,
    mean_value,
    orthonormality_residual,
    poincare_constant,
    project_kernel,
    to_modal,
    to_nodal,
)


def cosine_basis(n, length):
    """Nodal values of the L2-orthonormal Neumann cosines, written out directly."""
    x = (np.arange(n) + 0.5) * length / n
    e = np.sqrt(2 / length) * np.cos(np.outer(x, np.arange(n)) * np.pi / length)
    e[:, 0] = 1 / np.sqrt(length)
    return x, e


def test_cosine_eigenvalues():
    assert np.allclose(build_cosine_operator(4, np.pi).eigenvalues, [0, 1, 4, 9], atol=1e-14)
    assert np.allclose(build_cosine_operator(2, 2 * np.pi).eigenvalues, [0, 0.25])
    op = build_cosine_operator(8, 3.0)
    assert op.kernel_dim == 1 and op.has_constant_mode


def test_cosine_orthonormal():
    assert orthonormality_residual(build_cosine_operator(64, np.pi)) <= 1e-10


@pytest.mark.parametrize("n,length", [(1, 1.0), (4, 0.0), (4, -1.0)])
def test_cosine_rejects_bad_input(n, length):
    with pytest.raises(SpectralError):
        build_cosine_operator(n, length)


def test_transform_matches_explicit_cosines():
    op = build_cosine_operator(16, 2.5)
    x, e = cosine_basis(16, 2.5)
    v = np.exp(np.sin(3 * x))
    coeffs = (2.5 / 16) * e.T @ v
    assert np.allclose(to_modal(v, op).coeffs, coeffs, atol=1e-13)
    assert np.allclose(op.basis_matrix(), e, atol=1e-13)


def test_constant_field():
    op = build_cosine_operator(8, np.pi)
    f = to_modal(np.full(8, 3.0), op)
    assert f.coeffs[0] == pytest.approx(3 * np.sqrt(np.pi))
    assert np.max(np.abs(f.coeffs[1:])) <= 1e-14
    assert mean_value(f) == pytest.approx(3.0)
    assert np.all(to_modal(np.zeros(8), op).coeffs == 0)


def test_transform_length_mismatch():
    with pytest.raises(SpectralError):
        to_modal(np.ones(5), build_cosine_operator(8, 1.0))


@pytest.mark.parametrize("n", [2, 17, 64, 256])
def test_round_trip(n):
    op = build_cosine_operator(n, np.pi)
    v = np.random.default_rng(n).normal(size=n)
    back = to_nodal(to_modal(v, op))
    assert np.linalg.norm(back - v) <= 1e-10 * np.linalg.norm(v)


def test_parseval():
    op = build_cosine_operator(32, 2.0)
    v = np.random.default_rng(3).normal(size=32)
    f = to_modal(v, op)
    quad = np.sqrt(op.weight * np.sum(v ** 2))
    assert f.norm() == pytest.approx(quad, rel=1e-10)


def test_custom_operator():
    op = build_custom_operator([0, 0, 2], np.eye(3))
    assert op.kernel_dim == 2
    assert build_custom_operator([1, 3]).kernel_dim == 0
    with pytest.raises(SpectralError):
        build_custom_operator([0, -1, 2])
    with pytest.raises(SpectralError):
        build_custom_operator([0, 2, 1])
    with pytest.raises(SpectralError):
        build_custom_operator([0, 1], np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_apply_power_examples():
    op = build_custom_operator([0, 1, 4])
    out = apply_power(op, 0.5, Field(np.array([2.0, 3.0, 5.0]), op))
    assert np.allclose(out.coeffs, [0, 3, 10])
    ones = build_custom_operator([1, 1, 1])
    v = Field(np.array([1.0, -2.0, 0.5]), ones)
    for r in (0.1, 1.0, 3.7):
        assert np.array_equal(apply_power(ones, r, v).coeffs, v.coeffs)
    with pytest.raises(SpectralError):
        apply_power(op, 0.0, v)


def test_frac_norm_examples():
    op = build_custom_operator([0, 4])
    assert frac_norm(op, 1.0, Field(np.array([2.0, 3.0]), op)) == pytest.approx(np.sqrt(148))
    assert frac_norm(op, 1.0, op.zeros()) == 0.0
    pos = build_custom_operator([1, 2])
    assert frac_norm(pos, 1.0, Field(np.array([1.0, 1.0]), pos)) == pytest.approx(np.sqrt(5))


def test_dual_norm():
    op = build_custom_operator([0, 4])
    assert dual_norm(op, 0.5, Field(np.array([0.0, 6.0]), op)) == pytest.approx(3.0)
    assert dual_norm(op, 0.5, op.zeros()) == 0.0
    with pytest.raises(SpectralError):
        dual_norm(op, 0.5, Field(np.array([1.0, 6.0]), op), strict=True)


def test_dual_pairing_bound():
    op = build_cosine_operator(32, np.pi)
    rng = np.random.default_rng(7)
    for _ in range(20):
        c = rng.normal(size=32)
        c[0] = 0.0
        psi = Field(c, op)
        assert dual_norm(op, 0.5, psi) * frac_norm(op, 0.5, psi) >= psi.inner(psi) * (1 - 1e-10)


def test_projection():
    op = build_custom_operator([0, 1, 2])
    assert np.array_equal(project_kernel(op, Field(np.array([5.0, 2.0, 1.0]), op)).coeffs, [5, 0, 0])
    pos = build_custom_operator([1, 2, 3])
    assert np.all(project_kernel(pos, Field(np.ones(3), pos)).coeffs == 0)
    cos = build_cosine_operator(16, 1.0)
    v = Field(np.random.default_rng(1).normal(size=16), cos)
    pv = project_kernel(cos, v)
    assert (project_kernel(cos, pv) - pv).norm() <= 1e-14
    assert abs(pv.inner(v - pv)) <= 1e-14


def test_mean_value_examples():
    op = build_cosine_operator(3, np.pi)
    assert mean_value(Field(np.array([2 * np.sqrt(np.pi), 1.0, 0.0]), op)) == pytest.approx(2.0)
    assert mean_value(Field(np.array([0.0, 0.0, 1.0]), op)) == 0.0
    with pytest.raises(SpectralError):
        mean_value(Field(np.ones(2), build_custom_operator([1, 2])))


def test_poincare_equality_on_second_mode():
    op = build_cosine_operator(16, np.pi)
    r = 0.7
    c = np.zeros(16)
    c[1] = 2.0
    v = Field(c, op)
    assert v.norm() == pytest.approx(poincare_constant(op, r) * np.linalg.norm(apply_power(op, r, v).coeffs))


def test_change_of_basis_identity():
    op = build_cosine_operator(12, 1.5)
    assert np.allclose(change_of_basis(op, op), np.eye(12), atol=1e-13)


coeff_lists = st.lists(st.floats(-10, 10), min_size=16, max_size=16).map(np.array)
exps = st.floats(0.05, 2.0)


@settings(max_examples=60, deadline=None)
@given(coeff_lists, exps, exps)
def test_power_semigroup(c, r, s):
    op = build_cosine_operator(16, np.pi)
    v = Field(c, op)
    lhs = apply_power(op, r, apply_power(op, s, v)).coeffs
    rhs = apply_power(op, r + s, v).coeffs
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(np.linalg.norm(rhs), 1e-300)


@settings(max_examples=60, deadline=None)
@given(coeff_lists, coeff_lists)
def test_projection_symmetric(a, b):
    op = build_cosine_operator(16, np.pi)
    v, w = Field(a, op), Field(b, op)
    assert abs(project_kernel(op, v).inner(w) - v.inner(project_kernel(op, w))) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(coeff_lists, exps)
def test_poincare(c, r):
    op = build_cosine_operator(16, np.pi)
    c = c.copy()
    c[0] = 0.0
    v = Field(c, op)
    assert v.norm() <= poincare_constant(op, r) * np.linalg.norm(apply_power(op, r, v).coeffs) * (1 + 1e-12) + 1e-300


@settings(max_examples=60, deadline=None)
@given(coeff_lists, coeff_lists, st.floats(-5, 5), exps)
def test_frac_norm_is_norm(a, b, alpha, r):
    op = build_cosine_operator(16, np.pi)
    u, v = Field(a, op), Field(b, op)
    n = lambda f: frac_norm(op, r, f)
    assert n(u + v) <= n(u) + n(v) + 1e-10 * (1 + n(u) + n(v))
    assert n(u * alpha) == pytest.approx(abs(alpha) * n(u), rel=1e-10, abs=1e-10)
