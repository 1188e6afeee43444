import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wpcurv.constants import c_of_r
from wpcurv.curvature import hol_sec_curvature, scalar_curvature, tensor
from wpcurv.operator import (
    CurvatureOperatorMatrix,
    EigenSolverError,
    MatrixAsymmetryError,
    WedgeBasis,
    apply_J,
    assemble_matrix,
    kernel_element,
    q_form,
    q_form_bounds,
    special_element,
    spectrum,
    wedge_norm2,
)

from helpers import synthetic

wb3 = WedgeBasis(3)
wedge_vectors = arrays(np.float64, wb3.size, elements=st.floats(-10, 10))


@pytest.fixture(scope="module")
def T(basis, kernel):
    return tensor(basis, kernel)


@pytest.fixture(scope="module")
def M(T):
    return assemble_matrix(T)


@pytest.fixture(scope="module")
def eig(M):
    return spectrum(M)


def test_wedge_basis_count():
    assert wb3.size == 15
    assert len(wb3.labels()) == 15
    for g in (2, 3, 4):
        n = 3 * g - 3
        assert WedgeBasis(n).size == n * (6 * g - 7)


def test_wedge_norm_is_coefficient_sum():
    a, b, c = np.arange(3.0), np.arange(9.0).reshape(3, 3), -np.arange(3.0)
    A = wb3.join(a, b, c)
    assert wedge_norm2(A) == np.sum(a ** 2) + np.sum(b ** 2) + np.sum(c ** 2)
    back = wb3.split(A)
    assert np.array_equal(back[1], b)


@given(wedge_vectors)
def test_J_is_an_involution(A):
    assert np.array_equal(apply_J(apply_J(A, wb3), wb3), A)


def test_J_on_basis_elements():
    labels = wb3.labels()
    e = np.eye(15)
    assert labels[np.argmax(apply_J(e[labels.index("x1^x2")], wb3))] == "y1^y2"
    assert labels[np.argmax(apply_J(e[labels.index("x1^y2")], wb3))] == "x2^y1"
    assert labels[np.argmax(apply_J(e[labels.index("y2^y3")], wb3))] == "x2^x3"


def test_kernel_span_dimension():
    span = np.array([kernel_element(e, wb3) for e in np.eye(15)])
    assert np.linalg.matrix_rank(span, tol=1e-10) == 6


def test_matrix_symmetric(M):
    assert np.array_equal(M.matrix, M.matrix.T)


def test_asymmetric_tensor_rejected(T):
    bad = type(T)(T.R.copy(), T.products, T.d_products, T.weights)
    bad.R[0, 1, 0, 2] += 1e-3
    with pytest.raises(MatrixAsymmetryError):
        assemble_matrix(bad)


def test_diagonal_entry_is_hol_sec(M, basis, kernel, grid):
    labels = M.basis.labels()
    for i in range(3):
        k = labels.index(f"x{i + 1}^y{i + 1}")
        assert M.matrix[k, k] == pytest.approx(hol_sec_curvature(basis.mus[i], kernel, grid), rel=1e-10)


def test_trace_is_scalar_curvature(M, basis, kernel):
    from wpcurv.curvature import scalar_from_fields
    sca = scalar_from_fields(basis, kernel)
    assert abs(M.trace - sca) <= 0.01 * abs(sca)


def test_dual_path_agreement(M, basis, kernel, rng):
    for _ in range(50):
        A = rng.normal(size=15)
        q = q_form(A, basis, kernel)
        assert abs(M.quadratic_form(A) - q) <= 1e-5 * wedge_norm2(A)
        assert abs(M.quadratic_form(A) - q) <= 1e-5 * abs(q)


def test_q_form_two_methods(basis, kernel, rng):
    for _ in range(5):
        A = rng.normal(size=15)
        assert q_form(A, basis, kernel, "direct") == pytest.approx(q_form(A, basis, kernel, "fields"), rel=1e-10)
    with pytest.raises(ValueError):
        q_form(A, basis, kernel, "other")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["direct", "fields"]))
def test_dual_path_on_synthetic_data(seed, method):
    # the frame conversion and the F/H formula agree for arbitrary fields and kernels
    basis, kern = synthetic(seed)
    M = assemble_matrix(tensor(basis, kern))
    A = np.random.default_rng(seed).normal(size=15)
    q = q_form(A, basis, kern, method)
    assert M.quadratic_form(A) == pytest.approx(q, rel=1e-9, abs=1e-12)


def test_q_form_nonpositive_with_bounds(basis, kernel, rng):
    for _ in range(20):
        A = rng.normal(size=15)
        b = q_form_bounds(A, basis, kernel)
        assert b["q"] <= 1e-12
        assert b["pass"]


def test_zero_eigenvectors(M, rng):
    for _ in range(50):
        B = rng.normal(size=15)
        assert np.linalg.norm(M @ kernel_element(B, wb3)) <= 1e-6 * np.linalg.norm(B)
        assert abs(M.quadratic_form(kernel_element(B, wb3))) <= 1e-6 * wedge_norm2(B)


def test_spectrum_counts(eig):
    assert eig.n_negative == 9
    assert eig.n_zero == 6
    assert eig.n_positive == 0
    assert eig.n_negative + eig.n_zero == 15
    assert eig.lambda_min == eig.eigenvalues.min()


def test_negative_semidefinite(eig, M):
    assert eig.lambda_max <= 1e-6 * np.abs(M.matrix).max()


def test_lambda_min_window(eig, T, pipe):
    lam = eig.lambda_min
    assert lam <= -1 / (2 * math.pi) - 1e-3
    assert lam <= 2 * scalar_curvature(T) / 9 - 1e-3
    assert lam >= -32 * c_of_r(pipe.inj)


def test_index_bounds(eig, pipe):
    neg = np.sort(eig.eigenvalues)[:9][::-1]
    for i, li in enumerate(neg, start=1):
        assert li >= -6 * c_of_r(pipe.inj) / (9 - i + 1)


def test_special_element(M, T):
    A0 = special_element(wb3)
    assert wedge_norm2(A0) == pytest.approx(1.0)
    assert M.quadratic_form(A0) <= 2 * scalar_curvature(T) / 9


def test_random_unit_lower_bound(M, pipe, rng):
    for _ in range(100):
        A = rng.normal(size=15)
        A /= np.linalg.norm(A)
        assert M.quadratic_form(A) >= -32 * c_of_r(pipe.inj)


def test_zero_tol_explicit(M):
    sp = spectrum(M, zero_tol=1e-3)
    assert sp.zero_tol == 1e-3
    assert sp.n_zero == 6


def test_eigensolver_failure_reported():
    bad = CurvatureOperatorMatrix(np.full((15, 15), np.nan), wb3)
    with pytest.raises(EigenSolverError):
        spectrum(bad)
