import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wpcurv.constants import b_hat, c0, c_of_r
from wpcurv.curvature import (
    DegenerateDirectionError,
    TensorSymmetryError,
    hol_sec_bounds,
    hol_sec_curvature,
    real_frame_tensor,
    ricci_from_fields,
    ricci_from_tensor,
    scalar_bounds,
    scalar_curvature,
    scalar_from_fields,
    summarize,
    tensor,
    tensor_norm_report,
)
from wpcurv.operator import assemble_matrix

from helpers import synthetic


@pytest.fixture(scope="module")
def T(basis, kernel):
    return tensor(basis, kernel)


def test_diagonal_entries_positive(T, basis, kernel, grid):
    for i in range(basis.dim):
        m2 = np.abs(basis.mus[i]) ** 2
        expect = 2 * np.sum(kernel.apply(m2) * m2 * grid.weights)
        assert T.R[i, i, i, i].real == pytest.approx(expect, rel=1e-12)
        assert T.R[i, i, i, i].real > 0


def test_tensor_symmetries(T):
    for name, d in T.symmetry_defects().items():
        assert d < 1e-6, name


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tensor_symmetries_on_synthetic_data(seed):
    basis, kern = synthetic(seed)
    for d in tensor(basis, kern).symmetry_defects().values():
        assert d < 1e-10


def test_asymmetric_kernel_rejected():
    basis, kern = synthetic(0)
    kern._full = kern._full + np.triu(np.ones_like(kern._full))
    with pytest.raises(TensorSymmetryError):
        tensor(basis, kern)


def test_tensor_timing(basis, kernel):
    t = time.perf_counter()
    tensor(basis, kernel)
    assert time.perf_counter() - t < 60


def test_scalar_negative_and_bounded(T, basis, pipe):
    sca = scalar_curvature(T)
    assert sca < 0
    assert sca <= -3 / math.pi
    tr = basis.projector_trace()
    l2 = np.sum(tr * tr * basis.grid.weights)
    assert -2 * l2 <= sca <= -l2 / 3
    assert sca >= -6 * c_of_r(pipe.inj)
    assert all(q.holds for q in scalar_bounds(sca, basis, pipe.inj))


def test_scalar_two_paths(T, basis, kernel):
    assert scalar_curvature(T) == pytest.approx(scalar_from_fields(basis, kernel), rel=1e-10)


def test_ricci_two_groupings(T, basis, kernel):
    assert np.abs(ricci_from_tensor(T) - ricci_from_fields(basis, kernel)).max() < 1e-8
    assert ricci_from_tensor(T).sum() == pytest.approx(scalar_curvature(T), rel=1e-12)


def test_hol_sec_sandwich_and_sign(basis, kernel, grid, pipe, rng):
    dirs = list(basis.mus)
    for _ in range(10):
        c = rng.normal(size=3) + 1j * rng.normal(size=3)
        dirs.append(c @ basis.mus)
    for mu in dirs:
        k, ineq = hol_sec_bounds(mu, kernel, grid, pipe.inj)
        assert k < 0
        assert len(ineq) == 5
        assert all(q.holds for q in ineq)


def test_hol_sec_scale_invariant(basis, kernel, grid):
    mu = basis.mus[0] + 0.3j * basis.mus[2]
    k = hol_sec_curvature(mu, kernel, grid)
    assert hol_sec_curvature(2 * mu, kernel, grid) == pytest.approx(k, abs=1e-10)
    assert hol_sec_curvature(-0.1 * mu, kernel, grid) == pytest.approx(k, abs=1e-10)


def test_sup_bracket_needs_injectivity_one(basis, kernel, grid):
    _, thin = hol_sec_bounds(basis.mus[0], kernel, grid, inj=0.5)
    assert len(thin) == 3
    _, thick = hol_sec_bounds(basis.mus[0], kernel, grid, inj=1.0)
    assert thick[-1].rhs == pytest.approx(-c0() * (np.abs(basis.mus[0]) ** 2).max() ** 2, rel=1e-12)


def test_zero_direction_rejected(kernel, grid):
    with pytest.raises(DegenerateDirectionError):
        hol_sec_curvature(np.zeros(len(grid)), kernel, grid)


def test_real_frame_diagonal_is_hol_sec(T, basis, kernel, grid):
    rm = real_frame_tensor(T.R)
    n = basis.dim
    for i in range(n):
        # the plane x_i ^ y_i carries the holomorphic sectional curvature
        assert rm[i, n + i, i, n + i] == pytest.approx(hol_sec_curvature(basis.mus[i], kernel, grid), rel=1e-10)


def test_real_frame_symmetries(T):
    rm = real_frame_tensor(T.R)
    assert np.abs(rm + rm.transpose(1, 0, 2, 3)).max() < 1e-12
    assert np.abs(rm + rm.transpose(0, 1, 3, 2)).max() < 1e-12
    assert np.abs(rm - rm.transpose(2, 3, 0, 1)).max() < 1e-12
    # first Bianchi identity
    bianchi = rm + rm.transpose(0, 2, 3, 1) + rm.transpose(0, 3, 1, 2)
    assert np.abs(bianchi).max() < 1e-12


def test_tensor_norm_report(T, pipe):
    rep = tensor_norm_report(T, pipe.inj)
    assert rep["pass"]
    assert rep["bound"] == b_hat(pipe.inj)
    assert rep["max_component"] <= rep["bound"]


def test_summary_ledger_all_pass(T, basis, kernel, pipe):
    s = summarize(T, basis, kernel, pipe.inj)
    assert s.scalar < 0 and np.all(s.hol_sec < 0)
    assert all(q.holds for q in s.ledger)
    d = s.to_dict()
    assert len(d["ricci"]) == 3 and len(d["ledger"]) == len(s.ledger)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trace_of_operator_is_scalar_on_synthetic_data(seed):
    basis, kern = synthetic(seed)
    T = tensor(basis, kern)
    assert assemble_matrix(T).trace == pytest.approx(scalar_curvature(T), rel=1e-10)
