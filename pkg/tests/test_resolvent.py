import math

import numpy as np
import pytest

from wpcurv.fuchsian import InsufficientBallError
from wpcurv.hyperbolic import hyp_distance
from wpcurv.quadrature import build_grid
from wpcurv.resolvent import (
    apply_D,
    build_kernel,
    calibrate_normalization,
    disk_mass,
    free_kernel,
    legendre_q1,
    load_kernel,
)


@pytest.fixture(scope="module")
def coarse(domain, ball):
    g = build_grid(domain, 0.04)
    return g, build_kernel(g, ball)


def manufactured(ball, nodes, source, width):
    """u = sum over the orbit of source of exp(-d^2/width^2), and f = u - (Laplacian u)/2.

    (Delta - 2) u = -2 f, so D f = u exactly on the surface.
    """
    img, _ = ball.restrict(9.0).orbit(source)
    u = np.zeros(len(nodes))
    lap = np.zeros(len(nodes))
    for q in img:
        d = hyp_distance(nodes, np.full(len(nodes), q))
        phi = np.exp(-(d / width) ** 2)
        d_coth = np.ones_like(d)
        far = d > 1e-8
        d_coth[far] = d[far] / np.tanh(d[far])
        # radial Laplacian phi'' + coth(d) phi'
        u += phi
        lap += phi * (4 * d ** 2 / width ** 4 - 2 / width ** 2 - 2 * d_coth / width ** 2)
    return u, u - 0.5 * lap


def test_free_kernel_positive_and_decreasing():
    d = np.linspace(1e-3, 10, 2000)
    k = free_kernel(d)
    assert np.all(k > 0)
    assert np.all(np.diff(k) < 0)


def test_free_kernel_closed_form():
    d = np.array([0.1, 1.0, 3.0, 8.0])
    x = np.cosh(d)
    q1 = 0.5 * x * np.log((x + 1) / (x - 1)) - 1
    assert np.allclose(legendre_q1(x), q1, rtol=1e-10)
    assert np.allclose(free_kernel(d, normalization=1.0), q1, rtol=1e-10)


def test_free_kernel_log_singularity():
    # (Delta - 2) G = -2 delta, so G ~ -(2 / 2pi) ln d near the pole
    d1, d2 = 1e-6, 1e-7
    slope = (free_kernel(d2) - free_kernel(d1)) / math.log(d1 / d2)
    assert slope == pytest.approx(1 / math.pi, rel=1e-6)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_free_kernel_rejects_nonpositive_distance(d):
    with pytest.raises(ValueError):
        free_kernel(d)


def test_normalization_gives_unit_mass():
    c = calibrate_normalization()
    assert c == pytest.approx(1 / math.pi, rel=1e-10)
    assert disk_mass(40.0, c) == pytest.approx(1.0, abs=1e-12)


def test_unit_constant_preserved(kernel, grid):
    d1 = apply_D(kernel, np.ones(len(grid)))
    assert np.abs(d1 - 1).max() < 1e-3


def test_kernel_symmetric(kernel):
    assert kernel.symmetry_defect() < 1e-10


def test_kernel_positive(kernel):
    assert kernel.matrix().min() > 0
    assert kernel.is_positive_definite()


def test_contraction_on_random_fields(kernel, grid, rng):
    w = grid.weights
    x, y = grid.nodes.real, grid.nodes.imag
    for _ in range(100):
        c = rng.normal(size=5)
        f = c[0] + c[1] * x + c[2] * np.sin(5 * y) + c[3] * x * y + c[4] * np.cos(7 * x * y)
        f = f + 1j * rng.normal() * np.cos(3 * x)
        df = kernel.apply(f)
        pair = np.sum(df * np.conj(f) * w)
        norm = np.sum(np.abs(f) ** 2 * w)
        assert abs(pair.imag) < 1e-10 * norm
        assert 0 <= pair.real <= norm


def test_self_adjoint(kernel, grid, rng):
    w = grid.weights
    for _ in range(10):
        f, g = rng.normal(size=(2, len(grid)))
        lhs = np.sum(kernel.apply(f) * g * w)
        rhs = np.sum(f * kernel.apply(g) * w)
        nf, ng = math.sqrt(np.sum(f * f * w)), math.sqrt(np.sum(g * g * w))
        assert abs(lhs - rhs) <= 1e-8 * nf * ng


def test_spectrum_inside_unit_interval(kernel):
    assert kernel.largest_eigenvalue() <= 1 + 1e-3
    assert kernel.smallest_eigenvalue() >= -1e-6


def test_pointwise_third_bound(kernel, basis, rng):
    mus = list(basis.mus)
    for _ in range(20):
        c = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
        mus.append((c / np.linalg.norm(c)) @ basis.mus)
    for mu in mus:
        m2 = np.abs(mu) ** 2
        assert np.min(kernel.apply(m2) - m2 / 3) >= -1e-4


def test_dimension_mismatch_rejected(kernel, grid):
    with pytest.raises(ValueError):
        kernel.apply(np.ones(len(grid) - 1))


def test_small_ball_rejected(grid, ball):
    with pytest.raises(InsufficientBallError):
        build_kernel(grid, ball.restrict(8.0))


@pytest.mark.parametrize("source,width", [(0j, 1.0), (0.3 + 0.5j, 0.8), (0.7 + 0.2j, 1.2)])
def test_manufactured_solution(coarse, ball, source, width):
    # independent of the kernel construction: only the PDE (Delta - 2) u = -2 f is used
    g, kern = coarse
    u, f = manufactured(ball, g.nodes, source, width)
    err = np.abs(kern.apply(f) - u).max() / np.abs(u).max()
    assert err < 1e-2


def test_manufactured_solution_converges(coarse, grid, kernel, ball):
    g, kern = coarse
    errs = []
    for gg, kk in ((g, kern), (grid, kernel)):
        u, f = manufactured(ball, gg.nodes, 0.2 - 0.1j, 1.0)
        errs.append(np.abs(kk.apply(f) - u).max())
    assert errs[1] < errs[0] / 2


def test_kernel_dump_round_trip(coarse, tmp_path, rng):
    g, kern = coarse
    path = kern.save(tmp_path / "k.bin")
    back = load_kernel(path, g)
    assert np.array_equal(back.rows, kern.rows)
    assert back.far_constant == kern.far_constant
    f = rng.normal(size=len(g))
    assert np.allclose(back.apply(f), kern.apply(f), rtol=1e-13, atol=1e-15)


def test_kernel_dump_rejects_other_grid(coarse, grid, tmp_path):
    g, kern = coarse
    path = kern.save(tmp_path / "k.bin")
    with pytest.raises(ValueError):
        load_kernel(path, grid)
