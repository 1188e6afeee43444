import math

import numpy as np
import pytest

from wpcurv.beltrami import (
    BeltramiDifferential,
    GridMismatchError,
    RankDeficiencyError,
    ThetaSeed,
    beltrami_from_seed,
    build_basis,
    petersson_inner,
    theta,
)
from wpcurv.constants import c_of_r
from wpcurv.fuchsian import InsufficientBallError, build_presentation, enumerate_ball
from wpcurv.hyperbolic import DiskMotion, hyp_distance


def test_theta_over_identity_only():
    trivial = enumerate_ball(build_presentation(2), 0.1)
    z = np.array([0j, 0.3 + 0.2j, -0.5j])
    tv = theta(ThetaSeed.monomial(0), trivial, z, radius=2.0, strict=False)
    assert np.allclose(tv.values, 1.0)


def test_theta_is_automorphic(ball, grid, rng):
    one = ThetaSeed.monomial(0)
    z = grid.nodes[rng.choice(len(grid), 20, replace=False)]
    tz = theta(one, ball, z).values
    near = ball.restrict(3.2)
    for k in range(1, len(near)):
        g = near.motion(k)
        gz = g(z)
        ok = np.abs(gz) < math.tanh(0.5 * (ball.radius - 8.0))
        if not ok.any():
            continue
        tg = theta(one, ball, gz[ok]).values
        assert np.max(np.abs(tg * g.derivative(z[ok]) ** 2 - tz[ok])) < 1e-5 * np.abs(tz).max()


def test_theta_pointwise_series_bound(ball, grid):
    z = grid.nodes[::7]
    mu = np.abs(theta(ThetaSeed.monomial(0), ball, z).values) * (1 - np.abs(z) ** 2) ** 2 / 4
    img = ball.restrict(8.0 + 2.5)
    series = np.array([np.sum((1 - np.abs(img.orbit(w)[0]) ** 2) ** 2) for w in z])
    assert np.all(mu <= 0.25 * series * (1 + 1e-12))


def test_theta_needs_large_enough_ball(ball):
    with pytest.raises(InsufficientBallError):
        theta(ThetaSeed.monomial(0), ball.restrict(8.0), np.array([0.5 + 0j]))


def test_seed_validation():
    with pytest.raises(ValueError):
        ThetaSeed(())
    with pytest.raises(ValueError):
        ThetaSeed(((-1, 1.0),))
    s = ThetaSeed.one_minus_power(3)
    assert s.tag == "1-z^3"
    assert s(0.5) == pytest.approx(1 - 0.125)


def test_zero_differential_has_zero_norm(grid):
    zero = np.zeros(len(grid), dtype=complex)
    assert petersson_inner(zero, zero, grid) == 0


def test_inner_product_conjugate_symmetric(grid, rng):
    for _ in range(10):
        a, b = rng.normal(size=(2, 2, len(grid)))
        mu, nu = a[0] + 1j * a[1], b[0] + 1j * b[1]
        assert abs(petersson_inner(mu, nu, grid) - np.conj(petersson_inner(nu, mu, grid))) < 1e-12 * len(grid)
        assert petersson_inner(mu, mu, grid).real >= 0


def test_inner_product_rejects_foreign_grid(grid, basis):
    foreign = BeltramiDifferential(basis.mus[0], None, 8.0, grid_id=-1)
    with pytest.raises(GridMismatchError):
        petersson_inner(foreign, basis.mus[0], grid)
    with pytest.raises(GridMismatchError):
        petersson_inner(basis.mus[0][:-1], basis.mus[0][:-1], grid)


def test_norm_chain_for_theta_of_one(ball, grid):
    mu = beltrami_from_seed(ThetaSeed.monomial(0), ball, grid)
    m = np.abs(mu.values)
    norm2 = petersson_inner(mu, mu, grid).real
    assert norm2 <= m.max() * np.sum(m * grid.weights)


def test_basis_size_and_orthonormality(basis):
    assert basis.dim == 3
    assert basis.orthonormality_defect() < 1e-6


def test_default_monomials_are_rank_deficient(ball, grid):
    # the odd theta series vanish on this surface, so z contributes nothing
    with pytest.raises(RankDeficiencyError) as err:
        build_basis([ThetaSeed.monomial(k) for k in range(3)], ball, grid)
    assert "z" in err.value.dependent


def test_too_few_seeds(ball, grid):
    with pytest.raises(RankDeficiencyError):
        build_basis([ThetaSeed.monomial(0)], ball, grid)


def test_projector_independent_of_seed_order(basis, ball, grid, rng):
    reordered = build_basis(list(reversed(basis.seeds)), ball, grid)
    zi = rng.choice(len(grid), 50)
    wi = rng.choice(len(grid), 50)
    assert np.abs(basis.projector(zi, wi) - reordered.projector(zi, wi)).max() < 1e-5
    assert np.abs(basis.projector_trace() - reordered.projector_trace()).max() < 1e-5


def test_projector_trace_integrates_to_dimension(basis, grid):
    assert np.sum(basis.projector_trace() * grid.weights) == pytest.approx(3, abs=1e-4)


def test_evaluate_matches_node_values(basis, grid):
    idx = np.arange(0, len(grid), 97)
    assert np.allclose(basis.evaluate(grid.nodes[idx]), basis.mus[:, idx], atol=1e-12)


def _disc_integral(basis, coeffs, q, r, n_rad=24, n_ang=48):
    """Integral of |mu|^2 over the hyperbolic disc B(q; r) in the disk model."""
    t, w = np.polynomial.legendre.leggauss(n_rad)
    rho = 0.5 * r * (t + 1)
    wr = 0.5 * r * w * np.sinh(rho)
    ang = 2 * np.pi * np.arange(n_ang) / n_ang
    local = np.tanh(0.5 * rho)[:, None] * np.exp(1j * ang)[None, :]
    move = DiskMotion(1 / math.sqrt(1 - abs(q) ** 2), q / math.sqrt(1 - abs(q) ** 2))
    pts = move(local.ravel())
    vals = np.abs(coeffs @ basis.evaluate(pts)) ** 2
    return float(np.sum(vals.reshape(local.shape) * wr[:, None]) * (2 * np.pi / n_ang))


@pytest.mark.parametrize("r", [0.5, 1.0, "inj"])
def test_pointwise_bound_by_local_mass(basis, grid, pipe, rng, r):
    r = pipe.inj if r == "inj" else r
    near = np.flatnonzero(np.abs(grid.nodes) < math.tanh(0.5))
    for k in rng.choice(near, 4, replace=False):
        q = grid.nodes[k]
        c = rng.normal(size=3) + 1j * rng.normal(size=3)
        point = abs(c @ basis.mus[:, k]) ** 2
        assert point <= c_of_r(r) * _disc_integral(basis, c, q, r)


def test_disc_integral_quadrature(basis):
    # sanity: hyperbolic area of B(q; r) from the same rule
    q, r = 0.2 + 0.1j, 1.0
    t, w = np.polynomial.legendre.leggauss(24)
    rho = 0.5 * r * (t + 1)
    area = np.sum(0.5 * r * w * np.sinh(rho)) * 2 * np.pi
    assert area == pytest.approx(2 * np.pi * (math.cosh(r) - 1), rel=1e-12)
    assert hyp_distance(q, DiskMotion(1 / math.sqrt(1 - abs(q) ** 2), q / math.sqrt(1 - abs(q) ** 2))(0.0)) < 1e-12


def test_basis_csv(basis, tmp_path):
    p = tmp_path / "basis.csv"
    basis.to_csv(p)
    data = np.loadtxt(p, delimiter=",", skiprows=1)
    assert data.shape == (len(basis.grid), 2 + 2 * basis.dim)
    assert np.allclose(data[:, 2] + 1j * data[:, 3], basis.mus[0])
