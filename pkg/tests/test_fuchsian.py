import math
import struct

import numpy as np
import pytest

from wpcurv.dirichlet import UnclosedDomainError, dirichlet_domain
from wpcurv.fuchsian import (
    BallTruncationError,
    CacheError,
    InsufficientBallError,
    build_presentation,
    cache_path,
    enumerate_ball,
    injectivity_radius,
    load_ball,
    load_or_enumerate,
    save_ball,
    vertex_radius_by_bisection,
)
from wpcurv.hyperbolic import DiskMotion, compose, hyp_distance, translation_length


@pytest.fixture(scope="module")
def bolza():
    return build_presentation(2)


@pytest.fixture(scope="module")
def ball8(bolza):
    return enumerate_ball(bolza, 8.0)


def test_presentation_has_four_pairings_and_inverses(bolza):
    gens = bolza.generators
    assert len(gens) == 8
    for k in range(4):
        assert compose(gens[k], gens[k + 4]).distance(DiskMotion.identity()) < 1e-12
    assert bolza.relation_defect() < 1e-9


@pytest.mark.parametrize("genus", [1, 0, -3])
def test_presentation_rejects_low_genus(genus):
    with pytest.raises(ValueError):
        build_presentation(genus)


@pytest.mark.parametrize("genus", [2, 3, 4])
def test_relation_holds_for_higher_genus(genus):
    assert build_presentation(genus).relation_defect() < 1e-9


def test_vertex_radius_matches_angle_condition(bolza, oracles):
    r = vertex_radius_by_bisection(2)
    assert r == pytest.approx(float(oracles["bolza_vertex_radius"]), abs=1e-12)
    assert bolza.vertex_radius == pytest.approx(r, abs=1e-12)


def test_generators_translate_by_the_systole(bolza, oracles):
    for g in bolza.generators:
        t = translation_length(g)
        assert t.kind == "hyperbolic"
        assert t.length == pytest.approx(float(oracles["bolza_systole"]), abs=1e-12)


def test_tiny_ball_is_identity_only(bolza):
    b = enumerate_ball(bolza, 0.1)
    assert len(b) == 1
    assert b.motion(0).distance(DiskMotion.identity()) == 0.0


def test_ball_sizes_grow(bolza):
    sizes = [len(enumerate_ball(bolza, r)) for r in (2.0, 3.5, 5.0, 6.5, 8.0)]
    assert sizes == sorted(sizes)
    assert len(set(sizes)) == len(sizes)


def test_ball_sorted_and_deduplicated(ball8):
    d = ball8.displacement
    assert np.all(np.diff(d) >= -1e-9)
    assert d.max() <= 8.0 + 1e-9
    pts = ball8.origin_images
    # distinct group elements move the origin to distinct points (torsion-free)
    gaps = np.abs(pts[:, None] - pts[None, :]) + np.eye(len(pts))
    assert gaps.min() > 1e-6
    assert np.allclose(np.abs(ball8.a) ** 2 - np.abs(ball8.b) ** 2, 1.0, atol=1e-9)


def test_ball_count_independent_of_dedup_tolerance(bolza, ball8):
    loose = enumerate_ball(bolza, 8.0, dedup_tol=1e-6)
    assert len(loose) == len(ball8)
    assert np.allclose(np.sort_complex(loose.origin_images), np.sort_complex(ball8.origin_images), atol=1e-9)


def test_ball_closed_under_generators(bolza, ball8):
    # s * gamma for gamma in ball(R) lies in ball(R + translation length)
    r0 = 4.9
    inner = ball8.restrict(r0)
    step = bolza.translation_length
    assert r0 + step <= 8.0 + 1e-9
    for g in bolza.generators:
        for i in range(len(inner)):
            h = compose(g, inner.motion(i))
            assert ball8.index_of(h.a, h.b) >= 0 or ball8.index_of(-h.a, -h.b) >= 0


def test_size_cap_raises_with_achieved_radius(bolza):
    with pytest.raises(BallTruncationError) as err:
        enumerate_ball(bolza, 30.0, max_size=10_000)
    assert 0 < err.value.achieved_radius < 30.0


def test_injectivity_radius_of_bolza(ball8, oracles):
    inj = injectivity_radius(ball8)
    assert inj == pytest.approx(float(oracles["bolza_injectivity_radius"]), abs=1e-9)
    assert inj > 0


def test_injectivity_radius_stable_under_larger_ball(ball, ball8):
    assert injectivity_radius(ball) == pytest.approx(injectivity_radius(ball8), abs=1e-12)


def test_injectivity_radius_needs_certifying_ball(bolza):
    with pytest.raises(InsufficientBallError) as err:
        injectivity_radius(enumerate_ball(bolza, 0.1))
    assert err.value.required_radius > 0.1
    with pytest.raises(InsufficientBallError):
        injectivity_radius(enumerate_ball(bolza, 4.0))


def test_cache_round_trip(bolza, ball8, tmp_path):
    path = save_ball(ball8, cache_path(tmp_path, 2, 8.0, 1e-8))
    back = load_ball(path, bolza)
    assert len(back) == len(ball8)
    assert np.array_equal(back.a, ball8.a) and np.array_equal(back.b, ball8.b)
    assert np.array_equal(back.word_length, ball8.word_length)
    raw = path.read_bytes()
    magic, version, genus, radius, count = struct.unpack_from("<4sIIdQ", raw)
    assert (genus, radius, count) == (2, 8.0, len(ball8))
    assert len(raw) == struct.calcsize("<4sIIdQ") + count * (4 + 4 * 8)


def test_corrupt_cache_rejected_and_rebuilt(bolza, tmp_path):
    path = cache_path(tmp_path, 2, 4.0, 1e-8)
    path.write_bytes(b"junk")
    with pytest.raises(CacheError):
        load_ball(path, bolza)
    ball, hit = load_or_enumerate(bolza, 4.0, tmp_path)
    assert not hit and len(ball) > 1
    again, hit = load_or_enumerate(bolza, 4.0, tmp_path)
    assert hit and len(again) == len(ball)


def test_cache_genus_mismatch(ball8, tmp_path):
    path = save_ball(ball8, tmp_path / "b.bin")
    with pytest.raises(CacheError):
        load_ball(path, build_presentation(3))


# Dirichlet domain


def test_domain_is_regular_octagon(domain, oracles):
    assert domain.n_sides == 8
    r = np.abs(domain.vertices)
    assert np.allclose(r, float(oracles["bolza_vertex_radius"]), atol=1e-9)
    assert np.allclose(domain.vertex_angles(), math.pi / 4, atol=1e-8)
    assert np.allclose(domain.circle_radii, float(oracles["bolza_side_circle_radius"]), atol=1e-9)
    assert np.allclose(np.abs(domain.circle_centers), float(oracles["bolza_side_circle_centre_abs"]), atol=1e-9)


def test_domain_areas(domain, oracles):
    assert domain.hyp_area == pytest.approx(4 * math.pi, rel=1e-12)
    assert domain.euclid_area == pytest.approx(float(oracles["bolza_euclid_area"]), abs=1e-10)
    assert domain.euclid_area < math.pi


def test_euclid_area_matches_sampled_boundary(domain):
    b = domain.boundary(per_side=4000)
    x, y = b.real, b.imag
    shoelace = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
    assert shoelace == pytest.approx(domain.euclid_area, rel=1e-6)


def test_side_pairings_map_sides_onto_partners(domain):
    b = domain.boundary(per_side=16).reshape(domain.n_sides, 16)
    for k in range(domain.n_sides):
        g, j = domain.pairing(k)
        img = g(b[j])
        # images lie on side k: on its circle and inside the closed domain
        on_circle = np.abs(np.abs(img - domain.circle_centers[k]) - domain.circle_radii[k])
        assert on_circle.max() < 1e-9
        assert domain.contains(img, tol=1e-9).all()
        # pairing twice returns the original side
        assert domain.pairing(j)[1] == k
        assert compose(g, domain.side_motion(j)).distance(DiskMotion.identity()) < 1e-9


def test_no_element_moves_domain_points_less_than_systole(ball8, domain, rng):
    inj = injectivity_radius(ball8)
    pts = domain.boundary(per_side=8)
    inner = 0.5 * np.sqrt(rng.uniform(size=50)) * np.exp(2j * np.pi * rng.uniform(size=50))
    pts = np.concatenate([pts, inner[domain.contains(inner)]])
    near = ball8.restrict(2 * inj + 2 * domain.covering_radius + 0.1)
    for z in pts:
        img, _ = near.orbit(z)
        d = hyp_distance(np.full(len(img) - 1, z), img[1:])
        assert d.min() >= 2 * inj - 1e-9


def test_unclosed_domain_raises(bolza):
    with pytest.raises(UnclosedDomainError):
        dirichlet_domain(enumerate_ball(bolza, 1.0))
