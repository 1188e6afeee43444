"""Surface groups from regular 4g-gons and truncated group balls.

The group is generated by the 4g side pairings of the regular hyperbolic
4g-gon with interior angle 2pi/(4g), centred at the origin, with opposite
sides identified.  For genus 2 this is the Bolza surface.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .hyperbolic import (
    DiskMotion,
    apply_arrays,
    compose,
    derivative_arrays,
    translation_lengths,
)

CACHE_MAGIC = b"WPGB"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIIdQ")
_RECORD = np.dtype([("word", "<u4"), ("a_re", "<f8"), ("a_im", "<f8"), ("b_re", "<f8"), ("b_im", "<f8")])


class BallTruncationError(RuntimeError):
    """The requested ball would exceed the element cap."""

    def __init__(self, msg: str, achieved_radius: float):
        super().__init__(f"{msg} (largest radius within the cap ≈ {achieved_radius:.4f})")
        self.achieved_radius = achieved_radius


class InsufficientBallError(RuntimeError):
    """The ball is too small to certify a geometric quantity."""

    def __init__(self, msg: str, required_radius: float):
        super().__init__(f"{msg}; need a ball of radius >= {required_radius:.4f}")
        self.required_radius = required_radius


class CacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class SurfacePresentation:
    """Side pairings of the regular 4g-gon.

    ``generators[k]`` translates along the ray at angle ``k*pi/(2g)`` and maps
    side ``k + 2g`` onto side ``k``; ``generators[k + 2g]`` is its inverse.
    """

    genus: int
    generators: tuple[DiskMotion, ...]
    relation: tuple[int, ...]
    edge_distance: float
    covering_radius: float

    @property
    def n_sides(self) -> int:
        return 4 * self.genus

    @property
    def vertex_radius(self) -> float:
        """Euclidean radius of the polygon vertices."""
        return math.tanh(0.5 * self.covering_radius)

    @property
    def translation_length(self) -> float:
        return 2.0 * self.edge_distance

    def relation_word(self) -> DiskMotion:
        m = DiskMotion.identity()
        for k in self.relation:
            m = compose(m, self.generators[k])
        return m

    def relation_defect(self) -> float:
        return self.relation_word().distance(DiskMotion.identity())

    def generator_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.array([g.a for g in self.generators])
        b = np.array([g.b for g in self.generators])
        return a, b


def build_presentation(genus: int) -> SurfacePresentation:
    genus = int(genus)
    if genus < 2:
        raise ValueError("genus must be at least 2 for a hyperbolic surface")
    n = 4 * genus
    # regular n-gon with interior angle 2pi/n: cosh(inradius) = cot(pi/n),
    # cosh(circumradius) = cot(pi/n)^2
    cot = 1.0 / math.tan(math.pi / n)
    edge = math.acosh(cot)
    cover = math.acosh(cot * cot)
    gens = tuple(DiskMotion.translation(2.0 * edge, k * math.pi / (2 * genus)) for k in range(n))
    # walking once around the single vertex cycle steps the side index by 2g-1
    relation = tuple(((2 * genus - 1) * j) % n for j in range(n))
    p = SurfacePresentation(genus, gens, relation, edge, cover)
    defect = p.relation_defect()
    if defect > 1e-9:
        raise RuntimeError(f"surface relation fails, defect {defect:.3e}")
    return p


def vertex_radius_by_bisection(genus: int, tol: float = 1e-15) -> float:
    """Euclidean vertex radius found from the angle condition alone.

    The interior angle of a regular n-gon inscribed in the Euclidean circle
    of radius r decreases from (n-2)pi/n (r -> 0) to 0 (r -> 1); we solve for
    the angle 2pi/n that makes the n vertex angles sum to 2pi.
    """
    n = 4 * genus
    target = 2.0 * math.pi / n

    def angle(r):
        # vertex angle of the hyperbolic regular n-gon with circumradius d
        d = 2.0 * math.atanh(r)
        # right triangle: centre, vertex, edge midpoint with angle pi/n at the centre
        half = math.atan(1.0 / (math.cosh(d) * math.tan(math.pi / n)))
        return 2.0 * half

    lo, hi = 1e-12, 1.0 - 1e-15
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if angle(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class GroupBall:
    """Elements gamma with d(0, gamma 0) <= radius, sorted by displacement."""

    a: np.ndarray
    b: np.ndarray
    word_length: np.ndarray
    radius: float
    genus: int
    covering_radius: float
    dedup_tol: float = 1e-8
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.a)

    @property
    def origin_images(self) -> np.ndarray:
        return self.b / np.conj(self.a)

    @property
    def displacement(self) -> np.ndarray:
        r = np.abs(self.origin_images)
        return np.log1p(r) - np.log1p(-r)

    def motion(self, i: int) -> DiskMotion:
        return DiskMotion(self.a[i], self.b[i])

    def motions(self) -> list[DiskMotion]:
        return [DiskMotion(x, y) for x, y in zip(self.a, self.b)]

    def restrict(self, radius: float) -> "GroupBall":
        keep = self.displacement <= radius + 1e-12
        return GroupBall(self.a[keep], self.b[keep], self.word_length[keep], float(radius),
                         self.genus, self.covering_radius, self.dedup_tol)

    def index_of(self, a: complex, b: complex, tol: float | None = None) -> int:
        """Index of the element (a, b), or -1 if absent."""
        tree = self._tree()
        p = b / np.conj(a)
        d, i = tree.query([p.real, p.imag])
        return int(i) if d <= (tol or max(self.dedup_tol, 1e-9)) else -1

    def inverse_indices(self) -> np.ndarray:
        if "inv" not in self._cache:
            p = -self.b / self.a  # image of 0 under the inverse
            d, i = self._tree().query(np.c_[p.real, p.imag])
            i = np.where(d <= max(self.dedup_tol, 1e-9), i, -1)
            self._cache["inv"] = i
        return self._cache["inv"]

    def _tree(self) -> cKDTree:
        if "tree" not in self._cache:
            p = self.origin_images
            self._cache["tree"] = cKDTree(np.c_[p.real, p.imag])
        return self._cache["tree"]

    def orbit(self, z: complex):
        """Images gamma(z) and derivatives gamma'(z) for every element."""
        return apply_arrays(self.a, self.b, z), derivative_arrays(self.a, self.b, z)


def _expected_count(radius: float, genus: int) -> float:
    # orbit points in a ball ~ area(ball)/area(surface)
    return (math.cosh(radius) - 1.0) / (2.0 * (genus - 1)) + 1.0


def _radius_for_count(count: float, genus: int) -> float:
    return math.acosh(1.0 + 2.0 * (genus - 1) * max(count - 1.0, 0.0))


def enumerate_ball(p: SurfacePresentation, radius: float, dedup_tol: float = 1e-8,
                   max_size: int = 3_000_000) -> GroupBall:
    """Breadth-first word expansion, pruned by displacement of the origin.

    Pruning is lossless for Dirichlet-domain side pairings: any gamma != e
    has a neighbour gamma*s (s a generator) whose origin image is strictly
    closer to 0, so every element of the ball is reached through the ball.
    Duplicates are detected through gamma(0), which is sign independent and
    injective on a torsion-free group.
    """
    radius = float(radius)
    if not radius > 0:
        raise ValueError("radius must be positive")
    if _expected_count(radius, p.genus) > max_size:
        raise BallTruncationError(
            f"ball of radius {radius} needs about {_expected_count(radius, p.genus):.3g} elements, cap is {max_size}",
            _radius_for_count(max_size, p.genus))
    ga, gb = p.generator_arrays()
    rmax = math.tanh(0.5 * radius) * (1 + 1e-14)
    all_a = [np.array([1.0 + 0j])]
    all_b = [np.array([0j])]
    all_w = [np.array([0], dtype=np.int64)]
    pts = np.zeros((1, 2))
    tree = cKDTree(pts)
    fa, fb = all_a[0], all_b[0]
    level = 0
    total = 1
    while len(fa):
        level += 1
        na, nb = (x.ravel() for x in _right_multiply(fa, fb, ga, gb))
        q = nb / np.conj(na)
        keep = np.abs(q) <= rmax
        na, nb, q = na[keep], nb[keep], q[keep]
        if len(na) == 0:
            break
        xy = np.c_[q.real, q.imag]
        # drop candidates already present
        d, _ = tree.query(xy, distance_upper_bound=dedup_tol)
        fresh = ~np.isfinite(d)
        na, nb, xy = na[fresh], nb[fresh], xy[fresh]
        # drop duplicates among the candidates, keeping the first occurrence
        if len(xy) > 1:
            pairs = cKDTree(xy).query_pairs(dedup_tol, output_type="ndarray")
            dup = np.zeros(len(xy), bool)
            dup[pairs.max(axis=1)] = True
            na, nb, xy = na[~dup], nb[~dup], xy[~dup]
        if len(na) == 0:
            break
        total += len(na)
        if total > max_size:
            raise BallTruncationError(f"enumeration exceeded {max_size} elements at word length {level}",
                                      _radius_for_count(max_size, p.genus))
        all_a.append(na)
        all_b.append(nb)
        all_w.append(np.full(len(na), level, dtype=np.int64))
        pts = np.vstack([pts, xy])
        tree = cKDTree(pts)
        fa, fb = na, nb
    a = np.concatenate(all_a)
    b = np.concatenate(all_b)
    w = np.concatenate(all_w)
    a, b = _sign_normalize(a, b)
    return _sorted_ball(a, b, w, radius, p, dedup_tol)


def _right_multiply(fa, fb, ga, gb):
    a = fa[:, None] * ga[None, :] + fb[:, None] * np.conj(gb)[None, :]
    b = fa[:, None] * gb[None, :] + fb[:, None] * np.conj(ga)[None, :]
    return a, b


def _sign_normalize(a, b):
    flip = (a.real < 0) | ((a.real == 0) & (a.imag < 0))
    s = np.where(flip, -1.0, 1.0)
    return a * s, b * s


def _sorted_ball(a, b, w, radius, p, dedup_tol) -> GroupBall:
    q = b / np.conj(a)
    r = np.abs(q)
    disp = np.log1p(r) - np.log1p(-r)
    # sort by displacement; ties (equal to rounding) broken by angle and word length
    key_d = np.round(disp, 9)
    ang = np.round(np.mod(np.angle(q), 2 * np.pi), 9)
    order = np.lexsort((w, ang, key_d))
    return GroupBall(a[order], b[order], w[order].astype(np.int64), float(radius), p.genus,
                     p.covering_radius, dedup_tol)


def cache_path(cache_dir, genus: int, radius: float, dedup_tol: float) -> Path:
    return Path(cache_dir) / f"ball_g{genus}_R{radius:.6g}_tol{dedup_tol:.1e}.bin"


def save_ball(ball: GroupBall, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rec = np.empty(len(ball), dtype=_RECORD)
    rec["word"] = ball.word_length
    rec["a_re"], rec["a_im"] = ball.a.real, ball.a.imag
    rec["b_re"], rec["b_im"] = ball.b.real, ball.b.imag
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, ball.genus, ball.radius, len(ball)))
        fh.write(rec.tobytes())
    tmp.replace(path)
    return path


def load_ball(path, p: SurfacePresentation, dedup_tol: float = 1e-8) -> GroupBall:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CacheError(f"{path}: truncated header")
    magic, version, genus, radius, count = _HEADER.unpack_from(data)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise CacheError(f"{path}: not a group-ball cache (magic {magic!r}, version {version})")
    if genus != p.genus:
        raise CacheError(f"{path}: genus {genus} does not match presentation genus {p.genus}")
    body = data[_HEADER.size:]
    if len(body) != count * _RECORD.itemsize:
        raise CacheError(f"{path}: expected {count} records")
    rec = np.frombuffer(body, dtype=_RECORD)
    a = rec["a_re"] + 1j * rec["a_im"]
    b = rec["b_re"] + 1j * rec["b_im"]
    return GroupBall(a, b, rec["word"].astype(np.int64), radius, genus, p.covering_radius, dedup_tol)


def load_or_enumerate(p: SurfacePresentation, radius: float, cache_dir=None,
                      dedup_tol: float = 1e-8) -> tuple[GroupBall, bool]:
    """Return (ball, cache_hit)."""
    if cache_dir is not None:
        path = cache_path(cache_dir, p.genus, radius, dedup_tol)
        if path.exists():
            try:
                return load_ball(path, p, dedup_tol), True
            except CacheError:
                pass
    ball = enumerate_ball(p, radius, dedup_tol)
    if cache_dir is not None:
        save_ball(ball, cache_path(cache_dir, p.genus, radius, dedup_tol))
    return ball, False


def injectivity_radius(ball: GroupBall) -> float:
    """Half the shortest translation length among non-identity elements.

    Every conjugacy class has a representative whose axis meets the
    fundamental domain, and such a representative moves the origin by at
    most length + 2*covering_radius; the ball must reach that far.
    """
    lengths = translation_lengths(ball.a[1:])
    if len(lengths) == 0:
        raise InsufficientBallError("ball contains only the identity", 2.0 * ball.covering_radius)
    shortest = float(lengths.min())
    need = shortest + 2.0 * ball.covering_radius
    if ball.radius + 1e-9 < need:
        raise InsufficientBallError(
            f"shortest translation length {shortest:.6f} cannot be certified with radius {ball.radius}", need)
    return 0.5 * shortest
