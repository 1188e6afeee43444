"""Möbius transformations of the unit disk and hyperbolic metric quantities.

A disk automorphism is stored in the SU(1,1) normalization
``z -> (a z + b) / (conj(b) z + conj(a))`` with ``|a|^2 - |b|^2 = 1``.
Scalar and vectorized (numpy array) variants are provided; the vectorized
helpers take the coefficient arrays directly so that group balls with tens of
thousands of elements never need per-element Python objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

BOUNDARY_EPS = 1e-9
PARABOLIC_TOL = 1e-9
DET_TOL = 1e-10


class BoundaryError(ValueError):
    """Raised when a point is too close to (or outside) the unit circle."""


def check_disk(z, eps: float = BOUNDARY_EPS):
    """Return ``z`` as a complex array after rejecting points with 1-|z| < eps."""
    arr = np.asarray(z, dtype=complex)
    if arr.size and np.any(1.0 - np.abs(arr) < eps):
        raise BoundaryError(f"point(s) within {eps:g} of the unit circle")
    return arr


def _scalar(x):
    return x.item() if isinstance(x, np.ndarray) and x.ndim == 0 else x


@dataclass(frozen=True)
class DiskMotion:
    """Orientation-preserving isometry of the Poincaré disk."""

    a: complex
    b: complex

    def __post_init__(self):
        a, b = complex(self.a), complex(self.b)
        det = abs(a) ** 2 - abs(b) ** 2
        if not det > 0:
            raise ValueError("|a|^2 - |b|^2 must be positive for a disk motion")
        if abs(det - 1.0) > 0.0:
            s = 1.0 / np.sqrt(det)
            a, b = a * s, b * s
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def identity(cls) -> "DiskMotion":
        return cls(1.0, 0.0)

    @classmethod
    def rotation(cls, angle: float) -> "DiskMotion":
        """Rotation z -> e^{i angle} z."""
        return cls(np.exp(0.5j * angle), 0.0)

    @classmethod
    def translation(cls, length: float, direction: float = 0.0) -> "DiskMotion":
        """Hyperbolic translation by ``length`` along the diameter at angle ``direction``.

        The origin is moved to the point at distance ``length`` in that direction.
        """
        return cls(np.cosh(0.5 * length), np.sinh(0.5 * length) * np.exp(1j * direction))

    @classmethod
    def from_matrix(cls, m) -> "DiskMotion":
        m = np.asarray(m, dtype=complex)
        return cls(m[0, 0], m[0, 1])

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return _scalar((self.a * z + self.b) / (np.conj(self.b) * z + np.conj(self.a)))

    def derivative(self, z):
        """Complex derivative (conj(b) z + conj(a))^-2."""
        z = np.asarray(z, dtype=complex)
        return _scalar((np.conj(self.b) * z + np.conj(self.a)) ** -2)

    def __matmul__(self, other: "DiskMotion") -> "DiskMotion":
        return compose(self, other)

    def inverse(self) -> "DiskMotion":
        return DiskMotion(np.conj(self.a), -self.b)

    @property
    def determinant(self) -> float:
        return abs(self.a) ** 2 - abs(self.b) ** 2

    @property
    def trace(self) -> float:
        # trace of [[a, b], [conj b, conj a]]
        return 2.0 * self.a.real

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [np.conj(self.b), np.conj(self.a)]])

    def sign_normalized(self) -> "DiskMotion":
        """Representative of (a, b) ~ (-a, -b) with arg(a) in (-pi/2, pi/2]."""
        ang = np.angle(self.a)
        if ang <= -np.pi / 2 or ang > np.pi / 2:
            return DiskMotion(-self.a, -self.b)
        return self

    def distance(self, other: "DiskMotion") -> float:
        """Matrix distance modulo the sign ambiguity."""
        d1 = abs(self.a - other.a) + abs(self.b - other.b)
        d2 = abs(self.a + other.a) + abs(self.b + other.b)
        return min(d1, d2)


def compose(g: DiskMotion, h: DiskMotion) -> DiskMotion:
    """Return g∘h, renormalized to unit determinant."""
    a = g.a * h.a + g.b * np.conj(h.b)
    b = g.a * h.b + g.b * np.conj(h.a)
    return DiskMotion(a, b)


def compose_arrays(a1, b1, a2, b2):
    """Vectorized composition of coefficient arrays (broadcasting)."""
    a = a1 * a2 + b1 * np.conj(b2)
    b = a1 * b2 + b1 * np.conj(a2)
    return a, b


def apply_arrays(a, b, z):
    """Vectorized action (a z + b)/(conj(b) z + conj(a))."""
    return (a * z + b) / (np.conj(b) * z + np.conj(a))


def derivative_arrays(a, b, z):
    return (np.conj(b) * z + np.conj(a)) ** -2


def density(z):
    """Hyperbolic metric density rho(z) = 4 / (1 - |z|^2)^2."""
    z = check_disk(z)
    return _scalar(4.0 / (1.0 - np.abs(z) ** 2) ** 2)


def cosh_distance(z, w):
    """cosh of the hyperbolic distance, 1 + 2|z-w|^2 / ((1-|z|^2)(1-|w|^2))."""
    z = check_disk(z)
    w = check_disk(w)
    num = 2.0 * np.abs(z - w) ** 2
    return _scalar(1.0 + num / ((1.0 - np.abs(z) ** 2) * (1.0 - np.abs(w) ** 2)))


def hyp_distance(z, w):
    """Hyperbolic distance in the curvature -1 disk model.

    Uses sinh(d/2) = |z-w| / sqrt((1-|z|^2)(1-|w|^2)), which stays accurate
    both for nearby points and near the boundary.
    """
    z = check_disk(z)
    w = check_disk(w)
    s = np.abs(z - w) / np.sqrt((1.0 - np.abs(z) ** 2) * (1.0 - np.abs(w) ** 2))
    return _scalar(2.0 * np.arcsinh(s))


def distance_from_origin(z):
    z = check_disk(z)
    r = np.abs(z)
    return _scalar(np.log1p(r) - np.log1p(-r))


def euclidean_radius(d):
    """Euclidean radius of the hyperbolic circle of radius d about 0."""
    return np.tanh(0.5 * np.asarray(d, dtype=float))


class Displacement(NamedTuple):
    kind: str  # "identity", "elliptic", "hyperbolic" or "near-parabolic"
    length: float  # translation length (0 unless hyperbolic)


def translation_length(g: DiskMotion) -> Displacement:
    """Classify ``g`` by its trace and return the translation length.

    Near-parabolic elements are flagged rather than classified since a
    cocompact group has none.
    """
    t = abs(g.trace)
    if abs(t - 2.0) < PARABOLIC_TOL:
        if g.distance(DiskMotion.identity()) < 1e-12:
            return Displacement("identity", 0.0)
        return Displacement("near-parabolic", 0.0)
    if t < 2.0:
        return Displacement("elliptic", 0.0)
    return Displacement("hyperbolic", 2.0 * float(np.arccosh(0.5 * t)))


def translation_lengths(a) -> np.ndarray:
    """Vectorized 2 arccosh(|Re a|) (values below 1 clipped to zero length)."""
    t = np.abs(np.real(a))
    return 2.0 * np.arccosh(np.maximum(t, 1.0))
