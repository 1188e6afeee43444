"""Dirichlet fundamental domain centred at the origin.

Bisectors between 0 and gamma(0) are straight lines in the Klein model:
with gamma(0) at hyperbolic distance d in unit direction n, the half-plane
closer to 0 is ``n . u <= tanh(d/2)`` in Klein coordinates u.  The domain
is therefore a convex polygon clip, converted back to the Poincaré disk at
the end.  In the disk model each side is an arc of the circle with centre
n/s and radius sqrt(1/s^2 - 1), s = tanh(d/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fuchsian import GroupBall, InsufficientBallError
from .hyperbolic import DiskMotion, cosh_distance


class UnclosedDomainError(RuntimeError):
    pass


def poincare_to_klein(z):
    z = np.asarray(z, dtype=complex)
    return 2.0 * z / (1.0 + np.abs(z) ** 2)


def klein_to_poincare(u):
    u = np.asarray(u, dtype=complex)
    return u / (1.0 + np.sqrt(np.maximum(1.0 - np.abs(u) ** 2, 0.0)))


@dataclass(frozen=True)
class DirichletDomain:
    vertices: np.ndarray  # Poincaré disk, counter-clockwise; side k joins vertex k and k+1
    side_a: np.ndarray  # side k lies on the bisector of 0 and gamma_k(0)
    side_b: np.ndarray
    partner: np.ndarray  # gamma_k maps side partner[k] onto side k
    genus: int

    @property
    def n_sides(self) -> int:
        return len(self.vertices)

    def side_motion(self, k: int) -> DiskMotion:
        return DiskMotion(self.side_a[k], self.side_b[k])

    @property
    def normals(self) -> np.ndarray:
        q = self.side_b / np.conj(self.side_a)
        return q / np.abs(q)

    @property
    def klein_offsets(self) -> np.ndarray:
        # tanh(d/2) with d = d(0, gamma 0), which is the Euclidean |gamma 0|
        return np.abs(self.side_b / np.conj(self.side_a))

    @property
    def circle_centers(self) -> np.ndarray:
        return self.normals / self.klein_offsets

    @property
    def circle_radii(self) -> np.ndarray:
        s = self.klein_offsets
        return np.sqrt(1.0 / s ** 2 - 1.0)

    def pairing(self, k: int) -> tuple[DiskMotion, int]:
        return self.side_motion(k), int(self.partner[k])

    def contains(self, z, tol: float = 0.0):
        """Boolean mask: point lies in the closed domain (tol > 0 enlarges it)."""
        u = poincare_to_klein(z)
        proj = np.real(np.multiply.outer(u, np.conj(self.normals)))
        return np.all(proj <= self.klein_offsets + tol, axis=-1)

    @property
    def covering_radius(self) -> float:
        r = np.abs(self.vertices).max()
        return float(np.log1p(r) - np.log1p(-r))

    @property
    def inradius(self) -> float:
        """Hyperbolic distance from 0 to the nearest side."""
        s = self.klein_offsets.min()
        return float(math.atanh(s))

    @property
    def euclid_inradius(self) -> float:
        return math.tanh(0.5 * self.inradius)

    @property
    def hyp_area(self) -> float:
        """Area from the fan of geodesic triangles (0, v_k, v_k+1)."""
        v = self.vertices
        total = 0.0
        for k in range(len(v)):
            p, q = v[k], v[(k + 1) % len(v)]
            ca = cosh_distance(p, q)
            cb = cosh_distance(0j, q)
            cc = cosh_distance(0j, p)
            total += math.pi - _angle(ca, cb, cc) - _angle(cb, ca, cc) - _angle(cc, ca, cb)
        return total

    @property
    def euclid_area(self) -> float:
        """Straight-edge polygon area minus the circular segments cut by the arcs."""
        v = self.vertices
        x, y = v.real, v.imag
        shoelace = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
        chord = np.abs(np.roll(v, -1) - v)
        r = self.circle_radii
        theta = 2.0 * np.arcsin(np.clip(chord / (2.0 * r), 0.0, 1.0))
        return float(shoelace - np.sum(0.5 * r * r * (theta - np.sin(theta))))

    def vertex_angles(self) -> np.ndarray:
        """Interior angles between the circular sides at each vertex."""
        v = self.vertices
        n = len(v)
        out = np.empty(n)
        for k in range(n):
            p = v[k]
            t_in = self._tangent(k - 1, p, towards=v[(k - 1) % n])
            t_out = self._tangent(k, p, towards=v[(k + 1) % n])
            out[k] = abs(np.angle(t_out / t_in))
        return out

    def _tangent(self, side: int, p: complex, towards: complex) -> complex:
        c = self.circle_centers[side % self.n_sides]
        t = 1j * (p - c)
        # orient along the arc towards the other endpoint
        if np.real((towards - p) * np.conj(t)) < 0:
            t = -t
        return t / abs(t)

    def boundary(self, per_side: int = 256) -> np.ndarray:
        """Closed polyline sampling the arcs (vertices included once)."""
        pts = []
        c, v = self.circle_centers, self.vertices
        n = len(v)
        for k in range(n):
            p, q = v[k], v[(k + 1) % n]
            a0 = np.angle(p - c[k])
            a1 = np.angle(q - c[k])
            da = np.angle(np.exp(1j * (a1 - a0)))
            t = np.arange(per_side) / per_side
            arc = c[k] + np.abs(p - c[k]) * np.exp(1j * (a0 + da * t))
            arc[0] = p
            pts.append(arc)
        return np.concatenate(pts)


def _angle(opp: float, adj1: float, adj2: float) -> float:
    """Angle opposite the side with cosh length ``opp`` (hyperbolic law of cosines)."""
    s1 = math.sqrt(max(adj1 * adj1 - 1.0, 0.0))
    s2 = math.sqrt(max(adj2 * adj2 - 1.0, 0.0))
    c = (adj1 * adj2 - opp) / (s1 * s2)
    return math.acos(max(-1.0, min(1.0, c)))


def _clip(poly: list[tuple[complex, int]], normal: complex, offset: float, label: int):
    """Clip a convex Klein polygon (vertex, label of outgoing edge) by n.u <= offset."""
    out: list[tuple[complex, int]] = []
    m = len(poly)

    def side(u):
        return (u * np.conj(normal)).real - offset

    for i in range(m):
        u, lab = poly[i]
        w, _ = poly[(i + 1) % m]
        su, sw = side(u), side(w)
        if su <= 0:
            out.append((u, lab))
            if sw > 0:
                t = su / (su - sw)
                out.append((u + t * (w - u), label))
        elif sw <= 0:
            t = su / (su - sw)
            out.append((u + t * (w - u), lab))
    return out


def dirichlet_domain(ball: GroupBall, edge_tol: float = 1e-10, n_start: int = 64) -> DirichletDomain:
    q = ball.origin_images
    rq = np.abs(q)
    ang = 2 * np.pi * np.arange(n_start) / n_start
    start = (1.0 - 1e-9) * np.exp(1j * ang)
    poly = [(complex(u), -1) for u in start]
    for i in range(1, len(ball)):
        poly = _clip(poly, q[i] / rq[i], rq[i], i)
    # remove degenerate edges created by bisectors through a vertex
    cleaned = []
    m = len(poly)
    for i in range(m):
        u, lab = poly[i]
        w, _ = poly[(i + 1) % m]
        if abs(w - u) > edge_tol:
            cleaned.append((u, lab))
    labels = [lab for _, lab in cleaned]
    if any(lab < 0 for lab in labels):
        raise UnclosedDomainError("domain not closed by the ball's bisectors; enlarge the ball")
    verts = klein_to_poincare(np.array([u for u, _ in cleaned]))
    # start at the vertex of smallest non-negative argument for a canonical order
    start_k = int(np.argmin(np.mod(np.angle(verts), 2 * np.pi)))
    verts = np.roll(verts, -start_k)
    labels = labels[start_k:] + labels[:start_k]
    rcov = float(np.max(np.log1p(np.abs(verts)) - np.log1p(-np.abs(verts))))
    if ball.radius + 1e-9 < 2.0 * rcov:
        raise InsufficientBallError("Dirichlet domain needs every bisector within twice its covering radius",
                                    2.0 * rcov)
    lab = np.array(labels)
    side_a, side_b = ball.a[lab], ball.b[lab]
    inv = ball.inverse_indices()
    partner = np.array([labels.index(int(inv[x])) if int(inv[x]) in labels else -1 for x in lab])
    if np.any(partner < 0):
        raise UnclosedDomainError("side pairing incomplete")
    return DirichletDomain(verts, side_a, side_b, partner, ball.genus)
