"""Quadrature on the fundamental domain for the hyperbolic area element.

Nodes sit on a uniform Euclidean grid clipped to the Dirichlet polygon.
Interior cells keep their centre; boundary cells are clipped exactly
against the (densely sampled) circular sides and use the centroid of the
clipped piece.  With ``weight_rule="exact"`` (default) each weight is the
hyperbolic area of the piece, from Green's theorem; ``"node"`` uses the
Euclidean area times rho at the node, the plain second-order rule.  A
sub-grid of midpoints per cell lets the resolvent module integrate its
singular kernel across nearby cells.

When the polygon is invariant under the symmetries of the square
(x, y) -> (+-x, +-y), (+-y, +-x), the nodes are generated from one octant and
copied, so that the node set is exactly invariant.  The resolvent kernel
uses this to assemble only one row per node orbit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import shapely

from .dirichlet import DirichletDomain

# the dihedral group of the square acting on (x, y); index 0 is the identity
SQUARE_SYMMETRIES = (
    (1, 1, False), (-1, 1, False), (1, -1, False), (-1, -1, False),
    (1, 1, True), (-1, 1, True), (1, -1, True), (-1, -1, True),
)


def _act(op, z):
    sx, sy, swap = op
    x, y = np.real(z), np.imag(z)
    if swap:
        x, y = y, x
    return sx * x + 1j * (sy * y)


class GridResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class QuadGrid:
    nodes: np.ndarray
    weights: np.ndarray
    cell_areas: np.ndarray
    h: float
    symmetry: np.ndarray  # symmetry[s, k] = index of node sigma_s(node k)
    reps: np.ndarray  # one node index per symmetry orbit
    rep_slot: np.ndarray  # node k = sigma_{rep_op[k]}(node reps[rep_slot[k]])
    rep_op: np.ndarray
    sub_points: np.ndarray  # (n, s*s) sub-cell midpoints
    sub_weights: np.ndarray  # hyperbolic area of each sub-cell; zero-weight padding comes last
    sub_count: np.ndarray  # number of live sub-points per node
    _extra: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def n_symmetries(self) -> int:
        return self.symmetry.shape[0]

    @property
    def density(self) -> np.ndarray:
        return 4.0 / (1.0 - np.abs(self.nodes) ** 2) ** 2

    def integrate(self, f) -> complex:
        f = np.asarray(f)
        if f.shape[-1] != len(self.nodes):
            raise ValueError(f"expected {len(self.nodes)} node values, got shape {f.shape}")
        return f @ self.weights

    def to_csv(self, path) -> None:
        data = np.c_[self.nodes.real, self.nodes.imag, self.weights]
        np.savetxt(path, data, delimiter=",", header="x,y,weight", comments="", fmt="%.17g")


def integrate(grid: QuadGrid, f) -> complex:
    return grid.integrate(f)


def _is_square_symmetric(dom: DirichletDomain) -> bool:
    v = dom.vertices
    for op in SQUARE_SYMMETRIES[1:]:
        img = _act(op, v)
        if np.min(np.abs(img[:, None] - v[None, :]), axis=1).max() > 1e-12:
            return False
    return True


def _box_disc_relation(xc, yc, half, centers, radii):
    """Per cell: (inside every side's complement, fully inside some side disc)."""
    cx, cy = centers.real[None, :], centers.imag[None, :]
    dx = np.maximum(np.abs(xc[:, None] - cx) - half, 0.0)
    dy = np.maximum(np.abs(yc[:, None] - cy) - half, 0.0)
    near = np.hypot(dx, dy)
    fx = np.abs(xc[:, None] - cx) + half
    fy = np.abs(yc[:, None] - cy) + half
    far = np.hypot(fx, fy)
    clear = np.all(near >= radii[None, :], axis=1)
    gone = np.any(far <= radii[None, :], axis=1)
    return clear, gone


_GL_T, _GL_W = np.polynomial.legendre.leggauss(6)


def _rho_x_antiderivative(x, y):
    # d/dx of this is rho = 4 / (1 - x^2 - y^2)^2
    a = 1.0 - y * y
    sa = np.sqrt(a)
    return (2.0 / a) * (x / (a - x * x) + np.arctanh(x / sa) / sa)


def polygon_hyp_area(xy: np.ndarray) -> float:
    """Hyperbolic area of a simple polygon (vertex array, either orientation) via the integral of P dy."""
    p0 = xy
    p1 = np.roll(xy, -1, axis=0)
    t = 0.5 * (_GL_T + 1.0)
    x = p0[:, 0, None] + (p1[:, 0] - p0[:, 0])[:, None] * t
    y = p0[:, 1, None] + (p1[:, 1] - p0[:, 1])[:, None] * t
    vals = _rho_x_antiderivative(x, y) @ (0.5 * _GL_W)
    return float(abs(np.sum(vals * (p1[:, 1] - p0[:, 1]))))


def _box_hyp_area(xc, yc, h):
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) * 0.5 * h
    t = 0.5 * (_GL_T + 1.0)
    total = np.zeros(len(xc))
    for k in (1, 3):  # only the vertical edges have dy != 0
        (x0, y0), (_, y1) = corners[k], corners[(k + 1) % 4]
        y = yc[:, None] + y0 + (y1 - y0) * t
        x = (xc + x0)[:, None] + 0.0 * t
        total += (_rho_x_antiderivative(x, y) @ (0.5 * _GL_W)) * (y1 - y0)
    return np.abs(total)


def _sub_offsets(sub: int) -> np.ndarray:
    t = (np.arange(sub) + 0.5) / sub - 0.5
    return (t[:, None] + 1j * t[None, :]).ravel()


def build_grid(dom: DirichletDomain, h: float, arc_samples: int = 2048, sub: int = 4,
               weight_rule: str = "exact", merge_below: float = 0.5) -> QuadGrid:
    """Clipped grid of spacing h.

    Boundary pieces smaller than ``merge_below * h^2`` are merged into an
    adjacent cell, so no node sits in a sliver next to the identified side.
    """
    if weight_rule not in ("exact", "node"):
        raise ValueError(f"unknown weight rule {weight_rule!r}")
    h = float(h)
    if not h > 0:
        raise GridResolutionError("h must be positive")
    if h > 0.25 * dom.euclid_inradius:
        raise GridResolutionError(f"h = {h} too coarse for a polygon of Euclidean inradius {dom.euclid_inradius:.3f}")
    symmetric = _is_square_symmetric(dom)
    rmax = float(np.abs(dom.vertices).max())
    m = int(np.ceil(rmax / h)) + 1
    centers1d = (np.arange(-m, m) + 0.5) * h
    xc, yc = np.meshgrid(centers1d, centers1d, indexing="ij")
    xc, yc = xc.ravel(), yc.ravel()
    if symmetric:
        wedge = (yc > 0) & (yc <= xc)
        xc, yc = xc[wedge], yc[wedge]
    clear, gone = _box_disc_relation(xc, yc, 0.5 * h, dom.circle_centers, dom.circle_radii)
    # cells beyond the vertex circle can be neither clear nor gone only if cut
    keep = ~gone
    xc, yc, clear = xc[keep], yc[keep], clear[keep]
    nodes = xc + 1j * yc
    areas = np.full(len(nodes), h * h)
    hyp = np.zeros(len(nodes))
    hyp[clear] = _box_hyp_area(xc[clear], yc[clear], h)
    cut = np.flatnonzero(~clear)
    outline = dom.boundary(arc_samples)
    poly = shapely.Polygon(np.c_[outline.real, outline.imag])
    if len(cut):
        boxes = shapely.box(xc[cut] - 0.5 * h, yc[cut] - 0.5 * h, xc[cut] + 0.5 * h, yc[cut] + 0.5 * h)
        pieces = shapely.intersection(boxes, poly)
        a = shapely.area(pieces)
        hyp[cut] = [_piece_hyp_area(pc) for pc in pieces]
        cx = np.full(len(cut), np.nan)
        cy = np.full(len(cut), np.nan)
        live = a > 0
        cen = shapely.centroid(pieces[live])
        cx[live], cy[live] = shapely.get_x(cen), shapely.get_y(cen)
        areas[cut] = a
        nodes[cut] = cx + 1j * cy
        if symmetric:
            # a cell bisected by the diagonal is mirror symmetric; put its node on the diagonal
            diag = np.isclose(xc[cut], yc[cut])
            mid = 0.5 * (cx[diag] + cy[diag])
            nodes[cut[diag]] = mid + 1j * mid
    ok = areas > 1e-6 * h * h
    nodes, areas, hyp = nodes[ok], areas[ok], hyp[ok]
    if weight_rule == "node":
        hyp = areas * 4.0 / (1.0 - np.abs(nodes) ** 2) ** 2
    boxes = (xc + 1j * yc)[ok]
    hs = h / sub
    subp = boxes[:, None] + h * _sub_offsets(sub)[None, :]
    sub_w = _box_hyp_area(subp.real.ravel(), subp.imag.ravel(), hs).reshape(subp.shape)
    partial = np.flatnonzero(areas < h * h * (1 - 1e-12))
    if len(partial):
        # clip the sub-cells of boundary cells exactly, like the cells themselves
        sp = subp[partial].ravel()
        pieces = shapely.intersection(shapely.box(sp.real - 0.5 * hs, sp.imag - 0.5 * hs,
                                                  sp.real + 0.5 * hs, sp.imag + 0.5 * hs), poly)
        live = shapely.area(pieces) > 0
        w = np.zeros(len(sp))
        w[live] = [_piece_hyp_area(pc) for pc in pieces[live]]
        cen = shapely.centroid(pieces[live])
        pts = np.repeat(nodes[partial], sub * sub)
        pts[live] = shapely.get_x(cen) + 1j * shapely.get_y(cen)
        subp[partial] = pts.reshape(len(partial), -1)
        sub_w[partial] = w.reshape(len(partial), -1)
    # tiny rescale so that the sub-cells add up to the cell weight exactly
    sub_w *= (hyp / sub_w.sum(axis=1))[:, None]
    if merge_below > 0:
        nodes, areas, hyp, subp, sub_w = _merge_slivers(boxes, nodes, areas, hyp, subp, sub_w, h,
                                                        symmetric, merge_below)
    inside = dom.contains(nodes)
    if not np.all(inside):
        # centroid of a crescent-shaped sliver fell outside; use an interior point
        bad = np.flatnonzero(~inside)
        for k in bad:
            x, y = nodes[k].real, nodes[k].imag
            piece = shapely.intersection(shapely.box(x - h, y - h, x + h, y + h), poly)
            p = shapely.point_on_surface(piece)
            nodes[k] = p.x + 1j * p.y
    if symmetric:
        return _symmetrize(nodes, areas, subp, sub_w, h)
    n = len(nodes)
    order = np.lexsort((nodes.real, nodes.imag))
    return _finish(nodes[order], areas[order], subp[order], sub_w[order], h,
                   np.arange(n)[None, :], np.arange(n), np.arange(n), np.zeros(n, int))


def _merge_slivers(boxes, nodes, areas, hyp, subp, sub_w, h, symmetric, merge_below):
    ij = np.rint(np.c_[boxes.real, boxes.imag] / h - 0.5).astype(int)
    where = {(int(i), int(j)): k for k, (i, j) in enumerate(ij)}
    diag = ij[:, 0] == ij[:, 1]
    small = areas < merge_below * h * h
    owner = np.arange(len(nodes))
    for k in np.flatnonzero(small)[np.argsort(areas[small], kind="stable")]:
        i, j = ij[k]
        best = -1
        # a cell on the mirror line may only join another such cell, keeping the union mirror symmetric
        steps = ((1, 1), (-1, -1)) if symmetric and diag[k] else \
            ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))
        for di, dj in steps:
            t = where.get((int(i + di), int(j + dj)))
            if t is None or small[t] or (symmetric and diag[t] != diag[k]):
                continue
            if best < 0 or areas[t] > areas[best]:
                best = t
        if best >= 0:
            owner[k] = best
    groups: dict[int, list[int]] = {}
    for k, o in enumerate(owner):
        groups.setdefault(int(o), []).append(k)
    keep = sorted(groups)
    width = max(len(groups[k]) for k in keep) * subp.shape[1]
    new_nodes = np.empty(len(keep), dtype=complex)
    new_areas = np.empty(len(keep))
    new_hyp = np.empty(len(keep))
    new_subp = np.empty((len(keep), width), dtype=complex)
    new_sub_w = np.zeros((len(keep), width))
    for r, k in enumerate(keep):
        members = groups[k]
        a = areas[members]
        new_areas[r] = a.sum()
        new_hyp[r] = hyp[members].sum()
        new_nodes[r] = nodes[k] if len(members) == 1 else np.dot(a, nodes[members]) / a.sum()
        sp = subp[members].ravel()
        sw = sub_w[members].ravel()
        new_subp[r, :len(sp)] = sp
        new_subp[r, len(sp):] = new_nodes[r]
        new_sub_w[r, :len(sw)] = sw
    return new_nodes, new_areas, new_hyp, new_subp, new_sub_w


def _piece_hyp_area(piece) -> float:
    if piece.is_empty:
        return 0.0
    geoms = getattr(piece, "geoms", [piece])
    total = 0.0
    for gm in geoms:
        if gm.geom_type != "Polygon" or gm.area == 0:
            continue
        total += polygon_hyp_area(np.asarray(gm.exterior.coords)[:-1])
        for hole in gm.interiors:
            total -= polygon_hyp_area(np.asarray(hole.coords)[:-1])
    return total


def _symmetrize(wnodes, wareas, wsub, wsub_area, h) -> QuadGrid:
    all_nodes, slot, opi = [], [], []
    for r, z in enumerate(wnodes):
        seen = []
        for s, op in enumerate(SQUARE_SYMMETRIES):
            img = complex(_act(op, z))
            if any(img == q for q in seen):
                continue
            seen.append(img)
            all_nodes.append(img)
            slot.append(r)
            opi.append(s)
    nodes = np.array(all_nodes)
    slot = np.array(slot)
    opi = np.array(opi)
    areas = wareas[slot]
    sub_area = wsub_area[slot]
    subp = np.empty((len(nodes), wsub.shape[1]), dtype=complex)
    for s, op in enumerate(SQUARE_SYMMETRIES):
        m = opi == s
        subp[m] = _act(op, wsub[slot[m]])
    index = {(z.real, z.imag): k for k, z in enumerate(nodes)}
    sym = np.empty((len(SQUARE_SYMMETRIES), len(nodes)), dtype=np.int64)
    for s, op in enumerate(SQUARE_SYMMETRIES):
        img = _act(op, nodes)
        sym[s] = [index[(w.real, w.imag)] for w in img]
    reps = np.flatnonzero(opi == 0)
    return _finish(nodes, areas, subp, sub_area, h, sym, reps, slot, opi)


def _finish(nodes, areas, subp, sub_w, h, sym, reps, slot, opi) -> QuadGrid:
    # live sub-points first, padding (weight 0, placed at the node) after
    order = np.argsort(sub_w == 0, axis=1, kind="stable")
    subp = np.take_along_axis(subp, order, axis=1)
    sub_w = np.take_along_axis(sub_w, order, axis=1)
    count = (sub_w > 0).sum(axis=1)
    width = int(count.max())
    subp, sub_w = subp[:, :width].copy(), sub_w[:, :width].copy()
    return QuadGrid(sub_count=count, nodes=nodes, weights=sub_w.sum(axis=1), cell_areas=areas, h=float(h), symmetry=sym,
                    reps=reps, rep_slot=slot, rep_op=opi, sub_points=subp, sub_weights=sub_w)


def default_h(dom: DirichletDomain, target_nodes: int = 5000) -> float:
    """Spacing giving roughly ``target_nodes`` nodes."""
    return float(np.sqrt(dom.euclid_area / target_nodes))
