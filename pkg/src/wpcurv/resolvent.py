"""The operator D = -2(Delta - 2)^-1 as a periodized integral kernel.

On the disk, the Green's function of D is c * Q1(cosh d), where Q1 is the
Legendre function of the second kind of degree one.  Periodizing over the
group gives the kernel on the surface.  The sum is truncated at a smooth
cutoff radius, and the far field beyond it is replaced by its mean value,
which lattice-point equidistribution makes exact up to exponentially small
fluctuations.

Only one row per symmetry orbit of nodes is stored when the grid carries
square symmetries.  The full matrix is materialized on demand.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy import integrate, linalg
from scipy.sparse.linalg import LinearOperator, eigsh

from .fuchsian import GroupBall, InsufficientBallError
from .quadrature import QuadGrid

KERNEL_MAGIC = b"WPGK"
KERNEL_VERSION = 1
_HEADER = struct.Struct("<4sIIIdddQQ")

DEFAULT_CUTOFF = 6.0
DEFAULT_TAPER = 1.0
DEFAULT_NEAR = 1.0
MATERIALIZE_LIMIT = 8000


class NormalizationError(RuntimeError):
    pass


def legendre_q1(x):
    """Q1(x) = (x/2) ln((x+1)/(x-1)) - 1 for x > 1."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 1.0):
        raise ValueError("Q1 needs x > 1")
    return _q1_of_u(x - 1.0)


@numba.njit(cache=True)
def _q1_scalar(u):
    # u = cosh d - 1 > 0; a series in 1/x avoids cancellation far out
    x = 1.0 + u
    if x > 30.0:
        # sum_k x^-2k / (2k+1); eight terms are exact to 1e-23 relative for x > 30
        y = 1.0 / (x * x)
        s = 1.0 / 17.0
        for k in range(7, 0, -1):
            s = 1.0 / (2 * k + 1) + y * s
        return y * s
    return 0.5 * x * math.log1p(2.0 / u) - 1.0


@numba.vectorize(["float64(float64)"], cache=True)
def _q1_of_u(u):
    return _q1_scalar(u)


def q1_antiderivative(x: float) -> float:
    """P(x) = (x^2-1)/4 ln((x+1)/(x-1)) - x/2; P(1) = -1/2 and P -> 0 at infinity."""
    if x == 1.0:
        return -0.5
    if x > 1e3:
        y = 1.0 / (x * x)
        return -(1.0 / (3.0 * x)) * (1.0 + 0.2 * y + 3.0 / 35.0 * y * y)
    return 0.25 * (x * x - 1.0) * math.log1p(2.0 / (x - 1.0)) - 0.5 * x


def disk_mass(radius: float, normalization: float = 1.0 / math.pi) -> float:
    """Integral of the free kernel over a hyperbolic disk of the given radius."""
    return normalization * math.pi * (2.0 * q1_antiderivative(math.cosh(radius)) + 1.0)


def calibrate_normalization() -> float:
    """Constant c making the free kernel integrate to one over the disk.

    D(1) = 1 forces the total mass of the kernel to be 1, because the
    periodized kernel integrates over the surface to the free kernel's
    integral over the disk.  The mass is computed by adaptive quadrature in
    r, independent of the closed-form antiderivative.
    """
    def integrand(r):
        return float(_q1_of_u(2.0 * math.sinh(0.5 * r) ** 2)) * 2.0 * math.pi * math.sinh(r)

    near, _ = integrate.quad(integrand, 0.0, 1.0, limit=200)
    # the integrand decays like e^-r; beyond r = 40 it is below double precision
    far, _ = integrate.quad(integrand, 1.0, 40.0, limit=200)
    return 1.0 / (near + far)


def free_kernel(d, normalization: float | None = None):
    """Free-space kernel of D at hyperbolic distance d > 0."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("free_kernel is only defined for d > 0")
    c = 1.0 / math.pi if normalization is None else normalization
    return c * _q1_of_u(2.0 * np.sinh(0.5 * d) ** 2)


@numba.njit(cache=True)
def _taper(d, cutoff, width):
    if d <= cutoff - width:
        return 1.0
    if d >= cutoff:
        return 0.0
    t = (cutoff - d) / width
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def far_field_mass(cutoff: float, width: float, normalization: float) -> float:
    """Kernel mass removed by the taper: beyond the cutoff plus the taper deficit."""
    def integrand(r):
        return (1.0 - _taper(r, cutoff, width)) * float(_q1_of_u(2.0 * math.sinh(0.5 * r) ** 2)) \
            * 2.0 * math.pi * math.sinh(r)

    ramp, _ = integrate.quad(integrand, cutoff - width, cutoff, limit=200)
    beyond = -2.0 * math.pi * q1_antiderivative(math.cosh(cutoff))
    return normalization * (ramp + beyond)


@numba.njit(cache=True)
def _mobius(ar, ai, br, bi, zr, zi):
    """(Re gamma z, Im gamma z, |conj(b) z + conj(a)|^2); the last equals 1/|gamma'(z)|."""
    nr = ar * zr - ai * zi + br
    ni = ar * zi + ai * zr + bi
    dr = br * zr + bi * zi + ar
    di = br * zi - bi * zr - ai
    den = dr * dr + di * di
    return (nr * dr + ni * di) / den, (ni * dr - nr * di) / den, den


@numba.njit(cache=True)
def _rows_kernel(rows_node, nodes_re, nodes_im, node_s, node_w, sub_re, sub_im, sub_s, sub_w, sub_n,
                 blk_start, blk_cre, blk_cim, blk_cs, blk_rad, ga_re, ga_im, gb_re, gb_im,
                 cutoff, width, reach, near, out):
    """out[r, k] = sum over gamma of taper * Q1 at d(gamma z_r, w_k), excluding the self term.

    Pairs closer than ``near`` use the average of the kernel integrated over
    either cell (sub-point rule), which keeps the matrix symmetric.
    """
    n_rows = rows_node.shape[0]
    n_blk = blk_cre.shape[0]
    n_g = ga_re.shape[0]
    u_near = math.cosh(near) - 1.0
    node_inv_s = 1.0 / node_s
    u_cut = math.cosh(cutoff) - 1.0
    u_full = math.cosh(cutoff - width) - 1.0
    # block skip / fully-inside thresholds in terms of u = cosh d - 1
    skip_u = np.empty(n_blk)
    full_u = np.empty(n_blk)
    for bk in range(n_blk):
        skip_u[bk] = math.cosh(cutoff + blk_rad[bk]) - 1.0
        lim = cutoff - width - blk_rad[bk]
        full_u[bk] = math.cosh(lim) - 1.0 if lim > 0.0 else -1.0
    pz_re = np.empty(sub_re.shape[1])
    pz_im = np.empty(sub_re.shape[1])
    pz_s = np.empty(sub_re.shape[1])
    for r in range(n_rows):
        me = rows_node[r]
        zr = nodes_re[me]
        zi = nodes_im[me]
        sz = node_s[me]
        for g in range(n_g):
            ar, ai, br, bi = ga_re[g], ga_im[g], gb_re[g], gb_im[g]
            pr, pi_, den = _mobius(ar, ai, br, bi, zr, zi)
            # 1 - |gamma z|^2 = (1 - |z|^2) / |conj(b) z + conj(a)|^2
            sp = sz / den
            inv_sp = 2.0 / sp
            p_abs = math.sqrt(pr * pr + pi_ * pi_)
            if math.log1p(p_abs) - math.log1p(-p_abs) > reach:
                continue
            is_identity = abs(br) + abs(bi) < 1e-14 and abs(ai) < 1e-14 and ar > 0.0
            have_sub = False
            for bk in range(n_blk):
                ex = pr - blk_cre[bk]
                ey = pi_ - blk_cim[bk]
                ub = 2.0 * (ex * ex + ey * ey) / (sp * blk_cs[bk])
                if ub >= skip_u[bk]:
                    continue
                inner = ub <= full_u[bk]
                for k in range(blk_start[bk], blk_start[bk + 1]):
                    if is_identity and k == me:
                        continue
                    fx = pr - nodes_re[k]
                    fy = pi_ - nodes_im[k]
                    u = (fx * fx + fy * fy) * inv_sp * node_inv_s[k]
                    if u < u_near:
                        if not have_sub:
                            for j in range(sub_n[me]):
                                qr, qi, dq = _mobius(ar, ai, br, bi, sub_re[me, j], sub_im[me, j])
                                pz_re[j] = qr
                                pz_im[j] = qi
                                pz_s[j] = sub_s[me, j] / dq
                            have_sub = True
                        acc_w = 0.0
                        acc_z = 0.0
                        for j in range(sub_n[k]):
                            gx = pr - sub_re[k, j]
                            gy = pi_ - sub_im[k, j]
                            acc_w += _q1_scalar(2.0 * (gx * gx + gy * gy) / (sp * sub_s[k, j])) * sub_w[k, j]
                        for j in range(sub_n[me]):
                            hx = pz_re[j] - nodes_re[k]
                            hy = pz_im[j] - nodes_im[k]
                            acc_z += _q1_scalar(2.0 * (hx * hx + hy * hy) / (pz_s[j] * node_s[k])) * sub_w[me, j]
                        out[r, k] += 0.5 * (acc_w / node_w[k] + acc_z / node_w[me])
                    elif inner:
                        out[r, k] += _q1_scalar(u)
                    elif u < u_cut:
                        v = _q1_scalar(u)
                        if u > u_full:
                            v *= _taper(math.acosh(1.0 + u), cutoff, width)
                        out[r, k] += v


def _blocks(nodes: np.ndarray, n_side: int = 24):
    """Group nodes into square blocks; returns the node order and block data."""
    x, y = nodes.real, nodes.imag
    lo = min(x.min(), y.min())
    span = max(x.max(), y.max()) - lo + 1e-12
    ix = np.minimum((n_side * (x - lo) / span).astype(int), n_side - 1)
    iy = np.minimum((n_side * (y - lo) / span).astype(int), n_side - 1)
    key = ix * n_side + iy
    order = np.argsort(key, kind="stable")
    keys, start = np.unique(key[order], return_index=True)
    start = np.append(start, len(nodes))
    cen, rad = [], []
    for i in range(len(keys)):
        pts = nodes[order[start[i]:start[i + 1]]]
        c = pts.mean()
        u = 2 * np.abs(pts - c) ** 2 / ((1 - abs(c) ** 2) * (1 - np.abs(pts) ** 2))
        cen.append(c)
        rad.append(float(np.arccosh(1 + u).max()) + 1e-9)
    return order, start, np.array(cen), np.array(rad)


@dataclass
class ResolventKernel:
    """Discretized D on a quadrature grid.

    ``rows[r]`` holds G(z_{reps[r]}, w) for every node w, already including
    the diagonal correction and the far-field constant.  Applying D uses
    only these rows and the node symmetries.
    """

    grid: QuadGrid
    rows: np.ndarray
    normalization: float
    cutoff: float
    taper: float
    far_constant: float
    _full: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.grid)

    def apply(self, f) -> np.ndarray:
        """(D f)(z_k) = sum_m G(z_k, z_m) f(z_m) w_m for one or more node vectors."""
        f = np.asarray(f)
        single = f.ndim == 1
        if f.shape[0] != self.n:
            raise ValueError(f"expected {self.n} node values, got {f.shape[0]}")
        fw = (f.T * self.grid.weights).T
        if self._full is not None:
            return self._full @ fw
        g = self.grid
        out = np.empty_like(fw, dtype=np.result_type(fw, float))
        for s in range(g.n_symmetries):
            perm = g.symmetry[s]
            out[perm[g.reps]] = self.rows @ fw[perm]
        return out[:, 0] if single and out.ndim > 1 else out

    def matrix(self) -> np.ndarray:
        """Full n x n matrix G (cached)."""
        if self._full is None:
            g = self.grid
            full = np.empty((self.n, self.n))
            for s in range(g.n_symmetries):
                perm = g.symmetry[s]
                inv = np.argsort(perm)
                # G(sigma z_r, w) = G(z_r, sigma^-1 w)
                full[perm[g.reps]] = self.rows[:, inv]
            self._full = full
        return self._full

    def symmetry_defect(self) -> float:
        full = self.matrix()
        return float(np.abs(full - full.T).max())

    def weighted_operator(self) -> LinearOperator:
        """W^1/2 G W^1/2, symmetric and similar to D."""
        return LinearOperator((self.n, self.n), matvec=self._sym_apply, matmat=self._sym_apply, dtype=float)

    def _sym_apply(self, v):
        sw = np.sqrt(self.grid.weights)
        v = np.asarray(v, dtype=float)
        x = (v.T / sw).T
        return (self.apply(x).T * sw).T

    def largest_eigenvalue(self) -> float:
        op = self.weighted_operator()
        v0 = np.sqrt(self.grid.weights)
        val = eigsh(op, k=1, which="LA", v0=v0, return_eigenvectors=False, tol=1e-10)
        return float(val[0])

    def smallest_eigenvalue(self) -> float:
        """Most negative eigenvalue of W^1/2 G W^1/2 (dense; needs the full matrix)."""
        sw = np.sqrt(self.grid.weights)
        m = sw[:, None] * self.matrix() * sw[None, :]
        m = 0.5 * (m + m.T)
        val = linalg.eigh(m, eigvals_only=True, subset_by_index=[0, 0], driver="evr")
        return float(val[0])

    def is_positive_definite(self, shift: float = 1e-6) -> bool:
        sw = np.sqrt(self.grid.weights)
        m = sw[:, None] * self.matrix() * sw[None, :]
        m = 0.5 * (m + m.T)
        m[np.diag_indices_from(m)] += shift
        try:
            linalg.cholesky(m, lower=True, overwrite_a=True, check_finite=False)
        except linalg.LinAlgError:
            return False
        return True

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        g = self.grid
        with open(tmp, "wb") as fh:
            fh.write(_HEADER.pack(KERNEL_MAGIC, KERNEL_VERSION, 0, 0, self.normalization, self.cutoff,
                                  self.taper, self.rows.shape[0], self.rows.shape[1]))
            fh.write(np.float64(self.far_constant).tobytes())
            fh.write(np.ascontiguousarray(self.rows, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(g.nodes, dtype="<c16").tobytes())
        tmp.replace(path)
        return path


def load_kernel(path, grid: QuadGrid) -> ResolventKernel:
    raw = Path(path).read_bytes()
    magic, version, _, _, c, cutoff, taper, m, n = _HEADER.unpack_from(raw)
    if magic != KERNEL_MAGIC or version != KERNEL_VERSION:
        raise ValueError(f"{path}: not a kernel dump of version {KERNEL_VERSION}")
    off = _HEADER.size
    far = float(np.frombuffer(raw, "<f8", 1, off)[0])
    off += 8
    rows = np.frombuffer(raw, "<f8", m * n, off).reshape(m, n).copy()
    off += 8 * m * n
    nodes = np.frombuffer(raw, "<c16", n, off)
    if n != len(grid) or m != len(grid.reps) or not np.array_equal(nodes, grid.nodes):
        raise ValueError(f"{path}: kernel dump was built on a different grid")
    return ResolventKernel(grid, rows, c, cutoff, taper, far)


def required_ball_radius(cutoff: float, covering_radius: float) -> float:
    return cutoff + 2.0 * covering_radius


def build_kernel(grid: QuadGrid, ball: GroupBall, cutoff: float = DEFAULT_CUTOFF,
                 taper: float = DEFAULT_TAPER, near: float = DEFAULT_NEAR, normalization: float | None = None,
                 check: bool = True, materialize: bool | None = None) -> ResolventKernel:
    """Assemble the periodized kernel rows for the representative nodes.

    Raises NormalizationError if D(1) deviates from 1 by more than 1e-2.
    """
    if not 0 < taper < cutoff:
        raise ValueError("need 0 < taper < cutoff")
    rcov = ball.covering_radius
    need = required_ball_radius(cutoff, rcov)
    if ball.radius + 1e-9 < need:
        raise InsufficientBallError(f"kernel cutoff {cutoff} needs a ball of radius {need:.3f}", need)
    c = calibrate_normalization() if normalization is None else float(normalization)
    area = 4.0 * math.pi * (ball.genus - 1)
    far = far_field_mass(cutoff, taper, c) / area

    nodes = grid.nodes
    order, start, cen, rad = _blocks(nodes)
    onodes = nodes[order]
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    rows_node = rank[grid.reps]
    sub = ball.restrict(need)
    out = np.zeros((len(grid.reps), len(nodes)))
    osub = grid.sub_points[order]
    _rows_kernel(rows_node, onodes.real.copy(), onodes.imag.copy(), 1.0 - np.abs(onodes) ** 2,
                 grid.weights[order], osub.real.copy(), osub.imag.copy(), 1.0 - np.abs(osub) ** 2,
                 grid.sub_weights[order], grid.sub_count[order].astype(np.int64), start.astype(np.int64), cen.real.copy(), cen.imag.copy(), 1.0 - np.abs(cen) ** 2, rad,
                 sub.a.real.copy(), sub.a.imag.copy(), sub.b.real.copy(), sub.b.imag.copy(),
                 float(cutoff), float(taper), float(cutoff + rcov + 1e-9), float(near), out)
    rows = np.empty_like(out)
    rows[:, order] = c * out
    # self cell: mass of the free kernel over a disk of the cell's hyperbolic area
    w_self = grid.weights[grid.reps]
    r0 = np.arccosh(1.0 + w_self / (2.0 * math.pi))
    self_mass = np.array([disk_mass(r, c) for r in r0])
    rows[np.arange(len(grid.reps)), grid.reps] += self_mass / w_self
    rows += far
    kern = ResolventKernel(grid, rows, c, float(cutoff), float(taper), far)
    if materialize is None:
        materialize = len(nodes) <= MATERIALIZE_LIMIT
    if materialize:
        kern.matrix()
    if check:
        d1 = kern.apply(np.ones(len(nodes)))
        dev = float(np.abs(d1 - 1.0).max())
        if dev > 1e-2:
            raise NormalizationError(f"D(1) deviates from 1 by {dev:.3g}")
    return kern


def apply_D(kernel: ResolventKernel, f) -> np.ndarray:
    return kernel.apply(f)
