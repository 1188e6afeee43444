"""Harmonic Beltrami differentials from Poincaré theta series.

Theta(f)(z) = sum over gamma of f(gamma z) gamma'(z)^2 is an automorphic
quadratic differential for any polynomial f, and conj(Theta(f)) / rho is the
corresponding harmonic Beltrami differential.  The sum is truncated by the
orbit point, keeping gamma with d(0, gamma z) <= radius.  That set is the
same for z and any translate of z, so the truncated series is exactly
automorphic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .fuchsian import GroupBall, InsufficientBallError
from .quadrature import QuadGrid

DEFAULT_THETA_RADIUS = 8.0
TAIL_TOLERANCE = 1e-6
# residual norm, relative to the largest seed norm, below which a seed counts as dependent;
# truncated series of vanishing forms sit near 4e-5 at radius 8
RANK_TOLERANCE = 1e-3
AUTO_MAX_POWER = 40


class RankDeficiencyError(ValueError):
    def __init__(self, msg: str, dependent: list[str]):
        super().__init__(msg)
        self.dependent = dependent


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ThetaSeed:
    """Polynomial seed sum_k c_k z^k, stored as (power, coefficient) pairs."""

    terms: tuple[tuple[int, complex], ...]
    tag: str = ""

    def __post_init__(self):
        if not self.terms:
            raise ValueError("a seed needs at least one term")
        if any(int(p) < 0 or int(p) != p for p, _ in self.terms):
            raise ValueError("powers must be non-negative integers")

    @classmethod
    def monomial(cls, k: int) -> "ThetaSeed":
        return cls(((int(k), 1.0),), "1" if k == 0 else ("z" if k == 1 else f"z^{k}"))

    @classmethod
    def one_minus_power(cls, n: int) -> "ThetaSeed":
        return cls(((0, 1.0), (int(n), -1.0)), f"1-z^{n}")

    @property
    def max_power(self) -> int:
        return max(p for p, _ in self.terms)

    def coefficients(self, size: int | None = None) -> np.ndarray:
        c = np.zeros((size or self.max_power + 1), dtype=complex)
        for p, v in self.terms:
            c[p] += v
        return c

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return sum(v * z ** p for p, v in self.terms)


@numba.njit(cache=True)
def _theta_powers(z, a, b, max_power, cut, shell, out, tail):
    """out[i, k] = sum of (gamma z_i)^k gamma'(z_i)^2 over orbit points with |gamma z_i| <= cut.

    tail[i, k] collects the same terms restricted to shell < |gamma z_i|.
    """
    cut2 = cut * cut
    shell2 = shell * shell
    for i in range(z.shape[0]):
        zi = z[i]
        for g in range(a.shape[0]):
            den = np.conj(b[g]) * zi + np.conj(a[g])
            w = (a[g] * zi + b[g]) / den
            r2 = w.real * w.real + w.imag * w.imag
            if r2 > cut2:
                continue
            d2 = 1.0 / (den * den)
            term = d2 * d2
            in_shell = r2 > shell2
            for k in range(max_power + 1):
                out[i, k] += term
                if in_shell:
                    tail[i, k] += term
                term *= w


def theta_powers(z, ball: GroupBall, max_power: int, radius: float = DEFAULT_THETA_RADIUS,
                 strict: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Theta(z^k)(z) for k = 0..max_power, and the contribution of the last unit shell."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if np.any(np.abs(z) >= 1.0):
        raise ValueError("theta series points must lie in the open disk")
    if strict:
        r = np.abs(z).max()
        need = radius + float(np.log1p(r) - np.log1p(-r))
        if ball.radius + 1e-9 < need:
            raise InsufficientBallError(f"theta at radius {radius} needs a ball of radius {need:.3f}", need)
    out = np.zeros((len(z), max_power + 1), dtype=complex)
    tail = np.zeros_like(out)
    _theta_powers(z, ball.a, ball.b, int(max_power), math.tanh(0.5 * radius),
                  math.tanh(0.5 * max(radius - 1.0, 0.0)), out, tail)
    return out, tail


@dataclass(frozen=True)
class ThetaValue:
    values: np.ndarray
    tail: np.ndarray
    radius: float

    @property
    def relative_tail(self) -> float:
        scale = np.abs(self.values).max()
        return float(np.abs(self.tail).max() / scale) if scale > 0 else 0.0

    @property
    def flagged(self) -> bool:
        return self.relative_tail > TAIL_TOLERANCE


def theta(seed: ThetaSeed, ball: GroupBall, z, radius: float = DEFAULT_THETA_RADIUS,
          strict: bool = True) -> ThetaValue:
    """Truncated Theta(seed) at the points z, with the last-shell tail estimate."""
    pw, tl = theta_powers(z, ball, seed.max_power, radius, strict)
    c = seed.coefficients()
    return ThetaValue(pw @ c, tl @ c, float(radius))


def density(z) -> np.ndarray:
    return 4.0 / (1.0 - np.abs(z) ** 2) ** 2


@dataclass(frozen=True)
class BeltramiDifferential:
    values: np.ndarray  # node values of conj(Theta(f)) / rho
    seed: ThetaSeed | None
    radius: float
    grid_id: int

    def norm(self, grid: QuadGrid) -> float:
        return math.sqrt(max(petersson_inner(self, self, grid).real, 0.0))


def beltrami_from_seed(seed: ThetaSeed, ball: GroupBall, grid: QuadGrid,
                       radius: float = DEFAULT_THETA_RADIUS) -> BeltramiDifferential:
    tv = theta(seed, ball, grid.nodes, radius)
    return BeltramiDifferential(np.conj(tv.values) / grid.density, seed, radius, id(grid))


def petersson_inner(mu, nu, grid: QuadGrid) -> complex:
    """<mu, nu> = integral of mu conj(nu) dA."""
    mv = mu.values if isinstance(mu, BeltramiDifferential) else np.asarray(mu)
    nv = nu.values if isinstance(nu, BeltramiDifferential) else np.asarray(nu)
    for d in (mu, nu):
        if isinstance(d, BeltramiDifferential) and d.grid_id != id(grid):
            raise GridMismatchError("differential was sampled on a different grid")
    if mv.shape[-1] != len(grid) or nv.shape[-1] != len(grid):
        raise GridMismatchError("node count does not match the grid")
    if mv.ndim == 1 and nv.ndim == 1:
        return complex(np.sum(mv * np.conj(nv) * grid.weights))
    return (mv * grid.weights) @ np.conj(nv).T


@dataclass
class BeltramiBasis:
    """Petersson-orthonormal differentials mu_i = sum_j coeffs[i, j] nu_j.

    nu_j = conj(Theta(seeds[j])) / rho are the raw seed differentials.
    """

    mus: np.ndarray  # (dim, n) node values
    seeds: list[ThetaSeed]
    coeffs: np.ndarray  # (dim, len(seeds))
    gram: np.ndarray  # Gram matrix of the raw seed differentials
    radius: float
    grid: QuadGrid = field(repr=False)
    ball: GroupBall = field(repr=False)
    max_tail: float = 0.0

    @property
    def dim(self) -> int:
        return self.mus.shape[0]

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.gram))

    def differential(self, i: int) -> BeltramiDifferential:
        return BeltramiDifferential(self.mus[i], None, self.radius, id(self.grid))

    def orthonormality_defect(self) -> float:
        g = petersson_inner(self.mus, self.mus, self.grid)
        return float(np.abs(g - np.eye(self.dim)).max())

    def evaluate(self, z) -> np.ndarray:
        """mu_i(z) for arbitrary disk points, shape (dim, len(z))."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        top = max(s.max_power for s in self.seeds)
        pw, _ = theta_powers(z, self.ball, top, self.radius)
        raw = np.stack([pw @ s.coefficients(top + 1) for s in self.seeds])
        return self.coeffs @ (np.conj(raw) / density(z))

    def projector_trace(self) -> np.ndarray:
        """sum_i |mu_i(z)|^2 at every node (independent of the orthonormal basis)."""
        return np.sum(np.abs(self.mus) ** 2, axis=0)

    def projector(self, zi, wi) -> np.ndarray:
        """sum_i mu_i(z) conj(mu_i(w)) for node index arrays zi, wi."""
        return self.mus[:, zi].T @ np.conj(self.mus[:, wi])

    def expand(self, values) -> tuple[np.ndarray, float]:
        """Coefficients of a node-sampled differential and the relative residual norm."""
        v = np.asarray(values)
        c = petersson_inner(v[None, :], self.mus, self.grid)[0]
        res = v - c @ self.mus
        nv = math.sqrt(max(petersson_inner(v, v, self.grid).real, 0.0))
        nr = math.sqrt(max(petersson_inner(res, res, self.grid).real, 0.0))
        return c, (nr / nv if nv > 0 else 0.0)

    def to_csv(self, path) -> None:
        cols = [self.grid.nodes.real, self.grid.nodes.imag]
        names = ["x", "y"]
        for i in range(self.dim):
            cols += [self.mus[i].real, self.mus[i].imag]
            names += [f"mu{i + 1}_re", f"mu{i + 1}_im"]
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def _orthonormalize(raw: np.ndarray, grid: QuadGrid, rank_tol: float, scale: float | None = None):
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    A row is dependent when its residual norm is below rank_tol * scale
    (default scale: the largest row norm).  Returns (orthonormal rows,
    coefficient matrix, indices of dependent rows).
    """
    k = raw.shape[0]
    q_rows, c_rows, dependent = [], [], []
    w = grid.weights
    if scale is None:
        scale = float(np.sqrt((np.abs(raw) ** 2 @ w).max()))
    for j in range(k):
        v = raw[j].copy()
        c = np.zeros(k, dtype=complex)
        c[j] = 1.0
        for _ in range(2):
            for q, cq in zip(q_rows, c_rows):
                p = np.sum(v * np.conj(q) * w)
                v = v - p * q
                c = c - p * cq
        n1 = math.sqrt(np.sum(np.abs(v) ** 2 * w))
        if n1 <= rank_tol * scale:
            dependent.append(j)
            continue
        q_rows.append(v / n1)
        c_rows.append(c / n1)
    return np.array(q_rows), np.array(c_rows), dependent


def auto_seeds(ball: GroupBall, grid: QuadGrid, dim: int, radius: float = DEFAULT_THETA_RADIUS,
               max_power: int = AUTO_MAX_POWER, rank_tol: float = RANK_TOLERANCE) -> list[ThetaSeed]:
    """Lowest-degree monomials whose theta series are independent, chosen greedily."""
    pw, _ = theta_powers(grid.nodes, ball, max_power, radius)
    raw = np.conj(pw.T) / grid.density
    scale = float(np.sqrt((np.abs(raw) ** 2 @ grid.weights).max()))
    chosen = []
    for k in range(max_power + 1):
        trial = chosen + [k]
        _, _, dep = _orthonormalize(raw[trial], grid, rank_tol, scale)
        if not dep:
            chosen = trial
        if len(chosen) == dim:
            return [ThetaSeed.monomial(p) for p in chosen]
    raise RankDeficiencyError(f"only {len(chosen)} independent monomial seeds up to degree {max_power}",
                              [])


def build_basis(seeds, ball: GroupBall, grid: QuadGrid, radius: float = DEFAULT_THETA_RADIUS,
                rank_tol: float = RANK_TOLERANCE) -> BeltramiBasis:
    """Orthonormal basis of the 3g-3 dimensional space from theta seeds.

    ``seeds="auto"`` (or None) picks monomials greedily.
    """
    dim = 3 * ball.genus - 3
    if seeds is None or seeds == "auto":
        seeds = auto_seeds(ball, grid, dim, radius, rank_tol=rank_tol)
    seeds = list(seeds)
    if len(seeds) < dim:
        raise RankDeficiencyError(f"need at least {dim} seeds, got {len(seeds)}", [])
    top = max(s.max_power for s in seeds)
    pw, tl = theta_powers(grid.nodes, ball, top, radius)
    coef = np.stack([s.coefficients(top + 1) for s in seeds], axis=1)
    th = pw @ coef
    tail = tl @ coef
    raw = (np.conj(th) / grid.density[:, None]).T
    gram = petersson_inner(raw, raw, grid)
    q, c, dep = _orthonormalize(raw, grid, rank_tol)
    if len(q) < dim:
        names = [seeds[j].tag or repr(seeds[j].terms) for j in dep]
        raise RankDeficiencyError(f"seed differentials have rank {len(q)} < {dim}; dependent: {', '.join(names)}",
                                  names)
    # surplus independent seeds are ignored; coefficient rows still span all seeds
    q, c = q[:dim], c[:dim]
    max_tail = float((np.abs(tail).max(axis=0) / np.maximum(np.abs(th).max(axis=0), 1e-300)).max())
    return BeltramiBasis(q, seeds, c, gram, float(radius), grid, ball, max_tail)
