"""Weil-Petersson curvature tensor and the curvatures derived from it.

In an orthonormal basis {mu_i} of harmonic Beltrami differentials,

    R[i, j, k, l] = int D(mu_i conj mu_j) mu_k conj mu_l dA
                  + int D(mu_i conj mu_l) mu_k conj mu_j dA

Real-frame components use the frame x_i <-> mu_i, y_i <-> -i mu_i; see
:func:`real_frame_tensor`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beltrami import BeltramiBasis
from .constants import b_hat, c0, c_of_r
from .quadrature import QuadGrid
from .resolvent import ResolventKernel

SYMMETRY_ERROR = 1e-4


class TensorSymmetryError(RuntimeError):
    pass


class DegenerateDirectionError(ValueError):
    pass


@dataclass
class CurvatureTensor:
    R: np.ndarray  # complex (n, n, n, n)
    products: np.ndarray = field(repr=False)  # (n, n, nodes): mu_i conj mu_j
    d_products: np.ndarray = field(repr=False)  # D applied to each product
    weights: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.R.shape[0]

    def symmetry_defects(self) -> dict:
        R = self.R
        return {
            "swap_i_k": float(np.abs(R - R.transpose(2, 1, 0, 3)).max()),
            "swap_j_l": float(np.abs(R - R.transpose(0, 3, 2, 1)).max()),
            "conjugate": float(np.abs(np.conj(R) - R.transpose(1, 0, 3, 2)).max()),
        }


def tensor(basis: BeltramiBasis, kernel: ResolventKernel, grid: QuadGrid | None = None,
           check: bool = True) -> CurvatureTensor:
    grid = grid or basis.grid
    mu = basis.mus
    n = mu.shape[0]
    prod = mu[:, None, :] * np.conj(mu)[None, :, :]
    flat = prod.reshape(n * n, -1)
    dflat = kernel.apply(flat.T).T
    w = grid.weights
    # first[i, j, k, l] = int D(P_ij) P_kl
    first = ((dflat * w) @ flat.T).reshape(n, n, n, n)
    R = first + first.transpose(0, 3, 2, 1)
    out = CurvatureTensor(R, prod, dflat.reshape(n, n, -1), w)
    if check:
        worst = max(out.symmetry_defects().values())
        if worst > SYMMETRY_ERROR:
            raise TensorSymmetryError(f"curvature tensor symmetry defect {worst:.3g}")
    return out


def scalar_curvature(T: CurvatureTensor) -> float:
    """Sca = -sum_{i,j} R[i, j, j, i], contracted from the tensor."""
    return float(-np.einsum("ijji->", T.R).real)


def ricci_from_tensor(T: CurvatureTensor) -> np.ndarray:
    return -np.einsum("ijji->i", T.R).real


def ricci_from_fields(basis: BeltramiBasis, kernel: ResolventKernel) -> np.ndarray:
    """Ric(mu_i) = -sum_j (int D(mu_i conj mu_j) mu_j conj mu_i + int D(|mu_i|^2) |mu_j|^2)."""
    mu = basis.mus
    w = basis.grid.weights
    tr = np.sum(np.abs(mu) ** 2, axis=0)
    out = np.empty(mu.shape[0])
    for i in range(mu.shape[0]):
        pij = mu[i] * np.conj(mu)
        dp = kernel.apply(pij.T).T
        cross = np.sum(dp * np.conj(pij) * w)
        diag = np.sum(kernel.apply(np.abs(mu[i]) ** 2) * tr * w)
        out[i] = -(cross.real + diag)
    return out


def scalar_from_fields(basis: BeltramiBasis, kernel: ResolventKernel) -> float:
    """Sca = -(sum_{i,j} int D(mu_i conj mu_j) mu_j conj mu_i + int D(T) T), T = sum |mu_i|^2.

    Uses fresh kernel applications, independent of the assembled tensor.
    """
    mu = basis.mus
    w = basis.grid.weights
    n = mu.shape[0]
    prod = (mu[:, None, :] * np.conj(mu)[None, :, :]).reshape(n * n, -1)
    dprod = kernel.apply(prod.T).T
    cross = np.sum(dprod * np.conj(prod) * w).real
    tr = np.sum(np.abs(mu) ** 2, axis=0)
    return float(-(cross + np.sum(kernel.apply(tr) * tr * w)))


def hol_sec_curvature(mu, kernel: ResolventKernel, grid: QuadGrid, tol: float = 1e-12) -> float:
    """K(mu) = -2 int D(|mu|^2) |mu|^2 dA / ||mu||^4."""
    v = getattr(mu, "values", mu)
    v = np.asarray(v)
    a2 = np.abs(v) ** 2
    norm2 = float(np.sum(a2 * grid.weights))
    if norm2 <= tol:
        raise DegenerateDirectionError("direction has (numerically) zero norm")
    return float(-2.0 * np.sum(kernel.apply(a2) * a2 * grid.weights) / norm2 ** 2)


@dataclass(frozen=True)
class Inequality:
    """One checked inequality lhs <= rhs (with optional additive slack)."""

    name: str
    lhs: float
    rhs: float
    slack: float = 0.0

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + self.slack

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack, "pass": self.holds}


def hol_sec_bounds(mu, kernel: ResolventKernel, grid: QuadGrid, inj: float | None = None,
                   rel_slack: float = 1e-4) -> tuple[float, list[Inequality]]:
    """K(mu) with its L4 sandwich and, when inj >= 1, the sup-norm bracket."""
    v = np.asarray(getattr(mu, "values", mu))
    k = hol_sec_curvature(v, kernel, grid)
    a2 = np.abs(v) ** 2
    norm2 = float(np.sum(a2 * grid.weights))
    l4 = float(np.sum(a2 * a2 * grid.weights)) / norm2 ** 2
    sup2 = float(a2.max()) / norm2
    s = rel_slack * abs(k)
    out = [
        Inequality("K >= -2 int|mu|^4 / |mu|^4", -2.0 * l4, k, s),
        Inequality("K <= -(2/3) int|mu|^4 / |mu|^4", k, -2.0 / 3.0 * l4, s),
        Inequality("K < 0", k, 0.0),
    ]
    if inj is not None and inj >= 1.0:
        out += [
            Inequality("K >= -2 sup|mu|^2 / |mu|^2", -2.0 * sup2, k, s),
            Inequality("K <= -C0 sup|mu|^4 / |mu|^4", k, -c0() * sup2 ** 2, s),
        ]
    return k, out


def scalar_bounds(sca: float, basis: BeltramiBasis, inj: float | None = None,
                  rel_slack: float = 1e-4) -> list[Inequality]:
    tr = basis.projector_trace()
    w = basis.grid.weights
    l2 = float(np.sum(tr * tr * w))
    g = basis.ball.genus
    s = rel_slack * abs(sca)
    out = [
        Inequality("Sca >= -2 int (sum|mu_i|^2)^2", -2.0 * l2, sca, s),
        Inequality("Sca <= -(1/3) int (sum|mu_i|^2)^2", sca, -l2 / 3.0, s),
        Inequality("Sca <= -3(3g-2)/(4 pi)", sca, -3.0 * (3 * g - 2) / (4.0 * math.pi)),
    ]
    if inj is not None:
        out.append(Inequality("Sca >= -6(g-1) C(inj)", -6.0 * (g - 1) * c_of_r(inj), sca))
    return out


def real_frame_tensor(R: np.ndarray) -> np.ndarray:
    """Real 4-tensor Rm(e_a, e_b, e_c, e_d) in the frame (x_1..x_n, y_1..y_n).

    Rm(X, Y, Z, W) = 1/4 sum R[i,j,k,l] O^ij(X, Y) O^kl(Z, W) with
    O^ij(X, Y) = X^i conj(Y^j) - Y^i conj(X^j), where a real vector with
    components (x, y) has complex coordinates X = x - i y.
    """
    n = R.shape[0]
    frame = np.concatenate([np.eye(n), -1j * np.eye(n)], axis=0)  # row a = complex coords of e_a
    omega = np.einsum("ai,bj->abij", frame, np.conj(frame))
    omega = omega - np.einsum("bi,aj->abij", frame, np.conj(frame))
    rm = 0.25 * np.einsum("ijkl,abij,cdkl->abcd", R, omega, omega)
    return rm.real


def tensor_norm_report(T: CurvatureTensor, inj: float) -> dict:
    rm = real_frame_tensor(T.R)
    biggest = float(np.abs(rm).max())
    bound = b_hat(inj)
    return {"max_component": biggest, "bound": bound, "inj": float(inj), "pass": biggest <= bound}


@dataclass
class CurvatureSummary:
    scalar: float
    scalar_fields: float
    ricci: np.ndarray
    ricci_fields: np.ndarray
    hol_sec: np.ndarray
    ledger: list[Inequality]

    def to_dict(self) -> dict:
        return {
            "scalar": self.scalar,
            "scalar_fields": self.scalar_fields,
            "ricci": self.ricci.tolist(),
            "ricci_fields": self.ricci_fields.tolist(),
            "hol_sec": self.hol_sec.tolist(),
            "ledger": [q.to_dict() for q in self.ledger],
        }


def summarize(T: CurvatureTensor, basis: BeltramiBasis, kernel: ResolventKernel,
              inj: float | None = None) -> CurvatureSummary:
    sca = scalar_curvature(T)
    ledger = scalar_bounds(sca, basis, inj)
    ks = []
    for i in range(basis.dim):
        k, ineq = hol_sec_bounds(basis.mus[i], kernel, basis.grid, inj)
        ks.append(k)
        ledger += [Inequality(f"mu_{i + 1}: {q.name}", q.lhs, q.rhs, q.slack) for q in ineq]
    return CurvatureSummary(sca, scalar_from_fields(basis, kernel), ricci_from_tensor(T),
                            ricci_from_fields(basis, kernel), np.array(ks), ledger)
