"""The curvature operator on the second exterior power of the tangent space.

The wedge basis is ordered as x_i^x_j (i<j), x_i^y_j (all i, j), y_i^y_j
(i<j), which is orthonormal for the induced inner product.  An element is
stored as one real vector in that order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .beltrami import BeltramiBasis
from .curvature import CurvatureTensor, real_frame_tensor
from .resolvent import ResolventKernel

ASYMMETRY_ERROR = 1e-8


class MatrixAsymmetryError(RuntimeError):
    pass


class EigenSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class WedgeBasis:
    dim: int  # complex dimension 3g-3

    @property
    def upper(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.dim) for j in range(i + 1, self.dim)]

    @property
    def size(self) -> int:
        n = self.dim
        return n * (n - 1) + n * n

    def labels(self) -> list[str]:
        xx = [f"x{i + 1}^x{j + 1}" for i, j in self.upper]
        xy = [f"x{i + 1}^y{j + 1}" for i in range(self.dim) for j in range(self.dim)]
        yy = [f"y{i + 1}^y{j + 1}" for i, j in self.upper]
        return xx + xy + yy

    def frame_pairs(self) -> list[tuple[int, int]]:
        """(a, b) indices into the real frame (x_1..x_n, y_1..y_n) for each basis element."""
        n = self.dim
        xx = [(i, j) for i, j in self.upper]
        xy = [(i, n + j) for i in range(n) for j in range(n)]
        yy = [(n + i, n + j) for i, j in self.upper]
        return xx + xy + yy

    def split(self, v) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coefficient blocks a (upper), b (n x n), c (upper) of a wedge vector."""
        v = np.asarray(v, dtype=float)
        m = len(self.upper)
        n = self.dim
        return v[:m], v[m:m + n * n].reshape(n, n), v[m + n * n:]

    def join(self, a, b, c) -> np.ndarray:
        return np.concatenate([np.asarray(a, float), np.asarray(b, float).ravel(), np.asarray(c, float)])

    def element(self, a=None, b=None, c=None) -> np.ndarray:
        m = len(self.upper)
        n = self.dim
        return self.join(np.zeros(m) if a is None else a, np.zeros((n, n)) if b is None else b,
                         np.zeros(m) if c is None else c)


def wedge_norm2(A) -> float:
    return float(np.dot(A, A))


def apply_J(A, wb: WedgeBasis) -> np.ndarray:
    """J(x_i^x_j) = y_i^y_j, J(x_i^y_j) = x_j^y_i, J(y_i^y_j) = x_i^x_j."""
    a, b, c = wb.split(A)
    return wb.join(c, b.T, a)


def kernel_element(B, wb: WedgeBasis) -> np.ndarray:
    """B - J(B), annihilated by the curvature operator."""
    B = np.asarray(B, dtype=float)
    return B - apply_J(B, wb)


@dataclass
class CurvatureOperatorMatrix:
    matrix: np.ndarray
    basis: WedgeBasis
    provenance: str = "real-frame tensor"

    def quadratic_form(self, A) -> float:
        A = np.asarray(A, dtype=float)
        return float(A @ self.matrix @ A)

    def __matmul__(self, A):
        return self.matrix @ np.asarray(A, dtype=float)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))


def assemble_matrix(T: CurvatureTensor) -> CurvatureOperatorMatrix:
    """Q[(ab), (cd)] = Rm(e_a, e_b, e_c, e_d) over the wedge basis."""
    wb = WedgeBasis(T.dim)
    rm = real_frame_tensor(T.R)
    pairs = np.array(wb.frame_pairs())
    m = rm[pairs[:, 0][:, None], pairs[:, 1][:, None], pairs[:, 0][None, :], pairs[:, 1][None, :]]
    asym = float(np.abs(m - m.T).max())
    if asym > ASYMMETRY_ERROR * max(1.0, float(np.abs(m).max())):
        raise MatrixAsymmetryError(f"curvature operator asymmetric by {asym:.3g}")
    return CurvatureOperatorMatrix(0.5 * (m + m.T), wb)


def _u_coefficients(A, wb: WedgeBasis):
    """d (a+c on i<j, zero otherwise) and b as complex n x n coefficient arrays."""
    a, b, c = wb.split(A)
    n = wb.dim
    d = np.zeros((n, n))
    for (i, j), x, y in zip(wb.upper, a, c):
        d[i, j] = x + y
    return d, b


def q_form(A, basis: BeltramiBasis, kernel: ResolventKernel, method: str | None = None) -> float:
    """Quadratic form of the curvature operator from the F/H integral decomposition.

    With F(z, w) = sum d_ij mu_i(w) conj mu_j(z), H likewise with b_ij and
    U = F + iH, in the orthonormal-frame normalization

        Q(A, A) = -int D(Im U(z,z)) Im U(z,z) - 1/2 iint G |U|^2
                  + 1/2 Re iint G U(z,w) U(w,z).

    ``method="direct"`` sums over the dense kernel matrix; ``"fields"``
    expands U and applies D to products mu_i conj mu_k.
    """
    wb = WedgeBasis(basis.dim)
    d, b = _u_coefficients(A, wb)
    u = d + 1j * b
    mu = basis.mus
    w = basis.grid.weights
    if method is None:
        method = "direct" if kernel._full is not None else "fields"
    diag = np.einsum("ij,iz,jz->z", u, mu, np.conj(mu))
    im = diag.imag
    local = -float(np.sum(kernel.apply(im) * im * w))
    if method == "direct":
        G = kernel.matrix()
        # Umat[z, w] = U(z, w) = sum u_ij mu_i(w) conj mu_j(z)
        left = (np.conj(mu).T @ u.T)  # [z, i] = sum_j u_ij conj mu_j(z)
        umat = left @ mu  # [z, w]
        gw = G * w[:, None] * w[None, :]
        t1 = float(np.sum(gw * np.abs(umat) ** 2))
        t2 = float(np.sum(gw * umat * umat.T).real)
    elif method == "fields":
        n = basis.dim
        prod = (mu[:, None, :] * np.conj(mu)[None, :, :]).reshape(n * n, -1)
        dprod = kernel.apply(prod.T).T.reshape(n, n, -1)
        prod = prod.reshape(n, n, -1)
        # |U|^2 term: sum u_ij conj(u_kl) int D(P_ik) P_lj
        m1 = np.einsum("ikz,ljz->ijkl", dprod * w, prod)
        t1 = float(np.einsum("ij,kl,ijkl->", u, np.conj(u), m1).real)
        # U(z,w)U(w,z): sum u_ij u_kl int D(P_il) P_kj
        m2 = np.einsum("ilz,kjz->ijkl", dprod * w, prod)
        t2 = float(np.einsum("ij,kl,ijkl->", u, u, m2).real)
    else:
        raise ValueError(f"unknown method {method!r}")
    return local - 0.5 * t1 + 0.5 * t2


def q_form_bounds(A, basis: BeltramiBasis, kernel: ResolventKernel, value: float | None = None) -> dict:
    """-Q >= int D(Im U) Im U and -Q <= 4 (int |F(z,z)|^2 + int |H(z,z)|^2), orthonormal normalization."""
    wb = WedgeBasis(basis.dim)
    d, b = _u_coefficients(A, wb)
    mu = basis.mus
    w = basis.grid.weights
    fz = np.einsum("ij,iz,jz->z", d, mu, np.conj(mu))
    hz = np.einsum("ij,iz,jz->z", b, mu, np.conj(mu))
    im = (fz + 1j * hz).imag
    q = q_form(A, basis, kernel) if value is None else value
    lower = float(np.sum(kernel.apply(im) * im * w))
    upper = 4.0 * float(np.sum((np.abs(fz) ** 2 + np.abs(hz) ** 2) * w))
    return {"q": q, "lower": lower, "upper": upper, "pass": lower - 1e-10 <= -q <= upper + 1e-10}


def special_element(wb: WedgeBasis) -> np.ndarray:
    """A0 = (1/sqrt n) sum_i x_i ^ y_i."""
    return wb.element(b=np.eye(wb.dim) / math.sqrt(wb.dim))


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray = field(repr=False)
    zero_tol: float = 0.0
    n_negative: int = 0
    n_zero: int = 0
    n_positive: int = 0

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "zero_tol": self.zero_tol,
            "n_negative": self.n_negative,
            "n_zero": self.n_zero,
            "n_positive": self.n_positive,
            "lambda_min": self.lambda_min,
        }


def spectrum(M: CurvatureOperatorMatrix, zero_tol: float | None = None,
             rel_zero_tol: float = 1e-6) -> SpectrumReport:
    """Full symmetric eigendecomposition with eigenvalues split by |lambda| < zero_tol."""
    try:
        vals, vecs = linalg.eigh(M.matrix)
    except (linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(str(exc)) from exc
    if zero_tol is None:
        zero_tol = rel_zero_tol * float(np.abs(vals).max())
    neg = int(np.sum(vals < -zero_tol))
    zero = int(np.sum(np.abs(vals) <= zero_tol))
    return SpectrumReport(vals, vecs, float(zero_tol), neg, zero, len(vals) - neg - zero)
