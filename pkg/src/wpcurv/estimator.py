"""Estimator-style wrapper around the pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from .beltrami import DEFAULT_THETA_RADIUS
from .curvature import hol_sec_curvature, scalar_curvature
from .operator import q_form
from .pipeline import Pipeline, RunConfig
from .resolvent import DEFAULT_CUTOFF

__all__ = ["WeilPeterssonCurvature", "NotFittedError"]


class WeilPeterssonCurvature(BaseEstimator):
    """Curvature of the Weil-Petersson metric at the regular-polygon surface of a given genus.

    ``fit`` needs no data; it runs the pipeline up to the curvature-operator
    spectrum.  Fitted attributes end in an underscore.

    Parameters
    ----------
    genus : int
    radius : float
        Group-ball radius, also the theta-series truncation radius.
    grid_h : float or None
        Quadrature spacing; None gives about 5000 nodes.
    zero_tol : float or None
        Eigenvalue zero threshold; None uses 1e-6 times the spectral radius.
    seeds : "auto" or comma-separated monomial powers
    kernel_cutoff : float
    cache_dir : str or None
    """

    def __init__(self, genus=2, radius=DEFAULT_THETA_RADIUS, grid_h=None, zero_tol=None, seeds="auto",
                 kernel_cutoff=DEFAULT_CUTOFF, cache_dir=None):
        self.genus = genus
        self.radius = radius
        self.grid_h = grid_h
        self.zero_tol = zero_tol
        self.seeds = seeds
        self.kernel_cutoff = kernel_cutoff
        self.cache_dir = cache_dir

    def _config(self) -> RunConfig:
        return RunConfig(genus=self.genus, radius=self.radius, grid_h=self.grid_h, zero_tol=self.zero_tol,
                         seeds=self.seeds, kernel_cutoff=self.kernel_cutoff, cache_dir=self.cache_dir)

    def fit(self, X=None, y=None):
        pipe = Pipeline(self._config())
        self.pipeline_ = pipe
        self.injectivity_radius_ = pipe.inj
        self.basis_ = pipe.basis
        self.kernel_ = pipe.kernel
        self.tensor_ = pipe.tensor
        self.matrix_ = pipe.matrix
        self.spectrum_ = pipe.spectrum
        self.scalar_curvature_ = scalar_curvature(self.tensor_)
        self.lambda_min_ = self.spectrum_.lambda_min
        self.eigenvalues_ = self.spectrum_.eigenvalues
        return self

    def quadratic_form(self, A, method: str = "matrix") -> float:
        """Q(A, A) from the assembled matrix or, with method="integral", from the F/H formula."""
        check_is_fitted(self, "spectrum_")
        A = np.asarray(A, dtype=float)
        if method == "matrix":
            return self.matrix_.quadratic_form(A)
        return q_form(A, self.basis_, self.kernel_)

    def hol_sec(self, coefficients) -> float:
        """Holomorphic sectional curvature along sum_i c_i mu_i."""
        check_is_fitted(self, "spectrum_")
        c = np.asarray(coefficients, dtype=complex)
        return hol_sec_curvature(c @ self.basis_.mus, self.kernel_, self.basis_.grid)

    def report(self):
        check_is_fitted(self, "spectrum_")
        return self.pipeline_.report()
