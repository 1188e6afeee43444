"""Numerical Weil-Petersson curvature of closed hyperbolic surfaces."""

from .beltrami import BeltramiBasis, ThetaSeed, build_basis, theta
from .constants import b_alpha_eps, b_hat, b_of_eps, c0, c0_and_hol_bound, c_of_r, constants_table, hol_bound
from .curvature import CurvatureTensor, hol_sec_curvature, scalar_curvature, tensor
from .dirichlet import DirichletDomain, dirichlet_domain
from .estimator import NotFittedError, WeilPeterssonCurvature
from .fuchsian import GroupBall, build_presentation, enumerate_ball, injectivity_radius, load_or_enumerate
from .hyperbolic import DiskMotion
from .operator import WedgeBasis, apply_J, assemble_matrix, q_form, spectrum
from .pipeline import Pipeline, RunConfig, RunReport, convergence_sweep, run_pipeline
from .quadrature import QuadGrid, build_grid, default_h
from .resolvent import ResolventKernel, apply_D, build_kernel
from .theta_sup import AhlforsSeries, mu_g_report, sup_reduction, theta_family_report

__version__ = "0.1.0"
