"""Closed-form curvature constants and their limits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

FOUR_THIRDS_PI = 4.0 * math.pi / 3.0


def _positive(name: str, x: float) -> float:
    x = float(x)
    if not x > 0:
        raise ValueError(f"{name} must be positive, got {x!r}")
    return x


def c_of_r(r: float) -> float:
    """Pointwise-to-L2 constant C(r) = [4pi/3 * (1 - (4e^r/(1+e^r)^2)^3)]^-1.

    Since 4e^r/(1+e^r)^2 = sech^2(r/2) = 1 - t with t = tanh^2(r/2), the
    bracket equals t(3 - 3t + t^2), which has no cancellation as r -> 0.
    """
    r = _positive("r", r)
    t = math.tanh(0.5 * r) ** 2
    return 1.0 / (FOUR_THIRDS_PI * t * (3.0 - 3.0 * t + t * t))


def b_of_eps(eps: float) -> float:
    """Curvature-operator bound B(eps) = 32 C(eps/2)."""
    eps = _positive("eps", eps)
    return 32.0 * c_of_r(0.5 * eps)


def b_hat(inj: float) -> float:
    """Tensor-norm bound as a function of the injectivity radius, B(2 inj)."""
    return b_of_eps(2.0 * _positive("inj", inj))


def b_alpha_eps(alpha: float, eps: float) -> float:
    """Eigenvalue-index constant 4 C(eps/2) / (3 (1 - alpha))."""
    alpha = float(alpha)
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha!r}")
    eps = _positive("eps", eps)
    return 4.0 * c_of_r(0.5 * eps) / (3.0 * (1.0 - alpha))


def unit_ball_area() -> float:
    """Hyperbolic area of a disk of radius 1, 4 pi sinh^2(1/2)."""
    return 4.0 * math.pi * math.sinh(0.5) ** 2


def c0() -> float:
    return 2.0 / (3.0 * c_of_r(1.0) ** 2 * unit_ball_area())


def hol_bound() -> float:
    """Uniform upper bound -81 C0 / (6400 pi^2) for K along the theta direction."""
    return -81.0 * c0() / (6400.0 * math.pi ** 2)


def c0_and_hol_bound() -> tuple[float, float]:
    return c0(), hol_bound()


def thickness_threshold() -> float:
    """Injectivity radius ln((10 + sqrt 99)/(10 - sqrt 99)) required by the tail bound."""
    s = math.sqrt(99.0)
    return math.log((10.0 + s) / (10.0 - s))


def small_radius_eps0() -> float:
    """Largest eps0 with C(eps) <= 2/(pi eps^2) on (0, eps0], by bisection.

    C(eps) pi eps^2 increases from 1 towards infinity, so the set where the
    ratio stays below 2 is an interval starting at 0.
    """
    def ratio(e):
        return c_of_r(e) * math.pi * e * e - 2.0

    lo, hi = 1e-6, 1.0
    while ratio(hi) < 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ratio(mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo


def distance_decay_constant() -> float:
    """max{B(2 eps0), 1024 pi}."""
    return max(b_of_eps(2.0 * small_radius_eps0()), 1024.0 * math.pi)


@dataclass(frozen=True)
class ConstantsTable:
    c_at_1: float
    c_large_r_limit: float
    b_large_eps_limit: float
    unit_ball_area: float
    c0: float
    hol_bound: float
    thickness_threshold: float
    eps0: float
    distance_constant: float
    inj: float | None = None
    c_at_inj: float | None = None
    b_hat_at_inj: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def constants_table(inj: float | None = None) -> ConstantsTable:
    extra = {}
    if inj is not None:
        extra = dict(inj=float(inj), c_at_inj=c_of_r(inj), b_hat_at_inj=b_hat(inj))
    return ConstantsTable(
        c_at_1=c_of_r(1.0),
        c_large_r_limit=3.0 / (4.0 * math.pi),
        b_large_eps_limit=24.0 / math.pi,
        unit_ball_area=unit_ball_area(),
        c0=c0(),
        hol_bound=hol_bound(),
        thickness_threshold=thickness_threshold(),
        eps0=small_radius_eps0(),
        distance_constant=distance_decay_constant(),
        **extra,
    )
