"""Sup-norm estimates for the theta differential mu_g = conj(Theta(1)) / rho.

The workhorse is the series S(z) = sum_gamma (1 - |gamma z|^2)^2, which
bounds 4|mu_g(z)| pointwise.  Truncation follows the orbit point (keep gamma
with d(0, gamma z) <= radius), so S is exactly automorphic after truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import optimize
from scipy.spatial import cKDTree

from .beltrami import (DEFAULT_THETA_RADIUS, TAIL_TOLERANCE, BeltramiBasis, ThetaSeed,
                       beltrami_from_seed, density, theta)
from .constants import c0, c_of_r, hol_bound, thickness_threshold
from .curvature import hol_sec_curvature
from .dirichlet import DirichletDomain
from .fuchsian import GroupBall, InsufficientBallError
from .quadrature import QuadGrid
from .resolvent import ResolventKernel

INNER_RADIUS = 1.0 / math.sqrt(2.0)
MARGIN = 0.1
SUP_AGREEMENT = 1e-3

VERIFIED = "verified"
UNMET = "not applicable: hypothesis unmet"
VIOLATED = "violated"


class SupReductionError(RuntimeError):
    pass


@numba.njit(cache=True)
def _series(z, a, b, cut, shell, total, rest, last):
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
            t = (1.0 - r2) * (1.0 - r2)
            total[i] += t
            if abs(b[g]) > 1e-14:
                rest[i] += t
            if r2 > shell2:
                last[i] += t


@dataclass(frozen=True)
class SeriesValue:
    total: np.ndarray  # S(z)
    rest: np.ndarray  # S(z) without the identity term
    last_shell: np.ndarray  # contribution of the outermost unit shell
    tail_estimate: float  # mean-field estimate of everything beyond the cutoff

    @property
    def flagged(self) -> bool:
        return self.tail_estimate > TAIL_TOLERANCE * float(np.max(self.total))


@dataclass
class AhlforsSeries:
    ball: GroupBall
    radius: float = DEFAULT_THETA_RADIUS

    def _check(self, z) -> None:
        r = float(np.abs(z).max()) if len(z) else 0.0
        if r >= 1.0:
            raise ValueError("points must lie in the open disk")
        need = self.radius + math.log1p(r) - math.log1p(-r)
        if self.ball.radius + 1e-9 < need:
            raise InsufficientBallError(f"series at radius {self.radius} needs a ball of radius {need:.3f}", need)

    def tail_estimate(self) -> float:
        """Orbit points beyond the cutoff, replaced by their area average.

        Equals the integral of sech(d/2)^4 over d > radius, divided by the surface area.
        """
        return 1.0 / ((self.ball.genus - 1) * math.cosh(0.5 * self.radius) ** 2)

    def __call__(self, z) -> SeriesValue:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        self._check(z)
        total = np.zeros(len(z))
        rest = np.zeros(len(z))
        last = np.zeros(len(z))
        _series(z, self.ball.a, self.ball.b, math.tanh(0.5 * self.radius),
                math.tanh(0.5 * max(self.radius - 1.0, 0.0)), total, rest, last)
        return SeriesValue(total, rest, last, self.tail_estimate())

    def value(self, z) -> tuple[float, float]:
        v = self(np.array([z]))
        return float(v.total[0]), float(v.rest[0])

    def orbit_terms(self, z: complex) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(indices, gamma z, gamma'(z)) for the elements kept at z."""
        self._check(np.array([z]))
        w, dw = self.ball.orbit(z)
        keep = np.nonzero(np.abs(w) <= math.tanh(0.5 * self.radius))[0]
        return keep, w[keep], dw[keep]

    def shell_identity_defects(self, z: complex, width: float = 1.0) -> np.ndarray:
        """Per unit shell: sum |gamma'|^2 / rho(z) minus (1/4) sum (1 - |gamma z|^2)^2."""
        idx, w, dw = self.orbit_terms(z)
        lhs = np.abs(dw) ** 2 / density(z)
        rhs = 0.25 * (1.0 - np.abs(w) ** 2) ** 2
        d = np.log1p(np.abs(w)) - np.log1p(-np.abs(w))
        shell = np.floor(d / width).astype(int)
        return np.array([abs(lhs[shell == s].sum() - rhs[shell == s].sum()) for s in np.unique(shell)])

    def radial_slice(self, angle: float = 0.0, n: int = 200, r_max: float = 0.84) -> np.ndarray:
        r = np.linspace(0.0, r_max, n)
        v = self(r * np.exp(1j * angle))
        return np.column_stack([r, v.total, v.rest])

    def slice_to_csv(self, path, angle: float = 0.0, n: int = 200, r_max: float = 0.84) -> None:
        np.savetxt(path, self.radial_slice(angle, n, r_max), delimiter=",", header="r,S,S_rest",
                   comments="", fmt="%.17g")


def _fixed_sum(a, b, z, include_identity: bool = True):
    den = np.conj(b)[:, None] * z[None, :] + np.conj(a)[:, None]
    w = (a[:, None] * z[None, :] + b[:, None]) / den
    t = (1.0 - np.abs(w) ** 2) ** 2
    if not include_identity:
        t = t[np.abs(b) > 1e-14]
    return t.sum(axis=0)


@dataclass(frozen=True)
class LaplacianCheck:
    z: complex
    finite_difference: float
    analytic: float
    defect: float
    rest_finite_difference: float  # same for the identity-excluded series
    rest_analytic: float
    outside_inner_ball: bool  # every non-identity orbit point has |gamma z|^2 >= 1/2


def laplacian_identity_check(z: complex, series: AhlforsSeries, step: float = 1e-3) -> LaplacianCheck:
    """Finite-difference Laplacian of the summed series against 8 sum (2|gamma z|^2 - 1)|gamma'(z)|^2.

    The element set is frozen at z so the stencil never crosses the truncation edge.
    """
    idx, w, dw = series.orbit_terms(z)
    a, b = series.ball.a[idx], series.ball.b[idx]
    offsets = np.array([1, -1, 1j, -1j])
    pts = z + step * np.concatenate([[0], offsets, 2 * offsets])
    fd = []
    for ident in (True, False):
        s = _fixed_sum(a, b, pts, ident)
        # fourth-order stencil along each axis
        fd.append(float((16.0 * s[1:5].sum() - s[5:9].sum() - 60.0 * s[0]) / (12.0 * step ** 2)))
    terms = 8.0 * (2.0 * np.abs(w) ** 2 - 1.0) * np.abs(dw) ** 2
    notid = np.abs(b) > 1e-14
    an = float(terms.sum())
    an_rest = float(terms[notid].sum())
    outside = bool(np.all(np.abs(w[notid]) ** 2 >= 0.5))
    return LaplacianCheck(complex(z), fd[0], an, abs(fd[0] - an), fd[1], an_rest, outside)


def euclid_clearance(dom: DirichletDomain, z: complex) -> float:
    """Largest r with the Euclidean disc B(z, r) inside the domain."""
    c, r = dom.circle_centers, dom.circle_radii
    return float(min(np.min(np.abs(z - c) - r), 1.0 - abs(z)))


def _maximize(f, starts, inside, scale: float) -> tuple[float, complex]:
    best, arg = -np.inf, 0j
    for s in starts:
        def neg(p):
            q = complex(p[0], p[1])
            return -f(q) if inside(q) else np.inf
        res = optimize.minimize(neg, [s.real, s.imag], method="Nelder-Mead",
                                options={"xatol": 1e-7, "fatol": 1e-12, "initial_simplex":
                                         np.array([[s.real, s.imag], [s.real + scale, s.imag],
                                                   [s.real, s.imag + scale]])})
        if -res.fun > best:
            best, arg = -res.fun, complex(res.x[0], res.x[1])
    return float(best), arg


def _disc_samples(radius: float, spacing: float) -> np.ndarray:
    x = np.arange(-radius, radius + spacing / 2, spacing)
    z = (x[:, None] + 1j * x[None, :]).ravel()
    return z[np.abs(z) <= radius]


@dataclass(frozen=True)
class SupReduction:
    sup_inner: float  # sup of S over B(0, 1/sqrt 2)
    arg_inner: complex
    sup_domain: float  # sup of S over the fundamental domain
    arg_domain: complex
    sup_rest_inner: float  # sup of the identity-excluded series over B(0, 1/sqrt 2)
    tail_bound: float  # (25/pi)(pi - euclidean area of the domain)
    containment: bool  # B(0, 1/sqrt 2 + 1/10) inside the domain
    clearance: float

    @property
    def agreement(self) -> float:
        return abs(self.sup_inner - self.sup_domain)

    @property
    def tail_bound_status(self) -> str:
        if not self.containment:
            return UNMET
        return VERIFIED if self.sup_rest_inner <= self.tail_bound else VIOLATED

    def to_dict(self) -> dict:
        return {
            "sup_inner": self.sup_inner, "arg_inner": [self.arg_inner.real, self.arg_inner.imag],
            "sup_domain": self.sup_domain, "arg_domain": [self.arg_domain.real, self.arg_domain.imag],
            "agreement": self.agreement, "sup_rest_inner": self.sup_rest_inner,
            "tail_bound": self.tail_bound, "containment": self.containment,
            "clearance": self.clearance, "tail_bound_status": self.tail_bound_status,
        }


def sup_reduction(series: AhlforsSeries, dom: DirichletDomain, spacing: float = 0.02,
                  n_refine: int = 4, strict: bool = True) -> SupReduction:
    """Maximize S over B(0, 1/sqrt 2) and, independently, over the fundamental domain."""
    inner = _disc_samples(INNER_RADIUS, spacing)
    vr = float(np.abs(dom.vertices).max())
    box = _disc_samples(vr, spacing)
    fund = np.concatenate([box[dom.contains(box)], dom.vertices * (1 - 1e-9), dom.boundary(32)])
    s_in = series(inner)
    s_fd = series(fund)

    def f(q):
        return float(series(np.array([q])).total[0])

    def f_rest(q):
        return float(series(np.array([q])).rest[0])

    in_ball = lambda q: abs(q) <= INNER_RADIUS
    in_dom = lambda q: bool(dom.contains(np.array([q]), 1e-12)[0])
    top_in = inner[np.argsort(s_in.total)[-n_refine:]]
    top_fd = fund[np.argsort(s_fd.total)[-n_refine:]]
    sup_in, arg_in = _maximize(f, top_in, in_ball, spacing / 2)
    sup_fd, arg_fd = _maximize(f, top_fd, in_dom, spacing / 2)
    sup_in = max(sup_in, float(s_in.total.max()))
    sup_fd = max(sup_fd, float(s_fd.total.max()))
    sup_rest, _ = _maximize(f_rest, inner[np.argsort(s_in.rest)[-n_refine:]], in_ball, spacing / 2)
    sup_rest = max(sup_rest, float(s_in.rest.max()))
    clearance = euclid_clearance(dom, 0j)
    out = SupReduction(sup_in, arg_in, sup_fd, arg_fd, sup_rest,
                       25.0 / math.pi * (math.pi - dom.euclid_area),
                       clearance >= INNER_RADIUS + MARGIN, clearance)
    if strict and out.agreement > SUP_AGREEMENT:
        raise SupReductionError(f"sup over the inner ball {sup_in:.6g} and over the domain "
                                f"{sup_fd:.6g} disagree by {out.agreement:.3g}")
    return out


@dataclass(frozen=True)
class DisjointnessCheck:
    z: complex
    radius: float
    min_gap: float  # smallest gap between two image discs (negative means overlap)
    n_images: int

    @property
    def disjoint(self) -> bool:
        return self.min_gap > 0.0


def translate_disc(a: complex, b: complex, center: complex, radius: float) -> tuple[complex, float]:
    """Image of the Euclidean disc B(center, radius) under z -> (a z + b)/(conj(b) z + conj(a))."""
    pole = -np.conj(a) / np.conj(b) if abs(b) > 0 else None
    u = 1.0 if pole is None else (pole - center) / abs(pole - center)
    p1, p2 = center + radius * u, center - radius * u
    g = lambda q: (a * q + b) / (np.conj(b) * q + np.conj(a))
    w1, w2 = g(p1), g(p2)
    return complex(0.5 * (w1 + w2)), float(0.5 * abs(w1 - w2))


def disjoint_translates(ball: GroupBall, dom: DirichletDomain, z: complex, radius: float = MARGIN,
                        reach: float = 6.0) -> DisjointnessCheck:
    """Images gamma B(z, r) for gamma in the ball (within reach) must be pairwise disjoint."""
    if euclid_clearance(dom, z) < radius:
        raise ValueError("the disc must lie inside the fundamental domain")
    keep = np.nonzero(ball.displacement <= reach)[0]
    cs, rs = [], []
    for i in keep:
        c, r = translate_disc(ball.a[i], ball.b[i], z, radius)
        cs.append(c)
        rs.append(r)
    cs, rs = np.array(cs), np.array(rs)
    tree = cKDTree(np.c_[cs.real, cs.imag])
    gap = np.inf
    for i, j in tree.query_pairs(2.0 * radius):
        gap = min(gap, abs(cs[i] - cs[j]) - rs[i] - rs[j])
    if not np.isfinite(gap):
        _, nn = tree.query(np.c_[cs.real, cs.imag], k=2)
        gap = float(np.min(np.abs(cs - cs[nn[:, 1]]) - rs - rs[nn[:, 1]]))
    return DisjointnessCheck(complex(z), float(radius), float(gap), len(keep))


@dataclass(frozen=True)
class Verdict:
    claim: str
    value: float
    bound: float
    status: str  # VERIFIED, UNMET or VIOLATED
    holds_numerically: bool

    def to_dict(self) -> dict:
        return {"claim": self.claim, "value": self.value, "bound": self.bound, "status": self.status,
                "holds_numerically": self.holds_numerically}


def _verdict(claim, value, bound, holds, hypothesis_met: bool = True) -> Verdict:
    if not hypothesis_met:
        return Verdict(claim, float(value), float(bound), UNMET, bool(holds))
    return Verdict(claim, float(value), float(bound), VERIFIED if holds else VIOLATED, bool(holds))


def differential_sup(values_at, grid: QuadGrid, node_values: np.ndarray, n_refine: int = 4,
                     max_radius: float = 0.9) -> tuple[float, complex]:
    """sup |mu| from the node maximum refined by Nelder-Mead on an automorphic |mu|."""
    mag = np.abs(node_values)
    starts = grid.nodes[np.argsort(mag)[-n_refine:]]
    best, arg = _maximize(lambda q: float(abs(values_at(q))), starts, lambda q: abs(q) < max_radius,
                          0.5 * grid.h)
    if mag.max() > best:
        best, arg = float(mag.max()), complex(grid.nodes[np.argmax(mag)])
    return best, arg


@dataclass
class ThicknessReport:
    euclid_area: float
    tail_bound: float
    sufficient_thickness_met: bool
    containment: bool
    required_inj: float
    inj: float
    sup_mu: float
    inf_mu: float
    mu_at_origin: float
    norm2: float
    l1_norm: float
    hol_sec: float
    verdicts: list[Verdict] = field(default_factory=list)
    sup: SupReduction | None = None

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("euclid_area", "tail_bound", "sufficient_thickness_met",
                                             "containment", "required_inj", "inj", "sup_mu", "inf_mu",
                                             "mu_at_origin", "norm2", "l1_norm", "hol_sec")}
        out["verdicts"] = [v.to_dict() for v in self.verdicts]
        if self.sup is not None:
            out["sup_reduction"] = self.sup.to_dict()
        return out


def mu_g_report(ball: GroupBall, grid: QuadGrid, kernel: ResolventKernel, dom: DirichletDomain,
                inj: float, basis: BeltramiBasis | None = None, radius: float = DEFAULT_THETA_RADIUS,
                sup: SupReduction | None = None, n_samples: int = 1000, seed: int = 0) -> ThicknessReport:
    one = ThetaSeed.monomial(0)
    mu = beltrami_from_seed(one, ball, grid, radius)
    w = grid.weights
    at = lambda q: np.conj(theta(one, ball, np.array([q]), radius).values[0]) / density(q)
    sup_mu, _ = differential_sup(at, grid, mu.values)
    inf_mu = float(np.abs(mu.values).min())
    mu0 = float(abs(at(0j)))
    norm2 = float(np.sum(np.abs(mu.values) ** 2 * w))
    l1 = float(np.sum(np.abs(mu.values) * w))
    k = hol_sec_curvature(mu.values, kernel, grid)
    series = AhlforsSeries(ball, radius)
    if sup is None:
        sup = sup_reduction(series, dom, strict=False)
    tail = 25.0 / math.pi * (math.pi - dom.euclid_area)
    thick = tail < 0.25
    hyp = thick and sup.containment

    rng = np.random.default_rng(seed)
    sample = grid.nodes[rng.choice(len(grid), size=min(n_samples, len(grid)), replace=False)]
    mu_s = np.abs(np.conj(theta(one, ball, sample, radius).values) / density(sample))
    s_s = series(sample).total
    pointwise = float(np.max(4.0 * mu_s - s_s))

    ratio2 = sup_mu ** 2 / norm2
    verdicts = [
        _verdict("sup|mu_g| < 5/16", sup_mu, 5 / 16, sup_mu < 5 / 16, hyp),
        _verdict("|mu_g(0)| >= 3/16", mu0, 3 / 16, mu0 >= 3 / 16, hyp),
        _verdict("||mu_g||^2 <= 5 pi / 16", norm2, 5 * math.pi / 16, norm2 <= 5 * math.pi / 16, hyp),
        _verdict("K(mu_g) <= -81 C0 / (6400 pi^2)", k, hol_bound(), k <= hol_bound(), hyp),
        _verdict("sup over B(0,1/sqrt2) of rest <= (25/pi)(pi - area)", sup.sup_rest_inner, tail,
                 sup.sup_rest_inner <= tail, sup.containment),
        _verdict("4|mu_g| <= S pointwise", pointwise, 0.0, pointwise <= 1e-12),
        _verdict("||mu_g||^2 <= sup|mu_g| int|mu_g|", norm2, sup_mu * l1, norm2 <= sup_mu * l1 * (1 + 1e-9)),
        _verdict("int|mu_g| dA <= pi", l1, math.pi, l1 <= math.pi * (1 + 1e-4)),
        _verdict("K(mu_g) >= -2 sup|mu_g|^2 / ||mu_g||^2", -2 * ratio2, k, -2 * ratio2 <= k, inj >= 1.0),
        _verdict("K(mu_g) <= -C0 sup|mu_g|^4 / ||mu_g||^4", k, -c0() * ratio2 ** 2, k <= -c0() * ratio2 ** 2,
                 inj >= 1.0),
        _verdict("K(mu_g) < 0", k, 0.0, k < 0),
        _verdict("sup reduction agreement <= 1e-3", sup.agreement, SUP_AGREEMENT, sup.agreement <= SUP_AGREEMENT),
    ]
    if basis is not None:
        _, res = basis.expand(mu.values)
        verdicts.append(_verdict("mu_g in span of basis (residual < 1e-4)", res, 1e-4, res < 1e-4))
    return ThicknessReport(dom.euclid_area, tail, thick, sup.containment, thickness_threshold(), inj,
                           sup_mu, inf_mu, mu0, norm2, l1, k, verdicts, sup)


@dataclass(frozen=True)
class SeedCurvature:
    tag: str
    hol_sec: float
    sup: float
    norm2: float
    sup_ratio: float  # sup|mu|^2 / ||mu||^2
    verdicts: list[Verdict]

    def to_dict(self) -> dict:
        return {"seed": self.tag, "hol_sec": self.hol_sec, "sup": self.sup, "norm2": self.norm2,
                "sup_ratio": self.sup_ratio, "verdicts": [v.to_dict() for v in self.verdicts]}


def theta_family_report(seeds, ball: GroupBall, grid: QuadGrid, kernel: ResolventKernel, inj: float,
                        radius: float = DEFAULT_THETA_RADIUS) -> list[SeedCurvature]:
    """K(mu(f)) and its brackets for each polynomial seed f."""
    if seeds is None:
        seeds = [ThetaSeed.monomial(0)] + [ThetaSeed.one_minus_power(n) for n in range(1, 6)]
    out = []
    cr = c_of_r(inj)
    for s in seeds:
        mu = beltrami_from_seed(s, ball, grid, radius)
        at = lambda q, s=s: np.conj(theta(s, ball, np.array([q]), radius).values[0]) / density(q)
        sup, _ = differential_sup(at, grid, mu.values)
        norm2 = float(np.sum(np.abs(mu.values) ** 2 * grid.weights))
        k = hol_sec_curvature(mu.values, kernel, grid)
        ratio = sup ** 2 / norm2
        vs = [
            _verdict("K < 0", k, 0.0, k < 0),
            _verdict("K >= -2 sup|mu|^2 / ||mu||^2", -2 * ratio, k, -2 * ratio <= k, inj >= 1.0),
            _verdict("K <= -C0 sup|mu|^4 / ||mu||^4", k, -c0() * ratio ** 2, k <= -c0() * ratio ** 2, inj >= 1.0),
            _verdict("sup|mu|^2 / ||mu||^2 <= C(inj)", ratio, cr, ratio <= cr),
            _verdict("K >= -2 C(inj)", -2 * cr, k, -2 * cr <= k),
        ]
        out.append(SeedCurvature(s.tag, k, sup, norm2, ratio, vs))
    return out
