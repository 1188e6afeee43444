"""Run configuration, staged pipeline, inequality ledger and convergence sweeps."""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import constants as K
from .beltrami import DEFAULT_THETA_RADIUS, ThetaSeed, build_basis, theta
from .curvature import (hol_sec_bounds, real_frame_tensor, ricci_from_fields, ricci_from_tensor, scalar_bounds,
                        scalar_curvature, scalar_from_fields, tensor)
from .dirichlet import dirichlet_domain
from .fuchsian import build_presentation, injectivity_radius, load_or_enumerate
from .operator import apply_J, assemble_matrix, kernel_element, q_form, q_form_bounds, special_element, spectrum
from .quadrature import build_grid, default_h
from .resolvent import (DEFAULT_CUTOFF, MATERIALIZE_LIMIT, build_kernel, load_kernel,
                        required_ball_radius)
from .theta_sup import (UNMET, VERIFIED, VIOLATED, AhlforsSeries, disjoint_translates,
                        laplacian_identity_check, mu_g_report, sup_reduction, theta_family_report)

log = logging.getLogger(__name__)

SCHEMA = "wpcurv.report/1"

# every claim the report checks; the ledger must carry exactly these anchors
LEDGER_CHECKLIST = (
    "surface.relation",
    "surface.area",
    "basis.orthonormal",
    "operator.unit_constant",
    "operator.contraction",
    "operator.pointwise_third",
    "operator.kernel_symmetric",
    "operator.kernel_positive",
    "tensor.symmetry",
    "tensor.norm_bound",
    "ricci.groupings",
    "scalar.trace_identity",
    "scalar.lower_l2",
    "scalar.upper_l2",
    "scalar.genus_upper",
    "scalar.injectivity_lower",
    "holsec.l4_sandwich",
    "holsec.sup_bracket",
    "holsec.negative",
    "spectrum.semidefinite",
    "spectrum.negative_count",
    "spectrum.zero_count",
    "spectrum.sum_is_scalar",
    "lambda_min.universal_upper",
    "lambda_min.scalar_upper",
    "lambda_min.injectivity_lower",
    "spectrum.index_bounds",
    "qform.dual_path",
    "qform.decomposition_bounds",
    "qform.zero_eigenvectors",
    "qform.j_involution",
    "qform.special_element",
    "qform.injectivity_lower",
    "theta.automorphy",
    "theta.shell_identity",
    "theta.laplacian_identity",
    "theta.rest_subharmonic",
    "theta.sup_reduction",
    "theta.pointwise_series_bound",
    "theta.translates_disjoint",
    "thick.sup_mu",
    "thick.mu_at_origin",
    "thick.mu_norm",
    "thick.hol_sec_bound",
    "thick.tail_bound",
    "mu_g.norm_chain",
    "mu_g.l1_bound",
    "mu_g.in_span",
    "family.negative",
    "family.sup_bracket",
    "family.injectivity_lower",
    "constants.small_radius_limit",
    "constants.large_radius_limit",
    "constants.large_eps_limit",
    "constants.ball_volume",
)

PASS, FAIL, NOT_APPLICABLE = "pass", "fail", "not applicable"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception, partial: dict):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.partial = partial


@dataclass
class RunConfig:
    genus: int = 2
    radius: float = DEFAULT_THETA_RADIUS  # group-ball radius R, also the theta truncation radius
    grid_h: float | None = None  # None: about 5000 nodes
    zero_tol: float | None = None  # None: 1e-6 times the spectral radius
    kernel_cutoff: float = DEFAULT_CUTOFF
    seeds: str = "auto"  # "auto" or comma-separated powers, e.g. "0,2,4"
    cache_dir: str | None = None
    out: str | None = None
    reproducible: bool = False
    threads: int | None = None
    random_seed: int = 0
    n_random: int = 50

    def __post_init__(self):
        if int(self.genus) < 2:
            raise ValueError("genus must be at least 2")
        self.genus = int(self.genus)
        for name in ("radius", "kernel_cutoff"):
            if not float(getattr(self, name)) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("grid_h", "zero_tol"):
            v = getattr(self, name)
            if v is not None and not float(v) > 0:
                raise ValueError(f"{name} must be positive")

    def seed_list(self):
        if self.seeds in (None, "", "auto"):
            return "auto"
        return [ThetaSeed.monomial(int(p)) for p in str(self.seeds).split(",")]

    @classmethod
    def from_file(cls, path, section: str = "run", **overrides) -> "RunConfig":
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise FileNotFoundError(path)
        raw = dict(cp[section]) if cp.has_section(section) else {}
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in raw.items():
            if k not in types:
                raise ValueError(f"unknown config key {k!r}")
            kw[k] = _coerce(k, v)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(key: str, v: str):
    if v.strip().lower() in ("none", ""):
        return None
    if key in ("genus", "threads", "random_seed", "n_random"):
        return int(v)
    if key in ("radius", "grid_h", "zero_tol", "kernel_cutoff"):
        return float(v)
    if key == "reproducible":
        return v.strip().lower() in ("1", "true", "yes", "on")
    return v.strip()


def _entry(anchor, claim, lhs, rhs, ok, applicable=True) -> dict:
    status = NOT_APPLICABLE if not applicable else (PASS if ok else FAIL)
    return {"anchor": anchor, "claim": claim, "lhs": _num(lhs), "rhs": _num(rhs), "status": status}


def _num(x):
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    return float(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


@dataclass
class RunReport:
    data: dict

    def to_json(self) -> str:
        return json.dumps(self.data, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls(json.loads(text))

    @property
    def ledger(self) -> list[dict]:
        return self.data.get("ledger", [])

    @property
    def failures(self) -> list[dict]:
        return [e for e in self.ledger if e["status"] == FAIL]

    @property
    def passed(self) -> bool:
        return not self.failures

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path


class Pipeline:
    """Lazily evaluated stages; each result is cached on first use."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.timings: dict[str, float] = {}
        self._stage: dict[str, object] = {}
        self.cache_hits: dict[str, bool] = {}

    def _run(self, name, fn):
        if name not in self._stage:
            t = time.perf_counter()
            try:
                self._stage[name] = fn()
            except PipelineError:
                raise
            except Exception as exc:
                raise PipelineError(name, exc, self.partial()) from exc
            self.timings[name] = time.perf_counter() - t
            log.info("stage %s done in %.2f s", name, self.timings[name])
        return self._stage[name]

    @property
    def cache_dir(self) -> Path | None:
        return Path(self.cfg.cache_dir) if self.cfg.cache_dir else None

    # stages

    @property
    def presentation(self):
        return self._run("presentation", lambda: build_presentation(self.cfg.genus))

    @property
    def ball(self):
        """The group ball of radius R from the configuration."""
        def go():
            b, hit = load_or_enumerate(self.presentation, self.cfg.radius, self.cache_dir)
            self.cache_hits["ball"] = hit
            return b
        return self._run("enumerate", go)

    @property
    def inj(self) -> float:
        return self._run("injectivity", lambda: injectivity_radius(self.ball))

    @property
    def domain(self):
        def go():
            self.inj  # certify the ball before building anything from it
            return dirichlet_domain(self.ball.restrict(min(self.cfg.radius, 8.0)))
        return self._run("domain", go)

    @property
    def work_ball(self):
        """Ball large enough for the kernel cutoff and for theta series at every grid node."""
        def go():
            rcov = self.domain.covering_radius
            need = max(self.cfg.radius + rcov, required_ball_radius(self.cfg.kernel_cutoff, rcov))
            need = math.ceil(need * 4.0) / 4.0
            if need <= self.ball.radius:
                return self.ball
            b, hit = load_or_enumerate(self.presentation, need, self.cache_dir)
            self.cache_hits["work_ball"] = hit
            return b
        return self._run("work_ball", go)

    @property
    def grid(self):
        def go():
            h = self.cfg.grid_h or default_h(self.domain)
            return build_grid(self.domain, h)
        return self._run("grid", go)

    def _kernel_path(self) -> Path | None:
        if self.cache_dir is None:
            return None
        g = self.grid
        key = hashlib.sha256()
        key.update(np.ascontiguousarray(g.nodes).tobytes())
        key.update(np.ascontiguousarray(g.weights).tobytes())
        key.update(repr((self.cfg.genus, self.cfg.kernel_cutoff)).encode())
        return self.cache_dir / f"kernel_g{self.cfg.genus}_{key.hexdigest()[:20]}.bin"

    @property
    def kernel(self):
        def go():
            path = self._kernel_path()
            if path is not None and path.exists():
                try:
                    kern = load_kernel(path, self.grid)
                    self.cache_hits["kernel"] = True
                    if len(self.grid) <= MATERIALIZE_LIMIT:
                        kern.matrix()
                    return kern
                except (ValueError, OSError) as exc:
                    log.warning("ignoring unreadable kernel cache %s: %s", path, exc)
            kern = build_kernel(self.grid, self.work_ball, cutoff=self.cfg.kernel_cutoff)
            self.cache_hits["kernel"] = False
            if path is not None:
                kern.save(path)
            return kern
        return self._run("kernel", go)

    @property
    def basis(self):
        return self._run("basis", lambda: build_basis(self.cfg.seed_list(), self.work_ball, self.grid,
                                                      self.cfg.radius))

    @property
    def tensor(self):
        return self._run("tensor", lambda: tensor(self.basis, self.kernel))

    @property
    def matrix(self):
        return self._run("matrix", lambda: assemble_matrix(self.tensor))

    @property
    def spectrum(self):
        return self._run("spectrum", lambda: spectrum(self.matrix, self.cfg.zero_tol))

    @property
    def series(self):
        return AhlforsSeries(self.work_ball, self.cfg.radius)

    @property
    def sup(self):
        return self._run("sup_reduction", lambda: sup_reduction(self.series, self.domain, strict=False))

    @property
    def thickness(self):
        return self._run("thickness", lambda: mu_g_report(self.work_ball, self.grid, self.kernel, self.domain,
                                                          self.inj, self.basis, self.cfg.radius, self.sup))

    @property
    def family(self):
        return self._run("theta_family", lambda: theta_family_report(None, self.work_ball, self.grid,
                                                                     self.kernel, self.inj, self.cfg.radius))

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.random_seed, stream])

    # report sections

    def surface_data(self) -> dict:
        d = self.domain
        p = self.presentation
        return {
            "genus": self.cfg.genus,
            "injectivity_radius": self.inj,
            "systole": 2.0 * self.inj,
            "hyperbolic_area": d.hyp_area,
            "expected_area": 4.0 * math.pi * (self.cfg.genus - 1),
            "euclidean_area": d.euclid_area,
            "covering_radius": d.covering_radius,
            "inradius": d.inradius,
            "n_sides": d.n_sides,
            "relation_defect": p.relation_defect(),
            "ball_radius": self.ball.radius,
            "ball_size": len(self.ball),
            "work_ball_radius": self.work_ball.radius,
            "work_ball_size": len(self.work_ball),
        }

    def ball_data(self) -> dict:
        b = self.ball
        return {"radius": b.radius, "size": len(b), "max_word_length": int(b.word_length.max()),
                "cache_hit": self.cache_hits.get("ball", False)}

    def basis_data(self) -> dict:
        B = self.basis
        return {"dim": B.dim, "seeds": [s.tag for s in B.seeds], "gram_condition": B.condition,
                "orthonormality_defect": B.orthonormality_defect(), "relative_tail": B.max_tail,
                "tail_flagged": B.max_tail > 1e-6, "grid_nodes": len(self.grid), "grid_h": self.grid.h}

    def operator_checks(self) -> dict:
        kern, g = self.kernel, self.grid
        w = g.weights
        rng = self.rng(1)
        d1 = kern.apply(np.ones(len(g)))
        quad = []
        for _ in range(100):
            f = _random_field(rng, g.nodes)
            df = kern.apply(f)
            quad.append((float(np.sum(df * f * w)), float(np.sum(f * f * w))))
        quad = np.array(quad)
        # pointwise D(|mu|^2) >= |mu|^2 / 3 on the basis and random unit tangent vectors
        mus = list(self.basis.mus)
        for _ in range(20):
            c = rng.normal(size=self.basis.dim) + 1j * rng.normal(size=self.basis.dim)
            c /= np.linalg.norm(c)
            mus.append(c @ self.basis.mus)
        worst_third = min(float(np.min(kern.apply(np.abs(m) ** 2) - np.abs(m) ** 2 / 3.0)) for m in mus)
        out = {
            "unit_constant_deviation": float(np.abs(d1 - 1.0).max()),
            "unit_constant_mean": float(np.mean(d1 - 1.0)),
            "contraction_min_ratio": float((quad[:, 0] / quad[:, 1]).min()),
            "contraction_max_ratio": float((quad[:, 0] / quad[:, 1]).max()),
            "pointwise_third_margin": worst_third,
            "kernel_min_entry": float(kern.rows.min()),
        }
        if kern._full is not None:
            out["kernel_symmetry_defect"] = kern.symmetry_defect()
            out["kernel_positive_definite"] = kern.is_positive_definite()
        else:
            f, h = _random_field(rng, g.nodes), _random_field(rng, g.nodes)
            out["kernel_symmetry_defect"] = abs(float(np.sum(kern.apply(f) * h * w) - np.sum(f * kern.apply(h) * w)))
            out["kernel_positive_definite"] = bool(quad[:, 0].min() > 0)
        return out

    def qform_checks(self) -> dict:
        M, wb = self.matrix, self.matrix.basis
        rng = self.rng(2)
        dual, bounds_ok, zero, jj = 0.0, True, 0.0, 0.0
        worst_bounds = None
        for _ in range(self.cfg.n_random):
            A = rng.normal(size=wb.size)
            q = q_form(A, self.basis, self.kernel)
            dual = max(dual, abs(M.quadratic_form(A) - q) / float(A @ A))
            bnd = q_form_bounds(A, self.basis, self.kernel, q)
            if not bnd["pass"]:
                bounds_ok = False
                worst_bounds = bnd
            B = rng.normal(size=wb.size)
            zero = max(zero, float(np.linalg.norm(M @ kernel_element(B, wb)) / np.linalg.norm(B)))
            jj = max(jj, float(np.abs(apply_J(apply_J(B, wb), wb) - B).max()))
        lowest = np.inf
        for _ in range(100):
            A = rng.normal(size=wb.size)
            A /= np.linalg.norm(A)
            lowest = min(lowest, M.quadratic_form(A))
        A0 = special_element(wb)
        # rank of the span of B - J(B)
        span = np.array([kernel_element(e, wb) for e in np.eye(wb.size)])
        rank = int(np.linalg.matrix_rank(span, tol=1e-10))
        return {"dual_path_max_relative": dual, "decomposition_bounds_hold": bounds_ok,
                "decomposition_bounds_worst": worst_bounds, "zero_eigenvector_max": zero,
                "j_involution_defect": jj, "kernel_span_rank": rank,
                "special_element_value": M.quadratic_form(A0), "random_unit_min": float(lowest)}

    def theta_checks(self) -> dict:
        ball, series = self.work_ball, self.series
        rng = self.rng(3)
        one = ThetaSeed.monomial(0)
        g = self.grid
        # automorphy: Theta(1)(gamma z) gamma'(z)^2 = Theta(1)(z), using pairs inside the evaluable disc
        reach = ball.radius - self.cfg.radius
        lim = math.tanh(0.5 * reach)
        pts = g.nodes[rng.choice(len(g), size=40, replace=False)]
        auto, s_inv = 0.0, 0.0
        near = ball.restrict(2.0 * self.domain.covering_radius + 0.5)
        for z in pts:
            w, dw = near.orbit(z)
            ok = np.nonzero((np.abs(w) <= lim) & (np.abs(near.b) > 1e-14))[0][:4]
            if len(ok) == 0:
                continue
            tz = theta(one, ball, np.array([z]), self.cfg.radius).values[0]
            tw = theta(one, ball, w[ok], self.cfg.radius).values
            auto = max(auto, float(np.max(np.abs(tw * dw[ok] ** 2 - tz)) / abs(tz)))
            sz = series(np.array([z])).total[0]
            s_inv = max(s_inv, float(np.max(np.abs(series(w[ok]).total - sz))))
        shell = max(float(series.shell_identity_defects(z).max()) for z in pts[:10])
        lap = [laplacian_identity_check(complex(z), series) for z in
               _random_disc(rng, 100, 0.9 * self.domain.euclid_inradius)]
        sub = [c.rest_finite_difference for c in lap if c.outside_inner_ball]
        disj = disjoint_translates(ball, self.domain, 0j)
        return {"automorphy_max_relative": auto, "series_invariance_max": s_inv,
                "shell_identity_max": shell, "laplacian_max_defect": max(c.defect for c in lap),
                "rest_laplacian_min": min(sub) if sub else None, "rest_laplacian_samples": len(sub),
                "translates_min_gap": disj.min_gap, "translates_checked": disj.n_images,
                "series_tail_estimate": series.tail_estimate()}

    def curvature_data(self) -> dict:
        T, B, kern = self.tensor, self.basis, self.kernel
        sca = scalar_curvature(T)
        ks, ineq = [], []
        for i in range(B.dim):
            k, q = hol_sec_bounds(B.mus[i], kern, self.grid, self.inj)
            ks.append(k)
            ineq.append(q)
        rm = real_frame_tensor(T.R)
        return {
            "scalar": sca,
            "scalar_fields": scalar_from_fields(B, kern),
            "ricci": ricci_from_tensor(T),
            "ricci_fields": ricci_from_fields(B, kern),
            "hol_sec": ks,
            "hol_sec_inequalities": [[x.to_dict() for x in q] for q in ineq],
            "scalar_inequalities": [x.to_dict() for x in scalar_bounds(sca, B, self.inj)],
            "tensor_symmetry": T.symmetry_defects(),
            "tensor_max_component": float(np.abs(rm).max()),
            "tensor_norm_bound": K.b_hat(self.inj),
            "trace": self.matrix.trace,
        }

    def spectrum_data(self) -> dict:
        sp = self.spectrum
        out = sp.to_dict()
        out["lambda_max"] = sp.lambda_max
        out["matrix"] = self.matrix.matrix
        out["labels"] = self.matrix.basis.labels()
        return out

    def constants_data(self) -> dict:
        return K.constants_table(self.inj).to_dict()

    def partial(self) -> dict:
        return {"config": self.cfg.to_dict(), "completed_stages": sorted(self._stage),
                "timings": self._timings()}

    def _timings(self) -> dict:
        if self.cfg.reproducible:
            return {}
        return {k: round(v, 4) for k, v in self.timings.items()}

    def build_ledger(self, data: dict) -> list[dict]:
        return build_ledger(data, self.cfg.genus, self.inj)

    def report(self) -> RunReport:
        data = {"schema": SCHEMA, "config": self.cfg.to_dict()}
        sections = [
            ("surface", self.surface_data),
            ("enumeration", self.ball_data),
            ("basis", self.basis_data),
            ("constants", self.constants_data),
            ("curvature", self.curvature_data),
            ("spectrum", self.spectrum_data),
            ("operator_checks", self.operator_checks),
            ("qform_checks", self.qform_checks),
            ("theta_checks", self.theta_checks),
            ("thickness", lambda: self.thickness.to_dict()),
            ("theta_family", lambda: [s.to_dict() for s in self.family]),
        ]
        for name, fn in sections:
            if name in data:
                continue
            t = time.perf_counter()
            try:
                data[name] = fn()
            except PipelineError as exc:
                exc.partial.update(_jsonable(data))
                raise
            except Exception as exc:
                part = _jsonable(data)
                part.update(self.partial())
                raise PipelineError(name, exc, part) from exc
            self.timings.setdefault(f"section:{name}", time.perf_counter() - t)
        data = _jsonable(data)
        data["ledger"] = self.build_ledger(data)
        data["cache_hits"] = {} if self.cfg.reproducible else dict(self.cache_hits)
        data["timings"] = self._timings()
        return RunReport(data)

    def write_csv(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        sp = self.spectrum
        p = out / "eigenvalues.csv"
        np.savetxt(p, np.column_stack([np.arange(1, len(sp.eigenvalues) + 1), sp.eigenvalues]),
                   delimiter=",", header="index,eigenvalue", comments="", fmt=["%d", "%.17g"])
        paths.append(p)
        p = out / "basis.csv"
        self.basis.to_csv(p)
        paths.append(p)
        p = out / "grid.csv"
        self.grid.to_csv(p)
        paths.append(p)
        p = out / "series_slice.csv"
        self.series.slice_to_csv(p, r_max=min(0.84, float(np.abs(self.domain.vertices).max())))
        paths.append(p)
        return paths


def _random_field(rng, nodes) -> np.ndarray:
    """Random smooth-plus-rough real field on the nodes."""
    c = rng.normal(size=6)
    x, y = nodes.real, nodes.imag
    smooth = c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * np.cos(3 * x) + c[5] * np.sin(4 * y)
    return smooth + 0.3 * rng.normal(size=len(nodes))


def _random_disc(rng, n, radius) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(size=n))
    return r * np.exp(2j * math.pi * rng.uniform(size=n))


def build_ledger(data: dict, genus: int, inj: float) -> list[dict]:
    """One entry per anchor in LEDGER_CHECKLIST, evaluated from the report sections."""
    led = []
    add = led.append
    s, cur, sp = data["surface"], data["curvature"], data["spectrum"]
    oc, qc, tc = data["operator_checks"], data["qform_checks"], data["theta_checks"]
    th, fam, bas = data["thickness"], data["theta_family"], data["basis"]
    n = 3 * genus - 3
    c_inj = K.c_of_r(inj)
    sca = cur["scalar"]
    lam = sp["lambda_min"]
    vals = np.array(sp["eigenvalues"])

    add(_entry("surface.relation", "surface relation word is the identity", s["relation_defect"], 1e-10,
               s["relation_defect"] <= 1e-10))
    add(_entry("surface.area", "domain area equals 4 pi (g-1)", abs(s["hyperbolic_area"] - s["expected_area"]),
               1e-9 * s["expected_area"], abs(s["hyperbolic_area"] - s["expected_area"]) <= 1e-9 * s["expected_area"]))
    add(_entry("basis.orthonormal", "basis is Petersson-orthonormal", bas["orthonormality_defect"], 1e-10,
               bas["orthonormality_defect"] <= 1e-10))
    add(_entry("operator.unit_constant", "D(1) = 1", oc["unit_constant_deviation"], 1e-3,
               oc["unit_constant_deviation"] <= 1e-3))
    add(_entry("operator.contraction", "0 <= <Df,f> <= <f,f>", oc["contraction_max_ratio"], 1.0,
               oc["contraction_min_ratio"] >= 0 and oc["contraction_max_ratio"] <= 1.0))
    add(_entry("operator.pointwise_third", "D(|mu|^2) >= |mu|^2/3 - 1e-4", -oc["pointwise_third_margin"], 1e-4,
               oc["pointwise_third_margin"] >= -1e-4))
    add(_entry("operator.kernel_symmetric", "G(z,w) = G(w,z)", oc["kernel_symmetry_defect"], 1e-10,
               oc["kernel_symmetry_defect"] <= 1e-10))
    add(_entry("operator.kernel_positive", "G > 0 and positive definite", -oc["kernel_min_entry"], 0.0,
               oc["kernel_min_entry"] > 0 and oc["kernel_positive_definite"]))
    tsym = max(cur["tensor_symmetry"].values())
    add(_entry("tensor.symmetry", "Kaehler symmetries of R", tsym, 1e-6, tsym <= 1e-6))
    add(_entry("tensor.norm_bound", "max |R_abcd| <= B(2 inj)", cur["tensor_max_component"],
               cur["tensor_norm_bound"], cur["tensor_max_component"] <= cur["tensor_norm_bound"]))
    rdiff = float(np.abs(np.array(cur["ricci"]) - np.array(cur["ricci_fields"])).max())
    add(_entry("ricci.groupings", "Ricci from tensor equals Ricci from fields", rdiff, 1e-8, rdiff <= 1e-8))
    tr = abs(cur["trace"] - cur["scalar_fields"])
    add(_entry("scalar.trace_identity", "Tr Q = Sca", tr, 0.01 * abs(cur["scalar_fields"]),
               tr <= 0.01 * abs(cur["scalar_fields"])))
    si = {x["name"]: x for x in cur["scalar_inequalities"]}
    for anchor, key in (("scalar.lower_l2", "Sca >= -2 int (sum|mu_i|^2)^2"),
                        ("scalar.upper_l2", "Sca <= -(1/3) int (sum|mu_i|^2)^2"),
                        ("scalar.genus_upper", "Sca <= -3(3g-2)/(4 pi)"),
                        ("scalar.injectivity_lower", "Sca >= -6(g-1) C(inj)")):
        x = si[key]
        add(_entry(anchor, key, x["lhs"], x["rhs"], x["pass"]))
    groups = {"holsec.l4_sandwich": ("int|mu|^4",), "holsec.sup_bracket": ("sup|mu|",), "holsec.negative": ("K < 0",)}
    hol_rows = [x for q in cur["hol_sec_inequalities"] for x in q]
    mu_g = {v["claim"]: v for v in th["verdicts"]}
    for anchor, keys in groups.items():
        rows = [x for x in hol_rows if any(k in x["name"] for k in keys)]
        worst = max(rows, key=lambda x: x["lhs"] - x["rhs"] - x["slack"])
        ok = all(x["pass"] for x in rows)
        if anchor == "holsec.sup_bracket":
            extra = [mu_g["K(mu_g) >= -2 sup|mu_g|^2 / ||mu_g||^2"], mu_g["K(mu_g) <= -C0 sup|mu_g|^4 / ||mu_g||^4"]]
            ok = ok and all(v["status"] == VERIFIED for v in extra)
        if anchor == "holsec.negative":
            ok = ok and mu_g["K(mu_g) < 0"]["status"] == VERIFIED
        add(_entry(anchor, f"{len(rows)} inequalities, worst: {worst['name']}", worst["lhs"], worst["rhs"], ok))
    zt = sp["zero_tol"]
    add(_entry("spectrum.semidefinite", "lambda_max <= zero_tol", sp["lambda_max"], zt, sp["lambda_max"] <= zt))
    add(_entry("spectrum.negative_count", "(3g-3)^2 negative eigenvalues", sp["n_negative"], n * n,
               sp["n_negative"] == n * n))
    add(_entry("spectrum.zero_count", "(3g-3)(3g-4) zero eigenvalues", sp["n_zero"], n * (n - 1),
               sp["n_zero"] == n * (n - 1)))
    ssum = abs(float(vals.sum()) - sca)
    add(_entry("spectrum.sum_is_scalar", "sum of eigenvalues equals Sca", ssum, 1e-8 * abs(sca), ssum <= 1e-8 * abs(sca)))
    add(_entry("lambda_min.universal_upper", "lambda_min <= -1/(2 pi) with 1e-3 slack", lam, -1 / (2 * math.pi) - 1e-3,
               lam <= -1 / (2 * math.pi) - 1e-3))
    bound = 2 * sca / (9 * (genus - 1))
    add(_entry("lambda_min.scalar_upper", "lambda_min <= 2 Sca / (9(g-1)) with 1e-3 slack", lam, bound - 1e-3,
               lam <= bound - 1e-3))
    add(_entry("lambda_min.injectivity_lower", "lambda_min >= -32 C(inj)", -32 * c_inj, lam, lam >= -32 * c_inj))
    neg = np.sort(vals)[: n * n][::-1]  # lambda_1 >= lambda_2 >= ... among the negatives
    idx_ok, idx_worst = True, (0.0, 0.0)
    for i, li in enumerate(neg, start=1):
        b = -6 * (genus - 1) * c_inj / (n * n - i + 1)
        if li < b:
            idx_ok = False
        if li - b < idx_worst[1] - idx_worst[0] or i == 1:
            idx_worst = (b, li)
    add(_entry("spectrum.index_bounds", "lambda_i >= -6(g-1)C(inj)/((3g-3)^2-i+1)", idx_worst[0], idx_worst[1], idx_ok))
    add(_entry("qform.dual_path", "|<QA,A> - q_form(A)| <= 1e-5 |A|^2", qc["dual_path_max_relative"], 1e-5,
               qc["dual_path_max_relative"] <= 1e-5))
    add(_entry("qform.decomposition_bounds", "int D(Im U) Im U <= -Q <= 4(int|F|^2 + int|H|^2)",
               0.0 if qc["decomposition_bounds_hold"] else 1.0, 0.0, qc["decomposition_bounds_hold"]))
    add(_entry("qform.zero_eigenvectors", "|Q(B - JB)| <= 1e-6 |B| and span dimension (3g-3)(3g-4)",
               qc["zero_eigenvector_max"], 1e-6,
               qc["zero_eigenvector_max"] <= 1e-6 and qc["kernel_span_rank"] == n * (n - 1)))
    add(_entry("qform.j_involution", "J(J(A)) = A", qc["j_involution_defect"], 0.0, qc["j_involution_defect"] == 0.0))
    add(_entry("qform.special_element", "Q(A0,A0) <= 2 Sca / (9(g-1))", qc["special_element_value"], bound,
               qc["special_element_value"] <= bound))
    add(_entry("qform.injectivity_lower", "Q(A,A) >= -32 C(inj) |A|^2", -32 * c_inj, qc["random_unit_min"],
               qc["random_unit_min"] >= -32 * c_inj))
    add(_entry("theta.automorphy", "Theta(1)(gamma z) gamma'(z)^2 = Theta(1)(z)", tc["automorphy_max_relative"], 1e-5,
               tc["automorphy_max_relative"] <= 1e-5))
    add(_entry("theta.shell_identity", "sum |gamma'|^2/rho = (1/4) sum (1-|gamma z|^2)^2 per shell",
               tc["shell_identity_max"], 1e-10, tc["shell_identity_max"] <= 1e-10))
    add(_entry("theta.laplacian_identity", "finite-difference Laplacian identity", tc["laplacian_max_defect"], 1e-4,
               tc["laplacian_max_defect"] <= 1e-4))
    rl = tc["rest_laplacian_min"]
    add(_entry("theta.rest_subharmonic", "Laplacian of identity-free series >= -1e-4 outside the inner ball",
               -1e-4, rl if rl is not None else 0.0, rl is not None and rl >= -1e-4, rl is not None))
    sr = th["sup_reduction"]
    add(_entry("theta.sup_reduction", "sup over B(0,1/sqrt2) equals sup over the domain", sr["agreement"], 1e-3,
               sr["agreement"] <= 1e-3))
    pw = mu_g["4|mu_g| <= S pointwise"]
    add(_entry("theta.pointwise_series_bound", "4|mu_g| <= S", pw["value"], 0.0, pw["status"] == VERIFIED))
    add(_entry("theta.translates_disjoint", "gamma B(z,1/10) pairwise disjoint", -tc["translates_min_gap"], 0.0,
               tc["translates_min_gap"] > 0))

    def tri(anchor, claim):
        v = mu_g[claim]
        add(_entry(anchor, claim, v["value"], v["bound"], v["status"] != VIOLATED, v["status"] != UNMET))

    tri("thick.sup_mu", "sup|mu_g| < 5/16")
    tri("thick.mu_at_origin", "|mu_g(0)| >= 3/16")
    tri("thick.mu_norm", "||mu_g||^2 <= 5 pi / 16")
    tri("thick.hol_sec_bound", "K(mu_g) <= -81 C0 / (6400 pi^2)")
    tri("thick.tail_bound", "sup over B(0,1/sqrt2) of rest <= (25/pi)(pi - area)")
    tri("mu_g.norm_chain", "||mu_g||^2 <= sup|mu_g| int|mu_g|")
    tri("mu_g.l1_bound", "int|mu_g| dA <= pi")
    tri("mu_g.in_span", "mu_g in span of basis (residual < 1e-4)")
    for anchor, key in (("family.negative", "K < 0"), ("family.sup_bracket", "sup|mu|"),
                        ("family.injectivity_lower", "C(inj)")):
        rows = [v for f in fam for v in f["verdicts"] if key in v["claim"]]
        ok = all(v["status"] != VIOLATED for v in rows)
        worst = max(rows, key=lambda v: v["value"] - v["bound"])
        add(_entry(anchor, f"{len(fam)} seeds: {worst['claim']}", worst["value"], worst["bound"], ok))
    c_small = K.c_of_r(1e-3) * math.pi * 1e-6
    add(_entry("constants.small_radius_limit", "C(r) pi r^2 -> 1 (r = 1e-3)", abs(c_small - 1), 5e-3,
               abs(c_small - 1) <= 5e-3))
    d = abs(K.c_of_r(30.0) - 3 / (4 * math.pi))
    add(_entry("constants.large_radius_limit", "C(30) = 3/(4 pi)", d, 1e-6, d < 1e-6))
    d = abs(K.b_of_eps(60.0) - 24 / math.pi)
    add(_entry("constants.large_eps_limit", "B(60) = 24/pi", d, 1e-6, d < 1e-6))
    d = abs(K.unit_ball_area() - 4 * math.pi * math.sinh(0.5) ** 2)
    add(_entry("constants.ball_volume", "Vol B(0;1) = 4 pi sinh^2(1/2)", d, 1e-12, d <= 1e-12))
    return led


def run_pipeline(cfg: RunConfig) -> RunReport:
    with thread_budget(cfg):
        pipe = Pipeline(cfg)
        rep = pipe.report()
        if cfg.out:
            rep.write(Path(cfg.out))
        return rep


class thread_budget:
    """Caps BLAS threads; reproducible runs use a single thread."""

    def __init__(self, cfg: RunConfig):
        self.n = 1 if cfg.reproducible else cfg.threads
        self._ctx = None

    def __enter__(self):
        if self.n:
            self._ctx = threadpool_limits(self.n)
        return self

    def __exit__(self, *exc):
        if self._ctx is not None:
            self._ctx.unregister()
        return False


@dataclass
class SweepTable:
    parameter: str
    rows: list[dict]
    estimates: dict
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_csv(self, path) -> None:
        keys = ["value", "nodes", "lambda_min", "scalar", "n_negative", "n_zero"]
        lines = [",".join(keys)] + [",".join(repr(r[k]) for k in keys) for r in self.rows]
        Path(path).write_text("\n".join(lines) + "\n")


def _richardson(values: list[float], ratio: float | None) -> dict:
    """Observed order and extrapolated limit from the last three values of a geometric refinement."""
    if len(values) < 3:
        return {}
    a, b, c = values[-3:]
    d1, d2 = b - a, c - b
    out = {"last_change": abs(d2), "last_relative_change": abs(d2) / abs(c) if c else float("nan")}
    if ratio and d1 != 0 and d2 != 0 and (d1 > 0) == (d2 > 0) and abs(d2) < abs(d1):
        p = math.log(abs(d1 / d2)) / math.log(ratio)
        out["order"] = p
        out["extrapolated"] = c + d2 / (ratio ** p - 1.0)
        out["error_estimate"] = abs(d2 / (ratio ** p - 1.0))
    return out


def convergence_sweep(cfg: RunConfig, parameter: str, values) -> SweepTable:
    """Re-run the curvature stages for each value of h or R."""
    values = [float(v) for v in values]
    if parameter not in ("h", "R"):
        raise ValueError("parameter must be 'h' or 'R'")
    if len(values) < 3:
        raise ValueError("a sweep needs at least three values")
    # coarse to fine
    values = sorted(values, reverse=(parameter == "h"))
    rows = []
    with thread_budget(cfg):
        for v in values:
            kw = cfg.to_dict()
            kw["grid_h" if parameter == "h" else "radius"] = v
            pipe = Pipeline(RunConfig(**kw))
            sp = pipe.spectrum
            rows.append({"value": v, "nodes": len(pipe.grid), "lambda_min": sp.lambda_min,
                         "scalar": scalar_curvature(pipe.tensor), "n_negative": sp.n_negative,
                         "n_zero": sp.n_zero, "eigenvalues": sp.eigenvalues.tolist()})
    ratios = [values[i] / values[i + 1] for i in range(len(values) - 1)]
    ratio = ratios[-1] if parameter == "h" and np.allclose(ratios, ratios[-1]) else None
    est = {k: _richardson([r[k] for r in rows], ratio) for k in ("lambda_min", "scalar")}
    warns = []
    for k in ("lambda_min", "scalar"):
        seq = np.array([r[k] for r in rows])
        d = np.diff(seq)
        if len(d) >= 2 and not (np.all(d >= 0) or np.all(d <= 0)):
            warns.append(f"{k} is not monotone over the sweep")
        if len(d) >= 2 and abs(d[-1]) > abs(d[-2]):
            warns.append(f"{k} changes grow with refinement")
    counts = {(r["n_negative"], r["n_zero"]) for r in rows}
    if len(counts) > 1:
        warns.append(f"eigenvalue counts vary over the sweep: {sorted(counts)}")
    for w in warns:
        log.warning(w)
    return SweepTable(parameter, rows, est, warns)
