"""Empirical verification: sup-error estimates, dimension audits, rate fits and
geometric property checks, collected into a reproducible report."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Callable

import numpy as np
from scipy.stats import qmc

from reluforge import geometry as geo
from reluforge.network import ReluNetwork, evaluate, metrics
from reluforge.pou import PouSpec, eta_reference, localization_radius

HEADROOM = 2.0
METRIC_NAMES = {"L": "depth", "W": "width", "P": "nonzero_params", "B": "weight_bound"}


# --- sampling -----------------------------------------------------------------


@dataclass(frozen=True)
class BoxSampler:
    """Scrambled Sobol points in ``[low, high]^dim`` plus the box corners (for dim <= 12)."""

    dim: int
    low: float = 0.0
    high: float = 1.0

    def points(self, n: int, seed: int) -> np.ndarray:
        u = qmc.Sobol(self.dim, scramble=True, seed=seed).random_base2(max(0, math.ceil(math.log2(max(n, 1)))))[:n]
        return self.low + (self.high - self.low) * u

    def special(self) -> np.ndarray:
        if self.dim > 12:
            return np.empty((0, self.dim))
        corners = np.array(np.meshgrid(*[[self.low, self.high]] * self.dim, indexing="ij")).reshape(self.dim, -1).T
        return corners


@dataclass(frozen=True)
class GridSampler:
    """Uniform grid on ``[low, high]`` (univariate), endpoints included."""

    low: float = 0.0
    high: float = 1.0
    dim: int = 1

    def points(self, n: int, seed: int) -> np.ndarray:
        return np.linspace(self.low, self.high, n)[:, None]

    def special(self) -> np.ndarray:
        return np.array([[self.low], [self.high]])


@dataclass(frozen=True, eq=False)
class MappedSampler:
    """Scrambled Sobol points pushed through ``transform`` (unit cube -> domain)."""

    dim: int
    transform: Callable
    special_points: np.ndarray | None = None

    def points(self, n: int, seed: int) -> np.ndarray:
        return np.asarray(self.transform(BoxSampler(self.dim).points(n, seed)), dtype=np.float64)

    def special(self) -> np.ndarray:
        if self.special_points is None:
            return np.empty((0, self.dim))
        return np.atleast_2d(np.asarray(self.special_points, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class TubeSampler:
    """Random points of the q-tube of a manifold."""

    manifold: geo.ManifoldSpec
    q: float

    @property
    def dim(self) -> int:
        return self.manifold.ambient_dim

    def points(self, n: int, seed: int) -> np.ndarray:
        return geo.tube_sample(self.manifold, self.q, n, seed).x

    def special(self) -> np.ndarray:
        return np.empty((0, self.dim))


@dataclass(frozen=True)
class SupError:
    estimate: float
    argmax: np.ndarray
    sample_count: int


def sup_error(net: ReluNetwork, reference: Callable, sampler, n: int, seed: int = 0, special=None, norm: str = "inf", jobs: int = 1, chunk: int = 8192) -> SupError:
    """Largest deviation between ``net`` and ``reference`` over sampled and special points.

    The deviation of a vector output is its max norm (``norm="inf"``) or l1
    norm.  The estimate is a lower bound on the true sup norm.
    """
    if net.input_dim != sampler.dim:
        raise ValueError(f"sampler dimension {sampler.dim} does not match network input {net.input_dim}")
    X = sampler.points(n, seed)
    extra = [sampler.special()]
    if special is not None:
        extra.append(np.atleast_2d(np.asarray(special, dtype=np.float64)))
    X = np.vstack([X] + [e for e in extra if e.size])
    best, where = -1.0, None
    for lo in range(0, X.shape[0], chunk):
        block = X[lo : lo + chunk]
        out = evaluate(net, block, jobs=jobs).reshape(block.shape[0], -1)
        ref = np.asarray(reference(block), dtype=np.float64).reshape(block.shape[0], -1)
        dev = np.abs(out - ref)
        dev = dev.max(axis=1) if norm == "inf" else dev.sum(axis=1)
        i = int(np.argmax(dev))
        if dev[i] > best:
            best, where = float(dev[i]), block[i].copy()
    return SupError(best, where, int(X.shape[0]))


# --- dimension audits ---------------------------------------------------------


def load_constants() -> dict:
    with resources.files("reluforge").joinpath("data/constants.json").open("r") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class AuditRow:
    check: str
    metric: str
    value: float
    bound: float
    passed: bool


def dimension_audit(net: ReluNetwork, bounds: dict, constants: dict | None = None, name: str = "") -> list:
    """Compare metrics against bounds.

    ``bounds`` maps a metric (``L, W, P, B`` or the long names) to either a
    number (an exact bound) or a pair ``(constant_id, formula_value)``; the
    latter is checked against ``HEADROOM * constants[constant_id] * formula_value``.
    """
    m = metrics(net)._asdict()
    consts = load_constants() if constants is None else constants
    rows = []
    for key, spec in bounds.items():
        metric = METRIC_NAMES.get(key, key)
        if metric not in m:
            raise KeyError(f"unknown metric {key!r}")
        if isinstance(spec, tuple):
            cid, formula = spec
            if cid not in consts:
                raise KeyError(f"no frozen constant {cid!r}")
            bound = HEADROOM * consts[cid] * float(formula)
            check = cid
        else:
            bound = float(spec)
            check = f"{name}{'.' if name else ''}{metric}"
        value = float(m[metric])
        rows.append(AuditRow(check, metric, value, bound, value <= bound))
    return rows


# --- rate fits ----------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float


def rate_fit(pairs) -> RateFit:
    """Least-squares line through ``(log x, log y)``."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise ValueError("rate_fit needs at least 3 (x, y) pairs")
    if np.any(arr <= 0):
        raise ValueError("rate_fit needs positive values")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise ValueError("rate_fit needs distinct x values")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    syy = np.sum((y - ym) ** 2)
    r2 = 1.0 if syy == 0 else float(1 - np.sum(resid**2) / syy)
    return RateFit(slope, intercept, r2)


# --- geometric property checks ----------------------------------------------


@dataclass
class PropertyResult:
    name: str
    passed: bool
    samples: int
    violations: int
    measured: dict = field(default_factory=dict)


def _normal_transport(M, P_new, U, q):
    """Move normal offsets ``U`` to the normal spaces at ``P_new``, keeping them in the tube."""
    N = geo.normal_basis_params(M, P_new)
    moved = np.einsum("ndk,nk->nd", N, np.einsum("ndk,nd->nk", N, U))
    cap = q * M.shape.reach(P_new) * (1 - 1e-9)
    norm = np.linalg.norm(moved, axis=1)
    scale = np.where(norm > cap, cap / np.maximum(norm, 1e-300), 1.0)
    return moved * scale[:, None]


def tube_pairs(M: geo.ManifoldSpec, q: float, n: int, seed: int, scale: float) -> tuple:
    """Pairs of tube points whose base points are about ``scale`` apart."""
    rng = np.random.default_rng(seed)
    base = geo.tube_sample(M, q, n, int(rng.integers(2**31)))
    A = geo.tangent_basis_params(M, base.params)
    step = np.einsum("ndk,nk->nd", A, rng.standard_normal((n, M.intrinsic_dim)) * scale)
    P2 = M.params_of(base.v + step)
    V2 = M.points(P2)
    X2 = V2 + _normal_transport(M, P2, base.x - base.v, q)
    return base.x, X2


def lipschitz_check(M: geo.ManifoldSpec, q: float, n_pairs: int, seed: int = 0) -> PropertyResult:
    """Projection ratio ``|pi(x) - pi(x')| / |x - x'|`` against ``1/(1-q)`` (slack 1e-8).

    Half of the pairs are independent tube samples, half are nearby pairs at
    a range of scales (where the ratio is largest).
    """
    rng = np.random.default_rng(seed)
    tau = geo.global_reach(M)
    half = n_pairs // 2
    X1 = geo.tube_sample(M, q, half, int(rng.integers(2**31))).x
    X2 = geo.tube_sample(M, q, half, int(rng.integers(2**31))).x
    near = []
    rest = n_pairs - half
    for j, s in enumerate(np.geomspace(1e-4, 1e-1, 4)):
        count = rest // 4 + (1 if j < rest % 4 else 0)
        near.append(tube_pairs(M, q, count, int(rng.integers(2**31)), s * tau))
    A = np.vstack([X1] + [a for a, _ in near])
    B = np.vstack([X2] + [b for _, b in near])
    gap = np.linalg.norm(A - B, axis=1)
    keep = gap > 0
    ratio = np.linalg.norm(geo.project(M, A[keep]) - geo.project(M, B[keep]), axis=1) / gap[keep]
    bound = 1 / (1 - q) + 1e-8
    viol = int(np.sum(ratio > bound))
    return PropertyResult("lipschitz", viol == 0, int(keep.sum()), viol, {"max_ratio": float(ratio.max()), "bound": bound, "q": q})


def metric_equivalence_check(M: geo.ManifoldSpec, q: float, p: float, n: int, seed: int = 0, max_batches: int = 50) -> PropertyResult:
    """Both sides of the tangent-norm / geodesic sandwich on admissible (x, z) pairs.

    Admissible: x in the q-tube, ``|x - z| < p tau(z)`` and
    ``|A(z)^T (x - z)| < (1 - p) tau_M / 3``.
    """
    if not q <= p < 1:
        raise ValueError("need q <= p < 1")
    rng = np.random.default_rng(seed)
    tau_M = geo.global_reach(M)
    d = M.intrinsic_dim
    lim = (1 - p) * tau_M / 3
    rows = []
    have = 0
    for _ in range(max_batches):
        m = max(2 * (n - have), 256)
        Pz = M.shape.sample(m, rng)
        Z = M.points(Pz)
        Az = geo.tangent_basis_params(M, Pz)
        xi = rng.standard_normal((m, d))
        xi *= (lim * 1.2 * rng.random(m) ** (1 / d) / np.linalg.norm(xi, axis=1))[:, None]
        Pv = M.params_of(Z + np.einsum("ndk,nk->nd", Az, xi))
        V = M.points(Pv)
        codim = M.ambient_dim - d
        Nv = geo.normal_basis_params(M, Pv)
        g = rng.standard_normal((m, codim))
        g /= np.linalg.norm(g, axis=1)[:, None]
        U = np.einsum("ndk,nk->nd", Nv, g * (q * M.shape.reach(Pv) * rng.random(m) ** (1 / codim))[:, None])
        X = V + U
        t_norm = np.linalg.norm(np.einsum("nd,ndk->nk", X - Z, Az), axis=1)
        ok = (np.linalg.norm(X - Z, axis=1) < p * M.shape.reach(Pz)) & (t_norm < lim)
        if np.any(ok):
            geod = M.shape.geodesic(Pz[ok], Pv[ok])
            dist_x = np.linalg.norm(U[ok], axis=1)
            tau_v = M.shape.reach(Pv[ok])
            upper = (1 + dist_x / np.maximum(tau_M, tau_v - geod)) * geod
            rows.append(np.column_stack([t_norm[ok], upper, geod, 3 / (1 - p) * t_norm[ok]]))
            have += int(ok.sum())
        if have >= n:
            break
    if have < n:
        raise RuntimeError(f"only {have} admissible samples drawn, {n} requested")
    R = np.vstack(rows)[:n]
    tol = 1e-12 + 1e-9 * np.abs(R).max(axis=1)
    upper_margin = R[:, 1] - R[:, 0]
    lower_margin = R[:, 3] - R[:, 2]
    viol = int(np.sum((upper_margin < -tol) | (lower_margin < -tol)))
    return PropertyResult(
        "metric_equivalence",
        viol == 0,
        n,
        viol,
        {"min_upper_margin": float(upper_margin.min()), "min_lower_margin": float(lower_margin.min()), "q": q, "p": p},
    )


def pou_check(spec: PouSpec, n: int, seed: int = 0) -> PropertyResult:
    """Sum to one, localization radius and the lower bound on ``|eta~|_1`` on tube samples."""
    M = spec.manifold
    ts = geo.tube_sample(M, spec.q, n, seed)
    tilde, eta = eta_reference(spec, ts.x)
    sums = np.asarray(eta.sum(axis=1)).ravel()
    norms = np.asarray(tilde.sum(axis=1)).ravel()
    coo = eta.tocoo()
    geod = M.shape.geodesic(ts.params[coo.row], spec.net.params[coo.col])
    radius = localization_radius(spec.q, spec.delta)
    lower = (1 - spec.q) / 8
    loc_viol = int(np.sum(geod > radius))
    sum_err = float(np.max(np.abs(sums - 1)))
    low_viol = int(np.sum(norms < lower))
    passed = loc_viol == 0 and low_viol == 0 and sum_err <= 1e-12
    return PropertyResult(
        "partition_of_unity",
        passed,
        n,
        loc_viol + low_viol,
        {
            "max_sum_error": sum_err,
            "max_support_distance": float(geod.max()),
            "localization_radius": radius,
            "min_l1": float(norms.min()),
            "max_l1": float(norms.max()),
            "lower_bound": lower,
        },
    )


# --- report ---------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


@dataclass
class VerificationReport:
    seed: int
    sup_error_estimate: float | None = None
    sup_error_bound: float | None = None
    argmax_point: list | None = None
    sample_count: int = 0
    dimension_audit: list = field(default_factory=list)
    property_results: list = field(default_factory=list)
    rate_fit: RateFit | None = None
    rate_fit_target: tuple | None = None

    def add_sup(self, result: SupError, bound: float):
        self.sup_error_estimate = result.estimate
        self.sup_error_bound = bound
        self.argmax_point = result.argmax.tolist() if result.argmax is not None else None
        self.sample_count = result.sample_count

    def rows(self) -> list:
        """Summary rows ``(check, value, bound, pass)``."""
        out = []
        if self.sup_error_estimate is not None:
            out.append(("sup_error", self.sup_error_estimate, self.sup_error_bound, self.sup_error_estimate <= self.sup_error_bound))
        for r in self.dimension_audit:
            label = r.check if r.check.endswith(r.metric) else f"{r.check}:{r.metric}"
            out.append((label, r.value, r.bound, r.passed))
        for p in self.property_results:
            out.append((p.name, p.violations, 0, p.passed))
        if self.rate_fit is not None and self.rate_fit_target is not None:
            target, tol = self.rate_fit_target
            out.append(("rate_fit_slope", self.rate_fit.slope, f"{target}+-{tol}", abs(self.rate_fit.slope - target) <= tol))
        return out

    @property
    def passed(self) -> bool:
        return all(bool(r[3]) for r in self.rows())

    def failures(self) -> list:
        return [r[0] for r in self.rows() if not r[3]]

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "sup_error_estimate": self.sup_error_estimate,
            "sup_error_bound": self.sup_error_bound,
            "argmax_point": self.argmax_point,
            "sample_count": self.sample_count,
            "dimension_audit": [asdict(r) for r in self.dimension_audit],
            "property_results": [asdict(p) for p in self.property_results],
            "rate_fit": asdict(self.rate_fit) if self.rate_fit else None,
            "passed": self.passed,
        }
        return json.dumps(_jsonable(doc), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "value", "bound", "pass"])
        for check, value, bound, ok in self.rows():
            w.writerow([check, repr(float(value)) if isinstance(value, (float, np.floating)) else value, bound, "true" if ok else "false"])
        return buf.getvalue()
