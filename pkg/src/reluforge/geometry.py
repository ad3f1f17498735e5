"""Catalog of analytic submanifolds with projection, tangent, geodesic and reach oracles.

Each manifold lives in canonical coordinates ``y`` in R^k (k <= D) and is
placed in R^D by a rigid map ``x = offset + Q[:, :k] y`` with ``Q`` orthogonal.
Points on the manifold are also described by kind-specific parameters
(angle, unit vector, (u, v), ...), which every batched routine below
passes around internally.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree
from scipy.special import gammaln
from scipy.stats import special_ortho_group

AMBIGUITY_TOL = 1e-9
KINDS = ("circle", "sphere", "torus", "swiss_roll", "affine_subspace")


class ProjectionAmbiguityError(ValueError):
    """The query point is (numerically) equidistant from distinct manifold points."""


class CertificationError(RuntimeError):
    """A separated net could not be certified maximal with the given probes."""


# --- canonical shapes -------------------------------------------------------


class _Circle:
    d = 1
    k = 2

    def __init__(self, radius):
        self.r = radius
        self.volume = 2 * math.pi * radius
        self.min_reach = radius
        self.extent = radius

    def point(self, P):
        th = P[:, 0]
        return self.r * np.column_stack([np.cos(th), np.sin(th)])

    def project(self, Y):
        rho = np.hypot(Y[:, 0], Y[:, 1])
        if np.any(rho <= AMBIGUITY_TOL):
            raise ProjectionAmbiguityError("point at the circle center")
        return np.mod(np.arctan2(Y[:, 1], Y[:, 0]), 2 * math.pi)[:, None]

    def tangent(self, P):
        th = P[:, 0]
        return np.stack([-np.sin(th), np.cos(th)], axis=1)[:, :, None]

    def normal(self, P):
        th = P[:, 0]
        return np.stack([np.cos(th), np.sin(th)], axis=1)[:, :, None]

    def reach(self, P):
        return np.full(P.shape[0], self.r)

    def geodesic(self, P1, P2):
        diff = np.abs(np.mod(P1[:, 0] - P2[:, 0] + math.pi, 2 * math.pi) - math.pi)
        return self.r * diff

    def sample(self, n, rng):
        return rng.uniform(0, 2 * math.pi, size=(n, 1))

    def probes(self, n):
        return (2 * math.pi * np.arange(n) / n)[:, None]


class _Sphere:
    def __init__(self, d, radius):
        self.d = d
        self.k = d + 1
        self.r = radius
        self.volume = math.exp(math.log(2) + 0.5 * (d + 1) * math.log(math.pi) - gammaln(0.5 * (d + 1))) * radius**d
        self.min_reach = radius
        self.extent = radius

    def point(self, P):
        return self.r * P

    def project(self, Y):
        rho = np.linalg.norm(Y, axis=1)
        if np.any(rho <= AMBIGUITY_TOL):
            raise ProjectionAmbiguityError("point at the sphere center")
        return Y / rho[:, None]

    def _householder(self, P):
        # reflection mapping e_k to -s*n; its other columns span the tangent space
        s = np.where(P[:, -1] >= 0, 1.0, -1.0)
        w = P.copy()
        w[:, -1] += s
        H = np.eye(self.k)[None] - 2 * w[:, :, None] * w[:, None, :] / np.sum(w * w, axis=1)[:, None, None]
        return H

    def tangent(self, P):
        return self._householder(P)[:, :, : self.d]

    def normal(self, P):
        return P[:, :, None]

    def reach(self, P):
        return np.full(P.shape[0], self.r)

    def geodesic(self, P1, P2):
        chord = np.linalg.norm(P1 - P2, axis=1)
        return 2 * self.r * np.arcsin(np.clip(chord / 2, 0, 1))

    def sample(self, n, rng):
        g = rng.standard_normal((n, self.k))
        return g / np.linalg.norm(g, axis=1)[:, None]

    def probes(self, n):
        if self.d == 2:
            # Fibonacci lattice, ordered from pole to pole
            i = np.arange(n) + 0.5
            z = 1 - 2 * i / n
            phi = math.pi * (3 - math.sqrt(5)) * i
            rho = np.sqrt(1 - z * z)
            return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
        from scipy.stats import norm, qmc

        u = qmc.Halton(self.k, scramble=False).random(n + 1)[1:]
        g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
        P = g / np.linalg.norm(g, axis=1)[:, None]
        return P[np.argsort(-P[:, -1], kind="stable")]


class _Torus:
    d = 2
    k = 3
    grid = 200

    def __init__(self, R, r):
        if not R > r:
            raise ValueError("torus requires R > r")
        self.R, self.r = R, r
        self.volume = 4 * math.pi**2 * R * r
        self.min_reach = min(r, R - r)
        self.extent = R + r

    def point(self, P):
        u, v = P[:, 0], P[:, 1]
        rho = self.R + self.r * np.cos(v)
        return np.column_stack([rho * np.cos(u), rho * np.sin(u), self.r * np.sin(v)])

    def project(self, Y):
        rho = np.hypot(Y[:, 0], Y[:, 1])
        if np.any(rho <= AMBIGUITY_TOL) or np.any(np.hypot(rho - self.R, Y[:, 2]) <= AMBIGUITY_TOL):
            raise ProjectionAmbiguityError("point on the torus axis or core circle")
        u = np.mod(np.arctan2(Y[:, 1], Y[:, 0]), 2 * math.pi)
        v = np.mod(np.arctan2(Y[:, 2], rho - self.R), 2 * math.pi)
        return np.column_stack([u, v])

    def tangent(self, P):
        u, v = P[:, 0], P[:, 1]
        tu = np.stack([-np.sin(u), np.cos(u), np.zeros_like(u)], axis=1)
        tv = np.stack([-np.sin(v) * np.cos(u), -np.sin(v) * np.sin(u), np.cos(v)], axis=1)
        return np.stack([tu, tv], axis=2)

    def normal(self, P):
        u, v = P[:, 0], P[:, 1]
        return np.stack([np.cos(v) * np.cos(u), np.cos(v) * np.sin(u), np.sin(v)], axis=1)[:, :, None]

    def reach(self, P):
        # distance to the core circle is r, to the symmetry axis R + r cos v
        return np.minimum(self.r, self.R + self.r * np.cos(P[:, 1]))

    def _segment_length(self, P1, P2):
        du = np.mod(P2[:, 0] - P1[:, 0] + math.pi, 2 * math.pi) - math.pi
        dv = np.mod(P2[:, 1] - P1[:, 1] + math.pi, 2 * math.pi) - math.pi
        # Simpson rule for the length of the straight parameter segment
        total = np.zeros(P1.shape[0])
        for w, s in ((1, 0.0), (4, 0.5), (1, 1.0)):
            rho = self.R + self.r * np.cos(P1[:, 1] + s * dv)
            total += w * np.sqrt((rho * du) ** 2 + (self.r * dv) ** 2)
        return total / 6, du, dv

    @functools.cached_property
    def _graph(self):
        n = self.grid
        h = 2 * math.pi / n
        iu, iv = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        iu, iv = iu.ravel(), iv.ravel()
        stencil = [(1, 0), (0, 1), (1, 1), (1, -1), (1, 2), (2, 1), (1, -2), (2, -1)]
        rows, cols, vals = [], [], []
        for a, b in stencil:
            ju, jv = (iu + a) % n, (iv + b) % n
            P1 = np.column_stack([iu * h, iv * h])
            P2 = np.column_stack([iu * h + a * h, iv * h + b * h])
            length, _, _ = self._segment_length(P1, P2)
            rows.append(iu * n + iv)
            cols.append(ju * n + jv)
            vals.append(length)
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
        g = sp.csr_matrix((vals, (rows, cols)), shape=(n * n, n * n))
        return g.maximum(g.T).tocsr()

    def _node(self, P):
        n = self.grid
        idx = np.rint(np.mod(P, 2 * math.pi) / (2 * math.pi / n)).astype(np.int64) % n
        return idx[:, 0] * n + idx[:, 1]

    def geodesic(self, P1, P2):
        P1, P2 = np.broadcast_arrays(P1, P2)
        length, du, dv = self._segment_length(P1, P2)
        out = length.copy()
        # short separations: the straight parameter segment is accurate;
        # otherwise use the shortest path on the parameter grid
        far = np.hypot(du, dv) > 4 * (2 * math.pi / self.grid)
        if np.any(far):
            src, dst = self._node(P1[far]), self._node(P2[far])
            res = np.empty(src.size)
            for s in np.unique(src):
                mask = src == s
                dist = dijkstra(self._graph, indices=int(s))
                res[mask] = dist[dst[mask]]
            out[far] = np.minimum(out[far], res)
        return out

    def sample(self, n, rng):
        out = np.empty((0, 2))
        while out.shape[0] < n:
            m = 2 * (n - out.shape[0]) + 16
            u = rng.uniform(0, 2 * math.pi, m)
            v = rng.uniform(0, 2 * math.pi, m)
            keep = rng.uniform(0, self.R + self.r, m) < self.R + self.r * np.cos(v)
            out = np.vstack([out, np.column_stack([u, v])[keep]])
        return out[:n]

    def probes(self, n):
        ratio = self.R / self.r
        nv = max(4, int(round(math.sqrt(n / ratio))))
        nu = max(4, int(math.ceil(n / nv)))
        u, v = np.meshgrid(2 * math.pi * np.arange(nu) / nu, 2 * math.pi * np.arange(nv) / nv, indexing="ij")
        return np.column_stack([u.ravel(), v.ravel()])


class _SwissRoll:
    d = 2
    k = 3

    def __init__(self, pitch, t_min, t_max, height):
        if not 0 < t_min < t_max:
            raise ValueError("swiss roll requires 0 < t_min < t_max")
        self.a, self.t0, self.t1, self.H = pitch, t_min, t_max, height
        self.volume = (self.arclength(t_max) - self.arclength(t_min)) * height
        self.min_reach = float(self.reach(np.array([[t_min, 0.0]]))[0])
        self.extent = math.hypot(pitch * t_max, height / 2)
        tt = np.linspace(t_min, t_max, 20001)
        self._tt, self._ss = tt, self.arclength(tt)

    def arclength(self, t):
        t = np.asarray(t, dtype=np.float64)
        return 0.5 * self.a * (t * np.sqrt(1 + t * t) + np.arcsinh(t))

    def _curve(self, t):
        return self.a * t * np.cos(t), self.a * t * np.sin(t)

    def point(self, P):
        c0, c1 = self._curve(P[:, 0])
        return np.column_stack([c0, P[:, 1], c1])

    def project(self, Y):
        w0, w1 = Y[:, 0], Y[:, 2]
        s = np.clip(Y[:, 1], -self.H / 2, self.H / 2)
        phi = np.mod(np.arctan2(w1, w0), 2 * math.pi)
        ks = np.arange(math.floor(self.t0 / (2 * math.pi)) - 1, math.ceil(self.t1 / (2 * math.pi)) + 2)
        T = phi[:, None] + 2 * math.pi * ks[None, :]
        T = np.concatenate([T, np.full((len(phi), 1), self.t0), np.full((len(phi), 1), self.t1)], axis=1)
        T = np.clip(T, self.t0, self.t1)
        a = self.a
        W0, W1 = w0[:, None], w1[:, None]
        for _ in range(60):
            ct, st = np.cos(T), np.sin(T)
            e0, e1 = W0 - a * T * ct, W1 - a * T * st
            d0, d1 = a * (ct - T * st), a * (st + T * ct)
            dd0, dd1 = a * (-2 * st - T * ct), a * (2 * ct - T * st)
            grad = -(e0 * d0 + e1 * d1)
            speed = d0 * d0 + d1 * d1
            curv = speed - (e0 * dd0 + e1 * dd1)
            step = -grad / np.maximum(curv, 0.1 * speed)
            T = np.clip(T + step, self.t0, self.t1)
            if np.max(np.abs(step)) < 1e-13:
                break
        e0, e1 = W0 - a * T * np.cos(T), W1 - a * T * np.sin(T)
        obj = e0 * e0 + e1 * e1
        order = np.argsort(obj, axis=1)
        rows = np.arange(len(phi))
        best = order[:, 0]
        t_best = T[rows, best]
        f_best = obj[rows, best]
        # ambiguity: a distinct candidate with the same objective value
        distinct = np.abs(T - t_best[:, None]) > 1e-7
        f_other = np.where(distinct, obj, np.inf).min(axis=1)
        if np.any(f_other - f_best <= AMBIGUITY_TOL):
            raise ProjectionAmbiguityError("point equidistant from two sheets of the roll")
        return np.column_stack([t_best, s])

    def tangent(self, P):
        t = P[:, 0]
        speed = np.sqrt(1 + t * t)
        d0 = (np.cos(t) - t * np.sin(t)) / speed
        d1 = (np.sin(t) + t * np.cos(t)) / speed
        zero = np.zeros_like(t)
        tt = np.stack([d0, zero, d1], axis=1)
        ts = np.stack([zero, np.ones_like(t), zero], axis=1)
        return np.stack([tt, ts], axis=2)

    def normal(self, P):
        T = self.tangent(P)[:, :, 0]
        return np.stack([-T[:, 2], np.zeros(P.shape[0]), T[:, 0]], axis=1)[:, :, None]

    def reach(self, P):
        t = P[:, 0]
        kappa = (2 + t * t) / (self.a * (1 + t * t) ** 1.5)
        return np.minimum(1 / kappa, math.pi * self.a)

    def geodesic(self, P1, P2):
        P1, P2 = np.broadcast_arrays(P1, P2)
        return np.hypot(self.arclength(P1[:, 0]) - self.arclength(P2[:, 0]), P1[:, 1] - P2[:, 1])

    def _t_of_s(self, S):
        return np.interp(S, self._ss, self._tt)

    def sample(self, n, rng):
        S = rng.uniform(self._ss[0], self._ss[-1], n)
        return np.column_stack([self._t_of_s(S), rng.uniform(-self.H / 2, self.H / 2, n)])

    def probes(self, n):
        length = self._ss[-1] - self._ss[0]
        ns = max(2, int(round(math.sqrt(n * self.H / length))))
        nt = max(2, int(math.ceil(n / ns)))
        S, s = np.meshgrid(np.linspace(self._ss[0], self._ss[-1], nt), np.linspace(-self.H / 2, self.H / 2, ns), indexing="ij")
        return np.column_stack([self._t_of_s(S.ravel()), s.ravel()])


class _Affine:
    def __init__(self, d, extent, ambient_dim):
        self.d = self.k = d
        self.e = extent
        self.volume = extent**d
        self.min_reach = math.sqrt(ambient_dim)
        self.extent = 0.5 * extent * math.sqrt(d)

    def point(self, P):
        return P

    def project(self, Y):
        return np.clip(Y, -self.e / 2, self.e / 2)

    def tangent(self, P):
        return np.broadcast_to(np.eye(self.d), (P.shape[0], self.d, self.d)).copy()

    def normal(self, P):
        return np.zeros((P.shape[0], self.d, 0))

    def reach(self, P):
        return np.full(P.shape[0], self.min_reach)

    def geodesic(self, P1, P2):
        return np.linalg.norm(P1 - P2, axis=1)

    def sample(self, n, rng):
        return rng.uniform(-self.e / 2, self.e / 2, size=(n, self.d))

    def probes(self, n):
        m = max(2, int(math.ceil(n ** (1 / self.d))))
        axes = [np.linspace(-self.e / 2, self.e / 2, m)] * self.d
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)


# --- manifold specification -------------------------------------------------


@dataclass(frozen=True, eq=False)
class ManifoldSpec:
    """A catalog manifold with a rigid embedding into R^D."""

    kind: str
    ambient_dim: int
    params: dict
    rotation: np.ndarray = field(repr=False)
    offset: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        shape = _make_shape(self.kind, self.params, self.ambient_dim)
        if shape.d >= self.ambient_dim or shape.k > self.ambient_dim:
            raise ValueError(f"{self.kind} with d={shape.d}, k={shape.k} does not fit ambient dimension {self.ambient_dim}")
        Q = np.asarray(self.rotation, dtype=np.float64)
        if Q.shape != (self.ambient_dim, self.ambient_dim) or not np.allclose(Q.T @ Q, np.eye(self.ambient_dim), atol=1e-10):
            raise ValueError("rotation must be an orthogonal D x D matrix")
        object.__setattr__(self, "rotation", Q)
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=np.float64).reshape(self.ambient_dim))
        object.__setattr__(self, "_shape", shape)

    @property
    def intrinsic_dim(self) -> int:
        return self._shape.d

    @property
    def shape(self):
        return self._shape

    @property
    def frame(self) -> np.ndarray:
        """Columns of Q spanning the canonical coordinate space."""
        return self.rotation[:, : self._shape.k]

    @property
    def complement(self) -> np.ndarray:
        return self.rotation[:, self._shape.k :]

    def to_canonical(self, X):
        return (np.atleast_2d(X) - self.offset) @ self.frame

    def embed(self, Y):
        return self.offset + np.atleast_2d(Y) @ self.frame.T

    def points(self, P):
        """Ambient points for manifold parameters ``P``."""
        return self.embed(self._shape.point(np.atleast_2d(P)))

    def params_of(self, X):
        """Parameters of the nearest manifold point for each row of ``X``."""
        return self._shape.project(self.to_canonical(X))


def _make_shape(kind, params, D):
    p = dict(params)
    if kind == "circle":
        return _Circle(_pos(p.get("radius", 1.0)))
    if kind == "sphere":
        return _Sphere(int(p.get("d", 2)), _pos(p.get("radius", 1.0)))
    if kind == "torus":
        return _Torus(_pos(p["R"]), _pos(p["r"]))
    if kind == "swiss_roll":
        return _SwissRoll(_pos(p.get("pitch", 0.05)), _pos(p.get("t_min", 1.5 * math.pi)), _pos(p.get("t_max", 4.5 * math.pi)), _pos(p.get("height", 1.0)))
    return _Affine(int(p.get("d", 1)), _pos(p.get("extent", 1.0)), D)


def _pos(v):
    v = float(v)
    if not v > 0:
        raise ValueError(f"shape parameters must be positive, got {v}")
    return v


def make_manifold(kind: str, ambient_dim: int, seed: int | None = None, offset=None, **params) -> ManifoldSpec:
    """Build a manifold; ``seed`` draws a random rotation, otherwise Q = I.

    The offset defaults to the origin; use ``offset=0.5`` to center the
    manifold in the unit cube.
    """
    D = int(ambient_dim)
    Q = np.eye(D) if seed is None else special_ortho_group.rvs(D, random_state=seed)
    if offset is None:
        offset = np.zeros(D)
    elif np.isscalar(offset):
        offset = np.full(D, float(offset))
    return ManifoldSpec(kind, D, dict(params), Q, offset)


def circle(radius=1.0, ambient_dim=2, **kw):
    return make_manifold("circle", ambient_dim, radius=radius, **kw)


def sphere(d=2, radius=1.0, ambient_dim=3, **kw):
    return make_manifold("sphere", ambient_dim, d=d, radius=radius, **kw)


def torus(R=3.0, r=1.0, ambient_dim=3, **kw):
    return make_manifold("torus", ambient_dim, R=R, r=r, **kw)


def swiss_roll(pitch=0.05, t_min=1.5 * math.pi, t_max=4.5 * math.pi, height=1.0, ambient_dim=3, **kw):
    return make_manifold("swiss_roll", ambient_dim, pitch=pitch, t_min=t_min, t_max=t_max, height=height, **kw)


def affine_subspace(d=1, extent=1.0, ambient_dim=2, **kw):
    return make_manifold("affine_subspace", ambient_dim, d=d, extent=extent, **kw)


# --- pointwise oracles --------------------------------------------------------


def _batch(x):
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x, x.ndim == 1


def project(M: ManifoldSpec, x) -> np.ndarray:
    """Nearest point on ``M`` (single point or batch)."""
    X, single = _batch(x)
    out = M.points(M.params_of(X))
    return out[0] if single else out


def _on_manifold(M, X, tol=1e-8):
    P = M.params_of(X)
    err = np.linalg.norm(M.points(P) - X, axis=1)
    if np.any(err > tol * max(1.0, M.shape.extent)):
        raise ValueError(f"point off the manifold by {err.max():.3e}")
    return P


def tangent_basis(M: ManifoldSpec, v) -> np.ndarray:
    """Orthonormal D x d tangent basis at ``v`` (or a stack for a batch)."""
    V, single = _batch(v)
    P = _on_manifold(M, V)
    A = np.einsum("ij,njk->nik", M.frame, M.shape.tangent(P))
    return A[0] if single else A


def tangent_basis_params(M: ManifoldSpec, P) -> np.ndarray:
    return np.einsum("ij,njk->nik", M.frame, M.shape.tangent(np.atleast_2d(P)))


def normal_basis_params(M: ManifoldSpec, P) -> np.ndarray:
    """Orthonormal basis of the normal space, shape (n, D, D - d)."""
    P = np.atleast_2d(P)
    inner = np.einsum("ij,njk->nik", M.frame, M.shape.normal(P))
    outer = np.broadcast_to(M.complement, (P.shape[0],) + M.complement.shape)
    return np.concatenate([inner, outer], axis=2)


def geodesic_dist(M: ManifoldSpec, v, w):
    """Geodesic distance between points on ``M`` (pairwise over rows)."""
    V, single = _batch(v)
    W, _ = _batch(w)
    out = M.shape.geodesic(_on_manifold(M, V), _on_manifold(M, W))
    return float(out[0]) if single and out.size == 1 else out


def local_reach(M: ManifoldSpec, v):
    V, single = _batch(v)
    out = M.shape.reach(_on_manifold(M, V))
    return float(out[0]) if single else out


def global_reach(M: ManifoldSpec) -> float:
    return float(M.shape.min_reach)


def volume(M: ManifoldSpec) -> float:
    return float(M.shape.volume)


def distance_to(M: ManifoldSpec, x):
    X, single = _batch(x)
    out = np.linalg.norm(X - project(M, X), axis=1)
    return float(out[0]) if single else out


def in_tube(M: ManifoldSpec, x, q: float) -> np.ndarray:
    """Membership in the q-tube ``{v + u : u normal at v, |u| < q tau(v)}``."""
    X, _ = _batch(x)
    try:
        P = M.params_of(X)
    except ProjectionAmbiguityError:
        return np.array([bool(in_tube(M, row, q)[0]) if _unambiguous(M, row) else False for row in X])
    U = X - M.points(P)
    dist = np.linalg.norm(U, axis=1)
    # at a patch boundary the offset need not be normal; such points are outside
    tang = np.linalg.norm(np.einsum("nd,ndk->nk", U, tangent_basis_params(M, P)), axis=1)
    return (dist < q * M.shape.reach(P)) & (tang <= 1e-9 * np.maximum(1.0, dist))


def _unambiguous(M, row):
    try:
        M.params_of(row[None])
    except ProjectionAmbiguityError:
        return False
    return True


def fits_in_cube(M: ManifoldSpec, q: float, n: int = 20000, seed: int = 0) -> bool:
    """Whether the q-tube of ``M`` lies inside [0, 1]^D."""
    reach_max = max(M.shape.min_reach, float(np.max(M.shape.reach(M.shape.sample(2000, np.random.default_rng(seed))))))
    radius = M.shape.extent + q * reach_max
    if np.all(M.offset - radius >= 0) and np.all(M.offset + radius <= 1):
        return True
    # sharper test: extreme tube points along the coordinate axes
    rng = np.random.default_rng(seed)
    P = np.vstack([M.shape.probes(n), M.shape.sample(n, rng)])
    V = M.points(P)
    N = normal_basis_params(M, P)
    tau = M.shape.reach(P)
    # the tube at v spans v + N c, |c| < q tau; its extreme along e_j is q tau |N_j|
    spread = q * tau[:, None] * np.linalg.norm(N, axis=2)
    return bool(np.all(V - spread >= 0) and np.all(V + spread <= 1))


# --- sampling -------------------------------------------------------------------


class TubeSample(NamedTuple):
    x: np.ndarray
    v: np.ndarray
    params: np.ndarray


def tube_sample(M: ManifoldSpec, q: float, n: int, seed: int = 0) -> TubeSample:
    """``n`` points ``x = v + u`` with v area-uniform on M and u uniform in the
    normal ball of radius ``q tau(v)`` (strictly smaller)."""
    if not 0 <= q < 1:
        raise ValueError(f"q must lie in [0, 1), got {q}")
    rng = np.random.default_rng(seed)
    P = M.shape.sample(n, rng)
    V = M.points(P)
    codim = M.ambient_dim - M.intrinsic_dim
    N = normal_basis_params(M, P)
    g = rng.standard_normal((n, codim))
    g /= np.linalg.norm(g, axis=1)[:, None]
    radius = q * M.shape.reach(P) * rng.random(n) ** (1.0 / codim)
    U = np.einsum("ndk,nk->nd", N, g * radius[:, None])
    return TubeSample(V + U, V, P)


# --- separated nets ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SeparatedNet:
    centers: np.ndarray
    params: np.ndarray
    delta: float
    covering_radius: float

    def __len__(self):
        return self.centers.shape[0]


def _greedy(shape, Y, P, delta, cY, cP, block=2048):
    """Sequential sweep: accept a candidate iff it is > delta from all accepted."""
    cY, cP = list(cY), list(cP)
    for lo in range(0, Y.shape[0], block):
        by, bp = Y[lo : lo + block], P[lo : lo + block]
        alive = np.ones(by.shape[0], dtype=bool)
        if cY:
            tree = cKDTree(np.asarray(cY))
            hits = tree.query_ball_point(by, r=delta)
            ii = np.repeat(np.arange(by.shape[0]), [len(h) for h in hits])
            jj = np.fromiter((j for h in hits for j in h), dtype=np.int64, count=ii.size)
            if ii.size:
                dist = shape.geodesic(bp[ii], np.asarray(cP)[jj])
                alive[np.unique(ii[dist <= delta])] = False
        idx = np.flatnonzero(alive)
        while idx.size:
            i = idx[0]
            cY.append(by[i])
            cP.append(bp[i])
            rest = idx[1:]
            if rest.size == 0:
                break
            near = np.linalg.norm(by[rest] - by[i], axis=1) <= delta
            if np.any(near):
                gd = shape.geodesic(np.broadcast_to(bp[i], (int(near.sum()), bp.shape[1])).copy(), bp[rest[near]])
                drop = np.zeros(rest.size, dtype=bool)
                drop[np.flatnonzero(near)[gd <= delta]] = True
                rest = rest[~drop]
            idx = rest
    return np.asarray(cY).reshape(-1, shape.k), np.asarray(cP).reshape(len(cP), -1)


def _nearest_geodesic(shape, cY, cP, Y, P, delta):
    """Geodesic distance from each probe to its nearest center (inf if none within 2 delta)."""
    tree = cKDTree(cY)
    hits = tree.query_ball_point(Y, r=2 * delta)
    ii = np.repeat(np.arange(Y.shape[0]), [len(h) for h in hits])
    jj = np.fromiter((j for h in hits for j in h), dtype=np.int64, count=ii.size)
    best = np.full(Y.shape[0], np.inf)
    if ii.size:
        dist = shape.geodesic(P[ii], cP[jj])
        np.minimum.at(best, ii, dist)
    return best


def separated_net(M: ManifoldSpec, delta: float, probe_density: int | None = None, seed: int = 0, max_rounds: int = 3) -> SeparatedNet:
    """Maximal delta-separated set (geodesic metric) by a greedy sweep.

    Probes are visited in the kind's deterministic order and accepted when
    more than ``delta`` away from every accepted center.  Maximality is then
    certified on fresh random probes; uncovered probes are inserted (they are
    separated by construction) for up to ``max_rounds`` rounds before a
    :class:`CertificationError` is raised.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    shape = M.shape
    expected = max(1, int(math.ceil(shape.volume / delta**shape.d)))
    n_probe = int(probe_density) if probe_density else 100 * expected
    P = shape.probes(n_probe)
    cY, cP = _greedy(shape, shape.point(P), P, delta, [], [])
    rng = np.random.default_rng(seed)
    for _ in range(max_rounds + 1):
        Pc = shape.sample(n_probe, rng)
        Yc = shape.point(Pc)
        near = _nearest_geodesic(shape, cY, cP, Yc, Pc, delta)
        bad = near > delta
        if not np.any(bad):
            return SeparatedNet(M.embed(cY), cP, float(delta), float(near.max()))
        cY, cP = _greedy(shape, Yc[bad], Pc[bad], delta, cY, cP)
    raise CertificationError(f"covering radius exceeds delta={delta} after {max_rounds} refinement rounds; raise probe_density")


def min_pairwise_geodesic(M: ManifoldSpec, net: SeparatedNet) -> float:
    """Smallest geodesic distance between distinct centers (inf for one center)."""
    if len(net) < 2:
        return math.inf
    Y = M.to_canonical(net.centers)
    tree = cKDTree(Y)
    radius = net.delta * 1.5
    pairs = tree.query_pairs(r=radius, output_type="ndarray")
    if pairs.size == 0:
        return radius
    return float(np.min(M.shape.geodesic(net.params[pairs[:, 0]], net.params[pairs[:, 1]])))


def packing_bound(M: ManifoldSpec, delta: float, strict: bool = True) -> float:
    """``3^d Vol(M) d^(d/2) / delta^d``; requires delta < tau_M / 2 when strict."""
    if not delta > 0 or (strict and not delta < M.shape.min_reach / 2):
        raise ValueError(f"delta must lie in (0, tau/2) = (0, {M.shape.min_reach / 2:g}), got {delta}")
    d = M.intrinsic_dim
    return 3**d * M.shape.volume * d ** (d / 2) / delta**d


def manifold_from_config(cfg: dict) -> ManifoldSpec:
    """Build a manifold from a config mapping ``{kind, ambient_dim, seed, offset, ...}``."""
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    D = int(cfg.pop("ambient_dim"))
    seed = cfg.pop("seed", None)
    offset = cfg.pop("offset", 0.5)
    return make_manifold(kind, D, seed=seed, offset=offset, **cfg)
