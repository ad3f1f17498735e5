"""Partition of unity on a tube around a manifold and networks built from it.

For centers ``z_i`` of a maximal delta-separated set the bump functions are

    eta~_i(x) = relu(1 - (|x - z_i| / (p tau_i))^2 - (|A_i^T (x - z_i)| / (h delta))^2)
    eta_i(x)  = eta~_i(x) / |eta~(x)|_1

with ``tau_i`` the local reach and ``A_i`` a tangent basis at ``z_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from reluforge import geometry as geo
from reluforge.calculus import concatenate, postcompose_affine, precompose_affine, relu_output, tile
from reluforge.network import ReluNetwork, affine_net, evaluate
from reluforge.primitives import _abs_square, l1_normalize_net, sign_net

# delta must stay below DELTA_FACTOR * (1 - q)^2 * tau for the localization guarantee
DELTA_FACTOR = 1.0 / 288


class SpecViolation(ValueError):
    """A partition-of-unity precondition does not hold."""


def bandwidths(q: float) -> tuple:
    """Bandwidths ``p = (1 + q)/2`` and ``h = 6 / (1 - q/p)``."""
    if not 0 <= q < 1:
        raise ValueError(f"q must lie in [0, 1), got {q}")
    p = 0.5 * (1 + q)
    return p, 6.0 / (1 - q / p)


def max_delta(M: geo.ManifoldSpec, q: float) -> float:
    return DELTA_FACTOR * (1 - q) ** 2 * geo.global_reach(M)


def localization_radius(q: float, delta: float) -> float:
    """Geodesic radius ``72 delta / (1 - q)^2`` containing every active center."""
    return 72.0 * delta / (1 - q) ** 2


@dataclass(frozen=True, eq=False)
class PouSpec:
    manifold: geo.ManifoldSpec
    net: geo.SeparatedNet
    q: float
    p: float
    h: float
    reach: np.ndarray
    tangents: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return self.net.centers

    @property
    def delta(self) -> float:
        return self.net.delta

    def __len__(self):
        return len(self.net)


def make_pou(M: geo.ManifoldSpec, q: float, delta: float, probe_density: int | None = None, seed: int = 0, strict: bool = True) -> PouSpec:
    """Centers, bandwidths, reaches and tangent bases for the bump functions."""
    p, h = bandwidths(q)
    if strict and not delta < max_delta(M, q):
        raise SpecViolation(f"delta={delta:g} must be below (1-q)^2 tau/288 = {max_delta(M, q):g}")
    net = geo.separated_net(M, delta, probe_density=probe_density, seed=seed)
    reach = M.shape.reach(net.params)
    tangents = geo.tangent_basis_params(M, net.params)
    return PouSpec(M, net, float(q), p, h, reach, tangents)


def _pre_activation(spec: PouSpec, X: np.ndarray) -> np.ndarray:
    """``1 - (|x-z_i|/(p tau_i))^2 - (|A_i^T(x-z_i)|/(h delta))^2`` for all pairs, dense."""
    Z = spec.centers
    K, D, d = spec.tangents.shape
    sq = np.sum(X * X, axis=1)[:, None] - 2 * X @ Z.T + np.sum(Z * Z, axis=1)[None, :]
    sq = np.maximum(sq, 0.0)
    Aflat = spec.tangents.transpose(1, 0, 2).reshape(D, K * d)
    zA = np.einsum("kD,kDj->kj", Z, spec.tangents).reshape(K * d)
    tan = (X @ Aflat - zA).reshape(X.shape[0], K, d)
    tan_sq = np.sum(tan * tan, axis=2)
    return 1.0 - sq / (spec.p * spec.reach[None, :]) ** 2 - tan_sq / (spec.h * spec.delta) ** 2


def eta_reference(spec: PouSpec, x, chunk: int = 512):
    """Exact bump values ``eta~`` and normalized ``eta`` as sparse (n, K) matrices."""
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    blocks = []
    for lo in range(0, X.shape[0], chunk):
        blocks.append(sp.csr_matrix(np.maximum(_pre_activation(spec, X[lo : lo + chunk]), 0.0)))
    tilde = sp.vstack(blocks, format="csr")
    norms = np.asarray(tilde.sum(axis=1)).ravel()
    if np.any(norms <= 0):
        raise SpecViolation(f"{int(np.sum(norms <= 0))} points have eta~ = 0; delta too large or points outside the tube")
    eta = sp.diags(1.0 / norms) @ tilde
    return tilde, eta.tocsr()


def eta_accuracy(spec: PouSpec, eps: float) -> float:
    """Accuracy of the scalar square units inside :func:`eta_net`.

    Each bump argument is off by at most ``gamma * D * max_i(D/(p tau_i)^2 + d/(h delta)^2)``;
    with K centers and ``|eta~|_1 >= (1-q)/8`` the normalized l1 error of the
    bump stage stays below eps/2 when that offset is ``(1-q) eps / (32 K)``.
    """
    K, D, d = spec.tangents.shape
    per_bump = (1 - spec.q) * eps / (32 * K)
    weight = D * (D / (spec.p * spec.reach.min()) ** 2 + d / (spec.h * spec.delta) ** 2)
    return per_bump / weight


def bump_net(spec: PouSpec, eps: float) -> ReluNetwork:
    """Network ``x -> eta~(x)`` (unnormalized bumps) to the accuracy used by :func:`eta_net`."""
    Z = spec.centers
    K, D, d = spec.tangents.shape
    gamma = min(eta_accuracy(spec, eps), 0.5)
    m = D + d
    # per center: coordinates (x - z_i)/sqrt(D) followed by A_i^T (x - z_i)/sqrt(D)
    rows_id = (np.arange(K)[:, None] * m + np.arange(D)[None, :]).ravel()
    cols_id = np.tile(np.arange(D), K)
    vals_id = np.full(K * D, 1.0)
    At = spec.tangents.transpose(0, 2, 1)  # (K, d, D)
    rows_t = (np.arange(K)[:, None, None] * m + D + np.arange(d)[None, :, None]) + np.zeros((1, 1, D), dtype=np.int64)
    cols_t = np.broadcast_to(np.arange(D)[None, None, :], (K, d, D))
    rows = np.concatenate([rows_id, rows_t.ravel()])
    cols = np.concatenate([cols_id, cols_t.ravel()])
    vals = np.concatenate([vals_id, At.ravel()])
    coords = sp.csr_matrix((vals / math.sqrt(D), (rows, cols)), shape=(K * m, D))
    shift = -np.concatenate([Z, np.einsum("kdD,kD->kd", At, Z)], axis=1).ravel() / math.sqrt(D)
    squares = precompose_affine(tile(_abs_square(gamma), K * m), coords, shift)
    # combine: 1 - D * sum_D / (p tau_i)^2 - D * sum_d / (h delta)^2
    w_pos = np.repeat(-D / (spec.p * spec.reach) ** 2, D)
    w_tan = np.repeat(np.full(K, -D / (spec.h * spec.delta) ** 2), d)
    c_rows = np.concatenate([np.repeat(np.arange(K), D), np.repeat(np.arange(K), d)])
    c_cols = np.concatenate([rows_id, (np.arange(K)[:, None] * m + D + np.arange(d)[None, :]).ravel()])
    comb = sp.csr_matrix((np.concatenate([w_pos, w_tan]), (c_rows, c_cols)), shape=(K, K * m))
    return relu_output(postcompose_affine(squares, comb, np.ones(K)))


def fit_annulus(spec: PouSpec, n: int = 4000, seed: int = 0, X=None) -> float:
    """Annulus parameter ``a = 2 max{8/(1-q), max |eta~|_1}`` fitted on tube samples."""
    if X is None:
        X = geo.tube_sample(spec.manifold, spec.q, n, seed).x
    tilde, _ = eta_reference(spec, X)
    norms = np.asarray(tilde.sum(axis=1)).ravel()
    a = 2.0 * max(8.0 / (1 - spec.q), float(norms.max()))
    if norms.min() < 1.0 / a:
        raise SpecViolation(f"|eta~|_1 = {norms.min():.3g} falls below the annulus 1/a = {1 / a:.3g}")
    return a


def eta_net(spec: PouSpec, eps: float, annulus: float | None = None, seed: int = 0) -> ReluNetwork:
    """Network approximating ``eta`` with l1 error <= eps on the tube."""
    if not 0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 1/2), got {eps}")
    a = annulus if annulus is not None else fit_annulus(spec, seed=seed)
    K = len(spec)
    normalize = l1_normalize_net(K, a, eps / 2, reciprocal="pwl", norm="l1")
    return concatenate(normalize, bump_net(spec, eps))


@dataclass(frozen=True, eq=False)
class Model1Spec:
    pou: PouSpec
    g_values: np.ndarray
    alpha: float = 1.0
    L_const: float = 1.0

    def __post_init__(self):
        g = np.asarray(self.g_values, dtype=np.float64).reshape(-1)
        if g.shape[0] != len(self.pou):
            raise ValueError(f"{g.shape[0]} g values for {len(self.pou)} centers")
        if np.any(g < 0) or np.any(g > 1):
            raise ValueError("g values must lie in [0, 1]")
        object.__setattr__(self, "g_values", g)


def model1_net(spec: Model1Spec, eps: float, annulus: float | None = None, seed: int = 0) -> ReluNetwork:
    """``x -> <g(Z), eta(x)>`` approximating ``g(pi(x))`` on the tube."""
    eta = eta_net(spec.pou, eps, annulus=annulus, seed=seed)
    return concatenate(affine_net(spec.g_values[None, :]), eta)


def model1_error_bound(spec: Model1Spec, eps: float) -> float:
    """``L (72 delta / (1-q)^2)^alpha + eps`` for g with values in [0, 1]."""
    return spec.L_const * localization_radius(spec.pou.q, spec.pou.delta) ** spec.alpha + eps


def projection_net(M: geo.ManifoldSpec, q: float, eps: float, delta: float | None = None, probe_density: int | None = None, seed: int = 0, strict: bool = True) -> ReluNetwork:
    """``x -> Z eta(x)`` approximating the nearest-point projection on the q-tube."""
    if delta is None:
        delta = min(eps, (1 - q) ** 2 * geo.global_reach(M) / 300)
    pou = make_pou(M, q, delta, probe_density=probe_density, seed=seed, strict=strict)
    eta = eta_net(pou, eps, seed=seed)
    return concatenate(affine_net(pou.centers.T), eta)


def classifier_wrap(prob_net: ReluNetwork, eps: float) -> ReluNetwork:
    """``x -> ramp_{2 eps}(2 prob(x) - 1)``: equals sign(2f - 1) wherever |2f - 1| > 4 eps."""
    if prob_net.output_dim != 1:
        raise ValueError("classifier_wrap needs a scalar-output network")
    return concatenate(sign_net(2 * eps), postcompose_affine(prob_net, [[2.0]], [-1.0]))


def eta_error(spec: PouSpec, net: ReluNetwork, X, jobs: int = 1) -> np.ndarray:
    """Per-sample l1 distance between ``net(x)`` and ``eta(x)``."""
    X = np.atleast_2d(X)
    errs = []
    for lo in range(0, X.shape[0], 1000):
        block = X[lo : lo + 1000]
        _, eta = eta_reference(spec, block)
        errs.append(np.abs(evaluate(net, block, jobs=jobs) - eta.toarray()).sum(axis=1))
    return np.concatenate(errs)
