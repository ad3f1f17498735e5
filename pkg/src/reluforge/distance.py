"""Networks for normalized squared distances to point sets and sums of
Hoelder functions of them.

The normalized squared distance of ``x`` in [0,1]^D to a set C is
``dist(x, C)^2 / D`` and lies in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from reluforge.calculus import concatenate, linear_combine, precompose_affine, tile
from reluforge.network import ReluNetwork, metrics
from reluforge.primitives import clamp_net, holder_net, min_net, sq_norm_net


class PackingCertificateError(ValueError):
    """The point set looks higher-dimensional than declared."""


def normdist(C, x) -> np.ndarray:
    """``min_z |x - z|^2 / D`` for each row of ``x`` (exact, by nearest-neighbour search)."""
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if C.shape[0] == 0:
        raise ValueError("empty point set")
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    dist, _ = cKDTree(C).query(X)
    out = dist**2 / C.shape[1]
    return float(out[0]) if single else out


def greedy_separated(C, radius: float) -> np.ndarray:
    """Indices of a maximal subset of ``C`` with pairwise distances > radius."""
    C = np.atleast_2d(C)
    tree = cKDTree(C)
    free = np.ones(C.shape[0], dtype=bool)
    keep = []
    for i in range(C.shape[0]):
        if free[i]:
            keep.append(i)
            free[tree.query_ball_point(C[i], r=radius)] = False
    return np.array(keep, dtype=np.int64)


def packing_dimension(C, deltas) -> float:
    """Slope of log packing number against log(1/delta), radii sqrt(D) * delta."""
    C = np.atleast_2d(C)
    scale = math.sqrt(C.shape[1])
    counts = np.array([greedy_separated(C, scale * dl).size for dl in deltas], dtype=np.float64)
    x = np.log(1.0 / np.asarray(deltas))
    if np.ptp(x) == 0:
        return 0.0
    return float(np.polyfit(x, np.log(counts), 1)[0])


def check_packing(C, d: float, delta0: float, eps: float, tolerance: float = 0.5) -> float:
    """Fit the packing dimension on a delta sweep in ``[eps/3, delta0]``; fail if above d + tolerance."""
    lo = min(eps / 3, delta0)
    deltas = np.geomspace(lo, delta0, 6) if lo < delta0 else np.array([delta0])
    fitted = packing_dimension(C, deltas)
    if fitted > d + tolerance:
        raise PackingCertificateError(f"fitted packing dimension {fitted:.2f} exceeds declared d={d} by more than {tolerance}")
    return fitted


def cover_step(eps: float) -> float:
    """Separation s (in normalized units) with ``2 s + s^2 = 2 eps / 3``.

    Replacing the nearest point of C by a net point within ``sqrt(D) s`` then
    changes the normalized squared distance by at most 2 eps / 3.
    """
    return math.sqrt(1.0 + 2.0 * eps / 3.0) - 1.0


def distance_net(C, d: float, delta0: float, eps: float, return_info: bool = False, certify: bool = True):
    """Network for ``x -> dist(x, C)^2 / D`` on [0,1]^D with sup error <= eps.

    A maximal separated subset Z of C is taken at radius ``sqrt(D) s`` (see
    :func:`cover_step`); each branch computes ``|(x - z_i)/sqrt(D)|^2`` to
    accuracy eps/3 and a tournament takes the minimum.  All weights are
    bounded by 1.
    """
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if C.shape[0] == 0:
        raise ValueError("empty point set")
    if np.any(C < 0) or np.any(C > 1):
        raise ValueError("point set must lie in [0, 1]^D")
    if not 0 < eps < 3 * delta0:
        raise ValueError(f"eps must lie in (0, 3 delta0) = (0, {3 * delta0:g}), got {eps}")
    fitted = check_packing(C, d, delta0, eps) if certify else float("nan")
    D = C.shape[1]
    Z = C[greedy_separated(C, math.sqrt(D) * cover_step(eps))]
    K = Z.shape[0]
    psi = sq_norm_net(D, 1.0, eps / 3)
    branches = precompose_affine(tile(psi, K), np.tile(np.eye(D), (K, 1)) / math.sqrt(D), -Z.ravel() / math.sqrt(D))
    net = branches if K == 1 else concatenate(min_net(K), branches)
    if not return_info:
        return net
    p_psi = metrics(psi).nonzero_params
    info = {
        "centers": Z,
        "K": K,
        "packing_dimension": fitted,
        "P_counted": metrics(net).nonzero_params,
        "P_shared": metrics(net).nonzero_params - (K - 1) * p_psi,
    }
    return net, info


@dataclass(frozen=True, eq=False)
class DistanceModelSpec:
    """``f(x) = sum_l g_l(dist(x, C_l)^2 / D)`` with Hoelder data shared across l."""

    sets: Sequence[np.ndarray]
    g_list: Sequence[Callable]
    alpha: float = 1.0
    L_const: float = 1.0
    d: float = 0.0
    delta0: float = 0.1
    probe: int = field(default=1001, repr=False)

    def __post_init__(self):
        if len(self.sets) != len(self.g_list) or not self.sets:
            raise ValueError("need one g per set and at least one set")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        sets = [np.atleast_2d(np.asarray(C, dtype=np.float64)) for C in self.sets]
        dims = {C.shape[1] for C in sets}
        if len(dims) != 1:
            raise ValueError("all sets must share the ambient dimension")
        for C in sets:
            if np.any(C < 0) or np.any(C > 1):
                raise ValueError("point sets must lie in [0, 1]^D")
        grid = np.linspace(0, 1, self.probe)
        for g in self.g_list:
            vals = np.asarray(g(grid), dtype=np.float64)
            if np.any(vals < 0) or np.any(vals > 1):
                raise ValueError("each g must map [0, 1] into [0, 1]")
        object.__setattr__(self, "sets", sets)

    @property
    def M(self) -> int:
        return len(self.sets)

    @property
    def ambient_dim(self) -> int:
        return self.sets[0].shape[1]

    def __call__(self, x):
        return sum(g(normdist(C, x)) for C, g in zip(self.sets, self.g_list))


def model2_accuracies(spec: DistanceModelSpec, eps: float) -> tuple:
    """Per-summand target ``E = eps^alpha / M``, distance accuracy and Hoelder accuracy.

    With the distance error ``e`` the composition error is ``L e^alpha``, so
    ``e = (E / (2L))^(1/alpha)`` and the Hoelder approximant gets ``E / 2``.
    """
    E = eps**spec.alpha / spec.M
    return E, (E / (2 * spec.L_const)) ** (1.0 / spec.alpha), E / 2


def model2_net(spec: DistanceModelSpec, eps: float) -> ReluNetwork:
    """Network for the distance model with sup error <= eps^alpha on [0,1]^D, weights <= 1."""
    if not eps**spec.alpha < 6 * spec.L_const * spec.delta0:
        raise ValueError("eps^alpha must stay below 6 L delta0")
    _, e_dist, e_g = model2_accuracies(spec, eps)
    parts = []
    for C, g in zip(spec.sets, spec.g_list):
        dist = distance_net(C, spec.d, spec.delta0, e_dist)
        inner = concatenate(clamp_net(), dist)
        parts.append(concatenate(holder_net(g, spec.alpha, spec.L_const, e_g, max_weight=1.0), inner))
    return parts[0] if len(parts) == 1 else linear_combine(parts, [1.0] * len(parts))
