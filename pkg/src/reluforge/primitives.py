"""Primitive networks: exact building blocks and epsilon-accurate approximants.

Exact: :func:`abs_net`, :func:`l1_norm_net`, :func:`min_net`, :func:`sign_net`
(outside its ramp), :func:`clamp_net`, :func:`pwl_net`.

Approximate: :func:`square_net`, :func:`sq_norm_net`, :func:`mult_net`,
:func:`polynomial_net`, :func:`reciprocal_net`, :func:`reciprocal_pwl_net`,
:func:`l1_normalize_net`, :func:`holder_net`.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
import scipy.sparse as sp

from reluforge.calculus import (
    concatenate,
    parallelize,
    postcompose_affine,
    precompose_affine,
    scale_output,
    select_inputs,
    tile,
)
from reluforge.network import LINEAR, RELU, Layer, ReluNetwork, affine_net, identity_net


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value}")


def _net(*layers, input_dim=None):
    """Build a network from (weights, bias) pairs; the last pair is linear."""
    out = []
    for k, (w, b) in enumerate(layers):
        out.append(Layer(np.atleast_2d(np.asarray(w, dtype=np.float64)), b, LINEAR if k == len(layers) - 1 else RELU))
    return ReluNetwork(out, input_dim)


# --- exact primitives ------------------------------------------------------


def abs_net(R: float = 1.0) -> ReluNetwork:
    """``t -> |t| / R``."""
    _positive("R", R)
    return _net(([[1.0], [-1.0]], [0.0, 0.0]), ([[1.0 / R, 1.0 / R]], [0.0]))


def l1_norm_net(D: int) -> ReluNetwork:
    """``x -> sum_i |x_i|``."""
    if D < 1:
        raise ValueError("D must be >= 1")
    eye = sp.identity(D, format="csr")
    first = Layer(sp.vstack([eye, -eye]), np.zeros(2 * D), RELU)
    second = Layer(np.ones((1, 2 * D)), [0.0], LINEAR)
    return ReluNetwork([first, second], D)


def _min_pair() -> ReluNetwork:
    # min(x, y) = relu(x) - relu(-x) - relu(x - y)
    return _net(([[1.0, 0.0], [-1.0, 0.0], [1.0, -1.0]], [0.0, 0.0, 0.0]), ([[1.0, -1.0, -1.0]], [0.0]))


def min_net(K: int) -> ReluNetwork:
    """Exact minimum of ``K >= 2`` inputs by a binary tournament.

    Odd rounds pair the last entry with itself.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    pair = _min_pair()
    net = None
    n = K
    while n > 1:
        half = (n + 1) // 2
        order = list(range(n)) + ([n - 1] if n % 2 else [])
        level = select_inputs(tile(pair, half), order, n)
        net = level if net is None else concatenate(level, net)
        n = half
    return net


def sign_net(eps: float) -> ReluNetwork:
    """Ramp approximation of sign: exact outside ``[-eps, eps]``, ``x/eps`` inside."""
    _positive("eps", eps)
    return _net(([[1.0 / eps], [1.0 / eps]], [1.0, -1.0]), ([[1.0, -1.0]], [-1.0]))


def clamp_net() -> ReluNetwork:
    """``t -> min(1, t) = 1 - relu(1 - t)``."""
    return _net(([[-1.0]], [1.0]), ([[-1.0]], [1.0]))


def pwl_net(knots, values, max_weight: float | None = None) -> ReluNetwork:
    """Continuous piecewise-linear interpolant through ``(knots, values)``.

    Represents ``f(t) = y_0 + s_0 relu(t - t_0) + sum_k (s_k - s_{k-1}) relu(t - t_k)``,
    constant left of the first knot and linearly extended right of the last.
    With ``max_weight``, output coefficients larger than the cap are split
    across duplicated neurons.
    """
    t = np.asarray(knots, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    if t.ndim != 1 or t.shape != y.shape or t.size < 1:
        raise ValueError("knots and values must be equal-length 1-D arrays")
    if np.any(np.diff(t) <= 0):
        raise ValueError("knots must be strictly increasing")
    if t.size == 1:
        slopes = np.zeros(1)
    else:
        s = np.diff(y) / np.diff(t)
        slopes = np.concatenate([[s[0]], np.diff(s)])
        slopes = np.concatenate([slopes, [0.0]])
    # one neuron per knot with a nonzero change of slope
    keep = slopes != 0.0
    pos, coef = t[keep], slopes[keep]
    if max_weight is not None:
        reps = np.maximum(1, np.ceil(np.abs(coef) / max_weight - 1e-12)).astype(np.int64)
        pos = np.repeat(pos, reps)
        coef = np.repeat(coef / reps, reps)
    if pos.size == 0:
        pos, coef = np.zeros(1), np.zeros(1)
    first = Layer(np.ones((pos.size, 1)), -pos, RELU)
    second = Layer(coef[None, :], [y[0]], LINEAR)
    return ReluNetwork([first, second], 1)


# --- square and its relatives ---------------------------------------------


def square_stages(eps: float) -> int:
    """Number of sawtooth stages m with 2^(-2m-2) <= eps."""
    return int(math.ceil(0.5 * math.log2(1.0 / eps))) + 1


def square_net(eps: float) -> ReluNetwork:
    """Approximation of ``t -> t^2`` on ``[0, 1]`` with sup error <= eps.

    Returns the piecewise-linear interpolant of ``t^2`` at the dyadic points
    ``k / 2^m``, computed as ``t - sum_s g_s(t) / 4^s`` where ``g_s`` is the
    s-fold hat function.  Each stage carries ``g_s / 4^s`` directly, so every
    weight and bias has magnitude at most 1 and the width is 3.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    m = square_stages(eps)
    # hidden units per stage: (p, q, a) with p = g_{s-1}/4^{s-1} (p = t at s = 1),
    # q = relu(g_{s-1} - 1/2)/4^{s-1}, a = partial interpolant
    layers = [Layer([[1.0], [1.0], [1.0]], [0.0, -0.5, 0.0], RELU)]
    step = np.array([[0.5, -1.0, 0.0], [0.5, -1.0, 0.0], [-0.5, 1.0, 1.0]])
    for s in range(1, m):
        layers.append(Layer(step, [0.0, -0.5 * 4.0**-s, 0.0], RELU))
    layers.append(Layer([[-0.5, 1.0, 1.0]], [0.0], LINEAR))
    return ReluNetwork(layers, 1)


def _abs_square(eps: float, R: float = 1.0) -> ReluNetwork:
    """``t -> Gamma(|t| / R)`` with Gamma the square approximant at ``eps``."""
    return concatenate(square_net(eps), abs_net(R))


def sq_norm_net(D: int, R: float, eps: float) -> ReluNetwork:
    """``x -> ||x||^2`` on the ball of radius R with sup error <= eps.

    Sum over coordinates of ``R^2 Gamma(|x_i| / R)`` with Gamma at
    accuracy ``eps / (R^2 D)``.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    _positive("R", R)
    _positive("eps", eps)
    inner = min(eps / (R * R * D), 0.5)
    net = tile(_abs_square(inner, R), D)
    return postcompose_affine(net, np.full((1, D), R * R))


def _mult_scalar(a: float, eps: float) -> ReluNetwork:
    """``(x, y) -> x y`` for ``|x|, |y| <= a`` from two squares.

    Uses ``xy = a^2 (((x+y)/2a)^2 - ((x-y)/2a)^2)``; with both squares read
    through the same absolute value the output is exactly 0 when x or y is 0.
    """
    gamma = min(eps / (2 * a * a), 0.5)
    net = tile(_abs_square(gamma), 2)
    net = precompose_affine(net, np.array([[1.0, 1.0], [1.0, -1.0]]) / (2 * a))
    return postcompose_affine(net, [[a * a, -a * a]])


def mult_net(D: int, a: float, eps: float) -> ReluNetwork:
    """``(x, y) -> x * y`` for ``x`` in R^D, scalar ``y``, sup error <= eps.

    Valid on ``||x||_inf <= a``, ``|y| <= a``.  Input layout is
    ``(x_1, ..., x_D, y)``.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    _positive("a", a)
    if not 0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 1/2), got {eps}")
    return _mult_any(D, a, eps)


def _mult_any(D, a, eps):
    scalar = _mult_scalar(a, eps)
    order = np.column_stack([np.arange(D), np.full(D, D)]).ravel()
    return select_inputs(tile(scalar, D), order, D + 1)


def polynomial_net(coeffs, eps: float, z_max: float = 1.0) -> ReluNetwork:
    """``z -> sum_i c_i z^i`` on ``[0, z_max]`` (``z_max <= 1``) with sup error <= eps.

    Horner's scheme on coefficients normalized by the largest Horner partial
    sum bound ``A``, so every intermediate value stays in ``[-1, 1]`` up to
    the accumulated error.  Each multiplication is budgeted ``eps/(2 r A)``
    for ``r`` multiplications (``|z| <= 1`` means earlier errors are not
    amplified), and the result is rescaled by ``A`` through identity layers
    with weights at most 8.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=np.float64), "b")
    if np.asarray(coeffs).size == 0:
        raise ValueError("coefficient list must be nonempty")
    _positive("eps", eps)
    if not 0 < z_max <= 1:
        raise ValueError("z_max must lie in (0, 1]")
    if c.size <= 2:
        c = np.pad(c, (0, 2 - c.size))
        return affine_net([[c[1]]], [c[0]])
    r = c.size - 1
    A = max(sum(abs(c[j]) * z_max ** (j - k) for j in range(k, r + 1)) for k in range(r + 1))
    ch = c / A
    n_mult = r - 1
    eps_stage = min(eps / (2 * n_mult * A), 0.25)
    bound = 1.0 + n_mult * eps_stage
    prod = select_inputs(_mult_any(1, bound, eps_stage), [1, 0], 2)
    keep_z = select_inputs(identity_net(1), [0], 2)
    net = affine_net([[1.0], [ch[r]]], [0.0, ch[r - 1]])
    for k in range(r - 2, -1, -1):
        if k == 0:
            stage = postcompose_affine(prod, [[1.0]], [ch[0]])
        else:
            stage = postcompose_affine(parallelize([keep_z, prod]), np.eye(2), [0.0, ch[k]])
        net = concatenate(stage, net)
    return scale_output(net, A, max_weight=8.0)


def reciprocal_terms(a: float, eps: float) -> int:
    """Truncation index r of the geometric series for 1/t on [1/a, a]."""
    return int(math.ceil(a * a * math.log(2 * a / eps)))


def reciprocal_net(a: float, eps: float) -> ReluNetwork:
    """``t -> 1/t`` on ``[1/a, a]`` with sup error <= eps.

    Uses ``1/t = c sum_{i>=0} (1 - c t)^i`` with ``c = 1/a``, truncated after
    ``r`` terms so the tail is at most eps/2, and evaluates the polynomial in
    ``z = 1 - c t`` to accuracy eps/2.
    """
    if not a >= 1:
        raise ValueError(f"a must be >= 1, got {a}")
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if a == 1.0:
        # the domain is the single point t = 1
        return affine_net([[0.0]], [1.0])
    c = 1.0 / a
    r = reciprocal_terms(a, eps)
    poly = polynomial_net(np.full(r + 1, c), eps / 2, z_max=1.0 - c * c)
    return precompose_affine(poly, [[-c]], [1.0])


def reciprocal_knots(a: float, eps: float) -> np.ndarray:
    """Knots on [1/a, a] for which linear interpolation of 1/t errs by <= eps.

    On ``[t, t + h]`` the interpolation error is at most ``h^2 / (4 t^3)``.
    """
    knots = [1.0 / a]
    while knots[-1] < a:
        t = knots[-1]
        knots.append(t + 2.0 * math.sqrt(eps * t**3))
    knots[-1] = max(knots[-1], a)
    return np.array(knots)


def reciprocal_pwl_net(a: float, eps: float) -> ReluNetwork:
    """Depth-2 ``t -> 1/t`` on ``[1/a, a]`` by piecewise-linear interpolation."""
    if not a >= 1:
        raise ValueError(f"a must be >= 1, got {a}")
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    knots = reciprocal_knots(a, eps)
    return pwl_net(knots, 1.0 / knots)


def l1_normalize_net(D: int, a: float, eps: float, reciprocal: str = "series", norm: str = "inf") -> ReluNetwork:
    """``x -> x / ||x||_1`` on the annulus ``1/a <= ||x||_1 <= a``.

    The error ``eps`` is measured in the max norm (``norm="inf"``) or the
    l1 norm (``norm="l1"``).  The reciprocal of the l1 norm is taken at
    accuracy ``eps/(2a)`` and multiplied back onto ``x``.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    if not a >= 1:
        raise ValueError(f"a must be >= 1, got {a}")
    if not 0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 1/2), got {eps}")
    if norm not in ("inf", "l1"):
        raise ValueError(f"unknown norm {norm!r}")
    eps_recip = eps / (2 * a)
    if reciprocal == "series":
        gamma = reciprocal_net(a, eps_recip)
    elif reciprocal == "pwl":
        gamma = reciprocal_pwl_net(a, eps_recip)
    else:
        raise ValueError(f"unknown reciprocal {reciprocal!r}")
    eps_mult = eps / 2 if norm == "inf" else eps / (2 * D)
    omega = _mult_any(D, 2 * a, eps_mult)
    inner = parallelize([identity_net(D), concatenate(gamma, l1_norm_net(D))])
    return concatenate(omega, inner)


# --- Hoelder functions ------------------------------------------------------


def holder_grid(alpha: float, L_const: float, eps: float) -> int:
    """Number of uniform intervals n with L (1/n)^alpha <= eps/2."""
    h = (eps / (2 * L_const)) ** (1.0 / alpha)
    return max(1, int(math.ceil(1.0 / h - 1e-9)))


def holder_net(g: Callable, alpha: float, L_const: float, eps: float, max_weight: float | None = None) -> ReluNetwork:
    """Approximation of an (alpha, L)-Hoelder ``g: [0,1] -> [0,1]`` with sup error <= eps.

    Linear interpolation on a uniform grid of spacing ``(eps/(2L))^(1/alpha)``.
    ``g`` is called once on the vector of grid points.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    _positive("L_const", L_const)
    _positive("eps", eps)
    n = holder_grid(alpha, L_const, eps)
    knots = np.linspace(0.0, 1.0, n + 1)
    values = np.asarray(g(knots), dtype=np.float64).reshape(-1)
    if values.shape != knots.shape:
        values = np.array([float(g(t)) for t in knots])
    return pwl_net(knots, values, max_weight=max_weight)
