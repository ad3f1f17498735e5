"""Combinators that assemble new ReLU networks from existing ones.

Every combinator here is exact: the result evaluates to the stated
composition or combination of its operands up to floating-point rounding.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from reluforge.network import LINEAR, RELU, Layer, ReluNetwork, validate


def _eye(n):
    return sp.identity(n, format="csr")


def _require_valid(*nets):
    for net in nets:
        problems = validate(net)
        if problems:
            raise ValueError("invalid operand: " + "; ".join(problems))


def _split_last(net: ReluNetwork) -> list:
    """Layers of ``net`` with the last one emitting ``(relu(u), relu(-u))``."""
    last = net.layers[-1]
    split = Layer(sp.vstack([last.weights, -last.weights]), np.concatenate([last.bias, -last.bias]), RELU)
    return list(net.layers[:-1]) + [split]


def concatenate(outer: ReluNetwork, inner: ReluNetwork) -> ReluNetwork:
    """Composition ``x -> outer(inner(x))`` with depth L(outer) + L(inner).

    The interface is split through ``u = relu(u) - relu(-u)``: the inner
    output layer is doubled and the outer input layer reads ``[A, -A]``.
    """
    _require_valid(outer, inner)
    if inner.output_dim != outer.input_dim:
        raise ValueError(f"dimension mismatch: inner output {inner.output_dim} != outer input {outer.input_dim}")
    first = outer.layers[0]
    joined = Layer(sp.hstack([first.weights, -first.weights]), first.bias, first.activation)
    return ReluNetwork(_split_last(inner) + [joined] + list(outer.layers[1:]), inner.input_dim)


def pad_depth(net: ReluNetwork, target_depth: int) -> ReluNetwork:
    """Extend ``net`` to ``target_depth`` layers with identity blocks of weight +-1."""
    _require_valid(net)
    extra = target_depth - net.depth
    if extra < 0:
        raise ValueError(f"target depth {target_depth} below current depth {net.depth}")
    if extra == 0:
        return net
    m = net.output_dim
    eye = _eye(m)
    layers = _split_last(net)
    hold = sp.bmat([[eye, -eye], [-eye, eye]], format="csr")
    for _ in range(extra - 1):
        layers.append(Layer(hold, np.zeros(2 * m), RELU))
    layers.append(Layer(sp.hstack([eye, -eye]), np.zeros(m), LINEAR))
    return ReluNetwork(layers, net.input_dim)


def _padded(nets: Sequence[ReluNetwork]) -> list:
    if not nets:
        raise ValueError("empty network list")
    _require_valid(*nets)
    dims = {n.input_dim for n in nets}
    if len(dims) != 1:
        raise ValueError(f"mismatched input dims {sorted(dims)}")
    depth = max(n.depth for n in nets)
    return [pad_depth(n, depth) for n in nets]


def _scales(scales, count):
    if scales is None:
        return [1.0] * count
    scales = [float(s) for s in scales]
    if len(scales) != count:
        raise ValueError(f"{len(scales)} scales for {count} networks")
    return scales


def _stack_body(nets):
    """Shared first layer and block-diagonal hidden layers of padded nets."""
    layers = []
    depth = nets[0].depth
    for k in range(depth - 1):
        ws = [n.layers[k].weights for n in nets]
        w = sp.vstack(ws, format="csr") if k == 0 else sp.block_diag(ws, format="csr")
        layers.append(Layer(w, np.concatenate([n.layers[k].bias for n in nets]), RELU))
    return layers


def parallelize(nets: Sequence[ReluNetwork], scales=None) -> ReluNetwork:
    """Stacked outputs ``(a_1 f_1(x), ..., a_N f_N(x))`` of nets sharing an input."""
    nets = _padded(list(nets))
    scales = _scales(scales, len(nets))
    layers = _stack_body(nets)
    last_w = sp.block_diag([s * n.layers[-1].weights for s, n in zip(scales, nets)], format="csr")
    last_b = np.concatenate([s * n.layers[-1].bias for s, n in zip(scales, nets)])
    layers.append(Layer(last_w, last_b, LINEAR))
    return ReluNetwork(layers, nets[0].input_dim)


def linear_combine(nets: Sequence[ReluNetwork], scales=None) -> ReluNetwork:
    """Weighted sum ``sum_i a_i f_i(x)`` of nets with equal input and output dims."""
    nets = _padded(list(nets))
    scales = _scales(scales, len(nets))
    outs = {n.output_dim for n in nets}
    if len(outs) != 1:
        raise ValueError(f"mismatched output dims {sorted(outs)}")
    layers = _stack_body(nets)
    last_w = sp.hstack([s * n.layers[-1].weights for s, n in zip(scales, nets)], format="csr")
    last_b = sum(s * n.layers[-1].bias for s, n in zip(scales, nets))
    layers.append(Layer(last_w, last_b, LINEAR))
    return ReluNetwork(layers, nets[0].input_dim)


def tile(net: ReluNetwork, copies: int) -> ReluNetwork:
    """``copies`` independent instances of ``net`` acting on consecutive input blocks."""
    _require_valid(net)
    if copies < 1:
        raise ValueError("copies must be >= 1")
    eye = _eye(copies)
    layers = [Layer(sp.kron(eye, layer.weights, format="csr"), np.tile(layer.bias, copies), layer.activation) for layer in net.layers]
    return ReluNetwork(layers, net.input_dim * copies)


def precompose_affine(net: ReluNetwork, A, b=None) -> ReluNetwork:
    """``x -> net(A x + b)``, fused into the first layer (depth unchanged)."""
    _require_valid(net)
    A = sp.csr_matrix(A, dtype=np.float64) if sp.issparse(A) else sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=np.float64)))
    if A.shape[0] != net.input_dim:
        raise ValueError(f"affine map has {A.shape[0]} outputs, network expects {net.input_dim}")
    first = net.layers[0]
    bias = first.bias.copy()
    if b is not None:
        bias = bias + first.weights @ np.asarray(b, dtype=np.float64)
    layers = [Layer(first.weights @ A, bias, first.activation)] + list(net.layers[1:])
    return ReluNetwork(layers, A.shape[1])


def postcompose_affine(net: ReluNetwork, A, b=None) -> ReluNetwork:
    """``x -> A net(x) + b``, fused into the last layer (depth unchanged)."""
    _require_valid(net)
    A = sp.csr_matrix(A, dtype=np.float64) if sp.issparse(A) else sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=np.float64)))
    if A.shape[1] != net.output_dim:
        raise ValueError(f"affine map expects {A.shape[1]} inputs, network emits {net.output_dim}")
    last = net.layers[-1]
    bias = A @ last.bias
    if b is not None:
        bias = bias + np.asarray(b, dtype=np.float64)
    return ReluNetwork(list(net.layers[:-1]) + [Layer(A @ last.weights, bias, LINEAR)], net.input_dim)


def select_inputs(net: ReluNetwork, indices, input_dim: int) -> ReluNetwork:
    """``x -> net(x[indices])`` for inputs of length ``input_dim``."""
    indices = np.asarray(indices, dtype=np.int64)
    sel = sp.csr_matrix((np.ones(len(indices)), (np.arange(len(indices)), indices)), shape=(len(indices), input_dim))
    return precompose_affine(net, sel)


def relu_output(net: ReluNetwork) -> ReluNetwork:
    """``x -> relu(net(x))`` by activating the last layer and appending the identity."""
    _require_valid(net)
    last = net.layers[-1]
    layers = list(net.layers[:-1]) + [last.with_activation(RELU), Layer(_eye(net.output_dim), np.zeros(net.output_dim), LINEAR)]
    return ReluNetwork(layers, net.input_dim)


def scale_output(net: ReluNetwork, factor: float, max_weight: float | None = None) -> ReluNetwork:
    """``x -> factor * net(x)``.

    Without ``max_weight`` the factor is folded into the last layer.  With it,
    the factor is spread over added positive diagonal layers so that no new
    coefficient exceeds ``max_weight`` in magnitude (provided the existing last
    layer already respects it).
    """
    _require_valid(net)
    factor = float(factor)
    m = net.output_dim
    last = net.layers[-1]
    cur = max(np.max(np.abs(last.weights.data), initial=0.0), np.max(np.abs(last.bias), initial=0.0))
    if max_weight is None or abs(factor) * cur <= max_weight and abs(factor) <= max_weight:
        return postcompose_affine(net, factor * _eye(m))
    if max_weight < 1:
        raise ValueError("max_weight must be >= 1 to spread a scaling factor")
    mag = abs(factor)
    # first stretch uses the head-room left in the last layer
    head = max_weight / cur if cur > 0 else max_weight
    f0 = min(mag, head, max_weight)
    rest = mag / f0
    steps = max(0, math.ceil(math.log(rest) / math.log(max_weight) - 1e-12)) if rest > 1 else 0
    per = rest ** (1.0 / steps) if steps else 1.0
    split = _split_last(net)
    top = split[-1]
    layers = split[:-1] + [Layer(f0 * top.weights, f0 * top.bias, RELU)]
    eye2 = _eye(2 * m)
    # keep the last of the stretch factors for the output layer
    for _ in range(max(0, steps - 1)):
        layers.append(Layer(per * eye2, np.zeros(2 * m), RELU))
    out = per if steps else 1.0
    sign = 1.0 if factor >= 0 else -1.0
    eye = _eye(m)
    layers.append(Layer(sign * out * sp.hstack([eye, -eye]), np.zeros(m), LINEAR))
    return ReluNetwork(layers, net.input_dim)
