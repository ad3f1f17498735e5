"""ReLU network representation, forward evaluation, metrics and JSON I/O.

A network is an ordered list of affine layers.  Every layer except the last
is followed by the rectifier ``max(0, t)``; the last layer is affine.  Weights
are kept in CSR form so that networks with tens of thousands of neurons per
layer stay cheap to build and evaluate.  Nonzero counting, the JSON format and
all arithmetic are unaffected by the storage choice.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from reluforge import _kernels

RELU = "relu"
LINEAR = "linear"
ACTIVATIONS = (RELU, LINEAR)

# Above this many matrix entries a layer is written in coordinate form.
_DENSE_JSON_LIMIT = 1 << 20
# Target size (in float64 entries) of one activation buffer during evaluation.
_BUFFER_ENTRIES = 1 << 21


class NetworkFormatError(ValueError):
    """Raised for malformed network documents or invalid network structure."""


class DimensionMetrics(NamedTuple):
    depth: int
    width: int
    nonzero_params: int
    weight_bound: float

    # Short aliases matching the usual L, W, P, B notation.
    @property
    def L(self):
        return self.depth

    @property
    def W(self):
        return self.width

    @property
    def P(self):
        return self.nonzero_params

    @property
    def B(self):
        return self.weight_bound


def _as_csr(weights) -> sp.csr_matrix:
    if sp.issparse(weights):
        mat = sp.csr_matrix(weights, dtype=np.float64, copy=True)
    else:
        arr = np.asarray(weights, dtype=np.float64)
        if arr.ndim != 2:
            raise NetworkFormatError(f"weights must be 2-D, got shape {arr.shape}")
        mat = sp.csr_matrix(arr)
    mat.eliminate_zeros()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


@dataclass(frozen=True, eq=False)
class Layer:
    """Affine map ``t -> W t + b`` with an optional ReLU."""

    weights: sp.csr_matrix
    bias: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        object.__setattr__(self, "weights", _as_csr(self.weights))
        bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        bias.setflags(write=False)
        object.__setattr__(self, "bias", bias)
        if self.activation not in ACTIVATIONS:
            raise NetworkFormatError(f"unknown activation {self.activation!r}")

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]

    def dense(self) -> np.ndarray:
        return self.weights.toarray()

    def with_activation(self, activation: str) -> "Layer":
        return Layer(self.weights, self.bias, activation)


class ReluNetwork:
    """Immutable feed-forward ReLU network.

    Construction does not enforce the structural rules; call :func:`validate`
    to list violations.  :func:`evaluate` refuses invalid networks.
    """

    def __init__(self, layers: Sequence[Layer], input_dim: int | None = None):
        layers = tuple(layers)
        if input_dim is None:
            if not layers:
                raise NetworkFormatError("input_dim required for an empty network")
            input_dim = layers[0].cols
        self._layers = layers
        self._input_dim = int(input_dim)
        self._packed = None
        self._metrics = None

    @property
    def layers(self) -> tuple:
        return self._layers

    @property
    def input_dim(self) -> int:
        return self._input_dim

    @property
    def output_dim(self) -> int:
        return self._layers[-1].rows

    @property
    def depth(self) -> int:
        return len(self._layers)

    def dims(self) -> list:
        """Layer dimensions N_0, ..., N_L."""
        return [self._input_dim] + [layer.rows for layer in self._layers]

    def __call__(self, x):
        return evaluate(self, x)

    def __repr__(self):
        m = metrics(self) if not validate(self) else None
        if m is None:
            return f"ReluNetwork(invalid, {len(self._layers)} layers)"
        return f"ReluNetwork({self.input_dim}->{self.output_dim}, L={m.depth}, W={m.width}, P={m.nonzero_params}, B={m.weight_bound:g})"


def validate(net: ReluNetwork) -> list:
    """Return a list of structural violations; an empty list means valid."""
    problems = []
    layers = net.layers
    if len(layers) < 2:
        problems.append(f"depth < 2 (got {len(layers)})")
    prev = net.input_dim
    for i, layer in enumerate(layers):
        if layer.cols != prev:
            problems.append(f"dimension mismatch at {i}: expected {prev} input columns, got {layer.cols}")
        if layer.bias.shape[0] != layer.rows:
            problems.append(f"bias length mismatch at {i}: {layer.bias.shape[0]} != {layer.rows} rows")
        last = i == len(layers) - 1
        if last and layer.activation != LINEAR:
            problems.append(f"activation at {i}: last layer must be linear")
        if not last and layer.activation != RELU:
            problems.append(f"activation at {i}: hidden layer must be relu")
        prev = layer.rows
    return problems


def _check_valid(net: ReluNetwork):
    problems = validate(net)
    if problems:
        raise NetworkFormatError("invalid network: " + "; ".join(problems))


def metrics(net: ReluNetwork) -> DimensionMetrics:
    """Depth, width, nonzero parameter count and weight bound."""
    if net._metrics is None:
        _check_valid(net)
        width = max(net.dims())
        nnz = 0
        bound = 0.0
        for layer in net.layers:
            nnz += int(np.count_nonzero(layer.weights.data)) + int(np.count_nonzero(layer.bias))
            if layer.weights.nnz:
                bound = max(bound, float(np.max(np.abs(layer.weights.data))))
            if layer.bias.size:
                bound = max(bound, float(np.max(np.abs(layer.bias))))
        net._metrics = DimensionMetrics(net.depth, width, nnz, bound)
    return net._metrics


def _pack(net: ReluNetwork):
    if net._packed is None:
        indptr, indices, data, bias = [], [], [], []
        ptr_off = [0]
        nz_off = [0]
        rows, relu = [], []
        for layer in net.layers:
            w = layer.weights
            indptr.append(w.indptr.astype(np.int64))
            indices.append(w.indices.astype(np.int64))
            data.append(w.data)
            bias.append(layer.bias)
            ptr_off.append(ptr_off[-1] + w.shape[0] + 1)
            nz_off.append(nz_off[-1] + w.nnz)
            rows.append(w.shape[0])
            relu.append(layer.activation == RELU)
        net._packed = (
            np.concatenate(indptr),
            np.concatenate(indices) if indices else np.zeros(0, np.int64),
            np.concatenate(data) if data else np.zeros(0),
            np.concatenate(bias),
            np.array(ptr_off, dtype=np.int64),
            np.array(nz_off, dtype=np.int64),
            np.array(rows, dtype=np.int64),
            np.array(relu, dtype=np.bool_),
            max(net.dims()),
        )
    return net._packed


def evaluate(net: ReluNetwork, x, jobs: int = 1) -> np.ndarray:
    """Forward pass.

    ``x`` may be a single input of length ``input_dim`` or a batch of shape
    ``(n, input_dim)``; the result has matching shape.
    """
    _check_valid(net)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValueError(f"input has shape {x.shape}, network expects input_dim={net.input_dim}")
    packed = _pack(net)
    width = packed[-1]
    n = X.shape[0]
    chunk = int(max(1, min(64, _BUFFER_ENTRIES // max(width, 1))))
    out = np.empty((n, net.output_dim))

    def run(lo):
        hi = min(n, lo + chunk)
        block = np.ascontiguousarray(X[lo:hi].T)
        buf_a = np.empty((width, hi - lo))
        buf_b = np.empty((width, hi - lo))
        res = _kernels.forward(*packed[:-1], block, buf_a, buf_b)
        out[lo:hi] = res.T

    starts = range(0, n, chunk)
    if jobs > 1 and n > chunk:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run, starts))
    else:
        for lo in starts:
            run(lo)
    return out[0] if single else out


# --- construction helpers -------------------------------------------------


def affine_net(A, b=None) -> ReluNetwork:
    """Two-layer network computing ``x -> A x + b`` exactly.

    Uses ``u = relu(u) - relu(-u)``: the first layer is ``[A; -A]`` with bias
    ``[b; -b]`` and the second layer is ``[I, -I]``.
    """
    A = sp.csr_matrix(A, dtype=np.float64) if sp.issparse(A) else sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=np.float64)))
    m = A.shape[0]
    b = np.zeros(m) if b is None else np.asarray(b, dtype=np.float64).reshape(-1)
    if b.shape[0] != m:
        raise ValueError(f"bias length {b.shape[0]} does not match {m} rows")
    eye = sp.identity(m, format="csr")
    first = Layer(sp.vstack([A, -A]), np.concatenate([b, -b]), RELU)
    second = Layer(sp.hstack([eye, -eye]), np.zeros(m), LINEAR)
    return ReluNetwork([first, second], A.shape[1])


def identity_net(dim: int) -> ReluNetwork:
    return affine_net(sp.identity(dim, format="csr"), np.zeros(dim))


# --- serialization --------------------------------------------------------


def _finite_list(arr) -> list:
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NetworkFormatError("non-finite entry cannot be serialized")
    return [float(v) for v in arr]


def to_dict(net: ReluNetwork, sparse: bool | None = None) -> dict:
    """JSON-ready document.  Large layers use the coordinate form by default."""
    _check_valid(net)
    layers = []
    for layer in net.layers:
        doc = {"rows": layer.rows, "cols": layer.cols}
        use_sparse = sparse if sparse is not None else layer.rows * layer.cols > _DENSE_JSON_LIMIT
        if use_sparse:
            coo = layer.weights.tocoo()
            doc["entries"] = {
                "row": [int(i) for i in coo.row],
                "col": [int(j) for j in coo.col],
                "value": _finite_list(coo.data),
            }
        else:
            doc["weights"] = _finite_list(layer.dense().ravel())
        doc["bias"] = _finite_list(layer.bias)
        doc["activation"] = layer.activation
        layers.append(doc)
    return {"input_dim": net.input_dim, "layers": layers}


def from_dict(doc) -> ReluNetwork:
    """Parse a network document; structural errors raise NetworkFormatError."""
    try:
        input_dim = doc["input_dim"]
        raw_layers = doc["layers"]
    except (KeyError, TypeError) as exc:
        raise NetworkFormatError(f"missing field: {exc}") from None
    if not isinstance(input_dim, int) or input_dim < 1:
        raise NetworkFormatError("input_dim must be a positive integer")
    if not isinstance(raw_layers, list):
        raise NetworkFormatError("layers must be a list")
    layers = []
    for i, item in enumerate(raw_layers):
        try:
            rows, cols = int(item["rows"]), int(item["cols"])
            bias = np.asarray(item["bias"], dtype=np.float64)
            activation = item["activation"]
            if "weights" in item:
                w = np.asarray(item["weights"], dtype=np.float64)
                if w.shape != (rows * cols,):
                    raise NetworkFormatError(f"layer {i}: expected {rows * cols} weights, got {w.size}")
                weights = sp.csr_matrix(w.reshape(rows, cols))
            else:
                ent = item["entries"]
                weights = sp.csr_matrix(
                    (np.asarray(ent["value"], dtype=np.float64), (np.asarray(ent["row"], dtype=np.int64), np.asarray(ent["col"], dtype=np.int64))),
                    shape=(rows, cols),
                )
        except NetworkFormatError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkFormatError(f"layer {i}: {exc}") from None
        if bias.ndim != 1 or bias.shape[0] != rows:
            raise NetworkFormatError(f"layer {i}: bias length {bias.size} != rows {rows}")
        if activation not in ACTIVATIONS:
            raise NetworkFormatError(f"layer {i}: unknown activation {activation!r}")
        layers.append(Layer(weights, bias, activation))
    return ReluNetwork(layers, input_dim)


def serialize(net: ReluNetwork, sparse: bool | None = None) -> bytes:
    # repr-based float formatting in json round-trips float64 exactly
    return json.dumps(to_dict(net, sparse), separators=(",", ":")).encode("utf-8")


def deserialize(data) -> ReluNetwork:
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"malformed document: {exc}") from None
    return from_dict(doc)


def save(net: ReluNetwork, path, sparse: bool | None = None):
    with open(path, "wb") as fh:
        fh.write(serialize(net, sparse))


def load(path) -> ReluNetwork:
    with open(path, "rb") as fh:
        return deserialize(fh.read())

