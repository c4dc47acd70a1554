"""Two-output collocation network with jet propagation and exact gradients.

The ansatz is a fully connected network mapping a point x in R^d to a pair
(n_u(x), n_f(x)).  The state channel is hard-constrained to satisfy zero
Dirichlet data by multiplication with a boundary cutoff, u = b * n_u, while
the control channel f = n_f is left free.

Second derivatives are obtained by propagating per-axis (value, d_i, d_ii)
triples through every affine map and activation; summing the d_ii outputs
over axes gives the Laplacian.  The loss gradient with respect to every
parameter is computed by one reverse sweep over the recorded computation,
which requires the activation's third derivative (the Laplacian already
consumes two).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import NumericOverflowError, ShapeError
from .geometry import CollocationSet, CutoffJet, cutoff_jet
from .lagrangian import MultiplierField, ProblemSpec, loss_parts, pointwise_gradients, target_values

_CHECKPOINT_MAGIC = b"DUZW-NET"
_CHECKPOINT_VERSION = 1

ACTIVATION_IDS = {"tanh": 0}


def _tanh_derivs(y):
    """tanh with first, second and third derivatives."""
    t = np.tanh(y)
    d1 = 1.0 - t * t
    d2 = -2.0 * t * d1
    d3 = -2.0 * d1 * (1.0 - 3.0 * t * t)
    return t, d1, d2, d3


def _identity_derivs(y):
    z = np.zeros_like(y)
    return y, np.ones_like(y), z, z


_ACTIVATIONS = {"tanh": _tanh_derivs, "identity": _identity_derivs}


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: input dimension, hidden widths, seed."""

    input_dim: int
    hidden: tuple[int, ...]
    seed: int = 0
    activation: str = "tanh"

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if any(w < 1 for w in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))

    @property
    def output_dim(self) -> int:
        return 2

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def n_parameters(self) -> int:
        dims = self.layer_dims
        return sum(dims[k + 1] * (dims[k] + 1) for k in range(len(dims) - 1))


class NetworkParameters:
    """All weights and biases as one flat float64 vector.

    The flat layout is layer by layer, each layer contributing the row-major
    weight matrix followed by the bias vector.
    """

    def __init__(self, spec: NetworkSpec, flat: np.ndarray):
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (spec.n_parameters,):
            raise ShapeError(
                f"flat parameter vector has length {flat.shape}, expected {spec.n_parameters}"
            )
        if not np.all(np.isfinite(flat)):
            raise ValueError("parameters contain non-finite entries")
        self.spec = spec
        self.flat = flat
        self._layers = []
        dims = spec.layer_dims
        offset = 0
        for k in range(len(dims) - 1):
            n_in, n_out = dims[k], dims[k + 1]
            w = flat[offset:offset + n_out * n_in].reshape(n_out, n_in)
            offset += n_out * n_in
            b = flat[offset:offset + n_out]
            offset += n_out
            self._layers.append((w, b))

    @property
    def layers(self):
        return self._layers

    def with_flat(self, flat: np.ndarray) -> "NetworkParameters":
        return NetworkParameters(self.spec, flat)


def init_network(spec: NetworkSpec) -> NetworkParameters:
    """Symmetric fan-in-scaled uniform weights, zero biases, seeded."""
    rng = np.random.default_rng(spec.seed)
    dims = spec.layer_dims
    chunks = []
    for k in range(len(dims) - 1):
        n_in, n_out = dims[k], dims[k + 1]
        limit = np.sqrt(3.0 / n_in)
        chunks.append(rng.uniform(-limit, limit, size=n_out * n_in))
        chunks.append(np.zeros(n_out))
    return NetworkParameters(spec, np.concatenate(chunks))


@dataclass(frozen=True)
class Jet:
    """State, control, state gradient and state Laplacian at one point."""

    u: float
    f: float
    grad_u: np.ndarray
    lap_u: float


@dataclass(frozen=True)
class JetBatch:
    """Jets for a batch of points, stored as arrays."""

    u: np.ndarray        # (n,)
    f: np.ndarray        # (n,)
    grad_u: np.ndarray   # (n, d)
    lap_u: np.ndarray    # (n,)


def _unit_cutoff(points: np.ndarray) -> CutoffJet:
    n, d = points.shape
    return CutoffJet(np.ones(n), np.zeros((n, d)), np.zeros(n))


class _Tape:
    """Recorded forward pass, enough for one reverse sweep.

    All derivative streams share each layer's matrix product: rows of the
    stacked activations hold n value rows, then per-axis first-derivative
    blocks, then per-axis second-derivative blocks.
    """

    __slots__ = ("x", "y", "jets", "cutoff", "raw")

    def __init__(self):
        self.x, self.y = [], []


def _forward(params: NetworkParameters, points: np.ndarray,
             cutoff: CutoffJet | None, need_tape: bool) -> tuple[JetBatch, _Tape | None]:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = points.shape
    if d != params.spec.input_dim:
        raise ShapeError(f"points have dimension {d}, network expects {params.spec.input_dim}")
    if cutoff is None:
        cutoff = _unit_cutoff(points)
    act = _ACTIVATIONS[params.spec.activation]
    layers = params.layers
    n_layers = len(layers)

    tape = _Tape() if need_tape else None
    # stacked streams: rows [0:n] value, [n(1+i):n(2+i)] d_i, then d_ii blocks
    x = np.zeros((n * (1 + 2 * d), d))
    x[:n] = points
    for i in range(d):
        x[n * (1 + i):n * (2 + i), i] = 1.0
    for k, (w, b) in enumerate(layers):
        y = x @ w.T
        y[:n] += b
        if need_tape:
            tape.x.append(x)
            tape.y.append(y)
        if k < n_layers - 1:
            s, s1, s2, _ = act(y[:n])
            x = np.empty((y.shape[0], y.shape[1]))
            x[:n] = s
            for i in range(d):
                yp = y[n * (1 + i):n * (2 + i)]
                yq = y[n * (1 + d + i):n * (2 + d + i)]
                x[n * (1 + i):n * (2 + i)] = s1 * yp
                x[n * (1 + d + i):n * (2 + d + i)] = s2 * yp * yp + s1 * yq
        else:
            out = y

    n_u = out[:n, 0]
    f = out[:n, 1]
    grad_n = np.stack([out[n * (1 + i):n * (2 + i), 0] for i in range(d)], axis=1)
    lap_n = out[n * (1 + d):n * (2 + d), 0].copy()
    for i in range(1, d):
        lap_n += out[n * (1 + d + i):n * (2 + d + i), 0]

    b_val, b_grad, b_lap = cutoff.b, cutoff.grad, cutoff.lap
    u = b_val * n_u
    grad_u = b_grad * n_u[:, None] + b_val[:, None] * grad_n
    lap_u = b_lap * n_u + 2.0 * np.sum(b_grad * grad_n, axis=1) + b_val * lap_n

    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(f)) and np.all(np.isfinite(lap_u))):
        raise NumericOverflowError("network evaluation produced non-finite values")

    jets = JetBatch(u, f, grad_u, lap_u)
    if need_tape:
        tape.jets = jets
        tape.cutoff = cutoff
        tape.raw = (n_u, grad_n, lap_n)
    return jets, tape


def batch_jets(params: NetworkParameters, points: np.ndarray,
               cutoff: CutoffJet | None = None) -> JetBatch:
    """Vectorised jets (u, f, grad u, lap u) at a batch of points."""
    jets, _ = _forward(params, points, cutoff, need_tape=False)
    return jets


def forward_jet(params: NetworkParameters, point, cutoff: CutoffJet | None = None) -> Jet:
    """Jet at a single point.

    ``cutoff`` supplies the boundary function with its derivatives at the
    point; pass None to evaluate the raw (uncut) network channels.
    """
    point = np.atleast_2d(np.asarray(point, dtype=float))
    jets, _ = _forward(params, point, cutoff, need_tape=False)
    return Jet(float(jets.u[0]), float(jets.f[0]), jets.grad_u[0].copy(), float(jets.lap_u[0]))


def evaluate(params: NetworkParameters, points: np.ndarray,
             cutoff_values: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Plain forward evaluation of (u, f) without derivative streams.

    Used by finite-difference oracles that re-difference the scalar output.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    act = _ACTIVATIONS[params.spec.activation]
    x = points
    layers = params.layers
    for k, (w, b) in enumerate(layers):
        y = x @ w.T + b
        x = act(y)[0] if k < len(layers) - 1 else y
    n_u, f = x[:, 0], x[:, 1]
    if cutoff_values is None:
        return n_u, f
    return cutoff_values * n_u, f


def loss_and_gradient(params: NetworkParameters, cset: CollocationSet,
                      problem: ProblemSpec, z: MultiplierField, beta: float = 0.0,
                      *, target: np.ndarray | None = None,
                      cutoff: CutoffJet | None = None) -> tuple[float, np.ndarray]:
    """Quadrature Lagrangian and its exact parameter gradient.

    The scalar equals :func:`deepuzawa.lagrangian.discrete_lagrangian` at the
    network jets; the gradient is the derivative of that scalar with respect
    to every entry of ``params.flat``, obtained by reverse accumulation
    through the full jet computation (Laplacian and cutoff terms included).

    ``target`` and ``cutoff`` may be precomputed once per grid and passed in;
    they default to the problem target and the domain cutoff.
    """
    if cutoff is None:
        cutoff = cutoff_jet(cset.domain, cset.points)
    if target is None:
        target = target_values(problem, cset)
    jets, tape = _forward(params, cset.points, cutoff, need_tape=True)
    loss, g_u, g_f, g_lap = pointwise_gradients(problem, cset, jets, z, beta, target)

    # map adjoints of (u, lap u) back to the raw network outputs through
    # u = b n,  lap u = (lap b) n + 2 grad b . grad n + b lap n
    b_val, b_grad, b_lap = cutoff.b, cutoff.grad, cutoff.lap
    a_n_u = g_u * b_val + g_lap * b_lap
    a_grad_n = 2.0 * g_lap[:, None] * b_grad
    a_lap_n = g_lap * b_val

    d = params.spec.input_dim
    layers = params.layers
    n_layers = len(layers)
    n = cset.n_points

    # stacked adjoint matching the forward block layout
    a = np.zeros((n * (1 + 2 * d), 2))
    a[:n, 0] = a_n_u
    a[:n, 1] = g_f
    for i in range(d):
        a[n * (1 + i):n * (2 + i), 0] = a_grad_n[:, i]
        a[n * (1 + d + i):n * (2 + d + i), 0] = a_lap_n

    act = _ACTIVATIONS[params.spec.activation]
    grad_flat = np.empty_like(params.flat)
    dims = params.spec.layer_dims
    offsets = np.cumsum([0] + [dims[k + 1] * (dims[k] + 1) for k in range(n_layers)])

    for k in range(n_layers - 1, -1, -1):
        w, _ = layers[k]
        gw = a.T @ tape.x[k]
        gb = a[:n].sum(axis=0)
        n_out, n_in = w.shape
        o = offsets[k]
        grad_flat[o:o + n_out * n_in] = gw.ravel()
        grad_flat[o + n_out * n_in:offsets[k + 1]] = gb
        if k == 0:
            break
        a_post = a @ w  # adjoint of this layer's stacked input, post-activation
        y_prev = tape.y[k - 1]
        _, s1, s2, s3 = act(y_prev[:n])
        a = np.empty_like(a_post)
        a[:n] = s1 * a_post[:n]
        for i in range(d):
            pblk = slice(n * (1 + i), n * (2 + i))
            qblk = slice(n * (1 + d + i), n * (2 + d + i))
            yp, yq = y_prev[pblk], y_prev[qblk]
            a[:n] += s2 * yp * a_post[pblk] + (s3 * yp * yp + s2 * yq) * a_post[qblk]
            a[pblk] = s1 * a_post[pblk] + 2.0 * s2 * yp * a_post[qblk]
            a[qblk] = s1 * a_post[qblk]

    return loss, grad_flat


def loss_value(params: NetworkParameters, cset: CollocationSet, problem: ProblemSpec,
               z: MultiplierField, beta: float = 0.0, *, target=None,
               cutoff: CutoffJet | None = None) -> float:
    """Loss alone, via the same jet computation as :func:`loss_and_gradient`."""
    if cutoff is None:
        cutoff = cutoff_jet(cset.domain, cset.points)
    jets = batch_jets(params, cset.points, cutoff)
    return loss_parts(problem, cset, jets, z, beta, target)["total"]


def finite_difference_gradient(params: NetworkParameters, cset: CollocationSet,
                               problem: ProblemSpec, z: MultiplierField, h: float,
                               beta: float = 0.0, *, target=None,
                               cutoff: CutoffJet | None = None) -> np.ndarray:
    """Central-difference gradient of the loss, component by component.

    Test oracle for :func:`loss_and_gradient`; O(n_params) loss evaluations.
    """
    if not h > 0:
        raise ValueError("finite difference step h must be positive")
    if cutoff is None:
        cutoff = cutoff_jet(cset.domain, cset.points)
    if target is None:
        target = target_values(problem, cset)
    flat = params.flat
    grad = np.empty_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        up = loss_value(params.with_flat(bumped), cset, problem, z, beta,
                        target=target, cutoff=cutoff)
        bumped[i] = flat[i] - h
        down = loss_value(params.with_flat(bumped), cset, problem, z, beta,
                          target=target, cutoff=cutoff)
        grad[i] = (up - down) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# checkpoint io
#
# Layout (all little-endian):
#   8 bytes   magic "DUZW-NET"
#   int32     format version (1)
#   int32     input dimension d
#   int32     number of hidden layers
#   int32[]   hidden widths
#   int32     activation id (0 = tanh)
#   int64     init seed
#   int64     number of parameters
#   float64[] flat parameter vector (layer-major, weights then bias)


def save_checkpoint(params: NetworkParameters, path) -> None:
    spec = params.spec
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<ii", _CHECKPOINT_VERSION, spec.input_dim))
        fh.write(struct.pack("<i", len(spec.hidden)))
        fh.write(struct.pack(f"<{len(spec.hidden)}i", *spec.hidden))
        fh.write(struct.pack("<i", ACTIVATION_IDS[spec.activation]))
        fh.write(struct.pack("<qq", spec.seed, spec.n_parameters))
        fh.write(params.flat.astype("<f8").tobytes())


def load_checkpoint(path) -> NetworkParameters:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"not a network checkpoint (magic {magic!r})")
        version, input_dim = struct.unpack("<ii", fh.read(8))
        if version != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (n_hidden,) = struct.unpack("<i", fh.read(4))
        hidden = struct.unpack(f"<{n_hidden}i", fh.read(4 * n_hidden))
        (act_id,) = struct.unpack("<i", fh.read(4))
        seed, n_params = struct.unpack("<qq", fh.read(16))
        by_id = {v: k for k, v in ACTIVATION_IDS.items()}
        if act_id not in by_id:
            raise ValueError(f"unknown activation id {act_id}")
        spec = NetworkSpec(input_dim, tuple(hidden), seed=seed, activation=by_id[act_id])
        if n_params != spec.n_parameters:
            raise ValueError("checkpoint parameter count does not match its architecture")
        flat = np.frombuffer(fh.read(8 * n_params), dtype="<f8").astype(float)
    return NetworkParameters(spec, flat)
