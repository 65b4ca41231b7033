"""Per-chunk classifier: one-hidden-layer network with sigmoid outputs.

Each chunk trains its own network mapping hashed features to a probability
per bucket: ``p = sigmoid(W2 relu(W1 x + b1) + b2)``, against few-hot bucket
targets under mean binary cross entropy.  Gradients are exact and analytic;
``grad_check`` keeps them honest against central finite differences.

Parameters live in float64 (all verification runs in double precision) but
are snapped to float32-representable values before persistence so that the
on-disk blobs round-trip bit-exactly.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np
from scipy.special import expit

from .features import HashedFeatures

LOSS_CLAMP_EPS = 1e-12


class NonFiniteGradientError(RuntimeError):
    """Raised when a gradient goes NaN/inf; usually a runaway learning rate."""


@dataclass
class ChunkModel:
    """Parameters of one chunk's network. Mutable during training, then frozen."""

    chunk: int
    input_dim: int
    hidden_dim: int
    output_dim: int
    init_seed: int
    W1: np.ndarray = field(repr=False)  # (H, F)
    b1: np.ndarray = field(repr=False)  # (H,)
    W2: np.ndarray = field(repr=False)  # (B, H)
    b2: np.ndarray = field(repr=False)  # (B,)

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2)


@dataclass(frozen=True)
class TargetVector:
    """Few-hot training target for one chunk: the OR of the labels' buckets."""

    chunk: int
    hot_buckets: np.ndarray = field(repr=False)  # int64, strictly increasing

    def __post_init__(self) -> None:
        hot = self.hot_buckets
        if hot.size and np.any(np.diff(hot) <= 0):
            raise ValueError("hot buckets must be strictly increasing")


@dataclass
class Gradients:
    """Loss gradients, same shapes as the model parameters."""

    W1: np.ndarray = field(repr=False)
    b1: np.ndarray = field(repr=False)
    W2: np.ndarray = field(repr=False)
    b2: np.ndarray = field(repr=False)

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2)


@dataclass
class AdamParams:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    step: int
    m: Gradients
    v: Gradients


def init_model(
    input_dim: int, hidden_dim: int, output_dim: int, init_seed: int, chunk: int = 0
) -> ChunkModel:
    """Glorot-uniform weights, zero biases, deterministic per seed.

    Each layer draws from ``uniform(-a, a)`` with ``a = sqrt(6/(fan_in+fan_out))``;
    W1 is drawn before W2 so the layout is reproducible.
    """
    if min(input_dim, hidden_dim, output_dim) < 1:
        raise ValueError("all model dimensions must be >= 1")
    rng = np.random.Generator(np.random.PCG64(init_seed))
    a1 = np.sqrt(6.0 / (input_dim + hidden_dim))
    a2 = np.sqrt(6.0 / (hidden_dim + output_dim))
    return ChunkModel(
        chunk=chunk,
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        output_dim=output_dim,
        init_seed=init_seed,
        W1=rng.uniform(-a1, a1, size=(hidden_dim, input_dim)),
        b1=np.zeros(hidden_dim),
        W2=rng.uniform(-a2, a2, size=(output_dim, hidden_dim)),
        b2=np.zeros(output_dim),
    )


def zero_adam_state(model: ChunkModel) -> AdamState:
    zeros = Gradients(*(np.zeros_like(p) for p in model.params()))
    zeros2 = Gradients(*(np.zeros_like(p) for p in model.params()))
    return AdamState(step=0, m=zeros, v=zeros2)


def _forward_parts(
    model: ChunkModel, x: HashedFeatures
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if x.dim != model.input_dim:
        raise ValueError(f"input dim {x.dim} != model input dim {model.input_dim}")
    # only the touched columns of W1 are read
    h_pre = model.W1[:, x.indexes] @ x.values + model.b1
    h = np.maximum(h_pre, 0.0)
    p = expit(model.W2 @ h + model.b2)
    return h_pre, h, p


def forward(model: ChunkModel, x: HashedFeatures) -> np.ndarray:
    """Bucket probability vector for one document, unclamped."""
    return _forward_parts(model, x)[2]


def target_dense(t: TargetVector, output_dim: int) -> np.ndarray:
    if t.hot_buckets.size and (
        t.hot_buckets[0] < 0 or t.hot_buckets[-1] >= output_dim
    ):
        raise ValueError("hot bucket out of range")
    y = np.zeros(output_dim)
    y[t.hot_buckets] = 1.0
    return y


def bce_loss(p: np.ndarray, t: TargetVector) -> float:
    """Mean binary cross entropy over all buckets.

    Probabilities are clamped to ``[eps, 1-eps]`` here and only here; raw
    probabilities flow to inference untouched.  Averaging over the bucket
    count keeps learning rates comparable across bucket-count sweeps.
    """
    y = target_dense(t, p.shape[0])
    pc = np.clip(p, LOSS_CLAMP_EPS, 1.0 - LOSS_CLAMP_EPS)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)))


def backward(
    model: ChunkModel, x: HashedFeatures, t: TargetVector
) -> tuple[float, Gradients]:
    """Loss and its exact gradients for one document.

    ReLU's subgradient at zero is taken as zero.  Columns of W1 for input
    indexes absent from ``x`` get exactly zero gradient.
    """
    h_pre, h, p = _forward_parts(model, x)
    y = target_dense(t, model.output_dim)
    loss = bce_loss(p, t)
    dz = (p - y) / model.output_dim
    g_W2 = np.outer(dz, h)
    g_b2 = dz
    dh = model.W2.T @ dz
    dh[h_pre <= 0.0] = 0.0
    g_W1 = np.zeros_like(model.W1)
    g_W1[:, x.indexes] = np.outer(dh, x.values)
    return loss, Gradients(W1=g_W1, b1=dh, W2=g_W2, b2=g_b2)


def apply_update(
    model: ChunkModel, grads: Gradients, state: AdamState, hyper: AdamParams
) -> tuple[ChunkModel, AdamState]:
    """One Adam step, in place; returns the same objects for chaining."""
    for g in grads.arrays():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"chunk {model.chunk}: non-finite gradient at step {state.step + 1}; "
                "reduce the learning rate"
            )
    state.step += 1
    bc1 = 1.0 - hyper.beta1**state.step
    bc2 = 1.0 - hyper.beta2**state.step
    for p, g, m, v in zip(model.params(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * np.square(g)
        p -= hyper.lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
    return model, state


def grad_check(
    model: ChunkModel,
    x: HashedFeatures,
    t: TargetVector,
    step: float = 1e-4,
    num_coords: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error of analytic vs central-difference gradients.

    Samples ``num_coords`` parameter coordinates (all of them if the model is
    smaller).  Coordinates where both sides are exactly zero are skipped.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    _, grads = backward(model, x, t)
    params = model.params()
    analytic = grads.arrays()
    sizes = [p.size for p in params]
    total = sum(sizes)
    rng = np.random.Generator(np.random.PCG64(seed))
    take = min(num_coords, total)
    coords = rng.choice(total, size=take, replace=False)

    worst = 0.0
    for flat in coords:
        pi, offset = _locate(sizes, int(flat))
        p = params[pi].reshape(-1)
        saved = p[offset]
        p[offset] = saved + step
        loss_plus = bce_loss(forward(model, x), t)
        p[offset] = saved - step
        loss_minus = bce_loss(forward(model, x), t)
        p[offset] = saved
        fd = (loss_plus - loss_minus) / (2.0 * step)
        an = analytic[pi].reshape(-1)[offset]
        denom = max(abs(fd), abs(an))
        if denom == 0.0:
            continue
        worst = max(worst, abs(fd - an) / denom)
    return worst


def _locate(sizes: list[int], flat: int) -> tuple[int, int]:
    for i, size in enumerate(sizes):
        if flat < size:
            return i, flat
        flat -= size
    raise IndexError(flat)


# ---------------------------------------------------------------------------
# Persistence: per-chunk binary blob
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<IIIIQ")  # chunk, F, H, B, init_seed


def quantize_to_f32(model: ChunkModel) -> ChunkModel:
    """Snap parameters to float32-representable values (still stored float64).

    Applied once when training finishes so that saving to the float32 blob
    format and loading back reproduces bit-identical forward outputs.
    """
    for p in model.params():
        p[...] = p.astype(np.float32).astype(np.float64)
    return model


def save_model(model: ChunkModel, fh: BinaryIO) -> None:
    """Header (chunk, F, H, B, init_seed), then W1, b1, W2, b2 as LE float32."""
    fh.write(
        _HEADER.pack(
            model.chunk,
            model.input_dim,
            model.hidden_dim,
            model.output_dim,
            model.init_seed,
        )
    )
    for p in model.params():
        fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_model(fh: BinaryIO) -> ChunkModel:
    """Read a blob written by :func:`save_model`; parameters come back float64."""
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ValueError("truncated model blob header")
    chunk, f, h, b, init_seed = _HEADER.unpack(raw)
    shapes = [(h, f), (h,), (b, h), (b,)]
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        buf = fh.read(4 * count)
        if len(buf) != 4 * count:
            raise ValueError("truncated model blob payload")
        arrays.append(np.frombuffer(buf, dtype="<f4").astype(np.float64).reshape(shape))
    return ChunkModel(
        chunk=chunk,
        input_dim=f,
        hidden_dim=h,
        output_dim=b,
        init_seed=init_seed,
        W1=arrays[0],
        b1=arrays[1],
        W2=arrays[2],
        b2=arrays[3],
    )
