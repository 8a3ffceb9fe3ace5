"""MLP encoder with a projection head and exact manual backpropagation.

The encoder is a ReLU trunk followed by a two-layer projection head (hidden
ReLU, linear output) whose output is L2-normalized. Probes consume the trunk
output; the projection head exists only for the contrastive objective.

Parameters are immutable values: updates (gradient steps, momentum mixing)
build new trees. The same tree shape doubles as the container for gradients
and optimizer velocity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Rng, l2_normalize_rows

Layer = tuple[np.ndarray, np.ndarray]  # (weights (in, out), bias (out,))


@dataclass(frozen=True)
class EncoderParams:
    trunk: tuple[Layer, ...]
    proj: tuple[Layer, Layer]

    @property
    def input_dim(self) -> int:
        return self.trunk[0][0].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.trunk[-1][0].shape[1]

    @property
    def embed_dim(self) -> int:
        return self.proj[-1][0].shape[1]


def leaves(params: EncoderParams) -> list[np.ndarray]:
    """All arrays in declared layer order (trunk first, then projection)."""
    out = []
    for w, b in list(params.trunk) + list(params.proj):
        out.append(w)
        out.append(b)
    return out


def map_leaves(fn, *trees: EncoderParams) -> EncoderParams:
    """Apply fn leafwise across parameter trees of identical shape."""
    def combine(layers):
        return tuple(
            (fn(*[t[i][0] for t in layers]), fn(*[t[i][1] for t in layers]))
            for i in range(len(layers[0]))
        )

    trunk = combine([t.trunk for t in trees])
    proj = combine([t.proj for t in trees])
    return EncoderParams(trunk=trunk, proj=proj)


def zeros_like_params(params: EncoderParams) -> EncoderParams:
    return map_leaves(np.zeros_like, params)


def params_equal(a: EncoderParams, b: EncoderParams) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(leaves(a), leaves(b)))


def _check_same_shape(a: EncoderParams, b: EncoderParams):
    la, lb = leaves(a), leaves(b)
    if len(la) != len(lb) or any(x.shape != y.shape for x, y in zip(la, lb)):
        raise ValueError("shape mismatch")


def init_params(
    input_dim: int,
    trunk_widths,
    proj_hidden: int,
    embed_dim: int,
    rng: Rng,
) -> EncoderParams:
    """Fan-in-scaled uniform weights, zero biases, deterministic per stream."""
    trunk_widths = tuple(int(w) for w in trunk_widths)
    dims_ok = (
        input_dim >= 1
        and len(trunk_widths) >= 1
        and all(w >= 1 for w in trunk_widths)
        and proj_hidden >= 1
        and embed_dim >= 1
    )
    if not dims_ok:
        raise ValueError("invalid dims")

    def layer(fan_in: int, fan_out: int) -> Layer:
        # He-style bound keeps ReLU activation scale roughly constant with
        # depth, which also keeps the embedding norms away from zero where
        # the normalization Jacobian blows up.
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, (fan_in, fan_out))
        return w, np.zeros(fan_out)

    trunk = []
    prev = input_dim
    for width in trunk_widths:
        trunk.append(layer(prev, width))
        prev = width
    proj = (layer(prev, proj_hidden), layer(proj_hidden, embed_dim))
    return EncoderParams(trunk=tuple(trunk), proj=proj)


@dataclass
class ForwardTape:
    """Pre-activations and intermediate values retained for backward."""

    params: EncoderParams
    x: np.ndarray
    trunk_pre: list[np.ndarray]
    trunk_act: list[np.ndarray]
    proj_pre: np.ndarray
    proj_act: np.ndarray
    raw: np.ndarray  # pre-normalization embeddings
    norms: np.ndarray
    out: np.ndarray  # unit-norm embeddings


def trunk_features(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    """Trunk output (post-ReLU, not normalized); the representation probes use."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError("shape mismatch")
    a = x
    for w, b in params.trunk:
        a = np.maximum(a @ w + b, 0.0)
    return a


def forward(params: EncoderParams, x: np.ndarray):
    """Full pass: trunk -> projection -> L2 normalization.

    Returns (embeddings, tape); embeddings rows are unit norm.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError("shape mismatch")
    trunk_pre, trunk_act = [], []
    a = x
    for w, b in params.trunk:
        z = a @ w + b
        a = np.maximum(z, 0.0)
        trunk_pre.append(z)
        trunk_act.append(a)
    (w1, b1), (w2, b2) = params.proj
    proj_pre = a @ w1 + b1
    proj_act = np.maximum(proj_pre, 0.0)
    raw = proj_act @ w2 + b2
    out = l2_normalize_rows(raw)
    norms = np.linalg.norm(raw, axis=1)
    tape = ForwardTape(
        params=params,
        x=x,
        trunk_pre=trunk_pre,
        trunk_act=trunk_act,
        proj_pre=proj_pre,
        proj_act=proj_act,
        raw=raw,
        norms=norms,
        out=out,
    )
    return out, tape


def backward(
    params: EncoderParams, tape: ForwardTape, grad_embeddings: np.ndarray
) -> EncoderParams:
    """Gradients of sum_i <grad_embeddings[i], embedding[i]> for every parameter.

    Includes the normalization Jacobian (I - uu^T)/||v||. The tape must come
    from a forward pass of the same parameter tree.
    """
    if tape.params is not params:
        raise ValueError("stale tape")
    g = np.asarray(grad_embeddings, dtype=np.float64)
    if g.shape != tape.out.shape:
        raise ValueError("shape mismatch")

    u = tape.out
    g_raw = (g - np.sum(g * u, axis=1, keepdims=True) * u) / tape.norms[:, None]

    (w1, _), (w2, _) = params.proj
    d_w2 = tape.proj_act.T @ g_raw
    d_b2 = g_raw.sum(axis=0)
    d_act = g_raw @ w2.T
    d_pre = d_act * (tape.proj_pre > 0.0)
    d_w1 = tape.trunk_act[-1].T @ d_pre
    d_b1 = d_pre.sum(axis=0)
    d_h = d_pre @ w1.T

    trunk_grads: list[Layer] = []
    for t in range(len(params.trunk) - 1, -1, -1):
        w, _ = params.trunk[t]
        a_in = tape.trunk_act[t - 1] if t > 0 else tape.x
        d_z = d_h * (tape.trunk_pre[t] > 0.0)
        trunk_grads.append((a_in.T @ d_z, d_z.sum(axis=0)))
        d_h = d_z @ w.T
    trunk_grads.reverse()
    return EncoderParams(trunk=tuple(trunk_grads), proj=((d_w1, d_b1), (d_w2, d_b2)))


def momentum_update(
    key: EncoderParams, query: EncoderParams, m: float
) -> EncoderParams:
    """Elementwise convex combination m*key + (1-m)*query."""
    if not 0.0 <= m <= 1.0:
        raise ValueError("momentum must lie in [0, 1]")
    _check_same_shape(key, query)
    return map_leaves(lambda pk, pq: m * pk + (1.0 - m) * pq, key, query)
