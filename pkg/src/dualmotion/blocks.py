"""Learned building blocks: gated recurrent cell, MLP, neighbor attention.

Weight matrices are stored (input_dim, output_dim) and applied as ``x @ W``,
so every block also works row-batched: feeding (batch, input_dim) yields
(batch, output_dim) through numpy broadcasting of the bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from dualmotion import tensor as T
from dualmotion.tensor import Tensor

ACTIVATIONS = {
    "tanh": T.tanh,
    "relu": T.relu,
    "sigmoid": T.sigmoid,
    "identity": lambda t: t,
}


def uniform_param(rng: np.random.Generator, shape: tuple, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


@dataclass
class GruParams:
    """Gate and candidate weights of a gated recurrent cell."""

    input_dim: int
    hidden_dim: int
    wr: Tensor
    ur: Tensor
    br: Tensor
    wz: Tensor
    uz: Tensor
    bz: Tensor
    wc: Tensor
    uc: Tensor
    bc: Tensor

    @classmethod
    def create(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "GruParams":
        def w():
            return uniform_param(rng, (input_dim, hidden_dim), input_dim)

        def u():
            return uniform_param(rng, (hidden_dim, hidden_dim), hidden_dim)

        def b():
            return uniform_param(rng, (hidden_dim,), input_dim)

        return cls(input_dim, hidden_dim, w(), u(), b(), w(), u(), b(), w(), u(), b())

    def named_tensors(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for name in ("wr", "ur", "br", "wz", "uz", "bz", "wc", "uc", "bc"):
            yield f"{prefix}.{name}", getattr(self, name)


def gru_step(p: GruParams, x: Tensor, h_prev: Tensor) -> Tensor:
    """One recurrent update; output is a convex blend of h_prev and a tanh candidate."""
    r = T.sigmoid(T.add(T.add(T.matmul(x, p.wr), T.matmul(h_prev, p.ur)), p.br))
    z = T.sigmoid(T.add(T.add(T.matmul(x, p.wz), T.matmul(h_prev, p.uz)), p.bz))
    c = T.tanh(T.add(T.add(T.matmul(x, p.wc), T.matmul(T.mul(r, h_prev), p.uc)), p.bc))
    keep = T.mul(z, h_prev)
    return T.add(keep, T.mul(T.sub(T.constant(1.0), z), c))


@dataclass
class MlpParams:
    """Feed-forward stack; hidden layers use ``hidden_activation``, final layer is linear."""

    widths: Sequence[int]
    weights: list[Tensor]
    biases: list[Tensor]
    hidden_activation: str = "relu"

    @classmethod
    def create(cls, widths: Sequence[int], rng: np.random.Generator,
               hidden_activation: str = "relu") -> "MlpParams":
        if len(widths) < 2:
            raise ValueError("mlp needs at least one layer (two widths)")
        weights = [uniform_param(rng, (a, b), a) for a, b in zip(widths[:-1], widths[1:])]
        biases = [uniform_param(rng, (b,), a) for a, b in zip(widths[:-1], widths[1:])]
        return cls(list(widths), weights, biases, hidden_activation)

    def named_tensors(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"{prefix}.w{i}", w
            yield f"{prefix}.b{i}", b


def mlp_apply(p: MlpParams, x: Tensor) -> Tensor:
    act = ACTIVATIONS[p.hidden_activation]
    h = x
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        h = T.add(T.matmul(h, w), b)
        if i != last:
            h = act(h)
    return h


@dataclass
class AttnParams:
    """Projection weights for softmax attention over a set of neighbor values.

    Scores are linear in the concatenation of the projected query and each
    projected value; the score weight vector is applied to the two halves
    separately, which is the same map with fewer intermediate nodes.
    """

    query_dim: int
    value_dim: int
    proj_dim: int
    wq: Tensor
    wv: Tensor
    wa: Tensor  # (2 * proj_dim,)
    output_activation: str = "tanh"

    @classmethod
    def create(cls, query_dim: int, value_dim: int, proj_dim: int,
               rng: np.random.Generator, output_activation: str = "tanh") -> "AttnParams":
        return cls(
            query_dim, value_dim, proj_dim,
            uniform_param(rng, (query_dim, proj_dim), query_dim),
            uniform_param(rng, (value_dim, proj_dim), value_dim),
            uniform_param(rng, (2 * proj_dim,), 2 * proj_dim),
            output_activation,
        )

    def named_tensors(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.wq", self.wq
        yield f"{prefix}.wv", self.wv
        yield f"{prefix}.wa", self.wa


def attn(p: AttnParams, q: Tensor, values) -> tuple[Tensor, Tensor]:
    """Attend over ``values`` (a list of vectors, or an already-stacked
    (n, value_dim) matrix) with query ``q``.

    Returns (output, weights): the activated weighted sum of projected values,
    and the softmax weights over the value set (which sum to 1).
    """
    if isinstance(values, Tensor):
        matrix = values
        if matrix.shape[0] == 0:
            raise ValueError("attn: empty value set; caller must supply a neutral message")
    else:
        values = list(values)
        if not values:
            raise ValueError("attn: empty value set; caller must supply a neutral message")
        matrix = T.stack(values)
    qp = T.matmul(q, p.wq)
    projected = T.matmul(matrix, p.wv)  # (n, proj_dim)
    wa_q = T.slice_(p.wa, 0, p.proj_dim)
    wa_v = T.slice_(p.wa, p.proj_dim, 2 * p.proj_dim)
    scores = T.add(T.matmul(projected, wa_v), T.matmul(qp, wa_q))
    weights = T.softmax(scores)
    out = ACTIVATIONS[p.output_activation](T.matmul(weights, projected))
    return out, weights
