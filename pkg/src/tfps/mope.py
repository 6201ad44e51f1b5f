"""Mixture of pattern experts: top-k routing on subspace affinities, sparse
expert evaluation, branch merging, and the forecast head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .fourier import inverse_fourier_mix


@dataclass
class ExpertParams:
    """Two linear maps with an intermediate rectification."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class GatingWeights:
    """Per-token routing weights: each row is non-negative, sums to 1, and has
    at most k nonzero entries (exactly the selected experts)."""

    weights: Tensor  # (M, K)
    indices: np.ndarray  # (M, k) selected expert ids
    k: int


def gate(s: Tensor, k: int) -> GatingWeights:
    """Keep the k largest affinities per row, renormalize them with a softmax
    over the raw selected values, zero the rest. Ties break toward the lowest
    expert index."""
    if s.ndim != 2:
        raise ValueError(f"expected (M, K) affinities, got shape {s.shape}")
    K = s.shape[1]
    if not 1 <= k <= K:
        raise ValueError(f"k must satisfy 1 <= k <= K={K}, got {k}")
    # stable sort of the negated values: equal affinities keep index order
    order = np.argsort(-s.data, axis=1, kind="stable")
    indices = order[:, :k]
    selected = ad.take_along(s, indices, axis=1)
    w = ad.softmax(selected, axis=1)
    full = ad.scatter_along(w, indices, axis=1, size=K)
    return GatingWeights(weights=full, indices=indices, k=k)


def expert_forward(z: Tensor, params: ExpertParams) -> Tensor:
    if z.shape[-1] != params.w1.shape[0]:
        raise ValueError(f"token width {z.shape[-1]} does not match expert input {params.w1.shape[0]}")
    return ad.relu(z @ params.w1 + params.b1) @ params.w2 + params.b2


def aggregate(
    gating: GatingWeights,
    z: Tensor,
    experts: list[ExpertParams],
    call_counter: list[int] | None = None,
) -> Tensor:
    """h_i = sum_j gating[i, j] * E_j(z_i), evaluating each expert only on the
    tokens actually routed to it. `call_counter[j]` counts evaluations, which
    lets tests prove unrouted experts never run."""
    M = z.shape[0]
    out = None
    for j, params in enumerate(experts):
        rows = np.nonzero((gating.indices == j).any(axis=1))[0]
        if rows.size == 0:
            continue
        if call_counter is not None:
            call_counter[j] += 1
        zj = ad.index_rows(z, rows)
        ej = expert_forward(zj, params)
        wj = ad.index_rows(gating.weights, rows)[:, j : j + 1]
        piece = ad.scatter_rows(ej * wj, rows, M)
        out = piece if out is None else out + piece
    if out is None:  # unreachable: k >= 1 routes every token somewhere
        raise RuntimeError("no expert received any token")
    return out


def combine_branches(h_t: Tensor, h_f: Tensor) -> Tensor:
    """Bring the frequency branch back with the real inverse 2-D DFT over its
    (patch, hidden) axes, then concatenate with the time branch features."""
    if h_t.shape != h_f.shape:
        raise ValueError(f"branch shapes differ: {h_t.shape} vs {h_f.shape}")
    return ad.concat([h_t, inverse_fourier_mix(h_f)], axis=-1)


def head(h: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per channel, flatten the (N, D') block and apply one shared linear map;
    output is (..., H, C)."""
    n, dp = h.shape[-2], h.shape[-1]
    if w.shape[0] != n * dp:
        raise ValueError(f"head expects flattened width {w.shape[0]}, got {n * dp}")
    flat = h.reshape(h.shape[:-2] + (n * dp,))
    y = flat @ w + b  # (..., C, H)
    return y.swapaxes(-1, -2)
