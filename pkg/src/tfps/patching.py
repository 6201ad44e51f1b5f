"""Channel-independent patching and token embedding.

Each channel of the [L x C] lookback is transposed to [C x L], padded by
replicating its final value `stride` times, and sliced into overlapping
length-P patches; the replication pad is what makes the token count come out
to floor((L - P) / S) + 2 with whole patches only. Tokens are an affine
projection of the patch values plus a learnable per-position embedding shared
across channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor


@dataclass(frozen=True)
class PatchSet:
    patches: np.ndarray  # (C, N, P)
    patch_len: int
    stride: int

    @property
    def n_patches(self) -> int:
        return self.patches.shape[1]


def patch_count(L: int, P: int, S: int) -> int:
    """Number of tokens produced from a length-L channel."""
    if S < 1:
        raise ValueError(f"stride must be >= 1, got {S}")
    if P < 1 or P > L:
        raise ValueError(f"patch length must satisfy 1 <= P <= L, got P={P}, L={L}")
    if S > P:
        raise ValueError(f"stride must not exceed patch length, got S={S}, P={P}")
    return (L - P) // S + 2


def segment(x: np.ndarray, P: int, S: int) -> PatchSet:
    """Slice a [L x C] window into a (C, N, P) patch array with end replication."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected [L x C] input, got shape {x.shape}")
    L = x.shape[0]
    n = patch_count(L, P, S)
    channels = x.T  # (C, L)
    padded = np.concatenate([channels, np.repeat(channels[:, -1:], S, axis=1)], axis=1)
    starts = np.arange(n) * S
    patches = np.stack([padded[:, s : s + P] for s in starts], axis=1)
    return PatchSet(patches=patches, patch_len=P, stride=S)


def segment_batch(x: np.ndarray, P: int, S: int) -> np.ndarray:
    """Batched variant: (B, L, C) -> (B, C, N, P)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected (B, L, C) input, got shape {x.shape}")
    L = x.shape[1]
    n = patch_count(L, P, S)
    channels = x.transpose(0, 2, 1)  # (B, C, L)
    padded = np.concatenate([channels, np.repeat(channels[..., -1:], S, axis=-1)], axis=-1)
    starts = np.arange(n) * S
    return np.stack([padded[..., s : s + P] for s in starts], axis=2)


def embed(patches: np.ndarray, projection: Tensor, bias: Tensor, positions: Tensor) -> Tensor:
    """token[..., i, :] = patch[..., i, :] @ W + b + E_i, positions shared
    across channels (and batch). Accepts (C, N, P) or (B, C, N, P)."""
    patches = np.asarray(patches, dtype=np.float64)
    P = patches.shape[-1]
    n = patches.shape[-2]
    if projection.shape[0] != P:
        raise ValueError(f"projection expects patch length {projection.shape[0]}, got {P}")
    if positions.shape != (n, projection.shape[1]):
        raise ValueError(
            f"positions shape {positions.shape} does not match (N={n}, D={projection.shape[1]})"
        )
    return as_tensor(patches) @ projection + bias + positions
