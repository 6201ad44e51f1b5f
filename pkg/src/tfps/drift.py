"""Distribution-shift analysis between patches via 1-D Wasserstein distance.

Each length-P patch is treated as an empirical distribution, either of its raw
values (time domain) or of its one-sided amplitude spectrum (frequency
domain). Pairwise distances form a symmetric, zero-diagonal drift matrix whose
block structure exposes regime changes; the upper-triangle mean summarizes a
whole channel.

Analysis patches are the full-length slices at offsets 0, S, 2S, ... that fit
inside the channel (no end padding): padding would contaminate the final
patch's distribution with replicated values, which is exactly the kind of
artifact a drift analyzer must not introduce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MultivariateSeries
from .fourier import amplitude_spectrum

DOMAINS = ("time", "frequency")


@dataclass(frozen=True)
class DriftMatrix:
    distances: np.ndarray  # (N, N), symmetric, zero diagonal
    domain: str
    patch_len: int
    stride: int

    @property
    def n_patches(self) -> int:
        return self.distances.shape[0]


def wasserstein_1d(u, v) -> float:
    """First Wasserstein distance between the empirical distributions of two
    sample sets, as the integral of |U - V| over the merged support. For equal
    sample counts this reduces to the mean absolute difference of the sorted
    samples."""
    u = np.sort(np.asarray(u, dtype=np.float64).ravel())
    v = np.sort(np.asarray(v, dtype=np.float64).ravel())
    if u.size == 0 or v.size == 0:
        raise ValueError("wasserstein_1d needs non-empty samples")
    support = np.sort(np.concatenate([u, v]))
    gaps = np.diff(support)
    u_cdf = np.searchsorted(u, support[:-1], side="right") / u.size
    v_cdf = np.searchsorted(v, support[:-1], side="right") / v.size
    return float(np.sum(np.abs(u_cdf - v_cdf) * gaps))


def spectrum(patch) -> np.ndarray:
    """One-sided amplitude spectrum of a single patch; length P//2 + 1."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 1 or patch.size < 1:
        raise ValueError("spectrum expects a non-empty 1-D patch")
    return amplitude_spectrum(patch)


def analysis_patches(channel: np.ndarray, P: int, S: int) -> np.ndarray:
    """Full patches only: offsets 0, S, ... while the patch fits; (N, P)."""
    channel = np.asarray(channel, dtype=np.float64).ravel()
    T = channel.size
    if P < 1 or P > T:
        raise ValueError(f"patch length must satisfy 1 <= P <= T, got P={P}, T={T}")
    if S < 1:
        raise ValueError(f"stride must be >= 1, got {S}")
    starts = np.arange(0, T - P + 1, S)
    return np.stack([channel[s : s + P] for s in starts])


def patch_distance_matrix(channel: np.ndarray, P: int, S: int, domain: str) -> DriftMatrix:
    """Pairwise W1 distances between the patches of one channel."""
    if domain not in DOMAINS:
        raise ValueError(f"domain must be one of {DOMAINS}, got {domain!r}")
    patches = analysis_patches(channel, P, S)
    if domain == "frequency":
        patches = amplitude_spectrum(patches)
    n = patches.shape[0]
    dist = np.zeros((n, n))
    # equal sample counts: W1 reduces to the mean absolute sorted difference
    sorted_patches = np.sort(patches, axis=1)
    for i in range(n - 1):
        row = np.mean(np.abs(sorted_patches[i + 1 :] - sorted_patches[i]), axis=1)
        dist[i, i + 1 :] = row
        dist[i + 1 :, i] = row
    return DriftMatrix(distances=dist, domain=domain, patch_len=P, stride=S)


def average_wasserstein(series: MultivariateSeries, P: int, S: int, domain: str) -> float:
    """Mean upper-triangle drift per channel, averaged over channels."""
    per_channel = []
    for c in range(series.n_channels):
        m = patch_distance_matrix(series.values[:, c], P, S, domain).distances
        iu = np.triu_indices(m.shape[0], k=1)
        if iu[0].size == 0:
            raise ValueError("need at least two patches to average drift")
        per_channel.append(float(m[iu].mean()))
    return float(np.mean(per_channel))
