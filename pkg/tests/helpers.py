"""Independent oracles and gradient-check utilities shared by the test suite.

Everything here is deliberately written from scratch against the plain
definitions (literal double-sum DFTs, a transport linear program, per-head
attention loops) so it cannot share a bug with the package code it checks.
"""

from __future__ import annotations

import numpy as np


def rel_err(a, b) -> float:
    """Relative-with-absolute-floor error: |a-b| / max(|a|, |b|, 1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / denom))


def numeric_grad(f, array: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar-valued f() w.r.t. `array`,
    perturbing entries in place."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f()
        flat[i] = orig - eps
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def numeric_grad_at(f, array: np.ndarray, index: int, eps: float = 1e-6) -> float:
    """Central difference for a single flat index of `array`."""
    flat = array.reshape(-1)
    orig = flat[index]
    flat[index] = orig + eps
    hi = f()
    flat[index] = orig - eps
    lo = f()
    flat[index] = orig
    return (hi - lo) / (2.0 * eps)


# -- literal DFT definitions ----------------------------------------------------


def naive_dft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    out = np.zeros_like(x)
    for k in range(n):
        for j in range(n):
            out[..., k] += x[..., j] * np.exp(-2j * np.pi * j * k / n)
    return out


def naive_idft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    out = np.zeros_like(x)
    for k in range(n):
        for j in range(n):
            out[..., k] += x[..., j] * np.exp(2j * np.pi * j * k / n)
    return out / n


def naive_dft2_real(x: np.ndarray) -> np.ndarray:
    """Real part of the 2-D DFT over the last two axes via explicit double sums."""
    x = np.asarray(x, dtype=np.complex128)
    return naive_dft(np.moveaxis(naive_dft(x), -1, -2)).real.swapaxes(-1, -2)


def naive_idft2_real(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    return naive_idft(np.moveaxis(naive_idft(x), -1, -2)).real.swapaxes(-1, -2)


# -- brute-force optimal transport ------------------------------------------------


def w1_linprog(u, v) -> float:
    """First Wasserstein distance as a transport LP over the full coupling
    polytope, solved with an off-the-shelf solver. Exact for small inputs."""
    from scipy.optimize import linprog

    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    n, m = u.size, v.size
    cost = np.abs(u[:, None] - v[None, :]).ravel()
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    assert res.success, res.message
    return float(res.fun)


# -- literal multi-head attention ---------------------------------------------------


def reference_attention(tokens, wq, wk, wv, wo, n_heads: int) -> np.ndarray:
    """Softmax(Q K^T / sqrt(d_k)) V per head with plain loops, then concat and
    output-project."""
    tokens = np.asarray(tokens, dtype=np.float64)
    n, d = tokens.shape
    dk = d // n_heads
    q_all = tokens @ wq
    k_all = tokens @ wk
    v_all = tokens @ wv
    heads = []
    for h in range(n_heads):
        sl = slice(h * dk, (h + 1) * dk)
        q, k, v = q_all[:, sl], k_all[:, sl], v_all[:, sl]
        scores = q @ k.T / np.sqrt(dk)
        weights = np.zeros_like(scores)
        for i in range(n):
            row = np.exp(scores[i] - scores[i].max())
            weights[i] = row / row.sum()
        heads.append(weights @ v)
    return np.concatenate(heads, axis=1) @ wo
