"""Forecast metrics, expert-routing diagnostics, and result tables."""

from __future__ import annotations

import csv
import io

import numpy as np

from . import autodiff as ad
from .data import ForecastWindow, Scaler
from .drift import wasserstein_1d
from .fourier import amplitude_spectrum
from .trainer import Checkpoint, _batches, _stack


def mse(yhat: np.ndarray, y: np.ndarray) -> float:
    yhat, y = np.asarray(yhat), np.asarray(y)
    if yhat.shape != y.shape:
        raise ValueError(f"shape mismatch: {yhat.shape} vs {y.shape}")
    return float(np.mean((yhat - y) ** 2))


def mae(yhat: np.ndarray, y: np.ndarray) -> float:
    yhat, y = np.asarray(yhat), np.asarray(y)
    if yhat.shape != y.shape:
        raise ValueError(f"shape mismatch: {yhat.shape} vs {y.shape}")
    return float(np.mean(np.abs(yhat - y)))


def imp(model_mse: float, baseline_mses: list[float]) -> float:
    """Signed percentage improvement over the baseline average."""
    if not baseline_mses:
        raise ValueError("need at least one baseline MSE")
    avg = float(np.mean(baseline_mses))
    if avg <= 0:
        raise ValueError("baseline average must be positive")
    return (avg - model_mse) / avg * 100.0


def evaluate_windows(
    ckpt: Checkpoint,
    windows: list[ForecastWindow],
    denormalize: Scaler | None = None,
    batch_size: int | None = None,
) -> dict:
    """Aggregate MSE/MAE over windows. Inputs are expected on the model's
    working (normalized) scale; pass a scaler to also report original-unit
    errors."""
    if not windows:
        raise ValueError("no windows to evaluate")
    model = ckpt.build_model()
    bs = batch_size or ckpt.config.batch_size
    preds, targets = [], []
    with ad.no_grad():
        for idx in _batches(len(windows), bs, rng=None):
            xs, ys = _stack(windows, idx)
            preds.append(model.forward(xs, training=False).yhat.data)
            targets.append(ys)
    yhat = np.concatenate(preds)
    y = np.concatenate(targets)
    out = {"mse": mse(yhat, y), "mae": mae(yhat, y), "n_windows": len(windows)}
    if denormalize is not None:
        raw_yhat = denormalize.inverse(yhat)
        raw_y = denormalize.inverse(y)
        out["mse_denorm"] = mse(raw_yhat, raw_y)
        out["mae_denorm"] = mae(raw_yhat, raw_y)
    return out


def routing_report(
    ckpt: Checkpoint,
    windows: list[ForecastWindow],
    max_tokens: int = 4096,
    max_patches_per_cluster: int = 64,
    seed: int = 0,
    affinity_out: dict | None = None,
) -> dict:
    """Argmax-expert shares per branch plus an intra/inter-cluster drift
    summary over the routed raw patches. Patch pools are subsampled
    deterministically to keep the pairwise distance count bounded. Pass a
    dict as `affinity_out` to receive the per-branch affinity snapshot
    matrices (token x expert) for CSV export."""
    if not windows:
        raise ValueError("no windows to report on")
    model = ckpt.build_model()
    cfg = ckpt.config
    rng = np.random.default_rng(seed)
    report: dict = {"branches": {}}
    max_windows = max(1, max_tokens // (cfg.n_patches * windows[0].input.shape[1]))
    if len(windows) > max_windows:
        chosen = rng.choice(len(windows), size=max_windows, replace=False)
        windows = [windows[i] for i in sorted(chosen)]
    xs = np.stack([w.input for w in windows])
    with ad.no_grad():
        fwd = model.forward(xs, training=False)
    # raw per-token patches, aligned with the flattened (B, C, N) token order
    pools = {}
    for branch, s in (("time", fwd.s_time), ("freq", fwd.s_freq)):
        if s is None:
            continue
        assign = np.argmax(s.data, axis=1)
        if assign.size > max_tokens:
            pick = rng.choice(assign.size, size=max_tokens, replace=False)
        else:
            pick = np.arange(assign.size)
        pools[branch] = (assign, pick)
        if affinity_out is not None:
            affinity_out[branch] = s.data[pick]
    patch_values = _token_patches(xs, cfg)  # (M, P)
    for branch, (assign, pick) in pools.items():
        K = cfg.k_time if branch == "time" else cfg.k_freq
        shares = np.bincount(assign, minlength=K) / assign.size
        samples = patch_values[pick]
        if branch == "freq":
            samples = amplitude_spectrum(samples)
        labels = assign[pick]
        intra, inter = _cluster_drift(samples, labels, K, max_patches_per_cluster, rng)
        report["branches"][branch] = {
            "expert_share": shares.tolist(),
            "intra_cluster_w1": intra,
            "inter_cluster_w1": inter,
            "n_tokens": int(assign.size),
        }
    report["patch_len"] = cfg.patch_len
    report["stride"] = cfg.stride
    return report


def _token_patches(xs: np.ndarray, cfg) -> np.ndarray:
    from .patching import segment_batch

    patches = segment_batch(xs, cfg.patch_len, cfg.stride)  # (B, C, N, P)
    return patches.reshape(-1, cfg.patch_len)


def _cluster_drift(samples, labels, K, cap, rng) -> tuple[float | None, float | None]:
    groups = []
    for j in range(K):
        members = samples[labels == j]
        if members.shape[0] > cap:
            members = members[rng.choice(members.shape[0], size=cap, replace=False)]
        groups.append(members)
    intra, inter = [], []
    for a in range(K):
        ga = groups[a]
        for i in range(ga.shape[0]):
            for jdx in range(i + 1, ga.shape[0]):
                intra.append(wasserstein_1d(ga[i], ga[jdx]))
        for b in range(a + 1, K):
            gb = groups[b]
            for i in range(ga.shape[0]):
                for jdx in range(gb.shape[0]):
                    inter.append(wasserstein_1d(ga[i], gb[jdx]))
    return (
        float(np.mean(intra)) if intra else None,
        float(np.mean(inter)) if inter else None,
    )


def regime_purity(assignments: np.ndarray, regimes: np.ndarray) -> float:
    """Cluster purity of expert assignments against known regime labels:
    each expert votes for its majority regime."""
    assignments = np.asarray(assignments)
    regimes = np.asarray(regimes)
    if assignments.shape != regimes.shape:
        raise ValueError("assignments and regime labels must align")
    correct = 0
    for expert in np.unique(assignments):
        members = regimes[assignments == expert]
        correct += int(np.bincount(members).max())
    return correct / assignments.size


COLUMNS = ("dataset", "H", "MSE", "MAE", "IMP")


def report_table(rows: list[dict]) -> dict:
    """Stable-order results table; returns {text, csv, json} renderings."""
    if not rows:
        raise ValueError("need at least one result row")
    ordered = sorted(rows, key=lambda r: (str(r["dataset"]), int(r["H"])))
    records = []
    for r in ordered:
        records.append(
            {
                "dataset": str(r["dataset"]),
                "H": int(r["H"]),
                "MSE": float(r["MSE"]),
                "MAE": float(r["MAE"]),
                "IMP": None if r.get("IMP") is None else float(r["IMP"]),
            }
        )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records:
        writer.writerow(
            [r["dataset"], r["H"], repr(r["MSE"]), repr(r["MAE"]),
             "" if r["IMP"] is None else repr(r["IMP"])]
        )
    widths = [max(len(str(c)), 10) for c in COLUMNS]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(COLUMNS, widths))]
    for r in records:
        cells = [
            r["dataset"], str(r["H"]), f"{r['MSE']:.6f}", f"{r['MAE']:.6f}",
            "-" if r["IMP"] is None else f"{r['IMP']:.1f}%",
        ]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return {"text": "\n".join(lines), "csv": buf.getvalue(), "json": records}
