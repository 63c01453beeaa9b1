"""Figure rendering for benchmark reports and training metrics.

The CLI's report paths write line-delimited records as the primary output and
render matplotlib figures next to them; these helpers own the rendering so
library users can re-plot saved reports without re-running anything.
"""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def render_bench_figures(rows: list[dict], outdir) -> list[str]:
    """Runtime and ground-state hit-rate figures from bench report rows.

    Each row: {size, instance, backend, seconds, min_energy, exact_min?, hit?}.
    Returns the written file paths.
    """
    os.makedirs(outdir, exist_ok=True)
    written = []

    by_backend_runtime = defaultdict(lambda: defaultdict(list))
    by_backend_hits = defaultdict(lambda: defaultdict(list))
    for row in rows:
        by_backend_runtime[row["backend"]][row["size"]].append(row["seconds"])
        if row.get("hit") is not None:
            by_backend_hits[row["backend"]][row["size"]].append(bool(row["hit"]))

    fig, ax = plt.subplots(figsize=(6, 4))
    for backend, per_size in sorted(by_backend_runtime.items()):
        sizes = sorted(per_size)
        means = [sum(per_size[s]) / len(per_size[s]) for s in sizes]
        ax.plot(sizes, means, marker="o", label=backend)
    ax.set_xlabel("problem size (spins)")
    ax.set_ylabel("mean runtime (s)")
    ax.set_yscale("log")
    ax.set_title("Sampler runtime by problem size")
    ax.legend()
    path = os.path.join(outdir, "bench_runtime.png")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    if by_backend_hits:
        fig, ax = plt.subplots(figsize=(6, 4))
        for backend, per_size in sorted(by_backend_hits.items()):
            sizes = sorted(per_size)
            rates = [sum(per_size[s]) / len(per_size[s]) for s in sizes]
            ax.plot(sizes, rates, marker="s", label=backend)
        ax.set_xlabel("problem size (spins)")
        ax.set_ylabel("ground-state hit rate")
        ax.set_ylim(-0.05, 1.05)
        ax.set_title("Ground-state recovery vs brute force")
        ax.legend()
        path = os.path.join(outdir, "bench_hit_rate.png")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_training_curves(metrics: list[dict], path) -> str:
    """Loss (and exact NLL when present) per epoch from training metrics."""
    epochs = [m["epoch"] for m in metrics]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [m["loss"] for m in metrics], label="energy-difference loss")
    if any("nll" in m for m in metrics):
        ax.plot(
            [m["epoch"] for m in metrics if "nll" in m],
            [m["nll"] for m in metrics if "nll" in m],
            label="exact NLL",
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel("value")
    ax.set_title("Training metrics")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def render_rerank_weights(records: list[dict], path) -> str:
    """Bar chart of per-candidate residual weights."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([r["index"] for r in records], [r["weight"] for r in records])
    ax.set_xlabel("candidate index")
    ax.set_ylabel("residual weight")
    ax.set_title("Residual-energy reranking weights")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)
