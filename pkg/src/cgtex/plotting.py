"""Figures written next to the CSV/JSON reports."""
from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings, so reruns give byte-identical files
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_energy_trace(rows, path, title: str = "energy per iteration"):
    """``rows`` are ``(iteration, chain, energy)``; one faint line per chain plus the mean."""
    per_chain = defaultdict(list)
    for it, k, e in rows:
        per_chain[k].append((it, e))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for k in sorted(per_chain):
        pts = np.array(per_chain[k])
        ax.plot(pts[:, 0], pts[:, 1], lw=0.8, alpha=0.5, label=f"chain {k}")
    its = sorted({r[0] for r in rows})
    mean = [np.mean([e for i, _, e in rows if i == it]) for it in its]
    ax.plot(its, mean, color="k", lw=1.5, label="mean")
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("energy")
    ax.set_title(title)
    ax.legend(fontsize=7, frameon=False)
    _save(fig, path)


def plot_inpaint_energies(start, end, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    x = np.arange(1, len(start) + 1)
    ax.plot(x, start, "o-", label="after template search")
    ax.plot(x, end, "s-", label="after synthesis")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("energy against template")
    ax.legend(fontsize=8, frameon=False)
    _save(fig, path)


def plot_scores(ids, scores, path):
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(ids)), 3.2))
    ax.bar(range(len(ids)), scores, color="0.4")
    ax.set_xticks(range(len(ids)))
    ax.set_xticklabels(ids, rotation=45, ha="right", fontsize=7)
    ax.set_ylim(0, 1)
    ax.set_ylabel("MS-SSIM")
    _save(fig, path)
