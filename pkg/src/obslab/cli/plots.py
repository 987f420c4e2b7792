"""Matplotlib figures for the report directory (Agg backend, fixed sizes)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({"svg.hashsalt": "obslab", "path.simplify": False})


def trace_figure(seqs, refs: dict, basis):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for i, (seq, _) in enumerate(seqs):
        for name, mu in refs.items():
            ax.loglog(seq.checkpoints, np.maximum(seq.distances_to(mu), 1e-16), lw=1,
                      label=f"orbit {i} to {name}")
        ax.loglog(seq.checkpoints[1:], 1.0 / seq.checkpoints[1:], "k:", lw=0.8)
    ax.set_xlabel("n")
    ax.set_ylabel("weak* distance")
    ax.set_title("distance of empirical measures to references")
    if refs:
        ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    return fig


def observability_figure(profiles: dict):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name, p in profiles.items():
        ax.errorbar(p.epsilons, p.o, yerr=np.clip([p.o - p.ci_low, p.ci_high - p.o], 0, None), marker="o",
                    capsize=3, label=name)
    ax.set_xscale("log")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("o(epsilon)")
    ax.set_title("observability size")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def decomposition_figure(dec):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    sizes = dec.sizes
    diam = np.array([r.diameter for r in dec.records])
    ax1.bar(np.arange(sizes.size), sizes, color=np.where(diam == 0.0, "tab:blue", "tab:red"))
    ax1.set_xlabel("record")
    ax1.set_ylabel("attracting size")
    ax1.set_title("records (blue: diameter 0)")
    ens = dec.ensemble
    pts = ens.points
    owner = np.full(ens.size, -1)
    for r in dec.records:
        owner[r.basin] = r.index
    if pts.shape[1] == 1:
        ax2.scatter(pts[:, 0], owner, s=4)
        ax2.set_xlabel("x0")
        ax2.set_ylabel("record")
    else:
        ax2.scatter(pts[:, 0], pts[:, 1], c=owner, s=4, cmap="tab20")
        ax2.set_xlabel("x0")
        ax2.set_ylabel("y0")
    ax2.set_title("basins of the sample points")
    fig.tight_layout()
    return fig


def equilibrium_figure(pool, entropy):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    V = np.array([p.V for p in pool])
    err = np.array([p.V_err for p in pool])
    ax1.errorbar(np.arange(V.size), V, yerr=np.abs(err), fmt="o", capsize=3)
    ax1.axhline(0.0, color="k", lw=0.8)
    ax1.set_xlabel("test measure")
    ax1.set_ylabel("V = h - L")
    ax1.set_title("PLY residuals")
    rows = [r for r in entropy.table if np.isfinite(r[2])]
    ax2.plot([r[0] for r in rows], [r[2] for r in rows], "o-")
    ax2.set_xlabel("k")
    ax2.set_ylabel("H_{k+1} - H_k")
    ax2.set_title("block-entropy slopes")
    fig.tight_layout()
    return fig
