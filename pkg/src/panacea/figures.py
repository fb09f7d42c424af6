"""Matplotlib figure rendering for simulation reports.

Figures are a convenience view over the CSV/JSON artifacts, which remain
canonical. Rendering is deterministic: the Agg backend, fixed DPI and no
timestamps in the output files.
"""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_SAVE_KW = {"dpi": 100, "metadata": {"Software": "panacea-aqs"}}


def throughput_figure(reports, path) -> None:
    """Effective TOPS vs activation sparsity, one line per architecture, at
    the largest problem size and max weight sparsity in the collection."""
    if not reports:
        raise ValueError("no report entries to plot")
    size = max((r.m, r.k, r.n) for r in reports)
    rho_w = max(r.rho_w for r in reports if (r.m, r.k, r.n) == size)
    series = defaultdict(list)
    for r in reports:
        if (r.m, r.k, r.n) == size and abs(r.rho_w - rho_w) < 1e-9:
            series[r.arch].append((r.rho_x, r.effective_tops))
    fig, ax = plt.subplots(figsize=(6, 4))
    for arch in sorted(series):
        pts = sorted(series[arch])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=arch)
    ax.set_xlabel("activation HO vector sparsity")
    ax.set_ylabel("effective TOPS (model-relative)")
    ax.set_title(f"throughput, {size[0]}x{size[1]}x{size[2]}, rho_w={rho_w:.2f}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def energy_breakdown_figure(reports, table, path) -> None:
    """Stacked per-architecture energy split into compute, SRAM and DRAM."""
    if not reports:
        raise ValueError("no report entries to plot")
    archs, compute, sram, dram = [], [], [], []
    agg = defaultdict(lambda: [0.0, 0.0, 0.0])
    for r in reports:
        c = r.counters
        a = agg[r.arch]
        a[0] += (c.mults + c.compensation_mults) * table["mult_4x4"] + (
            c.adds + c.compensation_adds
        ) * table["add_8b"]
        a[1] += (
            c.sram_read_nibbles * table["sram_read_nibble"]
            + c.sram_write_nibbles * table["sram_write_nibble"]
        )
        a[2] += (c.dram_nibbles + c.rle_index_nibbles) * table["dram_nibble"]
    for arch in sorted(agg):
        archs.append(arch)
        compute.append(agg[arch][0])
        sram.append(agg[arch][1])
        dram.append(agg[arch][2])
    fig, ax = plt.subplots(figsize=(6, 4))
    bottom = [0.0] * len(archs)
    for label, vals in (("compute", compute), ("sram", sram), ("dram", dram)):
        ax.bar(archs, vals, bottom=bottom, label=label)
        bottom = [b + v for b, v in zip(bottom, vals)]
    ax.set_ylabel("energy (pJ, placeholder table)")
    ax.set_title("energy breakdown by component class")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def sparsity_figure(labels, rho_w_vals, rho_x_vals, path) -> None:
    """Per-layer HO vector sparsity bars (weights and activations)."""
    if not labels:
        raise ValueError("no layers to plot")
    xs = range(len(labels))
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 0.5), 4))
    width = 0.4
    ax.bar([x - width / 2 for x in xs], rho_w_vals, width, label="rho_w")
    ax.bar([x + width / 2 for x in xs], rho_x_vals, width, label="rho_x")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("HO vector sparsity")
    ax.set_title("per-layer slice-vector sparsity")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
