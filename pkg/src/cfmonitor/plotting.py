"""Line plots of experiment CSVs, written next to the CSV as PNG."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

AXIS_LABELS = {
    "D_sweep": "Area side D (km)",
    "M_sweep": "Number of MNs M (M N = 240)",
    "csi_cases": "CSI availability",
    "N_sweep": "Antennas per MN N",
    "Nr_sweep": "UR antennas Nr (Nt = Nr)",
    "rhoJ_sweep": "Jamming power P_J (W)",
}
LOG_X = {"rhoJ_sweep"}


def _read(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _msp_figure(rows, tag):
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    categorical = tag == "csi_cases"
    series = defaultdict(list)
    for r in rows:
        series[(r["scheme"], r["csi_case"], r["precoder"])].append(r)
    if categorical:
        labels = list(dict.fromkeys(r["sweep_value"] for r in rows))
        for prec in sorted({r["precoder"] for r in rows}):
            pts = [r for r in rows if r["precoder"] == prec]
            x = [labels.index(r["sweep_value"]) for r in pts]
            y = [float(r["msp_mean"]) for r in pts]
            e = [2 * float(r["msp_stderr"]) for r in pts]
            ax.errorbar(x, y, yerr=e, marker="o", capsize=3, label=prec)
        ax.set_xticks(range(len(labels)), labels)
    else:
        for (scheme, case, prec), pts in sorted(series.items()):
            x = [float(r["sweep_value"]) for r in pts]
            y = [float(r["msp_mean"]) for r in pts]
            e = [2 * float(r["msp_stderr"]) for r in pts]
            ax.errorbar(x, y, yerr=e, marker="o", capsize=3, label=f"{scheme} {case} {prec}")
        if tag in LOG_X:
            ax.set_xscale("log")
    ax.set_xlabel(AXIS_LABELS.get(tag, "sweep value"))
    ax.set_ylabel("MSP")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    return fig


def _asymptotic_figure(rows):
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.4))
    for ax, sweep, xlabel in ((axes[0], "observers", "observing MNs M_o"),
                              (axes[1], "jammers", "jamming MNs M_J")):
        sub = [r for r in rows if r["sweep"] == sweep]
        for q in dict.fromkeys(r["quantity"] for r in sub):
            pts = [r for r in sub if r["quantity"] == q]
            x = [float(r["nodes"]) for r in pts]
            y = [float(r["value"]) for r in pts]
            if all(v > 0 for v in y):
                ax.loglog(x, y, marker="o", label=q)
        ax.set_xlabel(xlabel)
        ax.grid(alpha=0.3, which="both")
        ax.legend(fontsize=7)
    axes[0].set_ylabel("RMS norm")
    return fig


def plot_experiment(csv_path, png_path, tag):
    """Render ``csv_path`` to ``png_path``; returns the PNG path."""
    rows = _read(csv_path)
    fig = _asymptotic_figure(rows) if tag == "asymptotics" else _msp_figure(rows, tag)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return Path(png_path)
