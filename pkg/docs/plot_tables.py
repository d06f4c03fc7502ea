"""Plot the tables written by circulon subcommands.

Usage: python3 plot_tables.py OUT_DIR

Every table found in OUT_DIR among trajectory.txt, noise.txt and qsl.txt is
plotted in a PDF file of the same name.
"""

import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from circulon.tables import read_comment_header


def load(path: Path) -> dict:
    columns = read_comment_header(path)["columns"]
    return dict(zip(columns, np.loadtxt(path, comments="#", ndmin=2).T))


def plot_trajectory(data: dict) -> plt.Figure:
    fig, (ax_m, ax_z) = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
    ax_m.plot(data["t_ns"], data["mean_m"], label=r"$\langle m \rangle$")
    ax_m.fill_between(
        data["t_ns"],
        data["mean_m"] - data["sigma_m"],
        data["mean_m"] + data["sigma_m"],
        alpha=0.3,
    )
    ax_m.set_ylabel(r"$m_\ell$")
    ax_m.legend()
    for name in ("X", "Y", "Z"):
        ax_z.plot(data["t_ns"], data[name], label=name)
    ax_z.plot(data["t_ns"], data["scs_overlap"], "k--", label="SCS overlap")
    ax_z.set_xlabel("t (ns)")
    ax_z.legend()
    return fig


def plot_noise(data: dict) -> plt.Figure:
    fig, ax = plt.subplots()
    ax.errorbar(100 * data["f_noise"], data["mean"], yerr=data["std"], fmt="o-")
    ax.set_xlabel("RF noise (%)")
    ax.set_ylabel("fidelity")
    return fig


def plot_qsl(data: dict) -> plt.Figure:
    fig, (ax_n, ax_e) = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
    valid = data["valid"] > 0
    for mask, style in ((valid, "o"), (~valid, "x")):
        ax_n.semilogy(data["t_stop_ns"][mask], data["n_iter"][mask], style)
        ax_e.plot(data["t_stop_ns"][mask], data["peak_v_per_cm"][mask], style)
    ax_n.set_ylabel("iterations")
    ax_e.set_ylabel("peak field (V/cm)")
    ax_e.set_xlabel("pulse duration (ns)")
    return fig


PLOTTERS = dict(trajectory=plot_trajectory, noise=plot_noise, qsl=plot_qsl)

if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "circulon_out")
    for name, plotter in PLOTTERS.items():
        table = out / f"{name}.txt"
        if table.is_file():
            plotter(load(table)).savefig(out / f"{name}.pdf", bbox_inches="tight")
