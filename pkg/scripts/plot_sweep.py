"""Figure-style panels from a sweep's plot_data.csv: precision vs separation per SNR.

    python scripts/plot_sweep.py out/sweep_fig2/plot_data.csv -o fig2.png
"""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def load(path):
    panels = defaultdict(list)
    with open(path) as fh:
        for row in csv.DictReader(fh):
            panels[float(row["panel"])].append({k: float(v) for k, v in row.items()})
    return {p: sorted(rows, key=lambda r: r["epsilon"]) for p, rows in sorted(panels.items())}


def plot(panels, out):
    n = len(panels)
    cols = min(n, 3)
    rows = -(-n // cols)
    fig, axes = plt.subplots(rows, cols, figsize=(4.2 * cols, 3.4 * rows), squeeze=False)
    for ax, (panel, data) in zip(axes.ravel(), panels.items()):
        eps = np.array([r["epsilon"] for r in data])
        ax.errorbar(eps, [r["precision"] for r in data], yerr=[r["precision_err"] for r in data],
                    fmt="o", ms=4, capsize=2, label="estimator")
        ax.plot(eps, [r["fi_het"] for r in data], "-", label="heterodyne CRB")
        ax.plot(eps, [r["fi_ds"] for r in data], "--", label="direct sensing")
        ax.set_title(f"S = {panel:g}")
        ax.set_xlabel("separation eps")
        ax.set_ylabel("precision per photon")
        inset = ax.inset_axes([0.62, 0.12, 0.34, 0.3])
        inset.axhline(0, color="0.6", lw=0.8)
        inset.plot(eps, [r["bias"] for r in data], ".-", ms=3)
        inset.set_title("bias", fontsize=7)
        inset.tick_params(labelsize=6)
    for ax in axes.ravel()[n:]:
        ax.axis("off")
    axes[0, 0].legend(fontsize=7, loc="upper left")
    fig.tight_layout()
    fig.savefig(out, dpi=150)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("plot_data")
    parser.add_argument("-o", "--out", default="sweep.png")
    args = parser.parse_args()
    plot(load(args.plot_data), args.out)


if __name__ == "__main__":
    main()
