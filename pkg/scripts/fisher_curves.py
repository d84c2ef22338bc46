"""Per-photon Fisher information of the three schemes over a separation grid.

    python scripts/fisher_curves.py --n-bar 50 -o fisher.png --csv fisher.csv
"""

import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from hetsr.fisher import Scheme, fisher_curve


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-bar", type=float, default=50.0)
    parser.add_argument("--eps-max", type=float, default=2.0)
    parser.add_argument("--points", type=int, default=80)
    parser.add_argument("-o", "--out", default="fisher.png")
    parser.add_argument("--csv")
    args = parser.parse_args()

    eps = np.linspace(args.eps_max / args.points, args.eps_max, args.points)
    curves = [fisher_curve(s, eps, None if s is Scheme.DIRECT_SENSING else args.n_bar) for s in Scheme]

    fig, ax = plt.subplots(figsize=(5, 3.6))
    for c in curves:
        ax.plot(c.epsilons, c.values, label=c.scheme.value.replace("_", " "))
    ax.set_xlabel("separation eps")
    ax.set_ylabel("per-photon Fisher information")
    ax.set_title(f"n_bar = {args.n_bar:g}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["epsilon", "value", "scheme", "n_bar"])
            writer.writeheader()
            for c in curves:
                writer.writerows(c.rows())


if __name__ == "__main__":
    main()
