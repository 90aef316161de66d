"""Secret-key-rate curves of the four configured source models.

Sweeps channel loss for the measured molecular source, the attenuated
laser with and without decoy states, and the idealized high-efficiency
molecular source, printing the crossover structure that motivates source
optimization: the measured source (mu=0.08) sits below the decoy-state
laser, while the extrapolated source (mu_ref~0.31) overtakes it.

Run:  python demos/rate_curves.py [--plot out.png]
"""

import argparse

import numpy as np

from qkd_linkbench.rates import LinkParams, sweep_loss
from qkd_linkbench.sources import SpsModel, WcpModel

link_sps = LinkParams(eta_bob=0.24, p_dark=2e-6, e_det=0.039, rep_rate=80e6)
link_wcp = LinkParams(eta_bob=0.24, p_dark=2e-6, e_det=0.008, rep_rate=80e6)

models = {
    "sps (mu=0.08)": (SpsModel(0.08, 0.02), link_sps),
    "wcp no decoy (mu=0.5)": (WcpModel(0.5), link_wcp),
    "wcp decoy (mu=0.5, nu=0.05)": (WcpModel(0.5, 0.05), link_wcp),
    "sps ideal (mu_ref=0.31)": (SpsModel(0.31, 0.02), link_sps),
}

grid = list(np.arange(0.0, 41.0, 1.0))
curves = {}
for name, (model, link) in models.items():
    curves[name] = [pt.skr_bps for _, pt in sweep_loss(link, [model], grid)]

header = f"{'loss_db':>8}" + "".join(f"{name:>30}" for name in curves)
print(header)
for i, db in enumerate(grid):
    if db % 5 == 0:
        row = f"{db:8.0f}" + "".join(f"{curves[n][i]:30.3g}" for n in curves)
        print(row)

print()
print("back-to-back ratios relative to the decoy-state laser:")
decoy0 = curves["wcp decoy (mu=0.5, nu=0.05)"][0]
for name, c in curves.items():
    print(f"  {name:32s} {c[0] / decoy0:6.2f}x")


def save_plot(path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, c in curves.items():
        ax.semilogy(grid, np.maximum(c, 1e-3), label=name)
    ax.set_xlabel("channel loss (dB)")
    ax.set_ylabel("secret key rate (bit/s)")
    ax.set_ylim(bottom=1.0)
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    print(f"\nplot written to {path}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--plot", metavar="PNG", help="write a log-scale figure")
    args = ap.parse_args()
    if args.plot:
        save_plot(args.plot)
