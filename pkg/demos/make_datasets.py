"""Regenerate the bundled datasets under data/ deterministically.

Each file is a small synthetic measurement produced by the library's own
generators with fixed seeds, so the fit demos and CLI examples have known
ground truth:

  g2_pulsed_histogram.csv   coincidence histogram of an antibunched pulsed
                            stream (g2(0)=0.02, tau_c=3.6 ns, 40 MHz)
  g2_longtime_histogram.csv coarse-binned histogram of a blinking emitter
                            (ON=0.77, trap dwell 2 us)
  saturation_points.csv     pump-power saturation curve
                            (a=0.02, b=0.01, R_inf=10 Mcps, p_S=1.5)
  qber_sps.csv              error-rate-vs-loss points from the molecular
                            source model (P_D=2e-6, e_det=3.9%, mu=0.08)
  qber_wcp.csv              same for the attenuated laser
                            (P_D=2e-6, e_det=0.8%, mu=0.5)
"""

import pathlib

import numpy as np

from qkd_linkbench.montecarlo import generate_timetags
from qkd_linkbench.photonstats import EmitterDynamics, coincidence_histogram, write_histogram_csv
from qkd_linkbench.rates import LinkParams, channel_from_db, qber_sps, qber_wcp
from qkd_linkbench.sources import SpsModel, WcpModel

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def make_g2_pulsed():
    dyn = EmitterDynamics(tau_c_ns=3.6, g2_zero=0.02, mu=0.1)
    stream = generate_timetags(dyn, duration_s=0.1, rep_period_ns=25.0, seed=11)
    hist = coincidence_histogram(stream, bin_width_ps=100, window_ps=16 * 25_000)
    write_histogram_csv(hist, DATA / "g2_pulsed_histogram.csv")


def make_g2_longtime():
    dyn = EmitterDynamics(tau_c_ns=3.6, g2_zero=0.02, mu=0.1,
                          on_fraction=0.77, tau_trap_ns=2000.0)
    stream = generate_timetags(dyn, duration_s=0.05, rep_period_ns=25.0, seed=5)
    hist = coincidence_histogram(stream, bin_width_ps=200_000, window_ps=20_000_000,
                                 normalization="raw")
    write_histogram_csv(hist, DATA / "g2_longtime_histogram.csv")


def make_saturation():
    rng = np.random.default_rng(21)
    p = np.linspace(0.05, 8.0, 24)
    rate = 0.02e6 + 0.01e6 * p + 10e6 * p / (p + 1.5)
    rate = rate + rng.normal(0.0, 2e4, len(p))
    with open(DATA / "saturation_points.csv", "w") as fh:
        fh.write("# qkd-linkbench v1\npower,rate\n")
        for pi, ri in zip(p, rate):
            fh.write(f"{pi:.9g},{ri:.9g}\n")


def make_qber_curves():
    loss = np.arange(0.0, 31.0, 2.0)
    link_sps = LinkParams(eta_bob=0.24, p_dark=2e-6, e_det=0.039, rep_rate=80e6)
    link_wcp = LinkParams(eta_bob=0.24, p_dark=2e-6, e_det=0.008, rep_rate=80e6)
    rng = np.random.default_rng(31)
    sps, wcp = SpsModel(0.08, 0.02), WcpModel(0.5)
    for name, link, model, qber_fn, noise in (
        ("qber_sps.csv", link_sps, sps, qber_sps, 5e-4),
        ("qber_wcp.csv", link_wcp, wcp, qber_wcp, 2e-4),
    ):
        with open(DATA / name, "w") as fh:
            fh.write("# qkd-linkbench v1\nloss_db,qber\n")
            for db in loss:
                q = qber_fn(channel_from_db(link, db), model)
                fh.write(f"{db:.9g},{q + rng.normal(0.0, noise):.9g}\n")


if __name__ == "__main__":
    DATA.mkdir(exist_ok=True)
    make_g2_pulsed()
    make_g2_longtime()
    make_saturation()
    make_qber_curves()
    for f in sorted(DATA.glob("*.csv")):
        print(f, f.stat().st_size, "bytes")
