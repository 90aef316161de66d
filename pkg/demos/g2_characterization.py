"""Source characterization: pulsed correlation and pump saturation.

Synthesizes a split-detector time-tag record of a pulsed emitter with a
known pair probability and lifetime, builds the start-stop coincidence
histogram, and refits the correlation model to recover g2(0) and tau_c.
Then fits the saturation model to the bundled pump-power dataset and
derives the per-pulse mean photon number at the operating power.

Run:  python demos/g2_characterization.py
"""

import pathlib

import numpy as np

from qkd_linkbench.montecarlo import generate_timetags
from qkd_linkbench.photonstats import (
    EmitterDynamics,
    coincidence_histogram,
    fit_g2_pulsed,
    fit_saturation,
    saturation_queries,
)

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"

print("generating 4e6 excitation cycles at 40 MHz, g2(0)=0.02, tau_c=3.6 ns ...")
dyn = EmitterDynamics(tau_c_ns=3.6, g2_zero=0.02, mu=0.1)
stream = generate_timetags(dyn, duration_s=0.1, rep_period_ns=25.0, seed=11)
print(f"  {len(stream)} detection events on two channels")

hist = coincidence_histogram(stream, bin_width_ps=100, window_ps=16 * 25_000)
res = fit_g2_pulsed(hist)
print("pulsed-correlation fit:")
for name, value, sigma in zip(res.param_names, res.params, res.sigma):
    print(f"  {name} = {value:.4f} +- {sigma:.4f}")

suppressed = hist.normalized[np.abs(hist.bin_centers_ps) < 12_500].sum()
print(f"  raw central/lateral integral ratio = {suppressed:.4f} "
      f"(counts lifetime tails of the neighbour peaks; the fit separates them)")

print("\nsaturation fit on data/saturation_points.csv:")
pts = np.loadtxt(DATA / "saturation_points.csv", delimiter=",", skiprows=2)
sat = fit_saturation(pts)
for name, value, sigma in zip(sat.param_names, sat.params, sat.sigma):
    print(f"  {name} = {value:.4g} +- {sigma:.2g}")

power = 2.0 * sat["p_sat"]  # operating point at twice the saturation power
q = saturation_queries(sat, power, rep_rate=80e6)
print(f"  at s = {q['s']:.2f}: collected rate {q['rate']:.3g} cps, "
      f"mean photon number per pulse {q['mu']:.3f}")
