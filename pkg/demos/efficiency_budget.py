"""Walking the source-efficiency chain to the extrapolated mean photon number.

The measured per-pulse photon number factors into sender optics,
collection geometry, quantum yield, pumping efficiency and the emitting
time fraction.  Inverting the chain with measured factors extracts the
quantum yield; rerunning it forward with idealized optics and collection
gives the mean photon number an optimized setup could reach.

Run:  python demos/efficiency_budget.py
"""

from qkd_linkbench.budget import EfficiencyBudget, extract_qy, extrapolate_mu_ref, pump_efficiency

mu_mol = 0.08
on_frac = 0.77
eta_pump = 0.47
print(f"measured: mu_mol={mu_mol}, ON={on_frac}, eta_pump={eta_pump} "
      f"(saturation model would give {pump_efficiency(0.75, 2.0):.2f})")

for label, eta_col in (("enhanced collection", 0.74), ("worst-case collection", 0.44)):
    measured = EfficiencyBudget(eta_opt_alice=0.54, eta_col=eta_col,
                                eta_pump=eta_pump, on_frac=on_frac)
    qy = extract_qy(mu_mol, measured)
    print(f"\n{label} (eta_col={eta_col}):")
    print(f"  extracted quantum yield {qy:.3f}")
    qy_ref = round(qy, 1)  # reference value carried at one decimal
    ideal = EfficiencyBudget(eta_opt_alice=0.90, eta_col=0.99, eta_pump=0.75,
                             on_frac=on_frac, qy=qy_ref)
    print(f"  idealized chain 0.90 * 0.99 * 0.75 * {qy_ref} * {on_frac} "
          f"-> mu_ref = {extrapolate_mu_ref(ideal):.3f}")
