"""Fit the distance-power-law SNR model to a radio map, per visibility class.

The direct gain should land near ref_gain * n_antennas and the exponents
near 2 (clear) / 4.5 (blocked); the reflected-path gain grows roughly with
the square of the IRS element count.
"""

from irsplan.radiomap import build_map
from irsplan.scenario import load_scenario, scenario_overrides
from irsplan.snrmodel import fit

scenario = load_scenario("configs/desk_scenario.cfg")
print(f"direct gain reference: ref_gain * N = "
      f"{scenario.ref_gain * scenario.n_antennas:.4f}\n")

for m in (0, 64):
    sc = scenario_overrides(scenario, n_irs_elements=m)
    radio_map = build_map(sc, nx=50, ny=30, draws_per_cell=100, seed=7)
    model = fit(radio_map, sc)
    print(f"M = {m} IRS elements:")
    for link, cf in model.fits.items():
        inherited = f"  [inherited from {cf.inherited_from}]" if cf.inherited_from else ""
        print(f"  {link.label():22s} gain_irs={cf.gain_irs:9.4f} "
              f"gain_cross={cf.gain_cross:8.4f} gain_direct={cf.gain_direct:7.4f} "
              f"exp_irs={cf.exp_irs:5.2f} exp_ap={cf.exp_ap:5.2f} "
              f"rms={cf.residual_rms:.4f} cells={cf.n_cells}{inherited}")
    print()
