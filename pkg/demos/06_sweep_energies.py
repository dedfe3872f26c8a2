"""Energy versus IRS size and rate requirement (reduced-size sweep).

More reflective elements enrich the coverage, so the planner can afford
straighter (cheaper) paths; tightening the rate requirement costs energy.
"""

from irsplan.radiomap import build_map
from irsplan.scenario import load_scenario, scenario_overrides
from irsplan.sco import ScoConfig, run
from irsplan.snrmodel import fit

base = load_scenario("configs/desk_scenario.cfg")

print(f"{'M':>4} {'rmin Gbps':>10} {'seed path':>10} {'energy J':>10} "
      f"{'avg rate':>9} {'iters':>6}")
for m in (0, 16, 64, 128):
    sc_m = scenario_overrides(base, n_irs_elements=m)
    radio_map = build_map(sc_m, nx=50, ny=30, draws_per_cell=100, seed=7)
    model = fit(radio_map, sc_m)
    for rmin in (2.0, 2.5):
        sc = scenario_overrides(sc_m, min_avg_rate=rmin * 1e9)
        result = run(sc, model, ScoConfig())
        if result.feasible:
            print(f"{m:>4} {rmin:>10.1f} {result.init_label:>10} "
                  f"{result.energy:>10.1f} "
                  f"{result.final_audit.avg_rate / 1e9:>9.3f} "
                  f"{len(result.trace) - 1:>6}")
        else:
            print(f"{m:>4} {rmin:>10.1f} {'-':>10} {'infeasible':>10}")
