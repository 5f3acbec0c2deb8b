"""Size a single orbit for a target share of satellite-waiting AoI.

1. a pilot run measures how often GTs get scheduled, giving the mean
   ground-to-air AoI;
2. the closed-form share and a Monte-Carlo share are computed for a range
   of satellite counts;
3. the binary search picks a count for several targets, using far fewer
   probes than a scan.

    python demos/constellation_sizing.py
"""
from sagin_aoi import analytics as A
from sagin_aoi.config import ScenarioConfig
from sagin_aoi.constellation import sat_window

cfg = ScenarioConfig()
pilot = A.estimate_from_pilot(cfg, "is-uav", "dmla", seed=0, slots=300)
delay = A.nominal_a2s_delay(cfg)
print(f"pilot: {pilot.slots} slots, mean G2A AoI {pilot.e_g2a:.2f} slots, A2S push time {delay * 1e3:.1f} ms")

# a slow ground segment as well, so the sizing is not decided by geometry alone
for e_g in (pilot.e_g2a * cfg.slot_seconds, 200.0):
    analytic = A.analytic_saoi_oracle(cfg, e_g, delay)
    mc = A.mc_saoi_oracle(cfg, e_g, delay, seed=0)
    print(f"\nmean G2A AoI {e_g:.1f} s")
    print("  L   interval(s)  wait(s)  share(closed form)  share(MC)")
    for L in range(4, 14):
        w = sat_window(cfg, L)
        print(f"{L:3d}  {w.interval:11.1f}  {w.wait_time:7.1f}  {analytic(L):18.4f}  {mc(L):9.4f}")
    for target in (0.15, 0.10, 0.05, 0.01):
        band = (target / 2, target)
        lo, hi = A.search_bounds(cfg, e_g, delay, band)
        res = A.slsdo_search(mc, band, lo, hi)
        need = A.required_sats(res, target)
        print(f"  target <= {target:.2f}: {need} satellites per orbit "
              f"(probes {len(res.probes)}, bounds [{lo}, {hi}], band hit {res.feasible})")
