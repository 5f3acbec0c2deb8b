"""Compare the greedy lower/upper-layer baselines across battery sizes.

A larger UAV battery keeps the task cycle going for longer, so every scheme
collects more data; the interesting part is how the gap between schemes
changes.  Runs 3 battery levels x 4 schemes x 5 seeds (about half a minute).

    python demos/scheme_comparison.py
"""
from sagin_aoi.config import ScenarioConfig
from sagin_aoi.sim import SweepSpec, run_sweep, summarize

schemes = [("is-uav", "dmla"), ("dc-uav", "dmla"), ("td-uav", "uafp"), ("o-uav", "fdpc")]
caps = [5000.0, 10000.0, 20000.0]
rows = run_sweep(SweepSpec("uav_batt_cap", caps, schemes, list(range(5)), ScenarioConfig()))

for metric, unit, scale in (("D_G", "Mbit", 1e-6), ("D_hat_U", "Mbit", 1e-6), ("A_G", "slots", 1.0)):
    s = summarize(rows, metric)
    print(f"\n{metric} ({unit}), mean +- standard error over 5 seeds")
    print(f"{'scheme':>14}" + "".join(f"{c:>18.0f}" for c in caps))
    for l1, l2 in schemes:
        cells = "".join(f"{s[(c, l1, l2)][0] * scale:>11.2f} +-{s[(c, l1, l2)][1] * scale:5.2f}" for c in caps)
        print(f"{l1 + ':' + l2:>14}{cells}")

failed = [r for r in rows if r["error"]]
print(f"\n{len(rows)} episodes, {len(failed)} failed")
