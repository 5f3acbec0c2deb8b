"""Train the graph agent on the one-UAV / two-GT toy and compare it with
a random policy on the same evaluation episodes.

The full 200-episode run takes a few minutes on a CPU; pass a smaller
``--episodes`` for a quick look (the learned policy may then lose).

    python demos/train_toy.py [--episodes 200]
"""
import argparse
import pathlib

from sagin_aoi.config import load_scenario
from sagin_aoi.g3m.train import G3mL1Policy, L1Env, TrainConfig, train_g3m
from sagin_aoi.sim import run_episode

ROOT = pathlib.Path(__file__).resolve().parents[1]

ap = argparse.ArgumentParser()
ap.add_argument("--episodes", type=int, default=200)
args = ap.parse_args()

cfg = load_scenario(ROOT / "scenarios" / "toy_training.json")
res = train_g3m(L1Env(cfg, layout_seed=0), tc=TrainConfig(episodes=args.episodes),
                log=lambda ep, total, lc, la: ep % 20 == 0 and print(f"episode {ep:3d} reward {total:10.4g}"))
print(f"\nrandom baseline {res.baseline:.4g}, learned {res.learned:.4g}, ratio {res.ratio:.2f}")

# the trained model drives the lower layer of the full simulator; the
# feasibility audit must stay clean
out = run_episode(cfg, G3mL1Policy(res.model, cfg), "dmla", seed=0, strict=True)
print(f"simulator episode with the learned policy: D_G {out.aggregate['D_G'] / 1e6:.2f} Mbit, "
      f"A_G {out.aggregate['A_G']:.2f}, violations {out.aggregate['violations']}")
