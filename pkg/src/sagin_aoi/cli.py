"""Command line entry point: ``sagin-aoi {run,sweep,slsdo,gradcheck,train}``.

Exit codes: 0 success, 2 invalid input, 3 constraint violation detected,
4 training divergence, 1 a verification check failed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analytics
from .config import ScenarioConfig, ScenarioError, load_scenario
from .errors import ConstraintViolation, ProjectionError, TrainingDivergence
from .policies import L1_POLICIES, L2_POLICIES

EXIT_OK, EXIT_CHECK, EXIT_INVALID, EXIT_VIOLATION, EXIT_DIVERGED = 0, 1, 2, 3, 4


def _config(args) -> ScenarioConfig:
    cfg = load_scenario(args.scenario) if args.scenario else ScenarioConfig()
    if getattr(args, "slots", None):
        cfg = cfg.replace(episode_slots=args.slots)
    return cfg


def _seeds(args) -> list[int]:
    return list(args.seeds) if args.seeds else [args.seed]


def _l1_policy(name: str, args, cfg):
    if name == "g3m":
        if not args.checkpoint:
            raise ScenarioError("--l1 g3m needs --checkpoint")
        from .g3m.train import G3mL1Policy, load_checkpoint
        return G3mL1Policy(load_checkpoint(args.checkpoint), cfg)
    if name not in L1_POLICIES:
        raise ScenarioError(f"unknown L1 policy {name!r}")
    return name


def cmd_run(args) -> int:
    from .sim import emit_metrics, run_episode
    cfg = _config(args)
    if args.l2 not in L2_POLICIES:
        raise ScenarioError(f"unknown L2 policy {args.l2!r}")
    results = []
    for i, s in enumerate(_seeds(args)):
        results.append(run_episode(cfg, _l1_policy(args.l1, args, cfg), args.l2, s, run=i, strict=args.strict))
    man = emit_metrics(results, args.out, cfg, {"command": "run"})
    bad = sum(r.aggregate.get("violations", 0) for r in results)
    for r in results:
        a = r.aggregate
        print(f"seed={a['seed']} slots={a['slots']} A_G={a['A_G']:.3f} A_U={a['A_U']:.3f} "
              f"D_G={a['D_G']:.4g} D_hat_U={a['D_hat_U']:.4g} violations={a['violations']}")
    print(f"wrote {args.out} (config {man['config_hash'][:12]})")
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_sweep(args) -> int:
    from .sim import SweepSpec, run_sweep, summarize
    cfg = _config(args)
    schemes = []
    for item in args.schemes:
        l1, _, l2 = item.partition(":")
        if l1 not in L1_POLICIES or l2 not in L2_POLICIES:
            raise ScenarioError(f"bad scheme {item!r}; use l1:l2")
        schemes.append((l1, l2))
    values = [float(v) if "." in v or "e" in v.lower() else int(v) for v in args.values]
    spec = SweepSpec(args.param, values, schemes, _seeds(args), cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = run_sweep(spec, out)
    for key, (mean, err) in sorted(summarize(rows, args.metric).items(), key=lambda kv: str(kv[0])):
        print(f"{args.param}={key[0]} {key[1]}:{key[2]} {args.metric}={mean:.6g} +- {err:.3g}")
    failed = [r for r in rows if r.get("error")]
    if failed:
        print(f"{len(failed)} grid point(s) failed; see {out}")
    return EXIT_VIOLATION if any(r.get("violations") for r in rows) else EXIT_OK


def cmd_slsdo(args) -> int:
    cfg = _config(args)
    lo_t, hi_t = args.saoi_range if args.saoi_range else cfg.saoi_target_range
    if not 0 <= lo_t <= hi_t <= 1:
        raise ScenarioError("--saoi-range needs 0 <= low <= high <= 1")
    pilot = analytics.estimate_from_pilot(cfg, args.l1, args.l2, args.seed, args.pilot_slots)
    e_g = pilot.e_g2a * cfg.slot_seconds
    delay = analytics.nominal_a2s_delay(cfg)
    bounds = analytics.search_bounds(cfg, e_g, delay, (lo_t, hi_t))
    if args.oracle == "analytic":
        oracle = analytics.analytic_saoi_oracle(cfg, e_g, delay)
    else:
        oracle = analytics.mc_saoi_oracle(cfg, e_g, delay, args.seed)
    res = analytics.slsdo_search(oracle, (lo_t, hi_t), *bounds)
    for L, d in res.probes:
        print(f"probe L={L} share={d:.6f}")
    if res.feasible:
        print(f"required satellites per orbit: {res.sats}")
    else:
        print(f"infeasible within {res.bounds}; nearest probe L={res.nearest[0]} share={res.nearest[1]:.6f}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps({
            "target": [lo_t, hi_t], "bounds": list(res.bounds), "feasible": res.feasible, "sats": res.sats,
            "required": analytics.required_sats(res, hi_t), "probes": [list(p) for p in res.probes],
            "e_g2a": e_g, "a2s_delay": delay, "pilot_slots": pilot.slots, "oracle": args.oracle,
        }, indent=2) + "\n")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .g3m.gradcheck import check_linear, check_stack
    worst = check_linear().max_rel_error
    print(f"linear stack: {worst:.3e}")
    for s in _seeds(args):
        r = check_stack(s)
        print(f"seed {s}: max relative error {r.max_rel_error:.3e}")
        worst = max(worst, r.max_rel_error)
    ok = worst <= args.tol
    print(("PASS" if ok else "FAIL") + f" (tolerance {args.tol:g})")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_train(args) -> int:
    from .g3m.train import L1Env, L2Env, TrainConfig, save_checkpoint, train_g3m
    cfg = _config(args)
    env = L1Env(cfg, layout_seed=args.layout_seed) if args.layer == "l1" else L2Env(cfg)
    tc = TrainConfig(episodes=args.episodes, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def log(ep, total, lc, la):
        if ep % 10 == 0 or ep == args.episodes - 1:
            print(f"episode {ep} reward {total:.6g} critic {lc:.4g} actor {la:.4g}")

    try:
        res = train_g3m(env, tc=tc, trace_csv=out / "trace.csv", log=log)
    except TrainingDivergence as exc:
        from .g3m.train import write_trace
        write_trace(exc.trace, out / "trace.csv")
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    ckpt = save_checkpoint(res.model, args.checkpoint or out / "g3m", {
        "baseline": res.baseline, "learned": res.learned, "episodes": args.episodes, "seed": args.seed,
        "layer": args.layer})
    print(f"random baseline {res.baseline:.6g}, learned {res.learned:.6g}, ratio {res.ratio:.3g}")
    print(f"checkpoint {ckpt}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sagin-aoi", description="AoI-oriented air-ground-space network simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--scenario", help="scenario JSON file (defaults when omitted)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--seeds", type=int, nargs="+")
        sp.add_argument("--out", default=out_default)
        sp.add_argument("--slots", type=int, help="override the episode length")

    r = sub.add_parser("run", help="run episodes and write metric files")
    common(r, "out/run")
    r.add_argument("--l1", default="is-uav", help=f"one of {sorted(L1_POLICIES)} or g3m")
    r.add_argument("--l2", default="dmla", choices=sorted(L2_POLICIES))
    r.add_argument("--checkpoint", help="G3M checkpoint for --l1 g3m")
    r.add_argument("--strict", action="store_true", help="stop at the first constraint violation")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="parameter sweep over schemes and seeds")
    common(s, "out/sweep.csv")
    s.add_argument("--param", required=True)
    s.add_argument("--values", nargs="+", required=True)
    s.add_argument("--schemes", nargs="+", default=["is-uav:dmla"], help="l1:l2 pairs")
    s.add_argument("--metric", default="D_G")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("slsdo", help="satellite count search against an S-AoI target")
    common(d, "")
    d.add_argument("--saoi-range", type=float, nargs=2, metavar=("LOW", "HIGH"))
    d.add_argument("--oracle", choices=["mc", "analytic"], default="mc")
    d.add_argument("--pilot-slots", type=int, default=1000)
    d.add_argument("--l1", default="is-uav", choices=sorted(L1_POLICIES))
    d.add_argument("--l2", default="dmla", choices=sorted(L2_POLICIES))
    d.set_defaults(func=cmd_slsdo)

    g = sub.add_parser("gradcheck", help="finite-difference check of the G3M soft path")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    g.add_argument("--tol", type=float, default=1e-4)
    g.set_defaults(func=cmd_gradcheck)

    t = sub.add_parser("train", help="train G3M agents")
    common(t, "out/train")
    t.add_argument("--episodes", type=int, default=200)
    t.add_argument("--layer", choices=["l1", "l2"], default="l1")
    t.add_argument("--layout-seed", type=int, default=0, help="fixed layout for the lower-layer toy")
    t.add_argument("--checkpoint", help="checkpoint path (without suffix)")
    t.set_defaults(func=cmd_train)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConstraintViolation, ProjectionError) as exc:
        print(f"constraint violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
