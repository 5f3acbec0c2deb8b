"""Acceptance criteria 1-11.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion (see conftest).  Quoted literals that cannot be
met by an exact implementation are kept as strict xfails next to the check
that replaces them.
"""
import itertools
import math
import time
from collections import Counter

import numpy as np
import pytest
import torch

from conftest import DETAILS, SCENARIOS
from sagin_aoi import analytics as A
from sagin_aoi.channel import noma_sinr, noma_sinr_any_order
from sagin_aoi.config import ScenarioConfig, load_scenario
from sagin_aoi.constellation import coverage_geometry, sat_interval, sat_window
from sagin_aoi.feasibility import ActionL1, ActionL2
from sagin_aoi.g3m import gumbel_softmax
from sagin_aoi.g3m.gradcheck import check_linear, check_stack
from sagin_aoi.g3m.graph import GT_DIM, UAV_DIM
from sagin_aoi.g3m.layers import DTYPE, GEL, GSL
from sagin_aoi.policies import L1_POLICIES, L2_POLICIES, PdUav, make_l1, make_l2
from sagin_aoi.sim import Simulator, emit_metrics, run_episode, run_sweep, summarize, SweepSpec


def note(n, text):
    DETAILS.setdefault(n, []).append(text)
    print(f"criterion {n}: {text}")


def _random_small_cfg(rng, n_max=9, m_max=4, t_max=40):
    return ScenarioConfig(
        n_gts=int(rng.integers(1, n_max + 1)), n_uavs=int(rng.integers(1, m_max + 1)),
        n_leos=int(rng.integers(1, 4)), sats_per_leo=int(rng.integers(3, 30)),
        area_side=float(rng.uniform(300, 1000)), episode_slots=int(rng.integers(5, t_max + 1)),
        uav_batt_cap=20000.0, packet_rate=float(rng.uniform(0.05, 1.0)))


# --- 1. constraint soundness -----------------------------------------------------------------

def _raw_l1(rng, cfg):
    vel = rng.normal(0, 2 * cfg.v_max, (cfg.n_uavs, 3))
    return ActionL1(vel, rng.integers(0, 2, cfg.n_uavs), rng.integers(0, 2, cfg.n_uavs))


def _raw_l2(rng, cfg):
    def act(state):
        m = cfg.n_uavs
        return ActionL2(rng.integers(-1, cfg.n_leos + 1, m), rng.uniform(-0.5, 2, m) * cfg.uav_tx_power_max,
                        rng.uniform(-0.2, 1.0, cfg.n_leos), rng.uniform(-0.2, 1.5, m), rng.uniform(-0.2, 1.5, m),
                        str(rng.choice(["noma", "orthogonal"])))
    return act


@pytest.mark.criterion(1)
def test_c1_constraint_soundness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    pairs = list(itertools.product(sorted(L1_POLICIES), sorted(L2_POLICIES)))
    slots, bad, used = 0, Counter(), set()
    ep = 0
    while slots < 10_000:
        l1, l2 = pairs[ep % len(pairs)]
        cfg = _random_small_cfg(rng)
        fuzz = ep % 3 == 2  # every third episode feeds raw random actions through the mask
        l1p = make_l1(l1)
        if isinstance(l1p, PdUav):  # phased policies get a random switch slot instead of a pilot scan
            l1p.t_switch = int(rng.integers(0, cfg.episode_slots + 1))
        sim = Simulator(cfg, int(rng.integers(2**31)), l1p, make_l2(l2))
        while not sim.done:
            sim.step(_raw_l1(rng, cfg) if fuzz else None, _raw_l2(rng, cfg) if fuzz else None)
            slots += 1
        bad.update({c: v for c, v in sim.violation_counts.items() if v})
        used.update((l1, l2))
        ep += 1
    took = time.perf_counter() - t0
    note(1, f"{slots} slots over {ep} episodes, {len(used)} policies, violations {dict(bad) or 0}, {took:.0f} s")
    assert used == set(L1_POLICIES) | set(L2_POLICIES) and len(used) == 10
    assert not bad
    assert took < 120


# --- 2. AoI ledger oracle ----------------------------------------------------------------------

def replay_ledger(traces, n_gts, n_uavs):
    """Brute-force per-packet ages from arrival and delivery events only.

    A packet born in slot g and still held at the end of slot t has age
    t - g + 1; a delivery in slot t removes it before that slot's ageing.
    """
    at_gt, at_uav = Counter(), Counter()
    out = []
    for t, tr in enumerate(traces):
        for owner, g, m in tr.gt_delivered:
            at_gt[(owner, g)] -= 1
            at_uav[(m, owner, g)] += 1
        for owner, g, m in tr.sat_delivered:
            at_uav[(m, owner, g)] -= 1
        for n, k in enumerate(tr.arrivals):
            at_gt[(n, t)] += int(k)
        if min(at_gt.values(), default=0) < 0 or min(at_uav.values(), default=0) < 0:
            raise AssertionError(f"slot {t}: a delivery of a packet that was never held")
        gt = np.zeros(n_gts, dtype=int)
        for (n, g), k in at_gt.items():
            gt[n] += k * (t - g + 1)
        uav = np.zeros(n_uavs, dtype=int)
        for (m, _, g), k in at_uav.items():
            uav[m] += k * (t - g + 1)
        out.append((gt, uav))
    return out


@pytest.mark.criterion(2)
def test_c2_ledger_replay():
    rng = np.random.default_rng(7)
    pairs = list(itertools.product(["is-uav", "dc-uav", "td-uav", "o-uav"], sorted(L2_POLICIES)))
    checked = deliveries = 0
    for ep in range(100):
        cfg = _random_small_cfg(rng, n_max=5, m_max=2, t_max=100)
        l1, l2 = pairs[ep % len(pairs)]
        res = run_episode(cfg, l1, l2, int(rng.integers(2**31)), keep_traces=True)
        assert len(res.traces) <= 100
        for tr, rec, (gt, uav) in zip(res.traces, res.records, replay_ledger(res.traces, cfg.n_gts, cfg.n_uavs)):
            assert np.array_equal(tr.gt_aoi.astype(int), gt) and np.array_equal(tr.uav_aoi.astype(int), uav)
            assert rec["A_G"] == gt.mean() and rec["A_U"] == uav.mean()
            deliveries += len(tr.gt_delivered) + len(tr.sat_delivered)
            checked += 1
    note(2, f"{checked} slots over 100 episodes, {deliveries} delivery events, exact match")
    assert deliveries > 0


# --- 3. analytic vs Monte-Carlo --------------------------------------------------------------

def _four_sat_window():
    return sat_window(ScenarioConfig(min_elevation=0.0), 4)


@pytest.mark.criterion(3)
def test_c3_g2a_expectation():
    # three homogeneous GTs, scheduled with probability 1/2, one packet per schedule
    analytic = A.expected_g2a_aoi([1.0] * 3, [1.0] * 3, [A.expected_interval([1.0], [0.5])] * 3)
    assert analytic == pytest.approx(1.5)
    mc = A.mc_g2a_aoi(3, 0.5, 1.0, 100_000, np.random.default_rng(0))
    err = abs(mc - analytic) / analytic
    note(3, f"G2A analytic {analytic:.3f} vs MC {mc:.3f} (err {err:.1%})")
    assert err <= 0.10


@pytest.mark.criterion(3)
def test_c3_a2s_expectation():
    win = _four_sat_window()
    analytic = A.expected_a2s_aoi(win, [10.0])
    delay, _ = A.mc_a2s_aoi(win, 10.0, 100_000, np.random.default_rng(1))
    err = abs(delay - analytic) / analytic
    note(3, f"A2S analytic {analytic:.1f} s vs MC {delay:.1f} s (err {err:.1%})")
    assert analytic == pytest.approx(182, rel=0.01) and err <= 0.10


@pytest.mark.criterion(3)
def test_c3_saoi_share():
    win = _four_sat_window()
    analytic = A.saoi_proportion(1.5, win, [10.0])
    mc = A.mc_saoi_proportion(3, 0.5, 1.0, win, 10.0, 100_000, 100_000, np.random.default_rng(2))
    err = abs(mc - analytic) / analytic
    note(3, f"S-AoI share analytic {analytic:.4f} vs attribution MC {mc:.4f} (err {err:.1%})")
    assert err <= 0.15


# --- 4. geometry -----------------------------------------------------------------------------

R_E, H, V = 6371e3, 550e3, 7590.0


def _omega_law_of_sines(elev):
    return math.pi / 2 - elev - math.asin(R_E * math.cos(elev) / (R_E + H))


def _omega_bisection(elev):
    lo, hi = 0.0, math.pi / 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        sat = (R_E + H) * np.array([math.sin(mid), math.cos(mid)])
        e = math.atan2(sat[1] - R_E, sat[0])
        lo, hi = (mid, hi) if e > elev else (lo, mid)
    return 0.5 * (lo + hi)


@pytest.mark.criterion(4)
def test_c4_geometry_oracles():
    w, t_cov = coverage_geometry(0.0, R_E, H, V)
    assert w == pytest.approx(_omega_law_of_sines(0.0), rel=1e-6)
    assert w == pytest.approx(_omega_bisection(0.0), rel=1e-6)
    assert t_cov == pytest.approx(2 * (R_E + H) * _omega_bisection(0.0) / V, rel=1e-6)
    t_k = sat_interval(22, R_E + H, V)
    period = 2 * math.pi * (R_E + H) / V  # one revolution split into 22 equal gaps
    assert t_k == pytest.approx(period / 22, rel=1e-6)
    assert t_k == pytest.approx(260.4, rel=1e-4)
    note(4, f"omega_C {w:.6f} rad, T_cov {t_cov:.2f} s, T^k(22) {t_k:.2f} s match independent oracles")


@pytest.mark.criterion(4)
@pytest.mark.xfail(strict=True, reason="quoted 0.4005 rad / 730.4 s are rounded from arccos(0.92054); "
                                         "the exact values are 0.401357 rad / 731.96 s")
def test_c4_quoted_literals():
    w, t_cov = coverage_geometry(0.0, R_E, H, V)
    assert w == pytest.approx(0.4005, rel=1e-6) and t_cov == pytest.approx(730.4, rel=1e-6)


# --- 5. NOMA / SIC ---------------------------------------------------------------------------

def _brute_noma(gains, powers, outage, noise):
    k = len(gains)
    out = []
    for m in range(k):
        weaker = sum(gains[j] * powers[j] for j in range(m + 1, k))
        stronger = sum(outage[m] * gains[i] * powers[i] for i in range(m))
        out.append(gains[m] * powers[m] / (weaker + stronger + noise))
    return np.array(out)


@pytest.mark.criterion(5)
def test_c5_noma_brute_force():
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in (2, 3, 4):
        for _ in range(100):
            gains = np.sort(10 ** rng.uniform(-3, 0, k))[::-1]
            powers, outage = rng.uniform(0.05, 1.0, k), rng.integers(0, 2, k)
            got, want = noma_sinr(gains, powers, outage, 1e-3), _brute_noma(gains, powers, outage, 1e-3)
            worst = max(worst, float(np.max(np.abs(got - want) / want)))
    note(5, f"2-4 user instances vs term-by-term enumeration, worst relative gap {worst:.1e}")
    assert worst <= 1e-12  # equal up to the order of floating-point summation


@pytest.mark.criterion(5)
def test_c5_interferer_never_helps():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        k = int(rng.integers(1, 4))
        gains, powers = 10 ** rng.uniform(-3, 0, k), rng.uniform(0.05, 1.0, k)
        outage = rng.integers(0, 2, k)
        before = noma_sinr_any_order(gains, powers, outage, 1e-3)
        after = noma_sinr_any_order(np.append(gains, 10 ** rng.uniform(-3, 0)), np.append(powers, rng.uniform(0.05, 1)),
                                    np.append(outage, rng.integers(0, 2)), 1e-3)[:k]
        assert np.all(after <= before * (1 + 1e-12))
    note(5, "1000 fuzz cases: an added interferer never raised another SINR")


# --- 6. gradient check and G3M invariants ----------------------------------------------------

@pytest.mark.criterion(6)
def test_c6_gradient_check():
    errs = [check_stack(s).max_rel_error for s in range(10)]
    lin = check_linear().max_rel_error
    note(6, f"finite-difference max relative error {max(errs):.1e} over 10 seeds (linear {lin:.1e})")
    assert max(errs) <= 1e-4 and lin <= 1e-4


@pytest.mark.criterion(6)
def test_c6_attention_sums_to_one():
    torch.manual_seed(0)
    layer = GSL(16, {"gt": GT_DIM, "uav": UAV_DIM}, heads=4, fuse_hidden=16)
    rng = np.random.default_rng(0)
    worst = 0.0
    for n in range(1, 30):
        alpha, _ = layer.attention(torch.as_tensor(rng.normal(size=16), dtype=DTYPE),
                                   torch.as_tensor(rng.normal(size=(n, GT_DIM)) * 5, dtype=DTYPE), "gt")
        worst = max(worst, float((alpha.detach().sum(-1) - 1).abs().max()))
    assert worst <= 1e-9


@pytest.mark.criterion(6)
def test_c6_gel_permutation_exact():
    msgs = torch.as_tensor(np.random.default_rng(3).random((6, 8)), dtype=DTYPE)
    base = GEL.pool(msgs, [0, 1, 2, 3, 4, 5])
    for perm in itertools.permutations(range(6)):
        assert torch.equal(GEL.pool(msgs, list(perm)), base)


def _two_equal_rate(tau, level=0.99):
    # the Gumbel gap of two equal logits is standard logistic
    return 2 * (1 - 1 / (1 + math.exp(-tau * math.log(level / (1 - level)))))


@pytest.mark.criterion(6)
def test_c6_gumbel_concentration_exact_rate():
    y = gumbel_softmax(torch.zeros(100_000, 2, dtype=DTYPE), 0.01, torch.Generator().manual_seed(0))
    rate = float((y.max(-1).values >= 0.99).double().mean())
    expect = _two_equal_rate(0.01)
    note(6, f"tau=0.01 concentration {rate:.4f} vs exact {expect:.4f}")
    assert rate == pytest.approx(expect, abs=0.003)
    logits = torch.as_tensor(np.random.default_rng(0).normal(size=(1000, 8)), dtype=DTYPE)
    y = gumbel_softmax(logits, 0.0005, torch.Generator().manual_seed(0))
    assert float((y.max(-1).values >= 0.99).double().mean()) >= 0.99


@pytest.mark.criterion(6)
@pytest.mark.xfail(strict=True, reason="an exact Gumbel-Softmax at tau=0.01 concentrates in about 97% of draws "
                                         "(2(1-sigmoid(0.01 ln 99)) = 0.977 for close logits)")
def test_c6_gumbel_quoted_rate():
    logits = torch.as_tensor(np.random.default_rng(0).normal(size=(1000, 8)), dtype=DTYPE)
    y = gumbel_softmax(logits, 0.01, torch.Generator().manual_seed(0))
    assert float((y.max(-1).values >= 0.99).double().mean()) >= 0.99


# --- 7. S-LSDO correctness ---------------------------------------------------------------------

@pytest.mark.criterion(7)
def test_c7_search_equals_scan():
    rng = np.random.default_rng(11)
    feasible = 0
    for _ in range(100):
        l_min = int(rng.integers(1, 20))
        l_max = l_min + int(rng.integers(0, 300))
        vals = np.sort(rng.uniform(0, 1, l_max - l_min + 1))[::-1]
        if rng.random() < 0.3:
            vals = np.round(vals, 1)
        f = lambda L, v=vals, lo=l_min: float(v[L - lo])  # noqa: E731
        target = tuple(sorted(rng.uniform(0, 1, 2)))
        res = A.slsdo_search(f, target, l_min, l_max)
        scan = A.linear_scan(f, target, l_min, l_max)
        assert res.feasible == bool(scan) and (not scan or res.sats in scan)
        assert len(res.probes) <= A.max_probes(l_min, l_max)
        feasible += res.feasible
    note(7, f"100 monotone oracles ({feasible} feasible) agree with the linear scan within the probe bound")


# --- 8. decoupling bound -----------------------------------------------------------------------

@pytest.mark.criterion(8)
def test_c8_decoupling_bound():
    lower, upper = A.tiny_instance()
    rep = A.decoupling_bound_check(lower, upper)
    note(8, f"{rep.pairs} pairs, {rep.violations} violations, tightness gap {rep.tight_gap:.1e}")
    assert rep.violations == 0 and rep.pairs == len(lower) * len(upper)
    assert rep.tight_gap <= 1e-9


# --- 9. trends -----------------------------------------------------------------------------------

GREEDY = [("is-uav", "dmla"), ("dc-uav", "dmla"), ("td-uav", "uafp")]
SEEDS = list(range(5))


def _non_decreasing(xs):
    return all(b >= a for a, b in zip(xs, xs[1:]))


@pytest.mark.criterion(9)
def test_c9_throughput_vs_battery():
    t0 = time.perf_counter()
    caps = [2000.0, 5000.0, 10000.0, 20000.0, 40000.0]
    s = summarize(run_sweep(SweepSpec("uav_batt_cap", caps, GREEDY, SEEDS, ScenarioConfig())), "D_G")
    for l1, l2 in GREEDY:
        series = [s[(c, l1, l2)][0] for c in caps]
        assert _non_decreasing(series), (l1, l2, series)
    note(9, f"D_G non-decreasing in battery for {len(GREEDY)} schemes ({time.perf_counter() - t0:.0f} s)")
    assert time.perf_counter() - t0 < 600


@pytest.mark.criterion(9)
def test_c9_ste_vs_subchannels():
    t0 = time.perf_counter()
    ys = [2, 5, 10, 20, 40]
    base = ScenarioConfig(uav_batt_cap=20000.0)
    s = summarize(run_sweep(SweepSpec("a2s_subchannels", ys, GREEDY, SEEDS, base)), "ste_a2s")
    for l1, l2 in GREEDY:
        series = [s[(y, l1, l2)][0] for y in ys]
        assert all(b <= a for a, b in zip(series, series[1:])), (l1, l2, series)
    note(9, f"A2S STE non-increasing in Y^S for {len(GREEDY)} schemes ({time.perf_counter() - t0:.0f} s)")
    assert time.perf_counter() - t0 < 600


@pytest.mark.criterion(9)
def test_c9_required_sats_vs_target():
    cfg = ScenarioConfig()
    delay = A.nominal_a2s_delay(cfg)
    targets = [0.15, 0.10, 0.05, 0.01]
    pilot = A.estimate_from_pilot(cfg, "is-uav", "dmla", 0, 200)
    shown = []
    # the measured G2A AoI plus a slower ground segment so the sizing is not pinned to one L
    for e_g in (pilot.e_g2a * cfg.slot_seconds, 50.0, 200.0):
        for seed in SEEDS:
            need = []
            for t in targets:
                oracle = A.mc_saoi_oracle(cfg, e_g, delay, seed)
                lo, hi = A.search_bounds(cfg, e_g, delay, (t / 2, t))
                need.append(A.required_sats(A.slsdo_search(oracle, (t / 2, t), lo, hi), t))
            assert None not in need and _non_decreasing(need), (e_g, seed, need)
        shown.append(f"E[A^G]={e_g:.3g}s: L={need}")
    note(9, "required L over targets 0.15/0.10/0.05/0.01: " + ", ".join(shown))


# --- 10. toy training ------------------------------------------------------------------------

@pytest.mark.criterion(10)
def test_c10_toy_training():
    from sagin_aoi.g3m.train import L1Env, TrainConfig, train_g3m
    t0 = time.perf_counter()
    cfg = load_scenario(SCENARIOS / "toy_training.json")
    assert cfg.n_uavs == 1 and cfg.n_gts == 2
    res = train_g3m(L1Env(cfg, layout_seed=0), tc=TrainConfig(episodes=200, seed=0))
    took = time.perf_counter() - t0
    note(10, f"random baseline {res.baseline:.4g}, learned {res.learned:.4g}, ratio {res.ratio:.2f}, {took:.0f} s")
    assert res.ratio >= 1.2 and took < 900


# --- 11. determinism ----------------------------------------------------------------------------

@pytest.mark.criterion(11)
def test_c11_bit_identical(tmp_path):
    cfg = load_scenario(SCENARIOS / "default.json").replace(uav_batt_cap=8000.0)
    runs = [("is-uav", "dmla", 0), ("pd-uav", "tdfp", 1), ("o-uav", "fdpc", 2)]
    for name in ("a", "b"):
        emit_metrics([run_episode(cfg, l1, l2, s, run=i) for i, (l1, l2, s) in enumerate(runs)], tmp_path / name, cfg)
    for f in ("slots.csv", "aggregate.csv", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    note(11, "slots.csv, aggregate.csv and manifest.json byte-identical across repeated runs")
