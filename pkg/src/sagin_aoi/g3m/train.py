"""Replay-based actor-critic training of the G3M agents.

One loop mirrors the training algorithm: every agent senses its local graph,
exchanges messages, acts through the mask layer; the joint transition goes to
replay; a batched update runs once replay holds more than one batch; the
target networks are blended after every slot.  The critic is a plain MLP on
a fixed-size summary of each agent's graph (centralised training) and the
actor is the G3M stack (distributed execution).
"""
from __future__ import annotations

import copy
import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..config import ScenarioConfig
from ..errors import TrainingDivergence
from ..feasibility import ActionL1, ActionL2, project_motion
from ..policies import build_state, make_l1, make_l2, sic_power
from ..sim import Simulator
from ..world import init_world
from .graph import MultiGraph, build_l1_graph, build_l2_graph
from .layers import DTYPE, L1_TYPES, L2_TYPES, G3mConfig, G3mModel, g3m_forward, gml_apply

CHECKPOINT_VERSION = 1


# --- environments ----------------------------------------------------------------

class L1Env:
    """Lower layer driven by the agents; the upper layer runs a fixed scheme."""

    type_dims = L1_TYPES

    def __init__(self, cfg: ScenarioConfig, l2: str = "dmla", layout_seed: int | None = None):
        self.cfg = cfg
        self.l2_name = l2
        self.layout_seed = layout_seed
        self.sim: Simulator | None = None

    @property
    def n_agents(self) -> int:
        return self.cfg.n_uavs

    def reset(self, seed: int) -> MultiGraph:
        self.sim = Simulator(self.cfg, seed, None, make_l2(self.l2_name))
        if self.layout_seed is not None:
            # stationary layout: positions from a fixed seed, channels and traffic from the episode seed
            ref = init_world(self.cfg, self.layout_seed)
            for g, r in zip(self.sim.world.gts, ref.gts):
                g.position = r.position.copy()
            for u, r in zip(self.sim.world.uavs, ref.uavs):
                u.position = r.position.copy()
            self.sim.world.refresh_connectivity()
        return build_l1_graph(self.sim.world)

    @property
    def done(self) -> bool:
        return self.sim.done

    def mask(self, model, out, a, rng):
        return gml_apply(model, out.h.detach(), a, out.mu.detach(), out.sigma.detach(),
                         self.sim.world.uav_positions, self.cfg, rng)[0]

    def project(self, a):
        a = np.array(a, dtype=float)
        a[:, :3] = project_motion(self.sim.world.uav_positions, a[:, :3] * self.cfg.v_max, self.cfg) / self.cfg.v_max
        return a

    def step(self, a: np.ndarray):
        act = ActionL1(a[:, :3] * self.cfg.v_max, (a[:, 3] > 0).astype(np.int8))
        res = self.sim.step(act)
        return np.asarray(res.rewards_l1, dtype=float), build_l1_graph(self.sim.world), self.sim.done


class L2Env:
    """Upper layer as a single agent; the lower layer runs a fixed scheme.

    The agent's parameters belong to whichever satellite currently serves;
    when the nearest satellite of the serving orbit changes, the same
    parameters move to the successor (counted in ``handovers``).
    """

    type_dims = L2_TYPES

    def __init__(self, cfg: ScenarioConfig, l1: str = "is-uav"):
        self.cfg = cfg
        self.l1_name = l1
        self.handovers = 0

    n_agents = 1

    def reset(self, seed: int) -> MultiGraph:
        self.sim = Simulator(self.cfg, seed, make_l1(self.l1_name), None)
        self._serving = None
        self._peek()
        return self._graph

    def _peek(self):
        sim = self.sim
        idx, ang, live, pos = sim.satellites()
        state = build_state(sim.world, sim.a2s_gains(pos, live), live, ang, pos[live])
        self._state, self._graph = state, build_l2_graph(state, self.cfg)
        serving = tuple(idx) if live.any() else None
        if self._serving is not None and serving is not None and serving != self._serving:
            self.handovers += 1
        self._serving = serving

    @property
    def done(self) -> bool:
        return self.sim.done

    def mask(self, model, out, a, rng):
        return np.clip(a, -1.0, 1.0)

    def project(self, a):
        return np.clip(a, -1.0, 1.0)

    def decode(self, a: np.ndarray, state) -> ActionL2:
        cfg = self.cfg
        a = np.asarray(a, dtype=float).reshape(-1)
        k_count = len(state.in_service)
        g = np.where(state.in_service[None, :], state.gains, -np.inf)
        orbit = np.where(state.in_service.any(), g.argmax(axis=1), -1)
        load = np.array([state.pending[orbit == k].sum() for k in range(k_count)])
        rho = load / load.sum() if load.sum() > 0 else np.zeros(k_count)
        band = np.where(orbit >= 0, rho[np.clip(orbit, 0, None)], 0.0) * (a[1] + 1) / 2
        power = np.full(len(orbit), cfg.fixed_tx_power)
        for k in range(k_count):
            on_k = np.flatnonzero(orbit == k)
            if len(on_k):
                power[on_k] = sic_power(state.gains[on_k, k], cfg)
        power = np.clip(power * (a[0] + 1) / 2, cfg.min_tx_power, cfg.uav_tx_power_max)
        return ActionL2(orbit, power, rho, band, np.ones(len(orbit)), "noma")

    def step(self, a: np.ndarray):
        res = self.sim.step(action_l2_fn=lambda state: self.decode(a, state))
        if not self.sim.done:
            self._peek()
        return np.array([res.reward_l2]), self._graph, self.sim.done


# --- critic and replay -----------------------------------------------------------

def graph_summary(graph: MultiGraph, type_dims: dict) -> np.ndarray:
    """Fixed-size per-agent summary: own features, then per source type the
    mean and max of the features and the neighbour count."""
    rows = []
    for g in graph.agents:
        parts = [g.agent]
        for kind, d in type_dims.items():
            f = g.sources.get(kind, np.zeros((0, d)))
            if len(f):
                parts += [f.mean(axis=0), f.max(axis=0), [len(f) / 10.0]]
            else:
                parts += [np.zeros(d), np.zeros(d), [0.0]]
        rows.append(np.concatenate(parts))
    return np.array(rows)


def summary_dim(type_dims: dict) -> int:
    from .graph import AGENT_DIM
    return AGENT_DIM + sum(2 * d + 1 for d in type_dims.values())


class Critic(nn.Module):
    def __init__(self, obs_dim: int, action_dim: int, hidden: int = 64):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(obs_dim + action_dim, hidden, dtype=DTYPE), nn.Tanh(),
                                 nn.Linear(hidden, hidden, dtype=DTYPE), nn.Tanh(),
                                 nn.Linear(hidden, 1, dtype=DTYPE))

    def forward(self, obs, act):
        return self.net(torch.cat([obs, act], dim=-1)).squeeze(-1)


@dataclass
class Transition:
    graph: MultiGraph
    z: torch.Tensor
    action: np.ndarray
    reward: np.ndarray
    next_graph: MultiGraph
    next_z: torch.Tensor
    done: bool


class ReplayMemory:
    """Bounded FIFO memory; one writer per slot, sampled uniformly."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self.items)

    def store(self, tr: Transition) -> None:
        if len(self.items) < self.capacity:
            self.items.append(tr)
        else:
            self.items[self._next] = tr
        self._next = (self._next + 1) % self.capacity

    def sample(self, rng: np.random.Generator, n: int) -> list[Transition]:
        return [self.items[i] for i in rng.choice(len(self.items), size=n, replace=False)]


def soft_update(target: nn.Module, online: nn.Module, blend: float) -> None:
    """``target <- blend * online + (1 - blend) * target``."""
    with torch.no_grad():
        for pt, po in zip(target.parameters(), online.parameters()):
            pt.mul_(1.0 - blend).add_(blend * po)


def ball_clip(mu: torch.Tensor) -> torch.Tensor:
    """Differentiable radial scaling of the motion part onto the unit ball."""
    v = mu[..., :3]
    scale = 1.0 / torch.clamp(v.norm(dim=-1, keepdim=True), min=1.0)
    return torch.cat([v * scale, mu[..., 3:]], dim=-1)


# --- training ------------------------------------------------------------------

@dataclass
class TrainConfig:
    episodes: int = 200
    batch: int = 32
    replay: int = 20_000
    gamma: float = 0.9
    actor_lr: float = 1e-3
    critic_lr: float = 2e-3
    explore_start: float = 0.5
    explore_end: float = 0.05
    update_every: int = 2
    eval_episodes: int = 10
    seed: int = 0
    eval_seed_offset: int = 100_000
    reward_transform: str = "log1p"   # learner-side only; reports use raw rewards


@dataclass
class TrainResult:
    model: G3mModel
    trace: list = field(default_factory=list)   # (episode, mean reward, critic loss, actor loss)
    baseline: float = 0.0
    learned: float = 0.0
    reward_scale: float = 1.0
    updates: int = 0

    @property
    def ratio(self) -> float:
        return self.learned / self.baseline if self.baseline > 0 else float("inf")


def run_policy(env, act_fn, seeds, seen: list | None = None) -> float:
    """Mean episode reward (sum over slots of the agents' mean reward).

    Per-slot agent rewards are appended to ``seen`` when given."""
    totals = []
    for s in seeds:
        graph = env.reset(int(s))
        z = None
        total = 0.0
        while not env.done:
            a, z = act_fn(graph, z)
            r, graph, _ = env.step(a)
            total += float(np.mean(r))
            if seen is not None:
                seen.extend(np.asarray(r, dtype=float).tolist())
        totals.append(total)
    return float(np.mean(totals))


def random_policy(env, rng: np.random.Generator, action_dim: int = 4):
    def act(graph, z):
        return env.project(rng.uniform(-1.0, 1.0, (env.n_agents, action_dim))), None
    return act


def greedy_policy(env, model: G3mModel, rng: np.random.Generator):
    def act(graph, z):
        with torch.no_grad():
            out = g3m_forward(model, graph, z, tau=model.cfg.tau_end, greedy=True)
        return env.mask(model, out, out.mu.numpy(), rng), out.z_next
    return act


def _update(model, target, critic, critic_t, opt_a, opt_c, batch, tc: TrainConfig, type_dims, tau, gen):
    obs = torch.as_tensor(np.concatenate([graph_summary(t.graph, type_dims) for t in batch]), dtype=DTYPE)
    nxt = torch.as_tensor(np.concatenate([graph_summary(t.next_graph, type_dims) for t in batch]), dtype=DTYPE)
    act = torch.as_tensor(np.concatenate([t.action for t in batch]), dtype=DTYPE)
    rew = torch.as_tensor(np.concatenate([t.reward for t in batch]), dtype=DTYPE)
    done = torch.as_tensor(np.concatenate([np.full(len(t.reward), float(t.done)) for t in batch]), dtype=DTYPE)
    with torch.no_grad():
        a_next = torch.cat([ball_clip(g3m_forward(target, t.next_graph, t.next_z, tau, gen).mu) for t in batch])
        y = rew + tc.gamma * (1.0 - done) * critic_t(nxt, a_next)
    loss_c = nn.functional.mse_loss(critic(obs, act), y)
    opt_c.zero_grad()
    loss_c.backward()
    opt_c.step()
    a_pi = torch.cat([ball_clip(g3m_forward(model, t.graph, t.z, tau, gen).mu) for t in batch])
    loss_a = -critic(obs, a_pi).mean()
    opt_a.zero_grad()
    loss_a.backward()
    opt_a.step()
    return loss_c.item(), loss_a.item()


def _finite(*modules) -> bool:
    return all(torch.isfinite(p).all() for m in modules for p in m.parameters())


def train_g3m(env, model: G3mModel | None = None, tc: TrainConfig | None = None, trace_csv=None,
              log=None) -> TrainResult:
    tc = tc or TrainConfig()
    torch.manual_seed(tc.seed)
    model = model or G3mModel(G3mConfig(), env.type_dims)
    rng = np.random.default_rng(tc.seed)
    gen = torch.Generator().manual_seed(tc.seed)
    eval_seeds = [tc.eval_seed_offset + i for i in range(tc.eval_episodes)]

    # random baseline first; its nonzero per-slot rewards also fix the reward scale
    seen: list[float] = []
    baseline = run_policy(env, random_policy(env, np.random.default_rng(tc.seed + 1), model.cfg.action_dim),
                          eval_seeds, seen)
    nonzero = [abs(r) for r in seen if r != 0.0]
    scale = 1.0 / float(np.mean(nonzero)) if nonzero else 1.0

    target = copy.deepcopy(model)
    critic = Critic(summary_dim(env.type_dims), model.cfg.action_dim)
    critic_t = copy.deepcopy(critic)
    opt_a = torch.optim.Adam(model.parameters(), lr=tc.actor_lr)
    opt_c = torch.optim.Adam(critic.parameters(), lr=tc.critic_lr)
    memory = ReplayMemory(tc.replay)
    result = TrainResult(model, baseline=baseline, reward_scale=scale)
    step = 0
    for ep in range(tc.episodes):
        progress = ep / max(tc.episodes - 1, 1)
        tau = model.cfg.tau(progress)
        sigma = tc.explore_start + (tc.explore_end - tc.explore_start) * progress
        graph = env.reset(tc.seed * 1_000_003 + ep)
        z = model.zero_state(env.n_agents)
        total, losses = 0.0, []
        while not env.done:
            with torch.no_grad():
                out = g3m_forward(model, graph, z, tau, gen)
            a = np.clip(out.mu.numpy() + rng.normal(0.0, sigma, out.mu.shape), -1.0, 1.0)
            a = env.mask(model, out, a, rng)
            r, next_graph, done = env.step(a)
            total += float(np.mean(r))
            r_learn = np.log1p(np.maximum(r * scale, 0.0)) if tc.reward_transform == "log1p" else r * scale
            memory.store(Transition(graph, z, a, r_learn, next_graph, out.z_next, done))
            step += 1
            if len(memory) > tc.batch and step % tc.update_every == 0:
                lc, la = _update(model, target, critic, critic_t, opt_a, opt_c, memory.sample(rng, tc.batch),
                                 tc, env.type_dims, tau, gen)
                result.updates += 1
                losses.append((lc, la))
                if not (np.isfinite(lc) and np.isfinite(la) and _finite(model, critic)):
                    result.trace.append((ep, total, lc, la))
                    raise TrainingDivergence(f"non-finite loss at episode {ep}", result.trace)
            soft_update(target, model, model.cfg.target_blend)
            soft_update(critic_t, critic, model.cfg.target_blend)
            graph, z = next_graph, out.z_next
        lc = float(np.mean([x[0] for x in losses])) if losses else float("nan")
        la = float(np.mean([x[1] for x in losses])) if losses else float("nan")
        result.trace.append((ep, total, lc, la))
        if log is not None:
            log(ep, total, lc, la)
    result.learned = run_policy(env, greedy_policy(env, model, np.random.default_rng(tc.seed + 3)), eval_seeds)
    if trace_csv is not None:
        write_trace(result.trace, trace_csv)
    return result


def write_trace(trace, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "mean_reward", "loss", "actor_loss"])
        for row in trace:
            w.writerow([row[0], repr(float(row[1])), repr(float(row[2])), repr(float(row[3]))])


# --- checkpoints -----------------------------------------------------------------

def save_checkpoint(model: G3mModel, path, extra: dict | None = None) -> Path:
    """Weights as ``.npz`` plus a JSON manifest with shapes and the model config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {k: v.detach().numpy() for k, v in model.state_dict().items()}
    np.savez(path.with_suffix(".npz"), **state)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.cfg),
        "type_dims": model.type_dims,
        "shapes": {k: list(v.shape) for k, v in state.items()},
        "extra": extra or {},
    }
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path.with_suffix(".npz")


def load_checkpoint(path) -> G3mModel:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('version')}")
    model = G3mModel(G3mConfig(**manifest["config"]), manifest["type_dims"])
    with np.load(path.with_suffix(".npz")) as data:
        state = {k: torch.as_tensor(data[k]) for k in data.files}
    for k, shape in manifest["shapes"].items():
        if list(state[k].shape) != shape:
            raise ValueError(f"shape mismatch for {k}")
    model.load_state_dict(state)
    return model


class G3mL1Policy:
    """Trained G3M agents behind the ordinary lower-layer policy interface."""

    name = "g3m"

    def __init__(self, model: G3mModel, cfg: ScenarioConfig, seed: int = 0):
        self.model, self.cfg = model, cfg
        self.rng = np.random.default_rng(seed)
        self.z = None

    def reset(self, world) -> None:
        self.z = None

    def act(self, world) -> ActionL1:
        graph = build_l1_graph(world)
        with torch.no_grad():
            out = g3m_forward(self.model, graph, self.z, tau=self.model.cfg.tau_end, greedy=True)
        self.z = out.z_next
        a, _ = gml_apply(self.model, out.h, out.mu.numpy(), out.mu, out.sigma, world.uav_positions, self.cfg,
                         self.rng)
        return ActionL1(a[:, :3] * self.cfg.v_max, (a[:, 3] > 0).astype(np.int8))
