"""Sensing (GSL), exchange (GEL) and mask (GML) layers and the stacked forward pass.

Everything runs in float64.  Noise enters through explicit tensors or a
``torch.Generator`` so a forward pass is a pure function of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..config import ScenarioConfig
from ..errors import ProjectionError
from ..feasibility import SlotSnapshot, check_feasible, project_motion
from .graph import AGENT_DIM, GT_DIM, SAT_DIM, UAV_DIM, GraphError, MultiGraph

DTYPE = torch.float64
L1_TYPES = {"gt": GT_DIM, "uav": UAV_DIM}
L2_TYPES = {"uav": UAV_DIM, "sat": SAT_DIM}


@dataclass
class G3mConfig:
    hidden: int = 32
    heads: int = 4
    symbols: int = 16
    gsl_layers: int = 2
    gel_layers: int = 2
    action_dim: int = 4
    shared_agent_weight: bool = True
    fuse_hidden: int = 32
    tau_start: float = 1.0
    tau_end: float = 0.1
    reparam: bool = False        # conventional mu + sigma * eps instead of mu + sigma + eps
    noise_scale: float = 0.1
    target_blend: float = 0.01

    def tau(self, progress: float) -> float:
        """Geometric anneal of the Gumbel temperature over training progress in [0, 1]."""
        p = min(max(progress, 0.0), 1.0)
        return self.tau_start * (self.tau_end / self.tau_start) ** p


def gumbel_softmax(logits: torch.Tensor, tau: float, generator: torch.Generator | None = None,
                   hard: bool = False, noise: torch.Tensor | None = None, greedy: bool = False) -> torch.Tensor:
    """Relaxed categorical sample along the last axis.

    ``hard`` returns the one-hot arg-max carrying the soft sample's gradient
    (straight-through).  ``greedy`` drops the Gumbel noise entirely, which
    makes inference deterministic.  ``noise`` fixes the Gumbel draws.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    if greedy:
        g = torch.zeros_like(logits)
    elif noise is not None:
        g = noise
    else:
        u = torch.rand(logits.shape, generator=generator, dtype=logits.dtype)
        g = -torch.log((-torch.log(u.clamp_min(1e-300))).clamp_min(1e-300))
    y = torch.softmax((logits + g) / tau, dim=-1)
    if not (hard or greedy):
        return y
    idx = y.argmax(dim=-1, keepdim=True)
    one_hot = torch.zeros_like(y).scatter_(-1, idx, 1.0)
    return one_hot - y.detach() + y


class GSL(nn.Module):
    """Heterogeneous attention layer: one GATv2 block per source type.

    The logit of source l at agent i is ``a_t . LeakyReLU(W_agent h_i + W_t v_l)``,
    i.e. the concatenation of the two transforms fed to a linear scorer that
    sits outside the nonlinearity.  Per head the weighted sum passes a sigmoid;
    heads and types are concatenated with the agent's own features and fused
    by a one-hidden-layer MLP.  Sources always use their initial features.
    """

    def __init__(self, hidden: int, type_dims: dict, heads: int = 4, shared_agent_weight: bool = True,
                 fuse_hidden: int = 32):
        super().__init__()
        if hidden % heads:
            raise ValueError("hidden width must be divisible by the head count")
        self.types = list(type_dims)
        self.type_dims = dict(type_dims)
        self.heads = heads
        self.d_head = hidden // heads
        self.shared = shared_agent_weight

        def w(rows, cols):
            return nn.Parameter(torch.randn(heads, rows, cols, dtype=DTYPE) / np.sqrt(cols))

        if shared_agent_weight:
            self.W_agent = w(self.d_head, hidden)
        else:
            self.W_agent_t = nn.ParameterDict({t: w(self.d_head, hidden) for t in self.types})
        self.W = nn.ParameterDict({t: w(self.d_head, d) for t, d in type_dims.items()})
        self.att = nn.ParameterDict({t: nn.Parameter(torch.randn(heads, self.d_head, dtype=DTYPE) / np.sqrt(self.d_head))
                                     for t in self.types})
        fuse_in = len(self.types) * hidden + hidden
        self.fuse = nn.Sequential(nn.Linear(fuse_in, fuse_hidden, dtype=DTYPE), nn.Tanh(),
                                  nn.Linear(fuse_hidden, hidden, dtype=DTYPE))

    def _w_agent(self, kind: str) -> torch.Tensor:
        return self.W_agent if self.shared else self.W_agent_t[kind]

    def attention(self, h: torch.Tensor, feats: torch.Tensor, kind: str) -> tuple[torch.Tensor, torch.Tensor]:
        """(weights (heads, n), transformed sources (heads, n, d_head))."""
        if feats.shape[-1] != self.type_dims[kind]:
            raise GraphError(f"{kind} feature width {feats.shape[-1]} != {self.type_dims[kind]}")
        xi = torch.einsum("hdk,k->hd", self._w_agent(kind), h)
        xl = torch.einsum("hdk,nk->hnd", self.W[kind], feats)
        e = (nn.functional.leaky_relu(xi[:, None, :] + xl, 0.2) * self.att[kind][:, None, :]).sum(-1)
        return torch.softmax(e, dim=-1), xl

    def forward(self, h: torch.Tensor, sources: dict) -> torch.Tensor:
        parts = []
        for kind in self.types:
            feats = sources.get(kind)
            if feats is None or len(feats) == 0:
                parts.append(torch.zeros(self.heads * self.d_head, dtype=DTYPE))
                continue
            alpha, xl = self.attention(h, feats, kind)
            parts.append(torch.sigmoid((alpha[:, :, None] * xl).sum(1)).reshape(-1))
        return self.fuse(torch.cat(parts + [h]))


class GEL(nn.Module):
    """Discrete message exchange: encode to symbol logits, Gumbel-Softmax,
    max-pool at the receiver, decode, GRU update of ``[h || decoded]``.

    The GRU state is the agent's recurrent memory z; the updated h is the new
    GRU state.
    """

    def __init__(self, hidden: int, symbols: int):
        super().__init__()
        self.symbols = symbols
        self.enc = nn.Sequential(nn.Linear(hidden, hidden, dtype=DTYPE), nn.Tanh(),
                                 nn.Linear(hidden, symbols, dtype=DTYPE))
        self.dec = nn.Sequential(nn.Linear(symbols, hidden, dtype=DTYPE), nn.Tanh())
        self.gru = nn.GRUCell(2 * hidden, hidden, dtype=DTYPE)

    def messages(self, H: torch.Tensor, tau: float, generator=None, hard=False, noise=None, greedy=False):
        return gumbel_softmax(self.enc(H), tau, generator, hard, noise, greedy)

    @staticmethod
    def pool(msgs: torch.Tensor, nbrs) -> torch.Tensor:
        """Component-wise max over the neighbours' messages; zeros when alone."""
        nbrs = list(nbrs)
        if not nbrs:
            return torch.zeros(msgs.shape[-1], dtype=msgs.dtype)
        return msgs[nbrs].max(dim=0).values

    def update(self, h: torch.Tensor, pooled: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        return self.gru(torch.cat([h, self.dec(pooled)])[None, :], z[None, :])[0]

    def forward(self, H, exchange, Z, tau, generator=None, hard=False, noise=None, greedy=False):
        msgs = self.messages(H, tau, generator, hard, noise, greedy)
        out = [self.update(H[i], self.pool(msgs, exchange[i]), Z[i]) for i in range(len(H))]
        return torch.stack(out), msgs


class ActionHead(nn.Module):
    """Mean (tanh-squashed) and spread of the raw action."""

    def __init__(self, hidden: int, action_dim: int):
        super().__init__()
        self.body = nn.Sequential(nn.Linear(hidden, hidden, dtype=DTYPE), nn.Tanh())
        self.mu = nn.Linear(hidden, action_dim, dtype=DTYPE)
        self.sigma = nn.Linear(hidden, action_dim, dtype=DTYPE)

    def forward(self, h):
        x = self.body(h)
        return torch.tanh(self.mu(x)), nn.functional.softplus(self.sigma(x)) * 0.1


class MaskSmoother(nn.Module):
    """Per-dimension feasibility weights ``G(h, a)`` in (0, 1)."""

    def __init__(self, hidden: int, action_dim: int):
        super().__init__()
        self.lin = nn.Linear(hidden + action_dim, action_dim, dtype=DTYPE)

    def forward(self, h, a):
        return torch.sigmoid(self.lin(torch.cat([h, a], dim=-1)))


class G3mModel(nn.Module):
    def __init__(self, cfg: G3mConfig | None = None, type_dims: dict | None = None):
        super().__init__()
        self.cfg = cfg or G3mConfig()
        c = self.cfg
        self.type_dims = dict(type_dims or L1_TYPES)
        self.embed = nn.Linear(AGENT_DIM, c.hidden, dtype=DTYPE)
        self.gsl = nn.ModuleList([GSL(c.hidden, self.type_dims, c.heads, c.shared_agent_weight, c.fuse_hidden)
                                  for _ in range(c.gsl_layers)])
        self.gel = nn.ModuleList([GEL(c.hidden, c.symbols) for _ in range(c.gel_layers)])
        self.head = ActionHead(c.hidden, c.action_dim)
        self.smoother = MaskSmoother(c.hidden, c.action_dim)

    def zero_state(self, n_agents: int) -> torch.Tensor:
        return torch.zeros(n_agents, self.cfg.hidden, dtype=DTYPE)


def _tensorize(graph: MultiGraph):
    agents = torch.tensor(np.array([g.agent for g in graph.agents]), dtype=DTYPE)
    sources = [{k: torch.as_tensor(v, dtype=DTYPE) for k, v in g.sources.items()} for g in graph.agents]
    return agents, sources


@dataclass
class ForwardOut:
    h_sense: torch.Tensor   # after the sensing layers
    h: torch.Tensor         # after the exchange layers
    z_next: torch.Tensor
    mu: torch.Tensor
    sigma: torch.Tensor
    messages: list


def sense(model: G3mModel, graph: MultiGraph) -> torch.Tensor:
    agents, sources = _tensorize(graph)
    out = []
    for i in range(len(graph)):
        h = model.embed(agents[i])
        for layer in model.gsl:
            h = layer(h, sources[i])
        out.append(h)
    return torch.stack(out)


def exchange(model: G3mModel, H, graph: MultiGraph, z, tau, generator=None, hard=False, noise=None,
             greedy=False):
    """Run the exchange layers; the recurrent state threads through the rounds."""
    msgs = []
    for r, layer in enumerate(model.gel):
        nz = None if noise is None else noise[r]
        H, m = layer(H, graph.exchange, z, tau, generator, hard, nz, greedy)
        z = H
        msgs.append(m)
    return H, z, msgs


def g3m_forward(model: G3mModel, graph: MultiGraph, z: torch.Tensor | None = None, tau: float = 1.0,
                generator: torch.Generator | None = None, hard: bool = False, noise=None,
                greedy: bool = False) -> ForwardOut:
    """Sensing layers per agent, exchange rounds across agents, action head.

    Returns raw (pre-mask) action statistics; apply :func:`gml_apply` to get
    an executable action.
    """
    graph.validate(model.type_dims)
    if z is None:
        z = model.zero_state(len(graph))
    if z.shape != (len(graph), model.cfg.hidden):
        raise GraphError(f"recurrent state shape {tuple(z.shape)} does not match {len(graph)} agents")
    Hs = sense(model, graph)
    H, z_next, msgs = exchange(model, Hs, graph, z, tau, generator, hard, noise, greedy)
    mu, sigma = model.head(H)
    return ForwardOut(Hs, H, z_next, mu, sigma, msgs)


# --- mask layer ----------------------------------------------------------------

def to_velocity(a: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    return np.asarray(a, dtype=float)[..., :3] * cfg.v_max


def motion_feasible(positions: np.ndarray, velocity: np.ndarray, cfg: ScenarioConfig) -> bool:
    nxt = positions + velocity * cfg.slot_seconds
    snap = SlotSnapshot(prev_positions=positions, positions=nxt, velocity=velocity)
    return all(v.ok for v in check_feasible(cfg, snap))


def smoothed_redraw(model: G3mModel, h: torch.Tensor, a: torch.Tensor, mu: torch.Tensor, sigma: torch.Tensor,
                    eps: torch.Tensor) -> torch.Tensor:
    """``G(h, a) * (mu + sigma + eps)``, or ``mu + sigma * eps`` inside with the reparam switch."""
    base = mu + sigma * eps if model.cfg.reparam else mu + sigma + eps
    return model.smoother(h, a) * base


def gml_apply(model: G3mModel, h: torch.Tensor, a: np.ndarray, mu: torch.Tensor, sigma: torch.Tensor,
              positions: np.ndarray, cfg: ScenarioConfig, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """Executable joint action for all agents and whether the mask fired.

    A feasible joint action is returned untouched.  Otherwise every agent's
    action is re-drawn through the smoother and the motion part is projected
    onto the feasible set; the projection raises :class:`ProjectionError`
    naming the binding constraints when the set is empty.
    """
    a = np.asarray(a, dtype=float)
    if motion_feasible(positions, to_velocity(a, cfg), cfg):
        return a, False
    eps = torch.as_tensor(rng.normal(0.0, model.cfg.noise_scale, a.shape), dtype=DTYPE)
    with torch.no_grad():
        redraw = smoothed_redraw(model, h, torch.as_tensor(a, dtype=DTYPE), mu, sigma, eps).numpy()
    out = redraw.copy()
    vel = project_motion(positions, to_velocity(redraw, cfg), cfg)
    out[:, :3] = vel / cfg.v_max
    if not motion_feasible(positions, to_velocity(out, cfg), cfg):
        raise ProjectionError(("C1", "C2", "C6", "C7"), "mask layer output still infeasible")
    return out, True
