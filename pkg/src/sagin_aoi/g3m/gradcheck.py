"""Finite-difference verification of the soft (differentiable) path."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .graph import AGENT_DIM, GT_DIM, UAV_DIM, AgentGraph, MultiGraph
from .layers import DTYPE, G3mConfig, G3mModel, g3m_forward, smoothed_redraw


def tiny_graph(rng: np.random.Generator, n_agents: int = 2) -> MultiGraph:
    agents = []
    for _ in range(n_agents):
        agents.append(AgentGraph(rng.normal(size=AGENT_DIM),
                                 {"gt": rng.normal(size=(int(rng.integers(1, 4)), GT_DIM)),
                                  "uav": rng.normal(size=(int(rng.integers(0, 3)), UAV_DIM))}))
    exchange = [np.array([j for j in range(n_agents) if j != i], dtype=int) for i in range(n_agents)]
    return MultiGraph(agents, exchange)


def stack_loss(model: G3mModel, graph: MultiGraph, gumbel, eps, tau: float = 0.7) -> torch.Tensor:
    """Scalar touching every parameter block: head outputs plus the mask smoother."""
    out = g3m_forward(model, graph, tau=tau, noise=gumbel)
    a = out.mu
    redraw = smoothed_redraw(model, out.h, a, out.mu, out.sigma, eps)
    w = torch.linspace(0.5, 1.5, a.numel(), dtype=DTYPE).reshape(a.shape)
    return (w * (out.mu + out.sigma + redraw)).sum() + 0.1 * (out.z_next ** 2).sum()


@dataclass
class GradReport:
    max_rel_error: float
    per_block: dict


def _rel(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(model: torch.nn.Module, loss_fn, step: float = 1e-5, coords_per_block: int = 4,
               seed: int = 0) -> GradReport:
    """Compare back-propagated gradients with central differences.

    For each parameter block: the directional derivative along a random unit
    direction (covers the whole block) and a few single coordinates.  Returns
    the largest relative error seen.
    """
    rng = np.random.default_rng(seed)
    params = [(n, p) for n, p in model.named_parameters() if p.requires_grad]
    model.zero_grad()
    loss_fn().backward()
    grads = {n: p.grad.detach().clone() for n, p in params}
    report = {}
    worst = 0.0
    with torch.no_grad():
        for name, p in params:
            g = grads[name]
            errs = []
            d = torch.as_tensor(rng.normal(size=p.shape), dtype=p.dtype)
            d /= d.norm()
            p.add_(step * d)
            up = loss_fn().item()
            p.sub_(2 * step * d)
            down = loss_fn().item()
            p.add_(step * d)
            errs.append(_rel(float((g * d).sum()), (up - down) / (2 * step)))
            flat = p.view(-1)
            for idx in rng.choice(flat.numel(), size=min(coords_per_block, flat.numel()), replace=False):
                old = flat[idx].item()
                flat[idx] = old + step
                up = loss_fn().item()
                flat[idx] = old - step
                down = loss_fn().item()
                flat[idx] = old
                errs.append(_rel(float(g.view(-1)[idx]), (up - down) / (2 * step)))
            report[name] = max(errs)
            worst = max(worst, report[name])
    return GradReport(worst, report)


def check_stack(seed: int, cfg: G3mConfig | None = None) -> GradReport:
    """Full-stack check on a random tiny graph with fixed Gumbel and mask noise."""
    torch.manual_seed(seed)
    model = G3mModel(cfg or G3mConfig(hidden=16, heads=4, symbols=8, fuse_hidden=16))
    rng = np.random.default_rng(seed)
    graph = tiny_graph(rng)
    n = len(graph)
    gumbel = [torch.as_tensor(-np.log(-np.log(rng.uniform(1e-12, 1, (n, model.cfg.symbols)))), dtype=DTYPE)
              for _ in range(model.cfg.gel_layers)]
    eps = torch.as_tensor(rng.normal(0, 0.1, (n, model.cfg.action_dim)), dtype=DTYPE)
    return grad_check(model, lambda: stack_loss(model, graph, gumbel, eps), seed=seed)


def check_linear(seed: int = 0) -> GradReport:
    """Exact case: a bare linear map under a linear loss."""
    torch.manual_seed(seed)
    lin = torch.nn.Linear(6, 3, dtype=DTYPE)
    x = torch.as_tensor(np.random.default_rng(seed).normal(size=(5, 6)), dtype=DTYPE)
    return grad_check(lin, lambda: lin(x).sum(), seed=seed)
