"""Graph sensing / exchange / mask agent model and its training loop."""
from .graph import AgentGraph, GraphError, MultiGraph, build_l1_graph, build_l2_graph
from .layers import GEL, GSL, G3mConfig, G3mModel, g3m_forward, gml_apply, gumbel_softmax

__all__ = ["AgentGraph", "GraphError", "MultiGraph", "build_l1_graph", "build_l2_graph", "GEL", "GSL",
           "G3mConfig", "G3mModel", "g3m_forward", "gml_apply", "gumbel_softmax"]
