"""Discrete-time simulator and analysis toolkit for a UAV + LEO-satellite
post-disaster network: AoI, energy and spectrum accounting, baseline
schemes, graph neural layers and constellation sizing."""

__version__ = "0.1.0"
