"""Simulator for reinforcement learning on photonic beamsplitter-tree memories."""

__version__ = "0.1.0"
