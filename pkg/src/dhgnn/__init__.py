"""Directed hypergraph neural networks for circuit netlists."""

__version__ = "0.1.0"
