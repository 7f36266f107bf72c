"""Equivariant message passing with high-degree steerable features, plus tools to
predict and measure how equivariant outputs collapse on symmetric geometric graphs."""

__version__ = "0.1.0"

from .geomgraph import GeometricGraph, make_structure, perturb  # noqa: E402
from .groups import degenerate_degrees, enumerate_group, trace_closed_form  # noqa: E402
from .model import ModelConfig, forward, init_params, pool  # noqa: E402

__all__ = [
    "GeometricGraph",
    "ModelConfig",
    "__version__",
    "degenerate_degrees",
    "enumerate_group",
    "forward",
    "init_params",
    "make_structure",
    "perturb",
    "pool",
    "trace_closed_form",
]
