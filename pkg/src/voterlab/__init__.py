"""Voter models with mutation, their coalescing duals and Fleming-Viot limits."""

from .kernel import Kernel, build_graph_family, random_kernel
from .measures import FiniteMeasure
from .typespace import MutationMeasure, TypeSpace

__version__ = "0.1.0"

__all__ = ["Kernel", "build_graph_family", "random_kernel", "FiniteMeasure", "MutationMeasure",
           "TypeSpace", "__version__"]
