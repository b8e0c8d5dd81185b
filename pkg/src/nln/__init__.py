"""Neural logic networks: differentiable AND/OR rule learners with rule extraction."""

__version__ = "0.1.0"
