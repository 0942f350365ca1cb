from ambient.numerics.tensor import DiffGraph, Tensor
from ambient.numerics import ops

__all__ = ["DiffGraph", "Tensor", "ops"]
