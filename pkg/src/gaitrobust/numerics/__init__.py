"""Dense float64 tensors, reverse-mode autodiff and optimizers."""

from .checkpoint import (CheckpointError, dumps_params, load_checkpoint, loads_params,
                         params_digest, save_checkpoint)
from .graph import (PRIMITIVES, Graph, GraphError, Node, ShapeError, evaluate, gradient,
                    value_and_gradient)
from .optim import Optimizer, adam, glorot_uniform, sgd

__all__ = [
    "CheckpointError", "Graph", "GraphError", "Node", "Optimizer", "PRIMITIVES", "ShapeError",
    "adam", "dumps_params", "evaluate", "glorot_uniform", "gradient", "load_checkpoint",
    "loads_params", "params_digest", "save_checkpoint", "sgd", "value_and_gradient",
]
