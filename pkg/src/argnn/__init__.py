"""Adaptive Riemannian graph neural networks in numpy.

Every node carries a learned diagonal metric that shapes message passing;
curvature and smoothness penalties regularise the metric field.
"""
__version__ = "0.1.0"

from .graph import Graph, load_dataset, save_dataset, homophily_ratio  # noqa: E402
from .model import GeometryMode, ModelConfig, init_params, model_forward  # noqa: E402
from .losses import HyperparamInputs, theory_hyperparams  # noqa: E402
from .trainer import TrainConfig, RunReport, train  # noqa: E402

__all__ = [
    "Graph", "load_dataset", "save_dataset", "homophily_ratio",
    "GeometryMode", "ModelConfig", "init_params", "model_forward",
    "HyperparamInputs", "theory_hyperparams",
    "TrainConfig", "RunReport", "train",
]
