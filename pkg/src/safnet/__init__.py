"""Robust CNNs built on symmetric activation functions.

Pure numpy, CPU only: hand-written forward/backward kernels, LeNet-style
model graphs for MNIST and CIFAR-10 (plain and robust variants), the hybrid
loss, a fast-gradient-sign perturbation lab, an SGD training engine with
random/mean/adversarial training tricks, hypersphere-judge capacity blocks,
and a robustness evaluation harness.
"""

__version__ = "0.1.0"

from .activations import mrelu, mrelu_deriv, rbf1d, rbf1d_deriv, relu, relu_deriv, sigmoid, sigmoid_deriv
from .losses import NONSENSE, HybridLossParams, hybrid_loss, hybrid_loss_grad, softmax_log_loss
from .models import ClassDecision, ModelGraph, build_model, decide

__all__ = [
    "__version__",
    "rbf1d", "rbf1d_deriv", "mrelu", "mrelu_deriv",
    "relu", "relu_deriv", "sigmoid", "sigmoid_deriv",
    "NONSENSE", "HybridLossParams", "hybrid_loss", "hybrid_loss_grad", "softmax_log_loss",
    "ModelGraph", "ClassDecision", "build_model", "decide",
]
