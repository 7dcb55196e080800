"""The six concrete networks (plain / rbf / mrelu for MNIST and CIFAR-10).

A ModelGraph owns an ordered list of layers plus a loss kind. Robust
variants insert a symmetric activation directly after every convolution
(with a batch-norm in between to keep its input centered), end with a
Gaussian-bump layer after the last fully-connected layer, and train with
the hybrid loss; plain variants keep the classic LeNet shape with the
softmax-log loss. Forward takes images in raw 0..255 units and scales to
[0, 1] at the network boundary, so input gradients and perturbation
arithmetic stay in pixel units.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .layers import Activation, AvgPool, BatchNorm, Conv2d, Linear, MaxPool
from .losses import (NONSENSE, hybrid_loss_batch, softmax,
                     softmax_log_loss_batch)

DATASETS = ("mnist", "cifar10")
VARIANTS = ("plain", "rbf", "mrelu")

INPUT_SHAPES = {"mnist": (1, 28, 28), "cifar10": (3, 32, 32)}
N_CLASSES = 10

PIXEL_SCALE = 255.0


@dataclass
class ClassDecision:
    """Decision-rule output: a category index, or NONSENSE with the max score."""

    label: int
    confidence: float


class ModelGraph:
    def __init__(self, dataset, variant, layers, loss_kind, seed=0, dtype=np.float32):
        self.dataset = dataset
        self.variant = variant
        self.layers = layers
        self.loss_kind = loss_kind  # "sloss" | "hloss"
        self.seed = seed
        self.epoch = 0
        self.dtype = dtype
        self.input_shape = INPUT_SHAPES[dataset]
        self.n_classes = N_CLASSES

    # ---- structure ----------------------------------------------------

    @property
    def robust(self):
        return self.variant != "plain"

    def table_row(self):
        """Structural row (including the loss entry); length matches the variant."""
        return [l.table_name for l in self.layers if l.table_name is not None] + [self.loss_kind]

    def layer_count(self):
        return len(self.table_row())

    def named_tensors(self):
        """All persistent tensors, keyed 'layer.field' in deterministic order."""
        out = {}
        for layer in self.layers:
            for pname, arr in list(layer.params().items()) + list(layer.state().items()):
                out[f"{layer.name}.{pname}"] = arr
        return out

    def parameters(self):
        """Yield (layer, name, array) for every trainable parameter."""
        for layer in self.layers:
            for pname, arr in layer.params().items():
                yield layer, pname, arr

    # ---- compute ------------------------------------------------------

    def _check_batch(self, batch):
        if batch.ndim != 4 or batch.shape[1:] != self.input_shape:
            raise ShapeError(
                f"{self.dataset} batch must be (N, {', '.join(map(str, self.input_shape))}), got {batch.shape}"
            )

    def forward(self, batch, train=False):
        """Score vector per sample; raw final-layer outputs (pre-loss)."""
        self._check_batch(batch)
        x = (np.asarray(batch) / PIXEL_SCALE).astype(self.dtype)
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward_from_scores(self, dscores):
        """Backprop an upstream gradient on the scores; returns the input gradient.

        Parameter gradients are left on each layer's ``grads`` dict. The
        returned gradient is w.r.t. the raw 0..255 input units. Requires a
        preceding ``forward`` call (same mode) to populate layer caches.
        """
        dx = dscores.astype(self.dtype)
        for layer in reversed(self.layers):
            dx = layer.backward(dx)
        return dx / PIXEL_SCALE

    def confidences(self, scores):
        """Map raw scores to decision confidences (softmax for plain variants)."""
        return softmax(scores) if self.loss_kind == "sloss" else scores

    def loss_and_grad(self, scores, labels, loss_params=None):
        """Batch-mean loss and its score gradient under the model's loss kind."""
        if self.loss_kind == "hloss":
            if loss_params is None:
                raise ConfigError("hybrid-loss model needs HybridLossParams")
            return hybrid_loss_batch(scores, labels, loss_params)
        return softmax_log_loss_batch(scores, labels)

    def loss_backward(self, batch, labels, loss_params=None, train=False):
        """forward + loss + full backward; returns (loss, input_grad)."""
        scores = self.forward(batch, train=train)
        loss, dscores = self.loss_and_grad(scores, labels, loss_params)
        return loss, self.backward_from_scores(dscores)


def decide(confidences, threshold=0.5):
    """Argmax label if the max confidence reaches the threshold, else NONSENSE.

    The boundary is inclusive: a max exactly at the threshold keeps its label.
    """
    confidences = np.asarray(confidences)
    label = int(np.argmax(confidences))
    conf = float(confidences[label])
    if conf < threshold:
        return ClassDecision(NONSENSE, conf)
    return ClassDecision(label, conf)


def decide_batch(confidences, threshold=0.5):
    """Vectorized decision rule: returns (labels, confidences) arrays."""
    confidences = np.asarray(confidences)
    labels = confidences.argmax(axis=1)
    conf = confidences[np.arange(len(labels)), labels]
    labels = np.where(conf >= threshold, labels, NONSENSE)
    return labels, conf


def _saf_kind(variant):
    return {"rbf": "rbf1d", "mrelu": "mrelu"}[variant]


def build_model(dataset, variant, seed=0, dtype=np.float32, batchnorm=None):
    """Construct one of the six networks.

    ``batchnorm`` defaults to True for robust variants (needed to keep the
    symmetric activations' inputs in their responsive band) and False for
    plain ones; pass an explicit bool to override.
    """
    if dataset not in DATASETS:
        raise ConfigError(f"unknown dataset {dataset!r}; expected one of {DATASETS}")
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    robust = variant != "plain"
    use_bn = robust if batchnorm is None else bool(batchnorm)
    rng = np.random.default_rng(seed)
    layers = []

    def conv_block(idx, in_ch, out_ch, pad):
        layers.append(Conv2d(f"cv{idx}", in_ch, out_ch, 5, stride=1, pad=pad, rng=rng, dtype=dtype))
        if use_bn:
            layers.append(BatchNorm(f"bn{idx}", out_ch, dtype=dtype))
        if robust:
            layers.append(Activation(f"saf{idx}", _saf_kind(variant)))

    if dataset == "mnist":
        conv_block(1, 1, 20, pad=0)
        layers.append(MaxPool("pool1", 2))
        conv_block(2, 20, 50, pad=0)
        layers.append(MaxPool("pool2", 2))
        layers.append(Linear("fc1", 4 * 4 * 50, 500, rng=rng, dtype=dtype))
        layers.append(Activation("relu1", "relu"))
        layers.append(Linear("fc2", 500, N_CLASSES, rng=rng, dtype=dtype))
    else:
        conv_block(1, 3, 32, pad=2)
        layers.append(MaxPool("pool1", 2))
        conv_block(2, 32, 32, pad=2)
        layers.append(AvgPool("pool2", 2))
        conv_block(3, 32, 64, pad=2)
        layers.append(AvgPool("pool3", 2))
        layers.append(Linear("fc1", 4 * 4 * 64, 64, rng=rng, dtype=dtype))
        layers.append(Activation("relu1", "relu"))
        layers.append(Linear("fc2", 64, N_CLASSES, rng=rng, dtype=dtype))
    if robust:
        layers.append(Activation("final_rbf", "rbf1d"))
    loss_kind = "hloss" if robust else "sloss"
    return ModelGraph(dataset, variant, layers, loss_kind, seed=seed, dtype=dtype)
