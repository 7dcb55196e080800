"""Layer objects binding the raw kernels to parameters and forward caches.

Each layer caches its own forward input so that ``backward`` can run the
matching pure kernel; parameter gradients land in ``layer.grads`` keyed
like ``layer.params()``. Only entries named ``"w"`` are subject to weight
decay (conv/fc weights; never biases or batch-norm affine parameters).
"""

import numpy as np

from . import kernels
from .activations import get_activation


class Layer:
    """Minimal interface: forward/backward plus parameter and state dicts."""

    name = "?"
    table_name = None  # entry in the model's structural row; None for auxiliary layers

    def params(self):
        return {}

    def state(self):
        return {}

    def forward(self, x, train):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, name, in_ch, out_ch, k, stride=1, pad=0, rng=None, dtype=np.float32):
        self.name = name
        self.table_name = name
        self.stride = stride
        self.pad = pad
        fan_in = in_ch * k * k
        rng = rng or np.random.default_rng(0)
        self.w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_ch, in_ch, k, k)).astype(dtype)
        self.b = np.zeros(out_ch, dtype=dtype)
        self.grads = {}
        self._x = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def forward(self, x, train):
        self._x = x
        return kernels.conv2d_forward(x, self.w, self.b, self.stride, self.pad)

    def backward(self, dy):
        g = kernels.conv2d_backward(self._x, self.w, dy, self.stride, self.pad)
        self.grads = {"w": g.param_grads[0], "b": g.param_grads[1]}
        return g.input_grad


class Linear(Layer):
    def __init__(self, name, in_features, out_features, rng=None, dtype=np.float32):
        self.name = name
        self.table_name = name
        rng = rng or np.random.default_rng(0)
        self.w = rng.normal(0.0, np.sqrt(2.0 / in_features), (out_features, in_features)).astype(dtype)
        self.b = np.zeros(out_features, dtype=dtype)
        self.grads = {}
        self._x = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def forward(self, x, train):
        self._x = x
        return kernels.linear_forward(x, self.w, self.b)

    def backward(self, dy):
        g = kernels.linear_backward(self._x, self.w, dy)
        self.grads = {"w": g.param_grads[0], "b": g.param_grads[1]}
        return g.input_grad


class MaxPool(Layer):
    def __init__(self, name, window, stride=None):
        self.name = name
        self.table_name = "max"
        self.window = window
        self.stride = stride or window
        self.grads = {}
        self._x = None

    def forward(self, x, train):
        self._x = x
        return kernels.maxpool_forward(x, self.window, self.stride)

    def backward(self, dy):
        return kernels.maxpool_backward(self._x, self.window, dy, self.stride).input_grad


class AvgPool(Layer):
    def __init__(self, name, window, stride=None):
        self.name = name
        self.table_name = "avg"
        self.window = window
        self.stride = stride or window
        self.grads = {}
        self._x = None

    def forward(self, x, train):
        self._x = x
        return kernels.avgpool_forward(x, self.window, self.stride)

    def backward(self, dy):
        return kernels.avgpool_backward(self._x, self.window, dy, self.stride).input_grad


class Activation(Layer):
    def __init__(self, name, kind):
        self.name = name
        self.table_name = kind
        self.kind = kind
        self.fn, self.deriv = get_activation(kind)
        self.grads = {}
        self._x = None

    def forward(self, x, train):
        self._x = x
        return self.fn(x)

    def backward(self, dy):
        return dy * self.deriv(self._x)


class BatchNorm(Layer):
    """Per-channel batch normalization; auxiliary (not part of the structural row)."""

    def __init__(self, name, channels, dtype=np.float32,
                 momentum=kernels.BN_MOMENTUM, eps=kernels.BN_EPS):
        self.name = name
        self.table_name = None
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.grads = {}
        self._x = None
        self._train = False

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def state(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train):
        self._x = x
        self._train = train
        y, new_mean, new_var = kernels.batchnorm_forward(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            train, self.momentum, self.eps)
        if train:
            self.running_mean = new_mean.astype(self.running_mean.dtype)
            self.running_var = new_var.astype(self.running_var.dtype)
        return y

    def backward(self, dy):
        g = kernels.batchnorm_backward(self._x, self.gamma, dy, self._train,
                                       self.running_mean, self.running_var, self.eps)
        self.grads = {"gamma": g.param_grads[0], "beta": g.param_grads[1]}
        return g.input_grad
