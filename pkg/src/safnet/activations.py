"""Elementwise activation functions and their exact derivatives.

The two symmetric activations (``rbf1d``, ``mrelu``) suppress inputs of
large magnitude from either side and map into [0, 1]; ``relu`` and
``sigmoid`` are the plain-baseline counterparts. All functions are pure,
total, and preserve the input dtype, so they can be applied to whole
feature tensors without learnable parameters (any rescaling/shifting is
the preceding layer's job).
"""

import numpy as np


def rbf1d(x):
    """Gaussian bump exp(-x^2); output in (0, 1], peak 1 at x = 0."""
    x = np.asarray(x)
    return np.exp(-np.square(x))


def rbf1d_deriv(x):
    """Derivative of rbf1d: -2x * exp(-x^2)."""
    x = np.asarray(x)
    return -2.0 * x * np.exp(-np.square(x))


def mrelu(x):
    """Tent function: 1+x on (-1,0), 1-x on (0,1), 0 outside [-1,1].

    Equals min(relu(1-x), relu(1+x)) everywhere; output in [0, 1].
    """
    x = np.asarray(x)
    return np.maximum(1.0 - np.abs(x), 0.0)


def mrelu_deriv(x):
    """Piecewise slope of mrelu: +1 on (-1,0), -1 on (0,1), else 0.

    At the kinks {-1, 0, 1} the subgradient choice is 0.
    """
    x = np.asarray(x)
    out = np.zeros_like(x)
    out[(x > -1.0) & (x < 0.0)] = 1.0
    out[(x > 0.0) & (x < 1.0)] = -1.0
    return out


def relu(x):
    x = np.asarray(x)
    return np.maximum(x, 0.0)


def relu_deriv(x):
    # relu'(0) = 0 by convention
    x = np.asarray(x)
    return (x > 0.0).astype(x.dtype)


def sigmoid(x):
    x = np.asarray(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_deriv(x):
    s = sigmoid(x)
    return s * (1.0 - s)


# kind tag -> (function, derivative); the tag set doubles as the registry of
# activations a model layer may name.
ACTIVATIONS = {
    "rbf1d": (rbf1d, rbf1d_deriv),
    "mrelu": (mrelu, mrelu_deriv),
    "relu": (relu, relu_deriv),
    "sigmoid": (sigmoid, sigmoid_deriv),
}

SYMMETRIC_KINDS = ("rbf1d", "mrelu")


def get_activation(kind):
    """Return (function, derivative) for an activation tag."""
    try:
        return ACTIVATIONS[kind]
    except KeyError:
        raise KeyError(f"unknown activation kind {kind!r}; expected one of {sorted(ACTIVATIONS)}") from None
