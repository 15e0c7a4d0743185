"""Independent reference implementations used as test oracles.

Everything here is deliberately written without importing the code under
test: scalar loops, math.erf, explicit matrix products. Slow and obvious
beats fast and shared.
"""

import math

import numpy as np


def ref_gelu(x: float) -> float:
    return 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))


def ref_activation(name: str, x: float) -> float:
    if name == "gelu":
        return ref_gelu(x)
    if name == "tanh":
        return math.tanh(x)
    if name == "relu":
        return x if x > 0 else 0.0
    if name == "linear":
        return x
    raise ValueError(name)


def ref_mlp_forward(layer_dims, activation, params, x, film=None, film_after=None):
    """Plain-loop MLP forward: weights params['W1']... applied in order,
    activation between layers, optional (gamma, beta) after layer film_after."""
    a = [float(v) for v in x]
    n_layers = len(layer_dims) - 1
    for li in range(n_layers):
        w = params[f"W{li + 1}"]
        b = params[f"b{li + 1}"]
        out = []
        for j in range(layer_dims[li + 1]):
            s = float(b[j])
            for i in range(layer_dims[li]):
                s += a[i] * float(w[i, j])
            out.append(s)
        if li < n_layers - 1:
            out = [ref_activation(activation, v) for v in out]
            if film_after == li + 1:
                gamma, beta = film
                out = [float(g) * v + float(bt) for g, v, bt in zip(gamma, out, beta)]
        a = out
    return np.array(a)


def ref_cosine(u, v) -> float:
    du = math.sqrt(sum(float(a) * float(a) for a in u))
    dv = math.sqrt(sum(float(a) * float(a) for a in v))
    dot = sum(float(a) * float(b) for a, b in zip(u, v))
    return dot / (du * dv)


def ref_planar_fk(angles, links=(1.0, 1.0, 1.0)):
    x = y = 0.0
    cum = 0.0
    for th, ln in zip(angles, links):
        cum += th
        x += ln * math.cos(cum)
        y += ln * math.sin(cum)
    return x, y, cum
