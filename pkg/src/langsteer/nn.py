"""
Minimal feed-forward neural network engine on numpy.

Supports exactly the topology the rest of the package needs: dense MLPs
with a selectable activation, an optional feature-wise affine modulation
(FiLM) inserted after one hidden layer, mean-squared-error loss,
reverse-mode gradients, Adam, and a central finite-difference gradient
oracle for verification. Nothing here is a general autodiff graph; the
forward/backward pair is hand-written for this fixed layer structure.

All training arithmetic runs in float64. The finite-difference oracle
evaluates in extended precision (longdouble) so its noise floor sits well
below the gradient-check tolerance.

Parameters are plain dicts mapping names ("W1", "b1", ...) to numpy
arrays; gradients mirror the same keys and shapes. Shapes are fixed at
init time and every boundary validates finiteness, which is what keeps
the "all entries finite, shape immutable" contract honest without
wrapping arrays in a class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy import special

from .errors import DimensionError, NumericError, StateError

DTYPE = np.float64
ORACLE_DTYPE = np.longdouble

ACTIVATIONS = ("gelu", "tanh", "relu", "linear")

# math.erf only accepts float64 scalars; the longdouble path therefore
# carries extended precision through the linear algebra while the erf
# itself is float64-accurate. Good enough: the finite-difference noise
# this induces is ~1e-12, far below the 1e-4 check tolerance.
_erf_ld = np.vectorize(math.erf, otypes=[np.longdouble])

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _erf(z: np.ndarray) -> np.ndarray:
    if z.dtype == np.longdouble:
        return _erf_ld(z)
    return special.erf(z)


def act_forward(name: str, z: np.ndarray) -> np.ndarray:
    """Apply the named activation elementwise."""
    if name == "gelu":
        return 0.5 * z * (1.0 + _erf(z / _SQRT2))
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def act_grad(name: str, z: np.ndarray) -> np.ndarray:
    """Elementwise derivative of the named activation at pre-activation z."""
    if name == "gelu":
        cdf = 0.5 * (1.0 + _erf(z / _SQRT2))
        pdf = np.exp(-0.5 * z * z) * _INV_SQRT_2PI
        return cdf + z * pdf
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class MLPSpec:
    """Shape of a dense MLP: layer sizes, nonlinearity, optional FiLM site.

    ``layer_dims`` includes the input dim; a spec of (8, 30, 30, 2) is three
    dense layers. ``activation`` applies between layers; the final layer
    applies ``output_activation`` (linear for regression heads, tanh for a
    bounded latent head). ``film_after_layer`` is the 1-based index of the
    dense layer whose activated output gets modulated (must be a hidden
    layer).
    """

    layer_dims: tuple[int, ...]
    activation: str = "gelu"
    film_after_layer: int | None = None
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if len(self.layer_dims) < 2:
            raise DimensionError("layer_dims needs at least input and output sizes")
        if any(d <= 0 for d in self.layer_dims):
            raise DimensionError(f"layer dims must be positive, got {self.layer_dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {ACTIVATIONS}")
        if self.film_after_layer is not None:
            hidden_layers = len(self.layer_dims) - 2
            if not 1 <= self.film_after_layer <= hidden_layers:
                raise DimensionError(
                    f"film_after_layer={self.film_after_layer} does not index a "
                    f"hidden layer (net has {hidden_layers})"
                )

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def film_width(self) -> int | None:
        if self.film_after_layer is None:
            return None
        return self.layer_dims[self.film_after_layer]

    def param_count(self) -> int:
        dims = self.layer_dims
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(self.n_layers))


def init_params(spec: MLPSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform fan-in initialization: W, b ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
    params: dict[str, np.ndarray] = {}
    for i in range(spec.n_layers):
        fan_in = spec.layer_dims[i]
        bound = 1.0 / math.sqrt(fan_in)
        params[f"W{i + 1}"] = rng.uniform(-bound, bound, size=(fan_in, spec.layer_dims[i + 1])).astype(DTYPE)
        params[f"b{i + 1}"] = rng.uniform(-bound, bound, size=(spec.layer_dims[i + 1],)).astype(DTYPE)
    return params


def zero_params_like(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def check_params(spec: MLPSpec, params: dict[str, np.ndarray]) -> None:
    """Validate that a param dict matches the spec and is finite."""
    for i in range(spec.n_layers):
        w, b = params.get(f"W{i + 1}"), params.get(f"b{i + 1}")
        if w is None or b is None:
            raise DimensionError(f"missing parameters for layer {i + 1}")
        want = (spec.layer_dims[i], spec.layer_dims[i + 1])
        if w.shape != want or b.shape != (want[1],):
            raise DimensionError(f"layer {i + 1} shape {w.shape}/{b.shape}, expected {want}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise NumericError(f"non-finite parameter in layer {i + 1}")


def film_apply(h: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Feature-wise affine modulation: gamma * h + beta, elementwise."""
    h = np.asarray(h)
    gamma = np.asarray(gamma)
    beta = np.asarray(beta)
    if gamma.shape[-1] != h.shape[-1] or beta.shape[-1] != h.shape[-1]:
        raise DimensionError(
            f"film vectors {gamma.shape}/{beta.shape} do not match feature width {h.shape[-1]}"
        )
    return gamma * h + beta


def dense_forward(
    spec: MLPSpec,
    params: dict[str, np.ndarray],
    x: np.ndarray,
    film: tuple[np.ndarray, np.ndarray] | None = None,
    dtype=None,
) -> tuple[np.ndarray, dict]:
    """Run the MLP forward, returning (output, cache-for-backprop).

    ``x`` is a single vector (in_dim,) or a batch (N, in_dim). ``film``, if
    given, is a (gamma, beta) pair — per-call vectors or per-sample rows —
    applied to the activated output of layer ``spec.film_after_layer``.
    """
    dtype = dtype or DTYPE
    x = np.asarray(x, dtype=dtype)
    if x.shape[-1] != spec.in_dim:
        raise DimensionError(f"input width {x.shape[-1]}, spec expects {spec.in_dim}")
    if not np.isfinite(x).all():
        raise NumericError("non-finite input to dense_forward")
    if film is not None and spec.film_after_layer is None:
        raise StateError("film vectors supplied but spec has no film site")
    if film is None and spec.film_after_layer is not None:
        raise StateError("spec has a film site but no film vectors were supplied")

    a = x
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = []  # layer inputs, post[i] feeds layer i+1
    film_record = None
    for i in range(spec.n_layers):
        post.append(a)
        z = a @ np.asarray(params[f"W{i + 1}"], dtype=dtype) + np.asarray(params[f"b{i + 1}"], dtype=dtype)
        pre.append(z)
        last = i == spec.n_layers - 1
        a = act_forward(spec.output_activation if last else spec.activation, z)
        if not last and spec.film_after_layer == i + 1:
            gamma = np.asarray(film[0], dtype=dtype)
            beta = np.asarray(film[1], dtype=dtype)
            h = a
            a = film_apply(h, gamma, beta)
            film_record = (h, gamma, beta)
    cache = {"spec": spec, "pre": pre, "post": post, "film": film_record, "dtype": dtype}
    return a, cache


def dense_backward(
    params: dict[str, np.ndarray],
    cache: dict,
    d_out: np.ndarray,
) -> tuple[np.ndarray, dict[str, np.ndarray], tuple[np.ndarray, np.ndarray] | None]:
    """Reverse-mode pass through a cached forward call.

    Returns (d_input, param_grads, film_grads) where film_grads is
    (d_gamma, d_beta) with the same leading shape as the forward film
    arguments, or None when the spec has no film site. Gradients over a
    batch are summed, matching a summed (not averaged) downstream loss;
    the loss function itself owns any 1/N normalization.
    """
    spec: MLPSpec = cache["spec"]
    if not cache["pre"]:
        raise StateError("cache is empty; run dense_forward first")
    dtype = cache["dtype"]
    grads: dict[str, np.ndarray] = {}
    film_grads = None
    da = np.asarray(d_out, dtype=dtype)
    for i in reversed(range(spec.n_layers)):
        z = cache["pre"][i]
        last = i == spec.n_layers - 1
        if last:
            dz = da if spec.output_activation == "linear" else da * act_grad(spec.output_activation, z)
        else:
            if spec.film_after_layer == i + 1:
                h, gamma, _ = cache["film"]
                d_gamma = da * h
                d_beta = da
                film_grads = (d_gamma, d_beta)
                da = da * gamma
            dz = da * act_grad(spec.activation, z)
        a_in = cache["post"][i]
        if a_in.ndim == 1:
            grads[f"W{i + 1}"] = np.outer(a_in, dz)
            grads[f"b{i + 1}"] = dz.copy()
        else:
            grads[f"W{i + 1}"] = a_in.T @ dz
            grads[f"b{i + 1}"] = dz.sum(axis=0)
        da = dz @ np.asarray(params[f"W{i + 1}"], dtype=dtype).T
    return da, grads, film_grads


def film_generate(
    spec: MLPSpec,
    params: dict[str, np.ndarray],
    embedding: np.ndarray,
    dtype=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Map an utterance embedding to (gamma, beta) modulation vectors.

    The generator is an ordinary MLP whose output width is 2x the
    modulated hidden width; the first half is gamma, the second beta.
    Accepts a single embedding (D,) or a batch (N, D).
    """
    out, _ = dense_forward(spec, params, embedding, dtype=dtype)
    half = spec.out_dim // 2
    if spec.out_dim != 2 * half:
        raise DimensionError("film generator output width must be even")
    return out[..., :half], out[..., half:]


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over the batch of squared-error vector norms.

    loss = (1/N) * sum_i ||pred_i - target_i||^2. A single pair of vectors
    counts as a batch of one.
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError(f"pred shape {pred.shape} != target shape {target.shape}")
    if pred.size == 0:
        raise ValueError("empty batch")
    if pred.ndim == 1:
        return float(np.sum((pred - target) ** 2))
    n = pred.shape[0]
    return float(np.sum((pred - target) ** 2) / n)


def mse_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(mse_loss)/d(pred): 2 (pred - target) / N."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError(f"pred shape {pred.shape} != target shape {target.shape}")
    n = 1 if pred.ndim == 1 else pred.shape[0]
    return 2.0 * (pred - target) / n


@dataclass
class AdamState:
    """Adam moments and hyperparameters for one named parameter set."""

    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
            step_count=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Mutates params/state in place and
    returns them; a model instance is single-trainer by contract."""
    for k, g in grads.items():
        if k not in params:
            raise DimensionError(f"gradient for unknown parameter {k!r}")
        if g.shape != params[k].shape:
            raise DimensionError(f"gradient shape {g.shape} != param shape {params[k].shape} for {k!r}")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for k, g in grads.items():
        m = state.first_moment[k]
        v = state.second_moment[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[k] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


LossFn = Callable[[dict[str, np.ndarray]], float]


def fd_gradients(
    loss_fn: LossFn,
    params: dict[str, np.ndarray],
    eps: float = 1e-4,
) -> dict[str, np.ndarray]:
    """Central finite-difference gradients of loss_fn w.r.t. every entry.

    The loss closure is evaluated on extended-precision copies so the
    quotient noise stays far below typical check tolerances. This is the
    independent oracle: it never touches the analytic backward pass.
    """
    work = {k: v.astype(ORACLE_DTYPE) for k, v in params.items()}
    out: dict[str, np.ndarray] = {}
    for k, v in work.items():
        g = np.zeros(v.shape, dtype=ORACLE_DTYPE)
        flat = v.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            hi = loss_fn(work)
            flat[j] = orig - eps
            lo = loss_fn(work)
            flat[j] = orig
            gflat[j] = (hi - lo) / (2.0 * np.longdouble(eps))
        out[k] = g.astype(DTYPE)
    return out


@dataclass
class GradCheckReport:
    """Per-parameter-block comparison of analytic vs numerical gradients."""

    max_rel_err: dict[str, float]
    tolerance: float

    @property
    def worst(self) -> float:
        return max(self.max_rel_err.values()) if self.max_rel_err else 0.0

    @property
    def flagged(self) -> list[str]:
        return sorted(k for k, v in self.max_rel_err.items() if v > self.tolerance)

    @property
    def ok(self) -> bool:
        return not self.flagged

    def summary(self) -> str:
        lines = [f"gradient check (tol {self.tolerance:g}): worst rel err {self.worst:.3e}"]
        for k in sorted(self.max_rel_err):
            mark = " <-- FLAGGED" if k in self.flagged else ""
            lines.append(f"  {k}: {self.max_rel_err[k]:.3e}{mark}")
        return "\n".join(lines)


def relative_errors(
    analytic: dict[str, np.ndarray],
    numeric: dict[str, np.ndarray],
    floor: float = 1e-8,
) -> dict[str, float]:
    """Max elementwise |a - n| / max(|a|, |n|, floor) per parameter block."""
    out = {}
    for k in analytic:
        a, n = analytic[k], numeric[k]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        out[k] = float(np.max(np.abs(a - n) / denom))
    return out


def grad_check(
    loss_fn: LossFn,
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    eps: float = 1e-4,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare supplied analytic gradients against the FD oracle."""
    numeric = fd_gradients(loss_fn, params, eps=eps)
    return GradCheckReport(max_rel_err=relative_errors(analytic, numeric), tolerance=tolerance)


# --- checkpoint text format ----------------------------------------------

def mlp_to_doc(spec: MLPSpec, params: dict[str, np.ndarray]) -> dict:
    """Self-describing JSON-able block for one MLP: config plus flat arrays."""
    return {
        "layer_dims": list(spec.layer_dims),
        "activation": spec.activation,
        "film_after_layer": spec.film_after_layer,
        "output_activation": spec.output_activation,
        "params": {
            k: {"rows": int(v.shape[0]), "cols": int(v.shape[1]) if v.ndim == 2 else 1,
                "data": [float(x) for x in v.reshape(-1)]}
            for k, v in params.items()
        },
    }


def mlp_from_doc(doc: dict) -> tuple[MLPSpec, dict[str, np.ndarray]]:
    spec = MLPSpec(
        layer_dims=tuple(doc["layer_dims"]),
        activation=doc["activation"],
        film_after_layer=doc.get("film_after_layer"),
        output_activation=doc.get("output_activation", "linear"),
    )
    params = {}
    for k, block in doc["params"].items():
        arr = np.array(block["data"], dtype=DTYPE)
        if k.startswith("W"):
            arr = arr.reshape(block["rows"], block["cols"])
        params[k] = arr
    check_params(spec, params)
    return spec, params


def save_mlp(path: str, spec: MLPSpec, params: dict[str, np.ndarray]) -> None:
    doc = {"schema": "mlp-checkpoint/1", **mlp_to_doc(spec, params)}
    with open(path, "w") as f:
        json.dump(doc, f)


def load_mlp(path: str) -> tuple[MLPSpec, dict[str, np.ndarray]]:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("schema") != "mlp-checkpoint/1":
        raise ValueError(f"not an mlp checkpoint: {path}")
    return mlp_from_doc(doc)
