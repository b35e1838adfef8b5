"""Small dense networks with hand-written reverse-mode gradients and Adam.

Hidden layers use the rectifier (subgradient 0 at exactly 0), the output
layer is either ``tanh`` (actors) or ``linear`` (critics).  Weights are
stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of shape
``(K, fan_in)`` maps through ``X @ W + b``.  Everything is float64.

Checkpoint layout (one file per network)::

    line 1   JSON header: format, layer_dims, output_activation, step, count
    rest     little-endian float64 array: for each layer W (row-major) then b,
             followed by the Adam first moments and second moments in the
             same order
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

FORMAT = "lanefree-mlp/1"
ACTIVATIONS = ("tanh", "linear")


@dataclass
class MlpParams:
    layer_dims: list[int]
    output_activation: str
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    adam_m: list[np.ndarray] = field(default_factory=list)
    adam_v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    def __post_init__(self) -> None:
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match layer_dims")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[k], self.layer_dims[k + 1]) or b.shape != (self.layer_dims[k + 1],):
                raise ValueError(f"layer {k} has shape {w.shape}/{b.shape}, expected dims {self.layer_dims[k:k + 2]}")
        if not self.adam_m:
            self.adam_m = [np.zeros_like(p) for p in self.arrays]
            self.adam_v = [np.zeros_like(p) for p in self.arrays]

    @property
    def arrays(self) -> list[np.ndarray]:
        """Parameters in canonical order ``W0, b0, W1, b1, ...`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.arrays)

    def copy(self) -> "MlpParams":
        return MlpParams(
            layer_dims=list(self.layer_dims),
            output_activation=self.output_activation,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            adam_m=[m.copy() for m in self.adam_m],
            adam_v=[v.copy() for v in self.adam_v],
            step=self.step,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.arrays])


@dataclass
class GradientBundle:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray

    @property
    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def init_mlp(layer_dims: Sequence[int], output_activation: str, rng: np.random.Generator) -> MlpParams:
    """Uniform initialization in ``+-1/sqrt(fan_in)`` for weights and biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(list(layer_dims), output_activation, weights, biases)


def _check_input(params: MlpParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.layer_dims[0]:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {params.layer_dims[0]}")
    return x


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on one input vector or a batch of row vectors."""
    h = _check_input(params, x)
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if k < last:
            h = np.maximum(z, 0.0)
        else:
            h = np.tanh(z) if params.output_activation == "tanh" else z
    return h


def forward_cached(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Like :func:`forward` but also returns the layer inputs needed by :func:`backward`."""
    h = _check_input(params, x)
    acts = [h]
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if k < last:
            h = np.maximum(z, 0.0)
        else:
            h = np.tanh(z) if params.output_activation == "tanh" else z
        acts.append(h)
    return h, acts


def backward(
    params: MlpParams,
    x: np.ndarray,
    upstream: np.ndarray,
    cache: list[np.ndarray] | None = None,
    param_grads: bool = True,
) -> GradientBundle:
    """Gradients of ``sum(forward(x) * upstream)`` w.r.t. every parameter and the input.

    For a batch the per-sample contributions are summed; pass
    ``upstream / K`` to get the gradient of a batch mean.  With
    ``param_grads=False`` only the input gradient is formed (the parameter
    lists are left empty).
    """
    if cache is None:
        _, cache = forward_cached(params, x)
    out = cache[-1]
    g = np.asarray(upstream, dtype=float)
    if g.shape != out.shape:
        raise ValueError(f"upstream shape {g.shape} does not match output shape {out.shape}")
    if params.output_activation == "tanh":
        g = g * (1.0 - out**2)
    n_layers = len(params.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for k in range(n_layers - 1, -1, -1):
        h_in = cache[k]
        if param_grads and g.ndim == 1:
            gw[k] = np.outer(h_in, g)
            gb[k] = g.copy()
        elif param_grads:
            gw[k] = h_in.T @ g
            gb[k] = g.sum(axis=0)
        g = g @ params.weights[k].T
        if k > 0:
            g = g * (cache[k] > 0)
    if not param_grads:
        return GradientBundle([], [], g)
    return GradientBundle(gw, gb, g)


def adam_step(
    params: MlpParams,
    grads: GradientBundle,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> MlpParams:
    """One bias-corrected Adam descent step, applied in place."""
    garrs = grads.arrays
    for g in garrs:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient passed to adam_step")
    params.step += 1
    c1 = 1.0 - beta1**params.step
    c2 = 1.0 - beta2**params.step
    for p, g, m, v in zip(params.arrays, garrs, params.adam_m, params.adam_v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


def soft_update(target: MlpParams, main: MlpParams, tau: float) -> MlpParams:
    """Blend ``target <- tau * main + (1 - tau) * target`` in place."""
    if target.layer_dims != main.layer_dims:
        raise ValueError("target and main networks have different shapes")
    for t, m in zip(target.arrays, main.arrays):
        t *= 1.0 - tau
        t += tau * m
    return target


def hard_update(target: MlpParams, main: MlpParams) -> MlpParams:
    return soft_update(target, main, 1.0)


def finite_difference_gradients(
    params: MlpParams, x: np.ndarray, upstream: np.ndarray, eps: float = 1e-5
) -> GradientBundle:
    """Central-difference oracle for :func:`backward`; slow, test use only."""
    x = np.asarray(x, dtype=float).copy()
    upstream = np.asarray(upstream, dtype=float)

    def objective() -> float:
        return float(np.sum(forward(params, x) * upstream))

    def fd(arr: np.ndarray) -> np.ndarray:
        grad = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            plus = objective()
            arr[idx] = orig - eps
            minus = objective()
            arr[idx] = orig
            grad[idx] = (plus - minus) / (2 * eps)
        return grad

    return GradientBundle(
        weights=[fd(w) for w in params.weights],
        biases=[fd(b) for b in params.biases],
        input=fd(x),
    )


def save_params(params: MlpParams, path: str | Path) -> None:
    header = {
        "format": FORMAT,
        "layer_dims": params.layer_dims,
        "output_activation": params.output_activation,
        "step": params.step,
        "count": params.n_params,
        "sections": ["params", "adam_m", "adam_v"],
    }
    blob = np.concatenate(
        [params.flat()]
        + [np.concatenate([a.ravel() for a in moments]) for moments in (params.adam_m, params.adam_v)]
    ).astype("<f8")
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(blob.tobytes())


def load_params(path: str | Path) -> MlpParams:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = fh.read()
    if header.get("format") != FORMAT:
        raise ValueError(f"{path}: not a {FORMAT} file")
    dims = header["layer_dims"]
    count = header["count"]
    data = np.frombuffer(raw, dtype="<f8").astype(float)
    if data.size != 3 * count:
        raise ValueError(f"{path}: expected {3 * count} values, found {data.size}")

    def unpack(chunk: np.ndarray) -> list[np.ndarray]:
        out, pos = [], 0
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            out.append(chunk[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
            pos += fan_in * fan_out
            out.append(chunk[pos:pos + fan_out].copy())
            pos += fan_out
        return out

    params_arr, m_arr, v_arr = (unpack(data[k * count:(k + 1) * count]) for k in range(3))
    return MlpParams(
        layer_dims=list(dims),
        output_activation=header["output_activation"],
        weights=params_arr[0::2],
        biases=params_arr[1::2],
        adam_m=m_arr,
        adam_v=v_arr,
        step=int(header["step"]),
    )
