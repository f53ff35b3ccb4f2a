"""Small dense ReLU networks with hand-written reverse mode and Adam.

Inputs may be a single vector or a batch of row vectors. ``backward``
returns the exact gradient of ``sum(output * output_grad)``, so callers that
want a batch mean scale ``output_grad`` themselves.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths plus the output map.

    ``output_scale`` ``None`` is the identity map; a positive ``a`` gives the
    bounded map ``a * (2 * sigmoid(z) - 1)``, which lies in ``(-a, a)``.
    """

    layer_sizes: tuple[int, ...]
    output_scale: float | None = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"layer_sizes needs >= 2 positive entries, got {self.layer_sizes}")
        if self.output_scale is not None and not self.output_scale > 0:
            raise ValueError("bounded output map needs a positive scale")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def to_dict(self) -> dict:
        return {"layer_sizes": list(self.layer_sizes), "output_scale": self.output_scale}


@dataclass
class Mlp:
    """Parameters of an ``MlpSpec``: weights[k] has shape (fan_in, fan_out)."""

    spec: MlpSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != self.spec.n_layers or len(self.biases) != self.spec.n_layers:
            raise ValueError("parameter count does not match spec")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.spec.layer_sizes[k], self.spec.layer_sizes[k + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ValueError(f"layer {k}: expected W{shape}, b({shape[1]},), got {w.shape}, {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k}: non-finite parameters")

    def __call__(self, x):
        return forward(self, x)[0]

    def copy(self) -> "Mlp":
        return Mlp(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def zeros_like(self) -> "Grads":
        return Grads([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for a in self.arrays():
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


@dataclass
class Grads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def scale(self, c: float) -> "Grads":
        return Grads([w * c for w in self.weights], [b * c for b in self.biases])

    def add_(self, other: "Grads") -> "Grads":
        for a, b in zip(self.arrays(), other.arrays()):
            a += b
        return self


@dataclass
class Cache:
    inputs: list[np.ndarray]  # input of each linear layer
    pre: list[np.ndarray]  # pre-activation of each linear layer
    single: bool


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_params(spec: MlpSpec, seed: int) -> Mlp:
    """He-uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return Mlp(spec, ws, bs)


def forward(params: Mlp, x) -> tuple[np.ndarray, Cache]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != params.spec.layer_sizes[0]:
        raise ValueError(f"input has shape {x.shape}, expected last dim {params.spec.layer_sizes[0]}")
    if not np.all(np.isfinite(h)):
        raise ValueError("non-finite network input")
    inputs, pre = [], []
    last = params.spec.n_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if k < last else z
    a = params.spec.output_scale
    if a is not None:
        h = a * (2.0 * _sigmoid(h) - 1.0)
    return (h[0] if single else h), Cache(inputs, pre, single)


def backward(params: Mlp, cache: Cache, output_grad, param_grads: bool = True) -> tuple[Grads | None, np.ndarray]:
    """Gradients of ``sum(output * output_grad)``.

    With ``param_grads=False`` only the input gradient is computed (used when
    differentiating through a frozen network) and ``None`` is returned for
    the parameter gradients.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if cache.single:
        g = g[None, :]
    if g.shape != cache.pre[-1].shape:
        raise ValueError(f"output_grad shape {np.shape(output_grad)} does not match forward output")
    a = params.spec.output_scale
    if a is not None:
        s = _sigmoid(cache.pre[-1])
        g = g * (2.0 * a * s * (1.0 - s))
    n = params.spec.n_layers
    gw, gb = [None] * n, [None] * n
    for k in range(n - 1, -1, -1):
        if k < n - 1:
            # ReLU'(0) := 0
            g = g * (cache.pre[k] > 0.0)
        if param_grads:
            gw[k] = cache.inputs[k].T @ g
            gb[k] = g.sum(axis=0)
        g = g @ params.weights[k].T
    return (Grads(gw, gb) if param_grads else None), (g[0] if cache.single else g)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Mlp, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(a) for a in params.arrays()], v=[np.zeros_like(a) for a in params.arrays()], **kw)


def adam_step(params: Mlp, grads: Grads, state: AdamState) -> tuple[Mlp, AdamState]:
    """One bias-corrected Adam update, applied in place."""
    ps, gs = params.arrays(), grads.arrays()
    if len(ps) != len(gs) or len(state.m) != len(ps):
        raise ValueError("gradient/state structure does not match parameters")
    for p, g in zip(ps, gs):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient passed to adam_step")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(ps, gs, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# -- checkpoints ------------------------------------------------------------

def to_json_dict(params: Mlp, meta: dict | None = None) -> dict:
    d = {
        "format_version": FORMAT_VERSION,
        "spec": params.spec.to_dict(),
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }
    if meta:
        d["meta"] = meta
    return d


def from_json_dict(d: dict) -> Mlp:
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {d.get('format_version')}")
    spec = MlpSpec(tuple(d["spec"]["layer_sizes"]), d["spec"].get("output_scale"))
    ws = [np.array(w, dtype=np.float64).reshape(spec.layer_sizes[k], spec.layer_sizes[k + 1]) for k, w in enumerate(d["weights"])]
    bs = [np.array(b, dtype=np.float64) for b in d["biases"]]
    return Mlp(spec, ws, bs)


def save_checkpoint(params: Mlp, path, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_json_dict(params, meta), fh)


def load_checkpoint(path) -> tuple[Mlp, dict]:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return from_json_dict(d), d.get("meta", {})


def mlp_spec(n_in: int, hidden: Sequence[int], n_out: int, output_scale: float | None = None) -> MlpSpec:
    return MlpSpec((n_in, *hidden, n_out), output_scale)
