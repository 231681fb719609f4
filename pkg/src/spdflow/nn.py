"""A small multilayer perceptron with hand-written backprop and AdamW.

Layers are affine maps with SiLU between them and a linear output. All
arrays are float64; inputs are row-major batches ``(n, in_dim)``.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import FormatError, InvalidInput, NonFiniteGradient


@dataclass
class MlpParams:
    weights: list  # (out, in) per layer
    biases: list  # (out,) per layer

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    @property
    def hidden_dims(self):
        return [w.shape[0] for w in self.weights[:-1]]

    def arrays(self):
        """Parameter arrays in serialization order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def mlp_init(seed, in_dim, hidden_dims, out_dim):
    """Glorot-uniform weights and zero biases, deterministic in ``seed``."""
    dims = [in_dim, *hidden_dims, out_dim]
    if any(int(k) <= 0 for k in dims):
        raise InvalidInput(f"layer sizes must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def silu(x):
    return x * expit(x)


def _silu_grad(x):
    sig = expit(x)
    return sig * (1.0 + x * (1.0 - sig))


def _as_batch(p, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != p.in_dim:
        raise InvalidInput(f"input length {x.shape[-1]} != in_dim {p.in_dim}")
    return x, single


def mlp_forward(p, x, return_cache=False):
    x, single = _as_batch(p, x)
    pre = []
    h = x
    last = len(p.weights) - 1
    for k, (w, b) in enumerate(zip(p.weights, p.biases)):
        a = h @ w.T + b
        if k < last:
            pre.append((h, a))
            h = silu(a)
        else:
            pre.append((h, None))
            h = a
    out = h[0] if single else h
    if return_cache:
        return out, pre
    return out


def mlp_backward(p, x, output_grad, cache=None):
    """Reverse-mode gradients of ``sum(output * output_grad)``.

    Returns
    -------
    grads : list of (dW, db) per layer
    input_grad : ndarray shaped like ``x``
    """
    xb, single = _as_batch(p, x)
    g = np.atleast_2d(np.asarray(output_grad, dtype=np.float64))
    if g.shape != (xb.shape[0], p.out_dim):
        raise InvalidInput(f"output_grad shape {g.shape} does not match the network output")
    if cache is None:
        _, cache = mlp_forward(p, xb, return_cache=True)
    grads = [None] * len(p.weights)
    for k in range(len(p.weights) - 1, -1, -1):
        h_in, a = cache[k]
        if a is not None:
            g = g * _silu_grad(a)
        grads[k] = (g.T @ h_in, g.sum(axis=0))
        g = g @ p.weights[k]
    return grads, (g[0] if single else g)


@dataclass
class AdamWState:
    m: list
    v: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0

    @classmethod
    def for_params(cls, p, **hyper):
        zeros = [np.zeros_like(a) for a in p.arrays()]
        return cls(m=zeros, v=[z.copy() for z in zeros], **hyper)


def adamw_step(p, grads, state):
    """One AdamW update, in place. Returns ``(p, state)``.

    Weight decay is decoupled: parameters shrink by ``lr * weight_decay``
    before the bias-corrected Adam step.
    """
    flat_grads = []
    for dw, db in grads:
        flat_grads.extend((dw, db))
    for g in flat_grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient contains NaN or Inf")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.step
    corr2 = 1.0 - b2 ** state.step
    for arr, g, m, v in zip(p.arrays(), flat_grads, state.m, state.v):
        if state.weight_decay:
            arr *= 1.0 - state.lr * state.weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arr -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return p, state


# ---------------------------------------------------------------------------
# serialization: manifest.txt (key=value) + weights.f64 (little-endian)
# ---------------------------------------------------------------------------

def save_params(p, directory, extra=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "in_dim": p.in_dim,
        "hidden_dims": ",".join(str(h) for h in p.hidden_dims),
        "out_dim": p.out_dim,
        "activation": "silu",
    }
    meta.update(extra or {})
    lines = [f"{k}={v}" for k, v in meta.items()]
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")
    flat = np.concatenate([a.ravel() for a in p.arrays()]).astype("<f8")
    (directory / "weights.f64").write_bytes(flat.tobytes())


def read_manifest(directory):
    meta = {}
    for line in (Path(directory) / "manifest.txt").read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidInput(f"malformed manifest line {line!r}")
        meta[key.strip()] = value.strip()
    return meta


def load_params(directory):
    directory = Path(directory)
    try:
        meta = read_manifest(directory)
        hidden = [int(h) for h in meta["hidden_dims"].split(",") if h]
        dims = [int(meta["in_dim"]), *hidden, int(meta["out_dim"])]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad model manifest: {exc}") from exc
    if meta.get("activation", "silu") != "silu":
        raise FormatError(f"unsupported activation {meta['activation']!r}")
    flat = np.frombuffer((directory / "weights.f64").read_bytes(), dtype="<f8")
    need = sum(o * i + o for i, o in zip(dims[:-1], dims[1:]))
    if flat.size != need:
        raise FormatError(f"weights.f64 holds {flat.size} values, expected {need}")
    weights, biases, pos = [], [], 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(flat[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in).astype(np.float64))
        pos += fan_in * fan_out
        biases.append(flat[pos:pos + fan_out].astype(np.float64))
        pos += fan_out
    return MlpParams(weights, biases), meta
