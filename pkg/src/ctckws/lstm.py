"""Deep unidirectional peephole LSTM with a softmax output layer.

Gate layout inside the stacked pre-activation vector is ``[i, f, g, o]``:
input gate, forget gate, cell candidate, output gate. Input and forget
gates peek at the previous cell state, the output gate at the current one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .features import FEATURE_DIM


@dataclass
class NetworkConfig:
    input_dim: int = FEATURE_DIM
    layer_sizes: list[int] = field(default_factory=lambda: [32, 32, 32])
    output_dim: int = 30
    unroll_length: int = 128
    update_period: int = 64
    learning_rate: float = 0.5
    momentum: float = 0.9
    clip_norm: float = 1.0
    init_scale: float = 0.1
    forget_bias: float = 1.0
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if not self.layer_sizes or min(self.layer_sizes) < 1:
            raise ValueError("need at least one LSTM layer with a positive size")
        if not 1 <= self.update_period <= self.unroll_length:
            raise ValueError("update_period must be in [1, unroll_length]")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


def layer_param_names(k: int) -> list[str]:
    return [f"lstm{k}.{n}" for n in ("W", "R", "b", "p_i", "p_f", "p_o")]


def param_shapes(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    shapes = {}
    fan_in = config.input_dim
    for k, H in enumerate(config.layer_sizes):
        W, R, b, pi, pf, po = layer_param_names(k)
        shapes[W] = (4 * H, fan_in)
        shapes[R] = (4 * H, H)
        shapes[b] = (4 * H,)
        shapes[pi] = shapes[pf] = shapes[po] = (H,)
        fan_in = H
    shapes["softmax.W"] = (config.output_dim, fan_in)
    shapes["softmax.b"] = (config.output_dim,)
    return shapes


def init_params(config: NetworkConfig) -> dict[str, np.ndarray]:
    """Uniform(-scale, scale) weights; forget-gate biases start at ``forget_bias``."""
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in param_shapes(config).items():
        params[name] = rng.uniform(-config.init_scale, config.init_scale, shape).astype(config.dtype)
    for k, H in enumerate(config.layer_sizes):
        b = params[f"lstm{k}.b"]
        b[:] = 0.0
        b[H:2 * H] = config.forget_bias
    params["softmax.b"][:] = 0.0
    return params


def zeros_like_params(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class StreamState:
    h: list[np.ndarray]
    c: list[np.ndarray]

    @classmethod
    def zeros(cls, config: NetworkConfig) -> "StreamState":
        return cls([np.zeros(n, dtype=config.dtype) for n in config.layer_sizes],
                   [np.zeros(n, dtype=config.dtype) for n in config.layer_sizes])

    def copy(self) -> "StreamState":
        return StreamState([h.copy() for h in self.h], [c.copy() for c in self.c])


def lstm_step(W, R, b, p_i, p_f, p_o, x, h_prev, c_prev):
    """One peephole LSTM step; returns ``(h, c)``."""
    H = len(h_prev)
    a = W @ x + R @ h_prev + b
    i = sigmoid(a[:H] + p_i * c_prev)
    f = sigmoid(a[H:2 * H] + p_f * c_prev)
    g = np.tanh(a[2 * H:3 * H])
    c = f * c_prev + i * g
    o = sigmoid(a[3 * H:] + p_o * c)
    return o * np.tanh(c), c


def _layer(params, k):
    return [params[n] for n in layer_param_names(k)]


def forward_frame(params, config: NetworkConfig, frame, state: StreamState):
    """Advance the stream by one frame; returns ``(posterior, new_state)``."""
    x = np.asarray(frame, dtype=config.dtype)
    if x.shape != (config.input_dim,):
        raise ValueError(f"frame must have dimension {config.input_dim}")
    hs, cs = [], []
    for k in range(len(config.layer_sizes)):
        h, c = lstm_step(*_layer(params, k), x, state.h[k], state.c[k])
        hs.append(h)
        cs.append(c)
        x = h
    z = params["softmax.W"] @ x + params["softmax.b"]
    return softmax(z), StreamState(hs, cs)


def forward_frames(params, config: NetworkConfig, frames, state: StreamState):
    """Frame-by-frame inference over a chunk.

    Every frame takes the same code path as :func:`forward_frame`, so results
    do not depend on how a stream is split into chunks.
    """
    frames = np.asarray(frames)
    out = np.zeros((len(frames), config.output_dim), dtype=config.dtype)
    for t, frame in enumerate(frames):
        out[t], state = forward_frame(params, config, frame, state)
    return out, state


# Batched training path ------------------------------------------------------


def _layer_forward(W, R, b, p_i, p_f, p_o, X, h0, c0):
    T = len(X)
    H = len(h0)
    A = X @ W.T + b
    gates = np.empty((T, 4 * H), dtype=A.dtype)  # post-nonlinearity i, f, g, o
    Hs = np.empty((T, H), dtype=A.dtype)
    Cs = np.empty((T, H), dtype=A.dtype)
    h, c = h0, c0
    for t in range(T):
        a = A[t] + R @ h
        i = sigmoid(a[:H] + p_i * c)
        f = sigmoid(a[H:2 * H] + p_f * c)
        g = np.tanh(a[2 * H:3 * H])
        c = f * c + i * g
        o = sigmoid(a[3 * H:] + p_o * c)
        h = o * np.tanh(c)
        gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:] = i, f, g, o
        Hs[t] = h
        Cs[t] = c
    return Hs, Cs, gates


def forward_sequence(params, config: NetworkConfig, X, state: StreamState):
    """Batched forward over a sequence, keeping activations for backprop.

    Returns ``(logits, cache, final_state)``.
    """
    X = np.asarray(X, dtype=config.dtype)
    layers = []
    inp = X
    hs, cs = [], []
    for k in range(len(config.layer_sizes)):
        Hs, Cs, gates = _layer_forward(*_layer(params, k), inp, state.h[k], state.c[k])
        layers.append({"X": inp, "H": Hs, "C": Cs, "gates": gates,
                       "h0": state.h[k], "c0": state.c[k]})
        hs.append(Hs[-1].copy())
        cs.append(Cs[-1].copy())
        inp = Hs
    logits = inp @ params["softmax.W"].T + params["softmax.b"]
    return logits, {"layers": layers, "top": inp}, StreamState(hs, cs)


def concat_caches(first, second):
    """Join caches of two consecutive chunks into one window cache."""
    layers = []
    for a, b in zip(first["layers"], second["layers"]):
        layers.append({"X": np.concatenate([a["X"], b["X"]]),
                       "H": np.concatenate([a["H"], b["H"]]),
                       "C": np.concatenate([a["C"], b["C"]]),
                       "gates": np.concatenate([a["gates"], b["gates"]]),
                       "h0": a["h0"], "c0": a["c0"]})
    return {"layers": layers, "top": np.concatenate([first["top"], second["top"]])}


def slice_cache(cache, start):
    """Drop the first ``start`` frames; the new initial state is frame ``start - 1``."""
    layers = []
    for a in cache["layers"]:
        layers.append({"X": a["X"][start:], "H": a["H"][start:], "C": a["C"][start:],
                       "gates": a["gates"][start:],
                       "h0": a["H"][start - 1] if start else a["h0"],
                       "c0": a["C"][start - 1] if start else a["c0"]})
    return {"layers": layers, "top": cache["top"][start:]}


def _layer_backward(params_k, cache, dH, grads_k):
    W, R, b, p_i, p_f, p_o = params_k
    X, Hs, Cs, gates = cache["X"], cache["H"], cache["C"], cache["gates"]
    T, H = Hs.shape
    H_prev = np.vstack([cache["h0"][None], Hs[:-1]])
    C_prev = np.vstack([cache["c0"][None], Cs[:-1]])
    dA = np.empty((T, 4 * H), dtype=np.float64)
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    dp_i = np.zeros(H)
    dp_f = np.zeros(H)
    dp_o = np.zeros(H)
    R64 = R.astype(np.float64)
    for t in range(T - 1, -1, -1):
        i, f, g, o = gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:]
        c = Cs[t]
        c_prev = C_prev[t]
        tc = np.tanh(c)
        dh = dH[t] + dh_next
        da_o = dh * tc * o * (1.0 - o)
        dc = dc_next + dh * o * (1.0 - tc * tc) + da_o * p_o
        da_i = dc * g * i * (1.0 - i)
        da_f = dc * c_prev * f * (1.0 - f)
        da_g = dc * i * (1.0 - g * g)
        dc_next = dc * f + da_i * p_i + da_f * p_f
        dp_i += da_i * c_prev
        dp_f += da_f * c_prev
        dp_o += da_o * c
        dA[t, :H], dA[t, H:2 * H], dA[t, 2 * H:3 * H], dA[t, 3 * H:] = da_i, da_f, da_g, da_o
        dh_next = R64.T @ dA[t]
    grads_k[0] += dA.T @ X
    grads_k[1] += dA.T @ H_prev
    grads_k[2] += dA.sum(axis=0)
    grads_k[3] += dp_i
    grads_k[4] += dp_f
    grads_k[5] += dp_o
    return dA @ W.astype(np.float64)


def backward_sequence(params, config: NetworkConfig, cache, dlogits):
    """Gradients of a loss w.r.t. all parameters given d loss / d logits.

    Accumulates in float64 regardless of the parameter dtype. The initial
    state of the cached window is treated as a constant (truncation point).
    """
    dlogits = np.asarray(dlogits, dtype=np.float64)
    grads = {k: np.zeros(v.shape, dtype=np.float64) for k, v in params.items()}
    top = cache["top"]
    grads["softmax.W"] += dlogits.T @ top
    grads["softmax.b"] += dlogits.sum(axis=0)
    dH = dlogits @ params["softmax.W"].astype(np.float64)
    for k in range(len(config.layer_sizes) - 1, -1, -1):
        names = layer_param_names(k)
        gk = [grads[n] for n in names]
        dH = _layer_backward(_layer(params, k), cache["layers"][k], dH, gk)
    return grads


def count_params(config: NetworkConfig) -> int:
    return int(sum(np.prod(s) for s in param_shapes(config).values()))
