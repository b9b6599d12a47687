"""A small deterministic sequence-model engine in float64 numpy.

The architecture is a stack of valid-padding 1-D convolutions with ReLU,
one LSTM layer returning its full hidden sequence, a flatten, and a dense
head with ReLU (targets are positive mg/dL values). Gradients are
hand-derived reverse mode; the optimizer is bias-corrected Adam.

All parameters live in one flat float64 vector; :class:`ModelParams` exposes
reshaped views into it, so optimizer updates on the vector are visible to
the layer views. The flat layout (also the checkpoint order) is:

    conv0.w, conv0.b, conv1.w, conv1.b, ..., lstm.wx, lstm.wh, lstm.b,
    dense0.w, dense0.b, ...

LSTM gate blocks inside the 4H axis are stored as [input, forget, output,
candidate] so the three sigmoid gates are contiguous.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import Thresholds
from .errors import NumericError, ShapeError
from .losses import LossWeights, PlainMae, RegionWeightedMae


@dataclass(frozen=True)
class ArchConfig:
    """Shape of the conv/LSTM/dense stack.

    ``conv_layers`` is a tuple of (filters, kernel) pairs. ``dense_hidden``
    of 0 means the head is a single dense layer from the flattened LSTM
    sequence straight to ``output_len``.
    """

    conv_layers: tuple[tuple[int, int], ...] = ((32, 4), (16, 4), (8, 4))
    lstm_units: int = 8
    dense_hidden: int = 0
    input_len: int = 72
    input_features: int = 6
    output_len: int = 12

    def __post_init__(self):
        object.__setattr__(self, "conv_layers", tuple(tuple(fk) for fk in self.conv_layers))
        for filters, kernel in self.conv_layers:
            if filters < 1 or kernel < 1:
                raise ValueError(f"conv layers need filters >= 1 and kernel >= 1, got {self.conv_layers}")
        if self.lstm_units < 1 or self.output_len < 1 or self.input_len < 1 or self.input_features < 1:
            raise ValueError("all dimensions must be >= 1")
        if self.dense_hidden < 0:
            raise ValueError(f"dense_hidden must be >= 0, got {self.dense_hidden}")
        if self.conv_out_len < 1:
            raise ValueError(
                f"conv stack consumes the whole sequence: input_len {self.input_len} "
                f"leaves {self.conv_out_len} steps"
            )

    @property
    def conv_out_len(self) -> int:
        return self.input_len - sum(k - 1 for _, k in self.conv_layers)

    @property
    def flat_dim(self) -> int:
        return self.conv_out_len * self.lstm_units

    @property
    def dense_dims(self) -> tuple[tuple[int, int], ...]:
        if self.dense_hidden > 0:
            return ((self.flat_dim, self.dense_hidden), (self.dense_hidden, self.output_len))
        return ((self.flat_dim, self.output_len),)

    def to_dict(self) -> dict:
        return {
            "conv_layers": [list(fk) for fk in self.conv_layers],
            "lstm_units": self.lstm_units,
            "dense_hidden": self.dense_hidden,
            "input_len": self.input_len,
            "input_features": self.input_features,
            "output_len": self.output_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(
            conv_layers=tuple(tuple(fk) for fk in d["conv_layers"]),
            lstm_units=int(d["lstm_units"]),
            dense_hidden=int(d["dense_hidden"]),
            input_len=int(d["input_len"]),
            input_features=int(d["input_features"]),
            output_len=int(d["output_len"]),
        )


def _param_layout(arch: ArchConfig) -> list[tuple[str, tuple[int, ...]]]:
    """(name, shape) pairs in flat-vector order."""
    layout = []
    c_in = arch.input_features
    for i, (filters, kernel) in enumerate(arch.conv_layers):
        layout.append((f"conv{i}.w", (kernel, c_in, filters)))
        layout.append((f"conv{i}.b", (filters,)))
        c_in = filters
    h = arch.lstm_units
    layout.append(("lstm.wx", (c_in, 4 * h)))
    layout.append(("lstm.wh", (h, 4 * h)))
    layout.append(("lstm.b", (4 * h,)))
    for i, (d_in, d_out) in enumerate(arch.dense_dims):
        layout.append((f"dense{i}.w", (d_in, d_out)))
        layout.append((f"dense{i}.b", (d_out,)))
    return layout


def param_count(arch: ArchConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in _param_layout(arch))


class ModelParams:
    """All learnable tensors, viewed into one flat float64 vector."""

    def __init__(self, arch: ArchConfig, vector: np.ndarray | None = None):
        n = param_count(arch)
        if vector is None:
            vector = np.zeros(n, dtype=np.float64)
        else:
            vector = np.ascontiguousarray(vector, dtype=np.float64)
            if vector.shape != (n,):
                raise ShapeError(f"parameter vector has {vector.size} values, arch needs {n}")
        self.arch = arch
        self.vector = vector
        views: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in _param_layout(arch):
            size = int(np.prod(shape))
            views[name] = vector[offset : offset + size].reshape(shape)
            offset += size
        self.conv = [
            (views[f"conv{i}.w"], views[f"conv{i}.b"]) for i in range(len(arch.conv_layers))
        ]
        self.lstm_wx = views["lstm.wx"]
        self.lstm_wh = views["lstm.wh"]
        self.lstm_b = views["lstm.b"]
        self.dense = [
            (views[f"dense{i}.w"], views[f"dense{i}.b"]) for i in range(len(arch.dense_dims))
        ]

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.vector.copy())


def init_params(arch: ArchConfig, rng: np.random.Generator, head_bias: float = 0.0) -> ModelParams:
    """Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights, zero biases.

    The final dense bias is set to ``head_bias`` (the mean training glucose)
    so the ReLU head starts in its active region.
    """
    params = ModelParams(arch)
    for w, _ in params.conv:
        fan_in = w.shape[0] * w.shape[1]
        w[...] = rng.uniform(-1.0, 1.0, size=w.shape) / np.sqrt(fan_in)
    params.lstm_wx[...] = rng.uniform(-1.0, 1.0, size=params.lstm_wx.shape) / np.sqrt(
        params.lstm_wx.shape[0]
    )
    params.lstm_wh[...] = rng.uniform(-1.0, 1.0, size=params.lstm_wh.shape) / np.sqrt(
        params.lstm_wh.shape[0]
    )
    for w, _ in params.dense:
        w[...] = rng.uniform(-1.0, 1.0, size=w.shape) / np.sqrt(w.shape[0])
    params.dense[-1][1][...] = head_bias
    return params


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form: stable for large |x| and a single transcendental call
    return 0.5 * np.tanh(0.5 * x) + 0.5


def _im2col(x: np.ndarray, kernel: int) -> np.ndarray:
    """(B, T, C) -> contiguous (B * T_out, K * C) patch matrix."""
    win = sliding_window_view(x, kernel, axis=1)  # (B, T_out, C, K)
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(-1, kernel * x.shape[2])


def _conv1d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Valid-padding stride-1 convolution: (B, T, C) x (K, C, F) -> (B, T-K+1, F).

    Also returns the patch matrix so the backward pass can reuse it.
    """
    kernel = w.shape[0]
    if x.shape[1] < kernel:
        raise ShapeError(f"sequence length {x.shape[1]} shorter than kernel {kernel}")
    if x.shape[2] != w.shape[1]:
        raise ShapeError(f"input has {x.shape[2]} channels, kernel expects {w.shape[1]}")
    t_out = x.shape[1] - kernel + 1
    mat = _im2col(x, kernel)
    out = mat @ w.reshape(kernel * x.shape[2], w.shape[2])
    return out.reshape(x.shape[0], t_out, w.shape[2]) + b, mat


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Single-sample convolution: (T, C) x (K, C, F) -> (T-K+1, F). No activation."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a (T, C) matrix, got shape {x.shape}")
    out, _ = _conv1d(x[None], np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
    return out[0]


def _conv1d_backward(mat, x_shape, w, dout):
    """Gradients of :func:`_conv1d` given the cached patch matrix: (dx, dw, db)."""
    kernel, c_in, filters = w.shape
    dout_mat = dout.reshape(-1, filters)
    dw = (mat.T @ dout_mat).reshape(w.shape)
    db = dout_mat.sum(axis=0)
    # one gemm for every patch gradient, then scatter-add the K overlaps
    dpatch = (dout_mat @ w.reshape(kernel * c_in, filters).T).reshape(
        x_shape[0], -1, kernel, c_in
    )
    dx = np.zeros(x_shape)
    t_out = dout.shape[1]
    for k in range(kernel):
        dx[:, k : k + t_out, :] += dpatch[:, :, k, :]
    return dx, dw, db


def lstm_forward(
    seq: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray
) -> np.ndarray:
    """Full hidden-state sequence of a standard LSTM with zero initial state.

    ``seq`` is (T, F) or (B, T, F); the result matches with H units in the
    last axis. Gate blocks in ``wx``/``wh``/``b`` columns are
    [input, forget, output, candidate].
    """
    seq = np.asarray(seq, dtype=np.float64)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    h = wh.shape[0]
    if seq.shape[2] != wx.shape[0] or wx.shape[1] != 4 * h or b.shape != (4 * h,):
        raise ShapeError(
            f"inconsistent LSTM shapes: seq {seq.shape}, wx {wx.shape}, wh {wh.shape}, b {b.shape}"
        )
    hs, _ = _lstm_forward(seq, wx, wh, b)
    return hs[0] if single else hs


def _lstm_forward(seq, wx, wh, b):
    # internal caches are time-major (T, B, .) so the per-step slices are
    # contiguous; the public result stays batch-major
    batch, steps, feat = seq.shape
    h_units = wh.shape[0]
    seq_t = np.ascontiguousarray(seq.transpose(1, 0, 2))
    x_pre = (seq_t.reshape(steps * batch, feat) @ wx).reshape(steps, batch, 4 * h_units)
    x_pre += b

    gates = np.empty((steps, batch, 4 * h_units))  # sigmoided i,f,o then tanh'd g
    cs = np.empty((steps, batch, h_units))
    tanh_cs = np.empty((steps, batch, h_units))
    hs = np.empty((steps, batch, h_units))
    h = np.zeros((batch, h_units))
    c = np.zeros((batch, h_units))
    a = np.empty((batch, 4 * h_units))
    s3 = 3 * h_units
    for t in range(steps):
        np.dot(h, wh, out=a)
        a += x_pre[t]
        gt = gates[t]
        # sigmoid(x) = 0.5 * tanh(0.5 x) + 0.5 for the i, f, o gates
        np.multiply(a[:, :s3], 0.5, out=gt[:, :s3])
        np.tanh(gt[:, :s3], out=gt[:, :s3])
        gt[:, :s3] *= 0.5
        gt[:, :s3] += 0.5
        np.tanh(a[:, s3:], out=gt[:, s3:])
        np.multiply(gt[:, h_units : 2 * h_units], c, out=c)  # forget old state
        c += gt[:, :h_units] * gt[:, s3:]  # admit candidate
        cs[t] = c
        np.tanh(c, out=tanh_cs[t])
        np.multiply(gt[:, 2 * h_units : s3], tanh_cs[t], out=hs[t])
        h = hs[t]
    out = np.ascontiguousarray(hs.transpose(1, 0, 2))
    return out, {"seq_t": seq_t, "gates": gates, "cs": cs, "tanh_cs": tanh_cs, "hs": hs}


def _lstm_backward(wx, wh, cache, dh_seq):
    seq_t, gates = cache["seq_t"], cache["gates"]
    cs, tanh_cs, hs = cache["cs"], cache["tanh_cs"], cache["hs"]
    steps, batch, h_units = hs.shape
    s3 = 3 * h_units

    dh_seq_t = np.ascontiguousarray(dh_seq.transpose(1, 0, 2))
    da_all = np.empty((steps, batch, 4 * h_units))
    dh = np.empty((batch, h_units))
    dc = np.zeros((batch, h_units))
    zeros_c = np.zeros((batch, h_units))
    wh_t = np.ascontiguousarray(wh.T)
    dh_next = zeros_c
    for t in range(steps - 1, -1, -1):
        gt = gates[t]
        i_g = gt[:, :h_units]
        f_g = gt[:, h_units : 2 * h_units]
        o_g = gt[:, 2 * h_units : s3]
        g = gt[:, s3:]
        c_prev = cs[t - 1] if t > 0 else zeros_c
        tc = tanh_cs[t]

        np.add(dh_seq_t[t], dh_next, out=dh)
        # entering step t, dc holds dc(t+1) * f(t+1): the carry through the cell path
        dc += dh * o_g * (1.0 - tc * tc)
        da = da_all[t]
        np.multiply(dc * g, i_g * (1.0 - i_g), out=da[:, :h_units])
        np.multiply(dc * c_prev, f_g * (1.0 - f_g), out=da[:, h_units : 2 * h_units])
        np.multiply(dh * tc, o_g * (1.0 - o_g), out=da[:, 2 * h_units : s3])
        np.multiply(dc * i_g, 1.0 - g * g, out=da[:, s3:])
        dh_next = da @ wh_t
        dc *= f_g  # becomes the carry for step t-1

    da_mat = da_all.reshape(steps * batch, 4 * h_units)
    dwx = seq_t.reshape(steps * batch, -1).T @ da_mat
    h_prev = np.concatenate([np.zeros((1, batch, h_units)), hs[:-1]], axis=0)
    dwh = h_prev.reshape(steps * batch, h_units).T @ da_mat
    db = da_mat.sum(axis=0)
    dseq_t = (da_mat @ wx.T).reshape(steps, batch, -1)
    dseq = np.ascontiguousarray(dseq_t.transpose(1, 0, 2))
    return dseq, dwx, dwh, db


def forward(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, dict]:
    """Run the full stack on a batch (B, input_len, input_features).

    Returns (predictions (B, output_len), cache). The cache carries every
    intermediate needed by :func:`backward` plus the ReLU pre-activations
    (``conv_pre``, ``dense_pre``) used by kink-aware gradient checks.
    """
    arch = params.arch
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != arch.input_len or x.shape[2] != arch.input_features:
        raise ShapeError(
            f"expected input (batch, {arch.input_len}, {arch.input_features}), got {x.shape}"
        )
    cache: dict = {"conv_shape": [], "conv_mat": [], "conv_pre": [], "dense_in": [], "dense_pre": []}
    a = x
    for w, b in params.conv:
        cache["conv_shape"].append(a.shape)
        pre, mat = _conv1d(a, w, b)
        cache["conv_mat"].append(mat)
        cache["conv_pre"].append(pre)
        a = np.maximum(pre, 0.0)
    hs, lstm_cache = _lstm_forward(a, params.lstm_wx, params.lstm_wh, params.lstm_b)
    cache["lstm"] = lstm_cache
    a = hs.reshape(hs.shape[0], -1)
    for w, b in params.dense:
        cache["dense_in"].append(a)
        pre = a @ w + b
        cache["dense_pre"].append(pre)
        a = np.maximum(pre, 0.0)
    return a, cache


def backward(params: ModelParams, cache: dict, dpred: np.ndarray) -> np.ndarray:
    """Reverse-mode gradient of the scalar loss w.r.t. every parameter.

    ``dpred`` is d(loss)/d(predictions). Returns a flat gradient vector in
    the same layout as ``params.vector``.
    """
    arch = params.arch
    grads = ModelParams(arch)  # zero-filled views reused as gradient storage

    d = np.asarray(dpred, dtype=np.float64)
    for i in range(len(params.dense) - 1, -1, -1):
        w, _ = params.dense[i]
        dz = d * (cache["dense_pre"][i] > 0.0)
        grads.dense[i][0][...] = cache["dense_in"][i].T @ dz
        grads.dense[i][1][...] = dz.sum(axis=0)
        d = dz @ w.T

    batch = d.shape[0]
    dh_seq = d.reshape(batch, arch.conv_out_len, arch.lstm_units)
    dseq, dwx, dwh, db = _lstm_backward(params.lstm_wx, params.lstm_wh, cache["lstm"], dh_seq)
    grads.lstm_wx[...] = dwx
    grads.lstm_wh[...] = dwh
    grads.lstm_b[...] = db

    d = dseq
    for i in range(len(params.conv) - 1, -1, -1):
        w, _ = params.conv[i]
        dz = d * (cache["conv_pre"][i] > 0.0)
        d, dw, db_c = _conv1d_backward(cache["conv_mat"][i], cache["conv_shape"][i], w, dz)
        grads.conv[i][0][...] = dw
        grads.conv[i][1][...] = db_c
    return grads.vector


def model_forward(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Predictions for one sample (input_len, features) or a batch of them."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return forward(params, x[None])[0][0]
    return forward(params, x)[0]


def model_backward(
    params: ModelParams, x: np.ndarray, y: np.ndarray, loss
) -> tuple[np.ndarray, float]:
    """Loss value and its flat parameter gradient for a batch."""
    pred, cache = forward(params, np.asarray(x, dtype=np.float64))
    value = loss.value(pred, y)
    grad = backward(params, cache, loss.grad(pred, y))
    return grad, value


def predict_batched(params: ModelParams, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Forward over a large window set in chunks."""
    outs = [forward(params, x[s : s + batch_size])[0] for s in range(0, x.shape[0], batch_size)]
    return np.concatenate(outs, axis=0) if outs else np.empty((0, params.arch.output_len))


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators for bias-corrected Adam."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(
    state: AdamState,
    params_vec: np.ndarray,
    grad: np.ndarray,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place bias-corrected adaptive-moment update."""
    state.step += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grad
    state.v *= beta2
    state.v += (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1**state.step)
    v_hat = state.v / (1.0 - beta2**state.step)
    params_vec -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    """Knobs of one training run. ``loss_mode`` picks the weighted or plain loss."""

    batch_size: int = 48
    epochs: int = 30
    learning_rate: float = 1e-3
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    thresholds: Thresholds = field(default_factory=Thresholds)
    loss_mode: str = "weighted"

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.learning_rate <= 0.0:
            raise ValueError("need batch_size >= 1, epochs >= 1, learning_rate > 0")
        if self.loss_mode not in ("weighted", "plain"):
            raise ValueError(f"loss_mode must be 'weighted' or 'plain', got {self.loss_mode!r}")

    def make_loss(self):
        if self.loss_mode == "plain":
            return PlainMae()
        return RegionWeightedMae(self.loss_weights, self.thresholds)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochStats]
    best_epoch: int
    n_steps: int = 0


def train(
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    arch: ArchConfig,
    cfg: TrainConfig,
    on_epoch: Callable[[EpochStats], None] | None = None,
) -> TrainResult:
    """Seeded mini-batch training; returns the epoch-best parameters.

    Windows are shuffled once per epoch with the run's generator and the
    last short batch is kept. The returned parameters are the ones with the
    lowest validation loss over all epochs (ties go to the earlier epoch);
    the history records per-epoch train/val loss. A non-finite loss or
    gradient aborts with :class:`NumericError` carrying the epoch index.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.float64)
    val_x = np.asarray(val_x, dtype=np.float64)
    val_y = np.asarray(val_y, dtype=np.float64)
    if len(train_x) == 0 or len(val_x) == 0:
        raise ValueError("training and validation sets must be non-empty")

    rng = np.random.default_rng(cfg.seed)
    loss = cfg.make_loss()
    params = init_params(arch, rng, head_bias=float(np.mean(train_y)))
    state = AdamState.zeros(params.vector.size)

    history: list[EpochStats] = []
    best_params = params.copy()
    best_val = np.inf
    best_epoch = -1
    n_steps = 0
    n = train_x.shape[0]
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            grad, value = model_backward(params, train_x[idx], train_y[idx], loss)
            if not np.isfinite(value) or not np.all(np.isfinite(grad)):
                raise NumericError(epoch)
            adam_step(state, params.vector, grad, cfg.learning_rate)
            batch_losses.append(value)
            n_steps += 1
        train_loss = float(np.mean(batch_losses))

        val_pred = predict_batched(params, val_x, batch_size=max(cfg.batch_size, 256))
        val_loss = loss.value(val_pred, val_y)
        if not np.isfinite(val_loss):
            raise NumericError(epoch, "non-finite validation loss")

        stats = EpochStats(epoch, train_loss, val_loss)
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            best_epoch = epoch
    return TrainResult(best_params, history, best_epoch, n_steps)
