"""Single-layer Conv-LSTM regressor written directly in numpy.

Each gate sees the current feature vector through a 1-D same-padded
convolution along the feature axis (``filters`` output channels, odd
kernel width), flattened and projected into the hidden width, plus a
dense recurrent term and a bias::

    a_g = P_g . vec(K_g * x_t) + U_g . h_{t-1} + b_g
    i, f, o = sigmoid(a_i), sigmoid(a_f), sigmoid(a_o)
    g = tanh(a_g)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

The scalar forecast is an affine readout of the last hidden state.
Gradients are computed by hand (backprop through time) in float64.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .timeseries import (
    DataError,
    NormParams,
    OhlcvSeries,
    WindowedDataset,
    make_windows,
    zscore_apply,
)

log = logging.getLogger(__name__)

GATES = ("input", "forget", "output", "candidate")
I, F, O, G = range(4)
PARAM_NAMES = ("kernel", "proj", "recur", "bias", "w_out", "b_out")
CHECKPOINT_FORMAT = "hybridcast-convlstm"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


def sigmoid(x):
    # split form avoids overflow in exp for large |x|
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class ConvLstmParams:
    """Gate weights stacked along a leading gate axis (input, forget, output, candidate).

    kernel: (4, filters, k)       conv kernels over the feature axis
    proj:   (4, hidden, filters*F) conv map -> hidden projection
    recur:  (4, hidden, hidden)   recurrent weights
    bias:   (4, hidden)
    w_out:  (hidden,), b_out: () readout
    """

    kernel: np.ndarray
    proj: np.ndarray
    recur: np.ndarray
    bias: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        self.b_out = np.asarray(self.b_out, dtype=np.float64).reshape(())
        if self.kernel.ndim != 3 or self.kernel.shape[0] != 4:
            raise ValueError(f"kernel must have shape (4, filters, k), got {self.kernel.shape}")
        if self.kernel.shape[2] % 2 != 1:
            raise ValueError(f"kernel width must be odd, got {self.kernel.shape[2]}")
        h = self.hidden
        q = self.proj.shape[2]
        if self.proj.shape != (4, h, q) or q % self.filters:
            raise ValueError(f"proj shape {self.proj.shape} inconsistent with filters={self.filters}")
        if self.recur.shape != (4, h, h) or self.bias.shape != (4, h) or self.w_out.shape != (h,):
            raise ValueError("recur/bias/w_out shapes inconsistent with hidden width")
        for name in PARAM_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")

    @property
    def hidden(self) -> int:
        return self.proj.shape[1]

    @property
    def filters(self) -> int:
        return self.kernel.shape[1]

    @property
    def kernel_width(self) -> int:
        return self.kernel.shape[2]

    @property
    def n_features(self) -> int:
        return self.proj.shape[2] // self.filters

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ConvLstmParams":
        return ConvLstmParams(**{k: v.copy() for k, v in self.arrays().items()})

    @classmethod
    def zeros(cls, n_features: int, hidden: int = 16, filters: int = 8,
              kernel_width: int = 3) -> "ConvLstmParams":
        q = filters * n_features
        return cls(
            kernel=np.zeros((4, filters, kernel_width)),
            proj=np.zeros((4, hidden, q)),
            recur=np.zeros((4, hidden, hidden)),
            bias=np.zeros((4, hidden)),
            w_out=np.zeros(hidden),
            b_out=np.zeros(()),
        )

    @classmethod
    def init(cls, n_features: int, hidden: int = 16, filters: int = 8, kernel_width: int = 3,
             rng: np.random.Generator | int | None = 0, forget_bias: float = 1.0) -> "ConvLstmParams":
        """Uniform(+-1/sqrt(fan_in)) weights, forget-gate bias ``forget_bias``."""
        rng = np.random.default_rng(rng)
        q = filters * n_features

        def u(shape, fan_in):
            bound = 1.0 / math.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        bias = u((4, hidden), hidden)
        bias[F] = forget_bias
        return cls(
            kernel=u((4, filters, kernel_width), kernel_width),
            proj=u((4, hidden, q), q),
            recur=u((4, hidden, hidden), hidden),
            bias=bias,
            w_out=u(hidden, hidden),
            b_out=np.zeros(()),
        )


@dataclass(frozen=True)
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int) -> "CellState":
        return cls(np.zeros(hidden), np.zeros(hidden))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    loss: str = "huber"
    huber_delta: float = 1.0
    seed: int = 0
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be >= 1")
        if self.loss not in ("huber", "mse"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if not self.huber_delta > 0:
            raise ValueError("huber delta must be positive")


# --- convolution over the feature axis -------------------------------------

def _patches(x: np.ndarray, k: int) -> np.ndarray:
    """(..., F) -> (..., F, k) zero-padded neighbourhoods (same padding)."""
    pad = k // 2
    width = [(0, 0)] * (x.ndim - 1) + [(pad, pad)]
    return np.lib.stride_tricks.sliding_window_view(np.pad(x, width), k, axis=-1)


def conv_features(x: np.ndarray, kernel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cross-correlate ``x`` (..., F) with every gate kernel.

    Returns the flattened maps (..., 4, filters*F) and the patches used.
    """
    patches = _patches(x, kernel.shape[2])
    maps = np.einsum("...jm,gcm->...gcj", patches, kernel)
    return maps.reshape(maps.shape[:-2] + (-1,)), patches


def _activate(pre: np.ndarray) -> np.ndarray:
    """Gate nonlinearities on (..., 4, H) pre-activations."""
    out = sigmoid(pre)
    out[..., G, :] = np.tanh(pre[..., G, :])
    return out


def cell_forward(x_t, prev: CellState, params: ConvLstmParams) -> CellState:
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (params.n_features,):
        raise ValueError(f"expected {params.n_features} features, got shape {x_t.shape}")
    if prev.h.shape != (params.hidden,) or prev.c.shape != (params.hidden,):
        raise ValueError("state width does not match the hidden width")
    if not np.all(np.isfinite(x_t)):
        raise ValueError("non-finite input")
    z, _ = conv_features(x_t, params.kernel)
    pre = np.einsum("ghq,gq->gh", params.proj, z) + params.recur @ prev.h + params.bias
    gates = _activate(pre)
    c = gates[F] * prev.c + gates[I] * gates[G]
    h = gates[O] * np.tanh(c)
    return CellState(h, c)


# --- batched forward / backward --------------------------------------------

def _forward_batch(x: np.ndarray, params: ConvLstmParams, keep: bool = False, skip: int | None = None):
    """x: (B, L, F). Returns predictions (B,) and, if ``keep``, the tape.

    With ``skip`` set the cell sees the window relative to its last row and
    the last value of column ``skip`` is added to the readout, so the
    network predicts a change and never depends on the price level.
    """
    base = None
    if skip is not None:
        base = x[:, -1, skip]
        x = x - x[:, -1:, :]
    b, length, _ = x.shape
    z, patches = conv_features(x, params.kernel)               # (B, L, 4, Q)
    ax = np.einsum("btgq,ghq->btgh", z, params.proj) + params.bias
    h = np.zeros((b, params.hidden))
    c = np.zeros((b, params.hidden))
    if keep:
        hs, cs, acts = [h], [c], []
    for t in range(length):
        pre = ax[:, t] + np.einsum("ghk,bk->bgh", params.recur, h)
        gates = _activate(pre)
        c = gates[:, F] * c + gates[:, I] * gates[:, G]
        h = gates[:, O] * np.tanh(c)
        if keep:
            hs.append(h)
            cs.append(c)
            acts.append(gates)
    pred = h @ params.w_out + params.b_out
    if base is not None:
        pred = pred + base
    if not keep:
        return pred, None
    return pred, (z, patches, hs, cs, acts)


def _backward_batch(dpred: np.ndarray, params: ConvLstmParams, tape) -> dict[str, np.ndarray]:
    z, patches, hs, cs, acts = tape
    length = len(acts)
    grads = {
        "w_out": hs[-1].T @ dpred,
        "b_out": np.asarray(dpred.sum()),
        "recur": np.zeros_like(params.recur),
        "bias": np.zeros_like(params.bias),
    }
    dh = np.outer(dpred, params.w_out)
    dc = np.zeros_like(dh)
    dpre_all = np.empty((length,) + acts[0].shape)            # (L, B, 4, H)
    for t in range(length - 1, -1, -1):
        gates = acts[t]
        i, f, o, g = gates[:, I], gates[:, F], gates[:, O], gates[:, G]
        tc = np.tanh(cs[t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        dpre = dpre_all[t]
        dpre[:, I] = dc * g * i * (1.0 - i)
        dpre[:, F] = dc * cs[t] * f * (1.0 - f)
        dpre[:, O] = dh * tc * o * (1.0 - o)
        dpre[:, G] = dc * i * (1.0 - g * g)
        grads["recur"] += np.einsum("bgh,bk->ghk", dpre, hs[t])
        dh = np.einsum("bgh,ghk->bk", dpre, params.recur)
        dc = dc * f
    grads["bias"] = dpre_all.sum(axis=(0, 1))
    grads["proj"] = np.einsum("tbgh,btgq->ghq", dpre_all, z)
    dz = np.einsum("tbgh,ghq->btgq", dpre_all, params.proj)
    filters = params.filters
    dz = dz.reshape(dz.shape[:-1] + (filters, -1))               # (B, L, 4, C, F)
    grads["kernel"] = np.einsum("btgcj,btjm->gcm", dz, patches)
    return grads


def forward(window, params: ConvLstmParams, length: int | None = None, skip: int | None = None) -> float:
    """Run the cell from a zero state over an (L, F) window and read out a scalar."""
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.n_features:
        raise ValueError(f"window must have shape (L, {params.n_features}), got {x.shape}")
    if length is not None and x.shape[0] != length:
        raise ValueError(f"window length {x.shape[0]} != model length {length}")
    pred, _ = _forward_batch(x[None], params, skip=skip)
    return float(pred[0])


def predict_batch(inputs: np.ndarray, params: ConvLstmParams, skip: int | None = None) -> np.ndarray:
    return _forward_batch(np.asarray(inputs, dtype=np.float64), params, skip=skip)[0]


# --- losses ----------------------------------------------------------------

def _residuals(y, y_pred) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y.size} vs {y_pred.size}")
    if y.size == 0:
        raise ValueError("empty input")
    return y - y_pred


def loss_mse(y, y_pred) -> float:
    e = _residuals(y, y_pred)
    return float(np.mean(e * e))


def loss_huber(y, y_pred, delta: float = 1.0) -> float:
    if not delta > 0:
        raise ValueError("huber delta must be positive")
    e = np.abs(_residuals(y, y_pred))
    per = np.where(e <= delta, 0.5 * e * e, delta * (e - 0.5 * delta))
    return float(np.mean(per))


def _loss_and_grad(y: np.ndarray, pred: np.ndarray, kind: str, delta: float):
    """Loss and d(loss)/d(pred); at |e| == delta the quadratic branch is used."""
    e = y - pred
    n = e.size
    if kind == "mse":
        return float(np.mean(e * e)), -2.0 * e / n
    inside = np.abs(e) <= delta
    loss = np.where(inside, 0.5 * e * e, delta * (np.abs(e) - 0.5 * delta))
    dl_de = np.where(inside, e, delta * np.sign(e))
    return float(np.mean(loss)), -dl_de / n


def loss_and_gradients(params: ConvLstmParams, inputs, targets, kind: str = "huber",
                       delta: float = 1.0, skip: int | None = None) -> tuple[float, dict[str, np.ndarray]]:
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).ravel()
    pred, tape = _forward_batch(x, params, keep=True, skip=skip)
    loss, dpred = _loss_and_grad(y, pred, kind, delta)
    return loss, _backward_batch(dpred, params, tape)


# --- model, training -------------------------------------------------------

@dataclass
class ConvLstmModel:
    """Trained parameters plus everything needed to forecast from raw bars."""

    params: ConvLstmParams
    norm: NormParams
    feature_columns: tuple[str, ...]
    target_column: str
    window_length: int
    config: TrainConfig = field(default_factory=TrainConfig)
    residual: bool = False
    adam_m: dict[str, np.ndarray] | None = None
    adam_v: dict[str, np.ndarray] | None = None
    adam_step: int = 0

    @property
    def target_index(self) -> int:
        return self.feature_columns.index(self.target_column)

    @property
    def skip(self) -> int | None:
        return self.target_index if self.residual else None


class Adam:
    def __init__(self, params: ConvLstmParams, config: TrainConfig, m=None, v=None, step=0):
        self.config = config
        self.m = m if m is not None else {k: np.zeros_like(a) for k, a in params.arrays().items()}
        self.v = v if v is not None else {k: np.zeros_like(a) for k, a in params.arrays().items()}
        self.step = step

    def update(self, params: ConvLstmParams, grads: dict[str, np.ndarray]):
        cfg = self.config
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        scale = cfg.clip_norm / norm if cfg.clip_norm and norm > cfg.clip_norm else 1.0
        self.step += 1
        bc1 = 1.0 - cfg.beta1 ** self.step
        bc2 = 1.0 - cfg.beta2 ** self.step
        for name, g in grads.items():
            g = g * scale
            m = self.m[name] = cfg.beta1 * self.m[name] + (1.0 - cfg.beta1) * g
            v = self.v[name] = cfg.beta2 * self.v[name] + (1.0 - cfg.beta2) * g * g
            step = cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
            setattr(params, name, getattr(params, name) - step)


def train(dataset: WindowedDataset, config: TrainConfig = TrainConfig(), *,
          norm: NormParams, feature_columns: Sequence[str], target_column: str = "close",
          hidden: int = 16, filters: int = 8, kernel_width: int = 3, residual: bool = False,
          params: ConvLstmParams | None = None,
          on_epoch: Callable[[int, float], None] | None = None) -> tuple[ConvLstmModel, list[float]]:
    """Fit with Adam on minibatches; returns the model and per-epoch mean loss.

    The seed drives both initialization and minibatch shuffling.  With
    ``residual`` the readout is added to the last observed target value.
    """
    if len(dataset) == 0:
        raise DataError("empty dataset")
    n_features = dataset.inputs.shape[2]
    if len(feature_columns) != n_features:
        raise ValueError("feature_columns does not match the dataset width")
    skip = list(feature_columns).index(target_column) if residual else None
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = ConvLstmParams.init(n_features, hidden, filters, kernel_width, rng=rng)
    else:
        params = params.copy()
    opt = Adam(params, config)
    history = []
    n = len(dataset)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            loss, grads = loss_and_gradients(params, dataset.inputs[idx], dataset.targets[idx],
                                             config.loss, config.huber_delta, skip)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            total += loss * len(idx)
            if config.learning_rate > 0:
                opt.update(params, grads)
        epoch_loss = total / n
        history.append(epoch_loss)
        log.debug("epoch %d loss %.6g", epoch, epoch_loss)
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss)
    model = ConvLstmModel(params, norm, tuple(feature_columns), target_column,
                          dataset.window_length, config, residual, opt.m, opt.v, opt.step)
    return model, history


# --- gradient check --------------------------------------------------------

def grad_check(params: ConvLstmParams, window, target: float, loss: str = "huber",
               delta: float = 1.0, step: float = 1e-5, skip: int | None = None) -> float:
    """Max relative error between BPTT gradients and central differences.

    Every parameter element is perturbed by +-``step``; the error for one
    element is ``|g_a - g_n| / max(|g_a|, |g_n|, 1e-8)``.
    """
    x = np.asarray(window, dtype=np.float64)[None]
    y = np.array([target], dtype=np.float64)
    _, analytic = loss_and_gradients(params, x, y, loss, delta, skip)

    def objective(p):
        pred, _ = _forward_batch(x, p, skip=skip)
        return _loss_and_grad(y, pred, loss, delta)[0]

    probe = params.copy()
    worst = 0.0
    for name in PARAM_NAMES:
        arr = getattr(probe, name)
        flat = arr.reshape(-1)
        ga = analytic[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = objective(probe)
            flat[j] = orig - step
            down = objective(probe)
            flat[j] = orig
            gn = (up - down) / (2.0 * step)
            err = abs(ga[j] - gn) / max(abs(ga[j]), abs(gn), 1e-8)
            worst = max(worst, err)
    return worst


# --- forecasting -----------------------------------------------------------

@dataclass(frozen=True)
class PredictionSeries:
    """Denormalized forecasts keyed by target date.

    ``issue_dates`` holds the last input date of each window, i.e. the day
    the forecast could have been made.
    """

    dates: np.ndarray
    issue_dates: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.dates)

    def to_csv(self) -> str:
        lines = ["date,issue_date,prediction"]
        lines += [f"{d},{s},{v:.6f}" for d, s, v in zip(self.dates, self.issue_dates, self.values)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "PredictionSeries":
        rows = [line.split(",") for line in text.strip().splitlines()[1:] if line.strip()]
        return cls(
            np.array([r[0] for r in rows], dtype="datetime64[D]"),
            np.array([r[1] for r in rows], dtype="datetime64[D]"),
            np.array([float(r[2]) for r in rows]),
        )


def predict_series(model: ConvLstmModel, series: OhlcvSeries, length: int | None = None) -> PredictionSeries:
    """One forecast per stride-1, horizon-1 window position, in price units."""
    length = model.window_length if length is None else length
    if length != model.window_length:
        raise ValueError(f"model was trained with window length {model.window_length}, got {length}")
    x = zscore_apply(series.features(model.feature_columns), model.norm)
    ds = make_windows(x, length, horizon=1, stride=1, target_col=model.target_index,
                      dates=series.dates)
    pred = predict_batch(ds.inputs, model.params, model.skip)
    j = model.target_index
    values = pred * model.norm.sigma[j] + model.norm.mu[j]
    return PredictionSeries(ds.target_dates, ds.issue_dates, values)


# --- checkpoints -----------------------------------------------------------

def save_model(model: ConvLstmModel, path_or_file) -> None:
    """Write a versioned ``.npz`` checkpoint; arrays are stored losslessly."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "feature_columns": list(model.feature_columns),
        "target_column": model.target_column,
        "window_length": model.window_length,
        "residual": model.residual,
        "config": model.config.__dict__,
        "adam_step": model.adam_step,
    }
    arrays = {f"param_{k}": v for k, v in model.params.arrays().items()}
    arrays["norm_mu"] = model.norm.mu
    arrays["norm_sigma"] = model.norm.sigma
    for prefix, state in (("adam_m", model.adam_m), ("adam_v", model.adam_v)):
        if state is not None:
            arrays.update({f"{prefix}_{k}": v for k, v in state.items()})
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path_or_file, **arrays)


def load_model(path_or_file) -> ConvLstmModel:
    with np.load(path_or_file) as z:
        meta = json.loads(z["meta"].tobytes().decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a hybridcast Conv-LSTM checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        params = ConvLstmParams(**{k: z[f"param_{k}"] for k in PARAM_NAMES})
        norm = NormParams(z["norm_mu"], z["norm_sigma"])
        m = {k: z[f"adam_m_{k}"] for k in PARAM_NAMES} if "adam_m_kernel" in z.files else None
        v = {k: z[f"adam_v_{k}"] for k in PARAM_NAMES} if "adam_v_kernel" in z.files else None
    return ConvLstmModel(params, norm, tuple(meta["feature_columns"]), meta["target_column"],
                         meta["window_length"], TrainConfig(**meta["config"]), meta["residual"],
                         m, v, meta["adam_step"])


def model_bytes(model: ConvLstmModel) -> bytes:
    buf = io.BytesIO()
    save_model(model, buf)
    return buf.getvalue()
