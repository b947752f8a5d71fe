"""Adaptive step search for the window length.

The search walks L in steps of ``step``; a probe that improves the score by
more than ``eta`` is accepted and the walk continues, a probe that loses more
than ``eta`` turns the walk around, and a plateau (change below ``eta``)
shrinks the step by ``alpha``.  The walk ends once the step drops below
``min_step``.  Scores are "higher is better".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .convlstm import ConvLstmParams, TrainConfig, loss_huber, predict_batch, train
from .timeseries import make_windows, zscore_apply, zscore_fit

ACTIONS = ("start", "increase", "decrease", "shrink-step", "stop")


class EvaluationError(RuntimeError):
    def __init__(self, length: int, cause: BaseException):
        super().__init__(f"evaluator failed at L={length}: {cause}")
        self.length = length


@dataclass(frozen=True)
class SearchConfig:
    initial_length: int = 8
    initial_step: float = 8
    eta: float = 1e-3
    alpha: float = 0.5
    min_step: float = 1
    min_length: int = 2
    max_length: int = 64
    max_iterations: int = 100

    def __post_init__(self):
        if self.min_length < 2 or self.max_length < self.min_length:
            raise ValueError("need 2 <= min_length <= max_length")
        if not self.min_length <= self.initial_length <= self.max_length:
            raise ValueError(f"initial length {self.initial_length} outside "
                             f"[{self.min_length}, {self.max_length}]")
        if self.initial_step < 1:
            raise ValueError("initial step must be >= 1")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.min_step < 1:
            raise ValueError("min_step must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    length: int        # L_t after this iteration's action
    performance: float
    step: float        # step size after this iteration's action
    action: str
    probe: int | None = None
    clamped: bool = False


@dataclass
class SearchTrace:
    entries: list[TraceEntry] = field(default_factory=list)
    evaluations: dict[int, float] = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["iter,L,perf,step,action"]
        for e in self.entries:
            lines.append(f"{e.iteration},{e.length},{e.performance:.10g},{e.step:g},{e.action}")
        return "\n".join(lines) + "\n"

    @property
    def n_evaluations(self) -> int:
        return len(self.evaluations)


def _move(step: float) -> int:
    # flooring makes the last phase before a stop move by exactly one
    return max(1, math.floor(step))


def search_optimal_length(evaluate: Callable[[int], float],
                          config: SearchConfig = SearchConfig()) -> tuple[int, SearchTrace]:
    """Return the best-scoring length seen and the full search trace.

    ``evaluate`` is called at most once per distinct length.
    """
    trace = SearchTrace()

    def score(length: int) -> float:
        if length not in trace.evaluations:
            try:
                value = float(evaluate(length))
            except Exception as exc:
                raise EvaluationError(length, exc) from exc
            if math.isnan(value):
                raise EvaluationError(length, ValueError("evaluator returned NaN"))
            trace.evaluations[length] = value
        return trace.evaluations[length]

    lo, hi = config.min_length, config.max_length
    length, step, direction = config.initial_length, float(config.initial_step), 1
    perf = score(length)
    trace.entries.append(TraceEntry(0, length, perf, step, "start"))
    seen = {(length, step, direction)}

    for it in range(1, config.max_iterations + 1):
        raw = length + direction * _move(step)
        probe = min(hi, max(lo, raw))
        clamped = probe != raw
        delta = score(probe) - perf
        blocked = probe == length   # pinned at a bound: nothing to gain this way

        if delta > config.eta:
            length, perf = probe, perf + delta
            action = "increase" if direction > 0 else "decrease"
        elif (delta < -config.eta or blocked) and (length, step, -direction) not in seen:
            direction = -direction
            action = "decrease" if direction < 0 else "increase"
        else:
            # plateau, or both directions already failed at this step
            step *= config.alpha
            action = "shrink-step"
        if action == "shrink-step" and step < config.min_step:
            trace.entries.append(TraceEntry(it, length, perf, step, "stop", probe, clamped))
            break
        trace.entries.append(TraceEntry(it, length, perf, step, action, probe, clamped))
        seen.add((length, step, direction))

    best = max(trace.evaluations.items(), key=lambda kv: (kv[1], -abs(kv[0] - config.initial_length)))
    return best[0], trace


def validation_evaluator(features: np.ndarray, target_col: int = 0, *, train_fraction: float = 0.8,
                         config: TrainConfig = TrainConfig(epochs=20), hidden: int = 8,
                         filters: int = 4, kernel_width: int = 3,
                         columns: Sequence[str] | None = None) -> Callable[[int], float]:
    """Score L by negative validation Huber loss after a short training run.

    Normalization is fit on the training rows only; the seed is fixed per L
    so repeated calls give identical scores.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n_train = int(len(x) * train_fraction)
    norm = zscore_fit(x[:n_train])
    xn = zscore_apply(x, norm)
    names = tuple(columns) if columns is not None else tuple(f"f{j}" for j in range(x.shape[1]))

    def evaluate(length: int) -> float:
        ds = make_windows(xn, length, target_col=target_col)
        fit_mask = ds.target_index < n_train
        if not fit_mask.any() or fit_mask.all():
            raise ValueError(f"L={length} leaves no training or validation windows")
        cfg = TrainConfig(**{**config.__dict__, "seed": config.seed + length})
        model, _ = train(ds.subset(fit_mask), cfg, norm=norm, feature_columns=names,
                         target_column=names[target_col], hidden=hidden, filters=filters,
                         kernel_width=kernel_width)
        val = ds.subset(~fit_mask)
        return -loss_huber(val.targets, predict_batch(val.inputs, model.params), cfg.huber_delta)

    return evaluate
