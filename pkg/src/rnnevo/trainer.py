"""Sequence evaluation, BPTT gradients and SGD training of a genome."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import backend
from .data import DataError, TimeSeriesSet, to_xy
from .genome import Genome
from .program import Program, compile_genome, write_params

FAILED_FITNESS = math.inf


@dataclass
class TrainConfig:
    epochs: int = 4
    learning_rate: float = 0.001
    momentum: float = 0.9
    clip_threshold: float = 1.0
    boost_threshold: float = 0.05
    forget_bias_boost: float = 1.0
    # "sequence": one step per training series per epoch; "batch": one step per epoch
    update: str = "sequence"
    target_offset: int = 1
    backend: str | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate < 0 or self.momentum < 0 or self.forget_bias_boost < 0:
            raise ValueError("learning_rate, momentum and forget_bias_boost must be >= 0")
        if not 0 < self.boost_threshold < self.clip_threshold:
            raise ValueError("need 0 < boost_threshold < clip_threshold")
        if self.update not in ("sequence", "batch"):
            raise ValueError(f"unknown update granularity {self.update!r}")
        if self.target_offset < 0:
            raise ValueError("target_offset must be >= 0")


@dataclass
class FitnessReport:
    train_mse: list[float]
    validation_mse: float
    best_epoch: int
    validation_per_epoch: list[float] = field(default_factory=list)


def _kernel(config: TrainConfig | None = None):
    return backend.get_backend(config.backend) if config and config.backend else backend.kernel


def _pairs(ts, genome: Genome, offset: int):
    if isinstance(ts, TimeSeriesSet):
        return to_xy(ts, genome.input_params, genome.output_params, offset)
    return list(ts)


def predict(genome: Genome, series: Mapping[str, Sequence[float]], kernel=None) -> np.ndarray:
    """Outputs for every timestep of ``series``, shape [T, n_outputs]."""
    for p in genome.input_params:
        if p not in series:
            raise DataError(f"input channel {p!r} missing from series")
    X = np.column_stack([np.asarray(series[p], dtype=np.float64) for p in genome.input_params])
    if X.shape[0] < 1:
        raise DataError("series is empty")
    prog = compile_genome(genome)
    return (kernel or backend.kernel).forward(prog, prog.params, X)


def mse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))


def compute_gradients(genome: Genome, X, Y, kernel=None) -> tuple[float, np.ndarray, Program]:
    """Loss and gradient over every active weight and node parameter.

    The gradient follows the layout of ``Program.params`` for the returned program.
    """
    prog = compile_genome(genome)
    loss, grad = (kernel or backend.kernel).loss_grad(prog, prog.params, X, Y)
    return loss, grad, prog


def clip_or_boost(grad: np.ndarray, config: TrainConfig) -> np.ndarray:
    """Rescale to ``clip_threshold`` above it, to ``boost_threshold`` below it."""
    norm = float(np.linalg.norm(grad))
    if norm > config.clip_threshold:
        return grad * (config.clip_threshold / norm)
    if 0.0 < norm < config.boost_threshold:
        return grad * (config.boost_threshold / norm)
    return grad


def nesterov_step(params: np.ndarray, velocity: np.ndarray, grad: np.ndarray,
                  lr: float, momentum: float) -> tuple[np.ndarray, np.ndarray]:
    v_prev = velocity
    velocity = momentum * velocity - lr * grad
    return params - momentum * v_prev + (1.0 + momentum) * velocity, velocity


def _evaluate(kernel, prog: Program, params: np.ndarray, pairs) -> float:
    sq, count = 0.0, 0
    for X, Y in pairs:
        out = kernel.forward(prog, params, X)
        sq += float(np.sum((out - Y) ** 2))
        count += Y.size
    return sq / count


def evaluate(genome: Genome, data, offset: int = 1, kernel=None) -> float:
    """Mean squared error pooled over every timestep and output of every series."""
    prog = compile_genome(genome)
    return _evaluate(kernel or backend.kernel, prog, prog.params, _pairs(data, genome, offset))


def sgd_train(genome: Genome, train, valid, config: TrainConfig | None = None,
              rng: np.random.Generator | None = None) -> tuple[Genome, FitnessReport]:
    """Train a copy of ``genome`` with BPTT and Nesterov SGD; fitness is validation MSE.

    ``train`` and ``valid`` are TimeSeriesSets or lists of (X, Y) arrays. A
    non-finite loss stops training and scores the genome FAILED_FITNESS.
    """
    config = config or TrainConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    kernel = _kernel(config)
    genome = genome.copy()
    train_pairs = _pairs(train, genome, config.target_offset)
    valid_pairs = _pairs(valid, genome, config.target_offset)
    if not train_pairs or not valid_pairs:
        raise DataError("training and validation sets must be non-empty")

    prog = compile_genome(genome)
    params = prog.params.copy()
    velocity = np.zeros_like(params)
    train_curve: list[float] = []
    valid_curve: list[float] = []
    failed = False

    def step(params, velocity, grad):
        grad = clip_or_boost(grad, config)
        return nesterov_step(params, velocity, grad, config.learning_rate, config.momentum)

    for _ in range(config.epochs):
        order = rng.permutation(len(train_pairs))
        losses = []
        if config.update == "sequence":
            for i in order:
                X, Y = train_pairs[i]
                loss, grad = kernel.loss_grad(prog, params, X, Y)
                if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                    failed = True
                    break
                losses.append(loss)
                params, velocity = step(params, velocity, grad)
        else:
            total = np.zeros_like(params)
            for i in order:
                X, Y = train_pairs[i]
                loss, grad = kernel.loss_grad(prog, params, X, Y)
                if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                    failed = True
                    break
                losses.append(loss)
                total += grad
            if not failed:
                params, velocity = step(params, velocity, total / len(order))
        if failed:
            break
        train_curve.append(float(np.mean(losses)))
        valid_curve.append(_evaluate(kernel, prog, params, valid_pairs))

    if failed or not np.all(np.isfinite(params)):
        fitness = FAILED_FITNESS
    else:
        write_params(genome, prog, params)
        fitness = valid_curve[-1] if valid_curve else _evaluate(kernel, prog, params, valid_pairs)
        if not math.isfinite(fitness):
            fitness = FAILED_FITNESS
    genome.fitness = fitness
    best_epoch = int(np.argmin(valid_curve)) if valid_curve and not failed else -1
    return genome, FitnessReport(train_curve, fitness, best_epoch, valid_curve)
