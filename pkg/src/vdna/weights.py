"""Learning per-neuron weights that cancel one attribute's distance signal.

An attribute pair holds the fingerprints of images with and without a
labelled attribute. Because the weighted distance is linear in the weights,
the per-neuron distances of each pair are constants of the optimization and
are cached up front; training reduces to minimizing a piecewise-linear
function of the weight vector.

The sensitivity deviation of a pair under weights w is

    delta = 1 - weighted_distance(w) / average_distance

so delta is 0 at uniform initialization, 1 when the weighted distance has
been driven to zero, and negative when the weights amplify the pair. The
training loss asks for delta = 1 on the target attribute while all other
attributes keep delta = 0:

    loss = |1 - delta_target| + mean_b |delta_b|

minimized with Adam on the analytic subgradient (0 exactly at the |.|
kinks), weights projected onto >= 0 after each step unless negative weights
are explicitly allowed, early-stopped on a validation pair set, returning
the weights at the best validation loss seen (never worse than the
initialization).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import envelope
from .container import Vdna
from .errors import FormatError
from .metrics import WeightVector, neuron_distances

WEIGHTS_MAGIC = b"VDNAWGT1"


@dataclass
class AttributePair:
    """Cached per-neuron distances between with/without fingerprints."""

    name: str
    distances: np.ndarray
    baseline: float
    dna_with: Vdna | None = None
    dna_without: Vdna | None = None

    @classmethod
    def from_vdnas(cls, name: str, dna_with: Vdna, dna_without: Vdna) -> "AttributePair":
        distances = neuron_distances(dna_with, dna_without)
        baseline = float(distances.mean())
        if baseline <= 0.0:
            raise ValueError(
                f"attribute pair {name!r} has zero average distance; "
                "its deviation is undefined and the pair must be excluded"
            )
        return cls(name, distances, baseline, dna_with, dna_without)

    @classmethod
    def from_distances(cls, name: str, distances: np.ndarray) -> "AttributePair":
        distances = np.asarray(distances, dtype=np.float64)
        baseline = float(distances.mean())
        if baseline <= 0.0:
            raise ValueError(f"attribute pair {name!r} has zero average distance")
        return cls(name, distances, baseline)


def sensitivity_deviation(pair: AttributePair, w: WeightVector) -> float:
    """Relative drop of the weighted distance against the uniform average."""
    if len(w) != len(pair.distances):
        raise ValueError(
            f"weight vector has {len(w)} entries for {len(pair.distances)} neurons"
        )
    return 1.0 - float(np.dot(w.values, pair.distances)) / pair.baseline


def loss(target: AttributePair, others: Sequence[AttributePair], w: WeightVector) -> float:
    """|1 - delta_target| + mean over other attributes of |delta|."""
    if not others:
        raise ValueError("need at least one other attribute to preserve")
    d_target = sensitivity_deviation(target, w)
    total = abs(1.0 - d_target)
    total += sum(abs(sensitivity_deviation(p, w)) for p in others) / len(others)
    return total


def loss_gradient(
    target: AttributePair, others: Sequence[AttributePair], w: WeightVector
) -> np.ndarray:
    """Analytic subgradient of the loss; 0 contribution exactly at kinks."""
    if not others:
        raise ValueError("need at least one other attribute to preserve")
    # d(delta)/dw_n = -distances_n / baseline, so
    # d|1 - delta_t|/dw = sign(1 - delta_t) * distances_t / baseline_t
    # d|delta_b|/dw = -sign(delta_b) * distances_b / baseline_b
    grad = np.sign(1.0 - sensitivity_deviation(target, w)) * target.distances / target.baseline
    for p in others:
        grad -= np.sign(sensitivity_deviation(p, w)) * p.distances / (p.baseline * len(others))
    return grad


@dataclass
class OptimizerConfig:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    patience: int = 50
    max_iters: int = 5000
    nonneg_projection: bool = True

    def validate(self) -> None:
        for name in ("learning_rate", "beta1", "beta2", "epsilon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (self.beta1 < 1 and self.beta2 < 1):
            raise ValueError("decay rates must be < 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class TrainingTrace:
    """Per-iteration losses and the configuration that produced them."""

    config: OptimizerConfig
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_iteration: int = 0
    stopped_early: bool = False


def optimize(
    target: AttributePair,
    others_train: Sequence[AttributePair],
    others_val: Sequence[AttributePair],
    config: OptimizerConfig | None = None,
    target_val: AttributePair | None = None,
) -> tuple[WeightVector, TrainingTrace]:
    """Adam on the piecewise-linear loss, returning the best-validation weights.

    Weights start at the uniform constant 1/n. One iteration is one
    optimizer step over the full pair set. Training stops after `patience`
    iterations without validation improvement or at `max_iters`.
    """
    config = config or OptimizerConfig()
    config.validate()
    if target_val is None:
        target_val = target
    n = len(target.distances)
    w = np.full(n, 1.0 / n)
    m = np.zeros(n)
    v = np.zeros(n)
    trace = TrainingTrace(config=config)

    def val_loss_of(weights: np.ndarray) -> float:
        wv = WeightVector(weights, constrained_nonnegative=False)
        return loss(target_val, others_val, wv)

    best = val_loss_of(w)
    best_w = w.copy()
    best_iter = 0
    for t in range(1, config.max_iters + 1):
        wv = WeightVector(w, constrained_nonnegative=False)
        train = loss(target, others_train, wv)
        if not np.isfinite(train):
            raise ValueError(f"non-finite training loss at iteration {t}")
        g = loss_gradient(target, others_train, wv)
        m = config.beta1 * m + (1.0 - config.beta1) * g
        v = config.beta2 * v + (1.0 - config.beta2) * g * g
        m_hat = m / (1.0 - config.beta1**t)
        v_hat = v / (1.0 - config.beta2**t)
        w = w - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        if config.nonneg_projection:
            np.clip(w, 0.0, None, out=w)
        val = val_loss_of(w)
        trace.train_loss.append(train)
        trace.val_loss.append(val)
        if val < best:
            best = val
            best_w = w.copy()
            best_iter = t
        elif t - best_iter >= config.patience:
            trace.stopped_early = True
            break
    trace.best_iteration = best_iter
    return WeightVector(best_w, constrained_nonnegative=config.nonneg_projection), trace


def select_sensitive_neurons(distances: np.ndarray, k: int) -> np.ndarray:
    """Flat indices of the k neurons with the largest distances, descending.

    Ties resolve to the lower flat index, i.e. earlier layer then lower
    neuron index.
    """
    distances = np.asarray(distances, dtype=np.float64)
    if not 1 <= k <= len(distances):
        raise ValueError(f"k must be in [1, {len(distances)}], got {k}")
    order = np.argsort(-distances, kind="stable")
    return order[:k]


# -- persistence --------------------------------------------------------------
#
# Magic ``VDNAWGT1``: envelope header (extractor_id, neuron_count, free-form
# provenance) then neuron_count float64 weights in flat neuron order.


def save_weights(
    w: WeightVector, path: str | Path, extractor_id: str = "", provenance: dict | None = None
) -> None:
    meta = {
        "extractor_id": extractor_id,
        "neuron_count": len(w),
        "constrained_nonnegative": w.constrained_nonnegative,
        "provenance": provenance or {},
    }
    with open(path, "wb") as fh:
        envelope.write_header(fh, WEIGHTS_MAGIC, meta)
        fh.write(np.ascontiguousarray(w.values, dtype="<f8").tobytes())


def load_weights(path: str | Path) -> tuple[WeightVector, dict]:
    with open(path, "rb") as fh:
        meta = envelope.read_header(fh, WEIGHTS_MAGIC)
        n = meta.get("neuron_count")
        if not isinstance(n, int) or n < 1:
            raise FormatError("metadata field 'neuron_count' must be a positive integer")
        raw = envelope.read_exact(fh, n * 8, "weights")
        values = np.frombuffer(raw, dtype="<f8").copy()
    w = WeightVector(values, constrained_nonnegative=bool(meta.get("constrained_nonnegative", False)))
    return w, meta
