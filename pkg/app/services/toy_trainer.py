"""Two-layer ReLU classifier trained with orthogonalized momentum updates.

Each 2-D weight keeps a momentum buffer M; the step applies

    W -= lr · UPDATE_RMS · √(m·n) · O / ‖O‖_F,   O = orthogonalize(M)

so every pipeline moves the weights by the same RMS per entry and only the
direction differs. Biases take plain momentum SGD steps. Gradients are written
out by hand.

With `decompose_every` set, every N-th step also splits the polar error of each
orthogonalized buffer into bias and approximation against the SVD oracle.
"""
import logging
import math
from typing import Dict, List, Optional

import numpy as np

from app.core.config import settings
from app.core.errors import DivergenceError
from app.models.schemas import ArrayModel, CoefficientSchedule, MomentumErrorStat, TrainerConfig, TrainReport
from app.services.linalg_core import polar_factor_exact
from app.services.metrics import aol_polar_reference, decompose, descent_alignment
from app.services.newton_schulz import PRECONDITIONERS, orthogonalize
from app.services.sampling import matrix_rng
from app.services.schedules import fit_schedule, schedule_for, schedule_from_ref

logger = logging.getLogger(__name__)

TRAIN_FRACTION = 0.8


class Dataset(ArrayModel):
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    classes: int


def generate_dataset(seed: int, classes: int, dim: int, samples: int,
                     separation: float = 3.0) -> Dataset:
    """Gaussian mixture with unit-variance clusters centred on separation·e_k.

    Labels are balanced and shuffled; the first 80% form the training split.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    if dim < classes:
        raise ValueError(f"dim ({dim}) must be at least the number of classes ({classes})")
    rng = matrix_rng(seed, 0)
    means = np.zeros((classes, dim))
    means[np.arange(classes), np.arange(classes)] = separation
    labels = rng.permutation(np.arange(samples) % classes)
    x = means[labels] + rng.standard_normal((samples, dim))
    cut = int(round(TRAIN_FRACTION * samples))
    return Dataset(x_train=x[:cut], y_train=labels[:cut], x_val=x[cut:], y_val=labels[cut:],
                   classes=classes)


def _softmax_xent(logits: np.ndarray, labels: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -float(np.mean(log_probs[np.arange(labels.size), labels]))
    return loss, np.exp(log_probs)


class ToyTrainer:
    def __init__(self, config: TrainerConfig):
        self.config = config
        self.iterations = config.iterations
        self.schedule: CoefficientSchedule = (
            fit_schedule(schedule_from_ref(config.schedule), self.iterations) if config.schedule
            else schedule_for(config.pipeline, self.iterations)
        )
        d_in, hidden, classes = config.layer_dims
        self.data = generate_dataset(config.seed, classes, d_in, config.samples, config.separation)
        rng = matrix_rng(config.seed, 1)
        self.params: Dict[str, np.ndarray] = {
            "w1": rng.standard_normal((hidden, d_in)) * math.sqrt(2.0 / d_in),
            "b1": np.zeros(hidden),
            "w2": rng.standard_normal((classes, hidden)) * math.sqrt(1.0 / hidden),
            "b2": np.zeros(classes),
        }
        self.buffers = {name: np.zeros_like(p) for name, p in self.params.items()}
        self._batch_rng = matrix_rng(config.seed, 2)
        self.steps_taken = 0
        self.momentum_errors: List[MomentumErrorStat] = []

    def forward(self, x: np.ndarray):
        p = self.params
        z1 = x @ p["w1"].T + p["b1"]
        h = np.maximum(z1, 0.0)
        return z1, h, h @ p["w2"].T + p["b2"]

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        z1, h, logits = self.forward(x)
        loss, probs = _softmax_xent(logits, y)
        d_logits = probs
        d_logits[np.arange(y.size), y] -= 1.0
        d_logits /= y.size
        d_h = d_logits @ self.params["w2"]
        d_z1 = d_h * (z1 > 0)
        grads = {
            "w1": d_z1.T @ x,
            "b1": d_z1.sum(axis=0),
            "w2": d_logits.T @ h,
            "b2": d_logits.sum(axis=0),
        }
        return loss, grads

    def evaluate(self, x: np.ndarray, y: np.ndarray):
        _, _, logits = self.forward(x)
        loss, _ = _softmax_xent(logits, y)
        return loss, float(np.mean(np.argmax(logits, axis=1) == y))

    def _batch(self):
        size = self.config.batch_size
        x, y = self.data.x_train, self.data.y_train
        if size is None or size >= y.size:
            return x, y
        idx = self._batch_rng.choice(y.size, size=size, replace=False)
        return x[idx], y[idx]

    def step(self) -> float:
        """Apply one update; returns the smallest ⟨M, O⟩ over the weight matrices"""
        cfg = self.config
        _, grads = self.loss_and_grads(*self._batch())
        self.steps_taken += 1
        due = cfg.decompose_every and self.steps_taken % cfg.decompose_every == 0
        alignment = math.inf
        for name, grad in grads.items():
            buf = self.buffers[name]
            buf *= cfg.momentum
            buf += grad
            if buf.ndim == 1:
                self.params[name] -= cfg.learning_rate * buf
                continue
            report = orthogonalize(buf, cfg.pipeline, self.schedule, self.iterations,
                                   precision=cfg.precision, track_errors=False)
            ortho = report.result.astype(np.float64)
            alignment = min(alignment, descent_alignment(buf, ortho))
            if due:
                self._record_errors(name, buf, ortho)
            m, n = ortho.shape
            scale = cfg.learning_rate * settings.UPDATE_RMS * math.sqrt(m * n) / np.linalg.norm(ortho)
            self.params[name] -= scale * ortho
        return alignment

    def _record_errors(self, name: str, buf: np.ndarray, ortho: np.ndarray) -> None:
        q = polar_factor_exact(buf).q
        reference = aol_polar_reference(buf) if PRECONDITIONERS[self.config.pipeline] == "aol" else q
        breakdown = decompose(buf, ortho, reference, reference_q=q)
        logger.debug(f"step {self.steps_taken} {name}: bias {breakdown.bias_error:.3e}, "
                     f"approx {breakdown.approx_error:.3e}")
        self.momentum_errors.append(MomentumErrorStat(
            step=self.steps_taken, layer=name, polar_error=breakdown.polar_error,
            bias_error=breakdown.bias_error, approx_error=breakdown.approx_error,
        ))

    def train(self) -> TrainReport:
        cfg = self.config
        logger.info(f"Training {cfg.layer_dims} with {cfg.pipeline}@{self.iterations} "
                    f"({self.schedule.name}), lr={cfg.learning_rate}, seed={cfg.seed}")
        x_train, y_train = self.data.x_train, self.data.y_train
        initial, _ = self.evaluate(x_train, y_train)
        loss_curve: List[float] = []
        alignments: List[float] = []
        above = 0
        for step in range(1, cfg.steps + 1):
            loss, _ = self.evaluate(x_train, y_train)
            loss_curve.append(loss)
            above = above + 1 if loss > settings.TRAIN_DIVERGENCE_FACTOR * initial else 0
            if above >= settings.TRAIN_DIVERGENCE_PATIENCE or not math.isfinite(loss):
                logger.error(f"Training diverged at step {step}: loss {loss} vs initial {initial}")
                raise DivergenceError(f"training diverged at step {step} (loss {loss:.4g})", step=step)
            alignments.append(self.step())
            if cfg.log_every and step % cfg.log_every == 0:
                logger.info(f"step {step}/{cfg.steps}: loss {loss:.4f}")

        final_loss, train_acc = self.evaluate(x_train, y_train)
        _, val_acc = self.evaluate(self.data.x_val, self.data.y_val)
        logger.info(f"Finished: loss {initial:.4f} -> {final_loss:.4f}, val accuracy {val_acc:.3f}")
        return TrainReport(
            pipeline=cfg.pipeline,
            iterations=self.iterations,
            seed=cfg.seed,
            loss_curve=loss_curve,
            final_loss=final_loss,
            final_accuracy=val_acc,
            train_accuracy=train_acc,
            per_step_alignment=alignments,
            momentum_errors=self.momentum_errors,
        )


def train(config: Optional[TrainerConfig] = None) -> TrainReport:
    return ToyTrainer(config or TrainerConfig()).train()
