"""Mini-batch SGD with Nesterov momentum and per-update learning-rate decay.

The update at step t uses the effective rate eta_t = lr0 / (1 + decay * t):

    v <- mu * v - eta_t * g
    theta <- theta + mu * v - eta_t * g

so with mu = 0 and decay = 0 it reduces to plain SGD.  The optimization
loop is strictly serial in t; per-epoch shuffling is driven by sub-seeds
derived from the training seed, which makes runs reproducible and lets a
resumed run continue the exact same trajectory.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from histocase.casegen import CaseSet
from histocase.errors import ConfigError, NonFiniteGradient
from histocase.model.checkpoint import load_checkpoint, save_checkpoint
from histocase.model.network import Parameters, assemble_batch, loss_and_grad
from histocase.seeds import make_rng


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    lr0: float = 0.001
    decay: float = 1e-6
    momentum: float = 0.9
    epochs: int = 100
    seed: int = 0
    shuffle: bool = True
    checkpoint_every: int | None = None
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if self.decay < 0:
            raise ConfigError(f"decay must be >= 0, got {self.decay}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0,1), got {self.momentum}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class OptimizerState:
    velocity: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Parameters) -> "OptimizerState":
        return cls(velocity={k: np.zeros_like(v) for k, v in params.weights.items()})


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    train_case_accuracy: float
    seconds: float


@dataclass
class TrainingHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    config: TrainConfig | None = None

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "mean_loss", "train_case_accuracy", "seconds"])
            for e in self.epochs:
                writer.writerow(
                    [e.epoch, f"{e.mean_loss:.10g}", f"{e.train_case_accuracy:.10g}",
                     f"{e.seconds:.4f}"]
                )


def learning_rate(config: TrainConfig, t: int) -> float:
    return config.lr0 / (1.0 + config.decay * t)


def sgd_step(
    params: Parameters,
    state: OptimizerState,
    gradients: dict[str, np.ndarray],
    config: TrainConfig,
) -> tuple[Parameters, OptimizerState]:
    """One Nesterov update; returns fresh parameter and state snapshots."""
    eta = learning_rate(config, state.t)
    mu = config.momentum
    new_weights = {}
    new_velocity = {}
    for key, theta in params.weights.items():
        g = gradients[key]
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient in {key!r} at step {state.t}")
        v = mu * state.velocity[key] - eta * g
        new_velocity[key] = v
        new_weights[key] = theta + mu * v - eta * g
    new_params = Parameters(
        config=params.config, weights=new_weights, running=dict(params.running))
    return new_params, OptimizerState(velocity=new_velocity, t=state.t + 1)


def _epoch_order(n: int, config: TrainConfig, epoch: int) -> np.ndarray:
    if not config.shuffle:
        return np.arange(n)
    rng = make_rng(config.seed, "shuffle", epoch)
    return rng.permutation(n)


def train(
    params: Parameters,
    case_set: CaseSet,
    image_store,
    config: TrainConfig,
    start_epoch: int = 0,
    state: OptimizerState | None = None,
) -> tuple[Parameters, TrainingHistory]:
    """Train on a case set; deterministic given (params, case_set, config).

    Runs epochs x ceil(k / batch_size) updates (the last partial batch is
    kept).  Non-finite losses or gradients abort with the epoch and step
    recorded in the error message.
    """
    label_order = {label: i for i, label in enumerate(image_store.manifest.label_set)}
    labels_all = np.array([label_order[c.label] for c in case_set.cases], dtype=np.int64)
    n = len(case_set.cases)
    if n == 0:
        raise ConfigError("case set is empty")
    state = state or OptimizerState.zeros_like(params)
    history = TrainingHistory(config=config)

    for epoch in range(start_epoch, config.epochs):
        t0 = time.perf_counter()
        order = _epoch_order(n, config, epoch)
        losses = []
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = assemble_batch([case_set.cases[i] for i in idx], image_store)
            labels = labels_all[idx]
            try:
                loss, grads, aux = loss_and_grad(params, batch, labels)
            except NonFiniteGradient as exc:
                raise NonFiniteGradient(
                    f"epoch {epoch}, step {state.t}: {exc}") from exc
            if not np.isfinite(loss):
                raise NonFiniteGradient(
                    f"epoch {epoch}, step {state.t}: non-finite loss {loss}")
            params, state = sgd_step(params, state, grads, config)
            params.running.update(aux.new_running)
            losses.append(loss)
            correct += int((np.argmax(aux.logits, axis=1) == labels).sum())
        stats = EpochStats(
            epoch=epoch + 1,
            mean_loss=float(np.mean(losses)),
            train_case_accuracy=correct / n,
            seconds=time.perf_counter() - t0,
        )
        history.epochs.append(stats)
        if (
            config.checkpoint_every
            and config.checkpoint_dir
            and (epoch + 1) % config.checkpoint_every == 0
        ):
            save_training_checkpoint(params, state, epoch + 1, config)
    return params, history


def save_training_checkpoint(
    params: Parameters, state: OptimizerState, epoch: int, config: TrainConfig
) -> Path:
    path = Path(config.checkpoint_dir) / f"epoch_{epoch:04d}.npz"
    save_checkpoint(params, path, meta={"epoch": epoch, "opt_t": state.t})
    vel_path = Path(config.checkpoint_dir) / f"epoch_{epoch:04d}_velocity.npz"
    np.savez_compressed(vel_path, **{f"v:{k}": v for k, v in state.velocity.items()})
    return path


def load_training_checkpoint(
    checkpoint_path: str | Path,
) -> tuple[Parameters, OptimizerState, int]:
    params, meta = load_checkpoint(checkpoint_path)
    vel_path = Path(str(checkpoint_path).replace(".npz", "_velocity.npz"))
    with np.load(vel_path, allow_pickle=False) as data:
        velocity = {k[2:]: data[k] for k in data.files}
    state = OptimizerState(velocity=velocity, t=meta["opt_t"])
    return params, state, meta["epoch"]
