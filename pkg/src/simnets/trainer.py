"""SGD with momentum, step learning-rate decay, per-group weight decay, and gradient checks."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

# groups never decayed: templates by design, the scalars because decay has no meaning there
_NO_DECAY = ("z", "p", "xi1", "xi2")


class DivergenceError(ArithmeticError):
    pass


@dataclass
class SgdConfig:
    batch_size: int = 64
    momentum: float = 0.9
    learning_rate: float = 0.01
    decay_factor: float = 0.1
    decay_epoch: int = 50
    epochs: int = 100
    weight_decay: float = 1e-4  # weights and offsets
    template_weight_decay: float = 0.0
    nesterov: bool = False  # reserved; classic momentum only
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.learning_rate < 0 or self.decay_factor <= 0:
            raise ValueError("learning rate must be non-negative and decay factor positive")
        if self.weight_decay < 0 or self.template_weight_decay < 0:
            raise ValueError("weight decay must be non-negative")
        if self.nesterov:
            raise NotImplementedError("Nesterov momentum is not implemented")

    def lr(self, epoch: int) -> float:
        return self.learning_rate * self.decay_factor ** (epoch // self.decay_epoch) if self.decay_epoch > 0 \
            else self.learning_rate

    def decay_for(self, group: str) -> float:
        if group == "z":
            return self.template_weight_decay
        if group in _NO_DECAY:
            return 0.0
        return self.weight_decay


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def losses(self) -> list:
        return [r.loss for r in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "train_acc", "val_acc", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.loss), repr(r.train_acc), repr(r.val_acc), f"{r.seconds:.3f}"])


def sgd_step(params: dict, grads: dict, velocity: dict, config: SgdConfig, epoch: int):
    """One momentum update; returns new ``(params, velocity)`` dicts.

    Groups absent from ``grads`` are left untouched.
    """
    lr = config.lr(epoch)
    new_p, new_v = dict(params), dict(velocity)
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in parameter group {name!r}")
        theta = np.asarray(params[name], dtype=np.float64)
        v = velocity.get(name)
        v = np.zeros_like(theta) if v is None else v
        wd = config.decay_for(name)
        step = g + wd * theta if wd else g
        v = config.momentum * v - lr * step
        new_v[name] = v
        new_p[name] = theta + v
    return new_p, new_v


def evaluate(net, data, batch: int = 256) -> float:
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty set")
    pred = np.concatenate([np.atleast_1d(net.predict(data.images[i:i + batch]))
                           for i in range(0, len(data), batch)])
    return float(np.mean(pred == data.labels))


def train(net, dataset, config: SgdConfig, validation=None, history_path=None, log=None) -> TrainHistory:
    """Minibatch SGD over ``dataset`` for ``config.epochs`` epochs, updating ``net`` in place."""
    if len(dataset) == 0:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(config.seed)
    velocity: dict = {}
    history = TrainHistory()
    N = len(dataset)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(N)
        loss_sum, correct = 0.0, 0
        for lo in range(0, N, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            report, grads = net.loss_and_backward(dataset.images[idx], dataset.labels[idx])
            if not np.isfinite(report.loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            loss_sum += report.loss * len(idx)
            correct += int(np.sum(np.atleast_1d(report.predicted) == dataset.labels[idx]))
            live = {k: g for k, g in grads.items() if k in net.trainable}
            params, velocity = sgd_step(net.parameters(), live, velocity, config, epoch)
            net.set_parameters({k: params[k] for k in live})
        val = evaluate(net, validation) if validation is not None else float("nan")
        rec = EpochRecord(epoch, loss_sum / N, correct / N, val, time.perf_counter() - t0)
        history.records.append(rec)
        if log is not None:
            log(rec)
        if history_path is not None:
            history.to_csv(history_path)
    return history


def grad_check(net, images, labels, epsilon: float = 1e-5, max_coords: int = 200, seed=0,
               margin: float | None = None) -> dict:
    """Max relative error between analytic and central-difference gradients per group.

    ``margin`` skips template coordinates within that distance of any patch
    coordinate (the |x - z|^p kink at x = z). Frozen groups report 0.
    """
    rng = np.random.default_rng(seed)
    _, grads = net.loss_and_backward(images, labels)
    base = {k: np.array(v, dtype=np.float64) for k, v in net.parameters().items()}
    X = net.patches(images).reshape(-1, net.similarity.dim) if margin else None
    report = {}
    for name, theta in base.items():
        if name not in net.trainable:
            report[name] = 0.0
            continue
        flat = theta.reshape(-1)
        coords = np.arange(flat.size)
        if margin and name == "z":
            zf = theta.reshape(net.n, -1)
            near = np.array([np.min(np.abs(X[:, j % zf.shape[1]] - zf.reshape(-1)[j])) for j in coords])
            coords = coords[near > margin + epsilon]
        if coords.size > max_coords:
            coords = rng.choice(coords, max_coords, replace=False)
        analytic = np.asarray(grads[name], dtype=np.float64).reshape(-1)
        worst = 0.0
        for j in coords:
            vals = []
            for sgn in (1.0, -1.0):
                t = flat.copy()
                t[j] += sgn * epsilon
                net.set_parameters({name: t.reshape(theta.shape)})
                vals.append(net.loss_and_backward(images, labels)[0].loss)
            numeric = (vals[0] - vals[1]) / (2 * epsilon)
            a = analytic[j]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-8))
        net.set_parameters({name: theta})
        report[name] = worst
    return report
