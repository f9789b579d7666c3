"""
Toy training of a LoraLayer on a small classification problem.

The layer's output is read as class logits and trained with softmax
cross-entropy by plain full-batch gradient descent on A and B. Gradients are
written out by hand; W is never touched.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import pandas as pd
import torch

from ..common.debug_utils import check_isnan_isinf
from .layer import DTYPE, RANK_GRID, LoraLayer, forward
from .test_utils import get_numerical_jacobian, max_relative_error

logger = logging.getLogger(__name__)

TOY_RANK_GRID = (1, 2)
GRAD_CHECK_EPS = 1e-5


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.2
    steps: int = 200
    rank: int = 8
    seed: int = 0
    rank_grid: Tuple[int, ...] = RANK_GRID

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0, got {}".format(self.learning_rate))
        if self.steps < 1:
            raise ValueError("steps must be >= 1, got {}".format(self.steps))
        if self.rank not in self.rank_grid:
            raise ValueError("rank {} not in grid {}".format(self.rank, self.rank_grid))


# Three classes only leave room for rank 1 or 2 adapters.
TOY_CONFIG = TrainConfig(learning_rate=0.2, steps=200, rank=2, seed=0,
                         rank_grid=TOY_RANK_GRID)


@dataclass
class TrainResult:
    layer: LoraLayer
    losses: List[float]

    @property
    def initial_loss(self):
        return self.losses[0]

    @property
    def final_loss(self):
        return self.losses[-1]


def make_toy_dataset(n_per_class=20, d_in=8, n_classes=3, seed=0,
                     separation=2.0, noise=0.2):
    """
    Class k is centred on separation * e_k plus isotropic Gaussian noise.

    Returns:
    - X: [n_classes * n_per_class, d_in] float64.
    - y: [n_classes * n_per_class] int64 class labels, grouped by class.
    """
    if n_classes < 2 or n_classes > d_in:
        raise ValueError("Need 2 <= n_classes <= d_in, got n_classes={}, d_in={}"
                         .format(n_classes, d_in))
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    generator = torch.Generator().manual_seed(seed)
    means = separation * torch.eye(n_classes, d_in, dtype=DTYPE)
    X = means.repeat_interleave(n_per_class, dim=0)
    X = X + noise * torch.randn(X.shape, generator=generator, dtype=DTYPE)
    y = torch.arange(n_classes).repeat_interleave(n_per_class)
    return X, y


def random_sample(d_in, n_classes, seed):
    """One (x, label) pair with x ~ N(0, I)."""
    generator = torch.Generator().manual_seed(seed)
    x = torch.randn(d_in, generator=generator, dtype=DTYPE)
    label = int(torch.randint(n_classes, (1,), generator=generator).item())
    return x, label


def _as_batch(dataset):
    """(X, y) tensors, or a list of (x, label) pairs, as a batch."""
    if isinstance(dataset, tuple) and len(dataset) == 2 and torch.is_tensor(dataset[0]):
        X, y = dataset
    else:
        if not dataset:
            raise ValueError("dataset must be non-empty.")
        X = torch.stack([torch.as_tensor(x, dtype=DTYPE) for x, _ in dataset])
        y = torch.tensor([int(label) for _, label in dataset])
    if len(X.shape) == 1:
        X, y = X.unsqueeze(0), torch.as_tensor(y).reshape(1)
    return X, y


def loss_and_gradients(layer, X, y):
    """
    Mean softmax cross-entropy of forward(layer, X) and its gradients.

    With Z = X (W + BA)^T and G = (softmax(Z) - onehot(y)) / n:
      dL/dB = G^T (X A^T),  dL/dA = B^T G^T X.

    Returns:
    - (loss scalar tensor, dA [r, d_in], dB [d_out, r]).
    """
    if X.shape[0] != y.shape[0]:
        raise ValueError("X has {} rows but y has {} labels".format(X.shape[0], y.shape[0]))
    n = X.shape[0]
    logits = forward(layer, X)
    log_probs = torch.log_softmax(logits, dim=1)
    loss = -log_probs[torch.arange(n), y].mean()
    G = torch.exp(log_probs)
    G[torch.arange(n), y] -= 1.0
    G = G / n
    dB = G.T @ (X @ layer.A.T)
    dA = layer.B.T @ (G.T @ X)
    return loss, dA, dB


def train_toy(layer, dataset, config):
    """
    Runs `config.steps` gradient steps on A and B.

    Args:
    - layer: LoraLayer to start from; it is not modified.
    - dataset: (X, y) tensors or a list of (x, class-label) pairs.
    - config: TrainConfig.

    Returns:
    - TrainResult with the trained layer (sharing W) and the loss before
      each step plus the final loss (config.steps + 1 values).

    Raises:
    - NonFiniteLossError: the loss became NaN or Inf.
    """
    X, y = _as_batch(dataset)
    A = layer.A.clone()
    B = layer.B.clone()
    current = layer.with_factors(A, B)
    losses = []
    for step in range(config.steps + 1):
        loss, dA, dB = loss_and_gradients(current, X, y)
        check_isnan_isinf(loss, "loss at step {} of {}".format(step, config.steps))
        losses.append(loss.item())
        if step == config.steps:
            break
        if step % 50 == 0:
            logger.debug("step %d of %d: loss %.6f", step, config.steps, losses[-1])
        A = A - config.learning_rate * dA
        B = B - config.learning_rate * dB
        current = layer.with_factors(A, B)
    logger.info("trained rank %d for %d steps: loss %.6f -> %.6f",
                layer.r, config.steps, losses[0], losses[-1])
    return TrainResult(current, losses)


def grad_check(layer, sample, eps=GRAD_CHECK_EPS):
    """
    Largest entrywise relative error between the analytic gradients of A and
    B and central finite differences, for one (x, label) sample.
    """
    x, label = sample
    X, y = _as_batch([(x, label)])
    _, dA, dB = loss_and_gradients(layer, X, y)

    A = layer.A.clone()
    B = layer.B.clone()

    def loss_wrt_A(a):
        return loss_and_gradients(layer.with_factors(a, B), X, y)[0]

    def loss_wrt_B(b):
        return loss_and_gradients(layer.with_factors(A, b), X, y)[0]

    num_dA = get_numerical_jacobian(loss_wrt_A, A, eps).reshape(dA.shape)
    num_dB = get_numerical_jacobian(loss_wrt_B, B, eps).reshape(dB.shape)
    return max(max_relative_error(dA, num_dA), max_relative_error(dB, num_dB))


def write_loss_csv(losses, path):
    pd.DataFrame({"step": range(len(losses)), "loss": losses}).to_csv(path, index=False)


def write_grad_check_csv(rows, path):
    """rows: iterable of (seed, max_rel_error)."""
    pd.DataFrame(list(rows), columns=["seed", "max_rel_error"]).to_csv(path, index=False)


def write_param_report_csv(rows, path):
    """rows: output of param_report."""
    pd.DataFrame(list(rows), columns=["r", "trainable", "full", "ratio"]).to_csv(
        path, index=False)
