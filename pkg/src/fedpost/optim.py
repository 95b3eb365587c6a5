"""First-order optimizers used on both clients and the server.

The server applies the same ``step`` rule to the aggregated round delta,
treating it as a (possibly biased) stochastic gradient of its objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError

KINDS = ("sgd", "momentum", "adam", "adagrad")


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyperparameters for one optimizer; ``make`` builds runtime state."""

    kind: str = "sgd"
    lr: float = 0.1
    momentum: float = 0.9  # momentum kind only
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 1e-3  # adaptivity constant added to the root denominator

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1/beta2 must be in [0, 1)")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")

    def make(self, dim: int) -> "Optimizer":
        return Optimizer(self, dim)


class Optimizer:
    """Mutable accumulator state plus the update rule for one parameter vector.

    Update rules:
      sgd:      theta - lr * g
      momentum: v <- m*v + g;            theta - lr * v
      adam:     bias-corrected first/second moments;
                theta - lr * m1_hat / (sqrt(m2_hat) + tau)
      adagrad:  acc <- acc + g^2;        theta - lr * g / (sqrt(acc) + tau)
    """

    def __init__(self, cfg: OptimizerConfig, dim: int):
        self.cfg = cfg
        self.dim = dim
        self.step_count = 0
        if cfg.kind == "momentum":
            self.velocity = np.zeros(dim)
        elif cfg.kind == "adam":
            self.first_moment = np.zeros(dim)
            self.second_moment = np.zeros(dim)
        elif cfg.kind == "adagrad":
            self.sq_accum = np.zeros(dim)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Apply one update; returns new params and advances internal state."""
        if params.shape != (self.dim,) or grad.shape != (self.dim,):
            raise ValueError("parameter/gradient dimension mismatch")
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(
                f"non-finite gradient at optimizer step {self.step_count}",
                step=self.step_count,
            )
        cfg = self.cfg
        self.step_count += 1
        if cfg.kind == "sgd":
            return params - cfg.lr * grad
        if cfg.kind == "momentum":
            self.velocity = cfg.momentum * self.velocity + grad
            return params - cfg.lr * self.velocity
        if cfg.kind == "adam":
            t = self.step_count
            self.first_moment = cfg.beta1 * self.first_moment + (1 - cfg.beta1) * grad
            self.second_moment = cfg.beta2 * self.second_moment + (1 - cfg.beta2) * grad**2
            m_hat = self.first_moment / (1 - cfg.beta1**t)
            v_hat = self.second_moment / (1 - cfg.beta2**t)
            return params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.tau)
        # adagrad
        self.sq_accum = self.sq_accum + grad**2
        return params - cfg.lr * grad / (np.sqrt(self.sq_accum) + cfg.tau)


def opt_step(opt: Optimizer, params: np.ndarray, grad: np.ndarray):
    """Functional wrapper: returns (same optimizer, updated params)."""
    return opt, opt.step(params, grad)
