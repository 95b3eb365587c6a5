"""Iterate-averaged SGD sampling and the effective-sample-size diagnostic.

The sampler runs a burn-in phase of plain stochastic steps, then emits
samples by averaging consecutive windows of the iterates (Polyak
averaging over each window).  Batches are drawn with replacement from
the client's examples using the sampler's own random stream, so a fixed
seed gives bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .objectives import ClientObjective
from .optim import Optimizer


@dataclass(frozen=True)
class SamplerConfig:
    """Burn-in steps, window length per sample, sample count, batching."""

    burn_in_steps: int = 0
    steps_per_sample: int = 1
    num_samples: int = 1
    seed: int = 0
    batch_size: int = 10

    def __post_init__(self):
        if self.burn_in_steps < 0:
            raise ValueError("burn_in_steps must be >= 0")
        if self.steps_per_sample < 1:
            raise ValueError("steps_per_sample must be >= 1")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def total_steps(self) -> int:
        return self.burn_in_steps + self.steps_per_sample * self.num_samples


def sgd_chain(objective, opt, theta, steps, rng, batch_size, step_offset=0,
              accumulate=None):
    """Run ``steps`` stochastic steps; optionally sum iterates into ``accumulate``.

    Batches are index sets drawn with replacement from the generator, one
    draw per step.  Shared by the sampler and the plain local-SGD client
    update so both consume randomness identically.
    """
    n = objective.num_examples
    for k in range(steps):
        idx = rng.integers(0, n, size=batch_size)
        grad = objective.stochastic_gradient(theta, idx)
        theta = opt.step(theta, grad)
        if not np.all(np.isfinite(theta)):
            raise DivergenceError(
                f"iterate became non-finite at local step {step_offset + k}",
                step=step_offset + k,
            )
        if accumulate is not None:
            accumulate += theta
    return theta


def iasg_sample(objective: ClientObjective, client_opt: Optimizer,
                cfg: SamplerConfig, theta_init: np.ndarray,
                rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Produce ``cfg.num_samples`` approximate posterior samples.

    Each sample is the mean of the ``cfg.steps_per_sample`` iterates in
    its window; the first ``cfg.burn_in_steps`` iterates are discarded.
    """
    if theta_init.shape[0] != objective.dim:
        raise ValueError("theta_init dimension does not match objective")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    theta = np.asarray(theta_init, dtype=np.float64).copy()

    theta = sgd_chain(objective, client_opt, theta, cfg.burn_in_steps, rng,
                      cfg.batch_size, step_offset=0)

    samples = []
    offset = cfg.burn_in_steps
    for _ in range(cfg.num_samples):
        window_sum = np.zeros_like(theta)
        theta = sgd_chain(objective, client_opt, theta, cfg.steps_per_sample,
                          rng, cfg.batch_size, step_offset=offset,
                          accumulate=window_sum)
        offset += cfg.steps_per_sample
        samples.append(window_sum / cfg.steps_per_sample)
    return samples


def ess(samples, objective: ClientObjective) -> float:
    """Effective sample size (sum w)^2 / sum w^2 of the sample weights.

    Weights follow the local posterior density tempered per dimension:
    w_j = exp(-(n/d) * (f_j - min f)), where f is the full-batch
    per-example mean loss, n the example count (n*f recovers the total
    data log-likelihood up to sign and a constant), and d the parameter
    dimension.  The 1/d tempering keeps the weight spread comparable
    across model sizes; without it the statistic pins to len(samples)
    in low dimension and to 1 in high dimension.  The min-shift makes
    the weights invariant to adding a constant to every loss.  Always
    lands in [1, len(samples)].
    """
    if len(samples) == 0:
        raise ValueError("ess requires at least one sample")
    n = getattr(objective, "num_examples", 1)
    d = getattr(objective, "dim", 1)
    losses = np.asarray([objective.loss(s) for s in samples])
    w = np.exp(-(n / d) * (losses - losses.min()))
    return float(w.sum() ** 2 / (w @ w))
