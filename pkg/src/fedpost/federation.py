"""Generalized federated round loop with pluggable client updates.

Each round: sample a cohort, compute one delta per client in parallel,
aggregate the deltas into a weighted average, and apply the server
optimizer treating the aggregate as a gradient.  Two client update rules
are provided: ``fedavg`` returns theta0 minus the last local SGD iterate;
``fedpa`` draws approximate posterior samples and returns the
shrinkage-precision-corrected delta from the incremental state.

Client randomness is derived per (seed, round, client), so any execution
schedule produces identical bits; results are sorted by client index
before aggregation.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .delta import ShrinkageConfig, delta_from_samples
from .errors import DivergenceError, FedpostError
from .objectives import ClientObjective
from .optim import Optimizer, OptimizerConfig
from .sampler import SamplerConfig, ess, iasg_sample, sgd_chain

# SeedSequence domain tags, keeping the derived streams disjoint.
_DOMAIN_COHORT = 2
_DOMAIN_CLIENT = 3

CLIENT_UPDATE_KINDS = ("fedavg", "fedpa")
FEDAVG_MODES = ("sgd", "exact_solve")
FEDPA_MODES = ("iasg", "exact_samples", "exact_delta")


@dataclass(frozen=True)
class RoundConfig:
    """Everything one round needs beyond the client pool itself."""

    cohort_size: int = 10
    client_update: str = "fedavg"
    client_mode: str = "auto"  # resolved per update kind
    client_steps: int | None = None
    client_epochs: int | None = None
    batch_size: int = 10
    burn_in_rounds: int = 0
    num_samples: int | None = None  # fedpa sample count; None -> epochs
    steps_per_sample: int | None = None  # None -> one epoch per sample
    sampler_burn_in: int = 0
    shrinkage: ShrinkageConfig = field(default_factory=ShrinkageConfig)
    client_opt: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(lr=0.1))
    server_opt: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(lr=1.0))
    seed: int = 0

    def __post_init__(self):
        if self.client_update not in CLIENT_UPDATE_KINDS:
            raise ValueError(f"unknown client update {self.client_update!r}")
        if self.client_steps is not None and self.client_epochs is not None:
            raise ValueError("set client_steps or client_epochs, not both")
        if self.cohort_size < 1:
            raise ValueError("cohort_size must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        mode = self.resolved_mode()
        allowed = FEDAVG_MODES if self.client_update == "fedavg" else FEDPA_MODES
        if mode not in allowed:
            raise ValueError(f"mode {mode!r} invalid for {self.client_update}")

    def resolved_mode(self) -> str:
        if self.client_mode != "auto":
            return self.client_mode
        return "sgd" if self.client_update == "fedavg" else "iasg"


@dataclass
class ServerState:
    theta: np.ndarray
    opt: Optimizer
    round_index: int = 0


@dataclass
class ClientUpdateResult:
    client_index: int
    delta: np.ndarray
    weight: float
    num_samples: int | None = None
    ess: float | None = None
    local_loss: float | None = None


@dataclass
class MetricsRecord:
    round: int
    eval_loss: float
    eval_accuracy: float | None
    dist_to_optimum: float | None
    mean_client_ess: float | None
    wall_ms: float


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("FEDPOST_THREADS", "1")))
    except ValueError:
        return 1


def client_rng(seed: int, round_index: int, client_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed, _DOMAIN_CLIENT, round_index, client_index])
    )


def sample_cohort(pool_size: int, cohort_size: int, round_index: int, seed: int):
    """Uniform sample without replacement, ascending, deterministic in
    (seed, round_index)."""
    if not 1 <= cohort_size <= pool_size:
        raise ValueError(f"cohort_size {cohort_size} out of range for pool {pool_size}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _DOMAIN_COHORT, round_index]))
    picks = rng.choice(pool_size, size=cohort_size, replace=False)
    return sorted(int(i) for i in picks)


def _steps_for(cfg: RoundConfig, objective: ClientObjective) -> int:
    if cfg.client_steps is not None:
        return cfg.client_steps
    epochs = cfg.client_epochs if cfg.client_epochs is not None else 1
    return epochs * math.ceil(objective.num_examples / cfg.batch_size)


def _sampler_for(cfg: RoundConfig, objective: ClientObjective) -> SamplerConfig:
    steps = cfg.steps_per_sample
    if steps is None:
        steps = math.ceil(objective.num_examples / cfg.batch_size)
    num = cfg.num_samples
    if num is None:
        num = cfg.client_epochs if cfg.client_epochs is not None else 1
    return SamplerConfig(burn_in_steps=cfg.sampler_burn_in, steps_per_sample=steps,
                         num_samples=num, seed=cfg.seed, batch_size=cfg.batch_size)


def fedavg_client_update(theta, objective, opt: Optimizer, steps: int,
                         rng: np.random.Generator, mode: str = "sgd",
                         batch_size: int = 10, client_index: int = 0) -> ClientUpdateResult:
    """Local SGD delta: theta0 minus the final iterate (or the exact local
    optimum in ``exact_solve`` mode)."""
    theta0 = np.asarray(theta, dtype=np.float64)
    if mode == "exact_solve":
        post = objective.exact_posterior()
        if post is None:
            raise ValueError("exact_solve requires an objective with a closed-form optimum")
        delta = theta0 - post.mean
    else:
        current = sgd_chain(objective, opt, theta0.copy(), steps, rng, batch_size)
        delta = theta0 - current
    return ClientUpdateResult(client_index=client_index, delta=delta,
                              weight=objective.weight,
                              local_loss=objective.loss(theta0 - delta))


def fedpa_client_update(theta, objective, opt: Optimizer, sampler_cfg: SamplerConfig,
                        shrinkage: ShrinkageConfig, rng: np.random.Generator,
                        mode: str = "iasg", client_index: int = 0) -> ClientUpdateResult:
    """Posterior-sampled delta through the incremental shrinkage state."""
    theta0 = np.asarray(theta, dtype=np.float64)
    if mode == "exact_delta":
        post = objective.exact_posterior()
        if post is None:
            raise ValueError("exact_delta requires a closed-form posterior")
        delta = post.precision @ (theta0 - post.mean)
        return ClientUpdateResult(client_index=client_index, delta=delta,
                                  weight=objective.weight)
    try:
        if mode == "exact_samples":
            post = objective.exact_posterior()
            if post is None:
                raise ValueError("exact_samples requires a closed-form posterior")
            samples = list(post.sample(rng, sampler_cfg.num_samples))
        else:
            samples = iasg_sample(objective, opt, sampler_cfg, theta0, rng=rng)
        delta = delta_from_samples(samples, theta0, shrinkage)
    except FedpostError as exc:
        exc.client_index = client_index
        raise
    return ClientUpdateResult(client_index=client_index, delta=delta,
                              weight=objective.weight,
                              num_samples=len(samples),
                              ess=ess(samples, objective))


def aggregate(results) -> np.ndarray:
    """Weighted average of deltas, weights normalized within the cohort,
    summed in ascending client-index order."""
    if not results:
        raise ValueError("cannot aggregate an empty cohort")
    ordered = sorted(results, key=lambda r: r.client_index)
    dims = {r.delta.shape for r in ordered}
    if len(dims) != 1:
        raise ValueError("client deltas disagree on dimension")
    total = sum(r.weight for r in ordered)
    if total <= 0:
        raise ValueError("non-positive total weight")
    out = np.zeros_like(ordered[0].delta)
    for r in ordered:
        out += (r.weight / total) * r.delta
    return out


def _one_client(args):
    theta, objective, cfg, round_number, idx, in_burn_in = args
    rng = client_rng(cfg.seed, round_number, idx)
    opt = cfg.client_opt.make(objective.dim)
    kind = "fedavg" if in_burn_in else cfg.client_update
    mode = cfg.resolved_mode() if kind == cfg.client_update else "sgd"
    try:
        if kind == "fedavg":
            return fedavg_client_update(theta, objective, opt, _steps_for(cfg, objective),
                                        rng, mode=mode, batch_size=cfg.batch_size,
                                        client_index=idx)
        return fedpa_client_update(theta, objective, opt, _sampler_for(cfg, objective),
                                   cfg.shrinkage, rng, mode=mode, client_index=idx)
    except FedpostError as exc:
        exc.client_index = idx
        raise


def evaluate_pool(theta, pool) -> tuple[float, float | None]:
    """Weighted full-pool evaluation loss (and accuracy when defined)."""
    weights = np.asarray([c.weight for c in pool], dtype=np.float64)
    weights = weights / weights.sum()
    loss = float(weights @ [c.loss(theta) for c in pool])
    accs = [c.accuracy(theta) for c in pool]
    accuracy = None if any(a is None for a in accs) else float(weights @ accs)
    return loss, accuracy


def run_round(server: ServerState, pool, cfg: RoundConfig,
              mode_oracle=None) -> tuple[ServerState, MetricsRecord]:
    """Execute one communication round and evaluate the new server model."""
    start = time.perf_counter()
    round_number = server.round_index + 1
    in_burn_in = round_number <= cfg.burn_in_rounds
    cohort = sample_cohort(len(pool), cfg.cohort_size, round_number, cfg.seed)

    jobs = [(server.theta, pool[i], cfg, round_number, i, in_burn_in) for i in cohort]
    workers = max_workers()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            results = list(pool_exec.map(_one_client, jobs))
    else:
        results = [_one_client(j) for j in jobs]

    round_delta = aggregate(results)
    new_theta = server.opt.step(server.theta, round_delta)
    if not np.all(np.isfinite(new_theta)):
        raise DivergenceError(f"server model non-finite after round {round_number}")
    server.theta = new_theta
    server.round_index = round_number

    eval_loss, eval_accuracy = evaluate_pool(new_theta, pool)
    dist = None
    if mode_oracle is not None:
        dist = float(np.linalg.norm(new_theta - mode_oracle))
    ess_values = [r.ess for r in results if r.ess is not None]
    record = MetricsRecord(
        round=round_number,
        eval_loss=eval_loss,
        eval_accuracy=eval_accuracy,
        dist_to_optimum=dist,
        mean_client_ess=float(np.mean(ess_values)) if ess_values else None,
        wall_ms=(time.perf_counter() - start) * 1e3,
    )
    return server, record


def run_rounds(server: ServerState, pool, cfg: RoundConfig, rounds: int,
               mode_oracle=None) -> list[MetricsRecord]:
    records = []
    for _ in range(rounds):
        server, record = run_round(server, pool, cfg, mode_oracle=mode_oracle)
        records.append(record)
    return records


def make_server(theta0, server_opt: OptimizerConfig) -> ServerState:
    theta0 = np.asarray(theta0, dtype=np.float64)
    return ServerState(theta=theta0.copy(), opt=server_opt.make(theta0.shape[0]))


def with_seed(cfg: RoundConfig, seed: int) -> RoundConfig:
    return replace(cfg, seed=seed)
