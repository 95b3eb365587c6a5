"""Online computation of shrinkage-precision client deltas.

Given a stream of d-dimensional samples x_1, x_2, ... and a fixed anchor
theta0, this module maintains

    delta_hat_t = Sigma_hat_t^{-1} (theta0 - mean_t),

where Sigma_hat_t = rho_t * I + (1 - rho_t) * S_t is a shrinkage estimate
of the sample covariance S_t with rho_t = 1 / (1 + (t - 1) * rho).

The trick is that the unnormalized matrix I + rho*(t-1)*S_t grows by a
rank-1 term gamma_t * u_t u_t^T per sample (u_t = x_t - mean_{t-1},
gamma_t = rho*(t-1)/t), so its inverse action can be updated with the
Sherman-Morrison formula using only vector-vector products.  Processing
l samples costs O(l^2 d) time and O(l d) memory; no d x d matrix is ever
materialized.  ``dense_delta_oracle`` provides the direct dense-solve
reference used to validate the incremental path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrixError, SingularUpdateError

DEFAULT_EPSILON_DENOM = 1e-12


def shrinkage_weight(t: int, rho: float) -> float:
    """Identity weight rho_t = 1 / (1 + (t - 1) * rho) of the shrinkage estimator.

    Equals 1 when t == 1 or rho == 0 and decreases strictly in t for rho > 0.
    """
    if t < 1:
        raise ValueError(f"sample count must be >= 1, got {t}")
    if rho < 0:
        raise ValueError(f"shrinkage rho must be >= 0, got {rho}")
    return 1.0 / (1.0 + (t - 1) * rho)


def _as_param_vector(x, dim: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D parameter vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("parameter vector contains non-finite entries")
    return v


@dataclass(frozen=True)
class ShrinkageConfig:
    """Shrinkage constant rho plus the denominator guard threshold."""

    rho: float = 0.01
    epsilon_denom: float = DEFAULT_EPSILON_DENOM

    def __post_init__(self):
        if not (self.rho >= 0 and np.isfinite(self.rho)):
            raise ValueError(f"rho must be finite and >= 0, got {self.rho}")
        if not self.epsilon_denom > 0:
            raise ValueError("epsilon_denom must be > 0")


class DeltaState:
    """Incremental state for the delta of one client.

    Single-owner mutable value: ``update`` mutates in place, ``finalize``
    is read-only and may be called after any number of updates (the
    estimate is valid at every t).  On a ``SingularUpdateError`` the state
    is left untouched.
    """

    def __init__(self, theta0, first_sample, cfg: ShrinkageConfig):
        theta0 = _as_param_vector(theta0)
        first_sample = _as_param_vector(first_sample, dim=theta0.shape[0])
        self.dim = theta0.shape[0]
        self.t = 1
        self.rho = cfg.rho
        self.epsilon_denom = cfg.epsilon_denom
        self.theta0 = theta0.copy()
        self.mean = first_sample.copy()
        self.delta_tilde = theta0 - first_sample
        # One entry per sample beyond the first: v_k = (unnormalized
        # precision at k-1)^{-1} u_k, its gamma_k, and the cached
        # Sherman-Morrison denominator 1 + gamma_k * (v_k . u_k).
        # The u_k themselves are not needed once these are stored.
        self._v: list[np.ndarray] = []
        self._gamma: list[float] = []
        self._denom: list[float] = []

    @property
    def history_len(self) -> int:
        return len(self._v)

    def update(self, new_sample) -> "DeltaState":
        """Fold one more sample into the state.  O(t * d) time."""
        x = _as_param_vector(new_sample, dim=self.dim)
        t = self.t + 1
        u = x - self.mean

        # v = (unnormalized precision)^{-1} u, via the accumulated rank-1
        # corrections: v = u - sum_k [gamma_k (v_k . u) / denom_k] v_k.
        if self._v:
            vmat = np.asarray(self._v)
            coeffs = np.asarray(self._gamma) * (vmat @ u) / np.asarray(self._denom)
            v = u - vmat.T @ coeffs
        else:
            v = u.copy()

        gamma = self.rho * (t - 1) / t
        u_dot_v = float(u @ v)
        denom = 1.0 + gamma * u_dot_v
        if abs(denom) <= self.epsilon_denom:
            raise SingularUpdateError(
                f"rank-1 update denominator {denom!r} within guard "
                f"{self.epsilon_denom!r} at sample {t}"
            )

        coef = 1.0 + gamma * (t * float(u @ self.delta_tilde) - u_dot_v) / denom
        self.delta_tilde = self.delta_tilde - (coef / t) * v
        self.mean = self.mean + u / t
        self._v.append(v)
        self._gamma.append(gamma)
        self._denom.append(denom)
        self.t = t
        return self

    def finalize(self) -> np.ndarray:
        """Current delta estimate; does not mutate the state."""
        return self.delta_tilde / shrinkage_weight(self.t, self.rho)

    def to_debug_dict(self) -> dict:
        return {
            "dim": self.dim,
            "t": self.t,
            "rho": self.rho,
            "theta0": self.theta0.tolist(),
            "mean": self.mean.tolist(),
            "delta_tilde": self.delta_tilde.tolist(),
            "history": [
                {"v": v.tolist(), "gamma": g, "denom": d}
                for v, g, d in zip(self._v, self._gamma, self._denom)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_debug_dict())


def delta_state_init(theta0, first_sample, cfg: ShrinkageConfig) -> DeltaState:
    """Start a state from the anchor theta0 and the first sample."""
    return DeltaState(theta0, first_sample, cfg)


def delta_state_update(state: DeltaState, new_sample) -> DeltaState:
    return state.update(new_sample)


def delta_finalize(state: DeltaState) -> np.ndarray:
    return state.finalize()


def delta_from_samples(samples, theta0, cfg: ShrinkageConfig) -> np.ndarray:
    """Run the incremental computation over a full sample list."""
    if len(samples) == 0:
        raise ValueError("at least one sample is required")
    state = delta_state_init(theta0, samples[0], cfg)
    for x in samples[1:]:
        state.update(x)
    return state.finalize()


def dense_delta_oracle(samples, theta0, rho: float) -> np.ndarray:
    """Reference delta via an explicit d x d shrinkage matrix and dense solve.

    Uses the unbiased sample covariance (defined as the zero matrix for a
    single sample, so the one-sample estimator is exactly the identity).
    """
    if len(samples) == 0:
        raise ValueError("at least one sample is required")
    theta0 = _as_param_vector(theta0)
    d = theta0.shape[0]
    x = np.asarray([_as_param_vector(s, dim=d) for s in samples])
    ell = x.shape[0]
    xbar = x.mean(axis=0)

    rho_ell = shrinkage_weight(ell, rho)
    if ell == 1:
        s_hat = np.zeros((d, d))
    else:
        centered = x - xbar
        s_hat = centered.T @ centered / (ell - 1)
    sigma_hat = rho_ell * np.eye(d) + (1.0 - rho_ell) * s_hat
    try:
        return np.linalg.solve(sigma_hat, theta0 - xbar)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"shrinkage matrix is singular: {exc}") from exc
