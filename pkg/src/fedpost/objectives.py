"""Client objectives, synthetic data generators, and closed-form oracles.

Three objective kinds are supported: quadratics (used by the 2-D toy
scenario), least-squares regression, and multiclass logistic regression.
Least-squares and quadratic objectives expose their exact Gaussian
posterior, which powers the oracle checks and the exact-sampling test
hooks.  Losses are per-example means; the posterior precision follows
the unnormalized X^T X convention (the scale cancels when local
posteriors are multiplicatively combined with consistent weights).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrixError


@dataclass(frozen=True)
class GaussianPosterior:
    """Local posterior N(mean, precision^{-1})."""

    mean: np.ndarray
    precision: np.ndarray

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` exact samples, shape (size, d)."""
        chol = np.linalg.cholesky(self.precision)
        z = rng.standard_normal((size, self.mean.shape[0]))
        # cov = L^{-T} L^{-1}, so x = mean + L^{-T} z.
        return self.mean + np.linalg.solve(chol.T, z.T).T


class ClientObjective:
    """Interface shared by all client objectives.

    Subclasses provide the full-batch loss/gradient and a stochastic
    gradient over a batch of example indices; all are pure functions of
    theta, so instances are safe to share across threads.
    """

    kind = "base"
    dim: int
    num_examples: int
    weight: float

    def loss(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stochastic_gradient(self, theta: np.ndarray, indices: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def exact_posterior(self) -> GaussianPosterior | None:
        return None

    def accuracy(self, theta: np.ndarray) -> float | None:
        return None


class QuadraticObjective(ClientObjective):
    """f(theta) = 0.5 * (theta - mean)^T precision (theta - mean).

    The gradient precision @ (theta - mean) is exactly the ideal client
    delta, which makes these objectives the reference case for the round
    loop.  Gradients are noise-free; batch indices are ignored.
    """

    kind = "quadratic"

    def __init__(self, mean, precision, weight=1.0):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.precision = np.asarray(precision, dtype=np.float64)
        self.dim = self.mean.shape[0]
        if self.precision.shape != (self.dim, self.dim):
            raise ValueError("precision shape does not match mean")
        if not np.allclose(self.precision, self.precision.T):
            raise ValueError("precision must be symmetric")
        self.num_examples = 1
        self.weight = float(weight)

    def loss(self, theta):
        r = theta - self.mean
        return 0.5 * float(r @ self.precision @ r)

    def gradient(self, theta):
        return self.precision @ (theta - self.mean)

    def stochastic_gradient(self, theta, indices):
        return self.gradient(theta)

    def exact_posterior(self):
        return GaussianPosterior(self.mean.copy(), self.precision.copy())


class LeastSquaresObjective(ClientObjective):
    """f(theta) = (1/n) * 0.5 * ||X theta - y||^2."""

    kind = "least_squares"

    def __init__(self, features, targets, weight=None):
        self.features = np.asarray(features, dtype=np.float64)
        self.targets = np.asarray(targets, dtype=np.float64)
        if self.features.ndim != 2 or self.targets.ndim != 1:
            raise ValueError("features must be 2-D and targets 1-D")
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("features/targets row counts differ")
        self.num_examples, self.dim = self.features.shape
        self.weight = float(weight) if weight is not None else float(self.num_examples)

    def loss(self, theta):
        r = self.features @ theta - self.targets
        return 0.5 * float(r @ r) / self.num_examples

    def gradient(self, theta):
        r = self.features @ theta - self.targets
        return self.features.T @ r / self.num_examples

    def stochastic_gradient(self, theta, indices):
        xb = self.features[indices]
        rb = xb @ theta - self.targets[indices]
        return xb.T @ rb / len(indices)

    def exact_posterior(self):
        return exact_local_posterior(self)


class LogisticObjective(ClientObjective):
    """Multiclass softmax regression with theta flattened to (classes * features,).

    Loss is the mean cross entropy; no intercept term.
    """

    kind = "logistic"

    def __init__(self, features, labels, num_classes, weight=None):
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be 2-D and labels 1-D")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features/labels row counts differ")
        if self.labels.min() < 0 or self.labels.max() >= num_classes:
            raise ValueError("labels out of range")
        self.num_classes = int(num_classes)
        self.num_examples, self.num_features = self.features.shape
        self.dim = self.num_classes * self.num_features
        self.weight = float(weight) if weight is not None else float(self.num_examples)

    def _log_softmax(self, theta, features):
        w = theta.reshape(self.num_classes, self.num_features)
        scores = features @ w.T
        scores = scores - scores.max(axis=1, keepdims=True)
        logz = np.log(np.exp(scores).sum(axis=1, keepdims=True))
        return scores - logz

    def loss(self, theta):
        logp = self._log_softmax(theta, self.features)
        return -float(logp[np.arange(self.num_examples), self.labels].mean())

    def _gradient_on(self, theta, features, labels):
        n = features.shape[0]
        p = np.exp(self._log_softmax(theta, features))
        p[np.arange(n), labels] -= 1.0
        return (p.T @ features / n).ravel()

    def gradient(self, theta):
        return self._gradient_on(theta, self.features, self.labels)

    def stochastic_gradient(self, theta, indices):
        return self._gradient_on(theta, self.features[indices], self.labels[indices])

    def accuracy(self, theta):
        w = theta.reshape(self.num_classes, self.num_features)
        pred = (self.features @ w.T).argmax(axis=1)
        return float((pred == self.labels).mean())


def least_squares_loss(theta, objective: LeastSquaresObjective) -> float:
    return objective.loss(np.asarray(theta, dtype=np.float64))


def exact_local_posterior(objective: LeastSquaresObjective) -> GaussianPosterior:
    """Closed-form Gaussian posterior of a least-squares client.

    precision = X^T X  (unnormalized), mean = (X^T X)^{-1} X^T y.
    """
    x, y = objective.features, objective.targets
    precision = x.T @ x
    try:
        mean = np.linalg.solve(precision, x.T @ y)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"X^T X is singular: {exc}") from exc
    cond = np.linalg.cond(precision)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularMatrixError(f"X^T X is numerically singular (cond={cond:.3e})")
    return GaussianPosterior(mean, precision)


def exact_global_mode(posteriors, weights) -> np.ndarray:
    """Mode of the product of Gaussian posteriors.

    Solves (sum_i q_i P_i) mu = sum_i q_i P_i m_i.
    """
    if len(posteriors) != len(weights) or not posteriors:
        raise ValueError("posteriors and weights must be non-empty and equal length")
    a = sum(q * p.precision for q, p in zip(weights, posteriors))
    b = sum(q * (p.precision @ p.mean) for q, p in zip(weights, posteriors))
    try:
        mode = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"aggregate precision is singular: {exc}") from exc
    if not np.all(np.isfinite(mode)):
        raise SingularMatrixError("aggregate precision is numerically singular")
    return mode


def make_regression(n, d, n_informative, noise_std, seed):
    """Synthetic least-squares client: standard-normal design, sparse
    coefficients uniform in [0, 100), Gaussian target noise.

    Returns (objective, true_coefficients).
    """
    if not (1 <= n_informative <= d) or n < 1:
        raise ValueError("invalid sizes")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    coef = np.zeros(d)
    coef[:n_informative] = 100.0 * rng.random(n_informative)
    y = x @ coef
    if noise_std > 0:
        y = y + noise_std * rng.standard_normal(n)
    return LeastSquaresObjective(x, y), coef


def make_federated_logistic(num_clients, n_per_client, d, num_classes,
                            heterogeneity, seed, class_sep=2.0):
    """Non-i.i.d. federated classification pool.

    A shared set of class-conditional Gaussian means (which doubles as
    the ground-truth softmax model) is drawn once; each client draws its
    label distribution from Dirichlet(1/heterogeneity) and its features
    from N(mean[label], I).  heterogeneity = 0 means i.i.d. uniform
    labels on every client.
    """
    if min(num_clients, n_per_client, d, num_classes) < 1:
        raise ValueError("invalid sizes")
    if heterogeneity < 0:
        raise ValueError("heterogeneity must be >= 0")
    rng = np.random.default_rng(seed)
    class_means = class_sep * rng.standard_normal((num_classes, d))
    clients = []
    for _ in range(num_clients):
        if heterogeneity == 0:
            p = np.full(num_classes, 1.0 / num_classes)
        else:
            p = rng.dirichlet(np.full(num_classes, 1.0 / heterogeneity))
        labels = rng.choice(num_classes, size=n_per_client, p=p)
        features = class_means[labels] + rng.standard_normal((n_per_client, d))
        clients.append(LogisticObjective(features, labels, num_classes))
    return clients


def write_client_csv(objective, path):
    """Columnar dump: feature columns then the target/label column."""
    if isinstance(objective, LogisticObjective):
        targets = objective.labels
    else:
        targets = objective.targets
    integer_target = np.issubdtype(targets.dtype, np.integer)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        d = objective.features.shape[1]
        writer.writerow([f"x{j}" for j in range(d)] + ["target"])
        for row, t in zip(objective.features, targets):
            cells = [repr(float(v)) for v in row]
            cells.append(repr(int(t)) if integer_target else repr(float(t)))
            writer.writerow(cells)


def read_client_csv(path):
    """Inverse of ``write_client_csv``; returns (features, targets)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 1
        rows = [[float(v) for v in row] for row in reader]
    data = np.asarray(rows, dtype=np.float64)
    if data.size == 0:
        return np.zeros((0, d)), np.zeros(0)
    return data[:, :d], data[:, d]
