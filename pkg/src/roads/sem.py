"""Synthetic data generation from additive-noise structural equation models.

Supports linear SEMs with four noise families (all centered to zero mean),
an MLP mechanism and a Gaussian-process mechanism. The NV regime is
realized by standardizing EV data column-wise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateDataError, NumericalError
from .graphs import Dag, is_acyclic, topological_order

NOISE_KINDS = ("gauss", "exp", "gumbel", "uniform")
SEM_KINDS = ("linear", "mlp", "gp")
VARIANCE_MODES = ("ev", "nv")


@dataclass(frozen=True)
class SemSpec:
    sem_kind: str = "linear"
    noise_kind: str = "gauss"
    variance_mode: str = "ev"
    n_d: int = 100

    def __post_init__(self):
        if self.sem_kind not in SEM_KINDS:
            raise ConfigurationError(f"unknown sem kind {self.sem_kind!r}")
        if self.noise_kind not in NOISE_KINDS:
            raise ConfigurationError(f"unknown noise kind {self.noise_kind!r}")
        if self.variance_mode not in VARIANCE_MODES:
            raise ConfigurationError(f"unknown variance mode {self.variance_mode!r}")
        if self.n_d < 1:
            raise ConfigurationError("n_d must be >= 1")


def sample_noise(noise_kind: str, size, rng: np.random.Generator) -> np.ndarray:
    """Unit-scale noise shifted to zero mean.

    Exponential is rate-1 minus its mean 1; Gumbel is scale-1 minus the
    Euler-Mascheroni constant; uniform is Uniform(-1, 1).
    """
    if noise_kind == "gauss":
        return rng.standard_normal(size)
    if noise_kind == "exp":
        return rng.exponential(1.0, size) - 1.0
    if noise_kind == "gumbel":
        return rng.gumbel(0.0, 1.0, size) - np.euler_gamma
    if noise_kind == "uniform":
        return rng.uniform(-1.0, 1.0, size)
    raise ConfigurationError(f"unknown noise kind {noise_kind!r}")


def sample_linear_weights(dag: Dag, rng: np.random.Generator) -> np.ndarray:
    """Edge weights uniform on (-2.0, -0.5] u [0.5, 2.0); non-edges zero."""
    n = dag.n_v
    mag = rng.uniform(0.5, 2.0, size=(n, n))
    sign = np.where(rng.random((n, n)) < 0.5, -1.0, 1.0)
    return dag.adjacency * mag * sign


def simulate_linear(
    W: np.ndarray,
    noise_kind: str,
    n_d: int,
    rng: np.random.Generator,
    return_noise: bool = False,
):
    """Fill columns in topological order: x_j = X W[:, j] + eps_j."""
    W = np.asarray(W, dtype=float)
    if not is_acyclic(W):
        raise_cycle()
    n_v = W.shape[0]
    order = topological_order(Dag((np.abs(W) > 0).astype(np.int8)))
    X = np.zeros((n_d, n_v))
    eps = np.empty((n_d, n_v))
    for j in order:
        eps[:, j] = sample_noise(noise_kind, n_d, rng)
        X[:, j] = X @ W[:, j] + eps[:, j]
    if return_noise:
        return X, eps
    return X


def raise_cycle():
    from .errors import GraphStructureError

    raise GraphStructureError("weighted matrix support contains a cycle")


def standardize_nv(X: np.ndarray) -> np.ndarray:
    """Per-column standardization to mean 0, sample std 1."""
    X = np.asarray(X, dtype=float)
    std = X.std(axis=0)
    if np.any(std == 0):
        raise DegenerateDataError("constant column cannot be standardized")
    return (X - X.mean(axis=0)) / std


def simulate_mlp(
    dag: Dag,
    n_d: int,
    rng: np.random.Generator,
    hidden: int = 100,
) -> np.ndarray:
    """Nonlinear SEM: x_j = sigmoid(P A1) A2 + eps_j over the parent block P.

    Layer weights have magnitude Uniform(0.5, 2.0) with random sign; roots
    are pure standard-normal noise.
    """
    n_v = dag.n_v
    X = np.zeros((n_d, n_v))
    for j in topological_order(dag):
        eps = rng.standard_normal(n_d)
        parents = np.nonzero(dag.adjacency[:, j])[0]
        if parents.size == 0:
            X[:, j] = eps
            continue
        A1 = _signed_uniform(rng, (parents.size, hidden))
        A2 = _signed_uniform(rng, (hidden,))
        P = X[:, parents]
        X[:, j] = _sigmoid(P @ A1) @ A2 + eps
    return X


def _signed_uniform(rng, shape):
    mag = rng.uniform(0.5, 2.0, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def simulate_gp(dag: Dag, n_d: int, rng: np.random.Generator) -> np.ndarray:
    """Nonlinear SEM with f_j drawn from a GP with RBF kernel on the parents.

    Sampling goes through a jittered Cholesky factorization: jitter starts
    at 1e-8 and escalates x10 until success, capped at 1e-2.
    """
    n_v = dag.n_v
    X = np.zeros((n_d, n_v))
    for j in topological_order(dag):
        eps = rng.standard_normal(n_d)
        parents = np.nonzero(dag.adjacency[:, j])[0]
        if parents.size == 0:
            X[:, j] = eps
            continue
        P = X[:, parents]
        sq = ((P[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
        K = np.exp(-0.5 * sq)  # RBF, length-scale 1
        L = _jittered_cholesky(K)
        X[:, j] = L @ rng.standard_normal(n_d) + eps
    return X


def _jittered_cholesky(K: np.ndarray) -> np.ndarray:
    jitter = 1e-8
    while jitter <= 1e-2:
        try:
            return np.linalg.cholesky(K + jitter * np.eye(K.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError("kernel factorization failed after jitter escalation")


def simulate(spec: SemSpec, dag: Dag, rng: np.random.Generator):
    """Dispatch on SemSpec; returns (X, linear weights or None)."""
    if spec.sem_kind == "linear":
        W = sample_linear_weights(dag, rng)
        X = simulate_linear(W, spec.noise_kind, spec.n_d, rng)
    elif spec.sem_kind == "mlp":
        W = None
        X = simulate_mlp(dag, spec.n_d, rng)
    else:
        W = None
        X = simulate_gp(dag, spec.n_d, rng)
    if spec.variance_mode == "nv":
        X = standardize_nv(X)
    return X, W
