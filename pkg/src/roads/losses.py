"""Learnable parameters, induced adjacency and all loss terms.

Every term returns (value, gradient) with the gradient flattened in a
fixed order: linear parameters are the row-major weight matrix excluding
the diagonal; MLP parameters are, per variable j, the first layer
column-major, its bias, the output weights, the output bias.

Subgradient convention: sign(0) = 0 everywhere, so entries sitting at a
kink of |.| or relu stay stationary.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DataError, NumericalError
from .priors import AlignedPrior


# ---------------------------------------------------------------------------
# parameters


@dataclass
class LinearParams:
    """Dense weighted adjacency with a frozen zero diagonal."""

    W: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float).copy()
        np.fill_diagonal(self.W, 0.0)

    @classmethod
    def zeros(cls, n_v: int) -> "LinearParams":
        return cls(np.zeros((n_v, n_v)))

    @property
    def n_v(self) -> int:
        return self.W.shape[0]

    def flatten(self) -> np.ndarray:
        mask = ~np.eye(self.n_v, dtype=bool)
        return self.W[mask]

    def with_flat(self, flat: np.ndarray) -> "LinearParams":
        W = np.zeros_like(self.W)
        W[~np.eye(self.n_v, dtype=bool)] = flat
        return LinearParams(W)

    def flatten_matrix_grad(self, grad_W: np.ndarray) -> np.ndarray:
        """Gradient of a term defined on the signed matrix W."""
        return grad_W[~np.eye(self.n_v, dtype=bool)]

    def flatten_adjacency_grad(self, grad_A: np.ndarray) -> np.ndarray:
        """Chain a gradient on |W| through the absolute value."""
        return self.flatten_matrix_grad(grad_A * np.sign(self.W))


@dataclass
class MlpParams:
    """Per-variable two-layer sigmoid MLPs, stacked over variables.

    A1[j] maps all inputs to the hidden layer of variable j; its row j
    (the self input) is frozen at zero.
    """

    A1: np.ndarray  # (n_v, n_v, h)
    b1: np.ndarray  # (n_v, h)
    A2: np.ndarray  # (n_v, h)
    b2: np.ndarray  # (n_v,)

    @classmethod
    def zeros(cls, n_v: int, hidden: int = 10) -> "MlpParams":
        return cls(
            np.zeros((n_v, n_v, hidden)),
            np.zeros((n_v, hidden)),
            np.zeros((n_v, hidden)),
            np.zeros(n_v),
        )

    def __post_init__(self):
        self.A1 = np.asarray(self.A1, dtype=float).copy()
        self.b1 = np.asarray(self.b1, dtype=float).copy()
        self.A2 = np.asarray(self.A2, dtype=float).copy()
        self.b2 = np.asarray(self.b2, dtype=float).copy()
        for j in range(self.n_v):
            self.A1[j, j, :] = 0.0

    @property
    def n_v(self) -> int:
        return self.A1.shape[0]

    @property
    def hidden(self) -> int:
        return self.A1.shape[2]

    def flatten(self) -> np.ndarray:
        parts = []
        for j in range(self.n_v):
            parts.append(self.A1[j].ravel(order="F"))
            parts.append(self.b1[j])
            parts.append(self.A2[j])
            parts.append([self.b2[j]])
        return np.concatenate(parts)

    def with_flat(self, flat: np.ndarray) -> "MlpParams":
        n, h = self.n_v, self.hidden
        A1 = np.empty_like(self.A1)
        b1 = np.empty_like(self.b1)
        A2 = np.empty_like(self.A2)
        b2 = np.empty_like(self.b2)
        per = n * h + h + h + 1
        for j in range(n):
            blk = flat[j * per : (j + 1) * per]
            A1[j] = blk[: n * h].reshape((n, h), order="F")
            b1[j] = blk[n * h : n * h + h]
            A2[j] = blk[n * h + h : n * h + 2 * h]
            b2[j] = blk[n * h + 2 * h]
        return MlpParams(A1, b1, A2, b2)

    def flatten_grads(self, gA1, gb1, gA2, gb2) -> np.ndarray:
        gA1 = gA1.copy()
        for j in range(self.n_v):
            gA1[j, j, :] = 0.0  # frozen self input
        parts = []
        for j in range(self.n_v):
            parts.append(gA1[j].ravel(order="F"))
            parts.append(gb1[j])
            parts.append(gA2[j])
            parts.append([gb2[j]])
        return np.concatenate(parts)

    def flatten_adjacency_grad(self, grad_A: np.ndarray) -> np.ndarray:
        """Chain a gradient on W(theta) through the first-layer row norms."""
        norms = np.linalg.norm(self.A1, axis=2)  # norms[j, i] = ||A1[j, i, :]||
        gA1 = np.zeros_like(self.A1)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(norms[:, :, None] > 0, self.A1 / norms[:, :, None], 0.0)
        gA1 = grad_A.T[:, :, None] * unit
        return self.flatten_grads(
            gA1, np.zeros_like(self.b1), np.zeros_like(self.A2), np.zeros_like(self.b2)
        )


def adjacency_of(params) -> np.ndarray:
    """Nonnegative induced adjacency W(theta) with zero diagonal."""
    if isinstance(params, LinearParams):
        A = np.abs(params.W)
    elif isinstance(params, MlpParams):
        A = np.linalg.norm(params.A1, axis=2).T  # [i, j] = ||A1[j, i, :]||
    else:
        raise ConfigurationError(f"unknown parameter type {type(params)!r}")
    np.fill_diagonal(A, 0.0)
    return A


# ---------------------------------------------------------------------------
# ALM state and loss weights


@dataclass(frozen=True)
class AlmState:
    varphi: float = 0.0
    rho: float = 1.0
    c: float = 0.25
    rho_growth: float = 10.0
    rho_max: float = 1e16
    h_prev: float = np.inf

    def __post_init__(self):
        if self.rho <= 0 or self.rho > self.rho_max:
            raise ConfigurationError("need 0 < rho <= rho_max")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.2
    lambda2: float = 1.0
    s: float = 0.3
    tau: float = 0.01
    lambda3: float | None = None  # parity with lambda1 when None (sum mode only)

    def __post_init__(self):
        if self.lambda1 < 0 or self.s <= 0 or self.tau <= 0:
            raise ConfigurationError("invalid loss weights")

    @property
    def knowledge_weight(self) -> float:
        return self.lambda1 if self.lambda3 is None else self.lambda3


# ---------------------------------------------------------------------------
# matrix exponential and acyclicity


def expm_ss(M: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a truncated Taylor
    series (terms added until below tol in 1-norm)."""
    M = np.asarray(M, dtype=float)
    norm = np.linalg.norm(M, 1)
    if not np.isfinite(norm):
        raise NumericalError("non-finite entries in matrix exponential")
    s = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    A = M / (2**s)
    n = M.shape[0]
    E = np.eye(n)
    term = np.eye(n)
    for k in range(1, 60):
        term = term @ A / k
        E += term
        if np.linalg.norm(term, 1) < tol:
            break
    else:
        raise NumericalError("matrix exponential series failed to converge")
    for _ in range(s):
        E = E @ E
    return E


def acyclicity_h(W: np.ndarray):
    """h(W) = tr(exp(W o W)) - n, with gradient exp(W o W)^T o 2W."""
    W = np.asarray(W, dtype=float)
    E = expm_ss(W * W)
    value = float(np.trace(E)) - W.shape[0]
    grad = E.T * (2.0 * W)
    return value, grad


def alm_penalty(h_value: float, state: AlmState):
    """phi*h + (rho/2)*h^2 and the chain factor phi + rho*h."""
    value = state.varphi * h_value + 0.5 * state.rho * h_value**2
    factor = state.varphi + state.rho * h_value
    return value, factor


def alm_update(state: AlmState, h_now: float) -> AlmState:
    rho = state.rho
    if h_now > state.c * state.h_prev:
        rho = min(rho * state.rho_growth, state.rho_max)
    return replace(state, rho=rho, varphi=state.varphi + rho * h_now, h_prev=h_now)


# ---------------------------------------------------------------------------
# data losses


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _l1_and_subgrad_linear(params: LinearParams, lambda1: float):
    value = lambda1 * np.abs(params.W).sum()
    grad = lambda1 * np.sign(params.W)
    return value, grad


def data_loss_ls(params, X: np.ndarray, lambda1: float, gram: np.ndarray | None = None):
    """Mean squared residual summed over variables plus lambda1 * ||W(theta)||_1.

    Returns (value, flat gradient). For linear parameters the closed form
    uses only the Gram matrix X'X, which may be passed in precomputed.
    """
    X = np.asarray(X, dtype=float)
    n_d = X.shape[0]
    if isinstance(params, LinearParams):
        if X.shape[1] != params.n_v:
            raise DataError("data and parameter dimensions disagree")
        G = X.T @ X if gram is None else gram
        W = params.W
        IW = np.eye(params.n_v) - W
        ls = float(np.trace(IW.T @ G @ IW)) / n_d
        grad_ls = (-2.0 / n_d) * (G @ IW)
        l1, grad_l1 = _l1_and_subgrad_linear(params, lambda1)
        value = ls + l1
        flat = params.flatten_matrix_grad(grad_ls + grad_l1)
    elif isinstance(params, MlpParams):
        value_fit, grads = _mlp_fit_and_backprop(params, X)
        A = adjacency_of(params)
        value = value_fit + lambda1 * A.sum()
        flat = params.flatten_grads(*grads) + lambda1 * params.flatten_adjacency_grad(
            np.ones_like(A)
        )
    else:
        raise ConfigurationError(f"unknown parameter type {type(params)!r}")
    if not np.isfinite(value):
        raise NumericalError("non-finite least-squares loss")
    return value, flat


def _mlp_fit_and_backprop(params: MlpParams, X: np.ndarray):
    n_d = X.shape[0]
    Z = np.einsum("ni,jih->njh", X, params.A1) + params.b1[None, :, :]
    H = _sigmoid(Z)
    pred = np.einsum("njh,jh->nj", H, params.A2) + params.b2[None, :]
    resid = X - pred
    value = float((resid**2).sum()) / n_d
    dpred = (-2.0 / n_d) * resid  # (n, n_v)
    gA2 = np.einsum("njh,nj->jh", H, dpred)
    gb2 = dpred.sum(axis=0)
    dZ = dpred[:, :, None] * params.A2[None, :, :] * H * (1.0 - H)
    gA1 = np.einsum("ni,njh->jih", X, dZ)
    gb1 = dZ.sum(axis=0)
    return value, (gA1, gb1, gA2, gb2)


def mlp_predictions(params: MlpParams, X: np.ndarray) -> np.ndarray:
    Z = np.einsum("ni,jih->njh", X, params.A1) + params.b1[None, :, :]
    return np.einsum("njh,jh->nj", _sigmoid(Z), params.A2) + params.b2[None, :]


def data_loss_golem(
    params: LinearParams,
    X: np.ndarray,
    variance_mode: str,
    lambda1: float,
    gram: np.ndarray | None = None,
):
    """GOLEM likelihood: profile log-residual term, -log|det(I - W)|, L1.

    EV uses a pooled residual norm, NV a per-column one; both need only
    the Gram matrix of the data.
    """
    if not isinstance(params, LinearParams):
        raise ConfigurationError("GOLEM loss is linear-only")
    X = np.asarray(X, dtype=float)
    n_v = params.n_v
    if X.shape[1] != n_v:
        raise DataError("data and parameter dimensions disagree")
    G = X.T @ X if gram is None else gram
    W = params.W
    IW = np.eye(n_v) - W
    sign, logabsdet = np.linalg.slogdet(IW)
    if sign == 0:
        raise NumericalError("I - W is singular (near-cyclic iterate)")
    M = G @ IW  # columns: X'(x_j - X w_j)
    col_sq = np.einsum("ij,ij->j", IW, M)  # ||x_j - X w_j||^2
    col_sq = np.maximum(col_sq, 1e-300)
    if variance_mode == "ev":
        total = float(col_sq.sum())
        value = 0.5 * n_v * np.log(total) - logabsdet
        grad_res = (-(n_v) / total) * M
    elif variance_mode == "nv":
        value = 0.5 * float(np.log(col_sq).sum()) - logabsdet
        grad_res = -M / col_sq[None, :]
    else:
        raise ConfigurationError(f"unknown variance mode {variance_mode!r}")
    grad_logdet = np.linalg.inv(IW).T
    l1, grad_l1 = _l1_and_subgrad_linear(params, lambda1)
    value = float(value) + l1
    if not np.isfinite(value):
        raise NumericalError("non-finite GOLEM loss")
    flat = params.flatten_matrix_grad(grad_res + grad_logdet + grad_l1)
    return value, flat


# ---------------------------------------------------------------------------
# knowledge losses and baseline penalties (gradients w.r.t. the matrix)


def knowledge_loss_sigmoid(A: np.ndarray, prior: AlignedPrior, s: float):
    """Smooth structural-agreement loss on constrained entries.

    value = sum |sigmoid(A - s) - sigmoid(Wc - tau)| over the constraint
    support; gradient w.r.t. the nonnegative adjacency A.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != prior.mask.shape:
        raise DataError("adjacency and prior shapes disagree")
    inner = _sigmoid(A - s) - _sigmoid(prior.weights - prior.tau)
    mask = prior.mask
    value = float(np.abs(inner[mask]).sum())
    sig = _sigmoid(A - s)
    grad = np.where(mask, np.sign(inner) * sig * (1.0 - sig), 0.0)
    return value, grad


def knowledge_loss_linear(W: np.ndarray, prior: AlignedPrior):
    """L1 distance to the signed aligned coefficients on constrained entries."""
    if prior.signed is None:
        raise ConfigurationError(
            "linear knowledge loss needs a signed surrogate (ols or lasso)"
        )
    W = np.asarray(W, dtype=float)
    diff = np.where(prior.mask, W - prior.signed, 0.0)
    value = float(np.abs(diff).sum())
    grad = np.sign(diff)
    return value, grad


def ntsb_penalty(W: np.ndarray, Bc: np.ndarray, s: float):
    """Hinge below threshold s on positive constraints, L1 on negatives."""
    W = np.asarray(W, dtype=float)
    absW = np.abs(W)
    pos = Bc == 1
    neg = Bc == -1
    hinge = np.maximum(s - absW, 0.0)
    value = float(hinge[pos].sum() + absW[neg].sum())
    grad = np.zeros_like(W)
    active = pos & (hinge > 0)
    grad[active] = -np.sign(W[active])
    grad[neg] = np.sign(W[neg])
    return value, grad


def eca_penalty(
    W: np.ndarray,
    Bc: np.ndarray,
    e_p: float = 0.9,
    e_a: float = 0.1,
    xi: float = 1.0,
):
    """Cross-entropy style agreement penalty against fixed edge beliefs.

    W' = |2 sigmoid(W) - 1|; each constrained entry contributes
    -xi^2 * log(W' Wp + (1 - W')(1 - Wp)) with Wp = e_p on positive and
    e_a on negative constraints. Log arguments are clamped at 1e-12.
    """
    W = np.asarray(W, dtype=float)
    mask = Bc != 0
    Wp = np.where(Bc == 1, e_p, e_a)
    sig = _sigmoid(W)
    Wprime = np.abs(2.0 * sig - 1.0)
    arg = Wprime * Wp + (1.0 - Wprime) * (1.0 - Wp)
    clamped = mask & (arg <= 1e-12)
    if clamped.any():
        warnings.warn("eca penalty log argument clamped", RuntimeWarning)
    arg_safe = np.maximum(arg, 1e-12)
    value = float(-(xi**2) * np.log(arg_safe[mask]).sum())
    dWprime = np.sign(2.0 * sig - 1.0) * 2.0 * sig * (1.0 - sig)
    grad = np.where(
        mask & ~clamped,
        -(xi**2) * (2.0 * Wp - 1.0) / arg_safe * dWprime,
        0.0,
    )
    return value, grad
