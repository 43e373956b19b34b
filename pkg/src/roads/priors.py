"""Imperfect structural constraints and their data-driven alignment.

A constraint matrix holds entries in {-1, 0, 1}: positive constraint
(edge asserted), negative constraint (edge denied), no constraint.
Alignment converts every constrained entry of a column into a candidate
parent, fits a surrogate regressor of that column on the candidates, and
records a nonnegative credibility weight per candidate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.preprocessing import PolynomialFeatures
from sklearn.tree import DecisionTreeRegressor

from .errors import ConfigurationError, DataError
from .graphs import Dag, round_half_up

SURROGATE_KINDS = ("ols", "ols_univariate", "lasso", "polynomial", "random_forest")


@dataclass(frozen=True)
class SurrogateConfig:
    lasso_penalty: float = 0.01
    poly_degree: int = 3
    forest_trees: int = 100
    forest_permutations: int = 10
    min_leaf: int = 5

    def __post_init__(self):
        if self.lasso_penalty < 0:
            raise ConfigurationError("lasso penalty must be >= 0")
        for name in ("poly_degree", "forest_trees", "forest_permutations", "min_leaf"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")


@dataclass(frozen=True)
class AlignedPrior:
    """Credibility weights on constrained entries.

    ``weights`` is nonnegative with support inside ``mask`` (the nonzero
    pattern of the constraint matrix). For ols/lasso surrogates the raw
    signed regression coefficients are kept in ``signed``; the linear-path
    knowledge loss needs them.
    """

    weights: np.ndarray
    mask: np.ndarray
    tau: float
    surrogate_kind: str
    signed: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.mask, dtype=bool)
        if np.any(w < 0):
            raise DataError("credibility weights must be nonnegative")
        if np.any(w[~m] != 0):
            raise DataError("weights outside the constraint support")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mask", m)

    @property
    def n_constraints(self) -> int:
        return int(self.mask.sum())


def validate_constraints(Bc: np.ndarray) -> np.ndarray:
    Bc = np.asarray(Bc)
    if Bc.ndim != 2 or Bc.shape[0] != Bc.shape[1]:
        raise DataError("constraint matrix must be square")
    if not np.isin(Bc, (-1, 0, 1)).all():
        raise DataError("constraint entries must be in {-1, 0, 1}")
    if np.any(np.diag(Bc) != 0):
        raise DataError("constraint matrix must have zero diagonal")
    return Bc.astype(np.int8)


def generate_constraints(
    truth: Dag,
    p_a: float,
    p_b: float,
    p_c: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample imperfect constraints from the ground truth.

    round(p_a * |E|) true edges become positive constraints and
    round(p_c * p_a * |E|) off-diagonal non-edges become negative ones;
    a fraction p_b of each set (independently, rounded half-up) is then
    flipped to simulate imperfect knowledge.
    """
    if not (0 <= p_a <= 1 and 0 <= p_b <= 1):
        raise ConfigurationError("p_a and p_b must lie in [0, 1]")
    if p_c < 0:
        raise ConfigurationError("p_c must be >= 0")
    edges = truth.edges()
    n_pos = round_half_up(p_a * len(edges))
    n_neg = round_half_up(p_c * p_a * len(edges))
    n = truth.n_v
    non_edges = [
        (i, j)
        for i in range(n)
        for j in range(n)
        if i != j and truth.adjacency[i, j] == 0
    ]
    if n_neg > len(non_edges):
        raise ConfigurationError(
            f"negative-constraint budget {n_neg} exceeds {len(non_edges)} non-edges"
        )
    Bc = np.zeros((n, n), dtype=np.int8)
    pos = [edges[i] for i in rng.choice(len(edges), size=n_pos, replace=False)]
    neg = [non_edges[i] for i in rng.choice(len(non_edges), size=n_neg, replace=False)]
    for i, j in pos:
        Bc[i, j] = 1
    for i, j in neg:
        Bc[i, j] = -1
    for entries in (pos, neg):
        n_flip = round_half_up(p_b * len(entries))
        if n_flip:
            for idx in rng.choice(len(entries), size=n_flip, replace=False):
                i, j = entries[idx]
                Bc[i, j] = -Bc[i, j]
    return Bc


def candidate_parents(Bc: np.ndarray, j: int) -> list[int]:
    """All constrained entries of column j, negative constraints included."""
    Bc = validate_constraints(Bc)
    return np.nonzero(Bc[:, j])[0].tolist()


def fit_ols(Xp: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least squares via normal equations; ridge fallback on singular Gram.

    The fallback adds lambda = 1e-8 * trace(Xp'Xp) / p to the diagonal, so
    duplicated columns still yield finite coefficients.
    """
    Xp = np.atleast_2d(np.asarray(Xp, dtype=float))
    y = np.asarray(y, dtype=float)
    G = Xp.T @ Xp
    b = Xp.T @ y
    try:
        L = np.linalg.cholesky(G)
        coef = np.linalg.solve(L.T, np.linalg.solve(L, b))
    except np.linalg.LinAlgError:
        p = G.shape[0]
        lam = 1e-8 * np.trace(G) / p
        coef = np.linalg.solve(G + lam * np.eye(p), b)
    return coef


def fit_lasso(
    Xp: np.ndarray,
    y: np.ndarray,
    penalty: float,
    tol: float = 1e-6,
    max_sweeps: int = 10_000,
):
    """Coordinate descent with soft-thresholding.

    Features are rescaled to unit mean square (no centering, so penalty=0
    reproduces fit_ols); the objective is
    (1/2n)||y - Xb||^2 + penalty * ||b||_1 on the rescaled design.
    Returns (coefficients on the original scale, converged flag).
    """
    if penalty < 0:
        raise ConfigurationError("penalty must be >= 0")
    Xp = np.atleast_2d(np.asarray(Xp, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = Xp.shape
    scale = np.sqrt((Xp**2).mean(axis=0))
    scale[scale == 0] = 1.0
    Xs = Xp / scale
    beta = np.zeros(p)
    resid = y.copy()
    converged = False
    for _ in range(max_sweeps):
        max_change = 0.0
        for i in range(p):
            old = beta[i]
            rho = (Xs[:, i] @ resid) / n + old  # columns have unit mean square
            new = np.sign(rho) * max(abs(rho) - penalty, 0.0)
            if new != old:
                resid -= (new - old) * Xs[:, i]
                beta[i] = new
                max_change = max(max_change, abs(new - old))
        if max_change < tol:
            converged = True
            break
    return beta / scale, converged


@dataclass
class RandomForestModel:
    """Bagged CART regression trees with tracked out-of-bag rows."""

    trees: list
    bootstrap_indices: list
    n_rows: int

    def oob_predictions(self, Xp: np.ndarray):
        """Mean prediction over trees for which each row is out-of-bag.

        Returns (predictions, valid row mask); rows in every bootstrap
        sample have no OOB prediction.
        """
        n = Xp.shape[0]
        total = np.zeros(n)
        count = np.zeros(n)
        for tree, idx in zip(self.trees, self.bootstrap_indices):
            oob = np.ones(n, dtype=bool)
            oob[idx] = False
            if oob.any():
                total[oob] += tree.predict(Xp[oob])
                count[oob] += 1
        valid = count > 0
        pred = np.zeros(n)
        pred[valid] = total[valid] / count[valid]
        return pred, valid


def fit_random_forest(
    Xp: np.ndarray,
    y: np.ndarray,
    config: SurrogateConfig,
    rng: np.random.Generator,
) -> RandomForestModel:
    Xp = np.atleast_2d(np.asarray(Xp, dtype=float))
    y = np.asarray(y, dtype=float)
    n = Xp.shape[0]
    if n < 2 * config.min_leaf:
        raise DataError("too few rows for the requested leaf size")
    trees = []
    samples = []
    for _ in range(config.forest_trees):
        idx = rng.integers(0, n, size=n)
        tree = DecisionTreeRegressor(
            max_features="sqrt",
            min_samples_leaf=config.min_leaf,
            random_state=int(rng.integers(0, 2**31 - 1)),
        )
        tree.fit(Xp[idx], y[idx])
        trees.append(tree)
        samples.append(idx)
    return RandomForestModel(trees, samples, n)


def permutation_importance(
    model: RandomForestModel,
    Xp: np.ndarray,
    y: np.ndarray,
    config: SurrogateConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mean OOB MSE increase per shuffled feature, clamped at zero."""
    Xp = np.atleast_2d(np.asarray(Xp, dtype=float))
    y = np.asarray(y, dtype=float)
    if np.all(y == y[0]):
        return np.zeros(Xp.shape[1])
    pred, valid = model.oob_predictions(Xp)
    baseline = float(np.mean((y[valid] - pred[valid]) ** 2))
    importances = np.zeros(Xp.shape[1])
    for feat in range(Xp.shape[1]):
        gaps = []
        for _ in range(config.forest_permutations):
            Xs = Xp.copy()
            Xs[:, feat] = rng.permutation(Xs[:, feat])
            pred_s, valid_s = model.oob_predictions(Xs)
            mse = float(np.mean((y[valid_s] - pred_s[valid_s]) ** 2))
            gaps.append(mse - baseline)
        importances[feat] = max(float(np.mean(gaps)), 0.0)
    return importances


def _polynomial_importance(Xp, y, config):
    poly = PolynomialFeatures(degree=config.poly_degree, include_bias=False)
    Z = poly.fit_transform(Xp)
    coef = fit_ols(Z, y)
    powers = poly.powers_  # (n_features_out, p)
    imp = np.zeros(Xp.shape[1])
    for c, pw in zip(coef, powers):
        for var in np.nonzero(pw)[0]:
            imp[var] += abs(c)
    return imp


def align(
    data: np.ndarray,
    Bc: np.ndarray,
    config: SurrogateConfig,
    kind: str,
    tau: float,
    rng: np.random.Generator,
) -> AlignedPrior:
    """Fit the chosen surrogate column-wise and collect credibility weights."""
    if kind not in SURROGATE_KINDS:
        raise ConfigurationError(f"unknown surrogate kind {kind!r}")
    X = np.asarray(data, dtype=float)
    Bc = validate_constraints(Bc)
    n_v = Bc.shape[0]
    if X.shape[1] != n_v:
        raise DataError("data and constraint dimensions disagree")
    weights = np.zeros((n_v, n_v))
    signed = np.zeros((n_v, n_v)) if kind in ("ols", "ols_univariate", "lasso") else None
    for j in range(n_v):
        cand = candidate_parents(Bc, j)
        if not cand:
            continue
        Xp = X[:, cand]
        y = X[:, j]
        if kind == "ols":
            coef = fit_ols(Xp, y)
        elif kind == "ols_univariate":
            # per-edge closed form (x_i' x_i)^{-1} x_i' x_j
            coef = np.array([fit_ols(X[:, [i]], y)[0] for i in cand])
        elif kind == "lasso":
            coef, _ = fit_lasso(Xp, y, config.lasso_penalty)
        elif kind == "polynomial":
            coef = _polynomial_importance(Xp, y, config)
        else:
            model = fit_random_forest(Xp, y, config, rng)
            coef = permutation_importance(model, Xp, y, config, rng)
        if signed is not None:
            signed[cand, j] = coef
        weights[cand, j] = np.abs(coef)
    return AlignedPrior(
        weights=weights,
        mask=Bc != 0,
        tau=tau,
        surrogate_kind=kind,
        signed=signed,
    )
