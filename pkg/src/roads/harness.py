"""Seeded end-to-end experiment pipeline shared by the CLI and the bench.

One cell = one RunConfig; one run = (cell, seed). Every stage draws from
its own derived generator so results do not depend on execution order.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig, derive_rng
from .graphs import Dag, generate_er, generate_sf
from .losses import LossWeights
from .metrics import EvalReport, evaluate_weights
from .mgda import FitResult, roads_fit
from .priors import AlignedPrior, align, generate_constraints
from .sem import simulate


def default_weights(sem_kind: str, variance_mode: str) -> LossWeights:
    # sparsity 0.2 for linear EV, 0.1 for linear NV and nonlinear;
    # lambda2 = 5 matches the fixed soft-acyclicity weight of the
    # linear likelihood path, 1.0 feeds the ALM-managed path
    if sem_kind == "linear":
        lambda1 = 0.2 if variance_mode == "ev" else 0.1
        return LossWeights(lambda1=lambda1, lambda2=5.0)
    return LossWeights(lambda1=0.1, lambda2=1.0)


def resolve_surrogate(config: RunConfig) -> str:
    if config.priors.surrogate != "auto":
        return config.priors.surrogate
    return "ols" if config.sem.sem_kind == "linear" else "random_forest"


def resolve_paths(config: RunConfig):
    """(model_kind, loss_kind, knowledge_kind, combine) for config.method."""
    if config.sem.sem_kind == "linear":
        model_kind = "linear"
        loss_kind = "golem_ev" if config.sem.variance_mode == "ev" else "golem_nv"
        aligned_kind = "linear"
    else:
        model_kind = "mlp"
        loss_kind = "ls"
        aligned_kind = "sigmoid"
    table = {
        "roads": (aligned_kind, "mgda"),
        "no_prior": ("none", "mgda"),
        "ntsb": ("ntsb", "sum"),
        "eca": ("eca", "sum"),
    }
    knowledge_kind, combine = table[config.method]
    return model_kind, loss_kind, knowledge_kind, combine


@dataclass
class RunArtifacts:
    truth: Dag
    true_weights: np.ndarray | None
    data: np.ndarray
    constraints: np.ndarray
    prior: AlignedPrior | None
    fit: FitResult
    report: EvalReport
    wall_time: float
    seed: int


def make_instance(config: RunConfig, seed: int):
    """Graph, data and constraints for one (cell, seed)."""
    key = config.instance_key()
    graph_rng = derive_rng(seed, key, 0, "graph")
    if config.graph.kind == "er":
        truth = generate_er(config.graph.n_v, config.graph.k, graph_rng)
    else:
        truth = generate_sf(config.graph.n_v, int(config.graph.k), graph_rng)
    X, W_true = simulate(config.sem, truth, derive_rng(seed, key, 0, "sem"))
    Bc = generate_constraints(
        truth,
        config.priors.p_a,
        config.priors.p_b,
        config.priors.p_c,
        derive_rng(seed, key, 0, "constraints"),
    )
    return truth, W_true, X, Bc


def run_cell(config: RunConfig, seed: int, debug_checks: bool = False) -> RunArtifacts:
    started = time.perf_counter()
    key = config.instance_key()
    truth, W_true, X, Bc = make_instance(config, seed)
    model_kind, loss_kind, knowledge_kind, combine = resolve_paths(config)
    prior = None
    if knowledge_kind in ("linear", "sigmoid") and np.any(Bc):
        prior = align(
            X,
            Bc,
            config.surrogate_config,
            resolve_surrogate(config),
            config.priors.tau,
            derive_rng(seed, key, 0, "align"),
        )
    weights = config.weights or default_weights(
        config.sem.sem_kind, config.sem.variance_mode
    )
    mgda_cfg = replace(config.mgda, seed=seed)
    fit = roads_fit(
        X,
        Bc,
        prior,
        model_kind=model_kind,
        loss_kind=loss_kind,
        weights=weights,
        alm=config.alm,
        cfg=mgda_cfg,
        knowledge_kind=knowledge_kind,
        combine=combine,
        debug_checks=debug_checks,
    )
    report = evaluate_weights(fit.weighted_matrix, truth.adjacency, weights.s)
    return RunArtifacts(
        truth=truth,
        true_weights=W_true,
        data=X,
        constraints=Bc,
        prior=prior,
        fit=fit,
        report=report,
        wall_time=time.perf_counter() - started,
        seed=seed,
    )
