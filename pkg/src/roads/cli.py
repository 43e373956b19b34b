"""Command-line front end.

Subcommands: simulate, constrain, align, discover, evaluate, bench.
Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import yaml

from . import io as rio
from .config import (
    GraphConfig,
    PriorConfig,
    RunConfig,
    apply_env_overrides,
    config_from_dict,
    derive_rng,
    load_config,
)
from .errors import ConfigurationError, DataError, RoadsError
from .graphs import Dag, is_acyclic
from .harness import make_instance, resolve_paths, resolve_surrogate, run_cell
from .losses import LossWeights
from .metrics import evaluate_weights, f1_report
from .mgda import NORMALIZATION_MODES, roads_fit
from .priors import SURROGATE_KINDS, align, generate_constraints
from .sem import NOISE_KINDS, SEM_KINDS, SemSpec, VARIANCE_MODES


def _add_cell_flags(p: argparse.ArgumentParser):
    p.add_argument("--graph", choices=("er", "sf"), default="er")
    p.add_argument("--nv", type=int, default=20)
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--sem", choices=SEM_KINDS, default="linear")
    p.add_argument("--noise", choices=NOISE_KINDS, default="gauss")
    p.add_argument("--variance", choices=VARIANCE_MODES, default="ev")
    p.add_argument("--nd", type=int, default=40)
    p.add_argument("--pa", type=float, default=0.3)
    p.add_argument("--pb", type=float, default=0.3)
    p.add_argument("--pc", type=float, default=1.0)
    p.add_argument("--surrogate", choices=("auto",) + SURROGATE_KINDS, default="auto")
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--normalization", choices=NORMALIZATION_MODES, default="loss_plus")
    p.add_argument("--method", choices=("roads", "no_prior", "ntsb", "eca"),
                   default="roads")
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--eta", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("runs"))


def _config_from_flags(args) -> RunConfig:
    from .mgda import MgdaConfig

    cfg = RunConfig(
        graph=GraphConfig(kind=args.graph, n_v=args.nv, k=args.k),
        sem=SemSpec(
            sem_kind=args.sem,
            noise_kind=args.noise,
            variance_mode=args.variance,
            n_d=args.nd,
        ),
        priors=PriorConfig(
            p_a=args.pa, p_b=args.pb, p_c=args.pc,
            surrogate=args.surrogate, tau=args.tau,
        ),
        mgda=MgdaConfig(
            normalization=args.normalization,
            max_iters=args.max_iters,
            eta=args.eta,
        ),
        method=args.method,
        seeds=(args.seed,),
        output_dir=str(args.out),
    )
    return apply_env_overrides(cfg)


def cmd_simulate(args) -> int:
    config = _config_from_flags(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth, W_true, X, _ = make_instance(config, args.seed)
    rio.write_matrix_csv(truth.adjacency, out / f"truth_seed{args.seed}.csv")
    if W_true is not None:
        rio.write_matrix_csv(W_true, out / f"weights_seed{args.seed}.csv")
    rio.write_dataset_csv(X, out / f"data_seed{args.seed}.csv")
    print(f"wrote truth/data for seed {args.seed} to {out}")
    return 0


def cmd_constrain(args) -> int:
    adj = rio.read_matrix_csv(args.truth, dtype=np.int8)
    truth = Dag(adj)
    rng = derive_rng(args.seed, "constrain-cli", 0, "constraints")
    Bc = generate_constraints(truth, args.pa, args.pb, args.pc, rng)
    rio.write_constraints_csv(Bc, args.out_file)
    print(f"wrote {int(np.sum(Bc == 1))} positive / {int(np.sum(Bc == -1))} "
          f"negative constraints to {args.out_file}")
    return 0


def cmd_align(args) -> int:
    X = rio.read_dataset_csv(args.data)
    Bc = rio.read_constraints_csv(args.constraints)
    config = _config_from_flags(args)
    kind = resolve_surrogate(config)
    rng = derive_rng(args.seed, "align-cli", 0, "align")
    prior = align(X, Bc, config.surrogate_config, kind, args.tau, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rio.write_prior(prior, out / "prior.csv", out / "prior.json")
    print(f"aligned {prior.n_constraints} constraints with {kind}; "
          f"wrote {out / 'prior.csv'}")
    return 0


def cmd_discover(args) -> int:
    X = rio.read_dataset_csv(args.data)
    config = _config_from_flags(args)
    Bc = None
    prior = None
    if args.constraints is not None:
        Bc = rio.read_constraints_csv(args.constraints)
        if Bc.shape[0] != X.shape[1]:
            raise DataError("constraint matrix dimension disagrees with data")
    model_kind, loss_kind, knowledge_kind, combine = resolve_paths(config)
    if Bc is not None and np.any(Bc) and knowledge_kind in ("linear", "sigmoid"):
        prior = align(
            X, Bc, config.surrogate_config, resolve_surrogate(config),
            args.tau, derive_rng(args.seed, "discover-cli", 0, "align"),
        )
    from .harness import default_weights

    weights = default_weights(config.sem.sem_kind, config.sem.variance_mode)
    weights = replace(weights, s=args.threshold)
    fit = roads_fit(
        X, Bc, prior,
        model_kind=model_kind, loss_kind=loss_kind, weights=weights,
        cfg=config.mgda, knowledge_kind=knowledge_kind, combine=combine,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rio.write_matrix_csv(fit.weighted_matrix, out / "weights.csv")
    rio.write_trace_csv(fit.trace, out / "trace.csv")
    print(f"wrote weights and trace to {out} (converged={fit.converged})")
    if args.truth is not None:
        truth = rio.read_matrix_csv(args.truth, dtype=np.int8)
        report = evaluate_weights(fit.weighted_matrix, truth, args.threshold)
        (out / "report.json").write_text(report.to_json())
        print(f"F1={report.f1:.3f} SHD={report.shd}")
    return 0


def cmd_evaluate(args) -> int:
    W = rio.read_matrix_csv(args.weights)
    truth = rio.read_matrix_csv(args.truth, dtype=np.int8)
    report = evaluate_weights(W, truth, args.threshold)
    if args.out_file:
        Path(args.out_file).write_text(report.to_json())
    print(report.to_json())
    if not is_acyclic(W, tol=args.threshold):
        print("warning: thresholded graph contains a cycle", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# bench

RESULT_FIELDS = (
    "cell_key", "seed", "method", "graph_kind", "n_v", "k",
    "sem_kind", "noise_kind", "variance_mode", "n_d",
    "p_a", "p_b", "p_c", "surrogate",
    "f1", "precision", "recall", "shd", "converged", "wall_time", "error",
)


def _grid_cells(data: dict) -> list[RunConfig]:
    grid = data.pop("grid", {})
    base = data
    keys = list(grid)
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cell = yaml.safe_load(yaml.safe_dump(base))  # deep copy
        for key, value in zip(keys, combo):
            section, _, fieldname = key.partition(".")
            if not fieldname:
                cell[section] = value
            else:
                cell.setdefault(section, {})[fieldname] = value
        cells.append(apply_env_overrides(config_from_dict(cell)))
    return cells or [apply_env_overrides(config_from_dict(base))]


def _bench_worker(payload):
    config, seed = payload
    row = {
        "cell_key": config.cell_key(),
        "seed": seed,
        "method": config.method,
        "graph_kind": config.graph.kind,
        "n_v": config.graph.n_v,
        "k": config.graph.k,
        "sem_kind": config.sem.sem_kind,
        "noise_kind": config.sem.noise_kind,
        "variance_mode": config.sem.variance_mode,
        "n_d": config.sem.n_d,
        "p_a": config.priors.p_a,
        "p_b": config.priors.p_b,
        "p_c": config.priors.p_c,
        "surrogate": resolve_surrogate(config),
        "error": "",
    }
    try:
        run = run_cell(config, seed)
        row.update(
            f1=run.report.f1,
            precision=run.report.precision,
            recall=run.report.recall,
            shd=run.report.shd,
            converged=run.fit.converged,
            wall_time=run.wall_time,
        )
    except RoadsError as exc:  # partial failure: record, keep going
        row.update(f1="", precision="", recall="", shd="",
                   converged="", wall_time="", error=str(exc))
    return row


def cmd_bench(args) -> int:
    with open(args.grid) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{args.grid}: grid config must be a mapping")
    cells = _grid_cells(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.csv"
    done = set()
    if results_path.exists():
        with open(results_path) as fh:
            for row in csv.DictReader(fh):
                done.add((row["cell_key"], int(row["seed"])))
    jobs = [
        (cell, seed)
        for cell in cells
        for seed in cell.seeds
        if (cell.cell_key(), seed) not in done
    ]
    new_file = not results_path.exists()
    with open(results_path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        if new_file:
            writer.writeheader()
        if args.workers > 1 and jobs:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                for row in pool.map(_bench_worker, jobs):
                    writer.writerow(row)
                    fh.flush()
        else:
            for job in jobs:
                writer.writerow(_bench_worker(job))
                fh.flush()
    _write_summary(results_path, out / "summary.csv")
    print(f"{len(jobs)} new rows; results in {results_path}")
    return 0


def _write_summary(results_path: Path, summary_path: Path) -> None:
    groups: dict = {}
    with open(results_path) as fh:
        for row in csv.DictReader(fh):
            if row["error"]:
                continue
            groups.setdefault(row["cell_key"], {"rows": [], "meta": row})
            groups[row["cell_key"]]["rows"].append(row)
    meta_fields = RESULT_FIELDS[2:14]
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ("cell_key",) + meta_fields
            + ("runs", "f1_mean", "f1_std", "shd_mean", "shd_std")
        )
        for key, group in sorted(groups.items()):
            f1 = np.array([float(r["f1"]) for r in group["rows"]])
            shd_vals = np.array([float(r["shd"]) for r in group["rows"]])
            writer.writerow(
                (key,)
                + tuple(group["meta"][f] for f in meta_fields)
                + (
                    len(f1),
                    f"{f1.mean():.17g}", f"{f1.std():.17g}",
                    f"{shd_vals.mean():.17g}", f"{shd_vals.std():.17g}",
                )
            )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roads",
        description="Robust causal discovery under imperfect structural constraints",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate truth graph, weights and data")
    _add_cell_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("constrain", help="sample imperfect constraints from a truth")
    p.add_argument("truth", type=Path)
    p.add_argument("out_file", type=Path)
    p.add_argument("--pa", type=float, default=0.3)
    p.add_argument("--pb", type=float, default=0.3)
    p.add_argument("--pc", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_constrain)

    p = sub.add_parser("align", help="align constraints against data")
    p.add_argument("data", type=Path)
    p.add_argument("constraints", type=Path)
    _add_cell_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("discover", help="run the full discovery pipeline")
    p.add_argument("data", type=Path)
    p.add_argument("constraints", type=Path, nargs="?", default=None)
    p.add_argument("--truth", type=Path, default=None)
    _add_cell_flags(p)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("evaluate", help="score weights against a truth graph")
    p.add_argument("weights", type=Path)
    p.add_argument("truth", type=Path)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--out-file", type=Path, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="run a benchmark grid")
    p.add_argument("grid", type=Path, help="YAML grid config")
    p.add_argument("--out", type=Path, default=Path("bench"))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RoadsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
