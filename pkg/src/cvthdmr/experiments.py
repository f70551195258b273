"""
End-to-end experiments: the analytic quadrature study and the stochastic
diffusion study.

Each experiment writes a set of CSV reports into the configured output
directory. Timing lives in ``timing.csv`` only, so every other file is
byte-identical between runs with the same configuration. A cell that
raises is kept as a row of NaNs with the error message in ``reason``.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from . import multi_anchor as ma
from .config import ExperimentConfig, write_csv
from .cut_hdmr import predicted_cost
from .parameter_space import sample
from .problems import DiffusionProblem, assemble_diffusion, diffusion_oracle, export_field_csv, quadrature_oracle
from .quadrature import (error_stats_from_responses, integrate_orders, reference_integral,
                         relative_integral_error)

log = logging.getLogger(__name__)

NAN = float("nan")
CELL_ERRORS = (ValueError, RuntimeError, ArithmeticError, np.linalg.LinAlgError)
REPORT_HEADER = ["experiment", "L", "r", "method", "epsilon", "E", "V", "evals", "seconds", "reason"]
# columns holding wall-clock measurements; everything else is reproducible
TIMING_COLUMNS = ("seconds", "seconds_per_item")


class _Timer:
    def __init__(self):
        self.rows = []

    def __call__(self, stage: str, t0: float, n: int = 1):
        dt = time.perf_counter() - t0
        self.rows.append([stage, dt, n, dt / max(n, 1)])
        return dt

    def write(self, path, chash):
        write_csv(path, ["stage", "seconds", "count", "seconds_per_item"], self.rows, chash)


def _prepare(config: ExperimentConfig, out_dir) -> tuple[Path, str]:
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.json")
    return out, config.config_hash()


def _density_label(dens) -> str:
    if dens.kind == "beta":
        return f"beta({dens.alpha:g},{dens.beta:g})"
    return dens.kind


# ---------------------------------------------------------------------------
# quadrature test function


def run_quadrature_experiment(config: ExperimentConfig, out_dir=None) -> dict:
    """Integral errors of single- and multi-anchor expansions of the test function.

    Writes ``quadrature_errors.csv`` (long form), ``quadrature_table.csv``
    (strategies by row, ``density x r`` by column, in units of 1e-1),
    ``quadrature_energies.csv`` (total CVT energy per density and L),
    ``reference.csv``, ``report.csv`` (common layout shared with the
    diffusion study) and ``timing.csv``. Returns the paths.
    """
    out, chash = _prepare(config, out_dir)
    timer = _Timer()
    p, rs = config.p, sorted(set(config.r))
    rmax = max(rs)
    long_rows, energy_rows, ref_rows, report_rows = [], [], [], []

    for dens in config.density_objects():
        label = _density_label(dens)
        oracle = quadrature_oracle(p)
        t0 = time.perf_counter()
        X = sample(dens, p, config.N, config.seeds["samples"])
        timer(f"{label}:sample", t0, config.N)

        t0 = time.perf_counter()
        ref = reference_integral(oracle, dens, p, config.n_reference)
        timer(f"{label}:reference", t0, config.n_reference)
        ref_rows.append([label, float(ref.value[0]), float(ref.first_half[0]), float(ref.second_half[0]),
                         ref.discrepancy, config.n_reference])

        def cell(strategy, L, make, average=False, evals=None):
            # evals: build cost of a model that was made by an earlier cell
            before = oracle.eval_count
            t0 = time.perf_counter()
            try:
                model = make()
                build_evals = oracle.eval_count - before
                orders = np.cumsum(integrate_orders(model, dens, config.n_qmc, average=average, order=rmax), axis=0)
                query_evals = oracle.eval_count - before - build_evals
                if evals is not None:
                    build_evals = evals
                dt = timer(f"{label}:{strategy}:L={L}", t0)
                for r in rs:
                    eps = relative_integral_error(ref.value, orders[r])
                    long_rows.append([label, strategy, L, r, eps, float(orders[r][0]), build_evals, query_evals, ""])
                    report_rows.append([f"quadrature/{label}", L, r, strategy, eps, "", "", build_evals, dt, ""])
                return model
            except CELL_ERRORS as exc:
                log.warning("cell %s %s L=%s failed: %s", label, strategy, L, exc)
                reason = f"{type(exc).__name__}: {exc}"
                for r in rs:
                    long_rows.append([label, strategy, L, r, NAN, NAN, oracle.eval_count - before, 0, reason])
                    report_rows.append([f"quadrature/{label}", L, r, strategy, NAN, "", "",
                                        oracle.eval_count - before, time.perf_counter() - t0, reason])
                return None

        if config.baselines["random_anchor"]:
            lo, hi = dens.box(p)
            source = (lo, hi) if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) else X
            anchor = ma.anchor_random(source, config.seeds["random_anchor"])
            cell("random point", 1, lambda: ma.build_single(oracle, anchor, X, rmax, config.K,
                                                            config.explicit, "random point"))
        if config.baselines["mean_point"]:
            def mean_model():
                anchor, _ = ma.anchor_mean_point(oracle, X)
                return ma.build_single(oracle, anchor, X, rmax, config.K, config.explicit, "mean point")
            cell("mean point", 1, mean_model)
        for L in sorted(set(config.L)):
            model = cell("CVT", L, lambda: ma.build(oracle, X, L, rmax, config.K, config.node_scope,
                                                     config.seeds["cvt"], config.explicit))
            if model is not None:
                part = model.partition
                energy_rows.append([label, L, part.total_energy, part.iterations, part.converged])
                if config.baselines["ave_hdmr"] and L > 1:
                    cell("Ave", L, lambda: model, average=True, evals=model.total_evals)
            else:
                energy_rows.append([label, L, NAN, 0, False])

    paths = {}
    paths["errors"] = write_csv(out / "quadrature_errors.csv",
                                ["density", "strategy", "L", "r", "epsilon", "integral", "build_evals",
                                 "query_evals", "reason"], long_rows, chash)
    paths["table"] = write_csv(out / "quadrature_table.csv", *_wide_table(long_rows, rs), chash)
    paths["energies"] = write_csv(out / "quadrature_energies.csv",
                                  ["density", "L", "total_energy", "iterations", "converged"], energy_rows, chash)
    paths["reference"] = write_csv(out / "reference.csv",
                                   ["density", "value", "first_half", "second_half", "discrepancy", "points"],
                                   ref_rows, chash)
    paths["report"] = write_csv(out / "report.csv", REPORT_HEADER, report_rows, chash)
    timer.write(out / "timing.csv", chash)
    paths["timing"] = out / "timing.csv"
    return paths


def _wide_table(long_rows, rs):
    """Strategies as rows, (density, r) as columns, epsilon in units of 1e-1."""
    densities = list(dict.fromkeys(r[0] for r in long_rows))
    keys = list(dict.fromkeys((r[1], r[2]) for r in long_rows))
    val = {(r[0], r[1], r[2], r[3]): r[4] for r in long_rows}
    evals = {(r[0], r[1], r[2]): r[6] for r in long_rows}
    header = ["strategy", "L"] + [f"{d} r={r}" for d in densities for r in rs] + [f"{d} evals" for d in densities]
    rows = []
    for strategy, L in keys:
        cells = [val.get((d, strategy, L, r), NAN) * 10.0 for d in densities for r in rs]
        cost = [evals.get((d, strategy, L), 0) for d in densities]
        rows.append([strategy, L if strategy in ("CVT", "Ave") else "-", *cells, *cost])
    return header, rows


# ---------------------------------------------------------------------------
# stochastic diffusion


def run_diffusion_experiment(config: ExperimentConfig, out_dir=None, problem: DiffusionProblem | None = None) -> dict:
    """Error estimates of cut-HDMR surrogates of the diffusion solver.

    Reports (all CSV): ``diffusion_energies`` (total CVT energy per L),
    ``diffusion_costs`` (solver calls spent building each model),
    ``diffusion_per_anchor`` (every CVT anchor's expansion used alone),
    ``diffusion_models`` (CVT dispatch, averaging, mean point, random point,
    cluster-box nodes), ``report`` (all model rows in the common
    ``experiment,L,r,method,...`` layout) and ``timing``. Field snapshots for the anchors and
    one test realization go to ``fields/``.
    """
    out, chash = _prepare(config, out_dir)
    timer = _Timer()
    p = config.p
    dens = config.density_objects()[0]
    if problem is None:
        t0 = time.perf_counter()
        problem = DiffusionProblem.create(n=config.grid, p=p)
        timer("kl_decompose", t0)
    (out / "problem.json").write_text(json.dumps(problem.metadata(), indent=2, sort_keys=True) + "\n")
    oracle = diffusion_oracle(problem)

    X = sample(dens, p, config.N, config.seeds["samples"])
    test = sample(dens, p, config.n_test, config.seeds["test"])
    t0 = time.perf_counter()
    U = oracle(test.points)
    solve_time = timer("solve:test_set", t0, config.n_test) / config.n_test

    energy_rows, cost_rows, anchor_rows, model_rows, report_rows = [], [], [], [], []
    fields = out / "fields"
    fields.mkdir(exist_ok=True)
    export_field_csv(fields / "test0_solution.csv", U[0], problem.n)
    export_field_csv(fields / "test0_coefficient.csv", assemble_diffusion(problem, test.points[0]), problem.n)

    def _method(method, scope):
        return method if scope == "global" else f"{method} ({scope} box)"

    def fail_row(method, r, L, scope, exc, evals, seconds):
        log.warning("cell %s r=%s L=%s failed: %s", method, r, L, exc)
        reason = f"{type(exc).__name__}: {exc}"
        model_rows.append([method, r, L, scope, NAN, NAN, 0, 0, evals, reason])
        report_rows.append(["diffusion", L, r, _method(method, scope), "", NAN, NAN, evals, seconds, reason])

    def stats_row(method, r, L, scope, pred, evals, seconds):
        rep = error_stats_from_responses(U, pred, method)
        model_rows.append([method, r, L, scope, rep.E, rep.V, rep.n_samples, rep.excluded, evals, ""])
        report_rows.append(["diffusion", L, r, _method(method, scope), "", rep.E, rep.V, evals, seconds, ""])

    x_responses = None

    def mean_point_anchor():
        nonlocal x_responses
        if x_responses is None:
            x_responses = oracle(X.points)
        return ma.anchor_mean_point(None, X, x_responses)[0]

    predict_time = None
    for r in sorted(set(config.r)):
        for L in sorted(set(config.L)):
            before = oracle.eval_count
            t0 = time.perf_counter()
            try:
                model = ma.build(oracle, X, L, r, config.K, "global", config.seeds["cvt"])
            except CELL_ERRORS as exc:
                energy_rows.append([r, L, NAN, 0, False])
                cost_rows.append([r, L, oracle.eval_count - before, predicted_cost(p, r, config.K, L), NAN])
                fail_row("CVT", r, L, "global", exc, oracle.eval_count - before, time.perf_counter() - t0)
                continue
            build_time = timer(f"build:r={r}:L={L}:global", t0, oracle.eval_count - before)
            spent = oracle.eval_count - before
            part = model.partition
            energy_rows.append([r, L, part.total_energy, part.iterations, part.converged])
            cost_rows.append([r, L, spent, predicted_cost(p, r, config.K, L), spent / L])
            for l, e in enumerate(model.expansions):
                export_field_csv(fields / f"anchor_L{L}_{l + 1}_coefficient.csv",
                                 assemble_diffusion(problem, e.anchor), problem.n)

            # one pass over the expansions gives the per-anchor, dispatch and average predictions
            lab = model.dispatch(test.points)
            cvt_pred = np.empty_like(U)
            ave_pred = np.zeros_like(U)
            t0 = time.perf_counter()
            for l, e in enumerate(model.expansions):
                P = e.evaluate(test.points)
                rep = error_stats_from_responses(U, P)
                anchor_rows.append([r, L, l + 1, *e.anchor, rep.E, rep.V, rep.excluded, e.build_evals])
                cvt_pred[lab == l] = P[lab == l]
                ave_pred += P
            timer(f"predict_all:r={r}:L={L}", t0, config.n_test * L)
            ave_pred /= L
            stats_row("CVT", r, L, "global", cvt_pred, spent, build_time)
            if config.baselines["ave_hdmr"] and L > 1:
                stats_row("Ave", r, L, "global", ave_pred, spent, build_time)

            t0 = time.perf_counter()
            model.predict(test.points)
            predict_time = timer(f"predict:r={r}:L={L}", t0, config.n_test) / config.n_test

            if config.cluster_box and L > 1:
                before = oracle.eval_count
                t0 = time.perf_counter()
                try:
                    cm = ma.build(oracle, X, L, r, config.K, "cluster", config.seeds["cvt"])
                    dt = timer(f"build:r={r}:L={L}:cluster", t0, oracle.eval_count - before)
                    stats_row("CVT", r, L, "cluster", cm.predict(test.points), oracle.eval_count - before, dt)
                except CELL_ERRORS as exc:
                    fail_row("CVT", r, L, "cluster", exc, oracle.eval_count - before, time.perf_counter() - t0)

        if config.baselines["mean_point"]:
            before = oracle.eval_count
            t0 = time.perf_counter()
            try:
                sm = ma.build_single(oracle, mean_point_anchor(), X, r, config.K, label="mean point")
                dt = timer(f"build:r={r}:mean_point", t0, oracle.eval_count - before)
                stats_row("mean point", r, 1, "global", sm.predict(test.points), oracle.eval_count - before, dt)
            except CELL_ERRORS as exc:
                fail_row("mean point", r, 1, "global", exc, oracle.eval_count - before, time.perf_counter() - t0)
        if config.baselines["random_anchor"]:
            before = oracle.eval_count
            t0 = time.perf_counter()
            try:
                anchor = ma.anchor_random(X, config.seeds["random_anchor"])
                sm = ma.build_single(oracle, anchor, X, r, config.K, label="random point")
                dt = timer(f"build:r={r}:random_point", t0, oracle.eval_count - before)
                stats_row("random point", r, 1, "global", sm.predict(test.points), oracle.eval_count - before, dt)
            except CELL_ERRORS as exc:
                fail_row("random point", r, 1, "global", exc, oracle.eval_count - before, time.perf_counter() - t0)

    if predict_time:
        timer.rows.append(["speedup_solve_over_predict", solve_time / predict_time, 1, solve_time / predict_time])
    paths = {
        "energies": write_csv(out / "diffusion_energies.csv", ["r", "L", "total_energy", "iterations", "converged"],
                              energy_rows, chash),
        "costs": write_csv(out / "diffusion_costs.csv", ["r", "L", "S_T", "predicted", "per_anchor"],
                           cost_rows, chash),
        "per_anchor": write_csv(out / "diffusion_per_anchor.csv",
                                ["r", "L", "anchor", *(f"xi{i + 1}" for i in range(p)), "E", "V", "excluded",
                                 "build_evals"], anchor_rows, chash),
        "models": write_csv(out / "diffusion_models.csv",
                            ["method", "r", "L", "node_scope", "E", "V", "n_samples", "excluded", "build_evals",
                             "reason"], model_rows, chash),
        "report": write_csv(out / "report.csv", REPORT_HEADER, report_rows, chash),
    }
    timer.write(out / "timing.csv", chash)
    paths["timing"] = out / "timing.csv"
    return paths


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict:
    if config.kind == "diffusion":
        return run_diffusion_experiment(config, out_dir)
    return run_quadrature_experiment(config, out_dir)
