"""Subcommand implementations behind main.py.

Each command reads its section of the experiment config, runs the pipeline,
writes JSON / text / CSV artifacts through the ReportManager and returns the
overall verdict.
"""

import math
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from src.config import ExperimentConfig
from src.console import visualizer
from src.cumulant.grid import UniformGrid
from src.cumulant.oracle import export_oracle_table, laplace_consistency
from src.cumulant.rk4 import ODEConfig
from src.cumulant.solvers import solve_cb_cumulant, solve_nonlocal_cumulant, solve_pgf_ode
from src.exceptions import BranchFlowError, ConfigError
from src.experiment.audit import (
    MOMENT_SE,
    distribution_tests,
    increment_audit,
    moment_audit,
    stability_audit,
)
from src.experiment.convergence import convergence_experiment, initial_staircase
from src.experiment.functions import TestFunction, functions_from_specs
from src.experiment.replicas import ReplicaRunner, ReplicaTask
from src.flow.codec import export_trajectories, read_path, verify_path, write_path
from src.flow.rescale import pairing_check
from src.flow.state import LevelGrid
from src.logger import logger
from src.mechanism.catalog import family_from_settings
from src.mechanism.condition import bounded_killing_check, check_condition_5A
from src.mechanism.discrete import DiscreteFlowFamily, build_discrete_family
from src.mechanism.offspring import OffspringLaw
from src.mechanism.validation import check_mechanism_family
from src.schema import SubCommand, Verdict, all_pass
from src.utils.report_manager import ReportManager


HALVING_TOL = 1e-7
SEMIGROUP_TOL = 1e-6


class CommandResult(BaseModel):
    command: SubCommand
    verdict: Verdict
    files: List[str] = Field(default_factory=list)


def _section(cfg: ExperimentConfig, name: str):
    section = getattr(cfg, name)
    if section is None:
        raise ConfigError(f"config has no [{name}] section")
    return section


def _reports(cfg: ExperimentConfig) -> ReportManager:
    return ReportManager(cfg.run.output_dir, cfg.config_hash(), cfg.run.master_seed)


def _runner(cfg: ExperimentConfig) -> ReplicaRunner:
    return ReplicaRunner(workers=cfg.worker_count)


def _times(t_list: Sequence[float], horizon: float, extra: Sequence[float] = ()) -> tuple:
    return tuple(sorted({0.0, float(horizon), *map(float, t_list), *map(float, extra)}))


def _finish(command: SubCommand, verdict: Verdict, reports: ReportManager) -> CommandResult:
    visualizer.show_verdict(verdict, reports.written)
    return CommandResult(command=command, verdict=verdict, files=[str(p) for p in reports.written])


async def cmd_mech(cfg: ExperimentConfig) -> CommandResult:
    """Build the discrete families for each k and check their convergence
    to the target mechanisms."""
    settings = _section(cfg, "mech")
    if not settings.k_list:
        raise ConfigError("[mech] k_list must not be empty")
    family = family_from_settings(cfg.family)
    reports = _reports(cfg)
    visualizer.show_header("mech", family.name, reports.config_hash, cfg.run.master_seed)

    check = check_mechanism_family(family)
    condition = check_condition_5A(family, settings.k_list, settings.grid_bound, settings.n_grid)
    killing = bounded_killing_check(family, settings.k_list)
    laplace = laplace_consistency(
        family, settings.k_list, settings.oracle_t, settings.oracle_lambda, ode=ODEConfig.from_settings(cfg.solver)
    )

    visualizer.show_table("condition check", condition.records())
    visualizer.show_table("laplace consistency", laplace.records())
    visualizer.show_table(
        "recipe",
        [{"k": r.k, "sigma_k": r.sigma_k, "truncation_tail": r.truncation_tail, "mean_bias": r.mean_bias} for r in condition.rows],
    )
    verdict = all_pass([condition.verdict, laplace.verdict, Verdict.of(check.ok)])
    payload = {
        "family": family.name,
        "mechanism_check": check.model_dump(mode="json"),
        "condition": condition.model_dump(mode="json"),
        "killing": killing.model_dump(mode="json"),
        "laplace": laplace.model_dump(mode="json"),
        "verdict": verdict.value,
    }
    reports.save_json(SubCommand.MECH.value, family.name, payload)
    reports.save_text(
        SubCommand.MECH.value,
        family.name,
        f"mechanism check: {family.name}  verdict {verdict.value}",
        {
            "condition": condition.records(),
            "ratios": [{"pair": i, "ratio": r} for i, r in enumerate(condition.ratios)],
            "killing": [{"k": k, "sigma_k_b0": v} for k, v in zip(killing.k_list, killing.values)],
            "laplace": laplace.records(),
        },
    )
    return _finish(SubCommand.MECH, verdict, reports)


def _extinction_row(fraction: float, replicas: int, law: OffspringLaw, sigma: float, t: float, x0: int) -> dict:
    predicted = solve_pgf_ode(law, sigma, t, 0.0) ** x0
    se = math.sqrt(max(fraction * (1 - fraction), 0.0) / replicas)
    gap = abs(fraction - predicted)
    ok = gap <= MOMENT_SE * se + 1.0 / replicas
    return {"t": t, "extinct": fraction, "predicted": predicted, "std_error": se, "pass": Verdict.of(ok).value}


async def cmd_simulate(cfg: ExperimentConfig) -> CommandResult:
    """Single-level replicas: moment audit, extinction probability, the
    branching property and L1 stability on a shared driving measure."""
    s = _section(cfg, "simulate")
    law = OffspringLaw.from_probs(s.probs)
    replicas = cfg.replicas_for(s)
    reports = _reports(cfg)
    runner = _runner(cfg)
    label = f"x0={s.x0}"
    visualizer.show_header("simulate", label, reports.config_hash, cfg.run.master_seed)
    times = _times(s.t_list, s.horizon)

    def single(x0: int, stream: int, keep: int = 0) -> ReplicaTask:
        return ReplicaTask(
            kind="single",
            law=law,
            sigma=s.sigma,
            x0=(x0,),
            horizon=s.horizon,
            times=times,
            master_seed=cfg.run.master_seed,
            stream=stream,
            max_events=cfg.run.max_events,
            keep_paths=keep,
        )

    main = await runner.run(single(s.x0, 0, s.write_paths), replicas)
    moments = moment_audit(main, 0, s.t_list, law, s.sigma)
    extinction = _extinction_row(main.extinct_fraction(s.horizon), replicas, law, s.sigma, s.horizon, s.x0)

    one = await runner.run(single(1, 1), replicas)
    two = await runner.run(single(2, 2), replicas)
    branching = distribution_tests(two, one, s.s_points, s.horizon, mode="square")

    pair = (s.x0, s.x0 + max(1, s.x0))
    stability_task = ReplicaTask(
        kind="flow",
        fam=DiscreteFlowFamily.constant(law, s.sigma),
        grid=LevelGrid.of([0.5, 1.0]),
        x0=pair,
        horizon=s.horizon,
        times=times,
        master_seed=cfg.run.master_seed,
        stream=3,
        max_events=cfg.run.max_events,
    )
    stability = stability_audit(await runner.run(stability_task, replicas), s.t_list, law, s.sigma)

    for path in main.paths:
        write_path(path, reports.directory("paths") / f"single_{label}_{path.seed.replica_index}_{reports.config_hash[:12]}.path")

    visualizer.show_table("moments", moments.records())
    visualizer.show_table("extinction", [extinction])
    visualizer.show_table("branching property", branching.records())
    verdict = all_pass([moments.verdict, Verdict(extinction["pass"]), branching.verdict, stability.verdict])
    payload = {
        "law": law.to_list(),
        "sigma": s.sigma,
        "x0": s.x0,
        "summary": main.summary(),
        "moments": moments.model_dump(mode="json"),
        "extinction": extinction,
        "branching": branching.model_dump(mode="json"),
        "stability": stability.model_dump(mode="json"),
        "verdict": verdict.value,
    }
    reports.save_json(SubCommand.SIMULATE.value, label, payload)
    reports.save_text(
        SubCommand.SIMULATE.value,
        label,
        f"single-level simulation {label}  verdict {verdict.value}",
        {
            "moments": moments.records(),
            "extinction": [extinction],
            "branching": branching.records(),
            "stability": [row.model_dump(mode="json") for row in stability.rows],
        },
    )
    return _finish(SubCommand.SIMULATE, verdict, reports)


async def cmd_flow(cfg: ExperimentConfig) -> CommandResult:
    """Coupled flow of the discretised family: level order, per-level
    moments, the marginal law at one level and level increments."""
    s = _section(cfg, "flow")
    family = family_from_settings(cfg.family)
    grid = LevelGrid.of(s.levels)
    fam, sigma_k = build_discrete_family(family, s.k, extra_thetas=[s.k * q for q in s.levels])
    x0 = initial_staircase(s.y0, s.k)
    replicas = cfg.replicas_for(s)
    reports = _reports(cfg)
    runner = _runner(cfg)
    label = f"{family.name}_k={s.k}"
    visualizer.show_header("flow", label, reports.config_hash, cfg.run.master_seed)
    times = _times(s.t_list, s.horizon, s.trajectory_times)

    task = ReplicaTask(
        kind="flow",
        fam=fam,
        grid=grid,
        kappa=float(s.k),
        x0=x0,
        horizon=s.horizon,
        times=times,
        scale=s.k,
        master_seed=cfg.run.master_seed,
        stream=0,
        max_events=cfg.run.max_events,
        keep_paths=max(s.write_paths, 1),
    )
    flows = await runner.run(task, replicas)
    violations = int(np.sum(np.diff(flows.counts, axis=-1) < 0))

    level_audits = []
    for j, q in enumerate(grid.levels):
        level_audits.append(moment_audit(flows, j, s.t_list, fam.law_at(s.k * q), sigma_k))

    j = flows.level_index(s.marginal_level)
    marginal_law = fam.law_at(s.k * grid.levels[j])
    single_task = ReplicaTask(
        kind="single",
        law=marginal_law,
        sigma=sigma_k,
        x0=(x0[j],),
        horizon=s.horizon,
        times=times,
        master_seed=cfg.run.master_seed,
        stream=1,
        max_events=cfg.run.max_events,
    )
    singles = await runner.run(single_task, replicas)
    marginal = distribution_tests(flows, singles, s.s_points, s.horizon, level_a=j, level_b=0)
    increments = increment_audit(flows, s.horizon) if grid.n >= 3 else None
    # the by-parts form of ⟨Y_t, f⟩ needs q_n = 1
    pairing = pairing_check(flows.paths[0], s.k, s.t_list) if grid.ends_at_one else []

    attempts = int(np.sum(flows.events) + np.sum(flows.no_ops))
    acceptance = {
        "accepted": int(np.sum(flows.events)),
        "no_ops": int(np.sum(flows.no_ops)),
        "acceptance_rate": float(np.sum(flows.events) / attempts) if attempts else 1.0,
        "monotonicity_violations": violations,
    }
    for path in flows.paths[: s.write_paths]:
        write_path(path, reports.directory("paths") / f"flow_{label}_{path.seed.replica_index}_{reports.config_hash[:12]}.path")
    if s.trajectory_times:
        trajectories = export_trajectories(
            flows.paths, s.trajectory_times, reports.report_path(SubCommand.FLOW.value, f"{label}_trajectories", "csv"), k=s.k
        )
        reports.register(SubCommand.FLOW.value, f"{label}_trajectories", trajectories)

    verdicts = [a.verdict for a in level_audits] + [marginal.verdict, Verdict.of(violations == 0)]
    verdicts += [row["pass"] for row in pairing]
    if increments is not None:
        verdicts.append(increments.verdict)
    verdict = all_pass(verdicts)
    visualizer.show_table("acceptance", [acceptance])
    visualizer.show_table("marginal law", marginal.records())
    if pairing:
        visualizer.show_table("measure pairing", pairing)
    for audit in level_audits:
        visualizer.show_table(f"moments at level {grid.levels[audit.level]:g}", audit.records())

    payload = {
        "family": family.name,
        "k": s.k,
        "sigma_k": sigma_k,
        "levels": list(grid.levels),
        "x0": list(x0),
        "summary": flows.summary(),
        "acceptance": acceptance,
        "moments": [a.model_dump(mode="json") for a in level_audits],
        "marginal": marginal.model_dump(mode="json"),
        "increments": increments.model_dump(mode="json") if increments else None,
        "pairing": pairing,
        "verdict": verdict.value,
    }
    reports.save_json(SubCommand.FLOW.value, label, payload)
    tables = {"acceptance": [acceptance], "marginal": marginal.records()}
    if pairing:
        tables["pairing"] = pairing
    for audit in level_audits:
        tables[f"moments level {grid.levels[audit.level]:g}"] = audit.records()
    reports.save_text(SubCommand.FLOW.value, label, f"coupled flow {label}  verdict {verdict.value}", tables)
    return _finish(SubCommand.FLOW, verdict, reports)


async def cmd_ode(cfg: ExperimentConfig) -> CommandResult:
    """Oracle tables of the three solvers plus step-halving and semigroup checks."""
    s = _section(cfg, "ode")
    family = family_from_settings(cfg.family)
    law = OffspringLaw.from_probs(s.probs)
    ode = ODEConfig.from_settings(cfg.solver)
    grid = UniformGrid(m=cfg.solver.grid_points)
    reports = _reports(cfg)
    visualizer.show_header("ode", family.name, reports.config_hash, cfg.run.master_seed)

    pgf_rows, cb_rows, nonlocal_rows, checks = [], [], [], []
    for t in s.t_list:
        for s0 in s.s0_list:
            value = solve_pgf_ode(law, s.sigma, t, s0, ode)
            halved = solve_pgf_ode(law, s.sigma, t, s0, ode.halved())
            pgf_rows.append({"t": t, "target": f"F(s0={s0:g})", "prediction": value})
            checks.append({"check": f"halving F t={t:g} s0={s0:g}", "error": abs(value - halved), "tol": HALVING_TOL})
        for lam in s.lambdas:
            value = solve_cb_cumulant(family.base, lam, t, ode=ode)
            halved = solve_cb_cumulant(family.base, lam, t, ode=ode.halved())
            cb_rows.append({"t": t, "target": f"v(lambda={lam:g})", "prediction": value})
            checks.append({"check": f"halving v t={t:g} lambda={lam:g}", "error": abs(value - halved), "tol": HALVING_TOL})

    for f in functions_from_specs(s.f_specs):
        f_grid = f.grid_function(grid)
        for t in s.t_list:
            vtf = solve_nonlocal_cumulant(family, f_grid, t, ode=ode, grid=grid)
            for x, value in zip(grid.points, vtf.values):
                nonlocal_rows.append({"t": t, "target": f"V({f.label})(x={x:g})", "prediction": value})
            half = solve_nonlocal_cumulant(family, f_grid, t / 2, ode=ode, grid=grid)
            twice = solve_nonlocal_cumulant(family, half, t / 2, ode=ode, grid=grid)
            checks.append(
                {"check": f"semigroup {f.label} t={t:g}", "error": float(np.max(np.abs(twice.values - vtf.values))), "tol": SEMIGROUP_TOL}
            )
            if f_grid.is_nonincreasing():
                checks.append(
                    {"check": f"monotone {f.label} t={t:g}", "error": float(max(np.max(np.diff(vtf.values)), 0.0)), "tol": 1e-12}
                )

    for row in checks:
        row["pass"] = Verdict.of(row["error"] <= row["tol"]).value
    verdict = all_pass(row["pass"] for row in checks)
    for name, rows in (("pgf", pgf_rows), ("cb", cb_rows), ("nonlocal", nonlocal_rows)):
        if rows:
            label = f"{family.name}_{name}"
            table = export_oracle_table(rows, reports.report_path(SubCommand.ODE.value, label, "csv"), reports.config_hash)
            reports.register(SubCommand.ODE.value, label, table, {"rows": len(rows)})
    visualizer.show_table("pgf oracle", pgf_rows)
    visualizer.show_table("CB cumulant oracle", cb_rows)
    visualizer.show_table("solver checks", checks)
    reports.save_json(
        SubCommand.ODE.value,
        family.name,
        {"family": family.name, "law": law.to_list(), "step": ode.step, "checks": checks, "verdict": verdict.value},
    )
    reports.save_text(SubCommand.ODE.value, family.name, f"solver checks  verdict {verdict.value}", {"checks": checks})
    return _finish(SubCommand.ODE, verdict, reports)


async def cmd_converge(cfg: ExperimentConfig) -> CommandResult:
    """Build, simulate, estimate and compare with the superprocess oracle."""
    s = _section(cfg, "converge")
    family = family_from_settings(cfg.family)
    reports = _reports(cfg)
    visualizer.show_header("converge", family.name, reports.config_hash, cfg.run.master_seed)
    report = await convergence_experiment(
        family,
        s.k_list,
        LevelGrid.of(s.levels),
        s.t_list,
        functions_from_specs(s.f_specs),
        cfg.replicas_for(s),
        cfg.run.master_seed,
        s.y0,
        runner=_runner(cfg),
        slack_constant=s.slack_constant,
        pilot_replicas=s.pilot_replicas,
        martingale_f=TestFunction.named(s.martingale_f) if s.martingale else None,
        solver_grid=UniformGrid(m=cfg.solver.grid_points),
        ode=ODEConfig.from_settings(cfg.solver),
        max_events=cfg.run.max_events,
        config_hash=reports.config_hash,
    )
    level_set = " ".join(f"{q:g}" for q in s.levels)
    raw = [{"family": family.name, "levels": level_set, **cell.model_dump(mode="json")} for cell in report.cells]
    visualizer.show_table("Laplace functionals", report.records())
    visualizer.show_table("trends", [row.model_dump(mode="json") for row in report.trends])
    reports.save_json(SubCommand.CONVERGE.value, family.name, report)
    reports.save_csv(SubCommand.CONVERGE.value, family.name, raw)
    reports.save_text(
        SubCommand.CONVERGE.value,
        family.name,
        f"convergence {family.name}  C={report.slack_constant:.4g}  verdict {report.verdict.value}",
        {
            "cells": report.records(),
            "trends": [row.model_dump(mode="json") for row in report.trends],
            "martingale": [{"k": row.k, **row.residual.model_dump(mode="json")} for row in report.martingale],
        },
    )
    return _finish(SubCommand.CONVERGE, report.verdict, reports)


async def cmd_verify(files: Sequence[str], cfg: Optional[ExperimentConfig] = None, output_dir: Optional[str] = None) -> CommandResult:
    """Replay path files; a malformed file counts as a failed verification."""
    if cfg is not None:
        reports = _reports(cfg)
    else:
        reports = ReportManager(output_dir or "results")
    rows = []
    for name in files:
        try:
            result = verify_path(read_path(name), source=str(name))
            row = result.model_dump(mode="json")
        except BranchFlowError as e:
            logger.warning(f"Could not read {name}: {e.message}")
            row = {"source": str(name), "events": 0, "problems": [e.message], "verdict": Verdict.FAIL.value}
        row["problems"] = "; ".join(row["problems"])
        rows.append(row)
    verdict = all_pass(row["verdict"] for row in rows)
    columns = ["source", "events", "ordered", "marks_consistent", "monotone", "replay_matches", "verdict"]
    visualizer.show_table("path verification", rows, [c for c in columns if c in rows[0]] if rows else None)
    label = Path(files[0]).stem if len(files) == 1 else f"{len(files)}-files"
    reports.save_json(SubCommand.VERIFY.value, label, {"files": rows, "verdict": verdict.value})
    reports.save_text(SubCommand.VERIFY.value, label, f"path verification  verdict {verdict.value}", {"files": rows})
    return _finish(SubCommand.VERIFY, verdict, reports)
