"""
Command implementations behind the CLI subcommands.

Each ``cmd_*`` takes a validated ``ExperimentConfig`` plus the application
settings and returns a ``CommandResult``: the main table, any extra tables,
and the number of failed checks. Writing files is left to ``write_result``.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import pandas as pd

from src.auctions.competition import CcQuery, competition_complexity, lower_bound_crossing
from src.data.loaders import ExperimentConfig
from src.distributions.order_statistics import expected_order_stat, monte_carlo_order_stat
from src.duality.certificates import check_conservation, duality_reports, lagrangian_bound
from src.mechanisms.lp_builder import build_lp
from src.mechanisms.solver import solve_lp
from src.mechanisms.verification import verify_mechanism, welfare_bound
from src.reporting.exporters import CC_COLUMNS, MHR_COLUMNS, ExcelExporter, rows_to_frame, write_csv
from src.validation.acceptance import run_acceptance
from src.validation.mhr_bounds import (
    bound_rows,
    coupling_check,
    equal_revenue_counterexample,
    necessity_row,
    piecewise_reports,
    zoo,
)

DIST_STATS_COLUMNS = ['dist_id', 'r', 'n', 'expected']
OPT_COLUMNS = ['instance', 'metric', 'value']
DUALITY_COLUMNS = ['myerson_stage', 'flow', 'residual', 'min_multiplier', 'lagrangian_bound', 'closed_form', 'lp_opt', 'gap']
CROSSING_COLUMNS = ['n', 'm', 'c_star', 'lambert_estimate', 'estimate_ceiling', 'within_one']
ACCEPTANCE_COLUMNS = ['criterion', 'item', 'value', 'relation', 'target', 'margin', 'pass']


@dataclass
class CommandResult:
    """Tables produced by one command and its failed-check count."""

    command: str
    frame: pd.DataFrame
    failures: int = 0
    extras: Dict[str, pd.DataFrame] = field(default_factory=dict)
    workbook: bool = False

    @property
    def passed(self) -> bool:
        return self.failures == 0


def _log(logger: Optional[logging.Logger]) -> logging.Logger:
    return logger or logging.getLogger(__name__)


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------
def cmd_dist_stats(config: ExperimentConfig, settings: Dict[str, Any], logger: Optional[logging.Logger] = None) -> CommandResult:
    """Table of E[X_{r:n}] for the requested ranks and sizes (r ≤ n)."""
    log = _log(logger)
    params = config.params
    dist = params['distribution']
    dist_id = getattr(dist, 'label', None) or dist.name or 'discrete'
    trials = params['monte_carlo_trials']
    columns = DIST_STATS_COLUMNS + (['mc_mean', 'mc_stderr'] if trials else [])

    rows = []
    for n in params['sizes']:
        for r in params['ranks']:
            if r > n:
                continue
            row = {'dist_id': dist_id, 'r': r, 'n': n, 'expected': expected_order_stat(dist, r, n)}
            if trials:
                row['mc_mean'], row['mc_stderr'] = monte_carlo_order_stat(dist, r, n, trials, config.seed)
            rows.append(row)
    log.info(f"✓ {len(rows)} order statistics of {dist_id}")
    return CommandResult('dist-stats', rows_to_frame(rows, columns))


def cmd_opt_solve(config: ExperimentConfig, settings: Dict[str, Any], logger: Optional[logging.Logger] = None) -> CommandResult:
    """Solve the revenue LP, verify the solution and report the key numbers."""
    log = _log(logger)
    params = config.params
    reference = params['reference']
    instance = reference.instance
    label = instance.name or 'instance'
    method = params['solver'] or settings['solver']['method']

    lp = build_lp(instance, cap=config.cap, logger=log)
    log.info(f"📊 {label}: {lp.summary()}")
    solution = solve_lp(lp, tolerance=settings['tolerances']['lp_relative'], method=method, logger=log)
    log.info(f"✅ LP optimum {solution.objective:.12g} ({method})")

    metrics = {
        'n': instance.n,
        'm': instance.m,
        'columns': lp.column_count,
        'rows': lp.row_count,
        'nonzeros': lp.nonzeros,
        'objective': solution.objective,
        'welfare_bound': welfare_bound(instance),
    }
    failures = 0
    if params['verify']:
        report = verify_mechanism(instance, solution, lp=lp, logger=log)
        metrics.update({f"{key}_violation": value for key, value in report.as_dict().items()
                        if key in ('pic', 'ir', 'feasibility', 'box', 'matrix_mismatch')})
        metrics['max_violation'] = report.max_violation
        if not report.passed(config.tolerance):
            failures += 1
            log.error(f"❌ LP solution violates a constraint by {report.max_violation:.3g}")
    for key, value in reference.reference.items():
        metrics[f"reference_{key}"] = value

    rows = [{'instance': label, 'metric': key, 'value': float(value)} for key, value in metrics.items()]
    extras = {'solution': solution.to_frame()} if params['dump_solution'] else {}
    return CommandResult('opt-solve', rows_to_frame(rows, OPT_COLUMNS), failures, extras)


def cmd_duality(config: ExperimentConfig, settings: Dict[str, Any], logger: Optional[logging.Logger] = None) -> CommandResult:
    """
    Canonical flow for every Myerson stage (plus an optional supplied flow):
    conservation residual, Lagrangian bound and the gap to the LP optimum.
    """
    log = _log(logger)
    params = config.params
    instance = params['reference'].instance
    flow_tol = settings['tolerances']['flow']

    rows = [report.as_dict() for report in duality_reports(instance, cap=config.cap, log=log)]
    supplied = params['flow']
    if supplied is not None:
        residual = check_conservation(instance, supplied, cap=config.cap)
        # a non-conserving flow gives no bound; the residual check below fails it
        bound = math.nan
        if residual <= flow_tol:
            bound = lagrangian_bound(instance, supplied, tol=flow_tol, cap=config.cap)
        rows.append({
            'myerson_stage': math.nan if supplied.stage is None else supplied.stage + 1,
            'flow': supplied.label or 'supplied',
            'residual': residual,
            'min_multiplier': supplied.min_multiplier(),
            'lagrangian_bound': bound,
            'closed_form': math.nan,
        })

    opt = math.nan
    if params['solve_lp']:
        opt = solve_lp(build_lp(instance, cap=config.cap, logger=log), logger=log).objective
        log.info(f"✓ LP optimum {opt:.12g}")

    failures = 0
    for row in rows:
        row['lp_opt'] = opt
        row['gap'] = row['lagrangian_bound'] - opt
        if row['residual'] > flow_tol:
            failures += 1
            log.error(f"❌ {row['flow']}: residual {row['residual']:.3g} above {flow_tol:g}")
        if not math.isnan(opt) and row['gap'] < -config.tolerance:
            failures += 1
            log.error(f"❌ {row['flow']}: bound {row['lagrangian_bound']:.12g} below LP optimum {opt:.12g}")
    return CommandResult('duality', rows_to_frame(rows, DUALITY_COLUMNS), failures)


def cmd_cc(config: ExperimentConfig, settings: Dict[str, Any], logger: Optional[logging.Logger] = None) -> CommandResult:
    """Competition Complexity scans and the Lambert-W crossing comparison."""
    log = _log(logger)
    params = config.params
    default_multiplier = settings['caps']['cc_multiplier']

    rows = []
    for declared in params['queries']:
        query = CcQuery(
            marginals=declared['marginals'],
            n=declared['n'],
            alpha=declared['alpha'],
            benchmark=declared['benchmark'],
            benchmark_value=declared['benchmark_value'],
            cap_multiplier=declared['cap_multiplier'] or default_multiplier,
            instance=declared['instance'],
            dist_id=declared['dist_id'],
            lp_cap=config.cap,
        )
        result = competition_complexity(query, logger=log)
        log.info(f"  ✓ {query.dist_id} n={query.n} α={query.alpha:.6g}: c*={result.c_star} ({result.status})")
        rows.append(result.as_row())

    failures = 0
    extras = {}
    lower = params['lower_bound']
    if lower is not None:
        crossings = []
        for n in lower['n']:
            for m in lower['m']:
                crossing = lower_bound_crossing(n, m, lower['upper'], lower['equal_revenue_upper'], default_multiplier)
                if not crossing.within_one:
                    failures += 1
                    log.warning(f"⚠️ n={n}, m={m}: c*={crossing.c_star} vs estimate {crossing.estimate:.6g}")
                crossings.append(crossing.as_row())
        extras['crossings'] = rows_to_frame(crossings, CROSSING_COLUMNS)
    return CommandResult('cc', rows_to_frame(rows, CC_COLUMNS), failures, extras)


def cmd_mhr_verify(config: ExperimentConfig, settings: Dict[str, Any], logger: Optional[logging.Logger] = None) -> CommandResult:
    """Order-statistic bounds on the zoo and any declared distributions."""
    log = _log(logger)
    params = config.params
    tol = config.tolerance
    distributions = dict(zoo()) if params['zoo'] else {}
    distributions.update(params['distributions'])

    log.info(f"📋 {len(distributions)} distributions, n ∈ {params['sizes']}")
    reports = bound_rows(distributions, params['sizes'], tol, params['chain'], params['spacing'], log=log)
    if params['necessity']:
        reports.append(necessity_row(tol=tol))
    if params['counterexample'] is not None:
        reports.append(equal_revenue_counterexample(params['counterexample']['upper'], params['counterexample']['n'], tol))
    if params['piecewise_batch'] is not None:
        batch = params['piecewise_batch']
        reports.extend(piecewise_reports(batch['count'], batch['seed'] if batch['seed'] is not None else config.seed))
    if params['coupling'] is not None:
        coupling = params['coupling']
        trials = coupling['trials'] or settings['monte_carlo']['trials']
        names = coupling['distributions'] or ['exp1-trunc40']
        for name in names:
            if name not in distributions:
                log.warning(f"⚠️ Coupling skipped for unknown distribution {name!r}")
                continue
            for n in coupling['sizes']:
                reports.extend(coupling_check(distributions[name], n, trials, config.seed, name).reports())

    failures = sum(1 for r in reports if not r.ok)
    expected = sum(1 for r in reports if r.status == 'expected-fail')
    log.info(f"✓ {len(reports) - failures}/{len(reports)} rows ok ({expected} expected failures)")
    return CommandResult('mhr-verify', rows_to_frame([r.as_row() for r in reports], MHR_COLUMNS), failures)


def cmd_reproduce_paper(config: ExperimentConfig, settings: Dict[str, Any], logger: Optional[logging.Logger] = None) -> CommandResult:
    """Every reproduction check, one row each."""
    log = _log(logger)
    params = config.params
    checks = run_acceptance(
        random_instances=params['random_instances'],
        seed=config.seed,
        tol=config.tolerance,
        cap=config.cap,
        coupling_trials=params['coupling_trials'],
        log=log,
    )
    failures = sum(1 for c in checks if not c.ok)
    frame = rows_to_frame([c.as_row() for c in checks], ACCEPTANCE_COLUMNS)
    return CommandResult('reproduce-paper', frame, failures, workbook=params['workbook'])


COMMAND_HANDLERS: Dict[str, Callable[..., CommandResult]] = {
    'dist-stats': cmd_dist_stats,
    'opt-solve': cmd_opt_solve,
    'duality': cmd_duality,
    'cc': cmd_cc,
    'mhr-verify': cmd_mhr_verify,
    'reproduce-paper': cmd_reproduce_paper,
}


# ----------------------------------------------------------------------
# Dispatch and output
# ----------------------------------------------------------------------
def run_command(config: ExperimentConfig, settings: Dict[str, Any], logger: Optional[logging.Logger] = None) -> CommandResult:
    log = _log(logger)
    log.info(f"📊 Running {config.command}" + (f": {config.name}" if config.name else ''))
    result = COMMAND_HANDLERS[config.command](config, settings, log)
    if result.passed:
        log.info(f"✅ {config.command}: all checks pass")
    else:
        log.error(f"❌ {config.command}: {result.failures} check(s) failed")
    return result


def default_output(config: ExperimentConfig, settings: Dict[str, Any]) -> Path:
    """``<reports>/<name or command>.csv`` unless the config or a flag says otherwise."""
    if config.output:
        return Path(config.output)
    stem = config.name or config.command
    return Path(settings['paths']['reports']) / f"{stem}.csv"


def write_result(result: CommandResult, path: Path, logger: Optional[logging.Logger] = None) -> List[Path]:
    """
    Write the main table to ``path`` and each extra table next to it as
    ``<stem>_<name>.csv``; with ``workbook`` set, also one .xlsx of all tables.
    """
    log = _log(logger)
    path = Path(path)
    written = [write_csv(result.frame, path, logger=log)]
    for name, frame in result.extras.items():
        written.append(write_csv(frame, path.with_name(f"{path.stem}_{name}.csv"), logger=log))
    if result.workbook:
        exporter = ExcelExporter(path.with_suffix('.xlsx'), logger=log)
        exporter.add_sheet(result.frame, result.command)
        for name, frame in result.extras.items():
            exporter.add_sheet(frame, name)
        written.append(Path(exporter.save()))
    return written
