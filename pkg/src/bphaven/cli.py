"""Command-line orchestration: validate, fit, simulate, report.

Every command records a manifest beside its outputs carrying the resolved
configuration, the seed, and content hashes of the inputs, so any artifact
can be reproduced bit for bit. Nothing here contains model logic; commands
wire the data, model, sampler, inference, and simgrid modules together.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .data import (
    LeagueConfig,
    load_league_configs,
    load_matches,
    observed_correlations,
    validate_all,
)
from .inference import (
    LeagueFitReport,
    joint_quadrants,
    league_report,
    sort_reports,
    write_arrows_csv,
    write_fit_artifacts,
    write_league_table_csv,
)
from .model import Design, ModelSpec, PriorSpec, empirical_bayes_priors
from .sampler import ChainConfig, SamplerAbort, run_chains
from .simgrid import (
    BVN_T_STARS,
    DGPS,
    RHO_STARS,
    SEASONS_PER_CELL,
    T_STARS,
    bias_grid,
    grid_cells,
    write_bias_csv,
    write_season_estimates_csv,
)

SEED_ENV_VAR = "BPHAVEN_SEED"

# chains x iterations x burn-in per (profile, covariance mode); the full
# budget is heavier for free covariance, the desk budget is uniform
FIT_BUDGETS = {
    ("desk", "zero"): (3, 3000, 1000),
    ("desk", "free"): (3, 3000, 1000),
    ("full", "zero"): (3, 7000, 2000),
    ("full", "free"): (3, 20000, 10000),
}

DEFAULT_COV = {"goals": "zero", "yellows": "free"}


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return int(env)
    return 0


def _canonical_profile(profile: str) -> str:
    # paper-scale restores the published settings; it is the full profile
    return "full" if profile == "paper-scale" else profile


def _config_dict(args: argparse.Namespace) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key == "func":
            continue
        if isinstance(value, Path):
            value = str(value)
        out[key] = value
    return out


def _sha256_json(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()
    ).hexdigest()


def _sha256_files(paths: Sequence[Path]) -> str:
    digest = hashlib.sha256()
    for path in sorted(paths):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _refuse_overwrite(planned: Sequence[Path], force: bool) -> int | None:
    existing = [p for p in planned if p.exists()]
    if existing and not force:
        names = ", ".join(str(p) for p in existing)
        print(
            f"refusing to overwrite existing outputs ({names}); pass --force",
            file=sys.stderr,
        )
        return 1
    return None


def _select_leagues(
    configs: dict[str, LeagueConfig], requested: list[str] | None
) -> dict[str, LeagueConfig] | None:
    if not requested:
        return configs
    unknown = [lid for lid in requested if lid not in configs]
    if unknown:
        print(f"unknown league ids: {unknown}", file=sys.stderr)
        print(f"configured leagues: {sorted(configs)}", file=sys.stderr)
        return None
    return {lid: configs[lid] for lid in requested}


def _league_csv(data_dir: Path, league_id: str) -> Path:
    return data_dir / f"{league_id}.csv"


def _league_seed(master_seed: int, league_id: str, outcome: str, cov: str) -> int:
    # stable per-league streams: independent of selection order and workers
    tag = hashlib.sha256(f"{league_id}/{outcome}/{cov}".encode()).digest()
    entropy = (master_seed, int.from_bytes(tag[:8], "big"))
    return int(np.random.SeedSequence(entropy=entropy).generate_state(1)[0])


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args: argparse.Namespace) -> int:
    data_dir = Path(args.data_dir)
    out_dir = Path(args.out)
    if not data_dir.is_dir():
        print(f"data directory not found: {data_dir}", file=sys.stderr)
        return 1
    configs = load_league_configs(args.leagues_config)
    selected = _select_leagues(configs, args.league)
    if selected is None:
        return 1

    missing = [
        lid for lid in selected if not _league_csv(data_dir, lid).is_file()
    ]
    if missing:
        print(
            f"no CSV file for leagues {missing} under {data_dir}; "
            f"expected one <league_id>.csv per league",
            file=sys.stderr,
        )
        return 1

    planned = [out_dir / "validation_report.json", out_dir / "manifest_validate.json"]
    refused = _refuse_overwrite(planned, args.force)
    if refused is not None:
        return refused
    out_dir.mkdir(parents=True, exist_ok=True)

    matches_by_league = {}
    ingest_reports = {}
    correlations = {}
    for lid, config in selected.items():
        matches, report = load_matches(_league_csv(data_dir, lid), config)
        matches_by_league[lid] = matches
        ingest_reports[lid] = report.to_dict()
        if matches:
            corr = observed_correlations(matches)
            correlations[lid] = {
                "goals": corr.goals_corr,
                "yellows": corr.yellows_corr,
                "degenerate_goals": corr.degenerate_goals,
                "degenerate_yellows": corr.degenerate_yellows,
            }

    report = validate_all(matches_by_league, selected)
    payload = report.to_dict()
    payload["correlations"] = correlations
    payload["ingest"] = ingest_reports
    _write_json(out_dir / "validation_report.json", payload)

    config = _config_dict(args)
    config["seed"] = _resolve_seed(args.seed)
    _write_json(
        out_dir / "manifest_validate.json",
        {
            "command": "validate",
            "version": __version__,
            "seed": config["seed"],
            "config": config,
            "config_hash": _sha256_json(config),
            "dataset_hash": _sha256_files(
                [_league_csv(data_dir, lid) for lid in selected]
            ),
            "outputs": ["validation_report.json"],
            "ok": report.ok,
        },
    )

    for row in report.mismatches():
        print(f"count mismatch: {json.dumps(row.to_dict())}", file=sys.stderr)
    if not report.ok and not args.allow_mismatch:
        return 1
    return 0


# ---------------------------------------------------------------------------
# fit


def _fit_league_task(task: tuple) -> tuple[str, object]:
    league_id, matches, spec, priors, chain_config = task
    design = Design(matches, spec)
    draws = run_chains(
        design.make_log_density(priors),
        lambda rng: design.init_flat(rng),
        chain_config,
        blocks=design.block_specs(),
        param_names=design.param_names,
    )
    return league_id, draws


def _load_stage1_estimates(
    stage1_dir: Path, configs: dict[str, LeagueConfig], outcome: str
) -> dict[str, tuple[float, float]]:
    estimates = {}
    for lid in configs:
        path = stage1_dir / f"{lid}_{outcome}_zero.json"
        if not path.is_file():
            continue
        row = json.loads(path.read_text())["table_row"]
        estimates[lid] = (row["T_hat"], row["T_prime_hat"])
    return estimates


def cmd_fit(args: argparse.Namespace) -> int:
    data_dir = Path(args.data_dir)
    out_dir = Path(args.out)
    outcome = args.outcome
    cov = args.cov or DEFAULT_COV[outcome]
    profile = _canonical_profile(args.profile)
    seed = _resolve_seed(args.seed)

    configs = load_league_configs(args.leagues_config)
    selected = _select_leagues(configs, args.league)
    if selected is None:
        return 1

    n_chains, iterations, burn_in = FIT_BUDGETS[(profile, cov)]
    if args.chains is not None:
        n_chains = args.chains
    if args.iters is not None:
        iterations = args.iters
    if args.burnin is not None:
        burn_in = args.burnin

    # the free-covariance refit draws its priors from stored zero-covariance
    # results; it never refits stage 1 silently
    priors_by_league: dict[str, PriorSpec]
    eb_info = None
    if cov == "free":
        stage1_dir = Path(args.stage1) if args.stage1 else out_dir
        stage1 = _load_stage1_estimates(stage1_dir, configs, outcome)
        if len(stage1) < 2:
            print(
                f"stage-2 fit needs stage-1 artifacts (<league>_{outcome}_zero.json) "
                f"for at least 2 leagues under {stage1_dir}, found {len(stage1)}; "
                f"run fit --outcome {outcome} --cov zero first",
                file=sys.stderr,
            )
            return 1
        priors_by_league = empirical_bayes_priors(stage1, outcome)
        shared = next(iter(priors_by_league.values()))
        eb_info = {
            "stage1_leagues": sorted(stage1),
            "T_prior": {"mean": shared.T_prior.mean, "variance": shared.T_prior.variance},
            "T_prime_prior": {
                "mean": shared.T_prime_prior.mean,
                "variance": shared.T_prime_prior.variance,
            },
        }
    else:
        flat = PriorSpec.noninformative(outcome, cov)
        priors_by_league = {lid: flat for lid in selected}

    planned = []
    for lid in selected:
        stem = f"{lid}_{outcome}_{cov}"
        planned += [
            out_dir / f"{stem}.summary.csv",
            out_dir / f"{stem}.density.csv",
            out_dir / f"{stem}.draws.csv",
            out_dir / f"{stem}.json",
        ]
    table_path = out_dir / f"league_table_{outcome}_{cov}.csv"
    manifest_path = out_dir / f"manifest_fit_{outcome}_{cov}.json"
    refused = _refuse_overwrite(planned + [table_path, manifest_path], args.force)
    if refused is not None:
        return refused
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = []
    failures = {}
    dataset_files = []
    for lid, config in selected.items():
        csv_path = _league_csv(data_dir, lid)
        if not csv_path.is_file():
            failures[lid] = f"no data file {csv_path}"
            continue
        dataset_files.append(csv_path)
        matches, _ = load_matches(csv_path, config)
        spec = ModelSpec(
            outcome=outcome,
            covariance_mode=cov,
            league_id=lid,
            seasons=config.seasons,
            restart_date=config.restart_date,
        )
        chain_config = ChainConfig(
            n_chains=n_chains,
            iterations=iterations,
            burn_in=burn_in,
            seed=_league_seed(seed, lid, outcome, cov),
        )
        if lid not in priors_by_league:
            priors_by_league[lid] = next(iter(priors_by_league.values()))
        tasks.append((lid, matches, spec, priors_by_league[lid], chain_config))

    results = []
    if args.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [(t[0], pool.submit(_fit_league_task, t)) for t in tasks]
            for lid, future in futures:
                try:
                    results.append(future.result())
                except (ValueError, SamplerAbort) as exc:
                    failures[lid] = f"{type(exc).__name__}: {exc}"
    else:
        for task in tasks:
            try:
                results.append(_fit_league_task(task))
            except (ValueError, SamplerAbort) as exc:
                failures[task[0]] = f"{type(exc).__name__}: {exc}"

    config = _config_dict(args)
    config["seed"] = seed
    config["resolved_cov"] = cov
    config["resolved_chains"] = [n_chains, iterations, burn_in]
    config_hash = _sha256_json(config)
    dataset_hash = _sha256_files(dataset_files) if dataset_files else None

    reports = []
    gate_failures = []
    chain_by_league = {t[0]: t[4] for t in tasks}
    for lid, draws in results:
        write_fit_artifacts(
            out_dir,
            lid,
            outcome,
            cov,
            draws,
            extra_manifest={
                "seed": chain_by_league[lid].seed,
                "master_seed": seed,
                "config_hash": config_hash,
                "dataset_hash": dataset_hash,
                "profile": profile,
            },
        )
        row = league_report(lid, draws, outcome)
        reports.append(row)
        if not row.converged:
            gate_failures.append(lid)
            print(
                f"convergence gate: {lid} max r_hat {row.max_r_hat:.4f} "
                f"(threshold 1.05)",
                file=sys.stderr,
            )

    for lid in selected:
        if lid in failures:
            reports.append(LeagueFitReport.missing_marker(lid, outcome))
            print(f"fit failed: {lid}: {failures[lid]}", file=sys.stderr)

    write_league_table_csv(table_path, sort_reports(reports))

    manifest = {
        "command": "fit",
        "version": __version__,
        "seed": seed,
        "config": config,
        "config_hash": config_hash,
        "dataset_hash": dataset_hash,
        "outputs": sorted(p.name for p in planned if p.exists())
        + [table_path.name],
        "league_seeds": {t[0]: t[4].seed for t in tasks},
        "gate_failures": sorted(gate_failures),
        "failures": failures,
    }
    if eb_info is not None:
        manifest["empirical_bayes"] = eb_info
    _write_json(manifest_path, manifest)

    if not results:
        print("no league produced a fit", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    profile = _canonical_profile(args.profile)
    seed = _resolve_seed(args.seed)
    seasons = (
        args.seasons_per_cell
        if args.seasons_per_cell is not None
        else SEASONS_PER_CELL[profile]
    )
    dgps = tuple(args.dgp) if args.dgp else DGPS
    rhos = tuple(args.rho) if args.rho else RHO_STARS
    t_stars = tuple(args.tstar) if args.tstar else T_STARS

    try:
        cells = grid_cells(
            seed=seed,
            seasons_per_cell=seasons,
            dgps=dgps,
            rho_stars=rhos,
            t_stars=t_stars,
        )
    except ValueError as exc:
        print(f"bad grid: {exc}", file=sys.stderr)
        return 1

    planned = [
        out_dir / "bias_grid.csv",
        out_dir / "season_estimates.csv",
        out_dir / "manifest_simulate.json",
    ]
    refused = _refuse_overwrite(planned, args.force)
    if refused is not None:
        return refused
    out_dir.mkdir(parents=True, exist_ok=True)

    result = bias_grid(cells, workers=args.workers)
    write_bias_csv(out_dir / "bias_grid.csv", result.rows)
    write_season_estimates_csv(out_dir / "season_estimates.csv", result.season_estimates)

    config = _config_dict(args)
    config["seed"] = seed
    config["resolved_grid"] = {
        "dgps": list(dgps),
        "rho_stars": list(rhos),
        "T_stars": list(t_stars),
        "seasons_per_cell": seasons,
    }
    failures = [
        {
            "dgp": dgp,
            "rho_star": rho,
            "T_star": t,
            "season": season_index,
            "estimator": estimator,
            "error": message,
        }
        for dgp, rho, t, season_index, estimator, message in result.failures()
    ]
    _write_json(
        out_dir / "manifest_simulate.json",
        {
            "command": "simulate",
            "version": __version__,
            "seed": seed,
            "config": config,
            "config_hash": _sha256_json(config),
            "dataset_hash": None,
            "outputs": ["bias_grid.csv", "season_estimates.csv"],
            "n_cells": len(cells),
            "n_seasons_total": sum(c.n_seasons for c in cells),
            "failures": failures,
        },
    )
    if failures:
        print(f"{len(failures)} season-level estimation failures", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# report


def _load_fit_rows(
    fit_dir: Path, configs: dict[str, LeagueConfig], outcome: str
) -> tuple[list[LeagueFitReport], dict[str, str], list[str]]:
    """Rows for one outcome, preferring its default covariance artifacts."""
    cov_order = ("zero", "free") if outcome == "goals" else ("free", "zero")
    rows = []
    used = {}
    missing = []
    for lid in sorted(configs):
        found = None
        for cov in cov_order:
            path = fit_dir / f"{lid}_{outcome}_{cov}.json"
            if path.is_file():
                found = (cov, path)
                break
        if found is None:
            rows.append(LeagueFitReport.missing_marker(lid, outcome))
            missing.append(lid)
            continue
        cov, path = found
        used[lid] = f"{path.name}"
        row_dict = json.loads(path.read_text())["table_row"]
        rows.append(LeagueFitReport(**row_dict))
    return rows, used, missing


def cmd_report(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    fit_dir = Path(args.fit_dir) if args.fit_dir else out_dir
    configs = load_league_configs(args.leagues_config)

    goals_rows, goals_used, goals_missing = _load_fit_rows(fit_dir, configs, "goals")
    yellows_rows, yellows_used, yellows_missing = _load_fit_rows(
        fit_dir, configs, "yellows"
    )
    warnings = []
    if not goals_used and not yellows_used:
        print(f"no fit artifacts found under {fit_dir}", file=sys.stderr)
        return 1

    planned = [out_dir / "manifest_report.json"]
    goals_table = out_dir / "report_table_goals.csv"
    yellows_table = out_dir / "report_table_yellows.csv"
    arrows_path = out_dir / "arrows.csv"
    quadrants_path = out_dir / "quadrants.json"
    if goals_used:
        planned.append(goals_table)
    if yellows_used:
        planned.append(yellows_table)
    both = sorted(set(goals_used) & set(yellows_used))
    if both:
        planned += [arrows_path, quadrants_path]
    refused = _refuse_overwrite(planned, args.force)
    if refused is not None:
        return refused
    out_dir.mkdir(parents=True, exist_ok=True)

    outputs = []
    if goals_used:
        write_league_table_csv(goals_table, sort_reports(goals_rows))
        outputs.append(goals_table.name)
    else:
        warnings.append("no goals fits found; goals table skipped")
    if yellows_used:
        write_league_table_csv(yellows_table, sort_reports(yellows_rows))
        outputs.append(yellows_table.name)
    else:
        warnings.append("no yellows fits found; report covers goals only")

    quadrant_counts = None
    if both:
        goals_both = [r for r in goals_rows if r.league_id in both]
        yellows_both = [r for r in yellows_rows if r.league_id in both]
        quadrants = joint_quadrants(goals_both, yellows_both)
        write_arrows_csv(arrows_path, quadrants)
        quadrant_counts = {
            "both_decline": quadrants.both_decline,
            "goals_up_yellows_down": quadrants.goals_up_yellows_down,
            "both_up": quadrants.both_up,
            "goals_down_yellows_up": quadrants.goals_down_yellows_up,
            "n_leagues": len(quadrants.arrows),
        }
        _write_json(quadrants_path, quadrant_counts)
        outputs += [arrows_path.name, quadrants_path.name]
    elif goals_used and yellows_used:
        warnings.append("no league has fits for both outcomes; arrows skipped")

    # per-game goals HA averaged over the leagues that carry it
    goal_scale = None
    pre_vals, post_vals = [], []
    for lid in sorted(goals_used):
        bundle = json.loads((fit_dir / goals_used[lid]).read_text())
        scale = bundle.get("goals_per_game_ha")
        if scale:
            pre_vals.append(scale["pre"])
            post_vals.append(scale["post"])
    if pre_vals:
        goal_scale = {
            "pre": sum(pre_vals) / len(pre_vals),
            "post": sum(post_vals) / len(post_vals),
            "n_leagues": len(pre_vals),
        }

    config = _config_dict(args)
    config["seed"] = _resolve_seed(args.seed)
    _write_json(
        out_dir / "manifest_report.json",
        {
            "command": "report",
            "version": __version__,
            "seed": config["seed"],
            "config": config,
            "config_hash": _sha256_json(config),
            "fit_artifacts": {"goals": goals_used, "yellows": yellows_used},
            "missing_leagues": {"goals": goals_missing, "yellows": yellows_missing},
            "outputs": outputs,
            "quadrants": quadrant_counts,
            "goals_per_game_ha_mean": goal_scale,
            "warnings": warnings,
        },
    )
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--seed", type=int, default=None,
                     help=f"master seed (default: ${SEED_ENV_VAR} or 0)")
    sub.add_argument("--force", action="store_true",
                     help="overwrite existing outputs")


def _add_league_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--data-dir", required=True,
                     help="directory of per-league CSV files (<league_id>.csv)")
    sub.add_argument("--leagues-config", default=None,
                     help="league config JSON (default: packaged table)")
    sub.add_argument("--league", action="append", default=None,
                     help="restrict to a league id (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bphaven",
        description="Bivariate Poisson home-advantage estimation and "
        "simulation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check dataset counts per league")
    _add_league_options(p_val)
    _add_common(p_val)
    p_val.add_argument("--allow-mismatch", action="store_true",
                       help="exit 0 even when counts mismatch")
    p_val.set_defaults(func=cmd_validate)

    p_fit = sub.add_parser("fit", help="fit per-league home-advantage models")
    _add_league_options(p_fit)
    _add_common(p_fit)
    p_fit.add_argument("--outcome", required=True, choices=["goals", "yellows"])
    p_fit.add_argument("--cov", choices=["zero", "free"], default=None,
                       help="covariance mode (default: zero for goals, "
                       "free for yellows)")
    p_fit.add_argument("--profile", choices=["desk", "full", "paper-scale"],
                       default="desk")
    p_fit.add_argument("--chains", type=int, default=None)
    p_fit.add_argument("--iters", type=int, default=None)
    p_fit.add_argument("--burnin", type=int, default=None)
    p_fit.add_argument("--stage1", default=None,
                       help="directory of zero-covariance artifacts for the "
                       "empirical-Bayes refit (default: --out)")
    p_fit.add_argument("--workers", type=int, default=1)
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="run the estimator-bias grid")
    _add_common(p_sim)
    p_sim.add_argument("--profile", choices=["desk", "full", "paper-scale"],
                       default="desk")
    p_sim.add_argument("--seasons-per-cell", type=int, default=None)
    p_sim.add_argument("--dgp", action="append", choices=list(DGPS), default=None,
                       help="restrict to a data-generating process (repeatable)")
    p_sim.add_argument("--rho", action="append", type=float, default=None,
                       help="restrict to a strength correlation (repeatable)")
    p_sim.add_argument("--Tstar", action="append", type=float, default=None,
                       dest="tstar",
                       help=f"restrict to a true HA; bvn supports {BVN_T_STARS} "
                       "(repeatable)")
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = sub.add_parser("report", help="bundle fit artifacts into tables")
    _add_common(p_rep)
    p_rep.add_argument("--fit-dir", default=None,
                       help="directory holding fit artifacts (default: --out)")
    p_rep.add_argument("--leagues-config", default=None)
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
