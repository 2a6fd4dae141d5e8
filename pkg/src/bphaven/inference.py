"""Posterior post-processing: home-advantage tables, decline probabilities,
density exports, and the joint goals/yellow-cards quadrant report.

Everything here is a pure transformation of draws. Sampling lives in
``sampler``; this module only summarizes and serializes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .model import OUTCOMES
from .sampler import PosteriorDraws

__all__ = [
    "LeagueFitReport",
    "DensityBin",
    "DensityExport",
    "Arrow",
    "QuadrantReport",
    "prob_ha_decline",
    "goal_scale_ha",
    "goal_scale_pre_post",
    "league_report",
    "league_table",
    "sort_reports",
    "density_export",
    "joint_quadrants",
    "write_fit_artifacts",
    "write_league_table_csv",
    "write_arrows_csv",
    "R_HAT_GATE",
]

# Convergence gate for report flagging. Real fits land far below this; the
# gate exists to catch regressions, not to tune results.
R_HAT_GATE = 1.05

_FLOAT_FMT = "%.17g"


def _fmt(value: float) -> str:
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return _FLOAT_FMT % value


def prob_ha_decline(
    draws_T: np.ndarray, draws_Tprime: np.ndarray, outcome: str
) -> float:
    """Posterior probability that home advantage declined after the restart.

    Goals HA is positive, so a decline means T' < T. Yellow-card HA is
    negative (home teams pick up fewer cards), so a decline means T' > T,
    a move toward zero. Both are computed as fractions of paired draws.
    """
    if outcome not in OUTCOMES:
        raise ValueError(f"unknown outcome {outcome!r}")
    t = np.asarray(draws_T, dtype=float).reshape(-1)
    tp = np.asarray(draws_Tprime, dtype=float).reshape(-1)
    if t.shape != tp.shape:
        raise ValueError(
            f"paired draw vectors differ in length: {t.size} vs {tp.size}"
        )
    if t.size == 0:
        raise ValueError("no draws")
    if outcome == "goals":
        return float(np.mean(tp < t))
    return float(np.mean(tp > t))


def goal_scale_ha(mu: float, T: float) -> float:
    """Home advantage in goals per game at neutral team strengths."""
    if not (math.isfinite(mu) and math.isfinite(T)):
        raise ValueError("mu and T must be finite")
    return math.exp(mu + T) - math.exp(mu)


def goal_scale_pre_post(draws: PosteriorDraws) -> tuple[float, float]:
    """Pre and post goals-per-game HA at the average season baseline.

    Averages the posterior means of the per-season intercepts, then maps
    the pre and post HA coefficients through ``goal_scale_ha``.
    """
    mu_names = [n for n in draws.param_names if n.startswith("mu[")]
    if not mu_names:
        raise ValueError("draws carry no season intercepts")
    mu_bar = float(np.mean([np.mean(draws.pooled(n)) for n in mu_names]))
    t_hat = float(np.mean(draws.pooled("T")))
    tp_hat = float(np.mean(draws.pooled("T_prime")))
    return goal_scale_ha(mu_bar, t_hat), goal_scale_ha(mu_bar, tp_hat)


@dataclass(frozen=True)
class LeagueFitReport:
    """One row of the per-league home-advantage table."""

    league_id: str
    outcome: str
    T_hat: float
    T_prime_hat: float
    delta: float
    pct_change: float
    p_decline: float
    max_r_hat: float
    min_ess: float
    converged: bool
    missing: bool = False

    @classmethod
    def missing_marker(cls, league_id: str, outcome: str) -> "LeagueFitReport":
        nan = float("nan")
        return cls(
            league_id=league_id,
            outcome=outcome,
            T_hat=nan,
            T_prime_hat=nan,
            delta=nan,
            pct_change=nan,
            p_decline=nan,
            max_r_hat=nan,
            min_ess=nan,
            converged=False,
            missing=True,
        )


def _pct_change(t_hat: float, delta: float) -> float:
    # |T| near zero makes this column unstable; it is reported as defined
    # and delta carries the stable absolute difference alongside it.
    if t_hat == 0.0:
        if delta == 0.0:
            return float("nan")
        return math.copysign(math.inf, delta)
    return 100.0 * delta / abs(t_hat)


def league_report(
    league_id: str,
    draws: PosteriorDraws,
    outcome: str,
    r_hat_gate: float = R_HAT_GATE,
) -> LeagueFitReport:
    """Summarize one league's fit into a table row."""
    for required in ("T", "T_prime"):
        if required not in draws.param_names:
            raise ValueError(
                f"fit for {league_id!r} lacks the {required!r} parameter"
            )
    t = draws.pooled("T")
    tp = draws.pooled("T_prime")
    t_hat = float(np.mean(t))
    tp_hat = float(np.mean(tp))
    delta = tp_hat - t_hat
    r_hats = np.array(list(draws.r_hat_all().values()))
    esses = np.array(list(draws.ess_all().values()))
    max_r_hat = float(np.max(r_hats)) if r_hats.size else float("nan")
    min_ess = float(np.min(esses)) if esses.size else float("nan")
    converged = bool(max_r_hat <= r_hat_gate)  # NaN fails the gate
    return LeagueFitReport(
        league_id=league_id,
        outcome=outcome,
        T_hat=t_hat,
        T_prime_hat=tp_hat,
        delta=delta,
        pct_change=_pct_change(t_hat, delta),
        p_decline=prob_ha_decline(t, tp, outcome),
        max_r_hat=max_r_hat,
        min_ess=min_ess,
        converged=converged,
    )


def league_table(
    fits: Mapping[str, PosteriorDraws],
    outcome: str,
    expected_leagues: Sequence[str] | None = None,
    r_hat_gate: float = R_HAT_GATE,
) -> list[LeagueFitReport]:
    """Per-league report rows sorted by decline probability, highest first.

    Leagues named in ``expected_leagues`` but absent from ``fits`` appear
    as missing-marker rows at the bottom rather than being dropped.
    """
    if expected_leagues is None:
        expected_leagues = sorted(fits)
    rows = []
    for league_id in expected_leagues:
        if league_id in fits:
            rows.append(league_report(league_id, fits[league_id], outcome, r_hat_gate))
        else:
            rows.append(LeagueFitReport.missing_marker(league_id, outcome))
    return sort_reports(rows)


def sort_reports(rows: Sequence[LeagueFitReport]) -> list[LeagueFitReport]:
    """Order rows by decline probability, highest first; missing rows sink."""

    def key(row: LeagueFitReport):
        p = row.p_decline
        primary = -p if not math.isnan(p) else math.inf
        return (primary, row.league_id)

    return sorted(rows, key=key)


@dataclass(frozen=True)
class DensityBin:
    left: float
    width: float
    height: float


@dataclass(frozen=True)
class DensityExport:
    """Binned posterior densities for T, T', and their difference."""

    tables: dict[str, tuple[DensityBin, ...]]
    diff_draws: np.ndarray

    def total_mass(self, name: str) -> float:
        return float(sum(b.width * b.height for b in self.tables[name]))


def _histogram(x: np.ndarray, bins: int) -> tuple[DensityBin, ...]:
    heights, edges = np.histogram(x, bins=bins, density=True)
    widths = np.diff(edges)
    return tuple(
        DensityBin(float(edges[i]), float(widths[i]), float(heights[i]))
        for i in range(len(heights))
    )


def density_export(
    draws_T: np.ndarray, draws_Tprime: np.ndarray, bins: int = 40
) -> DensityExport:
    """Normalized histograms of T, T', and the paired difference T - T'."""
    if bins < 10:
        raise ValueError(f"need at least 10 bins, got {bins}")
    t = np.asarray(draws_T, dtype=float).reshape(-1)
    tp = np.asarray(draws_Tprime, dtype=float).reshape(-1)
    if t.size == 0 or tp.size == 0:
        raise ValueError("no draws")
    if t.shape != tp.shape:
        raise ValueError(
            f"paired draw vectors differ in length: {t.size} vs {tp.size}"
        )
    diff = t - tp
    tables = {
        "T": _histogram(t, bins),
        "T_prime": _histogram(tp, bins),
        "T_minus_T_prime": _histogram(diff, bins),
    }
    return DensityExport(tables=tables, diff_draws=diff)


@dataclass(frozen=True)
class Arrow:
    """One league's pre-to-post move in the (yellows HA, goals HA) plane."""

    league_id: str
    yellows_pre: float
    goals_pre: float
    yellows_post: float
    goals_post: float

    @property
    def goals_declined(self) -> bool:
        return self.goals_post < self.goals_pre

    @property
    def yellows_declined(self) -> bool:
        # yellow-card HA is negative; moving up toward zero is a decline
        return self.yellows_post > self.yellows_pre


@dataclass(frozen=True)
class QuadrantReport:
    arrows: tuple[Arrow, ...]
    both_decline: int
    goals_up_yellows_down: int
    both_up: int
    goals_down_yellows_up: int

    def counts(self) -> tuple[int, int, int, int]:
        return (
            self.both_decline,
            self.goals_up_yellows_down,
            self.both_up,
            self.goals_down_yellows_up,
        )


def joint_quadrants(
    goals_reports: Sequence[LeagueFitReport],
    yellows_reports: Sequence[LeagueFitReport],
) -> QuadrantReport:
    """Cross-outcome arrows plus counts of leagues by HA direction pair."""
    goals_by_id = {r.league_id: r for r in goals_reports}
    yellows_by_id = {r.league_id: r for r in yellows_reports}
    if len(goals_by_id) != len(goals_reports):
        raise ValueError("duplicate league in goals reports")
    if len(yellows_by_id) != len(yellows_reports):
        raise ValueError("duplicate league in yellows reports")
    if goals_by_id.keys() != yellows_by_id.keys():
        only_goals = sorted(goals_by_id.keys() - yellows_by_id.keys())
        only_yellows = sorted(yellows_by_id.keys() - goals_by_id.keys())
        raise ValueError(
            "report sets cover different leagues: "
            f"goals-only {only_goals}, yellows-only {only_yellows}"
        )
    missing = sorted(
        lid
        for lid in goals_by_id
        if goals_by_id[lid].missing or yellows_by_id[lid].missing
    )
    if missing:
        raise ValueError(f"missing fits for: {missing}")

    arrows = []
    for league_id in sorted(goals_by_id):
        g = goals_by_id[league_id]
        y = yellows_by_id[league_id]
        arrows.append(
            Arrow(
                league_id=league_id,
                yellows_pre=y.T_hat,
                goals_pre=g.T_hat,
                yellows_post=y.T_prime_hat,
                goals_post=g.T_prime_hat,
            )
        )
    both_decline = sum(a.goals_declined and a.yellows_declined for a in arrows)
    goals_up_yellows_down = sum(
        (not a.goals_declined) and a.yellows_declined for a in arrows
    )
    both_up = sum(
        (not a.goals_declined) and (not a.yellows_declined) for a in arrows
    )
    goals_down_yellows_up = sum(
        a.goals_declined and (not a.yellows_declined) for a in arrows
    )
    return QuadrantReport(
        arrows=tuple(arrows),
        both_decline=both_decline,
        goals_up_yellows_down=goals_up_yellows_down,
        both_up=both_up,
        goals_down_yellows_up=goals_down_yellows_up,
    )


# ---------------------------------------------------------------------------
# serialization


def fit_artifact_paths(
    out_dir: str | Path, league_id: str, outcome: str, cov_mode: str
) -> dict[str, Path]:
    stem = f"{league_id}_{outcome}_{cov_mode}"
    out_dir = Path(out_dir)
    return {
        "summary": out_dir / f"{stem}.summary.csv",
        "density": out_dir / f"{stem}.density.csv",
        "draws": out_dir / f"{stem}.draws.csv",
        "report": out_dir / f"{stem}.json",
    }


def write_fit_artifacts(
    out_dir: str | Path,
    league_id: str,
    outcome: str,
    cov_mode: str,
    draws: PosteriorDraws,
    bins: int = 40,
    extra_manifest: Mapping[str, object] | None = None,
) -> dict[str, Path]:
    """Write the summary, density, and raw-draws files for one fit.

    Returns the artifact paths. The JSON report carries the table row, the
    diagnostics, and any caller-supplied manifest entries (seed, config).
    """
    paths = fit_artifact_paths(out_dir, league_id, outcome, cov_mode)
    Path(out_dir).mkdir(parents=True, exist_ok=True)

    r_hats = draws.r_hat_all()
    esses = draws.ess_all()
    with open(paths["summary"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ("param", "mean", "sd", "q2_5", "q25", "q50", "q75", "q97_5", "r_hat", "ess")
        )
        summaries = draws.summaries()
        for name in draws.param_names:
            s = summaries[name]
            writer.writerow(
                (name,)
                + tuple(_fmt(v) for v in s.as_tuple())
                + (_fmt(r_hats[name]), _fmt(esses[name]))
            )

    report = league_report(league_id, draws, outcome)
    export = density_export(draws.pooled("T"), draws.pooled("T_prime"), bins=bins)
    with open(paths["density"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("param", "bin_left", "bin_width", "height"))
        for name, table in export.tables.items():
            for b in table:
                writer.writerow(
                    (name, _fmt(b.left), _fmt(b.width), _fmt(b.height))
                )

    draws.to_csv(paths["draws"])

    bundle: dict[str, object] = {
        "league_id": league_id,
        "outcome": outcome,
        "covariance_mode": cov_mode,
        "table_row": asdict(report),
        "n_chains": int(draws.draws.shape[0]),
        "retained_per_chain": int(draws.draws.shape[1]),
        "artifacts": {k: p.name for k, p in paths.items()},
    }
    if outcome == "goals":
        pre, post = goal_scale_pre_post(draws)
        bundle["goals_per_game_ha"] = {"pre": pre, "post": post}
    if extra_manifest:
        bundle.update(extra_manifest)
    with open(paths["report"], "w") as fh:
        json.dump(bundle, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    return paths


def write_league_table_csv(
    path: str | Path, reports: Sequence[LeagueFitReport]
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            (
                "league_id",
                "outcome",
                "T_hat",
                "T_prime_hat",
                "delta",
                "pct_change",
                "p_decline",
                "max_r_hat",
                "min_ess",
                "converged",
                "missing",
            )
        )
        for r in reports:
            writer.writerow(
                (
                    r.league_id,
                    r.outcome,
                    _fmt(r.T_hat),
                    _fmt(r.T_prime_hat),
                    _fmt(r.delta),
                    _fmt(r.pct_change),
                    _fmt(r.p_decline),
                    _fmt(r.max_r_hat),
                    _fmt(r.min_ess),
                    int(r.converged),
                    int(r.missing),
                )
            )


def write_arrows_csv(path: str | Path, report: QuadrantReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ("league_id", "yellows_pre", "goals_pre", "yellows_post", "goals_post")
        )
        for a in report.arrows:
            writer.writerow(
                (
                    a.league_id,
                    _fmt(a.yellows_pre),
                    _fmt(a.goals_pre),
                    _fmt(a.yellows_post),
                    _fmt(a.goals_post),
                )
            )
