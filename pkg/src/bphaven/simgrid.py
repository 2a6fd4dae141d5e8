"""Estimator-bias simulation study.

Synthetic seasons are generated under two data-generating processes, three
candidate estimators recover the home advantage from each season, and the
per-cell mean bias and mean absolute bias are aggregated on the
goal-difference scale.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .data import Match
from .inference import goal_scale_ha
from .model import Design, InvGammaPrior, ModelSpec, NormalPrior, PriorSpec
from .sampler import ChainConfig, SamplerAbort, run_chains

__all__ = [
    "DGPS",
    "RHO_STARS",
    "T_STARS",
    "ESTIMATORS",
    "EstimationError",
    "SimCell",
    "TeamStrengths",
    "SimSeason",
    "SeasonEstimates",
    "BiasRow",
    "GridResult",
    "gen_team_strengths",
    "schedule_double_round_robin",
    "simulate_bvp",
    "simulate_bvn",
    "fit_ols_fixed_effects",
    "fit_paired_comparison",
    "fit_bvp_model",
    "true_goal_difference_ha",
    "grid_cells",
    "bias_grid",
    "write_bias_csv",
    "write_season_estimates_csv",
]

DGPS = ("bvp", "bvn")
RHO_STARS = (-0.8, -0.4, 0.0)
T_STARS = (0.0, 0.25, 0.5)

STRENGTH_SD = 0.35
BVN_BASE_MEAN = 0.2
BVN_SD = 1.75
BVN_LOWER = -0.49
BVN_T_STARS = (0.0, 0.25, 0.5)

# every per-season fit, bivariate Poisson or paired comparison, runs this budget
SIM_N_CHAINS = 2
SIM_ITERATIONS = 5000
SIM_BURN_IN = 2000

SEASONS_PER_CELL = {"desk": 25, "full": 100}


class EstimationError(RuntimeError):
    """A season-level fit could not produce an estimate."""


@dataclass(frozen=True)
class SimCell:
    """One grid cell: a DGP, a strength correlation, and a true HA."""

    dgp: str
    rho_star: float
    T_star: float
    n_seasons: int = 100
    n_teams: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dgp not in DGPS:
            raise ValueError(f"dgp must be one of {DGPS}, got {self.dgp!r}")
        if not -1.0 <= self.rho_star <= 0.0:
            raise ValueError(f"rho_star must lie in [-1, 0], got {self.rho_star}")
        if self.T_star < 0:
            raise ValueError(f"T_star must be >= 0, got {self.T_star}")
        if self.n_teams < 2 or self.n_teams % 2:
            raise ValueError(f"n_teams must be even and >= 2, got {self.n_teams}")
        if self.n_seasons < 1:
            raise ValueError("n_seasons must be >= 1")
        if self.dgp == "bvn" and self.T_star not in BVN_T_STARS:
            raise ValueError(
                f"the bvn one-goal mechanism defines only T* in {BVN_T_STARS}, "
                f"got {self.T_star}"
            )


@dataclass
class TeamStrengths:
    """Per-team attack and defend effects on the log-rate scale."""

    attack: np.ndarray
    defend: np.ndarray

    def __post_init__(self) -> None:
        self.attack = np.asarray(self.attack, dtype=float)
        self.defend = np.asarray(self.defend, dtype=float)
        if self.attack.shape != self.defend.shape or self.attack.ndim != 1:
            raise ValueError("attack and defend must be equal-length vectors")

    @property
    def n_teams(self) -> int:
        return self.attack.size


def gen_team_strengths(
    rho_star: float, n_teams: int, rng: np.random.Generator
) -> TeamStrengths:
    """Draw correlated attack/defend pairs.

    Bivariate normal with zero mean, marginal SD 0.35, and correlation
    rho_star between a team's attack and defend effects.
    """
    if not abs(rho_star) < 1:
        raise ValueError(f"need |rho_star| < 1, got {rho_star}")
    z = rng.standard_normal((2, n_teams))
    attack = STRENGTH_SD * z[0]
    defend = STRENGTH_SD * (rho_star * z[0] + math.sqrt(1.0 - rho_star**2) * z[1])
    return TeamStrengths(attack=attack, defend=defend)


def schedule_double_round_robin(n_teams: int) -> list[tuple[int, int]]:
    """Every ordered pair once: each team hosts every other team exactly once."""
    if n_teams < 2:
        raise ValueError(f"need at least 2 teams, got {n_teams}")
    return [(h, a) for h in range(n_teams) for a in range(n_teams) if h != a]


@dataclass
class SimSeason:
    """A full double round robin of simulated scores."""

    home: np.ndarray
    away: np.ndarray
    home_goals: np.ndarray
    away_goals: np.ndarray
    n_teams: int

    def __post_init__(self) -> None:
        n = len(self.home)
        if not (len(self.away) == len(self.home_goals) == len(self.away_goals) == n):
            raise ValueError("ragged season arrays")

    @property
    def n_games(self) -> int:
        return len(self.home)

    def goal_difference(self) -> np.ndarray:
        return self.home_goals.astype(float) - self.away_goals.astype(float)


def _schedule_arrays(n_teams: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = schedule_double_round_robin(n_teams)
    arr = np.array(pairs, dtype=np.int64)
    return arr[:, 0], arr[:, 1]


def simulate_bvp(
    strengths: TeamStrengths, T_star: float, rng: np.random.Generator
) -> SimSeason:
    """Independent-Poisson scores with multiplicative home advantage.

    Home rate exp(T* + attack_H + defend_A), away rate exp(attack_A +
    defend_H).
    """
    h, a = _schedule_arrays(strengths.n_teams)
    lam_home = np.exp(T_star + strengths.attack[h] + strengths.defend[a])
    lam_away = np.exp(strengths.attack[a] + strengths.defend[h])
    return SimSeason(
        home=h,
        away=a,
        home_goals=rng.poisson(lam_home),
        away_goals=rng.poisson(lam_away),
        n_teams=strengths.n_teams,
    )


def _truncated_normal(
    mean: np.ndarray, sd: float, lower: float, rng: np.random.Generator
) -> np.ndarray:
    # inverse-CDF sampling; exact mass at the lower bound matters for the
    # zero-goal frequency, so no rejection loop
    alpha = ndtr((lower - mean) / sd)
    u = rng.random(mean.shape)
    return mean + sd * ndtri(alpha + u * (1.0 - alpha))


def simulate_bvn(
    strengths: TeamStrengths, T_star: float, rng: np.random.Generator
) -> SimSeason:
    """Rounded truncated-normal scores with an additive home advantage.

    Score means 0.2 plus the strength terms, SD 1.75, truncated below at
    -0.49 and rounded to integers. The home advantage enters afterward as
    one extra home goal with probability T*, which is only defined for
    T* in {0, 0.25, 0.5}.
    """
    if T_star not in BVN_T_STARS:
        raise ValueError(
            f"the one-goal mechanism defines only T* in {BVN_T_STARS}, got {T_star}"
        )
    h, a = _schedule_arrays(strengths.n_teams)
    mean_home = BVN_BASE_MEAN + strengths.attack[h] + strengths.defend[a]
    mean_away = BVN_BASE_MEAN + strengths.attack[a] + strengths.defend[h]
    home_goals = np.round(
        _truncated_normal(mean_home, BVN_SD, BVN_LOWER, rng)
    ).astype(np.int64)
    away_goals = np.round(
        _truncated_normal(mean_away, BVN_SD, BVN_LOWER, rng)
    ).astype(np.int64)
    if T_star > 0:
        home_goals = home_goals + (rng.random(h.shape) < T_star)
    return SimSeason(
        home=h,
        away=a,
        home_goals=home_goals,
        away_goals=away_goals,
        n_teams=strengths.n_teams,
    )


def fit_ols_fixed_effects(season: SimSeason) -> float:
    """Least-squares home advantage from the goal-difference regression.

    Goal differential on an intercept plus home-team and away-team dummies,
    reference-coded by dropping the first team's dummy in both families.
    Returns the intercept estimate.
    """
    n = season.n_games
    k = season.n_teams - 1
    X = np.zeros((n, 1 + 2 * k))
    X[:, 0] = 1.0
    rows = np.arange(n)
    home_mask = season.home > 0
    X[rows[home_mask], season.home[home_mask]] = 1.0
    away_mask = season.away > 0
    X[rows[away_mask], k + season.away[away_mask]] = 1.0
    coef, _, rank, _ = np.linalg.lstsq(X, season.goal_difference(), rcond=None)
    if rank < X.shape[1]:
        raise EstimationError(
            f"design matrix rank {rank} < {X.shape[1]}: dummy coding degenerate"
        )
    return float(coef[0])


def _sim_chain_config(seed: int, **overrides) -> ChainConfig:
    settings = dict(
        n_chains=SIM_N_CHAINS,
        iterations=SIM_ITERATIONS,
        burn_in=SIM_BURN_IN,
        seed=seed,
    )
    settings.update(overrides)
    return ChainConfig(**settings)


def fit_paired_comparison(season: SimSeason, seed: int, **chain_overrides) -> float:
    """Posterior-mean home advantage from the goal-differential model.

    D = alpha + theta_home - theta_away + noise, with theta shrunk toward
    zero by a shared team variance. Returns the posterior mean of alpha.
    """
    d = season.goal_difference()
    h = season.home
    a = season.away
    n_teams = season.n_teams
    n_games = season.n_games

    alpha_prior = NormalPrior(0.0, 100.0)
    scale_prior = InvGammaPrior(1.0, 1.0)
    half_log_2pi = 0.5 * math.log(2.0 * math.pi)

    ix_alpha = 0
    sl_theta = slice(1, 1 + n_teams)
    ix_log_sigma_team = 1 + n_teams
    ix_log_sigma_err = 2 + n_teams

    def target(theta_vec: np.ndarray) -> float:
        alpha = theta_vec[ix_alpha]
        theta = theta_vec[sl_theta]
        log_s_team = theta_vec[ix_log_sigma_team]
        log_s_err = theta_vec[ix_log_sigma_err]
        s_team = math.exp(log_s_team)
        s_err = math.exp(log_s_err)
        resid = d - alpha - theta[h] + theta[a]
        ll = -n_games * (half_log_2pi + log_s_err) - float(
            resid @ resid
        ) / (2.0 * s_err**2)
        lp = alpha_prior.logpdf(alpha)
        lp -= n_teams * (half_log_2pi + log_s_team)
        lp -= float(theta @ theta) / (2.0 * s_team**2)
        # scales sampled on the log axis: prior density plus the Jacobian
        lp += scale_prior.logpdf(s_team) + log_s_team
        lp += scale_prior.logpdf(s_err) + log_s_err
        return ll + lp

    blocks = [
        ("alpha", np.array([ix_alpha])),
        ("theta", np.arange(sl_theta.start, sl_theta.stop)),
        ("log_sigma_team", np.array([ix_log_sigma_team])),
        ("log_sigma_err", np.array([ix_log_sigma_err])),
    ]
    names = (
        ["alpha"]
        + [f"theta[{t}]" for t in range(n_teams)]
        + ["log_sigma_team", "log_sigma_err"]
    )

    def init(rng: np.random.Generator) -> np.ndarray:
        return 0.1 * rng.standard_normal(3 + n_teams)

    draws = run_chains(
        target,
        init,
        _sim_chain_config(seed, **chain_overrides),
        blocks=blocks,
        param_names=names,
    )
    return float(np.mean(draws.pooled("alpha")))


def _season_to_matches(season: SimSeason) -> list[Match]:
    date = dt.date(2019, 7, 1)
    return [
        Match(
            league_id="sim",
            season_id="sim",
            date=date,
            home_team=f"t{season.home[i]:02d}",
            away_team=f"t{season.away[i]:02d}",
            home_goals=int(season.home_goals[i]),
            away_goals=int(season.away_goals[i]),
            home_yellows=None,
            away_yellows=None,
            is_post=False,
        )
        for i in range(season.n_games)
    ]


def fit_bvp_model(season: SimSeason, seed: int, **chain_overrides) -> float:
    """Posterior-mean home advantage from the bivariate Poisson model.

    Fits the goals model with zero covariance and wide priors, then maps
    the posterior means onto the goal-difference scale as
    exp(mu + T) - exp(mu).
    """
    spec = ModelSpec(
        outcome="goals", covariance_mode="zero", league_id="sim", seasons=("sim",)
    )
    design = Design(_season_to_matches(season), spec)
    priors = PriorSpec.noninformative("goals", "zero")
    draws = run_chains(
        design.make_log_density(priors),
        lambda rng: design.init_flat(rng),
        _sim_chain_config(seed, **chain_overrides),
        blocks=design.block_specs(),
        param_names=design.param_names,
    )
    mu_hat = float(np.mean(draws.pooled("mu[sim]")))
    t_hat = float(np.mean(draws.pooled("T")))
    return goal_scale_ha(mu_hat, t_hat)


def true_goal_difference_ha(dgp: str, T_star: float) -> float:
    """The simulated truth on the goal-difference scale.

    The Poisson DGP applies T* multiplicatively to a unit base rate, so at
    neutral strengths the expected goal difference is e^T* - 1. The rounded
    normal DGP adds a Bernoulli(T*) goal, worth exactly T* in expectation.
    """
    if dgp not in DGPS:
        raise ValueError(f"dgp must be one of {DGPS}, got {dgp!r}")
    if dgp == "bvp":
        return math.expm1(T_star)
    return T_star


ESTIMATOR_FUNCS: dict[str, Callable[[SimSeason, int], float]] = {
    "bivariate_poisson": fit_bvp_model,
    "paired_comparison": fit_paired_comparison,
    "linear_regression": lambda season, seed: fit_ols_fixed_effects(season),
}

ESTIMATORS = tuple(ESTIMATOR_FUNCS)


@dataclass
class SeasonEstimates:
    """All estimators' results for one simulated season."""

    dgp: str
    rho_star: float
    T_star: float
    season_index: int
    target: float
    estimates: dict[str, float] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)


def _cell_entropy(cell: SimCell, season_index: int) -> tuple[int, ...]:
    # the stream depends only on the cell's own identity, so restricting
    # the grid never reshuffles seeds
    return (
        cell.seed,
        DGPS.index(cell.dgp),
        int(round(-cell.rho_star * 100)),
        int(round(cell.T_star * 100)),
        season_index,
    )


def run_season(
    cell: SimCell,
    season_index: int,
    estimators: Sequence[str] = ESTIMATORS,
) -> SeasonEstimates:
    """Simulate one season of the cell and run every requested estimator."""
    ss = np.random.SeedSequence(entropy=_cell_entropy(cell, season_index))
    sim_stream, *fit_streams = ss.spawn(1 + len(estimators))
    rng = np.random.default_rng(sim_stream)
    strengths = gen_team_strengths(cell.rho_star, cell.n_teams, rng)
    if cell.dgp == "bvp":
        season = simulate_bvp(strengths, cell.T_star, rng)
    else:
        season = simulate_bvn(strengths, cell.T_star, rng)

    result = SeasonEstimates(
        dgp=cell.dgp,
        rho_star=cell.rho_star,
        T_star=cell.T_star,
        season_index=season_index,
        target=true_goal_difference_ha(cell.dgp, cell.T_star),
    )
    for name, stream in zip(estimators, fit_streams):
        fit_seed = int(stream.generate_state(1)[0])
        try:
            result.estimates[name] = ESTIMATOR_FUNCS[name](season, fit_seed)
        except (EstimationError, SamplerAbort, np.linalg.LinAlgError) as exc:
            result.errors[name] = f"{type(exc).__name__}: {exc}"
    return result


@dataclass(frozen=True)
class BiasRow:
    """Aggregated bias of one estimator in one grid cell."""

    dgp: str
    rho_star: float
    T_star: float
    estimator: str
    mab: float
    mb: float
    n_seasons: int
    n_failed: int

    @property
    def partial(self) -> bool:
        return self.n_failed > 0


@dataclass
class GridResult:
    rows: list[BiasRow]
    season_estimates: list[SeasonEstimates]

    def failures(self) -> list[tuple[str, float, float, int, str, str]]:
        out = []
        for se in self.season_estimates:
            for estimator, message in sorted(se.errors.items()):
                out.append(
                    (se.dgp, se.rho_star, se.T_star, se.season_index, estimator, message)
                )
        return out


def grid_cells(
    seed: int,
    seasons_per_cell: int,
    dgps: Sequence[str] = DGPS,
    rho_stars: Sequence[float] = RHO_STARS,
    t_stars: Sequence[float] = T_STARS,
    n_teams: int = 20,
) -> list[SimCell]:
    """The full factorial grid, one cell per (dgp, rho*, T*) combination."""
    return [
        SimCell(
            dgp=dgp,
            rho_star=rho,
            T_star=t,
            n_seasons=seasons_per_cell,
            n_teams=n_teams,
            seed=seed,
        )
        for dgp in dgps
        for rho in rho_stars
        for t in t_stars
    ]


def _season_task(args: tuple[SimCell, int, tuple[str, ...]]) -> SeasonEstimates:
    cell, season_index, estimators = args
    return run_season(cell, season_index, estimators)


def bias_grid(
    cells: Sequence[SimCell],
    estimators: Sequence[str] = ESTIMATORS,
    workers: int = 1,
) -> GridResult:
    """Run every cell's seasons and aggregate bias per (cell, estimator).

    Results are identical for any worker count: each (cell, season) task
    seeds its own generator and reduction follows task submission order.
    """
    unknown = [e for e in estimators if e not in ESTIMATOR_FUNCS]
    if unknown:
        raise ValueError(f"unknown estimators: {unknown}")
    estimators = tuple(estimators)
    tasks = [
        (cell, season_index, estimators)
        for cell in cells
        for season_index in range(cell.n_seasons)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            season_estimates = list(pool.map(_season_task, tasks, chunksize=1))
    else:
        season_estimates = [_season_task(t) for t in tasks]

    rows = []
    offset = 0
    for cell in cells:
        cell_results = season_estimates[offset : offset + cell.n_seasons]
        offset += cell.n_seasons
        target = true_goal_difference_ha(cell.dgp, cell.T_star)
        for estimator in estimators:
            values = np.array(
                [
                    se.estimates[estimator]
                    for se in cell_results
                    if estimator in se.estimates
                ]
            )
            n_failed = cell.n_seasons - values.size
            if values.size:
                mab = float(np.mean(np.abs(values - target)))
                mb = float(np.mean(values - target))
            else:
                mab = mb = float("nan")
            rows.append(
                BiasRow(
                    dgp=cell.dgp,
                    rho_star=cell.rho_star,
                    T_star=cell.T_star,
                    estimator=estimator,
                    mab=mab,
                    mb=mb,
                    n_seasons=cell.n_seasons,
                    n_failed=n_failed,
                )
            )
    return GridResult(rows=rows, season_estimates=season_estimates)


# ---------------------------------------------------------------------------
# serialization

_FLOAT_FMT = "%.17g"


def write_bias_csv(path: str | Path, rows: Sequence[BiasRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ("dgp", "rho_star", "T_star", "estimator", "mab", "mb", "n_seasons", "n_failed")
        )
        for r in rows:
            writer.writerow(
                (
                    r.dgp,
                    _FLOAT_FMT % r.rho_star,
                    _FLOAT_FMT % r.T_star,
                    r.estimator,
                    _FLOAT_FMT % r.mab,
                    _FLOAT_FMT % r.mb,
                    r.n_seasons,
                    r.n_failed,
                )
            )


def write_season_estimates_csv(
    path: str | Path, season_estimates: Sequence[SeasonEstimates]
) -> None:
    """Raw per-season estimates, one row per (season, estimator), for audit."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ("dgp", "rho_star", "T_star", "season", "estimator", "estimate", "target")
        )
        for se in season_estimates:
            for estimator in sorted(set(se.estimates) | set(se.errors)):
                estimate = se.estimates.get(estimator)
                writer.writerow(
                    (
                        se.dgp,
                        _FLOAT_FMT % se.rho_star,
                        _FLOAT_FMT % se.T_star,
                        se.season_index,
                        estimator,
                        _FLOAT_FMT % estimate if estimate is not None else "error",
                        _FLOAT_FMT % se.target,
                    )
                )
