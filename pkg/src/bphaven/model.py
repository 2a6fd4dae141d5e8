"""Count models for paired match outcomes and their log-posterior.

Two model families over one league's matches, both bivariate Poisson:

* goals:   log l1 = mu_s + T*pre + T'*post + attack_home + defend_away,
           log l2 = mu_s + attack_away + defend_home
* yellows: log l1 = mu_s + T*pre + T'*post + team_home,
           log l2 = mu_s + team_away

with the covariance component either fixed to zero or log-constant,
l3 = exp(gamma).  T is the home advantage applied to matches before the
league's restart date, T' the one after.  Attack, defend, and team-card
effects are per (team, season) with hierarchical zero-mean normal priors;
their scales carry Inverse-Gamma(1, 1) priors.

A Design maps matches onto dense parameter slots and provides the flat
parameter vector the sampler works in (scale parameters enter the flat
vector as logs so the chain moves in unconstrained space).
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .bpcore import log_factorial_array

__all__ = [
    "ModelSpec",
    "ParamVector",
    "NormalPrior",
    "InvGammaPrior",
    "PriorSpec",
    "Design",
    "build_design",
    "log_likelihood",
    "log_prior",
    "log_posterior",
    "empirical_bayes_priors",
    "GAMMA_PRIOR_VARIANCE",
]

OUTCOMES = ("goals", "yellows")
COV_MODES = ("zero", "free")

# prior variance of gamma (log covariance) per outcome, free mode only
GAMMA_PRIOR_VARIANCE = {"goals": 0.5, "yellows": 2.0}


@dataclass(frozen=True)
class ModelSpec:
    """What to fit: outcome kind, covariance mode, league, and seasons."""

    outcome: str
    covariance_mode: str
    league_id: str
    seasons: tuple[str, ...]
    restart_date: dt.date | None = None

    def __post_init__(self) -> None:
        if self.outcome not in OUTCOMES:
            raise ValueError(f"outcome must be one of {OUTCOMES}, got {self.outcome!r}")
        if self.covariance_mode not in COV_MODES:
            raise ValueError(
                f"covariance_mode must be one of {COV_MODES}, got {self.covariance_mode!r}"
            )
        if not self.seasons:
            raise ValueError("seasons must be non-empty")


@dataclass
class ParamVector:
    """One point in parameter space, on the natural (not log-sigma) scale."""

    mu: np.ndarray
    T: float | None = None
    T_prime: float | None = None
    attack: np.ndarray | None = None
    defend: np.ndarray | None = None
    team_card: np.ndarray | None = None
    sigma_att: float | None = None
    sigma_def: float | None = None
    sigma_team: float | None = None
    gamma: float | None = None


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not self.variance > 0:
            raise ValueError(f"prior variance must be > 0, got {self.variance}")

    def logpdf(self, x: float) -> float:
        return -0.5 * (
            math.log(2.0 * math.pi * self.variance)
            + (x - self.mean) ** 2 / self.variance
        )


@dataclass(frozen=True)
class InvGammaPrior:
    """Shape-rate Inverse-Gamma; density proportional to x^-(shape+1) e^(-rate/x)."""

    shape: float
    rate: float

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("shape and rate must be > 0")

    def logpdf(self, x: float) -> float:
        if x <= 0:
            return -math.inf
        return (
            self.shape * math.log(self.rate)
            - math.lgamma(self.shape)
            - (self.shape + 1.0) * math.log(x)
            - self.rate / x
        )


@dataclass(frozen=True)
class PriorSpec:
    mu_prior: NormalPrior
    T_prior: NormalPrior
    T_prime_prior: NormalPrior
    sigma_prior: InvGammaPrior
    gamma_prior: NormalPrior | None = None

    @classmethod
    def noninformative(cls, outcome: str, covariance_mode: str) -> "PriorSpec":
        """The default prior block: N(0, 25) locations, IG(1, 1) scales."""
        wide = NormalPrior(0.0, 25.0)
        gamma = None
        if covariance_mode == "free":
            gamma = NormalPrior(0.0, GAMMA_PRIOR_VARIANCE[outcome])
        return cls(
            mu_prior=wide,
            T_prior=wide,
            T_prime_prior=wide,
            sigma_prior=InvGammaPrior(1.0, 1.0),
            gamma_prior=gamma,
        )


def empirical_bayes_priors(
    stage1: dict[str, tuple[float, float]], outcome: str
) -> dict[str, PriorSpec]:
    """Priors for the free-covariance refit, built from zero-covariance fits.

    ``stage1`` maps league id to that league's (T posterior mean, T' posterior
    mean) from the covariance-zero fit.  Every league receives the same
    normal priors: centered at the cross-league means, with variance exactly
    9 times the cross-league sample variance (denominator n-1).
    """
    if len(stage1) < 2:
        raise ValueError(
            "empirical-Bayes priors need at least 2 leagues of stage-1 estimates"
        )
    t_hats = np.array([v[0] for v in stage1.values()])
    tp_hats = np.array([v[1] for v in stage1.values()])
    var_t = float(np.var(t_hats, ddof=1))
    var_tp = float(np.var(tp_hats, ddof=1))
    if var_t == 0.0 or var_tp == 0.0:
        raise ValueError("stage-1 estimates are all equal; prior would be degenerate")
    t_prior = NormalPrior(float(t_hats.mean()), 9.0 * var_t)
    tp_prior = NormalPrior(float(tp_hats.mean()), 9.0 * var_tp)
    shared = PriorSpec(
        mu_prior=NormalPrior(0.0, 25.0),
        T_prior=t_prior,
        T_prime_prior=tp_prior,
        sigma_prior=InvGammaPrior(1.0, 1.0),
        gamma_prior=NormalPrior(0.0, GAMMA_PRIOR_VARIANCE[outcome]),
    )
    return {league: shared for league in stage1}


class Design:
    """Index maps from one league's matches to dense parameter slots.

    Immutable after construction; chains running concurrently share one
    instance.  The flat layout is: season intercepts, T (if any match is
    pre-restart), T' (if any is post), the team-season effect families,
    log scale parameters, and gamma last when the covariance is free.
    """

    def __init__(self, matches: Sequence, spec: ModelSpec):
        self.spec = spec
        self.outcome = spec.outcome
        self.covariance_mode = spec.covariance_mode

        usable = []
        for m in matches:
            if m.league_id != spec.league_id:
                raise ValueError(
                    f"match led by {m.league_id!r} does not belong to league {spec.league_id!r}"
                )
            if m.season_id not in spec.seasons:
                raise ValueError(f"unknown season {m.season_id!r} for this model")
            complete = m.has_goals() if spec.outcome == "goals" else m.has_yellows()
            if complete:
                usable.append(m)
        if not usable:
            raise ValueError(f"no matches with complete {spec.outcome} counts")

        self.season_labels = tuple(s for s in spec.seasons if any(m.season_id == s for m in usable))
        season_index = {s: i for i, s in enumerate(self.season_labels)}

        ts_labels = sorted(
            {(m.home_team, m.season_id) for m in usable}
            | {(m.away_team, m.season_id) for m in usable}
        )
        self.team_season_labels = tuple(ts_labels)
        ts_index = {ts: i for i, ts in enumerate(ts_labels)}

        n = len(usable)
        self.n_matches = n
        self.season_ix = np.array([season_index[m.season_id] for m in usable])
        self.home_ts = np.array([ts_index[(m.home_team, m.season_id)] for m in usable])
        self.away_ts = np.array([ts_index[(m.away_team, m.season_id)] for m in usable])
        if spec.restart_date is not None:
            post = np.array([m.date >= spec.restart_date for m in usable])
        else:
            post = np.array([bool(m.is_post) for m in usable])
        self.is_post = post
        self.is_pre = ~post
        if spec.outcome == "goals":
            self.y_home = np.array([m.home_goals for m in usable], dtype=np.int64)
            self.y_away = np.array([m.away_goals for m in usable], dtype=np.int64)
        else:
            self.y_home = np.array([m.home_yellows for m in usable], dtype=np.int64)
            self.y_away = np.array([m.away_yellows for m in usable], dtype=np.int64)

        self.has_pre = bool(self.is_pre.any())
        self.has_post = bool(self.is_post.any())
        self._build_layout()
        self._lfact_const = -float(
            log_factorial_array(self.y_home).sum() + log_factorial_array(self.y_away).sum()
        )

    # ------------------------------------------------------------------ layout

    def _build_layout(self) -> None:
        S = len(self.season_labels)
        TS = len(self.team_season_labels)
        names: list[str] = []
        self.sl_mu = slice(0, S)
        names += [f"mu[{s}]" for s in self.season_labels]
        pos = S
        self.ix_T = self.ix_T_prime = None
        if self.has_pre:
            self.ix_T = pos
            names.append("T")
            pos += 1
        if self.has_post:
            self.ix_T_prime = pos
            names.append("T_prime")
            pos += 1
        if self.outcome == "goals":
            self.sl_attack = slice(pos, pos + TS)
            names += [f"attack[{t}:{s}]" for t, s in self.team_season_labels]
            pos += TS
            self.sl_defend = slice(pos, pos + TS)
            names += [f"defend[{t}:{s}]" for t, s in self.team_season_labels]
            pos += TS
            self.sl_team_card = None
            self.ix_log_sigma_att = pos
            names.append("log_sigma_att")
            pos += 1
            self.ix_log_sigma_def = pos
            names.append("log_sigma_def")
            pos += 1
            self.ix_log_sigma_team = None
            self._scale_ixs = (self.ix_log_sigma_att, self.ix_log_sigma_def)
        else:
            self.sl_attack = self.sl_defend = None
            self.sl_team_card = slice(pos, pos + TS)
            names += [f"team_card[{t}:{s}]" for t, s in self.team_season_labels]
            pos += TS
            self.ix_log_sigma_att = self.ix_log_sigma_def = None
            self.ix_log_sigma_team = pos
            names.append("log_sigma_team")
            pos += 1
            self._scale_ixs = (self.ix_log_sigma_team,)
        self.ix_gamma = None
        if self.covariance_mode == "free":
            self.ix_gamma = pos
            names.append("gamma")
            pos += 1
        self.n_params = pos
        self.param_names = tuple(names)
        # everything except the log-scales feeds the likelihood
        like_mask = np.ones(pos, dtype=bool)
        like_mask[list(self._scale_ixs)] = False
        self._like_ixs = np.nonzero(like_mask)[0]

    @property
    def n_seasons(self) -> int:
        return len(self.season_labels)

    @property
    def n_team_seasons(self) -> int:
        return len(self.team_season_labels)

    def block_specs(self) -> list[tuple[str, np.ndarray]]:
        """Parameter blocks for blockwise Metropolis updates."""
        blocks: list[tuple[str, np.ndarray]] = []
        for i, s in enumerate(self.season_labels):
            blocks.append((f"mu[{s}]", np.array([i])))
        if self.ix_T is not None:
            blocks.append(("T", np.array([self.ix_T])))
        if self.ix_T_prime is not None:
            blocks.append(("T_prime", np.array([self.ix_T_prime])))
        if self.outcome == "goals":
            blocks.append(("attack", np.arange(self.sl_attack.start, self.sl_attack.stop)))
            blocks.append(("defend", np.arange(self.sl_defend.start, self.sl_defend.stop)))
            blocks.append(("log_sigma_att", np.array([self.ix_log_sigma_att])))
            blocks.append(("log_sigma_def", np.array([self.ix_log_sigma_def])))
        else:
            blocks.append(
                ("team_card", np.arange(self.sl_team_card.start, self.sl_team_card.stop))
            )
            blocks.append(("log_sigma_team", np.array([self.ix_log_sigma_team])))
        if self.ix_gamma is not None:
            blocks.append(("gamma", np.array([self.ix_gamma])))
        return blocks

    # ------------------------------------------------------- pack / unpack

    def pack(self, params: ParamVector) -> np.ndarray:
        theta = np.zeros(self.n_params)
        theta[self.sl_mu] = params.mu
        if self.ix_T is not None:
            if params.T is None:
                raise ValueError("design has pre-restart matches but T is missing")
            theta[self.ix_T] = params.T
        if self.ix_T_prime is not None:
            if params.T_prime is None:
                raise ValueError("design has post-restart matches but T_prime is missing")
            theta[self.ix_T_prime] = params.T_prime
        if self.outcome == "goals":
            theta[self.sl_attack] = params.attack
            theta[self.sl_defend] = params.defend
            theta[self.ix_log_sigma_att] = math.log(params.sigma_att)
            theta[self.ix_log_sigma_def] = math.log(params.sigma_def)
        else:
            theta[self.sl_team_card] = params.team_card
            theta[self.ix_log_sigma_team] = math.log(params.sigma_team)
        if self.ix_gamma is not None:
            if params.gamma is None:
                raise ValueError("covariance mode is free but gamma is missing")
            theta[self.ix_gamma] = params.gamma
        return theta

    def unpack(self, theta: np.ndarray) -> ParamVector:
        pv = ParamVector(mu=theta[self.sl_mu].copy())
        if self.ix_T is not None:
            pv.T = float(theta[self.ix_T])
        if self.ix_T_prime is not None:
            pv.T_prime = float(theta[self.ix_T_prime])
        if self.outcome == "goals":
            pv.attack = theta[self.sl_attack].copy()
            pv.defend = theta[self.sl_defend].copy()
            pv.sigma_att = float(np.exp(theta[self.ix_log_sigma_att]))
            pv.sigma_def = float(np.exp(theta[self.ix_log_sigma_def]))
        else:
            pv.team_card = theta[self.sl_team_card].copy()
            pv.sigma_team = float(np.exp(theta[self.ix_log_sigma_team]))
        if self.ix_gamma is not None:
            pv.gamma = float(theta[self.ix_gamma])
        return pv

    def init_flat(self, rng: np.random.Generator, jitter: float = 0.1) -> np.ndarray:
        """Start near the prior center: locations 0, scales 1, small jitter."""
        return rng.normal(0.0, jitter, size=self.n_params)

    # ------------------------------------------------------- log densities

    def _linear_predictors(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu = theta[self.sl_mu][self.season_ix]
        ha = np.zeros(self.n_matches)
        if self.ix_T is not None:
            ha[self.is_pre] = theta[self.ix_T]
        if self.ix_T_prime is not None:
            ha[self.is_post] = theta[self.ix_T_prime]
        if self.outcome == "goals":
            att = theta[self.sl_attack]
            dfd = theta[self.sl_defend]
            eta1 = mu + ha + att[self.home_ts] + dfd[self.away_ts]
            eta2 = mu + att[self.away_ts] + dfd[self.home_ts]
        else:
            tau = theta[self.sl_team_card]
            eta1 = mu + ha + tau[self.home_ts]
            eta2 = mu + tau[self.away_ts]
        return eta1, eta2

    def _series_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        if not hasattr(self, "_series_cache"):
            y1, y2 = self.y_home, self.y_away
            kmax = int(np.minimum(y1, y2).max())
            ks = np.arange(kmax + 1)
            C = np.full((self.n_matches, kmax + 1), -np.inf)
            C[:, 0] = 0.0
            lf1 = log_factorial_array(y1)
            lf2 = log_factorial_array(y2)
            for k in range(1, kmax + 1):
                ok = (y1 >= k) & (y2 >= k)
                C[ok, k] = (
                    lf1[ok]
                    - log_factorial_array(y1[ok] - k)
                    + lf2[ok]
                    - log_factorial_array(y2[ok] - k)
                    - log_factorial_array(np.array([k]))[0]
                )
            self._series_cache = (C, ks.astype(float))
        return self._series_cache

    def log_likelihood_flat(self, theta: np.ndarray) -> float:
        """Match-set log likelihood at a flat parameter vector."""
        y1, y2 = self.y_home, self.y_away
        eta1, eta2 = self._linear_predictors(theta)
        with np.errstate(over="ignore"):
            core = (
                float(y1 @ eta1 + y2 @ eta2)
                - float(np.exp(eta1).sum() + np.exp(eta2).sum())
            )
            if self.ix_gamma is not None:
                g = float(theta[self.ix_gamma])
                C, ks = self._series_matrix()
                r = g - eta1 - eta2
                log_series = logsumexp(C + r[:, None] * ks, axis=1)
                core += float(log_series.sum()) - self.n_matches * math.exp(g)
        return core + self._lfact_const

    def log_prior_flat(self, theta: np.ndarray, priors: PriorSpec) -> float:
        """Log prior at a flat vector, including the log-scale Jacobian."""
        lp = 0.0
        mu = theta[self.sl_mu]
        v = priors.mu_prior.variance
        lp += -0.5 * float(
            len(mu) * math.log(2.0 * math.pi * v) + ((mu - priors.mu_prior.mean) ** 2).sum() / v
        )
        if self.ix_T is not None:
            lp += priors.T_prior.logpdf(float(theta[self.ix_T]))
        if self.ix_T_prime is not None:
            lp += priors.T_prime_prior.logpdf(float(theta[self.ix_T_prime]))

        def family(sl: slice, log_sigma_ix: int) -> float:
            z = float(theta[log_sigma_ix])
            sigma = math.exp(z)
            x = theta[sl]
            out = -0.5 * float(
                len(x) * math.log(2.0 * math.pi * sigma * sigma) + (x**2).sum() / (sigma * sigma)
            )
            # Inverse-Gamma on sigma plus the d(sigma)/d(log sigma) Jacobian
            out += priors.sigma_prior.logpdf(sigma) + z
            return out

        if self.outcome == "goals":
            lp += family(self.sl_attack, self.ix_log_sigma_att)
            lp += family(self.sl_defend, self.ix_log_sigma_def)
        else:
            lp += family(self.sl_team_card, self.ix_log_sigma_team)
        if self.ix_gamma is not None:
            if priors.gamma_prior is None:
                raise ValueError("free covariance mode needs a gamma prior")
            lp += priors.gamma_prior.logpdf(float(theta[self.ix_gamma]))
        return lp

    def make_log_density(self, priors: PriorSpec) -> Callable[[np.ndarray], float]:
        """Posterior log density over flat vectors, for the sampler.

        The likelihood is cached against the likelihood-relevant slice of
        the vector, so scale-only proposals (which cannot change it) pay
        only the prior evaluation.  A few entries are kept: in a block
        sweep the chain's current state must survive the rejected location
        proposals evaluated between two scale updates.
        """
        like_ixs = self._like_ixs
        cache: dict[bytes, float] = {}

        def log_density(theta: np.ndarray) -> float:
            key = theta[like_ixs].tobytes()
            ll = cache.get(key)
            if ll is None:
                ll = self.log_likelihood_flat(theta)
                if len(cache) >= 6:
                    cache.pop(next(iter(cache)))
            else:
                cache.pop(key)
            cache[key] = ll
            return ll + self.log_prior_flat(theta, priors)

        return log_density


def build_design(matches: Sequence, spec: ModelSpec) -> Design:
    """Build the index maps and parameter layout for one league fit.

    Matches missing the outcome's counts are excluded here, so the goals
    and yellows samples for one league generally differ in size.
    """
    return Design(matches, spec)


def log_likelihood(params: ParamVector, design: Design) -> float:
    """Structured-parameter entry point; see Design.log_likelihood_flat."""
    return design.log_likelihood_flat(design.pack(params))


def log_prior(params: ParamVector, priors: PriorSpec, design: Design) -> float:
    """Log prior density on the natural scale (no Jacobian).

    Scale parameters at or below 0 give -inf: the region is rejected, not
    an error.
    """
    sigmas = [
        s
        for s in (params.sigma_att, params.sigma_def, params.sigma_team)
        if s is not None
    ]
    if any(s <= 0 for s in sigmas):
        return -math.inf
    theta = design.pack(params)
    lp = design.log_prior_flat(theta, priors)
    # strip the change-of-variables term the flat path adds
    for ix in design._scale_ixs:
        lp -= float(theta[ix])
    return lp


def log_posterior(params: ParamVector, design: Design, priors: PriorSpec) -> float:
    lp = log_prior(params, priors, design)
    if lp == -math.inf:
        return -math.inf
    return lp + log_likelihood(params, design)
