"""Blockwise adaptive random-walk Metropolis with multi-chain diagnostics.

The engine is generic over any log density on a flat parameter vector.
Parameters are updated in blocks (a block is a named set of vector
indices); each block carries its own Gaussian proposal scale, adapted
toward a target acceptance rate during burn-in and frozen afterwards.
Each chain draws its randomness from an independent stream derived from
(seed, chain index), so runs are bit-reproducible regardless of how
chains are scheduled.

Diagnostics follow the split-chain convention: every chain is halved
before computing the potential scale reduction factor or the
autocorrelation-based effective sample size.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ChainConfig",
    "PosteriorDraws",
    "SamplerAbort",
    "Summary",
    "run_chains",
    "r_hat",
    "ess",
    "summarize",
]

Blocks = Sequence[tuple[str, np.ndarray]]


@dataclass(frozen=True)
class ChainConfig:
    """How to run one fit: chain count, lengths, seed, adaptation target."""

    n_chains: int
    iterations: int
    burn_in: int
    seed: int
    target_accept: float = 0.3
    adapt_window: int = 50
    initial_step: float = 0.2

    def __post_init__(self) -> None:
        if self.n_chains < 2:
            raise ValueError("need at least 2 chains for convergence diagnostics")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError(
                f"burn_in must satisfy 0 <= burn_in < iterations, got "
                f"{self.burn_in} / {self.iterations}"
            )
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must be in (0, 1)")
        if self.adapt_window < 1 or self.initial_step <= 0:
            raise ValueError("bad adaptation settings")

    @property
    def retained(self) -> int:
        return self.iterations - self.burn_in


class SamplerAbort(RuntimeError):
    """Raised when the target log density turns NaN mid-run.

    Carries the chain state at failure so the defect can be replayed.
    """

    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


@dataclass
class PosteriorDraws:
    """Retained draws, (chain, iteration, parameter), plus run metadata."""

    draws: np.ndarray
    param_names: tuple[str, ...]
    config: ChainConfig
    acceptance: dict[str, np.ndarray] = field(default_factory=dict)
    step_sizes: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n_chains, n_iter, n_params = self.draws.shape
        if n_params != len(self.param_names):
            raise ValueError("parameter naming does not match draw matrix width")
        if n_chains != self.config.n_chains or n_iter != self.config.retained:
            raise ValueError("draw matrix shape does not match config")

    def index_of(self, name: str) -> int:
        try:
            return self.param_names.index(name)
        except ValueError:
            raise KeyError(f"no parameter named {name!r}") from None

    def matrix(self, name: str) -> np.ndarray:
        """Draws for one parameter as a (chain, iteration) matrix."""
        return self.draws[:, :, self.index_of(name)]

    def pooled(self, name: str) -> np.ndarray:
        """All chains' retained draws for one parameter, chain-major."""
        return self.matrix(name).reshape(-1)

    def r_hat_all(self) -> dict[str, float]:
        return {name: r_hat(self.matrix(name)) for name in self.param_names}

    def ess_all(self) -> dict[str, float]:
        return {name: ess(self.matrix(name)) for name in self.param_names}

    def summaries(self) -> dict[str, "Summary"]:
        return {name: summarize(self.pooled(name)) for name in self.param_names}

    def to_csv(self, path: str | Path) -> None:
        """One row per retained draw; chain id first, then every parameter."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("chain",) + self.param_names)
            for c in range(self.draws.shape[0]):
                for row in self.draws[c]:
                    writer.writerow([c] + [format(v, ".17g") for v in row])


def run_chains(
    target: Callable[[np.ndarray], float],
    init: Callable[[np.random.Generator], np.ndarray],
    config: ChainConfig,
    blocks: Blocks | None = None,
    param_names: Sequence[str] | None = None,
) -> PosteriorDraws:
    """Draw from ``target`` with blockwise adaptive random-walk Metropolis.

    ``init`` maps a chain's generator to its start vector; the target must
    be finite there.  ``blocks`` defaults to one block over the whole
    vector.  Identical (seed, config, target, init) give bit-identical
    draws.

    Raises ValueError if any chain starts where the target is -inf, and
    :class:`SamplerAbort` if the target evaluates to NaN mid-run.
    """
    chain_results = [
        _run_single_chain(target, init, config, blocks, chain)
        for chain in range(config.n_chains)
    ]
    draws = np.stack([r[0] for r in chain_results])
    block_names = list(chain_results[0][1])
    acceptance = {
        name: np.array([r[1][name] for r in chain_results]) for name in block_names
    }
    steps = {name: np.array([r[2][name] for r in chain_results]) for name in block_names}
    if param_names is None:
        param_names = tuple(f"theta[{i}]" for i in range(draws.shape[2]))
    return PosteriorDraws(
        draws=draws,
        param_names=tuple(param_names),
        config=config,
        acceptance=acceptance,
        step_sizes=steps,
    )


def _run_single_chain(target, init, config, blocks, chain_index):
    rng = np.random.default_rng(
        np.random.SeedSequence(config.seed, spawn_key=(chain_index,))
    )
    theta = np.array(init(rng), dtype=float, copy=True)
    if theta.ndim != 1:
        raise ValueError("init must produce a 1-D parameter vector")
    if blocks is None:
        blocks = [("all", np.arange(theta.size))]

    lp = target(theta)
    if math.isnan(lp):
        raise SamplerAbort(
            "target is NaN at initialization",
            {"chain": chain_index, "theta": theta.copy()},
        )
    if lp == -math.inf:
        raise ValueError(
            f"chain {chain_index}: target is -infinity at the initial point"
        )

    log_step = {name: math.log(config.initial_step) for name, _ in blocks}
    window_hits = {name: 0 for name, _ in blocks}
    window_seen = {name: 0 for name, _ in blocks}
    windows_done = {name: 0 for name, _ in blocks}
    kept_hits = {name: 0 for name, _ in blocks}
    kept_seen = {name: 0 for name, _ in blocks}

    retained = np.empty((config.retained, theta.size))
    for it in range(config.iterations):
        adapting = it < config.burn_in
        for name, ix in blocks:
            proposal = theta.copy()
            proposal[ix] = theta[ix] + math.exp(log_step[name]) * rng.standard_normal(
                ix.size
            )
            lp_prop = target(proposal)
            if math.isnan(lp_prop):
                raise SamplerAbort(
                    f"target is NaN at iteration {it}, block {name!r}",
                    {
                        "chain": chain_index,
                        "iteration": it,
                        "block": name,
                        "theta": theta.copy(),
                        "proposal": proposal,
                        "log_density": lp,
                    },
                )
            accepted = math.log(rng.random()) < lp_prop - lp
            if accepted:
                theta = proposal
                lp = lp_prop
            if adapting:
                window_hits[name] += accepted
                window_seen[name] += 1
                if window_seen[name] == config.adapt_window:
                    windows_done[name] += 1
                    rate = window_hits[name] / window_seen[name]
                    # decaying Robbins-Monro step toward the target rate
                    log_step[name] += (rate - config.target_accept) / math.sqrt(
                        windows_done[name]
                    )
                    window_hits[name] = window_seen[name] = 0
            else:
                kept_hits[name] += accepted
                kept_seen[name] += 1
        if not adapting:
            retained[it - config.burn_in] = theta

    rates = {
        name: (kept_hits[name] / kept_seen[name]) if kept_seen[name] else math.nan
        for name, _ in blocks
    }
    steps = {name: math.exp(log_step[name]) for name, _ in blocks}
    return retained, rates, steps


# ---------------------------------------------------------------- diagnostics


def _split_chains(matrix: np.ndarray) -> np.ndarray:
    """Halve each chain; drops one trailing draw from odd-length chains."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValueError("expected (chain, iteration) matrix")
    n_chains, n = matrix.shape
    if n_chains < 2 or n < 4:
        raise ValueError("diagnostics need at least 2 chains of at least 4 draws")
    half = n // 2
    return np.concatenate([matrix[:, :half], matrix[:, half : 2 * half]], axis=0)


def r_hat(matrix: np.ndarray) -> float:
    """Split-chain potential scale reduction factor.

    Values near 1 indicate the chains agree; NaN flags a parameter whose
    draws carry no variance at all (a stuck or degenerate chain).
    """
    split = _split_chains(matrix)
    m, n = split.shape
    chain_means = split.mean(axis=1)
    within = split.var(axis=1, ddof=1).mean()
    if within == 0.0:
        return math.nan
    between = n * chain_means.var(ddof=1)
    var_plus = (n - 1) / n * within + between / n
    return float(math.sqrt(var_plus / within))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance by FFT, lags 0..n-1."""
    n = x.size
    centered = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real
    return acov / n


def ess(matrix: np.ndarray, cap_factor: float = 1.5) -> float:
    """Effective sample size with Geyer initial-positive-sequence truncation.

    Combines split chains through the pooled variance estimate, sums
    autocorrelations in adjacent pairs until a pair turns negative, and
    caps the result at ``cap_factor`` times the total retained draws
    (antithetic chains can exceed the nominal count slightly).
    """
    split = _split_chains(matrix)
    m, n = split.shape
    total = matrix.size

    acovs = np.stack([_autocovariance(split[i]) for i in range(m)])
    chain_vars = acovs[:, 0] * n / (n - 1)
    within = chain_vars.mean()
    if within == 0.0:
        return math.nan
    between = n * split.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * within + between / n

    mean_acov = acovs.mean(axis=0)
    rho = 1.0 - (within - mean_acov) / var_plus
    rho[0] = 1.0

    # Geyer: sum rho in adjacent pairs, stop at the first negative pair,
    # and force the pair sums to be non-increasing
    tau = 0.0
    prev_pair = math.inf
    k = 0
    while 2 * k + 1 < n:
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair < 0:
            break
        pair = min(pair, prev_pair)
        tau += pair
        prev_pair = pair
        k += 1
    tau = max(2.0 * tau - 1.0, 1e-12)
    return float(min(total / tau, cap_factor * total))


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    q2_5: float
    q25: float
    q50: float
    q75: float
    q97_5: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.mean, self.sd, self.q2_5, self.q25, self.q50, self.q75, self.q97_5)


def summarize(draws: np.ndarray) -> Summary:
    """Sample mean, SD, and the standard five quantiles of pooled draws."""
    draws = np.asarray(draws, dtype=float).reshape(-1)
    if draws.size == 0:
        raise ValueError("no draws to summarize")
    q = np.percentile(draws, [2.5, 25.0, 50.0, 75.0, 97.5])
    sd = float(draws.std(ddof=1)) if draws.size > 1 else 0.0
    return Summary(float(draws.mean()), sd, *map(float, q))
