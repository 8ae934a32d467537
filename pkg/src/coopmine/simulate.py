"""Seeded Monte Carlo engine for the endlessly repeated miners' dilemma.

Agents play memory-one strategies; one iteration pays everyone from the
current action profile and redraws actions from the per-agent cooperation
probabilities.  Randomness is counter-based: every (master seed, run,
iteration) triple keys a fresh Philox stream, so trajectories are
bit-reproducible no matter how runs are scheduled across threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dilemma import DilemmaPayoffs, ZDStrategy
from .model import ValidationError

__all__ = [
    "SimConfig",
    "SimTrajectory",
    "BatchResult",
    "step",
    "run",
    "batch",
    "fairness_check",
]


@dataclass(frozen=True)
class SimConfig:
    """One simulation setup: population, payoffs, strategies, seeding.

    `groups` lists (strategy, agent count) pairs; agents take group
    strategies in listed order, which lets 10,000 identical agents share
    a single 20,000-entry strategy object.  `error_rate` flips each drawn
    action independently (default off: accidental desertion is modeled by
    an initial cooperation below 1).
    """

    payoffs: DilemmaPayoffs
    groups: tuple
    iterations: int
    initial_cooperation: float
    master_seed: int = 0
    runs: int = 1
    error_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        n = sum(count for _, count in self.groups)
        if n != self.payoffs.n:
            raise ValidationError(
                f"group sizes sum to {n}, payoffs expect n={self.payoffs.n}"
            )
        if n < 2:
            raise ValidationError("need at least 2 agents")
        for strat, count in self.groups:
            if count <= 0:
                raise ValidationError("group counts must be positive")
            if strat.n != n:
                raise ValidationError(
                    f"strategy indexed for {strat.n} players, population is {n}"
                )
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if not 0.0 <= self.initial_cooperation <= 1.0:
            raise ValidationError("initial_cooperation must lie in [0, 1]")
        if not 0.0 <= self.error_rate < 1.0:
            raise ValidationError("error_rate must lie in [0, 1)")
        if self.runs < 1:
            raise ValidationError("runs must be >= 1")

    @property
    def n(self) -> int:
        return self.payoffs.n


@dataclass
class SimTrajectory:
    """One run: cooperation degree per iteration and per-agent totals."""

    run: int
    degrees: np.ndarray = field(repr=False)  # iterations+1 entries, [0]=initial
    cumulative_utility: np.ndarray = field(repr=False)  # per agent

    @property
    def final_degree(self) -> float:
        return float(self.degrees[-1])


def _group_index(config: SimConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(agent -> group row, stacked p_C, stacked p_D)."""
    idx = np.empty(config.n, dtype=np.intp)
    pcs, pds = [], []
    at = 0
    for g, (strat, count) in enumerate(config.groups):
        idx[at : at + count] = g
        pcs.append(strat.p_cooperate)
        pds.append(strat.p_desert)
        at += count
    return idx, np.vstack(pcs), np.vstack(pds)


def _rng(master_seed: int, run_index: int, iteration: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=(master_seed, run_index, iteration))
    return np.random.Generator(np.random.Philox(ss))


def step(actions, strategies, payoffs: DilemmaPayoffs, rng) -> tuple:
    """One iteration: pay the profile, draw next actions.

    `strategies` is one ZDStrategy (shared) or a per-agent sequence.
    Returns (next actions, per-agent utility of the current profile).
    Exposed mainly for exact small-instance analysis; `run` uses the same
    arithmetic vectorized over agent groups.
    """
    actions = np.asarray(actions, dtype=bool)
    n = actions.shape[0]
    j = int(actions.sum()) - actions  # cooperating co-players per agent
    utility = np.where(actions, payoffs.a[j], payoffs.b[j])
    if isinstance(strategies, ZDStrategy):
        p = np.where(actions, strategies.p_cooperate[j], strategies.p_desert[j])
    else:
        p = np.array(
            [
                s.p_cooperate[jj] if act else s.p_desert[jj]
                for s, act, jj in zip(strategies, actions, j)
            ]
        )
    nxt = rng.random(n) < p
    return nxt, utility


def run(config: SimConfig, run_index: int = 0) -> SimTrajectory:
    """Simulate one trajectory of the repeated dilemma.

    Iteration 0 seats exactly round(IC * n) cooperators drawn uniformly;
    each later iteration draws from its own keyed generator, so a
    trajectory never depends on how many runs execute around it.
    """
    n = config.n
    group, pcs, pds = _group_index(config)
    rng0 = _rng(config.master_seed, run_index, 0)
    m = int(round(config.initial_cooperation * n))
    actions = np.zeros(n, dtype=bool)
    actions[rng0.permutation(n)[:m]] = True

    degrees = np.empty(config.iterations + 1)
    degrees[0] = actions.mean()
    total = np.zeros(n)
    a, b = config.payoffs.a, config.payoffs.b
    for it in range(1, config.iterations + 1):
        rng = _rng(config.master_seed, run_index, it)
        j = int(actions.sum()) - actions
        total += np.where(actions, a[j], b[j])
        p = np.where(actions, pcs[group, j], pds[group, j])
        actions = rng.random(n) < p
        if config.error_rate:
            flip = rng.random(n) < config.error_rate
            actions = actions ^ flip
        degrees[it] = actions.mean()
    return SimTrajectory(run=run_index, degrees=degrees, cumulative_utility=total)


@dataclass
class BatchResult:
    """All runs of a config plus cross-run summaries."""

    trajectories: list
    mean_trajectory: np.ndarray = field(repr=False)
    quantiles: dict = field(repr=False)  # level -> trajectory
    final_degrees: np.ndarray = field(repr=False)
    histogram: tuple = field(repr=False)  # (counts, bin edges) of finals


def batch(config: SimConfig, threads: int = 0) -> BatchResult:
    """Run the configured batch; results are ordered by run index and
    identical whatever the thread count."""
    indices = range(config.runs)
    if threads == 1 or config.runs == 1:
        trajs = [run(config, i) for i in indices]
    else:
        workers = threads if threads > 0 else min(config.runs, os.cpu_count() or 1)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(lambda i: run(config, i), indices))
    trajs.sort(key=lambda t: t.run)
    stack = np.vstack([t.degrees for t in trajs])
    finals = stack[:, -1]
    quantiles = {
        q: np.quantile(stack, q, axis=0) for q in (0.1, 0.5, 0.9)
    }
    counts, edges = np.histogram(finals, bins=20, range=(0.0, 1.0))
    return BatchResult(
        trajectories=trajs,
        mean_trajectory=stack.mean(axis=0),
        quantiles=quantiles,
        final_degrees=finals,
        histogram=(counts, edges),
    )


def fairness_check(trajectory: SimTrajectory, focal: int) -> float:
    """Gap between the focal agent's mean per-iteration utility and the
    co-player average.  Fair-strategy agents drive this to zero as the
    horizon grows; for other strategies it is just a report."""
    total = trajectory.cumulative_utility
    n = total.shape[0]
    if not 0 <= focal < n:
        raise ValidationError(f"focal agent {focal} outside population {n}")
    iters = trajectory.degrees.shape[0] - 1
    own = total[focal] / iters
    others = (total.sum() - total[focal]) / ((n - 1) * iters)
    return float(abs(own - others))
