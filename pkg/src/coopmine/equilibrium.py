"""Equilibrium power investments of the one-stage game.

The unique interior equilibrium has a closed form organised around the
aggregate psi = sum_j k_j x_j* + k_l l (total effective power at
equilibrium).  psi solves the quadratic

    (S/(beta tau)) psi^2 - (m - 1) psi - k_l l = 0,
    S = sum_{j in active} c_j / (k_j reff_j),  m = |active|,

with reff_j the per-block effective reward in btc, and each player invests

    x_j* = max{ (psi/k_j) (1 - psi c_j / (k_j beta tau reff_j)), 0 }.

`best_response_oracle` deliberately avoids the closed form (coarse grid plus
golden-section refinement of the raw utility) so the two can be checked
against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import (
    GameEnv,
    PlayerSpec,
    SolveError,
    ValidationError,
    effective_reward,
    effective_reward_btc,
)

__all__ = [
    "EquilibriumSolution",
    "GridSearch",
    "psi",
    "equilibrium_strategy",
    "participation_condition",
    "active_set",
    "best_response_oracle",
    "best_response_dynamics",
]


@dataclass(frozen=True)
class EquilibriumSolution:
    """Closed-form equilibrium over a given active set.

    All per-player maps are keyed by player id.  expected_* are dollars per
    block interval: expected_cost = c x*/beta, expected_reward = win
    probability times the effective reward, expected_utility their
    difference.  residual_win_prob is the share of blocks won by the
    nonstrategic power k_l l.
    """

    psi: float
    investments: dict
    win_prob: dict
    expected_utility: dict
    expected_cost: dict
    expected_reward: dict
    residual_win_prob: float


def _cost_term(player: PlayerSpec, env: GameEnv) -> float:
    """c_i / (k_i reff_i), the cost-per-discounted-btc term of the quadratic."""
    reff = effective_reward_btc(player, env)
    if not reff > 0:
        raise ValidationError(
            f"player {player.id}: effective reward must be positive "
            f"(r + theta t = {env.r + env.theta * player.t}, discount applies)"
        )
    return player.c / (player.k * reff)


def _psi_from_terms(m: int, s_sum: float, env: GameEnv) -> float:
    if m == 0:
        return 0.0
    disc = (m - 1) ** 2 + 4.0 * env.k_l * env.l * s_sum / (env.beta * env.tau)
    num = (m - 1) + math.sqrt(disc)
    den = 2.0 * s_sum / (env.beta * env.tau)
    return num / den


def psi(active: Sequence[PlayerSpec], env: GameEnv) -> float:
    """Aggregate effective power at equilibrium for the given active set."""
    if not active:
        raise ValidationError("psi requires a non-empty active set")
    return _psi_from_terms(len(active), sum(_cost_term(p, env) for p in active), env)


def _class_psi(classes: Sequence[tuple[PlayerSpec, int]], env: GameEnv) -> float:
    """psi over a multiset of players given as (profile, count) pairs."""
    m = sum(n for _, n in classes if n > 0)
    if m == 0:
        return 0.0
    s_sum = sum(n * _cost_term(p, env) for p, n in classes if n > 0)
    return _psi_from_terms(m, s_sum, env)


def _x_star(ps: float, player: PlayerSpec, env: GameEnv) -> float:
    s = _cost_term(player, env)
    return max((ps / player.k) * (1.0 - ps * s / (env.beta * env.tau)), 0.0)


def _class_equilibrium(
    classes: Sequence[tuple[PlayerSpec, int]], env: GameEnv
) -> tuple[float, list]:
    """(psi, per-class x*) for a multiset of players; empty classes get 0."""
    ps = _class_psi(classes, env)
    xs = [(_x_star(ps, p, env) if n > 0 else 0.0) for p, n in classes]
    return ps, xs


def equilibrium_strategy(active: Sequence[PlayerSpec], env: GameEnv) -> EquilibriumSolution:
    """Closed-form equilibrium over the *provided* active set.

    The max{., 0} clamp is applied, but the set is not re-derived: callers
    who want the self-consistent positive-investment set should run
    `active_set` first.  Capacity is not enforced here.
    """
    if not active:
        raise ValidationError("equilibrium_strategy requires a non-empty active set")
    ids = [p.id for p in active]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate player ids in active set")
    ps = psi(active, env)
    inv = {p.id: _x_star(ps, p, env) for p in active}
    denom = sum(p.k * inv[p.id] for p in active) + env.k_l * env.l
    win, util, cost, reward = {}, {}, {}, {}
    for p in active:
        w = p.k * inv[p.id] / denom if denom > 0 else 0.0
        win[p.id] = w
        reward[p.id] = w * effective_reward(p, env)
        cost[p.id] = p.c * inv[p.id] / env.beta
        util[p.id] = reward[p.id] - cost[p.id]
    residual = env.k_l * env.l / denom if denom > 0 else 0.0
    return EquilibriumSolution(
        psi=ps,
        investments=inv,
        win_prob=win,
        expected_utility=util,
        expected_cost=cost,
        expected_reward=reward,
        residual_win_prob=residual,
    )


def participation_condition(
    candidate: PlayerSpec, active: Sequence[PlayerSpec], env: GameEnv
) -> tuple[float, bool]:
    """(threshold, participates): does `candidate` profitably join `active`?

    The candidate participates iff c/k < beta tau reff_candidate / psi(active),
    the active set taken *without* the candidate.  This is exactly equivalent
    to the candidate receiving x* > 0 from `equilibrium_strategy` over
    active + [candidate] (the two quadratics share their sign structure at
    the respective roots), so the exclusive test is safe for greedy use.
    """
    if not active:
        raise ValidationError("participation_condition requires a non-empty active set")
    reff = effective_reward_btc(candidate, env)
    if not reff > 0:
        raise ValidationError(f"candidate {candidate.id}: effective reward must be positive")
    ps = psi(active, env)
    if ps == 0.0:
        return math.inf, True
    threshold = env.beta * env.tau * reff / ps
    return threshold, candidate.cost_ratio < threshold


def _singleton_participates(candidate: PlayerSpec, env: GameEnv) -> bool:
    # x* > 0 for a lone player reduces to s < beta tau / (k_l l); with l = 0
    # the lone player's clamp always binds (degenerate monopoly).
    if env.l == 0:
        return False
    s = _cost_term(candidate, env)
    return s < env.beta * env.tau / (env.k_l * env.l)


def active_set(candidates: Sequence[PlayerSpec], env: GameEnv) -> list:
    """Greedy derivation of the positive-investment set S-hat.

    Candidates are scanned in increasing c/k (ties by id).  Each is admitted
    iff the participation condition holds against the currently admitted
    set; the scan stops at the first rejection, which the sort order
    justifies.  Seeding: with l > 0 the first candidate is admitted iff its
    lone investment is positive; with l = 0 a lone candidate is degenerate
    (x* = 0) but any *pair* invests positively, so the first two candidates
    are admitted together.
    """
    order = sorted(candidates, key=lambda p: (p.cost_ratio, p.id))
    admitted: list = []
    for cand in order:
        if not admitted:
            if _singleton_participates(cand, env):
                admitted.append(cand)
            elif env.l == 0 and len(order) >= 2:
                admitted.append(cand)  # waits for a partner; pairs are always viable
            else:
                break
            continue
        if len(admitted) == 1 and env.l == 0:
            admitted.append(cand)  # completes the seed pair
            continue
        _, ok = participation_condition(cand, admitted, env)
        if not ok:
            break
        admitted.append(cand)
    if len(admitted) == 1 and env.l == 0:
        return []  # seed never found a partner
    return admitted


def _class_active_counts(
    classes: Sequence[tuple[PlayerSpec, int]], env: GameEnv
) -> list:
    """Per-class admitted counts, the class-aggregated version of active_set.

    Classes are scanned member by member in increasing c/k so the running
    (m, S) pair stays equivalent to the flat greedy.
    """
    order = sorted(range(len(classes)), key=lambda i: (classes[i][0].cost_ratio, classes[i][0].id))
    admitted = [0] * len(classes)
    m, s_sum = 0, 0.0
    stopped = False
    for idx in order:
        prof, count = classes[idx]
        if stopped or count <= 0:
            continue
        term = _cost_term(prof, env)
        for _ in range(count):
            if m == 0:
                if _singleton_participates(prof, env):
                    ok = True
                elif env.l == 0:
                    ok = True  # seed of a potential pair
                else:
                    ok = False
            elif m == 1 and env.l == 0:
                ok = True
            else:
                ps = _psi_from_terms(m, s_sum, env)
                ok = ps == 0.0 or prof.cost_ratio < env.beta * env.tau * effective_reward_btc(prof, env) / ps
            if not ok:
                stopped = True
                break
            admitted[idx] += 1
            m += 1
            s_sum += term
    if m == 1 and env.l == 0:
        return [0] * len(classes)
    return admitted


@dataclass(frozen=True)
class GridSearch:
    """Search specification for the best-response oracle.

    upper = None uses twice the closed-form psi of the full instance as the
    bracket, which always contains the best response.
    """

    upper: float | None = None
    points: int = 10001
    tol: float = 1e-8

    def __post_init__(self):
        if self.upper is not None and not self.upper > 0:
            raise ValidationError("grid upper bound must be > 0")
        if self.points < 3:
            raise ValidationError("grid needs at least 3 points")
        if not self.tol > 0:
            raise ValidationError("grid tol must be > 0")


def best_response_oracle(
    player: PlayerSpec,
    others: Iterable[tuple[PlayerSpec, float]],
    env: GameEnv,
    grid: GridSearch | None = None,
) -> float:
    """Numerically maximize player's utility against fixed opponent power.

    Independent of the closed form: coarse grid scan over [0, upper]
    followed by golden-section refinement to `grid.tol` absolute width.
    `others` are (spec, investment) pairs.
    """
    grid = grid or GridSearch()
    others = list(others)
    opposition = sum(sp.k * x for sp, x in others) + env.k_l * env.l
    reward = effective_reward(player, env)
    k, c, beta = player.k, player.c, env.beta

    if grid.upper is not None:
        upper = grid.upper
    else:
        upper = 2.0 * psi([player] + [sp for sp, _ in others], env)
        if upper <= 0:
            upper = 1.0

    if opposition <= 0:
        # win probability jumps to 1 for any positive investment; the
        # supremum is not attained, return the smallest positive grid point
        return upper / (grid.points - 1)

    def z(x):
        return (k * x / (k * x + opposition)) * reward - c * x / beta

    xs = np.linspace(0.0, upper, grid.points)
    vals = (k * xs / (k * xs + opposition)) * reward - c * xs / beta
    best = int(np.argmax(vals))
    lo = xs[max(best - 1, 0)]
    hi = xs[min(best + 1, grid.points - 1)]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = z(x1), z(x2)
    while b - a > grid.tol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = z(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = z(x2)
    return 0.5 * (a + b)


def best_response_dynamics(
    players: Sequence[PlayerSpec],
    env: GameEnv,
    start: dict | None = None,
    damping: float = 0.5,
    tol: float = 1e-7,
    max_iter: int = 500,
) -> dict:
    """Damped fixed-point iteration of oracle best responses.

    Validation helper: converges to the closed-form equilibrium on regular
    instances without ever consulting it.  Returns id -> investment.
    tol is relative and cannot go much below 1e-7: near the optimum the
    utility is flat to machine precision over a plateau of width
    ~sqrt(eps |Z| / |Z''|), and the oracle wanders freely inside it.
    """
    x = {p.id: (start or {}).get(p.id, 1.0) for p in players}
    for _ in range(max_iter):
        delta = 0.0
        new = {}
        for p in players:
            others = [(q, x[q.id]) for q in players if q.id != p.id]
            br = best_response_oracle(p, others, env)
            nx = (1.0 - damping) * x[p.id] + damping * br
            scale = max(abs(nx), abs(x[p.id]), 1e-12)
            delta = max(delta, abs(nx - x[p.id]) / scale)
            new[p.id] = nx
        x = new
        if delta < tol:
            return x
    raise SolveError(f"best-response dynamics did not converge in {max_iter} iterations")
