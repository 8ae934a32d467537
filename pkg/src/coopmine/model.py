"""Core domain objects for the two-stage mining game.

The model has two kinds of actors: *players* of the one-stage investment
game (solo miners or whole pools, described by `PlayerSpec`) and the
*environment* they compete in (`GameEnv`).  A player wins the current block
with probability proportional to its effective power k_i * x_i, measured
against everyone else's effective power plus the residual network power
k_l * l that is not controlled by any strategic player.

Units used throughout:

    r       block subsidy, btc/block
    tau     conversion rate, $/btc
    beta    block discovery rate, blocks/min
    theta   average fee per transaction, btc
    t       transactions per block
    z       propagation delay per transaction, min
    c       marginal cost of power, $/kWh
    k       efficiency factor, dimensionless
    x, l    computational power, kWh/min
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ValidationError(ValueError):
    """A parameter or configuration violates a model precondition."""


class SolveError(RuntimeError):
    """A numeric procedure failed (no convergence, infeasible instance)."""


@dataclass(frozen=True)
class GameEnv:
    """Environment of the one-stage game.

    l is the residual ("nonstrategic") network power and k_l its average
    efficiency; together they act as a constant competitor k_l * l in every
    win probability.
    """

    r: float
    tau: float
    beta: float
    theta: float
    l: float
    k_l: float = 1.0

    def __post_init__(self):
        if not self.r >= 0:
            raise ValidationError(f"env.r must be >= 0, got {self.r}")
        if not self.tau > 0:
            raise ValidationError(f"env.tau must be > 0, got {self.tau}")
        if not self.beta > 0:
            raise ValidationError(f"env.beta must be > 0, got {self.beta}")
        if not self.theta >= 0:
            raise ValidationError(f"env.theta must be >= 0, got {self.theta}")
        if not self.l >= 0:
            raise ValidationError(f"env.l must be >= 0, got {self.l}")
        if not self.k_l > 0:
            raise ValidationError(f"env.k_l must be > 0, got {self.k_l}")


@dataclass(frozen=True)
class PlayerSpec:
    """One player of the investment game (a solo miner or a pool aggregate).

    lam and mu are the connection/disconnection rates of the player in the
    attendance process; both zero means the player is statically present.
    capacity bounds the power the player can invest (infinite by default;
    the closed-form equilibrium itself is capacity-free, capacity matters
    for work distribution and for strategic/nonstrategic classification).
    """

    id: str
    c: float
    k: float = 1.0
    t: float = 0.0
    z: float = 0.0
    lam: float = 0.0
    mu: float = 0.0
    capacity: float = math.inf

    def __post_init__(self):
        if not self.id:
            raise ValidationError("player id must be non-empty")
        # c = 0 would make the equilibrium closed form divide by zero
        if not self.c > 0:
            raise ValidationError(f"player {self.id}: c must be > 0, got {self.c}")
        if not self.k > 0:
            raise ValidationError(f"player {self.id}: k must be > 0, got {self.k}")
        if not self.t >= 0:
            raise ValidationError(f"player {self.id}: t must be >= 0, got {self.t}")
        if not self.z >= 0:
            raise ValidationError(f"player {self.id}: z must be >= 0, got {self.z}")
        if not self.lam >= 0:
            raise ValidationError(f"player {self.id}: lambda must be >= 0, got {self.lam}")
        if not self.mu >= 0:
            raise ValidationError(f"player {self.id}: mu must be >= 0, got {self.mu}")
        if not self.capacity > 0:
            raise ValidationError(
                f"player {self.id}: capacity must be > 0, got {self.capacity}"
            )

    @property
    def cost_ratio(self) -> float:
        """Cost per unit of effective power, c_i / k_i."""
        return self.c / self.k


@dataclass(frozen=True)
class GameState:
    """Sets of player ids: registered (U), present (S) and active (S-hat).

    Active players are the present players that invest positive power; the
    equilibrium module derives this set, the state object only enforces the
    containment chain active <= present <= registered.
    """

    registered: frozenset
    present: frozenset
    active: frozenset

    def __post_init__(self):
        if not self.present <= self.registered:
            extra = sorted(self.present - self.registered)
            raise ValidationError(f"present players not registered: {extra}")
        if not self.active <= self.present:
            extra = sorted(self.active - self.present)
            raise ValidationError(f"active players not present: {extra}")


def effective_reward_btc(player: PlayerSpec, env: GameEnv) -> float:
    """Discounted reward of a block won by `player`, in btc.

    The block pays the subsidy r plus fees theta * t, discounted by the
    orphaning risk exp(-beta * z * t) that grows with propagation delay.
    """
    return (env.r + env.theta * player.t) * math.exp(-env.beta * player.z * player.t)


def effective_reward(player: PlayerSpec, env: GameEnv) -> float:
    """Discounted reward of a block won by `player`, in dollars."""
    return env.tau * effective_reward_btc(player, env)


def optimal_block_size(player: PlayerSpec, env: GameEnv) -> float:
    """Transactions per block maximizing the effective reward.

    Stationary point of (r + theta*t) * exp(-beta*z*t):
    t* = 1/(beta*z) - r/theta, clamped at 0 (the reward is decreasing on
    all t >= 0 when fees are too small).  Requires theta > 0 and z > 0.
    """
    if env.theta <= 0 or player.z <= 0:
        raise ValidationError("optimal block size needs theta > 0 and z > 0")
    return max(1.0 / (env.beta * player.z) - env.r / env.theta, 0.0)
