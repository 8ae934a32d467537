"""Attendance dynamics and recursive expected utilities.

Miners of each class connect (rate lambda per absent member) and disconnect
(rate mu per present member) independently, which makes the vector of
per-class present counts a product birth-death chain.  The game ends when a
block is found (rate beta), so every sojourn splits its probability mass
between the block event and the attendance moves, with total outflow

    D(n) = beta + sum_c [(N_c - n_c) lambda_c + n_c mu_c].

Expected utilities follow the recursion: utility collected in the current
state (win probability times effective reward, minus the power cost of the
sojourn) plus the utilities of the neighbouring states weighted by their
transition probabilities.  We track a focal member of a class through its
own presence/absence, giving a linear system over (state, present/absent)
pairs solved sparsely and exactly; value iteration exists only as a test
oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import GameEnv, PlayerSpec, SolveError, ValidationError, effective_reward

__all__ = [
    "MinerClass",
    "ClassChain",
    "UtilityTable",
    "ReducibleChainError",
    "build_chain",
    "expected_utilities",
    "fixed_investment_utilities",
    "stationary_distribution",
]

STATE_CAP = 1_000_000


class ReducibleChainError(SolveError):
    """The attendance chain is not irreducible over its state space.

    `decomposition` lists one human-readable entry per offending class,
    describing the direction of drift and the absorbing count.
    """

    def __init__(self, message, decomposition):
        super().__init__(message)
        self.decomposition = list(decomposition)


@dataclass(frozen=True)
class MinerClass:
    """A group of exchangeable miners: shared profile, registered count.

    `connected` is the number present at evaluation time (the chain's start
    state).  Classes with lambda = mu = 0 stay pinned at `connected`.
    """

    profile: PlayerSpec
    registered: int
    connected: int | None = None

    def __post_init__(self):
        if self.registered < 0:
            raise ValidationError(f"class {self.profile.id}: registered must be >= 0")
        conn = self.registered if self.connected is None else self.connected
        if not 0 <= conn <= self.registered:
            raise ValidationError(
                f"class {self.profile.id}: connected must be in [0, {self.registered}]"
            )
        object.__setattr__(self, "connected", conn)

    @property
    def dynamic(self) -> bool:
        return self.registered > 0 and (self.profile.lam > 0 or self.profile.mu > 0)


@dataclass
class ClassChain:
    """Product state space of per-class present counts, with rates."""

    classes: tuple
    beta: float
    states: np.ndarray = field(repr=False)  # (n_states, n_classes) counts
    index: dict = field(repr=False)  # count tuple -> state row
    arrival: np.ndarray = field(repr=False)  # (n_states, n_classes)
    departure: np.ndarray = field(repr=False)  # (n_states, n_classes)
    D: np.ndarray = field(repr=False)  # (n_states,) total outflow incl. beta
    up: np.ndarray = field(repr=False)  # (n_states, n_classes) index of n+e_c or -1
    down: np.ndarray = field(repr=False)  # index of n-e_c or -1

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def start(self) -> int:
        return self.index[tuple(cl.connected for cl in self.classes)]


def build_chain(classes, env: GameEnv, state_cap: int = STATE_CAP) -> ClassChain:
    """Enumerate the product chain for the given miner classes.

    Dynamic classes (lambda or mu positive) range over 0..registered;
    static classes are pinned to their connected count.  Raises SolveError
    when the product space exceeds `state_cap`.
    """
    classes = tuple(classes)
    if not classes:
        raise ValidationError("build_chain requires at least one class")
    ids = [cl.profile.id for cl in classes]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate class ids")
    ranges = [
        range(cl.registered + 1) if cl.dynamic else range(cl.connected, cl.connected + 1)
        for cl in classes
    ]
    total = math.prod(len(r) for r in ranges)
    if total > state_cap:
        raise SolveError(f"chain has {total} states, exceeding the cap of {state_cap}")

    states = np.array(list(itertools.product(*ranges)), dtype=np.int64)
    index = {tuple(row): i for i, row in enumerate(states)}

    regs = np.array([cl.registered for cl in classes], dtype=np.int64)
    lams = np.array([cl.profile.lam for cl in classes])
    mus = np.array([cl.profile.mu for cl in classes])
    arrival = (regs[None, :] - states) * lams[None, :]
    departure = states * mus[None, :]
    D = env.beta + arrival.sum(axis=1) + departure.sum(axis=1)

    n, k = states.shape
    up = np.full((n, k), -1, dtype=np.int64)
    down = np.full((n, k), -1, dtype=np.int64)
    for i, row in enumerate(states):
        for c in range(k):
            if row[c] < regs[c]:
                nb = list(row)
                nb[c] += 1
                up[i, c] = index.get(tuple(nb), -1)
            if row[c] > 0:
                nb = list(row)
                nb[c] -= 1
                down[i, c] = index.get(tuple(nb), -1)

    return ClassChain(
        classes=classes,
        beta=env.beta,
        states=states,
        index=index,
        arrival=arrival,
        departure=departure,
        D=D,
        up=up,
        down=down,
    )


@dataclass
class UtilityTable:
    """Per-state, per-class expected utilities and costs from a chain solve.

    Arrays are (n_states, n_classes); entries are NaN where the focal
    condition is impossible (present with count 0, absent with full count).
    `investments` echoes the per-member strategy the table was solved for.
    """

    chain: ClassChain
    investments: np.ndarray
    utility_present: np.ndarray
    cost_present: np.ndarray
    utility_absent: np.ndarray
    cost_absent: np.ndarray

    def at_start(self, class_index: int) -> tuple[float, float]:
        """(utility, cost) of a present member of the class at the start state."""
        i = self.chain.start
        return (
            float(self.utility_present[i, class_index]),
            float(self.cost_present[i, class_index]),
        )


def _denominators(chain: ClassChain, strategy: np.ndarray, env: GameEnv) -> np.ndarray:
    ks = np.array([cl.profile.k for cl in chain.classes])
    return (chain.states * ks[None, :] * strategy).sum(axis=1) + env.k_l * env.l


def expected_utilities(chain: ClassChain, strategy, env: GameEnv) -> UtilityTable:
    """Solve the recursive utility system for every class of the chain.

    `strategy` is an (n_states, n_classes) array: the investment of one
    member of each class in each state (ignored where the count is zero).
    Solves, per focal class, the sparse linear system over the states
    augmented with the focal member's own presence; both the utility and
    the accumulated cost share the matrix, so they are solved together.
    """
    strategy = np.asarray(strategy, dtype=float)
    if strategy.shape != chain.states.shape:
        raise ValidationError(
            f"strategy shape {strategy.shape} does not match chain {chain.states.shape}"
        )
    denom = _denominators(chain, strategy, env)
    n, kcls = chain.states.shape
    shape = (n, kcls)
    util_p = np.full(shape, np.nan)
    cost_p = np.full(shape, np.nan)
    util_a = np.full(shape, np.nan)
    cost_a = np.full(shape, np.nan)

    for f, cl in enumerate(chain.classes):
        prof = cl.profile
        reward = effective_reward(prof, env)
        counts = chain.states[:, f]
        present_states = np.nonzero(counts >= 1)[0]
        absent_states = np.nonzero(counts <= cl.registered - 1)[0]
        pid = {int(s): i for i, s in enumerate(present_states)}
        aid = {int(s): len(present_states) + i for i, s in enumerate(absent_states)}
        size = len(present_states) + len(absent_states)
        if size == 0:
            continue

        rows, cols, vals = [], [], []
        rhs_u = np.zeros(size)
        rhs_c = np.zeros(size)

        def entry(r, s, v):
            rows.append(r)
            cols.append(s)
            vals.append(v)

        for s in present_states:
            s = int(s)
            r = pid[s]
            entry(r, r, chain.D[s])
            x = strategy[s, f]
            w = prof.k * x / denom[s] if denom[s] > 0 else 0.0
            rhs_u[r] = chain.beta * w * reward - prof.c * x
            rhs_c[r] = prof.c * x
            for j in range(kcls):
                a_rate = chain.arrival[s, j]
                if a_rate > 0 and chain.up[s, j] >= 0:
                    entry(r, pid[int(chain.up[s, j])], -a_rate)
                d_rate = chain.departure[s, j]
                if d_rate > 0 and chain.down[s, j] >= 0:
                    dn = int(chain.down[s, j])
                    if j != f:
                        entry(r, pid[dn], -d_rate)
                    else:
                        co = (chain.states[s, f] - 1) * prof.mu
                        if co > 0:
                            entry(r, pid[dn], -co)
                        entry(r, aid[dn], -prof.mu)

        for s in absent_states:
            s = int(s)
            r = aid[s]
            entry(r, r, chain.D[s])
            for j in range(kcls):
                a_rate = chain.arrival[s, j]
                if a_rate > 0 and chain.up[s, j] >= 0:
                    upn = int(chain.up[s, j])
                    if j != f:
                        entry(r, aid[upn], -a_rate)
                    else:
                        co = (cl.registered - chain.states[s, f] - 1) * prof.lam
                        if co > 0:
                            entry(r, aid[upn], -co)
                        entry(r, pid[upn], -prof.lam)
                d_rate = chain.departure[s, j]
                if d_rate > 0 and chain.down[s, j] >= 0:
                    entry(r, aid[int(chain.down[s, j])], -d_rate)

        mat = sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsc()
        lu = spla.splu(mat)  # strictly diagonally dominant by beta > 0
        sol_u = lu.solve(rhs_u)
        sol_c = lu.solve(rhs_c)
        for s in present_states:
            util_p[s, f] = sol_u[pid[int(s)]]
            cost_p[s, f] = sol_c[pid[int(s)]]
        for s in absent_states:
            util_a[s, f] = sol_u[aid[int(s)]]
            cost_a[s, f] = sol_c[aid[int(s)]]

    return UtilityTable(
        chain=chain,
        investments=strategy,
        utility_present=util_p,
        cost_present=cost_p,
        utility_absent=util_a,
        cost_absent=cost_a,
    )


def fixed_investment_utilities(
    chain: ClassChain, profile: PlayerSpec, x_fixed: float, strategy, env: GameEnv
) -> tuple[np.ndarray, np.ndarray]:
    """(utility, cost) per state of an always-present fixed-investment miner.

    The miner's power is assumed to be part of env.l already (it competes
    inside the nonstrategic share), so the denominator is not enlarged.
    """
    strategy = np.asarray(strategy, dtype=float)
    denom = _denominators(chain, strategy, env)
    n = chain.n_states
    reward = effective_reward(profile, env)
    rows, cols, vals = [], [], []
    rhs_u = np.zeros(n)
    rhs_c = np.zeros(n)
    for s in range(n):
        rows.append(s)
        cols.append(s)
        vals.append(chain.D[s])
        w = profile.k * x_fixed / denom[s] if denom[s] > 0 else 0.0
        rhs_u[s] = chain.beta * w * reward - profile.c * x_fixed
        rhs_c[s] = profile.c * x_fixed
        for j in range(chain.states.shape[1]):
            if chain.arrival[s, j] > 0 and chain.up[s, j] >= 0:
                rows.append(s)
                cols.append(int(chain.up[s, j]))
                vals.append(-chain.arrival[s, j])
            if chain.departure[s, j] > 0 and chain.down[s, j] >= 0:
                rows.append(s)
                cols.append(int(chain.down[s, j]))
                vals.append(-chain.departure[s, j])
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    lu = spla.splu(mat)
    return lu.solve(rhs_u), lu.solve(rhs_c)


def _reducibility_report(chain: ClassChain) -> list:
    report = []
    for cl in chain.classes:
        if not cl.dynamic:
            continue
        lam, mu = cl.profile.lam, cl.profile.mu
        if lam > 0 and mu > 0:
            continue
        if lam == 0:
            report.append(
                f"class {cl.profile.id}: lambda=0, counts only decrease; absorbing at 0"
            )
        else:
            report.append(
                f"class {cl.profile.id}: mu=0, counts only increase; "
                f"absorbing at {cl.registered}"
            )
    return report


def stationary_distribution(chain: ClassChain) -> np.ndarray:
    """Stationary law of the attendance process over the chain's states.

    The block event (beta) is excluded: attendance evolves independently of
    block discovery.  Single dynamic class: detailed-balance product formula
    in log space.  Several dynamic classes: sparse linear solve of pi Q = 0.
    Raises ReducibleChainError when some dynamic class has only one of
    lambda/mu positive (the chain then drifts into an absorbing count).
    """
    report = _reducibility_report(chain)
    if report:
        raise ReducibleChainError(
            "attendance chain is reducible: " + "; ".join(report), report
        )
    dyn = [i for i, cl in enumerate(chain.classes) if cl.dynamic]
    if not dyn:
        return np.ones(1) if chain.n_states == 1 else _uniform_static(chain)
    if len(dyn) == 1:
        c = dyn[0]
        cl = chain.classes[c]
        lam, mu = cl.profile.lam, cl.profile.mu
        n_reg = cl.registered
        logpi = np.zeros(n_reg + 1)
        for s in range(n_reg):
            logpi[s + 1] = logpi[s] + math.log((n_reg - s) * lam) - math.log((s + 1) * mu)
        logpi -= logpi.max()
        pi = np.exp(logpi)
        pi /= pi.sum()
        out = np.zeros(chain.n_states)
        for i, row in enumerate(chain.states):
            out[i] = pi[row[c]]
        return out
    # multi-class: solve pi Q = 0 with the normalization replacing one equation
    n = chain.n_states
    rows, cols, vals = [], [], []
    for s in range(n):
        out_rate = chain.arrival[s].sum() + chain.departure[s].sum()
        rows.append(s)
        cols.append(s)
        vals.append(-out_rate)
        for j in range(chain.states.shape[1]):
            if chain.arrival[s, j] > 0 and chain.up[s, j] >= 0:
                rows.append(int(chain.up[s, j]))
                cols.append(s)
                vals.append(chain.arrival[s, j])
            if chain.departure[s, j] > 0 and chain.down[s, j] >= 0:
                rows.append(int(chain.down[s, j]))
                cols.append(s)
                vals.append(chain.departure[s, j])
    q = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tolil()
    q[0, :] = 1.0  # normalization row
    rhs = np.zeros(n)
    rhs[0] = 1.0
    pi = spla.spsolve(q.tocsc(), rhs)
    if np.any(pi < -1e-9):
        raise SolveError("stationary solve produced negative mass")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _uniform_static(chain: ClassChain) -> np.ndarray:
    # all classes pinned: the start state is the only reachable one
    out = np.zeros(chain.n_states)
    out[chain.start] = 1.0
    return out
