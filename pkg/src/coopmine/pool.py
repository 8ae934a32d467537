"""Pool-level orchestration of the two-stage game.

Stage one: pools compete for the block reward as aggregate players whose
marginal cost and efficiency are the contribution-weighted means of their
members' (the fixed point below alternates the aggregate solve with the
work distribution until both stabilize).  Stage two: each pool shares its
expected reward among members using a simulated intra-pool competition
(the protocol game) that is never actually played; members are told to
perform exactly their assigned work.

The scenario evaluator at the bottom computes the cooperate/desert
utilities per member profile: full cooperation, one (or two) members
leaving a pool for solo mining, and the collapse where everyone mines
solo.  Deserters rejoin the open competition either as strategic players,
when their capacity covers the solo equilibrium investment, or as capacity
investors folded into the nonstrategic power l.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .equilibrium import (
    EquilibriumSolution,
    _class_active_counts,
    _class_equilibrium,
    _class_psi,
    active_set,
    equilibrium_strategy,
    participation_condition,
)
from .model import (
    GameEnv,
    PlayerSpec,
    SolveError,
    ValidationError,
    effective_reward,
)
from .stochastic import (
    MinerClass,
    build_chain,
    expected_utilities,
    fixed_investment_utilities,
    stationary_distribution,
)

__all__ = [
    "PoolSpec",
    "WorkAssignment",
    "RewardShares",
    "ProtocolResult",
    "Network",
    "CooperativeSolution",
    "ProfileRow",
    "distribute_work",
    "network_equilibrium",
    "pool_fixed_point",
    "protocol_game",
    "reward_shares",
    "miner_total_utility",
    "cooperative_solution",
    "scenario_utilities",
    "sdp_table",
    "annual_energy_twh",
]

MINUTES_PER_YEAR = 525_600.0


@dataclass(frozen=True)
class PoolSpec:
    """A pool: registered members, the connected subset, and the pool's
    own block parameters (t, z) used when it competes for the reward."""

    id: str
    members: tuple
    connected: frozenset | None = None
    t: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        ids = [m.id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"pool {self.id}: duplicate member ids")
        conn = frozenset(ids) if self.connected is None else frozenset(self.connected)
        unknown = conn - set(ids)
        if unknown:
            raise ValidationError(
                f"pool {self.id}: connected ids not registered: {sorted(unknown)}"
            )
        object.__setattr__(self, "connected", conn)
        if self.t < 0 or self.z < 0:
            raise ValidationError(f"pool {self.id}: t and z must be >= 0")

    @property
    def connected_members(self) -> list:
        return [m for m in self.members if m.id in self.connected]


@dataclass(frozen=True)
class WorkAssignment:
    """Work split across members plus the pool aggregates it induces."""

    investments: Mapping[str, float]
    x_p: float
    c_p: float
    k_p: float


def distribute_work(members: Sequence[PlayerSpec], target: float) -> WorkAssignment:
    """Split `target` power across members at minimal cost.

    Progressive water-filling: members sorted by c/k (ties by id) are
    admitted tier by tier; within the admitted prefix assignments rise
    equally, capping each member at capacity, until the total is reached.
    """
    members = list(members)
    if not members:
        raise ValidationError("distribute_work needs at least one member")
    ids = [m.id for m in members]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate member ids")
    if target < 0:
        raise ValidationError("work target must be >= 0")
    total_cap = sum(m.capacity for m in members)
    if target > total_cap * (1 + 1e-12):
        raise SolveError(
            f"aggregate capacity {total_cap:g} cannot cover the target {target:g}"
        )

    x = {m.id: 0.0 for m in members}
    order = sorted(members, key=lambda m: (m.cost_ratio, m.id))
    remaining = float(target)
    i = 0
    while i < len(order) and remaining > 0:
        ratio = order[i].cost_ratio
        tier = []
        while i < len(order) and order[i].cost_ratio == ratio:
            tier.append(order[i])
            i += 1
        tier_total = sum(m.capacity for m in tier)
        if remaining >= tier_total:
            for m in tier:
                x[m.id] = m.capacity
            remaining -= tier_total
            continue
        # water level inside the tier: cap the small members, split the rest
        by_cap = sorted(tier, key=lambda m: (m.capacity, m.id))
        left = remaining
        for j, m in enumerate(by_cap):
            share = left / (len(by_cap) - j)
            if share <= m.capacity:
                for mm in by_cap[j:]:
                    x[mm.id] = share
                break
            x[m.id] = m.capacity
            left -= m.capacity
        remaining = 0.0

    x_p = sum(x.values())
    if x_p > 0:
        c_p = sum(m.c * x[m.id] for m in members) / x_p
        k_p = sum(m.k * x[m.id] for m in members) / x_p
    else:
        c_p = sum(m.c for m in members) / len(members)
        k_p = sum(m.k for m in members) / len(members)
    return WorkAssignment(investments=x, x_p=x_p, c_p=c_p, k_p=k_p)


def network_equilibrium(specs: Sequence[PlayerSpec], env: GameEnv) -> EquilibriumSolution:
    """Self-consistent equilibrium with inactive players padded with zeros."""
    act = active_set(specs, env)
    act_ids = {p.id for p in act}
    if act:
        sol = equilibrium_strategy(act, env)
    else:
        sol = EquilibriumSolution(
            psi=env.k_l * env.l,
            investments={},
            win_prob={},
            expected_utility={},
            expected_cost={},
            expected_reward={},
            residual_win_prob=1.0 if env.l > 0 else 0.0,
        )
    inv = dict(sol.investments)
    win = dict(sol.win_prob)
    util = dict(sol.expected_utility)
    cost = dict(sol.expected_cost)
    reward = dict(sol.expected_reward)
    for p in specs:
        if p.id not in act_ids:
            inv[p.id] = win[p.id] = util[p.id] = cost[p.id] = reward[p.id] = 0.0
    return EquilibriumSolution(
        psi=sol.psi,
        investments=inv,
        win_prob=win,
        expected_utility=util,
        expected_cost=cost,
        expected_reward=reward,
        residual_win_prob=sol.residual_win_prob,
    )


def _pool_spec_as_player(pool: PoolSpec, c_p: float, k_p: float) -> PlayerSpec:
    cap = sum(m.capacity for m in pool.connected_members)
    return PlayerSpec(id=pool.id, c=c_p, k=k_p, t=pool.t, z=pool.z, capacity=cap)


def pool_fixed_point(
    pools: Sequence[PoolSpec],
    env: GameEnv,
    *,
    solos: Sequence[PlayerSpec] = (),
    tol: float = 1e-10,
    max_iter: int = 1000,
    damping: float = 0.0,
) -> tuple[EquilibriumSolution, dict]:
    """Alternate aggregate solve and work redistribution to convergence.

    Returns the equilibrium over pool aggregates (plus any solo players
    passed in `solos`) and the per-pool work assignments.  `damping`
    blends each new pool target with the previous one; the default 0
    converges in one step on homogeneous instances.
    """
    pools = list(pools)
    if not pools and not solos:
        raise ValidationError("pool_fixed_point needs at least one pool")
    if not 0 <= damping < 1:
        raise ValidationError("damping must lie in [0, 1)")
    for pool in pools:
        if not pool.connected_members:
            raise ValidationError(f"pool {pool.id}: no connected members")

    aggregates = {}
    for pool in pools:
        conn = pool.connected_members
        aggregates[pool.id] = (
            sum(m.c for m in conn) / len(conn),
            sum(m.k for m in conn) / len(conn),
        )
    prev_target: dict = {}
    assignments: dict = {}
    sol = None
    for _ in range(max_iter):
        specs = [_pool_spec_as_player(p, *aggregates[p.id]) for p in pools]
        sol = network_equilibrium(specs + list(solos), env)
        drift = 0.0
        for pool in pools:
            target = sol.investments[pool.id]
            if damping and pool.id in prev_target:
                target = damping * prev_target[pool.id] + (1 - damping) * target
            asg = distribute_work(pool.connected_members, target)
            c_old, k_old = aggregates[pool.id]
            x_old = prev_target.get(pool.id, math.nan)
            for new, old in ((asg.c_p, c_old), (asg.k_p, k_old), (target, x_old)):
                scale = max(abs(new), abs(old), 1e-30)
                d = abs(new - old) / scale if not math.isnan(old) else math.inf
                drift = max(drift, d)
            aggregates[pool.id] = (asg.c_p, asg.k_p)
            prev_target[pool.id] = target
            assignments[pool.id] = asg
        if drift < tol:
            return sol, assignments
    raise SolveError(f"pool fixed point did not converge in {max_iter} iterations")


@dataclass
class ProtocolResult:
    """Outcome of the simulated intra-pool competition for one pool."""

    env: GameEnv  # the protocol-game environment (reward as r, tau=1)
    chain: object
    stationary: np.ndarray
    class_profiles: tuple
    investments: np.ndarray  # per-state per-class strategic equilibrium
    member_class: dict  # strategic miner id -> chain class index
    l_members: tuple  # connected ids folded into l at max capacity
    excluded: tuple  # connected ids failing the participation condition
    l: float
    utility: dict  # miner id -> attendance-weighted expected utility
    cost: dict
    roi: dict
    mean_investment: dict


def _protocol_profile(m: PlayerSpec) -> PlayerSpec:
    # inside the pool only the header is transmitted: no per-miner block terms
    return replace(m, t=0.0, z=0.0)


def _chain_key(m: PlayerSpec) -> tuple:
    return (m.c, m.k, m.lam, m.mu)


def protocol_game(
    pool: PoolSpec,
    assignment: WorkAssignment,
    pool_reward: float,
    env: GameEnv,
    *,
    state_cap: int = 1_000_000,
) -> ProtocolResult:
    """Simulated competition of pool members for the pool's expected reward.

    Members with capacity to play the per-state equilibrium are strategic;
    the rest invest their maximum capacity inside l when the participation
    threshold admits them.  Expected utilities and costs come from the
    attendance-chain solve; ROIs divide the two, weighting states by the
    chain's long-run law.
    """
    if pool_reward <= 0:
        raise ValidationError("protocol game needs a positive pool reward")
    base_env = GameEnv(
        r=pool_reward, tau=1.0, beta=env.beta, theta=0.0, l=0.0, k_l=1.0
    )
    members = list(pool.members)
    present = pool.connected
    profs = {m.id: _protocol_profile(m) for m in members}

    strategic = {m.id for m in members}
    excluded: set = set()
    l_ids: list = []
    l_val = 0.0
    for _ in range(len(members) + 1):
        ns_conn = [
            profs[m.id]
            for m in members
            if m.id in present and m.id not in strategic and m.id not in excluded
        ]
        str_members = [profs[m.id] for m in members if m.id in strategic]
        top_classes = _group_counts(str_members, key=_chain_key, top=True)
        l_all = sum(m.k * m.capacity for m in ns_conn)
        l_ids, l_val = [], 0.0
        for m in ns_conn:
            solo_env = replace(base_env, l=l_all - m.k * m.capacity)
            ps1 = _class_psi(top_classes, solo_env)
            reff = effective_reward(m, base_env)  # tau=1: already per-block
            ok = ps1 == 0.0 or m.cost_ratio < env.beta * reff / ps1
            if ok:
                l_ids.append(m.id)
                l_val += m.k * m.capacity
        penv = replace(base_env, l=l_val)
        counts = _class_active_counts(top_classes, penv)
        ps, xs = _class_equilibrium(
            [(p, c) for (p, _), c in zip(top_classes, counts)], penv
        )
        demote, drop = set(), set()
        for (prof, total), adm, xv in zip(top_classes, counts, xs):
            for m in str_members:
                if _chain_key(m) != _chain_key(prof):
                    continue
                if adm == 0:
                    drop.add(m.id)  # fails participation even as strategic
                elif m.capacity < xv:
                    demote.add(m.id)
        if not demote and not drop:
            break
        strategic -= demote | drop
        excluded |= drop
    else:
        raise SolveError("strategic classification did not stabilize")

    excluded |= {
        m.id
        for m in members
        if m.id in present and m.id not in strategic and m.id not in l_ids
    }
    strat_members = [profs[m.id] for m in members if m.id in strategic]
    if not strat_members and not l_ids:
        raise SolveError(f"pool {pool.id}: no miner qualifies for the protocol game")

    penv = replace(base_env, l=l_val)
    groups: dict = {}
    for m in members:
        if m.id in strategic:
            groups.setdefault(_chain_key(profs[m.id]), []).append(m.id)
    class_keys = sorted(groups)
    classes = []
    member_class = {}
    for ci, key in enumerate(class_keys):
        ids = groups[key]
        rep = profs[ids[0]]
        conn = sum(1 for i in ids if i in present)
        classes.append(
            MinerClass(
                profile=replace(rep, id=f"{pool.id}.class{ci}", capacity=math.inf),
                registered=len(ids),
                connected=conn,
            )
        )
        for i in ids:
            member_class[i] = ci

    utility: dict = {}
    cost: dict = {}
    roi: dict = {}
    mean_inv: dict = {}
    chain = None
    stationary = np.ones(1)
    strategy = np.zeros((1, max(len(classes), 1)))
    if classes:
        chain = build_chain(classes, penv, state_cap=state_cap)
        strategy = np.zeros(chain.states.shape)
        for si, row in enumerate(chain.states):
            cls_counts = [(cl.profile, int(n)) for cl, n in zip(classes, row)]
            adm = _class_active_counts(cls_counts, penv)
            _, xs = _class_equilibrium(
                [(p, a) for (p, _), a in zip(cls_counts, adm)], penv
            )
            for ci, ((prof, n), a, xv) in enumerate(zip(cls_counts, adm, xs)):
                # exchangeability smoothing for partially admitted classes
                strategy[si, ci] = xv if a == n else (xv * a / n if n else 0.0)
        table = expected_utilities(chain, strategy, penv)
        stationary = stationary_distribution(chain)
        for ci, cl in enumerate(classes):
            mask = ~np.isnan(table.utility_present[:, ci])
            w = stationary[mask]
            wsum = w.sum()
            if wsum <= 0:
                u = c_ = xm = 0.0
            else:
                u = float(w @ table.utility_present[mask, ci] / wsum)
                c_ = float(w @ table.cost_present[mask, ci] / wsum)
                xm = float(w @ strategy[mask, ci] / wsum)
            for mid, cix in member_class.items():
                if cix != ci:
                    continue
                utility[mid] = u
                cost[mid] = c_
                roi[mid] = u / c_ if c_ > 0 else math.inf
                mean_inv[mid] = xm

    if l_ids:
        if chain is None:
            # no strategic class: a single-state chain carries the l solve
            dummy = MinerClass(
                profile=PlayerSpec(id=f"{pool.id}.none", c=1.0, k=1.0),
                registered=0,
            )
            chain = build_chain([dummy], penv, state_cap=state_cap)
            strategy = np.zeros(chain.states.shape)
            stationary = stationary_distribution(chain)
        by_profile: dict = {}
        for m in members:
            if m.id in l_ids:
                p = profs[m.id]
                by_profile.setdefault((p.c, p.k, p.capacity), []).append(m.id)
        for (c_i, k_i, cap), ids in sorted(by_profile.items()):
            prof = replace(profs[ids[0]], capacity=cap)
            u_arr, c_arr = fixed_investment_utilities(chain, prof, cap, strategy, penv)
            u = float(stationary @ u_arr)
            c_ = float(stationary @ c_arr)
            for mid in ids:
                utility[mid] = u
                cost[mid] = c_
                roi[mid] = u / c_ if c_ > 0 else math.inf
                mean_inv[mid] = cap

    return ProtocolResult(
        env=penv,
        chain=chain,
        stationary=stationary,
        class_profiles=tuple(cl.profile for cl in classes),
        investments=strategy,
        member_class=member_class,
        l_members=tuple(l_ids),
        excluded=tuple(sorted(excluded)),
        l=l_val,
        utility=utility,
        cost=cost,
        roi=roi,
        mean_investment=mean_inv,
    )


def _group_counts(members, key, top: bool) -> list:
    """(representative profile, count) pairs grouping members by `key`."""
    groups: dict = {}
    for m in members:
        groups.setdefault(key(m), []).append(m)
    out = []
    for k in sorted(groups):
        ms = groups[k]
        out.append((replace(ms[0], capacity=math.inf), len(ms)))
    return out


@dataclass(frozen=True)
class RewardShares:
    """Reward fractions and the indices they are built from."""

    alpha: Mapping[str, float]
    i_cost: Mapping[str, float]
    i_roi: Mapping[str, float]
    composite: Mapping[str, float]
    expected_reward: float
    reference: str


def reward_shares(
    pool: PoolSpec,
    assignment: WorkAssignment,
    protocol: ProtocolResult,
    pool_utility: float,
    *,
    cost_basis: str = "assigned",
) -> RewardShares:
    """Per-miner reward fractions from relative cost and relative ROI.

    The composite index is normalized to sum to one, which makes it
    invariant to the reference member (smallest c/k, ties by id).  The
    alpha numerator charges each miner its assigned work by default;
    cost_basis="protocol" switches to the protocol-game mean investment
    for sensitivity runs (the shares then may not sum to one exactly).
    """
    if cost_basis not in ("assigned", "protocol"):
        raise ValidationError("cost_basis must be 'assigned' or 'protocol'")
    conn = pool.connected_members
    missing = [m.id for m in conn if m.id not in protocol.roi]
    if missing:
        raise ValidationError(
            f"protocol results missing for connected miners: {missing[:5]}"
        )
    ref = min(conn, key=lambda m: (m.cost_ratio, m.id))
    x_ref = assignment.investments.get(ref.id, 0.0)
    if ref.c * x_ref <= 0:
        raise ValidationError(f"reference member {ref.id} has zero assigned cost")
    roi_ref = protocol.roi[ref.id]
    if not roi_ref or not math.isfinite(roi_ref):
        raise ValidationError(f"reference member {ref.id} has unusable ROI {roi_ref}")

    i_cost, i_roi, raw = {}, {}, {}
    for m in conn:
        xa = assignment.investments.get(m.id, 0.0)
        i_cost[m.id] = (m.c * xa) / (ref.c * x_ref)
        i_roi[m.id] = protocol.roi[m.id] / roi_ref
        raw[m.id] = i_cost[m.id] * i_roi[m.id]
    total = sum(raw.values())
    if total <= 0:
        raise ValidationError("all composite share indices are zero")
    composite = {k: v / total for k, v in raw.items()}

    beta = protocol.env.beta
    e_reward = pool_utility + assignment.c_p * assignment.x_p / beta
    alpha = {}
    for m in conn:
        xb = (
            assignment.investments.get(m.id, 0.0)
            if cost_basis == "assigned"
            else protocol.mean_investment[m.id]
        )
        alpha[m.id] = (composite[m.id] * pool_utility + m.c * xb / beta) / e_reward
    return RewardShares(
        alpha=alpha,
        i_cost=i_cost,
        i_roi=i_roi,
        composite=composite,
        expected_reward=e_reward,
        reference=ref.id,
    )


def miner_total_utility(
    miner: PlayerSpec,
    memberships: Sequence[tuple],
    solo_role: str = "absent",
    *,
    solo_solution: EquilibriumSolution | None = None,
    env: GameEnv | None = None,
) -> float:
    """Total expected utility: pool shares plus the declared solo role.

    `memberships` holds (pool utility R_p, composite share) pairs.  The
    strategic role reads the miner's utility from `solo_solution` and
    rejects capacities below the equilibrium investment; the nonstrategic
    role prices the miner's full capacity inside l at the solution's psi.
    """
    total = sum(share * r_p for r_p, share in memberships)
    if solo_role == "absent":
        return total
    if solo_role == "strategic":
        if solo_solution is None or miner.id not in solo_solution.investments:
            raise ValidationError("strategic role needs a solution covering the miner")
        x = solo_solution.investments[miner.id]
        if x > miner.capacity:
            raise ValidationError(
                f"miner {miner.id} declared strategic but capacity {miner.capacity:g} "
                f"is below the equilibrium investment {x:g}"
            )
        return total + solo_solution.expected_utility[miner.id]
    if solo_role == "nonstrategic":
        if solo_solution is None or env is None:
            raise ValidationError("nonstrategic role needs a solution and env")
        if not math.isfinite(miner.capacity):
            raise ValidationError("nonstrategic role needs a finite capacity")
        ps = solo_solution.psi
        win = miner.k * miner.capacity / ps if ps > 0 else 0.0
        return total + win * effective_reward(miner, env) - miner.c * miner.capacity / env.beta
    raise ValidationError(f"unknown solo role {solo_role!r}")


@dataclass(frozen=True)
class Network:
    """The full mining network: environment plus all pools."""

    env: GameEnv
    pools: tuple

    def __post_init__(self):
        object.__setattr__(self, "pools", tuple(self.pools))
        ids = [p.id for p in self.pools]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate pool ids")


@dataclass
class CooperativeSolution:
    """Everything the cooperative baseline produces, per pool."""

    subgame: EquilibriumSolution
    assignments: dict
    protocols: dict
    shares: dict
    pool_reward: dict  # pool id -> expected reward E[r]_p


def cooperative_solution(
    network: Network, *, damping: float = 0.0, cost_basis: str = "assigned"
) -> CooperativeSolution:
    sol, assignments = pool_fixed_point(network.pools, network.env, damping=damping)
    protocols, shares, rewards = {}, {}, {}
    for pool in network.pools:
        asg = assignments[pool.id]
        r_p = sol.expected_utility[pool.id]
        e_r = r_p + asg.c_p * asg.x_p / network.env.beta
        rewards[pool.id] = e_r
        protocols[pool.id] = protocol_game(pool, asg, e_r, network.env)
        shares[pool.id] = reward_shares(
            pool, asg, protocols[pool.id], r_p, cost_basis=cost_basis
        )
    return CooperativeSolution(
        subgame=sol,
        assignments=assignments,
        protocols=protocols,
        shares=shares,
        pool_reward=rewards,
    )


def _profile_key(m: PlayerSpec) -> tuple:
    return (m.c, m.k, m.lam, m.mu, m.capacity)


def _network_profiles(network: Network) -> list:
    """Connected-member profiles network-wide: (key, representative,
    count, home pool id) in a stable order."""
    found: dict = {}
    for pool in network.pools:
        for m in pool.connected_members:
            key = _profile_key(m)
            if key not in found:
                found[key] = [m, 0, pool.id]
            found[key][1] += 1
    out = []
    for key in sorted(found):
        rep, count, home = found[key]
        out.append((key, rep, count, home))
    return out


def _profile_labels(profiles) -> dict:
    labels = {}
    caps: dict = {}
    for key, rep, _, _ in profiles:
        caps.setdefault(rep.capacity, []).append(key)
    for key, rep, _, _ in profiles:
        if len(caps[rep.capacity]) == 1:
            labels[key] = f"cap{rep.capacity:g}"
        else:
            labels[key] = f"c{rep.c:g}-k{rep.k:g}-cap{rep.capacity:g}"
    return labels


def _pool_without(pool: PoolSpec, member_id: str) -> PoolSpec:
    return PoolSpec(
        id=pool.id,
        members=tuple(m for m in pool.members if m.id != member_id),
        connected=frozenset(pool.connected) - {member_id},
        t=pool.t,
        z=pool.z,
    )


def _solo_entry_utility(
    network: Network,
    coop: CooperativeSolution,
    deserters: Sequence[PlayerSpec],
    pools: Sequence[PoolSpec],
    *,
    damping: float = 0.0,
) -> tuple[float, EquilibriumSolution]:
    """Utility of deserters[0] re-entering the open competition, plus the
    re-solved pool equilibrium.  All deserters share one profile; they
    enter as strategic players when capacity covers the solo equilibrium
    investment, otherwise as capacity investors inside l (subject to the
    participation threshold against the cooperative aggregates)."""
    env = network.env
    lead = deserters[0]
    sol_try, _ = pool_fixed_point(pools, env, solos=list(deserters), damping=damping)
    x_solo = sol_try.investments[lead.id]
    if 0 < x_solo <= lead.capacity:
        return sol_try.expected_utility[lead.id], sol_try

    agg_specs = [
        _pool_spec_as_player(p, coop.assignments[p.id].c_p, coop.assignments[p.id].k_p)
        for p in network.pools
    ]
    _, admitted = participation_condition(lead, agg_specs, env)
    if not admitted:
        sol0, _ = pool_fixed_point(pools, env, damping=damping)
        return 0.0, sol0
    extra = sum(d.k * d.capacity for d in deserters)
    env2 = replace(env, l=env.l + extra)
    sol2, _ = pool_fixed_point(pools, env2, damping=damping)
    ps = sol2.psi
    win = lead.k * lead.capacity / ps if ps > 0 else 0.0
    b = win * effective_reward(lead, env2) - lead.c * lead.capacity / env.beta
    return b, sol2


def _desertion_outcome(
    network: Network,
    coop: CooperativeSolution,
    profile_key: tuple,
    rep: PlayerSpec,
    home_pool: str,
    *,
    copies: int = 1,
    damping: float = 0.0,
) -> tuple[float, EquilibriumSolution, str]:
    """One (or `copies`) members of the profile desert a non-focal pool.

    Returns the lead deserter's utility, the re-solved pool equilibrium
    (for the surviving pools' utilities), and the id of the deserted pool.
    """
    donor = None
    for pool in reversed(network.pools):
        if pool.id != home_pool and any(
            _profile_key(m) == profile_key for m in pool.connected_members
        ):
            donor = pool
            break
    if donor is None:  # single pool, or profile present only in its home
        donor = next(
            p
            for p in network.pools
            if any(_profile_key(m) == profile_key for m in p.connected_members)
        )
    victims = [m for m in donor.connected_members if _profile_key(m) == profile_key]
    victims = victims[: min(copies, len(victims))]
    reduced = donor
    deserters = []
    for i, v in enumerate(victims):
        reduced = _pool_without(reduced, v.id)
        deserters.append(
            replace(v, id=f"deserter{i}", t=donor.t, z=donor.z)
        )
    while len(deserters) < copies:  # donor exhausted: clone the profile
        deserters.append(replace(rep, id=f"deserter{len(deserters)}", t=donor.t, z=donor.z))
    pools = [reduced if p.id == donor.id else p for p in network.pools]
    b, sol = _solo_entry_utility(network, coop, deserters, pools, damping=damping)
    return b, sol, donor.id


def _mutual_desertion(
    network: Network, *, damping: float = 0.0
) -> dict:
    """Everyone mines solo: per-profile utility in the one big open game.

    Members whose capacity covers the solo equilibrium stay strategic;
    the rest fold their capacity into l when the participation threshold
    admits them, and sit out otherwise.  The capable set shrinks
    monotonically, so the loop terminates.
    """
    env = network.env
    everyone = []
    for pool in network.pools:
        for m in pool.connected_members:
            everyone.append(replace(m, id=f"{pool.id}.{m.id}", t=pool.t, z=pool.z))
    # classes keyed by everything that affects the solo game
    def solo_key(m):
        return (m.c, m.k, m.t, m.z, m.capacity)

    groups: dict = {}
    for m in everyone:
        groups.setdefault(solo_key(m), []).append(m)
    capable = {k: True for k in groups}
    for _ in range(len(groups) + 1):
        strat_classes = [
            (replace(groups[k][0], capacity=math.inf), len(groups[k]))
            for k in sorted(groups)
            if capable[k]
        ]
        folded = 0.0
        for k in sorted(groups):
            if capable[k]:
                continue
            rep = groups[k][0]
            env_k = replace(env, l=env.l + folded)
            _, ok = _folds_into_l(rep, strat_classes, env_k)
            if ok:
                folded += rep.k * rep.capacity * len(groups[k])
        env_d = replace(env, l=env.l + folded)
        counts = _class_active_counts(strat_classes, env_d)
        ps, xs = _class_equilibrium(
            [(p, c) for (p, _), c in zip(strat_classes, counts)], env_d
        )
        changed = False
        ci = 0
        for k in sorted(groups):
            if not capable[k]:
                continue
            rep = groups[k][0]
            if rep.capacity < xs[ci]:
                capable[k] = False
                changed = True
            ci += 1
        if not changed:
            break
    else:
        raise SolveError("mutual-desertion capability loop did not stabilize")

    out = {}
    strat_lookup = {}
    ci = 0
    for k in sorted(groups):
        if capable[k]:
            strat_lookup[k] = (ps, xs[ci])
            ci += 1
    for k in sorted(groups):
        rep = groups[k][0]
        if k in strat_lookup:
            ps_k, x_k = strat_lookup[k]
            win = rep.k * x_k / ps_k if ps_k > 0 else 0.0
            out[k] = win * effective_reward(rep, env) - rep.c * x_k / env.beta
        else:
            env_k = replace(env, l=env.l)  # threshold vs the strategic rest
            _, ok = _folds_into_l(rep, [
                (replace(groups[kk][0], capacity=math.inf), len(groups[kk]))
                for kk in sorted(groups) if capable[kk]
            ], env_k)
            if ok and ps > 0:
                win = rep.k * rep.capacity / ps
                out[k] = win * effective_reward(rep, env) - rep.c * rep.capacity / env.beta
            else:
                out[k] = 0.0
    return out


def _folds_into_l(rep: PlayerSpec, strat_classes, env: GameEnv) -> tuple[float, bool]:
    ps1 = _class_psi(strat_classes, env)
    reff = effective_reward(rep, env) / env.tau  # threshold works in reward units
    if ps1 <= 0:
        return math.inf, env.l > 0 or bool(strat_classes)
    threshold = env.beta * env.tau * reff / ps1
    return threshold, rep.cost_ratio < threshold


def _coop_share_utility(
    coop: CooperativeSolution, network: Network, profile_key: tuple
) -> tuple[float, str, str]:
    """(composite share, member id, pool id) of one member of the profile."""
    for pool in network.pools:
        for m in pool.connected_members:
            if _profile_key(m) == profile_key:
                return coop.shares[pool.id].composite[m.id], m.id, pool.id
    raise ValidationError("profile not found among connected members")


def scenario_utilities(
    network: Network,
    scenario: str,
    *,
    deserter: str | None = None,
    damping: float = 0.0,
    coop: CooperativeSolution | None = None,
) -> dict:
    """Per-profile utilities under a cooperation scenario.

    scenario is one of mutual-cooperation, unilateral-desertion (requires
    `deserter`, a profile label) or mutual-desertion.  Profile labels are
    capacity-based (e.g. cap20); see sdp_table for the full ratio suite.
    """
    profiles = _network_profiles(network)
    labels = _profile_labels(profiles)
    if coop is None and scenario != "mutual-desertion":
        coop = cooperative_solution(network, damping=damping)
    if scenario == "mutual-cooperation":
        out = {}
        for key, rep, _, home in profiles:
            share, _, pid = _coop_share_utility(coop, network, key)
            out[labels[key]] = {"a": share * coop.subgame.expected_utility[pid]}
        return out
    if scenario == "unilateral-desertion":
        by_label = {labels[k]: (k, rep, home) for k, rep, _, home in profiles}
        if deserter not in by_label:
            raise ValidationError(
                f"unknown deserter profile {deserter!r}; choices: {sorted(by_label)}"
            )
        key, rep, home = by_label[deserter]
        b, sol, donor = _desertion_outcome(
            network, coop, key, rep, home, copies=1, damping=damping
        )
        out = {}
        for k2, rep2, _, home2 in profiles:
            share, _, pid = _coop_share_utility(coop, network, k2)
            if pid == donor and len(network.pools) > 1:
                # shares of the deserted pool are not re-derived; report the
                # same profile from a surviving pool instead
                for pool in network.pools:
                    if pool.id != donor and any(
                        _profile_key(m) == k2 for m in pool.connected_members
                    ):
                        pid = pool.id
                        break
            entry = {"a": share * sol.expected_utility[pid]}
            if labels[k2] == deserter:
                entry["b"] = b
            out[labels[k2]] = entry
        return out
    if scenario == "mutual-desertion":
        solo = _mutual_desertion(network, damping=damping)
        out = {}
        for key, rep, _, home in profiles:
            # solo keys carry the pool-level block parameters
            for (c, k, t, z, cap), val in solo.items():
                if (c, k, cap) == (rep.c, rep.k, rep.capacity):
                    out[labels[key]] = {"b": val}
                    break
        return out
    raise ValidationError(f"unknown scenario {scenario!r}")


@dataclass
class ProfileRow:
    """One line of the cooperation/desertion comparison table."""

    label: str
    count: int
    capacity: float
    assigned: float
    strategic: bool
    a_coop: float
    a_after: float
    b_unilateral: float
    b_second: float
    b_mutual: float

    @property
    def sdp1_a(self) -> float:
        return self.a_coop / self.a_after

    @property
    def sdp1_b(self) -> float:
        return self.b_unilateral / self.b_second

    @property
    def sdp2(self) -> float:
        return self.b_unilateral / self.a_coop

    @property
    def sdp3(self) -> float:
        return self.a_coop / self.b_mutual


def sdp_table(
    network: Network, *, damping: float = 0.0, cost_basis: str = "assigned"
) -> list:
    """Cooperate/desert utilities and social-dilemma ratios per profile."""
    coop = cooperative_solution(network, damping=damping, cost_basis=cost_basis)
    profiles = _network_profiles(network)
    labels = _profile_labels(profiles)
    mutual = _mutual_desertion(network, damping=damping)
    rows = []
    for key, rep, count, home in profiles:
        share, mid, pid = _coop_share_utility(coop, network, key)
        r_p = coop.subgame.expected_utility[pid]
        a_coop = share * r_p
        b1, sol1, donor = _desertion_outcome(
            network, coop, key, rep, home, copies=1, damping=damping
        )
        b2, _, _ = _desertion_outcome(
            network, coop, key, rep, home, copies=2, damping=damping
        )
        focal_pid = pid
        if focal_pid == donor and len(network.pools) > 1:
            focal_pid = next(p.id for p in network.pools if p.id != donor)
        a_after = share * sol1.expected_utility[focal_pid]
        b0 = 0.0
        for (c, k, t, z, cap), val in mutual.items():
            if (c, k, cap) == (rep.c, rep.k, rep.capacity):
                b0 = val
                break
        proto = coop.protocols[pid]
        rows.append(
            ProfileRow(
                label=labels[key],
                count=count,
                capacity=rep.capacity,
                assigned=coop.assignments[pid].investments.get(mid, 0.0),
                strategic=mid in proto.member_class,
                a_coop=a_coop,
                a_after=a_after,
                b_unilateral=b1,
                b_second=b2,
                b_mutual=b0,
            )
        )
    return rows


def annual_energy_twh(solution: EquilibriumSolution, env: GameEnv) -> float:
    """Yearly network energy in TWh from a per-minute equilibrium."""
    total = sum(solution.investments.values()) + env.l
    return total * MINUTES_PER_YEAR / 1e9
