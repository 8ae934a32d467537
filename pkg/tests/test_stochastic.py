"""Attendance-chain utilities against an independent value-iteration oracle.

The oracle re-derives every rate from the class parameters and solves the
recursion by fixed-point iteration on plain dicts; the module under test
assembles a sparse linear system.  Agreement on small instances is the
exactness check for both the matrix assembly and the solver.
"""

import math

import numpy as np
import pytest
from scipy import stats

from coopmine.model import GameEnv, PlayerSpec, SolveError, ValidationError
from coopmine.model import effective_reward
from coopmine.stochastic import (
    MinerClass,
    ReducibleChainError,
    build_chain,
    expected_utilities,
    fixed_investment_utilities,
    stationary_distribution,
)


def vi_oracle(chain, strategy, env, focal, tol=1e-14, max_iter=200_000):
    """Value iteration for the focal class of a chain.

    Returns four dicts keyed by state row: present/absent utility and cost.
    States are interpreted exactly as in the recursive definition: the
    focal member is counted inside its class in the present system and
    excluded from it in the absent system.
    """
    classes = chain.classes
    prof = classes[focal].profile
    n_reg = [cl.registered for cl in classes]
    lam = [cl.profile.lam for cl in classes]
    mu = [cl.profile.mu for cl in classes]
    k_arr = [cl.profile.k for cl in classes]
    reward = effective_reward(prof, env)
    states = [tuple(int(v) for v in row) for row in chain.states]
    idx = {s: i for i, s in enumerate(states)}

    def rate_d(s):
        return env.beta + sum(
            (n_reg[c] - s[c]) * lam[c] + s[c] * mu[c] for c in range(len(s))
        )

    def denom(s):
        i = idx[s]
        return (
            sum(s[c] * k_arr[c] * strategy[i, c] for c in range(len(s)))
            + env.k_l * env.l
        )

    present = [s for s in states if s[focal] >= 1]
    absent = [s for s in states if s[focal] <= n_reg[focal] - 1]
    up_d = {}
    cost_d = {}
    ua_d = {}
    ca_d = {}
    for s in present:
        up_d[s] = 0.0
        cost_d[s] = 0.0
    for s in absent:
        ua_d[s] = 0.0
        ca_d[s] = 0.0

    def bump(s, c, delta):
        t = list(s)
        t[c] += delta
        return tuple(t)

    for _ in range(max_iter):
        worst = 0.0
        new_up, new_cp = {}, {}
        for s in present:
            i = idx[s]
            x = strategy[i, focal]
            d = denom(s)
            w = prof.k * x / d if d > 0 else 0.0
            acc_u = env.beta * w * reward - prof.c * x
            acc_c = prof.c * x
            for c in range(len(s)):
                arr = (n_reg[c] - s[c]) * lam[c]
                if arr > 0:
                    acc_u += arr * up_d[bump(s, c, +1)]
                    acc_c += arr * cost_d[bump(s, c, +1)]
                if c != focal:
                    dep = s[c] * mu[c]
                    if dep > 0:
                        acc_u += dep * up_d[bump(s, c, -1)]
                        acc_c += dep * cost_d[bump(s, c, -1)]
            co_dep = (s[focal] - 1) * mu[focal]
            if co_dep > 0:
                acc_u += co_dep * up_d[bump(s, focal, -1)]
                acc_c += co_dep * cost_d[bump(s, focal, -1)]
            if mu[focal] > 0:
                acc_u += mu[focal] * ua_d[bump(s, focal, -1)]
                acc_c += mu[focal] * ca_d[bump(s, focal, -1)]
            d_tot = rate_d(s)
            new_up[s] = acc_u / d_tot
            new_cp[s] = acc_c / d_tot
            worst = max(worst, abs(new_up[s] - up_d[s]), abs(new_cp[s] - cost_d[s]))
        new_ua, new_ca = {}, {}
        for s in absent:
            acc_u = 0.0
            acc_c = 0.0
            for c in range(len(s)):
                if c != focal:
                    arr = (n_reg[c] - s[c]) * lam[c]
                    if arr > 0:
                        acc_u += arr * ua_d[bump(s, c, +1)]
                        acc_c += arr * ca_d[bump(s, c, +1)]
                dep = s[c] * mu[c]
                if dep > 0:
                    acc_u += dep * ua_d[bump(s, c, -1)]
                    acc_c += dep * ca_d[bump(s, c, -1)]
            co_arr = (n_reg[focal] - s[focal] - 1) * lam[focal]
            if co_arr > 0:
                acc_u += co_arr * ua_d[bump(s, focal, +1)]
                acc_c += co_arr * ca_d[bump(s, focal, +1)]
            if lam[focal] > 0:
                acc_u += lam[focal] * up_d[bump(s, focal, +1)]
                acc_c += lam[focal] * cost_d[bump(s, focal, +1)]
            d_tot = rate_d(s)
            new_ua[s] = acc_u / d_tot
            new_ca[s] = acc_c / d_tot
            worst = max(worst, abs(new_ua[s] - ua_d[s]), abs(new_ca[s] - ca_d[s]))
        up_d, cost_d, ua_d, ca_d = new_up, new_cp, new_ua, new_ca
        if worst < tol:
            break
    else:
        raise AssertionError("oracle did not converge")
    return up_d, cost_d, ua_d, ca_d


def small_instance():
    env = GameEnv(r=40.0, tau=2.0, beta=0.7, theta=0.001, l=30.0, k_l=1.3)
    classes = [
        MinerClass(
            profile=PlayerSpec(id="A", c=0.02, k=1.1, t=50.0, z=1e-3, lam=0.6, mu=0.8),
            registered=3,
        ),
        MinerClass(
            profile=PlayerSpec(id="B", c=0.03, k=0.9, t=20.0, z=5e-4, lam=0.4, mu=0.5),
            registered=2,
        ),
        MinerClass(
            profile=PlayerSpec(id="S", c=0.05, k=1.0),
            registered=2,
            connected=2,
        ),
    ]
    chain = build_chain(classes, env)
    # smooth positive state-dependent strategy, nothing special about it
    strat = np.zeros(chain.states.shape)
    for i, row in enumerate(chain.states):
        for c in range(len(classes)):
            strat[i, c] = 50.0 + 10.0 * row[0] + 5.0 * row[1] + 7.0 * c
    return chain, strat, env


def test_expected_utilities_match_value_iteration():
    chain, strat, env = small_instance()
    table = expected_utilities(chain, strat, env)
    for focal in range(len(chain.classes)):
        up, cp, ua, ca = vi_oracle(chain, strat, env, focal)
        for i, row in enumerate(chain.states):
            s = tuple(int(v) for v in row)
            if s[focal] >= 1:
                assert table.utility_present[i, focal] == pytest.approx(
                    up[s], rel=1e-6
                )
                assert table.cost_present[i, focal] == pytest.approx(cp[s], rel=1e-6)
            else:
                assert math.isnan(table.utility_present[i, focal])
            if s[focal] <= chain.classes[focal].registered - 1:
                assert table.utility_absent[i, focal] == pytest.approx(
                    ua[s], rel=1e-6
                )
            else:
                assert math.isnan(table.utility_absent[i, focal])


def test_fixed_investment_matches_value_iteration():
    chain, strat, env = small_instance()
    watcher = PlayerSpec(id="w", c=0.04, k=1.2, t=10.0, z=1e-4)
    x_fixed = 8.0
    util, cost = fixed_investment_utilities(chain, watcher, x_fixed, strat, env)

    # independent fixed point: same recursion, no presence dimension
    states = [tuple(int(v) for v in row) for row in chain.states]
    idx = {s: i for i, s in enumerate(states)}
    n_reg = [cl.registered for cl in chain.classes]
    lam = [cl.profile.lam for cl in chain.classes]
    mu = [cl.profile.mu for cl in chain.classes]
    karr = [cl.profile.k for cl in chain.classes]
    reward = effective_reward(watcher, env)
    u = {s: 0.0 for s in states}
    c_ = {s: 0.0 for s in states}
    for _ in range(100_000):
        worst = 0.0
        nu, nc = {}, {}
        for s in states:
            i = idx[s]
            den = (
                sum(s[c] * karr[c] * strat[i, c] for c in range(len(s)))
                + env.k_l * env.l
            )
            w = watcher.k * x_fixed / den
            acc_u = env.beta * w * reward - watcher.c * x_fixed
            acc_c = watcher.c * x_fixed
            d_tot = env.beta
            for c in range(len(s)):
                arr = (n_reg[c] - s[c]) * lam[c]
                dep = s[c] * mu[c]
                d_tot += arr + dep
                if arr > 0:
                    t = list(s)
                    t[c] += 1
                    acc_u += arr * u[tuple(t)]
                    acc_c += arr * c_[tuple(t)]
                if dep > 0:
                    t = list(s)
                    t[c] -= 1
                    acc_u += dep * u[tuple(t)]
                    acc_c += dep * c_[tuple(t)]
            nu[s] = acc_u / d_tot
            nc[s] = acc_c / d_tot
            worst = max(worst, abs(nu[s] - u[s]), abs(nc[s] - c_[s]))
        u, c_ = nu, nc
        if worst < 1e-14:
            break
    for s in states:
        assert util[idx[s]] == pytest.approx(u[s], rel=1e-6)
        assert cost[idx[s]] == pytest.approx(c_[s], rel=1e-6)


def test_static_chain_collapses_to_one_shot():
    # one pinned class, no transitions: the recursion reduces to the
    # single-block utility w R - c x / beta
    env = GameEnv(r=10.0, tau=3.0, beta=0.25, theta=0.0, l=100.0)
    prof = PlayerSpec(id="s", c=0.01, k=1.0)
    chain = build_chain([MinerClass(profile=prof, registered=4, connected=4)], env)
    assert chain.n_states == 1
    x = 60.0
    strat = np.full((1, 1), x)
    table = expected_utilities(chain, strat, env)
    w = x / (4 * x + 100.0)
    expected = w * effective_reward(prof, env) - prof.c * x / env.beta
    assert table.utility_present[0, 0] == pytest.approx(expected, rel=1e-12)
    assert table.at_start(0)[0] == pytest.approx(expected, rel=1e-12)


def test_stationary_single_class_is_binomial():
    env = GameEnv(r=1.0, tau=1.0, beta=0.1, theta=0.0, l=0.0)
    cl = MinerClass(
        profile=PlayerSpec(id="m", c=1.0, lam=1.0, mu=0.1), registered=600,
        connected=550,
    )
    chain = build_chain([cl], env)
    pi = stationary_distribution(chain)
    p = 1.0 / 1.1
    ref = stats.binom.pmf(np.arange(601), 600, p)
    assert np.allclose(pi, ref, atol=1e-12)
    counts = chain.states[:, 0]
    assert pi[(counts >= 520) & (counts <= 570)].sum() > 0.999


def test_stationary_multi_class_product_form():
    # two independent dynamic classes: joint law is the product of the
    # marginal binomials (checked through the general piQ=0 solver)
    env = GameEnv(r=1.0, tau=1.0, beta=0.3, theta=0.0, l=0.0)
    cls = [
        MinerClass(profile=PlayerSpec(id="a", c=1.0, lam=0.7, mu=0.4), registered=5),
        MinerClass(profile=PlayerSpec(id="b", c=1.0, lam=0.2, mu=0.9), registered=4),
    ]
    chain = build_chain(cls, env)
    pi = stationary_distribution(chain)
    pa = stats.binom.pmf(np.arange(6), 5, 0.7 / 1.1)
    pb = stats.binom.pmf(np.arange(5), 4, 0.2 / 1.1)
    for i, (sa, sb) in enumerate(chain.states):
        assert pi[i] == pytest.approx(pa[sa] * pb[sb], abs=1e-10)


def test_stationary_static_mass_at_start():
    env = GameEnv(r=1.0, tau=1.0, beta=0.5, theta=0.0, l=0.0)
    cls = [
        MinerClass(profile=PlayerSpec(id="a", c=1.0), registered=4, connected=3),
        MinerClass(profile=PlayerSpec(id="b", c=1.0, lam=0.5, mu=0.5), registered=2),
    ]
    chain = build_chain(cls, env)
    pi = stationary_distribution(chain)
    # static class stays at 3; dynamic marginal is Binomial(2, 1/2)
    for i, (sa, sb) in enumerate(chain.states):
        assert sa == 3
    marg = stats.binom.pmf(np.arange(3), 2, 0.5)
    for i, (sa, sb) in enumerate(chain.states):
        assert pi[i] == pytest.approx(marg[sb], rel=1e-9)


def test_reducible_chain_reported():
    env = GameEnv(r=1.0, tau=1.0, beta=0.5, theta=0.0, l=0.0)
    one_way = MinerClass(
        profile=PlayerSpec(id="leaver", c=1.0, lam=0.0, mu=0.3), registered=3
    )
    chain = build_chain([one_way], env)
    with pytest.raises(ReducibleChainError) as exc:
        stationary_distribution(chain)
    assert exc.value.decomposition
    assert "absorbing at 0" in exc.value.decomposition[0]

    joiner = MinerClass(
        profile=PlayerSpec(id="joiner", c=1.0, lam=0.3, mu=0.0), registered=3
    )
    with pytest.raises(ReducibleChainError) as exc:
        stationary_distribution(build_chain([joiner], env))
    assert "absorbing at 3" in exc.value.decomposition[0]


def test_state_cap_enforced():
    env = GameEnv(r=1.0, tau=1.0, beta=0.5, theta=0.0, l=0.0)
    cls = [
        MinerClass(profile=PlayerSpec(id="big", c=1.0, lam=1.0, mu=1.0), registered=99)
    ]
    with pytest.raises(SolveError):
        build_chain(cls, env, state_cap=10)


def test_class_validation():
    with pytest.raises(ValidationError):
        MinerClass(profile=PlayerSpec(id="x", c=1.0), registered=2, connected=3)
    with pytest.raises(ValidationError):
        MinerClass(profile=PlayerSpec(id="x", c=1.0), registered=-1)
    assert MinerClass(profile=PlayerSpec(id="x", c=1.0), registered=2).connected == 2


def test_strategy_shape_checked():
    chain, strat, env = small_instance()
    with pytest.raises(ValidationError):
        expected_utilities(chain, strat[:, :2], env)
