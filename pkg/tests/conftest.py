"""Shared fixtures: the reference ten-pool instance and its solved state.

The heavyweight fixtures are session-scoped; tests must not mutate them.
"""

import pytest

from coopmine.model import GameEnv, PlayerSpec
from coopmine.pool import Network, PoolSpec, pool_fixed_point

TEN_POOL_ENV = GameEnv(r=6.25, tau=10000.0, beta=0.1, theta=0.00012, l=700000.0)
POOL_T = 2100.0
POOL_Z = 0.005 / 60


def reference_players(n: int = 10) -> list:
    return [
        PlayerSpec(id=f"pool{i + 1}", c=0.0007, k=1.0, t=POOL_T, z=POOL_Z)
        for i in range(n)
    ]


def reference_pool(pid: str) -> PoolSpec:
    """One pool of the ten-pool network: 500 small always-on miners plus
    600 registered strategic miners (550 connected) in three tiers."""
    members, connected = [], []
    for i in range(500):
        m = PlayerSpec(id=f"ns{i + 1:03d}", c=0.0007, k=1.0, capacity=20.0)
        members.append(m)
        connected.append(m.id)
    for i in range(350):
        m = PlayerSpec(
            id=f"s2k{i + 1:03d}", c=0.0007, k=1.0, lam=1.0, mu=0.1, capacity=2000.0
        )
        members.append(m)
        if i < 300:
            connected.append(m.id)
    for i in range(200):
        m = PlayerSpec(
            id=f"s3k{i + 1:03d}", c=0.0007, k=1.0, lam=1.0, mu=0.1, capacity=3000.0
        )
        members.append(m)
        connected.append(m.id)
    for i in range(50):
        m = PlayerSpec(
            id=f"s5k{i + 1:02d}", c=0.0007, k=1.0, lam=1.0, mu=0.1, capacity=5000.0
        )
        members.append(m)
        connected.append(m.id)
    return PoolSpec(
        id=pid, members=tuple(members), connected=tuple(connected), t=POOL_T, z=POOL_Z
    )


def reference_network() -> Network:
    return Network(
        env=TEN_POOL_ENV,
        pools=tuple(reference_pool(f"pool{i + 1}") for i in range(10)),
    )


@pytest.fixture(scope="session")
def ten_pool_network():
    return reference_network()


@pytest.fixture(scope="session")
def ten_pool_solution(ten_pool_network):
    """(subgame solution, per-pool WorkAssignment) at the fixed point."""
    return pool_fixed_point(ten_pool_network.pools, ten_pool_network.env)


@pytest.fixture(scope="session")
def cooperative_reference(ten_pool_network):
    """Full cooperative baseline (protocol games and shares for all pools)."""
    from coopmine.pool import cooperative_solution

    return cooperative_solution(ten_pool_network)
