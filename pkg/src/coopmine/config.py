"""Config ingestion: one TOML file fully describes a run.

Strict by design: unknown keys are rejected with their field path, and
every scenario kind documents the blocks it needs.  Values never come
from environment variables, so a config plus a seed reproduces a run
exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

try:  # 3.11+ stdlib, tomli on older interpreters
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as _toml

from .dilemma import DilemmaPayoffs, build_payoffs
from .model import GameEnv, PlayerSpec, ValidationError
from .pool import Network, PoolSpec

__all__ = [
    "RunConfig",
    "SweepSpec",
    "SimSpec",
    "SimGroupSpec",
    "ChainSpec",
    "SCENARIOS",
    "load_config",
]

SCENARIOS = {
    "pool-solve": ("env", "players"),
    "protocol": ("env", "pools"),
    "shares": ("env", "pools"),
    "scenario-table": ("env", "pools"),
    "dilemma-sim": ("dilemma", "sim"),
    "stationary": ("chain",),
    "sweep": ("env", "players", "sweep"),
}


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple


@dataclass(frozen=True)
class SimGroupSpec:
    count: int
    phi: float | None = None  # absolute phi
    phi_factor: float | None = None  # multiple of the admissible maximum


@dataclass(frozen=True)
class SimSpec:
    iterations: int
    initial_cooperation: float
    runs: int = 1
    error_rate: float = 0.0
    groups: tuple = ()  # empty: one homogeneous group at phi_factor 1


@dataclass(frozen=True)
class ChainSpec:
    registered: int
    lam: float
    mu: float
    connected: int | None = None
    band: tuple | None = None  # report stationary mass on [lo, hi]


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    seed: int = 0
    env: GameEnv | None = None
    players: tuple = ()
    network: Network | None = None
    pool_id: str | None = None
    dilemma: DilemmaPayoffs | None = None
    sim: SimSpec | None = None
    chain: ChainSpec | None = None
    sweep: SweepSpec | None = None
    cost_basis: str = "assigned"
    damping: float = 0.0


def _check_keys(table: dict, allowed: dict, path: str) -> None:
    for key in table:
        if key not in allowed:
            raise ValidationError(
                f"unknown key '{path}.{key}'" if path else f"unknown key '{key}'"
            )


def _get(table: dict, key: str, path: str, types, required=False, default=None):
    if key not in table:
        if required:
            raise ValidationError(f"missing required key '{path}.{key}'")
        return default
    val = table[key]
    if types is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, types) or isinstance(val, bool) and types is not bool:
        raise ValidationError(
            f"key '{path}.{key}' has type {type(val).__name__}, expected {types}"
        )
    return val


def _parse_env(table: dict) -> GameEnv:
    _check_keys(
        table, {"r", "tau", "beta", "theta", "l", "k_l"}, "env"
    )
    return GameEnv(
        r=_get(table, "r", "env", float, required=True),
        tau=_get(table, "tau", "env", float, default=1.0),
        beta=_get(table, "beta", "env", float, required=True),
        theta=_get(table, "theta", "env", float, default=0.0),
        l=_get(table, "l", "env", float, default=0.0),
        k_l=_get(table, "k_l", "env", float, default=1.0),
    )


_PLAYER_KEYS = {"id", "c", "k", "t", "z", "lam", "mu", "capacity", "count"}


def _parse_players(items: list, path: str = "players") -> tuple:
    players = []
    for i, table in enumerate(items):
        p = f"{path}[{i}]"
        _check_keys(table, _PLAYER_KEYS, p)
        base_id = _get(table, "id", p, str, required=True)
        count = _get(table, "count", p, int, default=1)
        if count < 1:
            raise ValidationError(f"'{p}.count' must be >= 1")
        kwargs = dict(
            c=_get(table, "c", p, float, required=True),
            k=_get(table, "k", p, float, default=1.0),
            t=_get(table, "t", p, float, default=0.0),
            z=_get(table, "z", p, float, default=0.0),
            lam=_get(table, "lam", p, float, default=0.0),
            mu=_get(table, "mu", p, float, default=0.0),
            capacity=_get(table, "capacity", p, float, default=math.inf),
        )
        if count == 1:
            players.append(PlayerSpec(id=base_id, **kwargs))
        else:
            players.extend(
                PlayerSpec(id=f"{base_id}{i + 1}", **kwargs) for i in range(count)
            )
    if not players:
        raise ValidationError(f"'{path}' must list at least one player")
    return tuple(players)


_GROUP_KEYS = {"prefix", "c", "k", "lam", "mu", "capacity", "registered", "connected"}


def _parse_pools(items: list) -> tuple:
    pools = []
    for i, table in enumerate(items):
        p = f"pools[{i}]"
        _check_keys(table, {"id", "t", "z", "count", "groups"}, p)
        base_id = _get(table, "id", p, str, required=True)
        count = _get(table, "count", p, int, default=1)
        if count < 1:
            raise ValidationError(f"'{p}.count' must be >= 1")
        t = _get(table, "t", p, float, default=0.0)
        z = _get(table, "z", p, float, default=0.0)
        groups = table.get("groups")
        if not isinstance(groups, list) or not groups:
            raise ValidationError(f"'{p}.groups' must be a non-empty array of tables")
        members, connected = [], []
        for gi, gt in enumerate(groups):
            gp = f"{p}.groups[{gi}]"
            _check_keys(gt, _GROUP_KEYS, gp)
            prefix = _get(gt, "prefix", gp, str, required=True)
            registered = _get(gt, "registered", gp, int, required=True)
            conn = _get(gt, "connected", gp, int, default=registered)
            if not 0 <= conn <= registered:
                raise ValidationError(
                    f"'{gp}.connected' must lie in [0, registered={registered}]"
                )
            kwargs = dict(
                c=_get(gt, "c", gp, float, required=True),
                k=_get(gt, "k", gp, float, default=1.0),
                lam=_get(gt, "lam", gp, float, default=0.0),
                mu=_get(gt, "mu", gp, float, default=0.0),
                capacity=_get(gt, "capacity", gp, float, default=math.inf),
            )
            width = len(str(registered))
            for mi in range(registered):
                mid = f"{prefix}{mi + 1:0{width}d}"
                members.append(PlayerSpec(id=mid, **kwargs))
                if mi < conn:
                    connected.append(mid)
        for ci in range(count):
            pid = base_id if count == 1 else f"{base_id}{ci + 1}"
            pools.append(
                PoolSpec(
                    id=pid,
                    members=tuple(members),
                    connected=frozenset(connected),
                    t=t,
                    z=z,
                )
            )
    return tuple(pools)


def _parse_dilemma(table: dict) -> DilemmaPayoffs:
    _check_keys(table, {"n", "a_top", "a_bottom", "b_top", "b_bottom"}, "dilemma")
    return build_payoffs(
        a_top=_get(table, "a_top", "dilemma", float, required=True),
        a_bottom=_get(table, "a_bottom", "dilemma", float, required=True),
        b_top=_get(table, "b_top", "dilemma", float, required=True),
        b_bottom=_get(table, "b_bottom", "dilemma", float, required=True),
        n=_get(table, "n", "dilemma", int, required=True),
    )


def _parse_sim(table: dict) -> SimSpec:
    _check_keys(
        table,
        {"iterations", "initial_cooperation", "runs", "error_rate", "groups"},
        "sim",
    )
    groups = []
    for gi, gt in enumerate(table.get("groups", [])):
        gp = f"sim.groups[{gi}]"
        _check_keys(gt, {"count", "phi", "phi_factor"}, gp)
        phi = _get(gt, "phi", gp, float)
        factor = _get(gt, "phi_factor", gp, float)
        if (phi is None) == (factor is None):
            raise ValidationError(f"'{gp}' needs exactly one of phi / phi_factor")
        groups.append(
            SimGroupSpec(
                count=_get(gt, "count", gp, int, required=True),
                phi=phi,
                phi_factor=factor,
            )
        )
    return SimSpec(
        iterations=_get(table, "iterations", "sim", int, required=True),
        initial_cooperation=_get(
            table, "initial_cooperation", "sim", float, required=True
        ),
        runs=_get(table, "runs", "sim", int, default=1),
        error_rate=_get(table, "error_rate", "sim", float, default=0.0),
        groups=tuple(groups),
    )


def _parse_chain(table: dict) -> ChainSpec:
    _check_keys(table, {"registered", "connected", "lam", "mu", "band"}, "chain")
    registered = _get(table, "registered", "chain", int, required=True)
    band = table.get("band")
    if band is not None:
        if (
            not isinstance(band, list)
            or len(band) != 2
            or not all(isinstance(x, int) for x in band)
        ):
            raise ValidationError("'chain.band' must be [low, high] state indices")
        band = (band[0], band[1])
    return ChainSpec(
        registered=registered,
        lam=_get(table, "lam", "chain", float, required=True),
        mu=_get(table, "mu", "chain", float, required=True),
        connected=_get(table, "connected", "chain", int, default=registered),
        band=band,
    )


def _parse_sweep(table: dict) -> SweepSpec:
    _check_keys(table, {"parameter", "values"}, "sweep")
    parameter = _get(table, "parameter", "sweep", str, required=True)
    values = table.get("values")
    if not isinstance(values, list) or not values:
        raise ValidationError("'sweep.values' must be a non-empty array")
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(f"'sweep.values[{i}]' must be a number")
        out.append(float(v))
    return SweepSpec(parameter=parameter, values=tuple(out))


_TOP_KEYS = {
    "scenario",
    "seed",
    "env",
    "players",
    "pools",
    "pool",
    "dilemma",
    "sim",
    "chain",
    "sweep",
    "cost_basis",
    "damping",
}


def load_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    with open(path, "rb") as fh:
        try:
            raw = _toml.load(fh)
        except _toml.TOMLDecodeError as exc:
            raise ValidationError(f"{path}: TOML parse error: {exc}") from exc

    _check_keys(raw, _TOP_KEYS, "")
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        raise ValidationError(
            f"config must set scenario to one of {sorted(SCENARIOS)}; "
            f"required blocks per kind: "
            + "; ".join(f"{k}: {', '.join(v)}" for k, v in sorted(SCENARIOS.items()))
        )
    required = SCENARIOS[scenario]
    missing = [blk for blk in required if blk not in raw]
    if missing:
        raise ValidationError(
            f"scenario '{scenario}' requires block(s): {', '.join(missing)}"
        )

    env = _parse_env(raw["env"]) if "env" in raw else None
    players = _parse_players(raw["players"]) if "players" in raw else ()
    network = None
    if "pools" in raw:
        if env is None:
            raise ValidationError("'pools' needs an 'env' block")
        network = Network(env=env, pools=_parse_pools(raw["pools"]))
    pool_id = _get(raw, "pool", "config", str)
    if pool_id is not None:
        if network is None:
            raise ValidationError("'pool' selector needs a 'pools' block")
        if pool_id not in {p.id for p in network.pools}:
            raise ValidationError(f"'pool' selector {pool_id!r} matches no pool id")

    cost_basis = _get(raw, "cost_basis", "config", str, default="assigned")
    if cost_basis not in ("assigned", "protocol"):
        raise ValidationError("'cost_basis' must be 'assigned' or 'protocol'")
    damping = _get(raw, "damping", "config", float, default=0.0)
    if not 0 <= damping < 1:
        raise ValidationError("'damping' must lie in [0, 1)")

    cfg = RunConfig(
        scenario=scenario,
        seed=_get(raw, "seed", "config", int, default=0),
        env=env,
        players=players,
        network=network,
        pool_id=pool_id,
        dilemma=_parse_dilemma(raw["dilemma"]) if "dilemma" in raw else None,
        sim=_parse_sim(raw["sim"]) if "sim" in raw else None,
        chain=_parse_chain(raw["chain"]) if "chain" in raw else None,
        sweep=_parse_sweep(raw["sweep"]) if "sweep" in raw else None,
        cost_basis=cost_basis,
        damping=damping,
    )
    if cfg.sim is not None and cfg.dilemma is not None and cfg.sim.groups:
        total = sum(g.count for g in cfg.sim.groups)
        if total != cfg.dilemma.n:
            raise ValidationError(
                f"sim.groups counts sum to {total}, dilemma.n is {cfg.dilemma.n}"
            )
    return cfg
