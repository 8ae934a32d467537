"""Command-line entry point: one config file in, CSVs and figures out.

Usage: coopmine --config run.toml --out results/ [--seed N] [--threads N]

The config's scenario key picks the pipeline; outputs follow fixed CSV
schemas with 12-significant-digit floats so identical runs are
byte-identical.  Exit status: 0 success, 1 validation problem, 2 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import report
from .config import RunConfig, load_config
from .dilemma import fair_strategy, max_phi
from .equilibrium import EquilibriumSolution
from .model import GameEnv, PlayerSpec, SolveError, ValidationError
from .pool import (
    annual_energy_twh,
    network_equilibrium,
    pool_fixed_point,
    protocol_game,
    reward_shares,
    sdp_table,
)
from .simulate import SimConfig, batch
from .stochastic import MinerClass, build_chain, stationary_distribution

__all__ = ["main"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _run_pool_solve(cfg: RunConfig, out: Path, threads: int):
    sol = network_equilibrium(cfg.players, cfg.env)
    ids = sorted(sol.investments)
    rows = [
        (
            pid,
            sol.investments[pid],
            sol.win_prob[pid],
            sol.expected_utility[pid],
            sol.expected_cost[pid],
            sol.expected_reward[pid],
        )
        for pid in ids
    ]
    files = [_write_csv(out / "equilibrium.csv",
                        ["player_id", "x_star", "win_prob", "utility", "cost", "reward"],
                        rows)]
    fig = out / "equilibrium.png"
    report.equilibrium_figure(
        ids, [sol.investments[i] for i in ids], [sol.expected_utility[i] for i in ids], fig
    )
    files.append(fig)
    first = cfg.players[0].id
    total = sum(sol.investments.values()) + cfg.env.l
    lines = [
        f"x* = {sol.investments[first]:.1f} kWh/min, "
        f"utility = ${sol.expected_utility[first]:.2f}/block",
        f"psi = {sol.psi:.6g}, network power = {total:.6g} kWh/min, "
        f"annual energy = {annual_energy_twh(sol, cfg.env):.1f} TWh",
    ]
    return lines, files


def _select_pool(cfg: RunConfig):
    pools = cfg.network.pools
    if cfg.pool_id is None:
        return pools[0]
    return next(p for p in pools if p.id == cfg.pool_id)


def _pool_pipeline(cfg: RunConfig):
    env = cfg.network.env
    sol, assignments = pool_fixed_point(
        cfg.network.pools, env, damping=cfg.damping
    )
    pool = _select_pool(cfg)
    asg = assignments[pool.id]
    r_p = sol.expected_utility[pool.id]
    e_r = r_p + asg.c_p * asg.x_p / env.beta
    proto = protocol_game(pool, asg, e_r, env)
    return pool, asg, r_p, e_r, proto


def _state_labels(chain) -> list:
    if chain.states.shape[1] == 1:
        return [int(s) for s in chain.states[:, 0]]
    return ["|".join(str(int(v)) for v in row) for row in chain.states]


def _run_protocol(cfg: RunConfig, out: Path, threads: int):
    pool, asg, r_p, e_r, proto = _pool_pipeline(cfg)
    role = {}
    for mid in proto.utility:
        if mid in proto.member_class:
            role[mid] = f"strategic-class{proto.member_class[mid]}"
        elif mid in proto.l_members:
            role[mid] = "l"
    rows = [
        (mid, role.get(mid, "excluded"), proto.utility[mid], proto.cost[mid],
         proto.roi[mid], proto.mean_investment[mid])
        for mid in sorted(proto.utility)
    ]
    files = [_write_csv(out / "protocol.csv",
                        ["miner_id", "role", "utility", "cost", "roi", "mean_investment"],
                        rows)]
    labels = _state_labels(proto.chain)
    files.append(_write_csv(out / "stationary.csv", ["state", "probability"],
                            list(zip(labels, proto.stationary))))
    fig = out / "protocol.png"
    if proto.chain.states.shape[1] == 1:
        report.protocol_figure(labels, proto.investments, proto.stationary, fig)
        files.append(fig)
    top = proto.chain.n_states - 1
    lines = [
        f"pool {pool.id}: E[r]_p = {e_r:.2f} (R_p = {r_p:.4f}, "
        f"c_p x_p / beta = {asg.c_p * asg.x_p / cfg.network.env.beta:.2f})",
        f"strategic miners: {len(proto.member_class)}, l pool: "
        f"{len(proto.l_members)} miners for l = {proto.l:g} kWh/min, "
        f"excluded: {len(proto.excluded)}",
        f"top-state per-miner investment: "
        + ", ".join(f"{x:.2f}" for x in proto.investments[top]),
    ]
    return lines, files


def _run_shares(cfg: RunConfig, out: Path, threads: int):
    pool, asg, r_p, e_r, proto = _pool_pipeline(cfg)
    shares = reward_shares(pool, asg, proto, r_p, cost_basis=cfg.cost_basis)
    ids = sorted(shares.alpha)
    rows = [
        (mid, asg.investments.get(mid, 0.0), shares.i_cost[mid],
         shares.i_roi[mid], shares.alpha[mid])
        for mid in ids
    ]
    files = [_write_csv(out / "shares.csv",
                        ["miner_id", "assigned_work", "I_cost", "I_roi", "alpha"],
                        rows)]
    fig = out / "shares.png"
    report.shares_figure(ids, [shares.alpha[i] for i in ids], fig)
    files.append(fig)
    alphas = np.array([shares.alpha[i] for i in ids])
    lines = [
        f"pool {pool.id}: E[r]_p = {shares.expected_reward:.2f}, "
        f"reference member = {shares.reference}",
        f"sum(alpha) = {alphas.sum():.12f} over {len(ids)} miners, "
        f"alpha range [{alphas.min():.3e}, {alphas.max():.3e}]",
    ]
    return lines, files


def _run_scenario_table(cfg: RunConfig, out: Path, threads: int):
    rows = sdp_table(cfg.network, damping=cfg.damping, cost_basis=cfg.cost_basis)
    csv_rows = [
        (r.label, r.count, r.capacity, r.assigned,
         "strategic" if r.strategic else "nonstrategic",
         r.a_coop, r.a_after, r.b_unilateral, r.b_second, r.b_mutual,
         r.sdp1_a, r.sdp1_b, r.sdp2, r.sdp3)
        for r in rows
    ]
    files = [_write_csv(out / "scenario_table.csv",
                        ["profile", "miners", "capacity", "assigned_work", "type",
                         "a_coop", "a_after_desertion", "b_unilateral",
                         "b_second_deserter", "b_mutual",
                         "sdp1_a", "sdp1_b", "sdp2", "sdp3"],
                        csv_rows)]
    fig = out / "scenario_table.png"
    report.table_figure(
        [r.label for r in rows],
        {
            "SDP1 a": [r.sdp1_a for r in rows],
            "SDP1 b": [r.sdp1_b for r in rows],
            "SDP2": [r.sdp2 for r in rows],
            "SDP3": [r.sdp3 for r in rows],
        },
        fig,
    )
    files.append(fig)
    lines = []
    ok = True
    for r in rows:
        lines.append(
            f"{r.label}: SDP1a = {r.sdp1_a:.9f}, SDP1b = {r.sdp1_b:.9f}, "
            f"SDP2 = {r.sdp2:.7g}, SDP3 = {r.sdp3:.2f}"
        )
        ok = ok and min(r.sdp1_a, r.sdp1_b, r.sdp2, r.sdp3) > 1
    lines.append(f"all social-dilemma ratios > 1: {'yes' if ok else 'NO'}")
    return lines, files


def _run_dilemma_sim(cfg: RunConfig, out: Path, threads: int):
    payoffs = cfg.dilemma
    _, phi_top = max_phi(payoffs)
    spec = cfg.sim
    if spec.groups:
        groups = []
        for g in spec.groups:
            phi = g.phi if g.phi is not None else g.phi_factor * phi_top
            groups.append((fair_strategy(payoffs, phi), g.count))
    else:
        groups = [(fair_strategy(payoffs, phi_top), payoffs.n)]
    sim = SimConfig(
        payoffs=payoffs,
        groups=tuple(groups),
        iterations=spec.iterations,
        initial_cooperation=spec.initial_cooperation,
        master_seed=cfg.seed,
        runs=spec.runs,
        error_rate=spec.error_rate,
    )
    result = batch(sim, threads=threads)
    rows = [
        (t.run, it, t.degrees[it])
        for t in result.trajectories
        for it in range(len(t.degrees))
    ]
    files = [_write_csv(out / "trajectories.csv",
                        ["run", "iteration", "cooperation_degree"], rows)]
    fig = out / "trajectories.png"
    report.trajectories_figure(result.trajectories, result.mean_trajectory, fig)
    files.append(fig)
    finals = result.final_degrees
    lines = [
        f"phi_max = {phi_top:.10g}; groups: "
        + ", ".join(f"{count} agents at phi = {s.phi:.6g}" for s, count in groups),
        f"{sim.runs} runs x {sim.iterations} iterations, IC = "
        f"{sim.initial_cooperation:.4f}, seed = {cfg.seed}",
        f"final cooperation: min = {finals.min():.4f}, mean = {finals.mean():.4f}, "
        f"max = {finals.max():.4f}; runs >= 95%: {(finals >= 0.95).mean():.0%}",
    ]
    return lines, files


def _run_stationary(cfg: RunConfig, out: Path, threads: int):
    spec = cfg.chain
    env = cfg.env or GameEnv(r=0.0, tau=1.0, beta=0.1, theta=0.0, l=0.0)
    cls = MinerClass(
        profile=PlayerSpec(id="miner", c=1.0, lam=spec.lam, mu=spec.mu),
        registered=spec.registered,
        connected=spec.connected,
    )
    chain = build_chain([cls], env)
    pi = stationary_distribution(chain)
    labels = _state_labels(chain)
    files = [_write_csv(out / "stationary.csv", ["state", "probability"],
                        list(zip(labels, pi)))]
    fig = out / "stationary.png"
    report.stationary_figure(labels, pi, spec.band, fig)
    files.append(fig)
    lines = [f"chain: {spec.registered} registered, lambda = {spec.lam:g}, "
             f"mu = {spec.mu:g}; {chain.n_states} states"]
    if spec.band is not None:
        lo, hi = spec.band
        counts = chain.states[:, 0]
        mass = float(pi[(counts >= lo) & (counts <= hi)].sum())
        lines.append(f"stationary mass in [{lo}, {hi}] = {mass:.6f}")
    return lines, files


_SWEEP_ENV_FIELDS = {"r", "tau", "beta", "theta", "l", "k_l"}
_SWEEP_PLAYER_FIELDS = {"c", "k", "t", "z", "capacity"}


def _sweep_instance(env: GameEnv, players, parameter: str, value: float):
    parts = parameter.split(".")
    if parts[0] == "env" and len(parts) == 2 and parts[1] in _SWEEP_ENV_FIELDS:
        return replace(env, **{parts[1]: value}), players
    if parts[0] == "players" and len(parts) == 3 and parts[2] in _SWEEP_PLAYER_FIELDS:
        sel, fld = parts[1], parts[2]
        if sel != "*" and all(p.id != sel for p in players):
            raise ValidationError(f"sweep parameter {parameter!r}: no player {sel!r}")
        return env, tuple(
            replace(p, **{fld: value}) if sel in ("*", p.id) else p for p in players
        )
    raise ValidationError(f"cannot resolve sweep parameter path {parameter!r}")


def _run_sweep(cfg: RunConfig, out: Path, threads: int):
    rows, lines = [], []
    values, energies, psis = [], [], []
    for value in cfg.sweep.values:
        try:
            env, players = _sweep_instance(cfg.env, cfg.players, cfg.sweep.parameter, value)
            sol = network_equilibrium(players, env)
            xs = list(sol.investments.values())
            power = sum(xs) + env.l
            energy = annual_energy_twh(sol, env)
            rows.append((value, "ok", sol.psi, power, energy,
                         min(xs), max(xs), sum(sol.expected_utility.values())))
            values.append(value)
            energies.append(energy)
            psis.append(sol.psi)
            lines.append(
                f"{cfg.sweep.parameter} = {value:g}: network power = {power:.6g} "
                f"kWh/min, annual energy = {energy:.1f} TWh"
            )
        except (ValidationError, SolveError) as exc:
            nan = float("nan")
            rows.append((value, f"error: {exc}", nan, nan, nan, nan, nan, nan))
            lines.append(f"{cfg.sweep.parameter} = {value:g}: FAILED ({exc})")
    files = [_write_csv(out / "sweep.csv",
                        ["param_value", "status", "psi", "network_power",
                         "annual_energy_twh", "x_star_min", "x_star_max",
                         "total_utility"],
                        rows)]
    if values:
        fig = out / "sweep.png"
        report.sweep_figure(values,
                            {"annual energy (TWh)": energies, "psi": psis},
                            cfg.sweep.parameter, fig)
        files.append(fig)
    return lines, files


_DISPATCH = {
    "pool-solve": _run_pool_solve,
    "protocol": _run_protocol,
    "shares": _run_shares,
    "scenario-table": _run_scenario_table,
    "dilemma-sim": _run_dilemma_sim,
    "stationary": _run_stationary,
    "sweep": _run_sweep,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="coopmine",
        description="Solve and simulate the cooperative optimal-mining game.",
    )
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--out", default=".", help="output directory (created)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config's master seed")
    parser.add_argument("--threads", type=int, default=0,
                        help="worker threads for batched runs (0 = auto)")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines, files = _DISPATCH[cfg.scenario](cfg, out, args.threads)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except SolveError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2

    print(f"scenario: {cfg.scenario}")
    for line in lines:
        print(f"  {line}")
    for f in files:
        print(f"wrote {f}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
