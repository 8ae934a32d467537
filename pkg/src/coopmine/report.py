"""Figure rendering: every scenario drops a PNG next to its CSV output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def equilibrium_figure(ids, investments, utilities, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    pos = np.arange(len(ids))
    ax1.bar(pos, investments, color="steelblue")
    ax1.set_ylabel("equilibrium power (kWh/min)")
    ax2.bar(pos, utilities, color="darkorange")
    ax2.set_ylabel("expected utility ($/block)")
    for ax in (ax1, ax2):
        ax.set_xticks(pos)
        ax.set_xticklabels(ids, rotation=90, fontsize=6)
    _save(fig, path)


def protocol_figure(states, investments, stationary, path):
    # states: 1-d attendance labels; investments: per-state per-class
    fig, ax1 = plt.subplots(figsize=(7, 4))
    for ci in range(investments.shape[1]):
        ax1.plot(states, investments[:, ci], label=f"class {ci}")
    ax1.set_xlabel("present strategic miners")
    ax1.set_ylabel("per-miner equilibrium power (kWh/min)")
    ax1.legend(loc="upper right", fontsize=7)
    ax2 = ax1.twinx()
    ax2.fill_between(states, stationary, color="grey", alpha=0.3)
    ax2.set_ylabel("stationary probability")
    _save(fig, path)


def shares_figure(miner_ids, alphas, path):
    fig, ax = plt.subplots(figsize=(7, 3.6))
    order = np.argsort(alphas)
    ax.plot(np.asarray(alphas)[order], ".", markersize=2)
    ax.set_xlabel(f"miners (sorted), n={len(miner_ids)}")
    ax.set_ylabel("reward fraction alpha")
    _save(fig, path)


def table_figure(labels, ratio_map, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    pos = np.arange(len(labels))
    width = 0.8 / len(ratio_map)
    for i, (name, vals) in enumerate(ratio_map.items()):
        ax.bar(pos + i * width, vals, width, label=name)
    ax.set_yscale("log")
    ax.axhline(1.0, color="k", linewidth=0.8)
    ax.set_xticks(pos + 0.4 - width / 2)
    ax.set_xticklabels(labels)
    ax.set_ylabel("utility ratio")
    ax.legend(fontsize=8)
    _save(fig, path)


def trajectories_figure(trajectories, mean_trajectory, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    for t in trajectories:
        ax.plot(t.degrees, color="steelblue", alpha=0.2, linewidth=0.6)
    ax.plot(mean_trajectory, color="crimson", linewidth=1.8, label="mean")
    ax.set_xlabel("iteration")
    ax.set_ylabel("degree of cooperation")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    _save(fig, path)


def stationary_figure(states, probabilities, band, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.fill_between(states, probabilities, color="steelblue", alpha=0.7)
    if band is not None:
        ax.axvspan(band[0], band[1], color="orange", alpha=0.2, label=f"band {band}")
        ax.legend()
    ax.set_xlabel("connected miners")
    ax.set_ylabel("stationary probability")
    _save(fig, path)


def sweep_figure(values, metric_map, parameter, path):
    fig, axes = plt.subplots(1, len(metric_map), figsize=(4 * len(metric_map), 3.6))
    if len(metric_map) == 1:
        axes = [axes]
    for ax, (name, vals) in zip(axes, metric_map.items()):
        ax.plot(values, vals, "o-")
        ax.set_xlabel(parameter)
        ax.set_ylabel(name)
    _save(fig, path)
