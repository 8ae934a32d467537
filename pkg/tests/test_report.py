"""Every figure helper renders a real PNG file."""

from types import SimpleNamespace

import numpy as np

from coopmine import report


def png_ok(path):
    data = path.read_bytes()
    return data[:8] == b"\x89PNG\r\n\x1a\n" and len(data) > 1000


def test_equilibrium_figure(tmp_path):
    f = tmp_path / "eq.png"
    report.equilibrium_figure(
        [f"p{i}" for i in range(5)], np.linspace(1, 5, 5), np.linspace(2, 3, 5), f
    )
    assert png_ok(f)


def test_protocol_figure(tmp_path):
    f = tmp_path / "proto.png"
    states = np.arange(11)
    inv = np.column_stack([np.linspace(5, 1, 11), np.linspace(4, 2, 11)])
    report.protocol_figure(states, inv, np.full(11, 1 / 11), f)
    assert png_ok(f)


def test_shares_figure(tmp_path):
    f = tmp_path / "shares.png"
    report.shares_figure([f"m{i}" for i in range(40)], np.random.default_rng(0).random(40), f)
    assert png_ok(f)


def test_table_figure(tmp_path):
    f = tmp_path / "table.png"
    report.table_figure(
        ["cap20", "cap2000"],
        {"sdp1_a": [1.1, 1.2], "sdp2": [1.0, 1.5], "sdp3": [600.0, 550.0]},
        f,
    )
    assert png_ok(f)


def test_trajectories_figure(tmp_path):
    f = tmp_path / "traj.png"
    trajs = [
        SimpleNamespace(degrees=np.linspace(1.0, v, 30)) for v in (0.2, 0.5, 0.9)
    ]
    report.trajectories_figure(trajs, np.linspace(1.0, 0.53, 30), f)
    assert png_ok(f)


def test_stationary_figure(tmp_path):
    f = tmp_path / "stat.png"
    probs = np.exp(-0.5 * (np.arange(101) - 50.0) ** 2 / 16.0)
    report.stationary_figure(np.arange(101), probs / probs.sum(), (40, 60), f)
    assert png_ok(f)
    f2 = tmp_path / "stat2.png"
    report.stationary_figure(np.arange(101), probs / probs.sum(), None, f2)
    assert png_ok(f2)


def test_sweep_figure(tmp_path):
    f = tmp_path / "sweep.png"
    report.sweep_figure(
        [6.25, 3.125, 1.5625],
        {"psi": [8.2e6, 4.0e6, 2.0e6], "energy": [4300.0, 2100.0, 1000.0]},
        "env.r",
        f,
    )
    assert png_ok(f)
