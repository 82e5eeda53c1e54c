import csv
import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uasmpc.cli import (
    CSV_COLUMNS,
    EXIT_BAD_INPUT,
    EXIT_INFEASIBLE,
    EXIT_NODE_LIMIT,
    EXIT_OK,
    HYBRID_ONLY,
    THREADS_ENV,
    ScenarioError,
    _apply_overrides,
    dump_scenario,
    load_scenario,
    main,
    parse_scenario,
    run_benchmark,
    run_partition,
    run_plan,
    shipped_scenario,
)
from uasmpc.miqp import MIQPConfig
from uasmpc.uasmodel import Wayset

TINY = """
name = "tiny"

[vehicle]
variant = "electric"
dt = 1.0
horizon = 3
v_min = 0.5
v_max = 1.5
omega_lim_deg = 45.0
P_min = 1.25
P_max = 33.75
Pb_min = 1.25
Pb_max = 33.75
Pb_rate = 20.0
C_b = 5000.0

[map]
boundary = [[0, 0], [10, 0], [10, 10], [0, 10]]
obstacles = [[[6, 6], [8, 6], [8, 8], [6, 8]]]

[start]
xi = 2.0
xidot = 1.0
eta = 2.0
etadot = 0.0
soc = 0.8
pb = 15.0

[goal]
xi = 5.0
eta = 3.0

[weights]
Q = [0, 0, 0, 0, 0, 0]
QN = [1, 0, 1, 0, 0, 0]
R = [1, 1, 1e-4]
q_lin = [0, 0, 0, 0, 0, 1e-3]
"""


def write(tmp_path, text, name="s.scenario"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_tiny_plan_outputs(tmp_path):
    out = tmp_path / "out"
    assert run_plan(write(tmp_path, TINY), out) == EXIT_OK
    for f in ("trajectory.csv", "solver_stats.txt", "plan.svg", "partition.txt"):
        assert (out / f).stat().st_size > 0
    rows = read_csv(out / "trajectory.csv")
    assert tuple(rows[0]) == tuple(c for c in CSV_COLUMNS if c not in HYBRID_ONLY)
    assert len(rows) == 1 + 4
    assert [int(r[0]) for r in rows[1:]] == [0, 1, 2, 3]
    assert (out / "plan.svg").read_text().lstrip().startswith("<svg")
    assert "status: optimal" in (out / "solver_stats.txt").read_text()


def test_hybrid_csv_has_every_column(tmp_path):
    sc = load_scenario(shipped_scenario("case1"))
    sc = dataclasses.replace(sc, horizon=3, terminal="X", wayset=None)
    out = tmp_path / "out"
    assert run_plan(write(tmp_path, dump_scenario(sc)), out) == EXIT_OK
    assert tuple(read_csv(out / "trajectory.csv")[0]) == CSV_COLUMNS


def test_goal_inside_obstacle_exits_2(tmp_path):
    text = TINY.replace('xi = 5.0\neta = 3.0', 'xi = 7.0\neta = 7.0') + (
        '\n[terminal]\nkind = "wayset"\nxi = [6.8, 7.2]\neta = [6.8, 7.2]\n'
    )
    out = tmp_path / "out"
    assert run_plan(write(tmp_path, text), out) == EXIT_INFEASIBLE
    assert "infeasible" in (out / "solver_stats.txt").read_text()


def test_node_limit_exits_3(tmp_path):
    sc = load_scenario(shipped_scenario("case1"))
    assert run_plan(shipped_scenario("case1"), tmp_path / "o", max_nodes=1) == EXIT_NODE_LIMIT
    assert sc.solver.max_nodes > 1


@pytest.mark.parametrize(
    "edit, field",
    [
        (lambda t: t.replace("dt = 1.0", 'dt = "fast"'), "vehicle.dt"),
        (lambda t: t.replace("horizon = 3", "horizon = 2.5"), "vehicle.horizon"),
        (lambda t: t.replace("C_b = 5000.0", ""), "vehicle.C_b"),
        (lambda t: t.replace("[weights]", "[weightz]"), "[weights]"),
        (lambda t: t.replace("pb = 15.0", "pb = 15.0\nfuel = 1"), "start"),
        (lambda t: t.replace("[[6, 6], [8, 6], [8, 8], [6, 8]]", "[[6, 6], [8, 6]]"), "map.obstacles[0]"),
        (lambda t: t.replace("R = [1, 1, 1e-4]", "R = [1, 1]"), "weights.R"),
        (lambda t: t.replace('name = "tiny"', 'name = "tiny'), "syntax error"),
        (lambda t: t.replace("[map]", "[map]\nnoise_regions = [[[1, 1], [2, 1], [2, 2]]]"), "map.noise_regions"),
    ],
)
def test_malformed_scenarios_name_the_field(tmp_path, capsys, edit, field):
    text = edit(TINY)
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert field in str(err.value)
    assert run_plan(write(tmp_path, text), tmp_path / "o") == EXIT_BAD_INPUT
    assert field in capsys.readouterr().err


def test_missing_file_exit_1(tmp_path, capsys):
    assert run_plan(tmp_path / "nope.scenario", tmp_path / "o") == EXIT_BAD_INPUT
    assert "cannot read" in capsys.readouterr().err


def test_invalid_polygon_partition_exit_1(tmp_path):
    bowtie = TINY.replace("boundary = [[0, 0], [10, 0], [10, 10], [0, 10]]", "boundary = [[0, 0], [10, 10], [10, 0], [0, 10]]")
    assert run_partition(write(tmp_path, bowtie), tmp_path / "o") == EXIT_BAD_INPUT


@pytest.mark.parametrize("name", ["case1", "case2a", "case2b"])
def test_partition_shipped(tmp_path, name):
    out = tmp_path / name
    assert run_partition(shipped_scenario(name), out) == EXIT_OK
    report = (out / "partition_report.txt").read_text()
    assert "ok: True" in report and "all_convex: True" in report


@pytest.mark.parametrize("name", ["case1", "case2a", "case2b"])
def test_shipped_round_trip(name):
    sc = load_scenario(shipped_scenario(name))
    again = parse_scenario(dump_scenario(sc))
    assert dump_scenario(again) == dump_scenario(sc)
    np.testing.assert_array_equal(again.start, sc.start)
    np.testing.assert_array_equal(again.map.boundary, sc.map.boundary)


@settings(max_examples=30, deadline=None)
@given(
    horizon=st.integers(1, 40),
    dt=st.floats(0.05, 5.0),
    q=st.lists(st.floats(0, 100), min_size=6, max_size=6),
    eps=st.floats(1e-4, 1.0),
    threads=st.integers(1, 16),
    soc=st.one_of(st.none(), st.tuples(st.floats(0.25, 0.6), st.floats(0.6, 1.0))),
    steps=st.integers(1, 20),
)
def test_round_trip_property(horizon, dt, q, eps, threads, soc, steps):
    sc = parse_scenario(TINY)
    sc = dataclasses.replace(
        sc,
        horizon=horizon,
        dt=dt,
        QN=np.diag(q),
        solver=MIQPConfig(eps_abs=eps, threads=threads),
        terminal="X" if soc is None else "wayset",
        wayset=None if soc is None else Wayset((4.0, 6.0), None, soc),
        mode="receding_horizon",
        steps=steps,
    )
    text = dump_scenario(sc)
    again = parse_scenario(text)
    assert dump_scenario(again) == text
    assert again.horizon == horizon and again.dt == dt and again.steps == steps
    np.testing.assert_array_equal(again.QN, sc.QN)
    assert again.solver.eps_abs == eps and again.solver.threads == threads


def test_receding_horizon_mode(tmp_path):
    text = TINY + '\n[mode]\nkind = "receding_horizon"\nsteps = 2\n'
    out = tmp_path / "o"
    assert run_plan(write(tmp_path, text), out) == EXIT_OK
    assert len(read_csv(out / "trajectory.csv")) == 1 + 3


def test_thread_override_precedence(monkeypatch):
    sc = parse_scenario(TINY.replace("[weights]", "[solver]\nthreads = 2\n\n[weights]"))
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert _apply_overrides(sc).threads == 2
    monkeypatch.setenv(THREADS_ENV, "4")
    assert _apply_overrides(sc).threads == 4
    assert _apply_overrides(sc, threads=8).threads == 8
    cfg = _apply_overrides(sc, eps_abs=0.5, eps_rel=0.2, max_nodes=7)
    assert (cfg.eps_abs, cfg.eps_rel, cfg.max_nodes) == (0.5, 0.2, 7)
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ScenarioError, match=THREADS_ENV):
        _apply_overrides(sc)


def test_benchmark(tmp_path, capsys):
    p = write(tmp_path, TINY)
    assert run_benchmark(p, 2) == EXIT_OK
    out = capsys.readouterr().out
    assert "wall_time_median_s" in out and "repeats: 2" in out and "nodes_median" in out
    assert run_benchmark(p, 0) == EXIT_BAD_INPUT


def test_benchmark_pure_qp_path(tmp_path, capsys):
    # one cell, so every binary is fixed and the root QP is the whole search
    text = TINY.replace("obstacles = [[[6, 6], [8, 6], [8, 8], [6, 8]]]", "")
    assert run_benchmark(write(tmp_path, text), 1) == EXIT_OK
    assert "nodes_median: 1" in capsys.readouterr().out


def test_main_dispatch(tmp_path, capsys):
    p = write(tmp_path, TINY)
    assert main(["plan", str(p), "--out", str(tmp_path / "a"), "--threads", "2", "--eps-abs", "0.2"]) == EXIT_OK
    assert main(["partition", str(p), "--out", str(tmp_path / "b")]) == EXIT_OK
    assert main(["benchmark", str(p), "--repeats", "1"]) == EXIT_OK
    with pytest.raises(SystemExit):
        main(["plan", str(p)])  # --out is required
