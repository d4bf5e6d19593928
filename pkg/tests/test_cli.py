from __future__ import annotations

import csv

import numpy as np
import pytest

from conftest import FIXTURES, golden_rows
from incgnn.cli import main
from incgnn.model import load_model, load_snapshot


def run(*argv):
    return main(["--quiet", *map(str, argv)])


def read_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# schema:")
    return list(csv.DictReader(lines[1:]))


def strip_timing(rows):
    return [{k: v for k, v in r.items() if not k.endswith("_ms")} for r in rows]


@pytest.fixture
def workspace(tmp_path):
    e, f, m, t = (tmp_path / x for x in ("g.edges", "g.feat", "m.bin", "t.trace"))
    assert run("--seed", 1, "gen-graph", "--n", 120, "--degree", 4, "--d0", 6,
               "--out-edges", e, "--out-features", f) == 0
    assert run("--seed", 2, "init-model", "--dims", "6,8,5", "--aggregator", "sum", "--out", m) == 0
    assert run("--seed", 3, "gen-trace", "--graph", e, "--features", f, "--n-events", 100, "--out", t) == 0
    return tmp_path, ["--graph", e, "--features", f, "--model", m], t


def test_bootstrap_fixture_matches_golden(tmp_path):
    out = tmp_path / "snap"
    args = ["bootstrap", "--graph", FIXTURES / "five.edges", "--features", FIXTURES / "five.feat",
            "--model", FIXTURES / "five_sum.json", "--out", out]
    assert run(*args) == 0
    store, ids = load_snapshot(out, load_model(FIXTURES / "five_sum.json"))
    for v, row in golden_rows().items():
        np.testing.assert_array_equal(store.H[2][v], row)
    first = out.read_bytes()
    assert run(*args) == 0
    assert out.read_bytes() == first


def test_missing_file_exits_2(tmp_path, capsys):
    code = run("bootstrap", "--graph", FIXTURES / "five.edges", "--features", tmp_path / "nope",
               "--model", FIXTURES / "five_sum.json", "--out", tmp_path / "s")
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_replay_rows_and_engine_agreement(workspace):
    tmp, inputs, trace = workspace
    for eng in ("rp", "rc"):
        assert run("replay", *inputs, "--trace", trace, "--engine", eng, "--bs", 10,
                   "--metrics-out", tmp / f"{eng}.csv") == 0
    rp, rc = read_rows(tmp / "rp.csv"), read_rows(tmp / "rc.csv")
    assert len(rp) == 10
    assert [r["changed_final"] for r in rp] == [r["changed_final"] for r in rc]


def test_replay_dist1_equals_single_and_is_deterministic(workspace):
    tmp, inputs, trace = workspace
    assert run("replay", *inputs, "--trace", trace, "--metrics-out", tmp / "a.csv") == 0
    assert run("replay", *inputs, "--trace", trace, "--metrics-out", tmp / "b.csv") == 0
    assert run("replay", *inputs, "--trace", trace, "--mode", "dist:1", "--metrics-out", tmp / "c.csv",
               "--dist-metrics", tmp / "d.csv") == 0
    a, b, c = (strip_timing(read_rows(tmp / x)) for x in ("a.csv", "b.csv", "c.csv"))
    assert a == b == c
    assert len(read_rows(tmp / "d.csv")) == 10


def test_replay_from_snapshot(workspace):
    tmp, inputs, trace = workspace
    assert run("bootstrap", *inputs, "--out", tmp / "s") == 0
    assert run("replay", *inputs, "--snapshot", tmp / "s", "--trace", trace, "--metrics-out", tmp / "a.csv") == 0
    assert run("replay", *inputs, "--trace", trace, "--metrics-out", tmp / "b.csv") == 0
    assert strip_timing(read_rows(tmp / "a.csv")) == strip_timing(read_rows(tmp / "b.csv"))


def test_bad_mode_exits_2(workspace):
    _, inputs, trace = workspace
    assert run("replay", *inputs, "--trace", trace, "--mode", "dist:x") == 2


def test_verify_passes_and_reports(workspace, capsys):
    tmp, inputs, trace = workspace
    assert main(["--precision", "f64", "verify", *map(str, inputs), "--trace", str(trace),
                 "--every-batch", "--report", str(tmp / "v.csv")]) == 0
    out = capsys.readouterr().out
    assert "symmetric difference vs recompute: 0" in out and out.strip().endswith("ok")
    assert all(r["symdiff"] == "0" for r in read_rows(tmp / "v.csv"))


def test_verify_empty_trace(workspace, capsys):
    tmp, inputs, _ = workspace
    (tmp / "empty").write_text("# nothing\n")
    assert main(["verify", *map(str, inputs), "--trace", str(tmp / "empty")]) == 0
    assert "max abs deviation 0.000000e+00" in capsys.readouterr().out


def test_verify_detects_corrupted_snapshot(workspace):
    tmp, inputs, trace = workspace
    assert run("bootstrap", *inputs, "--out", tmp / "s") == 0
    data = bytearray((tmp / "s").read_bytes())
    # flip a byte near the end, inside the stored final-layer rows
    data[-7] ^= 0x40
    (tmp / "s").write_bytes(bytes(data))
    assert run("verify", *inputs, "--snapshot", tmp / "s", "--trace", trace) == 1


def test_route_stats(workspace):
    tmp, inputs, trace = workspace
    g = inputs[:4]
    assert run("route-stats", *g, "--trace", trace, "--k", 1, "--out", tmp / "k1.csv") == 0
    assert all(r["edge_cuts"] == "0" for r in read_rows(tmp / "k1.csv"))
    assert run("route-stats", *g, "--trace", trace, "--k", 3, "--out", tmp / "k3.csv") == 0
    rows = read_rows(tmp / "k3.csv")
    assert {r["mode"] for r in rows} == {"hash", "locality"}
    assert len(rows) == 20
    for r in rows:
        assert sum(map(int, r["loads"].split(";"))) == int(r["vertices"])


def test_snapshot80_and_holdout_trace(workspace):
    tmp, inputs, _ = workspace
    g = inputs[:4]
    assert run("--seed", 4, "snapshot80", *g, "--out", tmp / "s80") == 0
    assert run("gen-trace", "--graph", tmp / "s80.edges", "--features", tmp / "s80.feat",
               "--holdout", tmp / "s80", "--n-events", 50, "--out", tmp / "h.trace") == 0
    assert run("replay", "--graph", tmp / "s80.edges", "--features", tmp / "s80.feat", "--model", inputs[5],
               "--trace", tmp / "h.trace") == 0


def test_cost_report(workspace, capsys):
    tmp, inputs, trace = workspace
    assert main(["cost-report", *map(str, inputs), "--trace", str(trace), "--compare",
                 "--out", str(tmp / "c.csv")]) == 0
    assert "measured rp ops > rc ops: 0" in capsys.readouterr().out
    assert len(read_rows(tmp / "c.csv")) == 2 * 10


def test_gen_trace_deterministic(workspace):
    tmp, inputs, _ = workspace
    g = inputs[:4]
    for name in ("x", "y"):
        assert run("--seed", 9, "gen-trace", *g, "--n-events", 40, "--out", tmp / name) == 0
    assert (tmp / "x").read_bytes() == (tmp / "y").read_bytes()


def test_init_model_json_and_planted_graph(tmp_path):
    assert run("init-model", "--dims", "4,4", "--aggregator", "attention", "--arch", "ga",
               "--out", tmp_path / "m.json") == 0
    assert load_model(tmp_path / "m.json").aggregator == "attention"
    assert run("gen-graph", "--kind", "planted", "--n", 40, "--d0", 2, "--communities", tmp_path / "c",
               "--out-edges", tmp_path / "e", "--out-features", tmp_path / "f") == 0
    assert len((tmp_path / "c").read_text().split()) == 40
    assert run("init-model", "--dims", "4", "--out", tmp_path / "bad") == 2
