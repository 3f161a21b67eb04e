import csv
import io
import json
import re
import subprocess
import sys

import pytest

from conftest import DATA
from routexplain.cli import EXIT_OK, EXIT_PARSE, EXIT_PRECONDITION, main
from routexplain.graph import load_graph

GRAPH = str(DATA / "parallel.tsv")
UPPER = str(DATA / "parallel_upper.tsv")
ROUTE = str(DATA / "parallel_route.txt")


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_explain_parallel_fixture(capsys, tmp_path):
    geo = tmp_path / "map.geojson"
    code, out, _ = run(
        capsys, "explain", "--graph", GRAPH, "--upper", UPPER, "--path", ROUTE, "--tau", "one",
        "--geojson", geo,
    )
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["explanation"]["support"] == ["f"]
    assert doc["explanation"]["valuation"] == 2
    assert doc["explanation"]["weights"] == {"f": 51}
    assert doc["verified"] is True and doc["route"] == ["e"]
    assert doc["config"]["tau"] == "one"
    features = json.loads(geo.read_text())["features"]
    assert [f["properties"]["role"] for f in features] == ["path", "explanation"]


def test_explain_with_pbe_and_output_file(capsys, tmp_path):
    out_file = tmp_path / "expl.json"
    code, out, _ = run(
        capsys, "explain", "--graph", GRAPH, "--upper", UPPER, "--path", ROUTE, "--tau", "one",
        "--method", "pbe", "-o", out_file,
    )
    assert code == EXIT_OK and out == ""
    doc = json.loads(out_file.read_text())
    assert doc["explanation"]["support"] == ["e1", "f"]
    assert "report" not in doc


def test_explain_route_from_endpoints_and_trace(capsys, tmp_path):
    trace = tmp_path / "trace.tsv"
    code, out, _ = run(
        capsys, "explain", "--graph", GRAPH, "--upper", UPPER, "--source", "s", "--target", "t",
        "--tau", "one", "--trace", trace,
    )
    assert code == EXIT_OK
    assert json.loads(out)["route"] == ["e"]
    assert "# iteration 0" in trace.read_text()


def test_bad_weight_file_exits_with_parse_error(capsys, tmp_path):
    bad = tmp_path / "upper.tsv"
    bad.write_text("e\t100\ne1\tslow\n")
    code, _, err = run(capsys, "explain", "--graph", GRAPH, "--upper", bad, "--path", ROUTE)
    assert code == EXIT_PARSE
    assert "line 2" in err


def test_bad_graph_file_exits_with_parse_error(capsys, tmp_path):
    bad = tmp_path / "g.tsv"
    bad.write_text("#nodes\na\t0\n")
    code, _, _ = run(capsys, "explain", "--graph", bad, "--upper", UPPER, "--path", ROUTE)
    assert code == EXIT_PARSE


def test_missing_inputs_exit_with_usage_error(capsys):
    code, _, err = run(capsys, "explain", "--graph", GRAPH, "--path", ROUTE)
    assert code == EXIT_PARSE and "--upper" in err


def test_route_that_is_not_traffic_shortest_exits_3(capsys, tmp_path):
    route = tmp_path / "route.txt"
    route.write_text("e1 f\n")
    code, _, err = run(capsys, "explain", "--graph", GRAPH, "--upper", UPPER, "--path", route)
    assert code == EXIT_PRECONDITION
    assert "precondition" in err


@pytest.fixture(scope="module")
def grid_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("grid") / "grid.tsv"
    code = main([
        "gen-grid", "--width", "40", "--height", "40", "--arterial-rows", "5,15,25,35",
        "--arterial-cols", "5,15,25,35", "--seed", "0", "-o", str(path),
    ])
    assert code == EXIT_OK
    return path


def _scenarios(capsys, grid_file, out_dir, *extra):
    code, out, _ = run(
        capsys, "scenario", "--graph", grid_file, "--n", 4, "--min-dist-m", 2000,
        "--max-dist-m", 3500, "--out-dir", out_dir, *extra,
    )
    assert code == EXIT_OK
    return out


def test_scenarios_are_byte_identical_per_seed(capsys, grid_file, tmp_path):
    _scenarios(capsys, grid_file, tmp_path / "a", "--seed", 3, "--k", 2)
    _scenarios(capsys, grid_file, tmp_path / "b", "--seed", 3, "--k", 2)
    _scenarios(capsys, grid_file, tmp_path / "c", "--seed", 4, "--k", 2)
    a = sorted((tmp_path / "a").iterdir())
    assert [p.name for p in a] == [f"closure-3-{i:04d}.json" for i in range(4)]
    for p in a:
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
    first_c = (tmp_path / "c" / "closure-4-0000.json").read_text()
    assert json.loads(first_c)["paths"] != json.loads(a[0].read_text())["paths"]


def test_closure_with_nine_closures_has_ten_paths(capsys, grid_file, tmp_path):
    out = _scenarios(capsys, grid_file, tmp_path, "--seed", 1, "--k", 9)
    assert re.match(r"\d/4 valid", out)
    docs = [json.loads(p.read_text()) for p in sorted(tmp_path.iterdir())]
    valid = [d for d in docs if d["valid"]]
    assert valid
    for d in valid:
        assert len(d["paths"]) == 10
        assert len(d["closed_sets"]) == 10
        assert d["config"]["k"] == 9 and d["seed"] == 1


def test_incident_scenarios_record_penalized_arcs(capsys, grid_file, tmp_path):
    _scenarios(capsys, grid_file, tmp_path, "--kind", "incident", "--k", 3, "--gamma", "6/5")
    for p in tmp_path.iterdir():
        d = json.loads(p.read_text())
        assert d["kind"] == "incident" and len(d["paths"]) == 4
        assert set(d["penalized"]) == {a for q in d["paths"][:3] for a in q}
        assert d["params"]["gamma"] == [6, 5]


def test_bad_gamma_is_a_usage_error(capsys, grid_file, tmp_path):
    code, _, _ = run(
        capsys, "scenario", "--graph", grid_file, "--kind", "incident", "--gamma", "fast",
        "--out-dir", tmp_path,
    )
    assert code == EXIT_PARSE


def test_unattainable_sampling_exits_3(capsys, grid_file, tmp_path):
    code, _, _ = run(
        capsys, "scenario", "--graph", grid_file, "--min-dist-m", 10**6, "--max-dist-m", 10**7,
        "--out-dir", tmp_path,
    )
    assert code == EXIT_PRECONDITION


def test_eval_writes_csv_and_summary(capsys, grid_file, tmp_path):
    _scenarios(capsys, grid_file, tmp_path / "sc", "--seed", 2, "--k", 2)
    _scenarios(capsys, grid_file, tmp_path / "sc", "--seed", 2, "--k", 2, "--kind", "incident")
    code, out, _ = run(
        capsys, "eval", "--graph", grid_file, "--scenarios", tmp_path / "sc",
        "--out-dir", tmp_path / "ev", "--workers", 1,
    )
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "ev" / "summary.json").read_text())
    assert set(summary["closure"]) == {"sve", "pbe"} and set(summary["incident"]) == {"sve", "pbe"}
    assert summary["closure"]["sve"]["failures"] == []
    assert summary["config"]["workers"] == 1
    with open(tmp_path / "ev" / "results.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 16
    assert {r["method"] for r in rows} == {"sve", "pbe"}
    assert "closure sve: contained" in out


def test_eval_rejects_unknown_method(capsys, grid_file, tmp_path):
    code, _, _ = run(
        capsys, "eval", "--graph", grid_file, "--scenarios", tmp_path, "--methods", "sve,mip",
        "--out-dir", tmp_path / "ev",
    )
    assert code == EXIT_PARSE


def test_explain_from_scenario_file(capsys, grid_file, tmp_path):
    _scenarios(capsys, grid_file, tmp_path / "sc", "--seed", 5, "--k", 1)
    files = sorted((tmp_path / "sc").iterdir())
    doc = json.loads(files[0].read_text())
    code, out, _ = run(
        capsys, "explain", "--graph", grid_file, "--scenario", files[0],
        "--geojson", tmp_path / "m.geojson",
    )
    assert code == EXIT_OK
    result = json.loads(out)
    assert result["route"] == doc["paths"][-1]
    assert result["verified"] is True
    roles = {f["properties"]["role"] for f in json.loads((tmp_path / "m.geojson").read_text())["features"]}
    assert "path" in roles and "context" in roles


def _valuation(capsys, *extra):
    code, out, _ = run(capsys, *extra, "explain", "--graph", GRAPH, "--upper", UPPER, "--path", ROUTE)
    assert code == EXIT_OK
    return json.loads(out)


def test_config_precedence(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("ROUTEXPLAIN_CONFIG", raising=False)
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('tau = "one"\nc0 = 3\n\n[explain]\ntau = "inverse-gap"\n')
    # subcommand table beats top level; top level beats defaults
    doc = _valuation(capsys, "--config", cfg)
    assert doc["config"]["tau"] == "inverse-gap" and doc["config"]["c0"] == 3
    assert doc["explanation"]["valuation"] == 1000
    assert doc["config"]["config_file"] == str(cfg)
    # flags beat both
    code, out, _ = run(
        capsys, "--config", cfg, "explain", "--graph", GRAPH, "--upper", UPPER, "--path", ROUTE,
        "--tau", "one",
    )
    assert json.loads(out)["explanation"]["valuation"] == 2
    # no config at all: built-in defaults
    assert _valuation(capsys)["config"]["tau"] == "scale-invariant"


def test_config_from_environment(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "env.toml"
    cfg.write_text('[explain]\nmethod = "pbe"\n')
    monkeypatch.setenv("ROUTEXPLAIN_CONFIG", str(cfg))
    doc = _valuation(capsys)
    assert doc["method"] == "pbe"


def test_malformed_config_exits_2(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("ROUTEXPLAIN_CONFIG", raising=False)
    cfg = tmp_path / "bad.toml"
    cfg.write_text("tau = \n")
    code, _, _ = run(capsys, "--config", cfg, "explain", "--graph", GRAPH, "--upper", UPPER, "--path", ROUTE)
    assert code == EXIT_PARSE


def test_gen_grid_to_stdout(capsys):
    code, out, _ = run(capsys, "gen-grid", "--width", 3, "--height", 2)
    assert code == EXIT_OK
    g = load_graph(io.StringIO(out))
    assert g.n_vertices == 6 and g.n_arcs == 14


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "routexplain.cli", "explain", "--graph", GRAPH, "--upper", UPPER,
         "--path", ROUTE, "--tau", "one"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["explanation"]["valuation"] == 2
