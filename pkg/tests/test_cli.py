import json

import numpy as np
import pytest

from gridsplit import (
    GridFormingResource,
    Scenario,
    SwitchEdge,
    ZoneGraph,
    ZoneNode,
    save_scenario,
)
from gridsplit.cli import main


@pytest.fixture(scope="module")
def outdirs(tmp_path_factory):
    """One flexible and one fixed run of the bundled scenario, via the CLI."""
    root = tmp_path_factory.mktemp("cli")
    a, b = root / "flex", root / "fixed"
    assert main(["run", "--scenario", "builtin:two-feeder",
                 "--out", str(a)]) == 0
    assert main(["run", "--scenario", "builtin:two-feeder",
                 "--mode", "fixed", "--out", str(b)]) == 0
    return a, b


def long_chain_scenario(tmp_path, n_zones=23):
    """A radial feeder too large for the brute-force enumeration guard."""
    nodes = tuple(ZoneNode(i, 1, False, 100.0, i == 1)
                  for i in range(1, n_zones + 1))
    edges = tuple(SwitchEdge(i, i, i + 1, False, 1e6)
                  for i in range(1, n_zones))
    res = (GridFormingResource(1, 5000.0, 50000.0),)
    sc = Scenario(name="chain", graph=ZoneGraph(nodes, edges, res),
                  step_minutes=5,
                  load_kw={z: np.full(576, 50.0) for z in range(1, n_zones + 1)},
                  pv_kw={z: np.zeros(576) for z in range(1, n_zones + 1)})
    save_scenario(sc, tmp_path / "chain.json")
    return tmp_path / "chain.json"


class TestRun:
    def test_headline_and_files(self, outdirs, capsys):
        a, _ = outdirs
        assert (a / "summary.json").exists()
        assert (a / "trace.csv").exists()
        assert main(["run", "--scenario", "builtin:two-feeder",
                     "--out", str(a)]) == 0
        out = capsys.readouterr().out
        assert "served" in out and "topology changes" in out
        assert out.count("wrote ") == 4

    def test_emit_plots(self, tmp_path, capsys):
        out = tmp_path / "plots"
        assert main(["run", "--scenario", "builtin:two-feeder",
                     "--mode", "fixed", "--out", str(out),
                     "--emit-plots"]) == 0
        assert (out / "fig8_percent_served.csv").exists()
        assert capsys.readouterr().out.count("wrote ") == 8

    def test_seed_override_accepted(self, tmp_path):
        assert main(["run", "--scenario", "builtin:two-feeder",
                     "--mode", "fixed", "--out", str(tmp_path / "s"),
                     "--seed", "7"]) == 0

    def test_missing_scenario_file(self, tmp_path, capsys):
        assert main(["run", "--scenario", str(tmp_path / "absent.json"),
                     "--out", str(tmp_path / "o")]) == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_invalid_document(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"name": "x"}))
        assert main(["run", "--scenario", str(bad),
                     "--out", str(tmp_path / "o")]) == 2
        assert "/schema_version: missing" in capsys.readouterr().err

    def test_unknown_mode_rejected_by_argparse(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["run", "--scenario", "builtin:two-feeder",
                  "--mode", "greedy", "--out", str(tmp_path / "o")])


class TestCompare:
    def test_table(self, outdirs, capsys):
        a, b = outdirs
        assert main(["compare", "--a", str(b), "--b", str(a)]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[2] == "row,metric,a,b,delta"
        assert len(out) == 3 + 12
        assert out[3].startswith("zone_1,percent_served,")

    def test_mismatched_runs(self, outdirs, tmp_path, capsys):
        a, _ = outdirs
        doc = json.loads((a / "summary.json").read_text())
        doc["scenario"] = "other"
        other = tmp_path / "other"
        other.mkdir()
        (other / "summary.json").write_text(json.dumps(doc))
        assert main(["compare", "--a", str(a), "--b", str(other)]) == 2
        assert "error:" in capsys.readouterr().err


class TestEnumerate:
    def test_quiet_step_topology(self, capsys):
        assert main(["enumerate", "--scenario", "builtin:two-feeder",
                     "--step", "0"]) == 0
        out = capsys.readouterr().out
        assert "closed 1;2;3;5;6;7;9;10" in out
        assert "microgrid 1: 1 2 3 4 10" in out
        assert "microgrid 7: 5 6 7 8 9" in out

    def test_faulted_step_topology(self, capsys):
        assert main(["enumerate", "--scenario", "builtin:two-feeder",
                     "--step", "4"]) == 0
        out = capsys.readouterr().out
        assert "faulted=9;11" in out
        assert "closed 1;2;3;4;5;6;7;10" in out

    def test_dump_lp(self, tmp_path, capsys):
        lp = tmp_path / "step0.lp"
        assert main(["enumerate", "--scenario", "builtin:two-feeder",
                     "--step", "0", "--dump-lp", str(lp)]) == 0
        text = lp.read_text()
        assert "Minimize" in text and "Generals" in text
        assert " y_9 " in text or "y_9\n" in text   # tie switch is a column

    def test_step_out_of_range(self, capsys):
        assert main(["enumerate", "--scenario", "builtin:two-feeder",
                     "--step", "99"]) == 2
        assert "outside" in capsys.readouterr().err

    def test_guard_exit_code(self, tmp_path, capsys):
        path = long_chain_scenario(tmp_path)
        assert main(["enumerate", "--scenario", str(path),
                     "--step", "0"]) == 3
        assert "error:" in capsys.readouterr().err


class TestValidate:
    def test_ok(self, capsys):
        assert main(["validate", "--scenario", "builtin:two-feeder"]) == 0
        out = capsys.readouterr().out
        assert "ok" in out and "10 zones" in out and "11 switches" in out

    def test_unknown_builtin(self, capsys):
        assert main(["validate", "--scenario", "builtin:mesh"]) == 2
        assert "unknown builtin" in capsys.readouterr().err

    def test_log_level_env(self, monkeypatch):
        monkeypatch.setenv("GRIDSPLIT_LOG", "DEBUG")
        assert main(["validate", "--scenario", "builtin:two-feeder"]) == 0
        monkeypatch.setenv("GRIDSPLIT_LOG", "NOISY")   # falls back to WARNING
        assert main(["validate", "--scenario", "builtin:two-feeder"]) == 0
