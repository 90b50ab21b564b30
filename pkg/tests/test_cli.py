import csv

from megabike import cli
from megabike.rules import radius_rule
from megabike.ruleset_io import dumps, save_rules


def test_run_writes_records(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("max_iterations: 1\nmax_rounds: 3\nagent_count: 8\n")
    out = tmp_path / "run.csv"
    assert cli.main(["run", "--config", str(cfg), "--seed", "2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 3 and rows[0]["bikeId"] == "0"
    assert '"avgSurvivalRounds"' in capsys.readouterr().out


def test_run_invalid_config(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("agent_count: 0\n")
    assert cli.main(["run", "--config", str(cfg)]) == 2


def test_bench_command(tmp_path, capsys):
    out = tmp_path / "b.csv"
    code = cli.main(["bench", "--sizes", "5", "--agents", "2", "--reps", "2",
                     "--iterations", "1", "--rounds", "2", "--out", str(out),
                     "--plot", str(tmp_path / "b.gp")])
    assert code == 0
    assert out.read_text().startswith(
        "experiment,rulesetSize,agents,arm,rep,iterRuntimeNanos,rulesEvaluated\n")
    assert (tmp_path / "b.meta.json").exists() and (tmp_path / "b.gp").exists()
    assert "work=5.00x" in capsys.readouterr().out


def test_scarcity_command(tmp_path):
    out = tmp_path / "s.csv"
    code = cli.main(["scarcity", "--ratios", "0,1", "--mutable", "on", "--reps", "1",
                     "--rounds", "5", "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["arm"] for r in rows] == ["mutable", "mutable"]


def test_validate_ruleset(tmp_path, capsys):
    good = tmp_path / "good.yaml"
    save_rules([radius_rule(1000)], good)
    assert cli.main(["validate-ruleset", str(good)]) == 0
    rule = radius_rule(1000)
    bad = tmp_path / "bad.yaml"
    bad.write_text(dumps([rule, rule]))
    assert cli.main(["validate-ruleset", str(bad)]) == 1
    assert "duplicate rule id" in capsys.readouterr().out


def test_deliberation_command(capsys):
    assert cli.main(["deliberation"]) == 0
    assert capsys.readouterr().out.strip() == "49900"
