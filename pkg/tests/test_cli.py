from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from schoolchoice.cli import main
from schoolchoice.fixtures import example1, five_vs_six, lemma1_gadget, prop1, thm2_gadget
from schoolchoice.model import dumps_market, loads_market


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, fx in {
        "example1": example1(),
        "prop1": prop1(),
        "five": five_vs_six(),
        "thm2": thm2_gadget(),
        "lemma1": lemma1_gadget(sophisticated=()),
    }.items():
        path = tmp_path / f"{name}.json"
        path.write_text(dumps_market(fx.market))
        out[name] = str(path)
    return out


def _ok(result, code=0):
    assert result.exit_code == code, result.output
    return result


def test_validate_round_trips(runner, files):
    res = _ok(runner.invoke(main, ["validate", files["prop1"]]))
    assert loads_market(res.output) == prop1().market


def test_invalid_input_exits_2(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schools": [{"id": "s1", "capacity": -1}], "students": [], "k": 1}')
    res = runner.invoke(main, ["validate", str(bad)])
    assert res.exit_code == 2
    junk = tmp_path / "junk.json"
    junk.write_text("{nope")
    assert runner.invoke(main, ["validate", str(junk)]).exit_code == 2
    assert runner.invoke(main, ["run", "XX", str(bad)]).exit_code == 2


def test_run_csv_and_trace(runner, files, tmp_path):
    prof = tmp_path / "p.json"
    prof.write_text(json.dumps({"i3": ["s2"], "i4": ["s2"]}))
    res = _ok(runner.invoke(main, ["run", "BM", files["prop1"], "--profile", str(prof)]))
    lines = res.output.splitlines()
    assert lines[0] == "student,school"
    assert {"i3,s2", "i4,s2"} & set(lines)
    trace = _ok(runner.invoke(main, ["run", "DA", files["example1"], "--trace", "--tiebreak-seed", "3"]))
    records = [json.loads(x) for x in trace.output.splitlines()]
    assert "matching" in records[-1]
    assert len(records) >= 2


def test_run_rejects_mixed_profile(runner, files, tmp_path):
    prof = tmp_path / "mix.json"
    prof.write_text(json.dumps({"i1": [[["s1", "s2"], "1/2"], [["s2", "s1"], "1/2"]]}))
    assert runner.invoke(main, ["run", "BM", files["example1"], "--profile", str(prof)]).exit_code == 2


def test_eval_exact_and_mc(runner, files, tmp_path):
    prof = tmp_path / "p.json"
    prof.write_text(json.dumps({"i3": ["s2"], "i4": ["s2"]}))
    res = _ok(runner.invoke(main, ["eval", files["prop1"], "--profile", str(prof)]))
    rows = dict(line.split(",")[:2] for line in res.output.splitlines()[1:])
    assert rows["i1"] == "2" and rows["i3"] == "3/2"
    mc = _ok(runner.invoke(main, ["eval", files["prop1"], "--mc", "2000", "--seed", "1"]))
    assert len(mc.output.splitlines()) == 5
    assert runner.invoke(main, ["eval", files["prop1"], "--exact", "--mc", "10"]).exit_code == 2


def test_solve_verbs(runner, files, tmp_path):
    pure = json.loads(_ok(runner.invoke(main, ["solve", "pure", files["five"]])).output)
    assert len(pure["equilibria"]) == 2
    good = tmp_path / "eq.json"
    good.write_text(json.dumps(pure["equilibria"][0]))
    _ok(runner.invoke(main, ["solve", "verify", files["five"], "--profile", str(good)]))
    _ok(runner.invoke(main, ["solve", "verify", files["five"]]), 1)
    br = json.loads(_ok(runner.invoke(main, ["solve", "best-response", files["prop1"], "--student", "i3"])).output)
    assert br["rol"][0] == "s2"
    assert runner.invoke(main, ["solve", "best-response", files["prop1"]]).exit_code == 2
    dyn = json.loads(_ok(runner.invoke(main, ["solve", "dynamics", files["prop1"]])).output)
    assert dyn["certified"] is True
    sym = json.loads(_ok(runner.invoke(main, [
        "solve", "symmetric", files["example1"], "--cohort", "i1,i2,i3", "--rol-a", "s1,s2", "--rol-b", "s2,s1",
    ])).output)
    assert sym["t"] == "4/5"
    gad = json.loads(_ok(runner.invoke(main, ["solve", "gadget", files["five"], "--players", "i1,i2"])).output)
    assert gad["q"] == ["3/4", "3/4"]
    bay = json.loads(_ok(runner.invoke(main, ["solve", "bayesian", files["lemma1"], "--p-z", "1/10", "--p-y", "1/10"])).output)
    assert bay["t_star"] == "1/2" and sorted(bay["players"]) == ["y", "z"]


def test_census_verb(runner, files):
    res = _ok(runner.invoke(main, ["census", "thm2", files["thm2"]]))
    assert res.output.splitlines()[1].startswith("thm2,z,y,x")
    fresh = _ok(runner.invoke(main, ["census", "thm2", "--n", "5000", "--seed", "1"]))
    assert fresh.output.startswith("pattern,")
    assert runner.invoke(main, ["census", "thm2"]).exit_code == 2


def test_export_and_generate(runner):
    res = _ok(runner.invoke(main, ["export", "sincerity_bad", "--param", "n=12"]))
    assert len(loads_market(res.output).students) == 12
    assert runner.invoke(main, ["export", "no_reduced_competition", "--param", "n=13"]).exit_code == 2
    a = _ok(runner.invoke(main, ["generate", "--n", "50", "--seed", "2", "--p", "1/2"])).output
    b = _ok(runner.invoke(main, ["generate", "--n", "50", "--seed", "2", "--p", "1/2"])).output
    assert a == b and len(loads_market(a).students) == 50
    assert runner.invoke(main, ["generate", "--n", "3", "--u", "2,3"]).exit_code == 2


def test_experiment_and_report(runner, tmp_path):
    out = tmp_path / "results"
    for seed in ("1", "2"):
        res = runner.invoke(main, ["experiment", "theorem2", "--param", "n=1000", "--param", "replicates=3",
                                   "--param", "check=1", "--seed", seed, "--out", str(out)])
        assert res.exit_code in (0, 1) and "[PASS]" in res.output
    text = (out / "theorem2.csv").read_text()
    assert text.count("experiment,seed,label,field,value") == 1
    meta = json.loads((out / "theorem2.meta.json").read_text())
    assert meta["seed"] == 2 and "runtime_s" in meta
    _ok(runner.invoke(main, ["experiment", "bayesian_gadget", "--param", "grid=2"]))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "examples", "seed": 5}))
    res = _ok(runner.invoke(main, ["experiment", "--config", str(cfg)]))
    assert res.output.splitlines()[0] == "experiment,seed,label,field,value"
    assert runner.invoke(main, ["experiment", "nope"]).exit_code == 2
    assert runner.invoke(main, ["experiment", "theorem2", "--param", "bogus=1"]).exit_code == 2
    rep = _ok(runner.invoke(main, ["report", str(out / "theorem2.csv"), "--out", str(tmp_path / "plots")]))
    assert "exact_pattern_probability" in rep.output
    assert list((tmp_path / "plots").glob("*.svg"))
