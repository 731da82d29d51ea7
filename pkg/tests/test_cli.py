import json

import pytest

from mixedstep.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, load_campaign_config, main, UsageError


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_run_double(capsys):
    code = main(["run", "--benchmark", "lco", "--n", "100", "--variant", "double",
                 "--rtol", "1e-6", "--seed", "1", "--json", "--no-time-limits"])
    out = _json(capsys)
    assert code == EXIT_OK and out["status"] == "Completed"
    assert out["final_error"] < 1e-4 and out["mean_eanalytic"] is not None


def test_run_unknown_variant(capsys):
    assert main(["run", "--variant", "quad"]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_run_step_too_small(capsys):
    code = main(["run", "--rtol", "1e-12", "--variant", "single", "--json", "--no-time-limits"])
    assert code == EXIT_FAILURE
    assert _json(capsys)["status"] == "StepTooSmall"


def test_run_bad_tolerances():
    assert main(["run", "--rtol", "1e-6", "--atol", "1e-3"]) == EXIT_USAGE
    assert main(["run", "--n", "0"]) == EXIT_USAGE


@pytest.mark.parametrize("bench", ["kuramoto", "cc"])
def test_run_other_benchmarks(capsys, bench):
    code = main(["run", "--benchmark", bench, "--n", "5", "--tf", "3", "--rtol", "1e-4", "--json"])
    out = _json(capsys)
    assert code == EXIT_OK and out["benchmark"] == bench and out["mean_eanalytic"] is None


def test_sweep_analyze_report(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"benchmark": "lco", "n_tests": 4, "sizes": [4],
                               "tolerances": [1e-3, 1e-4], "final_times": [3.0], "step_log": True}))
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(cfg), "--output", str(out), "--json"]) == EXIT_OK
    res = _json(capsys)
    assert all(v["rate"] >= 0.95 for v in res["success"].values())
    assert {p.name for p in out.iterdir()} == {"results.csv", "steps.csv", "manifest.json"}

    assert main(["analyze", str(out / "results.csv"), "--json"]) == EXIT_OK
    a = _json(capsys)
    assert a["tests"] == 4 and a["complete"] == 4
    assert set(a["beta"]) == {"single", "mixed1", "mixed2", "double"}
    assert a["beta"]["double"] == [1.0] * 5

    rep = tmp_path / "figs"
    assert main(["report", str(out / "results.csv"), "--output", str(rep), "--json"]) == EXIT_OK
    made = _json(capsys)
    assert len(made) == 4 and not any(m["empty"] for m in made)


def test_sweep_set_override_and_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MIXEDSTEP_OUTPUT", str(tmp_path / "env"))
    code = main(["sweep", "--set", "benchmark=lco", "--set", "n_tests=2", "--set", "sizes=[3]",
                 "--set", "tolerances=[1e-3]", "--set", "final_times=[2.0]", "--set", 'variants=["double"]'])
    assert code == EXIT_OK
    text = (tmp_path / "env" / "results.csv").read_text().splitlines()
    assert len(text) == 1 + 2 * 2


def test_sweep_config_errors(tmp_path):
    assert main(["sweep", "--set", "benchmark=lco", "--set", "n_tests=0", "--set", "sizes=[3]",
                 "--set", "tolerances=[1e-3]"]) == EXIT_USAGE
    assert main(["sweep"]) == EXIT_USAGE
    bad = tmp_path / "b.json"
    bad.write_text("{not json")
    assert main(["sweep", "--config", str(bad)]) == EXIT_USAGE
    assert main(["sweep", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE
    assert main(["sweep", "--set", "benchmark=lco", "--set", "n_tests=2", "--set", "sizes=[3]",
                 "--set", "tolerances=[1e-2]", "--output", str(tmp_path)]) == EXIT_USAGE


def test_load_campaign_config_rejects_unknown_keys():
    with pytest.raises(UsageError, match="config"):
        load_campaign_config(None, ["benchmark=lco", "n_tests=1", "sizes=[1]", "tolerances=[1e-3]", "colour=red"])


def test_analyze_report_schema_errors(tmp_path):
    bad = tmp_path / "r.csv"
    bad.write_text("x,y\n")
    assert main(["analyze", str(bad)]) == EXIT_USAGE
    assert main(["report", str(tmp_path / "missing.csv")]) == EXIT_USAGE


def test_report_empty_marker(tmp_path, capsys):
    # a campaign whose reference never finishes has no complete tests
    res = tmp_path / "r.csv"
    from mixedstep.harness import RESULT_COLUMNS
    res.write_text(",".join(RESULT_COLUMNS) + "\n"
                   "0,lco,4,0.001,0.001,reference,MaxIterations,1,0,,,,,,,,3.0\n"
                   "0,lco,4,0.001,0.001,double,Completed,1,0,,,,,,,,3.0\n")
    assert main(["report", str(res), "--figure", "tol-error", "--output", str(tmp_path / "f"), "--json"]) == EXIT_OK
    assert _json(capsys)[0]["empty"]
