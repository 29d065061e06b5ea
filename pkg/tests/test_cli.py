import csv
import json
import subprocess
import sys

import pytest

from dcprog.cli import EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK, main, parse_sweep
from dcprog.cone import load
from dcprog.report import RunReport

BLS = ["--example", "boolean-ls", "--param", "n=4", "--param", "m=4"]


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 8
    first = json.loads(lines[0])
    assert first["name"] == "circle-packing" and first["params"]["n"] == 14


def test_run_writes_json_and_verify_reproduces(tmp_path, capsys):
    assert main(["run", *BLS, "--seed", "3", "--out", str(tmp_path), "--format", "json,csv"]) == EXIT_OK
    report = RunReport.from_json((tmp_path / "boolean-ls.json").read_text())
    assert report.converged and report.params["n"] == 4 and report.seed == 3
    rows = list(csv.reader((tmp_path / "boolean-ls-trace.csv").open()))
    assert rows[0] == ["k", "objective", "max_slack", "tau"] and len(rows) == len(report.trace) + 1
    capsys.readouterr()
    assert main(["verify", str(tmp_path / "boolean-ls.json")]) == EXIT_OK
    assert "reproduced" in capsys.readouterr().out


def test_verify_detects_tampering(tmp_path):
    main(["run", *BLS, "--out", str(tmp_path)])
    path = tmp_path / "boolean-ls.json"
    d = json.loads(path.read_text())
    d["objective"] += 1.0
    path.write_text(json.dumps(d))
    assert main(["verify", str(path)]) == EXIT_ERROR


def test_ccp_flags_reach_report(tmp_path):
    main(["run", *BLS, "--out", str(tmp_path), "--mu", "1.5", "--tau-max", "1e4", "--restarts", "2"])
    ccp = json.loads((tmp_path / "boolean-ls.json").read_text())["ccp"]
    assert (ccp["mu"], ccp["tau_max"], ccp["restarts"]) == (1.5, 1e4, 2)


def test_config_file_and_env(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("seed = 4\n[ccp]\nmu = 1.7\n[examples.boolean-ls]\nn = 3\nm = 5\n")
    out = tmp_path / "env-out"
    monkeypatch.setenv("DCPROG_OUT", str(out))
    assert main(["run", "--example", "boolean-ls", "--config", str(cfg), "--mu", "1.4"]) == EXIT_OK
    d = json.loads((out / "boolean-ls.json").read_text())
    # command-line flags override the config file
    assert d["ccp"]["mu"] == 1.4 and d["params"]["n"] == 3 and d["params"]["m"] == 5 and d["seed"] == 4


def test_config_rejects_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[ccp]\nspeed = 3\n")
    assert main(["run", *BLS, "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_ERROR
    assert "speed" in capsys.readouterr().err


def _code(argv):
    try:
        return main(argv)
    except SystemExit as exc:  # argparse usage errors
        return exc.code


@pytest.mark.parametrize("argv", [
    ["run", "--example", "nope"],
    ["run", "--example", "boolean-ls", "--param", "bogus=1"],
    ["run", "--example", "boolean-ls", "--mu", "0.5"],
    ["run", "--example", "boolean-ls", "--format", "png"],
    ["run", "--example", "boolean-ls", "--param", "n"],
    ["verify", "/nonexistent/report.json"],
    ["frobnicate"],
])
def test_errors_exit_one(argv, tmp_path):
    extra = ["--out", str(tmp_path)] if argv[0] == "run" else []
    assert _code(argv + extra) == EXIT_ERROR


def test_infeasible_run_exits_two(tmp_path):
    # with f_max bounding the input, five steps are too few to reach the antipodal point
    argv = ["run", "--example", "collision-avoidance", "--param", "T=5", "--max-iter", "5",
            "--out", str(tmp_path)]
    assert main(argv) == EXIT_INFEASIBLE


def test_sweep_boolean_snr(tmp_path):
    argv = ["sweep", *BLS, "--sweep", "snr=1:16/7:17", "--out", str(tmp_path), "--format", "csv,json,svg"]
    assert main(argv) in (EXIT_OK, EXIT_INFEASIBLE)
    rows = list(csv.DictReader((tmp_path / "boolean-ls-sweep-snr.csv").open()))
    assert len(rows) == 8
    assert float(rows[0]["snr"]) == 1.0 and float(rows[-1]["snr"]) == pytest.approx(17.0)
    assert all(0.0 <= float(r["ber"]) <= 1.0 for r in rows)
    summary = json.loads((tmp_path / "boolean-ls-sweep-snr.json").read_text())
    assert summary["metric"] == "ber" and len(summary["summary"]) == 8
    assert (tmp_path / "boolean-ls-sweep-snr.svg").read_text().lstrip().startswith("<?xml")


def test_sweep_rejects_bad_specs(tmp_path):
    with pytest.raises(Exception):
        parse_sweep("snr=1:2")
    assert main(["sweep", *BLS, "--sweep", "bogus=1:1:2", "--out", str(tmp_path)]) == EXIT_ERROR


def test_svg_for_circles_and_warning_for_boolean(tmp_path, capsys):
    argv = ["run", "--example", "circle-packing", "--param", "n=3", "--out", str(tmp_path), "--format", "svg"]
    assert main(argv) == EXIT_OK
    svg = (tmp_path / "circle-packing.svg").read_text()
    assert svg.count("<path") >= 4  # three circles and the square
    capsys.readouterr()
    assert main(["run", *BLS, "--out", str(tmp_path), "--format", "svg"]) == EXIT_OK
    assert "sweep" in capsys.readouterr().err
    assert not (tmp_path / "boolean-ls.svg").exists()


def test_dump_cone(tmp_path, capsys):
    assert main(["dump-cone", *BLS]) == EXIT_OK
    text = capsys.readouterr().out
    assert main(["dump-cone", *BLS, "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "boolean-ls.cone").read_text() == text
    with open(tmp_path / "boolean-ls.cone") as fh:
        cp = load(fh)
    assert cp.A.shape[0] == cp.b.size and cp.A.shape[1] == cp.c.size


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "dcprog.cli", "list"], capture_output=True, text=True)
    assert out.returncode == 0 and len(out.stdout.splitlines()) == 8
