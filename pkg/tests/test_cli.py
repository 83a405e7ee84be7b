import csv
import io
import json
import subprocess
import sys

import pytest

from stablelab import cli


def run_cli(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.run([*args, "--out", str(out)])
    return code, out


def test_help_lists_every_subcommand_with_its_meaning():
    res = subprocess.run([sys.executable, "-m", "stablelab.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for s in cli.SUBCOMMANDS.values():
        assert s.name in res.stdout and s.anchor in res.stdout
    assert len(cli.SUBCOMMANDS) == 19


def test_exit_law_outputs(tmp_path):
    code, out = run_cli(tmp_path, "exit-law", "--N", "5000", "--seed", "1")
    assert code == 0
    text = (out / "exit-law.csv").read_bytes().decode()
    assert "\r\n" in text
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0][0] == "experiment" and all(r[0] == "exit-law" for r in rows[1:])
    doc = json.loads((out / "exit-law.json").read_text())
    assert doc["ok"] is True and doc["inputs"]["N"] == 5000
    assert "wall" not in (out / "exit-law.json").read_text()
    assert "wall_time_s" in json.loads((out / "exit-law.timing.json").read_text())


def test_outputs_independent_of_thread_count(tmp_path):
    a = run_cli(tmp_path, "green", "--N", "20000", "--threads", "1", name="t1")[1]
    b = run_cli(tmp_path, "green", "--N", "20000", "--threads", "4", name="t4")[1]
    assert (a / "green.csv").read_bytes() == (b / "green.csv").read_bytes()
    ja, jb = (json.loads((d / "green.json").read_text()) for d in (a, b))
    ja["inputs"].pop("threads", None), jb["inputs"].pop("threads", None)
    assert ja == jb


def test_lemma319_band(tmp_path):
    code, out = run_cli(tmp_path, "run", "lemma319", "--eps", "0.1", "--lambda", "0.785", "--alpha", "1")
    assert code == 0
    assert json.loads((out / "lemma319.json").read_text())["band_ok"] is True


def test_walk_trace(tmp_path):
    code, out = run_cli(tmp_path, "walk", "--N", "200", "--count", "2")
    assert code == 0
    lines = (out / "walk_trace.txt").read_text().splitlines()
    assert lines[0] == "trace step_index cx cy r lx ly" and len(lines) > 2


def test_config_file_and_env_out(tmp_path, monkeypatch):
    conf = tmp_path / "c.toml"
    conf.write_text('schema_version = 1\n[experiment]\nseed = 4\nN = 3000\n[hmeasure]\nx = [0.2, 0.1]\n')
    monkeypatch.setenv("STABLELAB_OUT", str(tmp_path / "env"))
    assert cli.run(["hmeasure", "--config", str(conf)]) == 0
    doc = json.loads((tmp_path / "env" / "hmeasure.json").read_text())
    assert doc["inputs"]["seed"] == 4 and doc["inputs"]["options"]["x"] == [0.2, 0.1]


def test_exit_codes(tmp_path, capsys):
    assert run_cli(tmp_path, "green", "--N", "0")[0] == cli.EXIT_CONFIG
    assert run_cli(tmp_path, "green", "--alpha", "3")[0] == cli.EXIT_CONFIG
    bad = tmp_path / "bad.toml"
    bad.write_text("schema_version = 9\n")
    assert run_cli(tmp_path, "green", "--config", str(bad))[0] == cli.EXIT_CONFIG
    assert "schema_version" in capsys.readouterr().err
    assert run_cli(tmp_path, "green", "--config", str(tmp_path / "missing.toml"))[0] == cli.EXIT_IO
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.run(["lemma319", "--eps", "0.1", "--lambda", "0.785", "--out", str(blocker / "sub")]) == cli.EXIT_IO
    # an unreachable oscillation threshold is an assertion failure
    assert run_cli(tmp_path, "oscillation", "--K", "5", "--osc_min", "5")[0] == cli.EXIT_ASSERT
    with pytest.raises(SystemExit) as info:
        cli.run(["no-such-subcommand"])
    assert info.value.code == 2


def test_rn_recover_atom_is_reported_not_crashed(tmp_path):
    code, out = run_cli(tmp_path, "rn-recover", "--u", "atom theta=0", "--M", "8")
    assert code == 0
    assert json.loads((out / "rn-recover.json").read_text())["summary"]["status"] == "unbounded"
