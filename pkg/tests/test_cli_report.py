import csv
import io
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from mfgstop import cli
from mfgstop.report import (CURVE_COLUMNS, HISTOGRAM_COLUMNS, OUTPUT_ENV,
                            STATS_COLUMNS, csv_text, histogram_svg, output_dir)


def header(text):
    return next(csv.reader(io.StringIO(text)))


def test_solve_json(capsys):
    assert cli.main(["solve", "--model", "tent", "--grid", "0,0.5,1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [r["u"] for r in doc["roots"]] == pytest.approx([0, 0.5, 1], abs=1e-9)
    assert set(doc["quartet"]) >= {"u_m", "u_M"}
    assert [row["t"] for row in doc["flow"]] == [0.0, 0.5, 1.0]


def test_solve_csv_and_out(tmp_path, capsys):
    assert cli.main(["solve", "--model", "tent", "--grid", "0,1", "--emit", "csv",
                     "--out", str(tmp_path)]) == 0
    assert header(capsys.readouterr().out) == ["t", "rho_min", "rho_max"]
    assert json.loads((tmp_path / "solve.json").read_text())["roots"]
    assert (tmp_path / "flow.csv").exists()


def test_nplayer_csv(capsys):
    assert cli.main(["nplayer", "--model", "uniform02", "--n", "20", "--seed", "3",
                     "--samples", "2", "--emit", "csv"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["sample"] for r in rows] == ["0", "1"]
    assert list(rows[0]) == ["sample", "n", "min", "max", "K", "K_star"]


def test_asymptotics_json_and_curve(capsys):
    assert cli.main(["asymptotics", "--alpha", "2", "--x", "0.5", "--beta", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["expected_count_limit"] == pytest.approx(0.13534, abs=1e-5)
    assert doc["window_expected_count"] == pytest.approx(0.12918, abs=1e-4)
    assert cli.main(["asymptotics", "curve", "--alpha-grid", "1.5:3:0.5"]) == 0
    text = capsys.readouterr().out
    assert tuple(header(text)) == CURVE_COLUMNS
    assert len(text.strip().splitlines()) == 5


@pytest.mark.parametrize("argv", [
    ["asymptotics", "--alpha", "-1"],
    ["asymptotics", "--alpha", "1"],
    ["asymptotics"],
    ["asymptotics", "--alpha", "2", "--x", "0.5"],
    ["solve"],
    ["solve", "--model", "nope"],
    ["solve", "--config", "/nonexistent/config.json"],
    ["nplayer", "--model", "tent"],
    ["simulate", "near", "--model", "tent", "--n", "50", "--samples", "5"],
    ["simulate", "histogram", "--model", "tent", "--samples", "0"],
    ["reproduce", "example-9.9"],
])
def test_config_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == 2


def test_bad_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "histogram", "--model", "tent", "--samples", "many"])
    assert exc.value.code == 2


def test_seed_required_without_preset(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = tmp_path / "model.json"
    cfg.write_text(json.dumps({"model": {"kind": "tent"},
                               "params": {"r": 1.0, "c": 1.0}}))
    base = ["simulate", "histogram", "--config", str(cfg), "--n", "20",
            "--samples", "3", "--out", str(tmp_path / "o")]
    assert cli.main(base) == 2
    assert cli.main(base + ["--seed", "5"]) == 0


def test_simulate_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["simulate", "extremal", "--model", "tent", "--n", "100",
                     "--samples", "20", "--seed", "4", "--out", str(out)]) == 0
    doc = json.loads((out / "extremal.json").read_text())
    assert doc["seed"] == 4 and doc["config"]["n"] == 100 and doc["version"]
    assert tuple(header((out / "extremal_min.csv").read_text())) == HISTOGRAM_COLUMNS
    assert tuple(header((out / "extremal_stats.csv").read_text())) == STATS_COLUMNS
    svg = ET.fromstring((out / "extremal_min.svg").read_text())
    texts = [el.text for el in svg.iter() if el.tag.endswith("text")]
    assert "Locations k/n" in texts and "number of samples" in texts
    # no external references in the SVG
    assert "href" not in (out / "extremal_min.svg").read_text()


def test_simulate_no_svg_and_stem(tmp_path):
    assert cli.main(["simulate", "histogram", "--model", "tent", "--n", "30",
                     "--samples", "5", "--seed", "1", "--out", str(tmp_path),
                     "--stem", "h", "--no-svg"]) == 0
    assert (tmp_path / "h.json").exists() and (tmp_path / "h.csv").exists()
    assert not list(tmp_path.glob("*.svg"))


def test_flags_win_over_config_and_replay(tmp_path):
    first = tmp_path / "a"
    assert cli.main(["simulate", "near", "--model", "uniform02", "--n", "60",
                     "--samples", "30", "--seed", "2", "--x", "0.5", "--eps", "0.1",
                     "--out", str(first)]) == 0
    report = first / "near.json"
    again = tmp_path / "b"
    assert cli.main(["simulate", "near", "--config", str(report),
                     "--out", str(again)]) == 0
    assert (again / "near.json").read_bytes() == report.read_bytes()
    third = tmp_path / "c"
    assert cli.main(["simulate", "near", "--config", str(report), "--samples", "10",
                     "--out", str(third)]) == 0
    assert json.loads((third / "near.json").read_text())["config"]["samples"] == 10


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert output_dir(None, "fallback") == tmp_path / "env"
    assert output_dir(str(tmp_path / "flag"), "fallback") == tmp_path / "flag"
    assert cli.main(["simulate", "histogram", "--model", "tent", "--n", "20",
                     "--samples", "2", "--seed", "1"]) == 0
    assert (tmp_path / "env" / "histogram.json").exists()
    monkeypatch.delenv(OUTPUT_ENV)
    assert str(output_dir(None, "fallback")) == "fallback"


def test_unwritable_output_exits_1(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["simulate", "histogram", "--model", "tent", "--n", "20",
                     "--samples", "2", "--seed", "1", "--out", str(blocker / "x")]) == 1


def test_reproduce_example_5_8(tmp_path, capsys):
    assert cli.main(["reproduce", "example-5.8", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)
    checks = json.loads((tmp_path / "example-5.8_checks.json").read_text())
    assert all(c["passed"] for c in checks["checks"])
    assert (tmp_path / "example-5.8_extremal.json").exists()
    assert (tmp_path / "example-5.8_extremal_min.svg").exists()


def test_csv_text_formats():
    text = csv_text([{"a": 0.1, "b": [1, 2], "c": None}], ("a", "b", "c"))
    assert text == "a,b,c\n0.1,1 2,\n"


def test_histogram_svg_empty_rows_parses():
    ET.fromstring(histogram_svg([], "empty"))


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "mfgstop", "--version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip()
