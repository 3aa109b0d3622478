import json
import re

import pytest

from disperse import cli, oracles
from disperse.harness import AggregateStats

RUN_ARGS = [
    "run",
    "--family",
    "complete",
    "--n",
    "60",
    "--particles",
    "25",
    "--replicas",
    "6",
    "--seed",
    "7",
]


def run_cli(args):
    return cli.parse_and_dispatch(args)


# -- run -----------------------------------------------------------------------


def test_run_ndjson_shape(tmp_path):
    out = tmp_path / "r.ndjson"
    assert run_cli(RUN_ARGS + ["--out", str(out)]) == 0
    lines = [json.loads(line) for line in out.read_text().splitlines()]
    header = lines[0]
    assert header["record"] == "header"
    assert header["schema"] == "disperse/1"
    assert header["config"]["particles"] == "25"
    assert header["config"]["seed"] == "7"
    replicas = [rec for rec in lines if rec.get("record") == "replica"]
    assert len(replicas) == 6
    assert all(rec["schema"] == "disperse/1" for rec in replicas)
    agg = lines[-1]
    assert agg["record"] == "aggregate"
    assert agg["dispersed"] == sum(r["status"] == "dispersed" for r in replicas)


def test_run_csv_columns_and_config_comments(tmp_path):
    out = tmp_path / "r.csv"
    assert run_cli(RUN_ARGS + ["--format", "csv", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    assert "# particles=25" in comments
    assert "# seed=7" in comments
    data = [l for l in lines if not l.startswith("#")]
    assert data[0] == ",".join(AggregateStats.COLUMNS)
    assert len(data) == 2


def test_run_format_inferred_from_extension(tmp_path):
    out = tmp_path / "r.csv"
    assert run_cli(RUN_ARGS + ["--out", str(out)]) == 0
    assert out.read_text().splitlines()[-2].startswith("# ") is False  # header+row present


def test_run_json_document(tmp_path):
    out = tmp_path / "r.json"
    assert run_cli(RUN_ARGS + ["--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["schema"] == "disperse/1"
    assert len(doc["replicas"]) == 6
    assert doc["aggregate"]["replicas"] == 6
    assert doc["config"]["family"] == "complete"


def test_run_stdout_when_no_out(capsys):
    assert run_cli(RUN_ARGS) == 0
    lines = capsys.readouterr().out.splitlines()
    assert json.loads(lines[0])["record"] == "header"
    assert len(lines) == 8  # header + 6 replicas + aggregate


def test_run_reproducible_from_embedded_config(tmp_path):
    first = tmp_path / "a.ndjson"
    assert run_cli(RUN_ARGS + ["--out", str(first)]) == 0
    header = json.loads(first.read_text().splitlines()[0])
    ini = tmp_path / "replay.ini"
    ini.write_text(cli.write_config_ini(header["config"]))
    second = tmp_path / "b.ndjson"
    assert run_cli(["run", "--config", str(ini), "--out", str(second)]) == 0
    assert first.read_text() == second.read_text()


def test_flags_override_config_file(tmp_path):
    ini = tmp_path / "base.ini"
    ini.write_text(
        "[disperse]\nfamily = complete\nn = 60\nparticles = 25\nreplicas = 6\nseed = 7\n"
    )
    out = tmp_path / "o.ndjson"
    assert (
        run_cli(["run", "--config", str(ini), "--replicas", "2", "--out", str(out)])
        == 0
    )
    lines = out.read_text().splitlines()
    header = json.loads(lines[0])
    assert header["config"]["replicas"] == "2"
    assert sum(1 for l in lines if json.loads(l).get("record") == "replica") == 2


def test_svg_labels_match_csv_values(tmp_path):
    csv_out = tmp_path / "r.csv"
    svg_out = tmp_path / "r.svg"
    assert run_cli(RUN_ARGS + ["--format", "csv", "--out", str(csv_out)]) == 0
    assert run_cli(RUN_ARGS + ["--format", "svg-summary", "--out", str(svg_out)]) == 0
    lines = [l for l in csv_out.read_text().splitlines() if not l.startswith("#")]
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    svg = svg_out.read_text()
    labels = set(re.findall(r">([^<>]+)</text>", svg))
    for col in (
        "t_disp_min",
        "t_disp_p25",
        "t_disp_p50",
        "t_disp_p75",
        "t_disp_p95",
        "t_disp_max",
    ):
        assert any(row[col] == lab.split()[-1] for lab in labels), (col, row[col])


def test_run_lazy_flag_recorded_and_used(tmp_path):
    out = tmp_path / "l.ndjson"
    assert run_cli(RUN_ARGS + ["--lazy-p", "0.5", "--out", str(out)]) == 0
    header = json.loads(out.read_text().splitlines()[0])
    assert header["config"]["lazy_p"] == "0.5"


# -- scan ----------------------------------------------------------------------


SCAN_ARGS = [
    "scan",
    "--family",
    "complete",
    "--n",
    "50",
    "--particles",
    "10",
    "--replicas",
    "3",
    "--seed",
    "5",
    "--axis",
    "density",
    "--grid",
    "0.2,0.4",
]


def test_scan_csv_layout(tmp_path):
    out = tmp_path / "s.csv"
    assert run_cli(SCAN_ARGS + ["--out", str(out)]) == 0
    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == ",".join(["density"] + list(AggregateStats.COLUMNS))
    assert len(lines) == 3
    assert lines[1].startswith("0.2,")
    assert lines[2].startswith("0.4,")


def test_scan_ndjson_records(tmp_path):
    out = tmp_path / "s.ndjson"
    assert run_cli(SCAN_ARGS + ["--format", "ndjson", "--out", str(out)]) == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert lines[0]["record"] == "header"
    assert lines[0]["config"]["axis"] == "density"
    points = [l for l in lines if l.get("record") == "scan-point"]
    assert [p["density"] for p in points] == [0.2, 0.4]


def test_scan_svg_has_fraction_labels(tmp_path):
    out = tmp_path / "s.svg"
    assert run_cli(SCAN_ARGS + ["--format", "svg-summary", "--out", str(out)]) == 0
    svg = out.read_text()
    assert "dispersal fraction by density" in svg
    assert svg.count("<rect") >= 3  # background + one bar per point


def test_scan_requires_axis_and_grid(tmp_path):
    assert run_cli(SCAN_ARGS[:-4]) == 2


# -- oracle ---------------------------------------------------------------------


def test_oracle_tree_ruin_value(capsys):
    assert run_cli(["oracle", "tree-ruin", "--k", "3", "--d", "10"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["value"] == 0.0009765625
    assert doc["name"] == "tree-ruin"
    assert doc["inputs"] == {"k": 3, "d": 10}
    assert doc["equation_tag"]


def test_oracle_composite_and_list_inputs(capsys):
    assert (
        run_cli(
            [
                "oracle",
                "lazy-range",
                "--n",
                "100",
                "--p",
                "0.5",
                "--occupancies",
                "2,2",
                "--E-empty",
                "60",
            ]
        )
        == 0
    )
    doc = json.loads(capsys.readouterr().out)
    assert doc["value"]["ER_minus_exact"] == pytest.approx(0.485162, abs=1e-6)


def test_oracle_mixing_step(capsys):
    assert run_cli(["oracle", "mixing-step", "--family", "cycle", "--n", "9"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["value"] == 24


def test_oracle_missing_parameter_is_config_error(capsys):
    assert run_cli(["oracle", "tree-ruin", "--k", "3"]) == 2
    assert "requires --d" in capsys.readouterr().err


# -- validate ---------------------------------------------------------------------


def test_validate_quick_exit_zero(capsys):
    assert run_cli(["validate", "--quick"]) == 0
    out = capsys.readouterr().out
    assert "14/14 checks passed" in out


def test_validate_json_format(tmp_path):
    out = tmp_path / "v.json"
    assert run_cli(["validate", "--quick", "--format", "json", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["passed"] is True


def test_validate_detects_corrupted_oracle(monkeypatch, capsys):
    # Breaking one closed form must turn the suite red and exit 1.
    monkeypatch.setattr(oracles, "tree_ruin_probability", lambda k, d: 0.5)
    assert run_cli(["validate", "--quick"]) == 1
    assert "tree-ruin" in capsys.readouterr().out


# -- error handling ----------------------------------------------------------------


def test_exit_2_on_unknown_subcommand():
    assert run_cli(["frobnicate"]) == 2


def test_exit_2_on_unknown_flag():
    assert run_cli(RUN_ARGS + ["--warp", "9"]) == 2


def test_exit_2_when_family_missing(capsys):
    assert run_cli(["run", "--particles", "5"]) == 2
    assert "family" in capsys.readouterr().err


def test_exit_2_on_bad_topology_parameters(capsys):
    assert run_cli(["run", "--family", "grid", "--particles", "5"]) == 2
    err = capsys.readouterr().err
    assert "dim" in err


def test_exit_2_on_missing_config_file():
    assert run_cli(["run", "--config", "/nonexistent/x.ini"]) == 2
