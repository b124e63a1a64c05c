import json
import subprocess
import sys

import pytest

from homtype.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, build_parser, main, resolve_config


def read(path):
    return json.loads(path.read_text())


def test_build_and_artifacts(tmp_path):
    assert main(["build", "--builtin", "line:16", "--outdir", str(tmp_path)]) == EXIT_OK
    rep = read(tmp_path / "build" / "report.json")
    assert rep["checks"]["holds"] and rep["space"]["n"] == 16
    assert (tmp_path / "build" / "tree.json").is_file()
    cfg = read(tmp_path / "build" / "config.json")
    assert "outdir" not in cfg and cfg["builtin"] == "line:16"


def test_one_point_csv_exits_2(tmp_path, capsys):
    p = tmp_path / "one.csv"
    p.write_text("0,0.0,1.0\n")
    assert main(["build", "--points", str(p), "--outdir", str(tmp_path)]) == EXIT_INVALID
    assert "homtype build" in capsys.readouterr().err


def test_bad_inputs_exit_2(tmp_path):
    neg = tmp_path / "neg.csv"
    neg.write_text("0,0,1\n1,1,-1\n")
    assert main(["build", "--points", str(neg), "--outdir", str(tmp_path)]) == EXIT_INVALID
    assert main(["norm", "--builtin", "line:16", "--p", "0", "--outdir",
                 str(tmp_path)]) == EXIT_INVALID
    assert main(["build", "--builtin", "blob:3", "--outdir", str(tmp_path)]) == EXIT_INVALID


def test_norm_matches_l2_detail(tmp_path, capsys):
    assert main(["norm", "--builtin", "line:32", "--kind", "triebel_lizorkin",
                 "--outdir", str(tmp_path)]) == EXIT_OK
    printed = float(capsys.readouterr().out.strip())
    rep = read(tmp_path / "norm" / "report.json")
    assert printed == rep["norm"]
    assert rep["norm"] == pytest.approx(rep["l2_detail_norm"], rel=1e-9)
    rows = (tmp_path / "norm" / "coefficients.csv").read_text().splitlines()
    assert rows[0] == "level,alpha,value" and len(rows) == 32


def test_norm_reads_function_file(tmp_path, capsys):
    f = tmp_path / "f.csv"
    f.write_text("point_id,value\n" + "".join(f"{i},{(-1) ** i}\n" for i in range(8)))
    before = f.read_bytes()
    assert main(["norm", "--builtin", "line:8", "--function", str(f),
                 "--outdir", str(tmp_path)]) == EXIT_OK
    assert f.read_bytes() == before
    f.write_text("0,1\n")
    assert main(["norm", "--builtin", "line:8", "--function", str(f),
                 "--outdir", str(tmp_path)]) == EXIT_INVALID


def test_config_precedence_and_seed(tmp_path, monkeypatch):
    ini = tmp_path / "run.ini"
    ini.write_text("[homtype]\ntrials = 7\np = 1.5\nlambda = 3\n")
    parser = build_parser()
    monkeypatch.setenv("HOMTYPE_SEED", "11")
    cfg = resolve_config(parser.parse_args(["lp-report", "--config", str(ini), "--p", "3"]))
    assert cfg["trials"] == 7 and cfg["p"] == 3.0 and cfg["lambda_ap"] == 3.0
    assert cfg["seed"] == 11
    cfg = resolve_config(parser.parse_args(["lp-report", "--seed", "2"]))
    assert cfg["seed"] == 2 and cfg["trials"] == 200
    monkeypatch.delenv("HOMTYPE_SEED")
    assert resolve_config(parser.parse_args(["build"]))["seed"] == 0


def test_bad_config_exits_2(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[x]\nwobble = 1\n")
    assert main(["build", "--config", str(ini), "--outdir", str(tmp_path)]) == EXIT_INVALID
    ini.write_text("[x]\ntrials = many\n")
    assert main(["build", "--config", str(ini), "--outdir", str(tmp_path)]) == EXIT_INVALID


def test_reruns_are_byte_identical(tmp_path):
    args = ["ado-certify", "--builtin", "line:16", "--trials", "5", "--seed", "4"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--outdir", str(a)]) == EXIT_OK
    assert main(args + ["--outdir", str(b), "--threads", "3"]) == EXIT_OK
    for name in ("report.json", "config.json"):
        assert (a / "ado-certify" / name).read_bytes() == (b / "ado-certify" / name).read_bytes()


@pytest.mark.parametrize("cmd, extra", [
    ("wavelets", []),
    ("wavelets", ["--backend", "smoothed"]),
    ("molecule", ["--trials", "10"]),
    ("lp-report", ["--size", "5"]),
])
def test_subcommands_succeed(tmp_path, cmd, extra):
    assert main([cmd, "--builtin", "line:32", "--outdir", str(tmp_path)] + extra) == EXIT_OK
    assert (tmp_path / cmd / "report.json").is_file()


def test_angle_fit_certification_failure(tmp_path):
    # (p, q) = (2, 1) on the line exceeds the omega/p + 0.2 slope bound
    code = main(["angle-fit", "--builtin", "line:64", "--p", "2", "--q", "1", "--size", "5",
                 "--outdir", str(tmp_path)])
    assert code == EXIT_FAILED
    rep = read(tmp_path / "angle-fit" / "report.json")
    assert rep["max_slope"] > rep["bound"]
    assert main(["angle-fit", "--builtin", "line:16", "--thetas", "1",
                 "--outdir", str(tmp_path)]) == EXIT_INVALID


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "homtype.cli", "build", "--builtin", "grid:3x3",
                          "--outdir", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
