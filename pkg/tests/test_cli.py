import csv
import io
import math
import subprocess
import sys

import numpy as np
import pytest

from cmesp.cli import BOUND_COLUMNS, main
from cmesp.instance import load_constraints, random_spd, write_matrix


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def matrix10(tmp_path):
    p = tmp_path / "c.txt"
    write_matrix(p, random_spd(10, 1))
    return str(p)


@pytest.fixture
def matrix2(tmp_path):
    p = tmp_path / "two.txt"
    p.write_text("2\n2 1\n1 2\n")
    return str(p)


def test_bound_two_rows(matrix10, capsys):
    assert main(["bound", "--matrix", matrix10, "--s", "3", "--bounds", "ddfact,linx"]) == 0
    out = rows(capsys.readouterr().out)
    assert len(out) == 2
    assert list(out[0]) == BOUND_COLUMNS
    assert [r["bound"] for r in out] == ["ddfact", "linx"]
    for r in out:
        assert float(r["ub"]) >= float(r["lb"]) - 1e-9


def test_bound_s_range(matrix10, capsys):
    assert main(["bound", "--matrix", matrix10, "--s-range", "2:9", "--bounds", "ddfact"]) == 0
    out = rows(capsys.readouterr().out)
    assert [int(r["s"]) for r in out] == list(range(2, 10))


def test_missing_file_exit_2(capsys):
    assert main(["bound", "--matrix", "/nonexistent/c.txt", "--s", "2"]) == 2
    assert "not found" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["bound", "--s", "2"],
        ["bound", "--s", "10"],
        ["bound", "--s", "3", "--s-range", "2:4"],
        ["bound", "--s-range", "2-4"],
        ["bound", "--s", "3", "--bounds", "nope"],
        ["bound", "--s", "3", "--gamma", "-1"],
    ],
)
def test_usage_errors(matrix10, argv, capsys):
    if "--matrix" not in argv and argv != ["bound", "--s", "2"]:
        argv = argv[:1] + ["--matrix", matrix10] + argv[1:]
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_asymmetric_file_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.txt"
    p.write_text("2\n1 2\n0 1\n")
    assert main(["bound", "--matrix", str(p), "--s", "1"]) == 2


def test_exact_two_by_two(matrix2, capsys):
    assert main(["exact", "--matrix", matrix2, "--s", "1", "--no-timing"]) == 0
    (r,) = rows(capsys.readouterr().out)
    assert float(r["z"]) == pytest.approx(math.log(2), abs=1e-11)
    assert r["support"] == "1"


def test_exact_bnb_matches_brute(matrix10, capsys):
    main(["exact", "--matrix", matrix10, "--s", "4", "--no-timing"])
    brute = rows(capsys.readouterr().out)[0]
    main(["exact", "--matrix", matrix10, "--s", "4", "--method", "bnb", "--no-timing"])
    bnb = rows(capsys.readouterr().out)[0]
    assert float(bnb["z"]) == pytest.approx(float(brute["z"]), abs=1e-10)
    assert bnb["support"] == brute["support"]


def test_heuristic(matrix10, capsys):
    assert main(["heuristic", "--matrix", matrix10, "--s", "4", "--no-timing"]) == 0
    main(["exact", "--matrix", matrix10, "--s", "4", "--no-timing"])
    out = capsys.readouterr().out.splitlines()
    h = rows("\n".join(out[:2]))[0]
    e = rows("\n".join(out[2:]))[0]
    assert float(h["z"]) <= float(e["z"]) + 1e-9


def test_mix_not_worse_than_singles(matrix10, capsys):
    main(["bound", "--matrix", matrix10, "--s", "5", "--bounds", "ddfact,linx"])
    singles = rows(capsys.readouterr().out)
    assert main(["mix", "--matrix", matrix10, "--s", "5", "--pair", "ddfact,linx"]) == 0
    (m,) = rows(capsys.readouterr().out)
    assert 0 <= float(m["alpha"]) <= 1
    assert float(m["ub"]) <= min(float(r["ub"]) for r in singles) + 1e-6


def test_fix_chain(matrix10, capsys):
    assert main(["fix", "--matrix", matrix10, "--s", "4", "--bounds", "ddfact,linx"]) == 0
    out = rows(capsys.readouterr().out)
    assert [int(r["round"]) for r in out] == list(range(1, len(out) + 1))
    assert int(out[0]["n"]) == 10
    for a, b in zip(out, out[1:]):
        assert int(b["n"]) == int(a["n"]) - int(a["fixed0"]) - int(a["fixed1"])


def test_sweep_parallel_matches_serial(matrix10, capsys):
    base = ["sweep", "--matrix", matrix10, "--s-range", "2:5", "--bounds", "ddfact", "--no-timing"]
    main(base)
    serial = capsys.readouterr().out
    main(base + ["--jobs", "2"])
    assert capsys.readouterr().out == serial
    main(base)
    assert capsys.readouterr().out == serial


def test_text_format_and_out_file(matrix10, tmp_path, capsys):
    out = tmp_path / "r.txt"
    assert main(["bound", "--matrix", matrix10, "--s", "3", "--format", "text", "--out", str(out)]) == 0
    text = out.read_text().splitlines()
    assert text[0].split() == BOUND_COLUMNS
    assert capsys.readouterr().out == ""


def test_gen_spd_and_constraints(tmp_path, capsys):
    c = tmp_path / "g.txt"
    a = tmp_path / "a.txt"
    assert main(["gen", "spd", "--n", "6", "--seed", "2", "--out", str(c)]) == 0
    assert main(["gen", "constraints", "--matrix", str(c), "--m", "2", "--seed", "2", "--out", str(a)]) == 0
    side = load_constraints(a, 6)
    assert side.m == 2
    assert main(["bound", "--matrix", str(c), "--constraints", str(a), "--s", "3", "--bounds", "ddfact"]) == 0


def test_module_entry_point(matrix2):
    out = subprocess.run(
        [sys.executable, "-m", "cmesp", "exact", "--matrix", matrix2, "--s", "1", "--no-timing"],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0
    assert "0.69314718056" in out.stdout
