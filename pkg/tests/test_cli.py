import csv
import io
import json
import subprocess
import sys

import pytest

from engel_ldp.cli import SCHEMA, main, read_output


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


def test_expand_example(capsys):
    code, out = run(["expand", "--kind", "engel", "--x", "7/10"], capsys)
    assert code == 0
    head, rows = read_output(out)
    assert head["summary"]["digits"] == ["2", "3", "5"]
    assert head["summary"]["terminated"] is True
    assert head["config"]["x"] == "7/10"
    assert rows == []


def test_rate_example(capsys):
    code, out = run(["rate", "--family", "C", "--x", "0.5"], capsys)
    assert code == 0
    _, rows = read_output(out)
    assert rows[0]["rate"] == pytest.approx(0.094535, abs=1e-6)


CASES = [
    ["expand", "--kind", "modified", "--x", "3/8"],
    ["sample", "--family", "C", "--n", "5", "--paths", "2", "--seed", "1"],
    ["sample", "--family", "A", "--n", "5", "--method", "williams", "--seed", "1"],
    ["dp", "--family", "A", "--n", "4", "--cap", "30"],
    ["tail", "--family", "A", "--n", "10:20:5", "--x=-0.8"],
    ["mgf", "--family", "C", "--n", "5", "--theta=-1", "--cap", "10000"],
    ["lemma1", "--j", "1,2,10", "--theta=-1,0,0.5"],
    ["rate", "--family", "A", "--a", "3", "--x=-1,-0.8,0.5"],
    ["mgf-closed", "--family", "A", "--theta=-2,-1,0,0.5"],
    ["legendre", "--family", "C", "--x", "0.5,1"],
    ["compare", "--x-min=-1.2", "--x-max", "0.5", "--step", "0.1"],
    ["estimate", "--family", "C", "--n", "10,20", "--x", "0.3", "--replicas", "5000", "--seed", "2"],
    ["estimate", "--family", "A", "--n", "10,20", "--x=-0.8", "--side", "lower", "--method", "dp"],
    ["fit", "--family", "A", "--n", "10,20", "--x=-0.8", "--side", "lower", "--method", "dp"],
    ["gof", "--family", "A", "--i", "3", "--samples", "20000", "--seed", "3"],
    ["xval", "--family", "C", "--n", "2", "--replicas", "20000", "--seed", "4"],
    ["gap", "--n", "10", "--paths", "500", "--seed", "5"],
]


@pytest.mark.parametrize("fmt", ["json", "csv"])
@pytest.mark.parametrize("argv", CASES, ids=lambda a: "-".join(a[:2]))
def test_output_round_trip(argv, fmt, capsys):
    code, out = run(argv + ["--format", fmt], capsys)
    assert code == 0
    head, rows = read_output(out)
    assert head["schema"] == SCHEMA
    assert head["config"]["command"] == argv[0]
    if fmt == "json":
        assert all(isinstance(json.loads(line), dict) for line in out.splitlines())


@pytest.mark.parametrize("argv", [c for c in CASES if "--seed" in c], ids=lambda a: "-".join(a[:2]))
def test_byte_identical_reruns(argv, tmp_path):
    a, b = tmp_path / "a.out", tmp_path / "b.out"
    assert main(argv + ["--output", str(a)]) == 0
    assert main(argv + ["--output", str(b), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_records_from_file(tmp_path, capsys):
    f = tmp_path / "stream.txt"
    f.write_text("0.3 0.1\n0.5 0.4 0.9\n")
    code, out = run(["records", "--input", str(f), "--format", "csv"], capsys)
    assert code == 0
    _, rows = read_output(out)
    assert [r["record_time"] for r in rows] == ["1", "3", "5"]


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["sample", "--family", "C", "--n", "3"])
    assert info.value.code == 2
    assert main(["expand", "--x", "0.5"]) == 2
    assert main(["expand", "--x", "3/2"]) == 2
    assert main(["mgf", "--family", "C", "--n", "3", "--theta", "0.5"]) == 2


def test_resource_exit(capsys):
    assert main(["tail", "--family", "C", "--n", "200", "--x=-0.1"]) == 3


def test_check_failure_exit(capsys):
    # an impossible significance level forces the check to fail
    code = main(["gof", "--family", "C", "--i", "2", "--samples", "20000", "--seed", "1", "--alpha", "1.0"])
    assert code == 1
    head, _ = read_output(capsys.readouterr().out)
    assert head["summary"]["passed"] is False


def test_acceptance_subset(tmp_path):
    out = tmp_path / "summary.csv"
    assert main(["acceptance", "--seed", "42", "--only", "1,2", "--output", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert [r["status"] for r in rows] == ["PASS", "PASS"]
    assert rows[0]["schema"] == SCHEMA


def test_console_script():
    res = subprocess.run(
        [sys.executable, "-m", "engel_ldp.cli", "expand", "--x", "3/8"],
        capture_output=True, text=True, check=True,
    )
    head, _ = read_output(res.stdout)
    assert head["summary"]["digits"] == ["3", "8"]
