"""End-to-end drive of the four subcommands through ``main``."""

import csv
import io

import pytest

from hytmlab import CSV_COLUMNS, load_edges, rmat_edges, RmatParams
from hytmlab.cli import CliError, _parse_int_list, _parse_range, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# -- argument helpers --------------------------------------------------------


def test_parse_range():
    r = _parse_range("3:9")
    assert (r.lo, r.hi) == (3, 9)
    for bad in ("3", "3:9:1", "a:b", "9:3", "0:5"):
        with pytest.raises(CliError):
            _parse_range(bad)


def test_parse_int_list():
    assert _parse_int_list("1,2,8", "--threads") == [1, 2, 8]
    for bad in ("", "1,x", "0,2", "-1"):
        with pytest.raises(CliError):
            _parse_int_list(bad, "--threads")


# -- run ---------------------------------------------------------------------


def test_run_writes_audited_csv_to_stdout(capsys):
    code, out, err = run_cli(capsys, "run", "--policy", "fix",
                             "--scale", "5", "--edgefactor", "2",
                             "--threads", "2", "--seed", "3")
    assert code == 0, err
    rows = list(csv.reader(io.StringIO(out)))
    assert tuple(rows[0]) == CSV_COLUMNS
    # both kernels: (2 threads + 1 aggregate) x 2
    assert len(rows) == 1 + 6
    assert {r[7] for r in rows[1:]} == {"generate", "compute"}


def test_run_writes_csv_file(tmp_path, capsys):
    path = tmp_path / "out.csv"
    code, out, _ = run_cli(capsys, "run", "--policy", "coarse",
                           "--scale", "4", "--edgefactor", "2",
                           "--csv", str(path))
    assert code == 0
    assert f"wrote 10 rows to {path}" in out
    with open(path, newline="") as f:
        recs = list(csv.DictReader(f))
    assert len(recs) == 10
    assert all(r["policy"] == "coarse" for r in recs)


def test_run_retry_flag_validation(capsys):
    code, _, err = run_cli(capsys, "run", "--policy", "rnd",
                           "--retries", "5", "--scale", "4")
    assert code == 2
    assert "--retry-range" in err
    code, _, err = run_cli(capsys, "run", "--policy", "fix",
                           "--retry-range", "1:5", "--scale", "4")
    assert code == 2
    assert "applies only to --policy rnd" in err
    code, _, err = run_cli(capsys, "run", "--policy", "rnd",
                           "--retry-range", "50:20", "--scale", "4")
    assert code == 2
    assert "bad range" in err


def test_run_rejects_bad_values(capsys):
    code, _, err = run_cli(capsys, "run", "--policy", "fix", "--scale", "0")
    assert code == 2
    assert "error:" in err
    code, _, err = run_cli(capsys, "run", "--policy", "fix",
                           "--scale", "4", "--runs", "0")
    assert code == 2


def test_run_with_unknown_policy_is_an_argparse_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--policy", "nosuch"])
    assert exc.value.code == 2


def test_run_retry_range_accepted_for_rnd(capsys):
    code, out, err = run_cli(capsys, "run", "--policy", "rnd",
                             "--retry-range", "1:5", "--scale", "4",
                             "--edgefactor", "2", "--threads", "2")
    assert code == 0, err
    recs = list(csv.DictReader(io.StringIO(out)))
    assert all(r["retry_spec"] == "range:1:5" for r in recs)


# -- tune --------------------------------------------------------------------


def test_tune_prints_a_tuned_spec_deterministically(capsys):
    args = ("tune", "--scale", "5", "--edgefactor", "2", "--threads", "2",
            "--ranges", "1:5,20:40", "--trials", "1", "--seed", "3")
    code, out, err = run_cli(capsys, *args)
    assert code == 0, err
    first = out.strip()
    assert first.startswith("tuned:")
    code, out, _ = run_cli(capsys, *args)
    assert out.strip() == first


def test_tune_validates_arguments(capsys):
    code, _, err = run_cli(capsys, "tune", "--ranges", "", "--scale", "4")
    assert code == 2
    assert "at least one" in err
    code, _, err = run_cli(capsys, "tune", "--trials", "0", "--scale", "4")
    assert code == 2
    assert "--trials" in err


# -- stress ------------------------------------------------------------------


def test_stress_reports_per_policy_success(capsys):
    code, out, err = run_cli(capsys, "stress", "--threads", "2",
                             "--increments", "40", "--seeds", "1")
    assert code == 0, err
    assert "all 9 runs correct" in out
    for name in ("coarse", "stm", "alock", "slock", "hle",
                 "rnd", "fix", "stad", "dyad"):
        assert f"{name:8s} 1/1 runs correct" in out


def test_stress_validates_arguments(capsys):
    code, _, err = run_cli(capsys, "stress", "--threads", "0")
    assert code == 2
    code, _, err = run_cli(capsys, "stress", "--increments", "0")
    assert code == 2
    code, _, err = run_cli(capsys, "stress", "--seeds", "0")
    assert code == 2


# -- dump-edges --------------------------------------------------------------


def test_dump_edges_stdout_matches_generator(capsys):
    code, out, err = run_cli(capsys, "dump-edges", "--scale", "5",
                             "--edgefactor", "2", "--seed", "7")
    assert code == 0, err
    got = load_edges(io.StringIO(out))
    want = rmat_edges(RmatParams(scale=5, edgefactor=2, seed=7))
    assert got == want


def test_dump_edges_to_file(tmp_path, capsys):
    path = tmp_path / "edges.txt"
    code, out, _ = run_cli(capsys, "dump-edges", "--scale", "4",
                           "--edgefactor", "2", "--out", str(path))
    assert code == 0
    assert "wrote 32 edges" in out
    with open(path) as f:
        assert len(load_edges(f)) == 32


def test_missing_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
