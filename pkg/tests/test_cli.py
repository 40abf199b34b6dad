import csv
import json
import subprocess
import sys

import pytest

from lshis.cli import FLAT_FIELDS, main
from lshis.data import load_csv


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "toy.csv"
    assert main(["synth", "half-circles", "--minority", "50", "--ir", "100", "--seed", "7",
                 "-o", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "small.csv"
    assert main(["synth", "inner-circles", "--minority", "15", "--ir", "6", "--noise", "0.2",
                 "--seed", "1", "-o", str(path)]) == 0
    return path


def test_synth_row_count(toy):
    d = load_csv(toy)
    assert d.n_rows == 5050
    with open(toy) as fh:
        assert fh.readline().strip().split(",")[-1] == "class"


def test_synth_tie_break(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["synth", "inner-circles", "--minority", "10", "--ir", "1", "-o", str(out)]) == 0
    counts = load_csv(out).class_counts()
    assert sorted(counts.values()) == [10, 11]


def test_malformed_flag_exits_nonzero(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "half-circles", "--ir", "lots", "-o", str(tmp_path / "x.csv")])
    assert exc.value.code != 0
    assert "usage" in capsys.readouterr().err


def test_select_report_and_determinism(toy, tmp_path):
    args = ["select", "-i", str(toy), "--family", "rhf", "--method", "drop3-one", "--ands", "4",
            "--seed", "1"]
    outs = []
    for run in range(2):
        rep, idx = tmp_path / f"r{run}.json", tmp_path / f"i{run}.csv"
        assert main(args + ["-o", str(rep), "--indices", str(idx)]) == 0
        outs.append((rep.read_bytes(), idx.read_bytes()))
    assert outs[0] == outs[1]
    payload = json.loads(outs[0][0])
    assert payload["ir_before"] == 100
    assert payload["config"] == "rhf+drop3-one+4"
    assert payload["class_counts_after"]["minority"] == 50


def test_select_threads_identical(toy, tmp_path):
    base = ["select", "-i", str(toy), "--family", "rhf-dpf", "--method", "entropy", "--ands", "6"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(base + ["--threads", "1", "--indices", str(a), "-o", str(tmp_path / "a.json")]) == 0
    assert main(base + ["--threads", "8", "--indices", str(b), "-o", str(tmp_path / "b.json")]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_select_bundled_dataset(tmp_path):
    out = tmp_path / "pb.json"
    assert main(["select", "-i", "@pageblocks", "--method", "entropy", "--ands", "2", "-o", str(out)]) == 0
    assert json.loads(out.read_text())["n_rows"] == 5472


def test_missing_input_file(tmp_path, capsys):
    code = main(["cv", "-i", str(tmp_path / "nope.csv"), "-o", str(tmp_path / "o.json")])
    assert code != 0
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "o.json").exists()


def _run_cv(small, tmp_path, *extra):
    out, flat = tmp_path / "cv.json", tmp_path / "cv.csv"
    assert main(["cv", "-i", str(small), "--folds", "3", "--trees", "5", "--depths", "4", "8",
                 "--seed", "2", "-o", str(out), "--csv", str(flat), *extra]) == 0
    with open(flat) as fh:
        rows = list(csv.DictReader(fh))
    return json.loads(out.read_text()), rows


def test_cv_baseline_and_selection(small, tmp_path):
    report, rows = _run_cv(small, tmp_path, "--method", "none", "drop3-one", "entropy", "--ands", "2", "6")
    configs = [r["config"] for r in report["results"]]
    assert configs == ["baseline", "rhf+drop3-one+2", "rhf+drop3-one+6", "rhf+entropy+2", "rhf+entropy+6"]
    base = report["results"][0]
    assert base["summary"]["retention"]["mean"] == 1.0
    assert all(f["retention_fraction"] == 1.0 for f in base["folds"])
    assert tuple(rows[0]) == FLAT_FIELDS
    assert len(rows) == 15


def test_stats_on_cv_output(small, tmp_path):
    _run_cv(small, tmp_path, "--method", "none", "drop3-one", "entropy", "--ands", "2", "6")
    out = tmp_path / "stats.json"
    assert main(["stats", "--metric", "gmean", str(tmp_path / "cv.csv"), "-o", str(out)]) == 0
    rep = json.loads(out.read_text())
    ranks = rep["friedman"]["ranks"]
    assert set(ranks) == {"rhf+drop3-one+2", "rhf+drop3-one+6", "rhf+entropy+2", "rhf+entropy+6"}
    assert sum(ranks.values()) == pytest.approx(4 * 5 / 2)
    assert set(rep["vs_reference"]) == set(ranks)


def test_stats_single_column_errors(small, tmp_path, capsys):
    _run_cv(small, tmp_path, "--method", "none")
    assert main(["stats", str(tmp_path / "cv.csv")]) != 0
    assert "k >= 2 required" in capsys.readouterr().err


def test_bench_vertical_and_horizontal(small, tmp_path):
    out = tmp_path / "v.csv"
    assert main(["bench", "vertical", "-i", str(small), "--ands", "4", "--threads", "2",
                 "-o", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    # 20% of 15 minority rows leaves 3 < 5, so the smallest fraction is skipped
    assert [float(r["fraction"]) for r in rows] == [0.4, 0.6, 0.8, 1.0]
    out = tmp_path / "h.csv"
    assert main(["bench", "horizontal", "-i", str(small), "--ands", "4", "--workers", "1", "2",
                 "-o", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 and rows[0]["checksum"] == rows[1]["checksum"]


def test_module_entry_point(toy, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lshis", "select", "-i", str(toy), "--ands", "2"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["n_rows"] == 5050


def test_cv_bin_width_sweep(small, tmp_path):
    report, _ = _run_cv(small, tmp_path, "--family", "rhf", "dpf", "--method", "entropy",
                        "--ands", "2", "--r", "0.5", "1", "2", "4")
    configs = [r["config"] for r in report["results"]]
    assert configs == ["rhf+entropy+2", "dpf+entropy+2+r0.5", "dpf+entropy+2",
                       "dpf+entropy+2+r2", "dpf+entropy+2+r4"]
