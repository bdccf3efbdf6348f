from __future__ import annotations

import csv
import subprocess
import sys

import numpy as np
import pytest

import svmpath.cli as cli
from svmpath.cli import generate_synthetic, main
from svmpath.errors import InputError, PathError

SMALL = ["--synthetic-n", "20", "--samples", "12"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_missing_data_file_exits_with_one(tmp_path):
    assert main(["--data", str(tmp_path / "absent.txt"), "--out", str(tmp_path / "o")]) == 1


def test_bad_range_exits_with_one(tmp_path):
    assert main(["--c-start", "2", "--c-end", "1", "--out", str(tmp_path)]) == 1


def test_malformed_file_exits_with_one(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("+1 1:0.5\n-1 2:abc\n")
    assert main(["--data", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_numerical_failure_exits_with_two(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise PathError("forced", 0, 0.0)

    monkeypatch.setattr(cli, "trace", fail)
    assert main(SMALL + ["--mode", "exact", "--out", str(tmp_path)]) == 2


def test_both_mode_writes_comparison(tmp_path):
    assert main(SMALL + ["--mode", "both", "--e", "0.5", "--out", str(tmp_path)]) == 0
    for name in ("breakpoints.csv", "path.csv", "certificates.csv"):
        assert (tmp_path / "exact" / name).exists()
        assert (tmp_path / "e_0.5" / name).exists()
    rows = read_csv(tmp_path / "e_0.5" / "compare.csv")
    assert len(rows) == 12
    assert all(0.0 <= float(r["partition_difference"]) <= 1.0 for r in rows)
    thetas = [float(r["theta"]) for r in read_csv(tmp_path / "exact" / "breakpoints.csv")]
    assert all(a <= b for a, b in zip(thetas, thetas[1:]))
    summary = read_csv(tmp_path / "summary.csv")
    assert [r["trace"] for r in summary] == ["exact", "e_0.5"]


def test_reruns_are_byte_identical(tmp_path):
    args = SMALL + ["--e", "0.1", "--oracle", "--oracle-samples", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    assert len(files) >= 7
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_unit_cap_relaxed_trace_matches_exact(tmp_path):
    assert main(SMALL + ["--mode", "exact", "--b-cap", "1", "--out", str(tmp_path / "x")]) == 0
    assert main(SMALL + ["--mode", "suboptimal", "--e", "0", "--b-cap", "1", "--out", str(tmp_path / "y")]) == 0
    a = [float(r["theta"]) for r in read_csv(tmp_path / "x" / "exact" / "breakpoints.csv")]
    b = [float(r["theta"]) for r in read_csv(tmp_path / "y" / "e_0" / "breakpoints.csv")]
    assert len(a) == len(b)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_synthetic_generator_is_deterministic():
    a = generate_synthetic(60, 2, 3)
    b = generate_synthetic(60, 2, 3)
    np.testing.assert_array_equal(a.x, b.x)
    assert np.count_nonzero(a.y > 0) == 30 and np.count_nonzero(a.y < 0) == 30
    with pytest.raises(InputError):
        generate_synthetic(7, 2, 0)


def test_libsvm_input(tmp_path):
    ds = generate_synthetic(16, 3, 1)
    lines = [f"{int(lab):+d} " + " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(row))
             for lab, row in zip(ds.y, ds.x)]
    data = tmp_path / "train.txt"
    data.write_text("\n".join(lines) + "\n")
    assert main(["--data", str(data), "--mode", "exact", "--samples", "5", "--out", str(tmp_path / "o")]) == 0
    assert len(read_csv(tmp_path / "o" / "exact" / "path.csv")) == 5


def test_floats_written_with_full_precision(tmp_path):
    assert main(SMALL + ["--mode", "exact", "--out", str(tmp_path)]) == 0
    row = read_csv(tmp_path / "exact" / "path.csv")[3]
    c = row["C"]
    assert float(format(float(c), ".17g")) == float(c) and c == format(float(c), ".17g")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "svmpath", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "--b-cap" in proc.stdout
