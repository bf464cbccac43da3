import json
import shutil
import subprocess
import sys

import pytest

from lockinfer.attack import published_profile
from lockinfer.cli import main
from lockinfer.evaluation import monte_carlo_topr
from lockinfer.lockmodel import PADLOCK, CombinationKey, implemented_key_set


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def unlock_trace(tmp_path, capsys):
    path = tmp_path / "unlock.csv"
    code, _, _ = _run(capsys, "simulate", "unlock", "--key", "10-30-0", "--out", path, "--seed", 1)
    assert code == 0
    return path


def test_simulate_then_infer(unlock_trace, capsys):
    code, out, _ = _run(capsys, "infer", unlock_trace)
    assert code == 0 and out.strip() == "10-30-0"


def test_segment_prints_two_boundaries(unlock_trace, tmp_path, capsys):
    code, out, _ = _run(capsys, "segment", unlock_trace, "--out", tmp_path / "seg.csv")
    assert code == 0 and len(out.strip().split(",")) == 2
    header = (tmp_path / "seg.csv").read_text().splitlines()[0]
    assert header.startswith("phase,")


def test_rank_restricted(unlock_trace, tmp_path, capsys):
    out_csv = tmp_path / "rank.csv"
    code, _, _ = _run(capsys, "rank", unlock_trace, "--restricted-4k", "--top-r", 10, "--out", out_csv)
    assert code == 0
    rows = out_csv.read_text().splitlines()
    assert rows[0] == "rank,key,log_score" and len(rows) == 11
    ks = implemented_key_set(PADLOCK)
    keys = [CombinationKey.parse(r.split(",")[1]) for r in rows[1:]]
    assert all(k in ks for k in keys)
    assert [int(r.split(",")[0]) for r in rows[1:]] == list(range(1, 11))


def test_rank_unrestricted_top1(unlock_trace, tmp_path, capsys):
    out_csv = tmp_path / "rank.csv"
    assert _run(capsys, "rank", unlock_trace, "--top-r", 5, "--out", out_csv)[0] == 0
    assert out_csv.read_text().splitlines()[1].split(",")[1] == "10-30-0"


def test_eval_row_matches_library(tmp_path, capsys):
    out_csv = tmp_path / "curve.csv"
    code, _, _ = _run(capsys, "eval", "--trials", 400, "--r", "1,50", "--seed", 3, "--out", out_csv)
    assert code == 0
    row = [r for r in out_csv.read_text().splitlines() if r.startswith("50,")][0]
    sigma = [published_profile(PADLOCK).sigma(i) for i in (1, 2, 3)]
    curve = monte_carlo_topr(PADLOCK, sigma, trials=400, r_values=[1, 50], seed=3)
    s, f = curve.at(50)
    assert row == f"50,{s:.10g},{f:.10g}"


def test_eval_length_report(tmp_path, capsys):
    code, out, _ = _run(capsys, "eval", "--trials", 200, "--r", 50, "--length-r", 50, "--out", tmp_path / "c.csv")
    assert code == 0 and out.startswith("length_below_threshold,")


def test_ttest(tmp_path, capsys):
    p = tmp_path / "pairs.csv"
    p.write_text("a,b\n2.1,2.0\n1.9,2.0\n2.0,2.0\n2.2,2.0\n")
    code, out, _ = _run(capsys, "ttest", p)
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "t,p,df"
    t, pval, df = lines[1].split(",")
    assert float(t) == pytest.approx(0.7745966692, abs=1e-9) and df == "3"


def test_train_writes_loadable_profile(tmp_path, capsys):
    pairs = tmp_path / "pairs.csv"
    assert _run(capsys, "simulate", "pairs", "--out", pairs)[0] == 0
    prof = tmp_path / "prof.json"
    assert _run(capsys, "train", "--pairs", pairs, "--out", prof)[0] == 0
    d = json.loads(prof.read_text())
    assert d["spec"] == "padlock" and d["spin_profile"] is not None


def test_missing_file_is_json_error(tmp_path, capsys):
    code, out, err = _run(capsys, "infer", tmp_path / "nope.csv")
    assert code == 1 and out == ""
    msg = json.loads(err.strip().splitlines()[-1])
    assert set(msg) == {"error", "message"}


def test_bad_key_is_json_error(tmp_path, capsys):
    code, _, err = _run(capsys, "simulate", "unlock", "--key", "10-30-40", "--out", tmp_path / "x.csv")
    assert code == 1 and json.loads(err.strip().splitlines()[-1])["error"] == "LockError"


def test_console_script_exit_code(tmp_path):
    exe = shutil.which("lockinfer")
    cmd = [exe] if exe else [sys.executable, "-m", "lockinfer"]
    bad = subprocess.run(cmd + ["ttest", str(tmp_path / "missing.csv")], capture_output=True, text=True)
    assert bad.returncode != 0 and '"error"' in bad.stderr
    ok = subprocess.run(cmd + ["--version"], capture_output=True, text=True)
    assert ok.returncode == 0 and ok.stdout.strip().endswith("0.1.0")
