import io
import json
import subprocess
import sys

import pytest

from stratasg import cli

BASE = ["--s", "0.3", "--gamma", "0.5", "--u", "0.2"]


def run(*argv):
    out = io.StringIO()
    code = cli.main(list(argv), out)
    return code, out.getvalue()


def jsonl(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def csv_rows(text):
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    head = lines[0].split(",")
    return [dict(zip(head, line.split(","))) for line in lines[1:]]


def test_equilibria_csv():
    code, text = run("equilibria", *BASE)
    assert code == 0
    assert text.startswith("# config: ")
    rows = csv_rows(text)
    assert [r["stability"] for r in rows if r["in_unit"] == "true"] == ["stable", "unstable"]
    assert float(rows[0]["root"]) == pytest.approx(0.31010, abs=1e-5)


def test_equilibria_sweep_skips_zero():
    code, text = run("equilibria", "--s", "0.3", "--gamma", "0.5",
                     "--u-sweep", "0:0.4:0.1", "--format", "jsonl")
    assert code == 0
    recs = jsonl(text)
    assert sorted({round(r["u"], 12) for r in recs}) == [0.1, 0.2, 0.3, 0.4]
    assert all(r["config"]["command"] == "equilibria" for r in recs)


def test_equilibria_bad_sweep():
    code, _ = run("equilibria", "--s", "0.3", "--gamma", "0.5", "--u-sweep", "1:0:0.1")
    assert code == 1


def test_integrate_csv():
    code, text = run("integrate", *BASE, "--y0", "0.4", "--t", "200", "--points", "10")
    assert code == 0
    rows = csv_rows(text)
    assert len(rows) == 11 and float(rows[0]["y"]) == 0.4
    assert float(rows[-1]["y"]) == pytest.approx(0.31010, abs=1e-4)


def test_config_file(tmp_path):
    f = tmp_path / "p.cfg"
    f.write_text("s = 0.3\ngamma = 0.5\nu = 0.2\n")
    assert run("equilibria", "--config", str(f)) == run("equilibria", *BASE)
    # flags override the file
    code, text = run("equilibria", "--config", str(f), "--u", "0.1")
    assert code == 0
    assert {float(r["u"]) for r in csv_rows(text)} == {0.1}


def test_missing_and_invalid_parameters():
    assert run("equilibria", "--s", "0.3")[0] == 1
    assert run("equilibria", "--s", "-1", "--gamma", "0.5", "--u", "0.2")[0] == 1
    assert run("integrate", *BASE, "--y0", "2", "--t", "1")[0] == 1


def test_unknown_flag_exits_one():
    with pytest.raises(SystemExit) as err:
        run("equilibria", "--bogus")
    assert err.value.code == 1


def test_moran_records():
    code, text = run("moran", *BASE, "--N", "100", "--y0", "0.5", "--t", "1",
                     "--replicates", "5", "--seed", "3")
    assert code == 0
    recs = jsonl(text)
    assert [r["replicate"] for r in recs[:-1]] == list(range(5))
    assert {"seed", "sup_gap", "final_k"} <= set(recs[0])
    assert recs[-1]["record"] == "summary"


def test_easg_duality_summary():
    code, text = run("easg-duality", *BASE, "--y0", "0.4", "--t", "1",
                     "--replicates", "2000", "--seed", "1")
    assert code == 0
    rec = jsonl(text)[-1]
    assert {"estimate", "se", "n", "target", "z", "pass", "config"} <= set(rec)
    assert rec["n"] == 2000 and rec["pass"] is True


def test_sasg_modes():
    code, text = run("sasg", *BASE, "--start", "(1 1 2)", "--replicates", "500",
                     "--summary-only")
    assert code == 0
    recs = jsonl(text)
    assert len(recs) == 1 and recs[0]["config"]["start"] == "(1 1 2)"
    code, text = run("sasg", *BASE, "--mode", "absorb", "--replicates", "200",
                     "--mmax", "2000")
    assert code == 0
    recs = jsonl(text)
    assert len(recs) == 201 and recs[-1]["d1"] == 1.0
    code, text = run("sasg", "--s", "1", "--gamma", "0.5", "--u", "0.3", "--mode", "catalan")
    assert code == 0 and jsonl(text)[0]["pass"] is True


def test_sasg_bad_start():
    assert run("sasg", *BASE, "--start", "(1 2)")[0] == 1
    assert run("sasg", *BASE, "--start", "pitchstar", "--mode", "absorb")[0] == 1


def test_sasg_start_from_file(tmp_path):
    f = tmp_path / "t.txt"
    f.write_text("(0 1 1)\n")
    code, text = run("sasg", *BASE, "--start", f"file:{f}", "--t", "0",
                     "--replicates", "10", "--summary-only")
    assert code == 0
    assert jsonl(text)[0]["estimate"] == pytest.approx(0.75)


def test_ancestral():
    code, text = run("ancestral", "--s", "0.3", "--gamma", "0", "--u", "0.2",
                     "--y0", "0.5,0.6", "--r", "1", "--closed-only")
    assert code == 0
    rows = csv_rows(text)
    assert list(rows[0]) == ["r", "y0", "g_closed", "g_mc", "se"]
    assert float(rows[0]["g_closed"]) == pytest.approx(0.431870, abs=1e-6)
    code, text = run("ancestral", *BASE, "--y0", "0.5", "--r", "1",
                     "--replicates", "2000", "--format", "jsonl")
    assert code == 0 and jsonl(text)[0]["se"] > 0


def test_ancestral_rejects_beneficial_mutations(capsys):
    code, _ = run("ancestral", *BASE, "--nu0", "0.1", "--y0", "0.5", "--r", "1")
    assert code == 1
    assert "nu0 = 0" in capsys.readouterr().err


def test_prune_check():
    code, text = run("prune-check", "--trees", "20", "--orders", "5", "--seed", "2")
    assert code == 0
    rec = jsonl(text)[0]
    assert rec["pass"] is True and set(rec["failures"].values()) == {0}


def test_flagged_comparison_exits_two():
    # a tiny mass cap flags most replicates
    code, _ = run("sasg", "--s", "2", "--gamma", "1", "--u", "0.01", "--t", "10",
                  "--mmax", "50", "--replicates", "100", "--summary-only")
    assert code == 2


def test_output_is_deterministic():
    args = ["sasg", *BASE, "--start", "pitchstar", "--replicates", "300", "--seed", "9"]
    assert run(*args) == run(*args)
    args = ["moran", *BASE, "--N", "50", "--y0", "0.3", "--t", "2", "--replicates", "4"]
    assert run(*args) == run(*args)


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "stratasg", "equilibria", *BASE],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout == run("equilibria", *BASE)[1]
