import json
import subprocess
import sys

import pytest

from optjoin import MarkovModel, sample
from optjoin.cli import main
from optjoin.measures import write_sequence


@pytest.fixture
def files(tmp_path):
    m3 = MarkovModel.symmetric(0.3)
    m45 = MarkovModel.symmetric(0.45)
    (tmp_path / "m.json").write_text(json.dumps(m3.to_json()))
    (tmp_path / "m45.json").write_text(json.dumps(m45.to_json()))
    write_sequence(sample(m3, 2000, 1), tmp_path / "a.txt")
    write_sequence(sample(m45, 2000, 2), tmp_path / "b.txt")
    (tmp_path / "short.txt").write_text("0 1 1")
    return tmp_path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_dbar_identical_prints_zero(files, capsys):
    code, out, _ = run(["dbar", "--x", files / "a.txt", "--y", files / "a.txt", "--k", 4], capsys)
    assert code == 0 and out == "0.0\n"


def test_bound_prints_unregularized_value(files, capsys):
    code, out, _ = run(["bound", "--phi-model", files / "m.json", "--k", 6, "--g", 2, "--n", 100000,
                        "--p", 1, "--C", 1], capsys)
    phi3 = 0.5 * 0.4**3
    expect = 6 * 2 * phi3 / 8 + 3 * 2 / 6 + 2 * 2**3 / 100000**0.5
    assert code == 0 and float(out) == pytest.approx(expect, abs=1e-12)


def test_estimate_k_too_large(files, capsys):
    code, out, err = run(["estimate", "--x", files / "short.txt", "--y", files / "short.txt", "--k", 5], capsys)
    assert code == 2 and out == ""
    assert "k exceeds sequence length" in err


def test_usage_errors_exit_2(files, capsys):
    assert run(["nosuch"], capsys)[0] == 2
    assert run([], capsys)[0] == 2
    assert run(["dbar", "--k", "x"], capsys)[0] == 2
    code, _, err = run(["estimate", "--x", files / "a.txt"], capsys)
    assert code == 2 and "--y" in err
    code, _, err = run(["estimate", "--x", files / "nope.txt", "--y", files / "a.txt"], capsys)
    assert code == 2 and "no such file" in err


def test_estimate_json_and_csv(files, capsys):
    argv = ["estimate", "--x", files / "a.txt", "--y", files / "b.txt", "--k", 3]
    code, out, _ = run(argv, capsys)
    obj = json.loads(out)
    assert code == 0 and obj["k_used"] == 3 and obj["diagnostics"]["status"] == "optimal"
    code, out2, _ = run(argv + ["--format", "csv"], capsys)
    header, row = out2.strip().split("\n")
    assert header.startswith("cost_estimate,k_used")
    assert float(row.split(",")[0]) == obj["cost_estimate"]


def test_estimate_out_file_and_joining(files, capsys):
    out = files / "res.json"
    code, stdout, _ = run(["estimate", "--x", files / "a.txt", "--y", files / "b.txt", "--k", 2, "--eta", 0.1,
                           "--include-joining", "--out", out], capsys)
    assert code == 0 and stdout == ""
    obj = json.loads(out.read_text())
    assert obj["joining"]["k"] == 2 and obj["eta"] == 0.1


def test_estimate_nonconvergence_exit_1(files, capsys):
    code, out, err = run(["estimate", "--x", files / "a.txt", "--y", files / "b.txt", "--k", 3, "--eta", 0.01,
                          "--max-iter", 2, "--tol", 1e-14], capsys)
    assert code == 1 and "max_iter" in err and json.loads(out)["diagnostics"]["status"] == "max_iter"


def test_sample_is_seeded(files, capsys):
    argv = ["sample", "--model", files / "m.json", "--n", 50, "--seed", 3]
    _, out1, _ = run(argv, capsys)
    _, out2, _ = run(argv, capsys)
    assert out1 == out2 and len(out1.split()) == 50
    code, out, _ = run(argv + ["--format", "json"], capsys)
    assert json.loads(out)["tokens"] == out1.split()


def test_curve_matches_library(files, capsys):
    from optjoin import hamming_cost, k_step_cost_curve

    code, out, _ = run(["curve", "--x-model", files / "m.json", "--y-model", files / "m45.json", "--k-max", 5,
                        "--format", "json"], capsys)
    m3, m45 = MarkovModel.symmetric(0.3), MarkovModel.symmetric(0.45)
    ref = k_step_cost_curve(m3, m45, hamming_cost(m3.alphabet), 5)
    assert [(r["k"], r["value"]) for r in json.loads(out)["curve"]] == ref


def test_config_mirrors_flags(files, capsys):
    cfg = files / "cfg.json"
    cfg.write_text(json.dumps({"x": "a.txt", "y": "b.txt", "k": 3}))
    _, via_cfg, _ = run(["dbar", "--config", cfg], capsys)
    _, via_flags, _ = run(["dbar", "--x", files / "a.txt", "--y", files / "b.txt", "--k", 3], capsys)
    assert via_cfg == via_flags
    # command-line flags win
    _, out, _ = run(["dbar", "--config", cfg, "--k", 1], capsys)
    _, ref, _ = run(["dbar", "--x", files / "a.txt", "--y", files / "b.txt", "--k", 1], capsys)
    assert out == ref
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = run(["dbar", "--config", cfg], capsys)
    assert code == 2 and "bogus" in err


def test_export_joining_roundtrip(files, capsys):
    from optjoin import BlockJoining

    out = files / "j.json"
    code, _, _ = run(["export-joining", "--x", files / "a.txt", "--y", files / "b.txt", "--k", 2, "--gap-g", 1,
                      "--gap-x", "1", "--gap-y", "0", "--out", out], capsys)
    assert code == 0
    obj = json.loads(out.read_text())
    assert obj["g"] == 1 and obj["gap_block"] == {"x": ["1"], "y": ["0"]}
    assert BlockJoining.from_json(obj).period == 3


def test_bound_vacuous_exit_1(files, capsys):
    code, out, _ = run(["bound", "--phi-model", files / "m.json", "--k", 12, "--g", 1, "--n", 1000,
                        "--eta", 0.1, "--format", "json"], capsys)
    assert code == 1 and json.loads(out)["status"] == "vacuous"


def test_help_documents_every_flag(capsys):
    from optjoin.cli import build_parser, _subparser

    parser = build_parser()
    for name in ("estimate", "dbar", "sample", "curve", "bound", "experiment", "export-joining"):
        sub = _subparser(parser, name)
        flags = [a for a in sub._actions if a.option_strings]
        assert any("--seed" in a.option_strings for a in flags)
        for a in flags:
            assert a.help, (name, a.option_strings)


def test_module_entry_point(files):
    res = subprocess.run([sys.executable, "-m", "optjoin", "dbar", "--x", str(files / "a.txt"), "--y",
                          str(files / "a.txt"), "--k", "2"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout == "0.0\n"
