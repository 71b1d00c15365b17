from __future__ import annotations

import json
import subprocess
import sys

import pytest

from multisteer.cli import main, parse_ints, parse_range


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cutoff_example(capsys):
    code, out, _ = run(capsys, "cutoff", "--alpha", "0.1", "--n", "2")
    assert code == 0
    assert out.strip() == "0.525976"


@pytest.mark.parametrize("method", ["sdp", "symmetric"])
def test_cutoff_programs(capsys, method):
    code, out, _ = run(capsys, "cutoff", "--alpha", "0.1", "--n", "2", "--method", method)
    assert code == 0 and out.strip() == "0.525976"


def test_cutoff_json_embeds_config(capsys):
    code, out, _ = run(capsys, "cutoff", "--alpha", "0.1", "--format", "json")
    d = json.loads(out)
    assert d["config"]["alpha"] == 0.1
    assert d["epsilon_star"] == pytest.approx(0.525976, abs=1e-6)


@pytest.mark.parametrize(
    "argv",
    [
        ["cutoff", "--alpha", "1.5"],
        ["cutoff", "--alpha", "0.9", "--n", "2"],
        ["cutoff", "--alpha", "0.1", "--eta", "0.5"],
        ["cutoff"],
        ["nonsense"],
        ["simulate", "--alpha", "0.1", "--eps", "1.2"],
    ],
)
def test_config_errors_exit_2(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == 2


def test_simulate_then_verdict(tmp_path, capsys):
    counts = tmp_path / "counts.csv"
    code, _, _ = run(capsys, "simulate", "--alpha", "0.1", "--n", "2", "--eta", "0.9931", "--eps", "0.7259", "--seed", "1", "-o", str(counts))
    assert code == 0
    text = counts.read_text()
    assert text.startswith("# multisteer")
    code, out, _ = run(capsys, "verdict", str(counts), "--format", "json")
    assert code == 0
    rows = json.loads(out)["verdicts"]
    assert [r["bob"] for r in rows] == [1, 2]
    assert all(r["steered"] for r in rows)
    code, out, _ = run(capsys, "hypothesis-test", str(counts), "--format", "json")
    assert code == 0
    assert json.loads(out)["pooled"]["dof"] == 90


def test_simulate_is_deterministic(tmp_path, capsys):
    outs = []
    for _ in range(2):
        code, out, _ = run(capsys, "simulate", "--alpha", "0.2", "--eps", "0.8", "--shots", "1000", "--seed", "4")
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]
    _, other, _ = run(capsys, "simulate", "--alpha", "0.2", "--eps", "0.8", "--shots", "1000", "--seed", "5")
    assert other != outs[0]


def test_verdict_direct(capsys):
    code, out, _ = run(capsys, "verdict", "--eps-exp", "0.7259", "--cutoff", "0.5476")
    assert code == 0 and out.strip().endswith("true")
    code, _, _ = run(capsys, "verdict", "--eps-exp", "0.7")
    assert code == 2


def test_sweep_csv(capsys):
    code, out, _ = run(capsys, "sweep", "--n", "2,3", "--alphas", "0.1:0.3:0.1")
    assert code == 0
    lines = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert lines[0].startswith("N,alpha")
    assert len(lines) == 1 + 2 * 3


def test_missing_input_file(capsys):
    code, _, err = run(capsys, "tomography", "/nonexistent/counts.csv")
    assert code == 2 and err


def test_parsers():
    assert parse_range("0.1:0.3:0.1") == pytest.approx([0.1, 0.2, 0.3])
    assert parse_range("0.1,0.5") == [0.1, 0.5]
    assert parse_ints("2:4:1") == [2, 3, 4]
    with pytest.raises(ValueError):
        parse_range("1:0:0.1")


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "multisteer.cli", "cutoff", "--alpha", "0.1"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0.525976"
