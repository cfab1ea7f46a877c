from __future__ import annotations

import json
import math
from fractions import Fraction
from pathlib import Path

import pytest

from lqdim import cli

GOLDEN = Path(__file__).parent / "golden"
CANTOR_DIM = math.log(2) / math.log(3)

EXAMPLES = {
    "analyze_cantor.json": ["analyze", "--preset", "p_cantor:3:0,2", "--q", "2", "--m-max", "16"],
    "separation_2_3.json": ["separation", "--preset", "bernoulli", "--lambda", "2/3", "--k-max", "12"],
    "garsia_golden.json": ["garsia", "--lambda", "golden", "--n-max", "18", "--q", "2"],
}


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_example(capsys):
    code, out, _ = run(capsys, *EXAMPLES["analyze_cantor.json"])
    assert code == 0
    rep = json.loads(out)
    assert rep["schema"] == "1" and rep["command"] == "analyze"
    row = rep["D_hat_vs_prediction"][0]
    assert abs(row["D_hat"] - CANTOR_DIM) <= 0.03
    assert row["predicted"] == pytest.approx(0.63093, abs=1e-5)
    assert rep["fekete"][0]["subadditive"]


def test_separation_example(capsys):
    code, out, _ = run(capsys, *EXAMPLES["separation_2_3.json"])
    assert code == 0
    sep = json.loads(out)["separation"]
    assert sep["overlap_level"] is None
    for row in sep["certificate"]["per_k"]:
        k = row["k"]
        assert row["bound"] == {"type": "rational", "num": "1", "den": str(3 ** (k - 1))}
        assert Fraction(row["gamma_times_inverse_bound"]) >= 1
    assert [g["k"] for g in sep["gamma"]] == list(range(1, 13))


def test_garsia_example(capsys):
    code, out, _ = run(capsys, *EXAMPLES["garsia_golden.json"])
    assert code == 0
    g = json.loads(out)["garsia"]
    assert g["overlap_level"] == 3
    assert g["norms_exact"]["2.0"][2] == "5/32"
    assert len(g["L"]["2.0"]) == 18


@pytest.mark.parametrize("name", sorted(EXAMPLES))
def test_golden_reports_byte_reproduce(capsys, name):
    code, out, _ = run(capsys, *EXAMPLES[name])
    assert code == 0
    assert out == (GOLDEN / name).read_text()


def test_deterministic_across_runs(capsys):
    argv = ["spectrum", "--preset", "golden", "--q-grid", "1.5:3:0.5", "--m-max", "10"]
    first = run(capsys, *argv)[1]
    assert run(capsys, *argv)[1] == first


@pytest.mark.parametrize("argv", [
    ["analyze", "--preset", "nonsense"],
    ["analyze", "--preset", "cantor", "--q", "1"],
    ["analyze", "--preset", "cantor", "--m-max", "30"],
    ["analyze", "--preset", "cantor", "--n-max", "0"],
    ["analyze", "--lambda", "not-a-number"],
    ["analyze", "--preset", "bernoulli:3/2"],
    ["intersect", "--p", "3"],
    ["flatten", "--D", "2"],
    ["analyze", "--wifs", "{not json"],
    ["spectrum", "--wifs", '{"maps": [{"lambda": "1/2", "t": "0"}, {"lambda": "1/3", "t": "1"}]}',
     "--format", "csv"],
])
def test_config_errors_exit_2(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2 and err and out == ""


def test_bad_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["bogus"])
    assert exc.value.code == 2


@pytest.mark.parametrize("argv", [
    ["garsia", "--preset", "bernoulli:2/3", "--n-max", "40", "--q", "2", "--atom-cap", "1000"],
    ["analyze", "--preset", "bernoulli:3/4", "--method", "atoms", "--m-max", "26", "--q", "2"],
])
def test_resource_errors_exit_3(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 3 and "hint" in err and out == ""


def test_separation_report_stops_at_word_cap(capsys):
    code, out, _ = run(capsys, "separation", "--preset", "cantor", "--k-max", "12", "--atom-cap", "100")
    assert code == 0 and len(json.loads(out)["separation"]["gamma"]) == 6


def test_invariant_violation_exits_4(capsys, monkeypatch):
    monkeypatch.setattr(cli, "shape_violations", lambda est: ["injected violation"])
    code, out, err = run(capsys, "spectrum", "--preset", "cantor", "--q-grid", "1.5:3:0.5", "--m-max", "8")
    assert code == 4 and "injected violation" in err
    rep = json.loads(out)
    assert rep["violations"] == ["injected violation"] and "spectrum" in rep


def test_csv_output(capsys):
    code, out, _ = run(capsys, "spectrum", "--preset", "cantor", "--q-grid", "2,3", "--m-grid", "4:8",
                       "--format", "csv")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "q,m,S_m,tau_hat,D_hat" and len(lines) == 1 + 2 * 5


def test_out_file_and_cache_env(capsys, tmp_path, monkeypatch):
    cache = tmp_path / "cache"
    cache.mkdir()
    monkeypatch.setenv("LQDIM_CACHE_DIR", str(cache))
    target = tmp_path / "report.json"
    code, out, _ = run(capsys, "analyze", "--preset", "golden", "--q", "2", "--m-max", "10",
                       "--out", str(target))
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["command"] == "analyze"
    assert list(cache.iterdir())
    assert not list(tmp_path.glob("*.tmp"))


def test_non_homogeneous_is_symbolic(capsys):
    wifs = '{"maps": [{"lambda": "1/2", "t": "0"}, {"lambda": "1/3", "t": "1"}]}'
    code, out, _ = run(capsys, "analyze", "--wifs", wifs, "--q", "2")
    rep = json.loads(out)
    assert code == 0 and "non-homogeneous" in rep["note"] and "spectrum" not in rep
    assert rep["similarity"]


def test_flatten_modes(capsys):
    code, out, _ = run(capsys, "flatten", "--D", "8", "--ell", "6", "--S", "0,2,4", "--q", "2")
    rep = json.loads(out)
    assert code == 0 and rep["tree"]["gap"] <= 0.15
    assert rep["regularity"]["R"] == [256, 1, 256, 1, 256, 1]
    code, out, _ = run(capsys, "flatten", "--preset", "cantor", "--m-grid", "10,12", "--rho", "delta")
    rep = json.loads(out)
    assert code == 0 and [r["eps_hat"] for r in rep["flattening"]] == [0.0, 0.0]


def test_intersect_command(capsys):
    code, out, _ = run(capsys, "intersect", "--t", "sqrt2", "--n", "6")
    fib = json.loads(out)["fiber"]
    assert code == 0 and fib["lemma_holds"]
    assert fib["intersection_bound"]["evidence"]["regime"].startswith("irrational")
    code, out, _ = run(capsys, "intersect", "--t", "1", "--n", "5")
    ev = json.loads(out)["fiber"]["intersection_bound"]["evidence"]
    assert code == 0 and ev["regime"] == "rational-t" and not ev["bound_applies"]
