import itertools
import json

import numpy as np
import pytest

from covpart.cli import run
from covpart.distribution import read_csv

from conftest import random_ball_points


def write(path, rows, header=None):
    lines = [",".join(header)] if header else []
    lines += [",".join(repr(float(v)) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def cube4(tmp_path):
    pts = np.array(list(itertools.product([1.0, -1.0], repeat=4))) / 2
    return write(tmp_path / "cube4.csv", pts)


@pytest.fixture
def ball(tmp_path):
    pts = random_ball_points(np.random.default_rng(3), 120, 6)
    return write(tmp_path / "ball.csv", pts, [f"f{i}" for i in range(6)])


def test_partition_pinning(cube4, tmp_path):
    out = tmp_path / "r.json"
    assert run(["partition", "--input", cube4, "--k", "8", "--algo", "pinning", "--seed", "7", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["schema"] == 1
    for key in ("t", "S", "attempts", "accepted", "threshold", "loss_frobenius"):
        assert key in rep["report"]
    assert len(rep["partition"]["labels"]) == 16


@pytest.mark.parametrize("algo", ["general", "kmeans", "epsnet"])
def test_partition_algorithms(ball, tmp_path, algo):
    out = tmp_path / "r.json"
    args = ["partition", "--input", ball, "--k", "16", "--algo", algo, "--out", str(out), "--tensor-orders", "2,3"]
    assert run(args) == 0
    rep = json.loads(out.read_text())
    assert rep["report"]["cell_count"] <= 16
    assert rep["report"]["tensor_losses"]["2"] == pytest.approx(rep["report"]["loss_raw_moment"], abs=1e-12)


def test_general_diagnostics_and_audit(ball, tmp_path):
    out = tmp_path / "r.json"
    assert run(["partition", "--input", ball, "--k", "64", "--audit", "--out", str(out)]) == 0
    diag = json.loads(out.read_text())["diagnostics"]
    for key in ("heavy", "cubes_case1", "cubes_case2", "clusters_emitted", "budget_k", "pca_tail", "rounding_audit"):
        assert key in diag


def test_reports_are_byte_identical(ball, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    base = ["partition", "--input", ball, "--k", "32", "--seed", "4", "--no-meta", "--reseed", "3"]
    assert run(base + ["--out", str(a)]) == 0
    assert run(base + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_synthesize_rows_and_anonymity(tmp_path):
    rng = np.random.default_rng(0)
    src = write(tmp_path / "d.csv", random_ball_points(rng, 12, 3))
    synth, report = tmp_path / "s.csv", tmp_path / "r.json"
    args = ["synthesize", "--input", src, "--k", "4", "--out", str(synth), "--report", str(report)]
    assert run(args) == 0
    rows, _, _ = read_csv(synth)
    assert rows.shape == (12, 3)
    rep = json.loads(report.read_text())
    assert rep["min_cell"] == 3 and rep["anonymity_level"] >= 3
    _, counts = np.unique(rows, axis=0, return_counts=True)
    assert counts.min() == rep["anonymity_level"]
    orig, _, _ = read_csv(src)
    np.testing.assert_allclose(rows.mean(axis=0), orig.mean(axis=0), atol=1e-12)


def test_synthesize_rescaled_output_in_original_units(tmp_path):
    rng = np.random.default_rng(1)
    raw = rng.normal(size=(40, 2)) * 10
    src = write(tmp_path / "d.csv", raw, ["a", "b"])
    synth = tmp_path / "s.csv"
    args = ["synthesize", "--input", src, "--k", "5", "--rescale", "--algo", "kmeans", "--out", str(synth)]
    assert run(args) == 0
    rows, _, header = read_csv(synth)
    assert header == ["a", "b"]
    np.testing.assert_allclose(rows.mean(axis=0), raw.mean(axis=0), atol=1e-10)


def test_sweep(ball, tmp_path):
    out = tmp_path / "s.json"
    args = ["sweep", "--input", ball, "--k-list", "8,64", "--algos", "general,epsnet,kmeans", "--seeds", "3", "--out", str(out)]
    assert run(args) == 0
    rep = json.loads(out.read_text())
    assert len(rep["runs"]) == 3 * 2 * 3
    assert set(rep["summary"]) == {"general", "epsnet", "kmeans"}


def test_oracle(tmp_path):
    src = write(tmp_path / "t.csv", [(1, 0), (0, 1), (-1, 0), (0, -1)])
    out = tmp_path / "o.json"
    assert run(["oracle", "--input", src, "--k", "2", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["loss"] >= 0 and max(rep["partition"]["labels"]) <= 1


def test_weighted_input(tmp_path):
    src = write(tmp_path / "w.csv", [(0.1, 0.2, 1.0), (0.3, -0.2, 3.0), (-0.5, 0.0, 2.0), (0.0, 0.7, 1.0)])
    out = tmp_path / "r.json"
    assert run(["partition", "--input", src, "--weighted", "--k", "3", "--algo", "general", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["support_size"] == 4


def test_missing_input_exits_one(tmp_path, capsys):
    assert run(["partition", "--input", str(tmp_path / "nope.csv"), "--k", "4"]) == 1
    assert "not found" in capsys.readouterr().err


def test_out_of_ball_without_rescale_exits_one(tmp_path, capsys):
    src = write(tmp_path / "d.csv", [(3.0, 4.0), (0.0, 0.1)])
    assert run(["partition", "--input", src, "--k", "4"]) == 1
    assert "norm" in capsys.readouterr().err


def test_pinning_on_non_boolean_exits_one(ball, capsys):
    assert run(["partition", "--input", ball, "--k", "8", "--algo", "pinning"]) == 1


def test_unknown_flag_exits_one(ball):
    assert run(["partition", "--input", ball, "--k", "8", "--bogus"]) == 1


def test_budget_violation_exits_two(ball, monkeypatch):
    import covpart.runner as runner
    from covpart.partition import BudgetExceededError

    def boom(*a, **kw):
        raise BudgetExceededError("too many cells")

    monkeypatch.setattr(runner, "build_partition", boom)
    assert run(["partition", "--input", ball, "--k", "8"]) == 2


def test_snap_auto(ball, tmp_path):
    out = tmp_path / "r.json"
    assert run(["partition", "--input", ball, "--k", "8", "--snap", "auto", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["n_rows"] == 120 and rep["support_size"] <= 120
