import json
import subprocess
import sys

import numpy as np
import pytest

from eikonal.cli import main
from eikonal.grid import GridField, read_grid, write_grid


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def write_json(path, data):
    path.write_text(json.dumps(data))
    return path


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    rows = np.array([[float(v) for v in l.split(",")] for l in lines[1:]])
    return header, rows


# -- verify-ops -----------------------------------------------------------------------


def test_verify_bundled_catalog(capsys, tmp_path):
    code, out, _ = run(capsys, "verify-ops", "--out", tmp_path / "r.json")
    assert code == 0
    assert "21 yes / 0 no" in out
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["ok"] and all(r["verdict"] == "yes" for r in report["operators"])
    assert report["header"][1].startswith("command=verify-ops config=")


def test_verify_negative_controls(capsys):
    code, out, _ = run(capsys, "verify-ops", "--bundled", "negative")
    assert code == 0
    assert out.count("(expected failure)") == 2


def test_verify_sampled_column(capsys, tmp_path):
    code, _, _ = run(capsys, "verify-ops", "--samples", 200, "--out", tmp_path / "r.json")
    assert code == 0
    rows = json.loads((tmp_path / "r.json").read_text())["operators"]
    assert max(r["sampled_residual"] for r in rows) <= 1e-9


def test_verify_unexpected_failure_exits_one(capsys, tmp_path):
    cat = write_json(tmp_path / "c.json", {"n": 1, "c": 1, "operators": [{"name": "bad", "xi": ["x0", "0"]}]})
    code, out, _ = run(capsys, "verify-ops", "--spec", cat)
    assert code == 1 and "UNEXPECTED" in out


def test_verify_malformed_polynomial_exits_two(capsys, tmp_path):
    cat = write_json(tmp_path / "c.json", {"n": 1, "operators": [{"xi": ["x0 +* 1", "0"]}]})
    code, _, err = run(capsys, "verify-ops", "--spec", cat)
    assert code == 2 and err.startswith("error:")


# -- eval ---------------------------------------------------------------------------------

RADIAL = {
    "n": 3, "c": 1, "rank": 3, "psi": "0", "w": [],
    "grid": {"origin": [3.0, -0.5, -0.5, -0.5], "spacing": [0.5, 0.5, 0.5, 0.5], "shape": [3, 3, 3, 3]},
    "branch": "min-u", "seed": 0,
}


def test_eval_radial(capsys, tmp_path):
    spec = write_json(tmp_path / "s.json", RADIAL)
    code, _, err = run(capsys, "eval", "--spec", spec, "--out", tmp_path / "o.csv")
    assert code == 0 and "max residual" in err
    header, rows = read_csv(tmp_path / "o.csv")
    assert header == ["x0", "x1", "x2", "x3", "u", "residual", "branch_id", "newton_iters"]
    assert len(rows) == 81 and rows[:, 5].max() <= 1e-10
    x = rows[:, :4]
    assert np.allclose(rows[:, 4], np.sqrt(x[:, 0] ** 2 - np.sum(x[:, 1:] ** 2, axis=1)), atol=1e-10)


def test_eval_is_reproducible(capsys, tmp_path):
    spec = write_json(tmp_path / "s.json", RADIAL)
    run(capsys, "eval", "--spec", spec, "--out", tmp_path / "a.csv")
    run(capsys, "eval", "--spec", spec, "--out", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    head = (tmp_path / "a.csv").read_text().splitlines()[:3]
    assert head[0].startswith("# eikonal ") and "seed=0" in head[1]


def test_eval_rank0(capsys, tmp_path):
    spec = write_json(tmp_path / "s.json", {
        "n": 2, "c": 1, "rank": 0, "linear": {"c": [2 ** 0.5, 1, 0], "c0": 0.5},
        "grid": {"origin": [0, 0, 0], "spacing": [1, 1, 1], "shape": [3, 3, 3]},
    })
    code, _, _ = run(capsys, "eval", "--spec", spec, "--out", tmp_path / "o.csv")
    _, rows = read_csv(tmp_path / "o.csv")
    assert code == 0 and rows[:, 4].size == 27 and rows[:, 4 + 1].max() <= 1e-14


def test_eval_euclidean_linear_psi(capsys, tmp_path):
    spec = write_json(tmp_path / "s.json", {
        "metric": "euclidean", "psi": "t1",
        "grid": {"origin": [1, 3], "spacing": [0.5, 0.5], "shape": [5, 5]},
    })
    code, _, _ = run(capsys, "eval", "--spec", spec, "--out", tmp_path / "o.csv")
    header, rows = read_csv(tmp_path / "o.csv")
    assert code == 0 and header[:2] == ["x1", "x2"]
    assert np.isfinite(rows[:, 2]).all() and rows[:, 3].max() <= 1e-8


def test_eval_all_branches_and_missing_roots(capsys, tmp_path):
    spec = dict(RADIAL, grid={"origin": [0.2, 0.5, 0, 0], "spacing": [1, 1, 1, 1], "shape": [2, 1, 1, 1]})
    path = write_json(tmp_path / "s.json", spec)
    code, _, err = run(capsys, "eval", "--spec", path, "--branch", "all", "--out", tmp_path / "o.csv")
    _, rows = read_csv(tmp_path / "o.csv")
    # (0.2, 0.5, 0, 0) lies outside the cone: reported with branch_id -1
    assert rows[0, 6] == -1 and np.isnan(rows[0, 4])
    assert "1 nodes without a root" in err
    assert code == 0


def test_eval_bad_spec_exits_two(capsys, tmp_path):
    spec = write_json(tmp_path / "s.json", dict(RADIAL, psi="t1 +"))
    assert run(capsys, "eval", "--spec", spec)[0] == 2
    assert run(capsys, "eval", "--spec", tmp_path / "missing.json")[0] == 2
    spec = write_json(tmp_path / "s.json", dict(RADIAL, c=0))
    assert run(capsys, "eval", "--spec", spec)[0] == 2


# -- residual and transform ----------------------------------------------------------------


@pytest.fixture
def fields(tmp_path):
    n = 65
    dist = GridField.sample(lambda X: np.hypot(X[..., 0], X[..., 1]), [0.5, 0.5], [1.5 / (n - 1), 1.0 / (n - 1)], [n, n])
    plane = GridField.sample(lambda X: X[..., 0] - X[..., 1], [0, 0], [0.1, 0.05], [11, 6])
    wiggle = GridField.sample(lambda X: np.sin(3 * X[..., 0]) + X[..., 1], [0, 0], [0.1, 0.1], [21, 11])
    paths = {}
    for name, f in [("dist", dist), ("plane", plane), ("wiggle", wiggle)]:
        paths[name] = tmp_path / f"{name}.txt"
        write_grid(f, paths[name])
    return paths


def test_residual_command(capsys, fields):
    assert run(capsys, "residual", fields["plane"], "--c", 0, "--tol", 1e-12)[0] == 0
    code, out, _ = run(capsys, "residual", fields["dist"], "--equation", "euclidean", "--tol", 1e-2)
    assert code == 0 and "euclidean" in out
    assert run(capsys, "residual", fields["dist"], "--equation", "euclidean", "--tol", 1e-9)[0] == 1


def test_transform_legendre(capsys, fields, tmp_path):
    code, out, _ = run(capsys, "transform", "legendre", fields["dist"], "--out", tmp_path / "H.txt")
    assert code == 0 and "linearized ODE deviation" in out
    assert float(out.split()[-1]) <= 1e-3
    assert read_grid(tmp_path / "H.txt").shape == (65, 65)


def test_transform_hodograph_plane(capsys, fields, tmp_path):
    code, out, _ = run(capsys, "transform", "hodograph", fields["plane"], "--out", tmp_path / "w.txt")
    assert code == 0 and float(out.split()[-1]) <= 1e-10
    w = read_grid(tmp_path / "w.txt")
    Y = w.nodes()
    assert np.allclose(w.values, Y[..., 0] + Y[..., 1], atol=1e-10)


def test_transform_non_monotone_exits_one(capsys, fields, tmp_path):
    code, _, err = run(capsys, "transform", "legendre", fields["wiggle"], "--out", tmp_path / "z.txt")
    assert code == 1 and "slice 0" in err
    assert not (tmp_path / "z.txt").exists()


def test_transform_bad_file_exits_two(capsys, tmp_path):
    (tmp_path / "bad.txt").write_text("1,2,3\n")
    assert run(capsys, "transform", "legendre", tmp_path / "bad.txt", "--out", tmp_path / "o.txt")[0] == 2


# -- fmm-compare -----------------------------------------------------------------------------


def test_fmm_compare_default(capsys, tmp_path):
    code, _, _ = run(capsys, "fmm-compare", "--out", tmp_path / "r.json")
    rep = json.loads((tmp_path / "r.json").read_text())
    assert code == 0 and 0.8 <= rep["order"] <= 1.2
    assert rep["linf"] > 0 and [r["size"] for r in rep["runs"]] == [65, 129]


def test_fmm_compare_self(capsys, tmp_path):
    spec = write_json(tmp_path / "s.json", {"mode": "self"})
    run(capsys, "fmm-compare", "--spec", spec, "--out", tmp_path / "r.json")
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["linf"] == 0.0 and rep["l2"] == 0.0 and rep["order"] is None


def test_fmm_compare_two_sources(capsys, tmp_path):
    spec = write_json(tmp_path / "s.json", {"sources": [[-0.3, 0.0], [0.4, 0.2]]})
    run(capsys, "fmm-compare", "--spec", spec, "--out", tmp_path / "r.json")
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["linf"] <= 2.0 / 128


def test_fmm_compare_bad_spec(capsys, tmp_path):
    spec = write_json(tmp_path / "s.json", {"sizes": [65]})
    assert run(capsys, "fmm-compare", "--spec", spec)[0] == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "eikonal", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("eikonal ")
