from __future__ import annotations

import json
import subprocess
import sys

import pytest

from supplyaco.cli import main


@pytest.fixture
def data(tmp_path):
    out = tmp_path / "data"
    assert main(["generate", "--out", str(out), "--seed", "1", "--orders", "4"]) == 0
    return out


def _config(tmp_path, data, **extra):
    lines = [f'data_dir = "{data}"', f'output_dir = "{tmp_path / "res"}"', "repeats = 2",
             "instance_counts = [1, 2]", "solution_budget = 20", "best_known_cost = 1000.0",
             "timing_iteration_cap = 2", "timing_repeats = 1"]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    p = tmp_path / "exp.toml"
    p.write_text("\n".join(lines) + "\n")
    return p


def test_solve_writes_json(tmp_path, data):
    out = tmp_path / "r.json"
    code = main(["solve", "--data-dir", str(data), "--arch", "pawv", "--instances", "2",
                 "--budget", "40", "--best-known", "1000", "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["architecture"] == "PAwV"
    assert payload["iterations"] == 20 and payload["solutions_constructed"] == 40
    assert payload["best_cost"] == pytest.approx(
        payload["warehouse_cost"] + payload["transport_cost"])
    assert len(payload["assignment"]) == 4


def test_solve_is_reproducible(tmp_path, data):
    outs = []
    for name in ("a.json", "b.json"):
        main(["solve", "--data-dir", str(data), "--budget", "30", "--seed", "4",
              "--out", str(tmp_path / name)])
        payload = json.loads((tmp_path / name).read_text())
        payload.pop("seconds_per_iteration")
        outs.append(payload)
    assert outs[0] == outs[1]


def test_bench_and_report(tmp_path, data, capsys):
    cfg = _config(tmp_path, data)
    assert main(["bench", "convergence", str(cfg), "--arch", "PA"]) == 0
    res = tmp_path / "res"
    runs = (res / "runs.csv").read_bytes()
    assert main(["bench", "timing", str(cfg), "--arch", "PA", "--instances", "1"]) == 0
    assert (res / "runs.csv").read_bytes() == runs
    assert (res / "timing.csv").exists() and (res / "timing_meta.json").exists()
    matrix = (res / "convergence_matrix.csv").read_bytes()
    assert main(["report", str(cfg)]) == 0
    assert (res / "convergence_matrix.csv").read_bytes() == matrix
    assert main(["report", str(cfg), "--best-known", "500"]) == 0
    assert (res / "convergence_matrix.csv").read_bytes() != matrix


def test_validate_and_oracle(data, capsys):
    assert main(["validate", "--data-dir", str(data)]) == 0
    assert "0 issue(s)" in capsys.readouterr().out
    assert main(["oracle", "--generate", "0", "--orders", "3"]) == 0
    assert "optimum" in capsys.readouterr().out
    assert main(["oracle", "--data-dir", str(data)]) == 0


def test_validate_reports_issues(tmp_path, data):
    orders = data / "OrderList.csv"
    lines = orders.read_text().splitlines()
    cols, header = lines[1].split(","), lines[0].split(",")
    cols[header.index("product_id")] = "NO_SUCH_PRODUCT"
    orders.write_text("\n".join([lines[0], ",".join(cols), *lines[2:]]) + "\n")
    assert main(["validate", "--data-dir", str(data)]) == 3


def test_exit_codes(tmp_path, data):
    assert main([]) == 2
    assert main(["solve"]) == 2
    assert main(["solve", "--data-dir", str(tmp_path / "nope")]) == 3
    assert main(["solve", "--data-dir", str(data), "--instances", "8", "--budget", "4"]) == 2
    assert main(["bench", "convergence", str(tmp_path / "missing.toml")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("unknown = 1\n")
    assert main(["report", str(bad)]) == 2
    cfg = _config(tmp_path, data)
    assert main(["report", str(cfg), "--runs", str(tmp_path / "none.csv")]) == 3


def test_console_entry_point(data):
    proc = subprocess.run([sys.executable, "-m", "supplyaco.cli", "validate", "--data-dir",
                           str(data)], capture_output=True, text=True)
    assert proc.returncode == 0 and "orders" in proc.stdout
