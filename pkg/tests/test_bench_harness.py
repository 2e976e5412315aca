from __future__ import annotations

import csv

import pytest

from supplyaco.bench_harness import (
    BenchResults, ExperimentConfig, RunTrace, checkpoint_iterations, convergence_matrix,
    emit_report, load_config, read_traces, run_matrix, timing_run,
)
from supplyaco.cost_engine import proximity
from supplyaco.errors import ConfigError
from supplyaco.oracle_and_gen import GenSpec, brute_force_optimum, generate_instance


@pytest.fixture(scope="module")
def inst():
    return generate_instance(GenSpec(n_orders=4, seed=2))


@pytest.fixture(scope="module")
def optimum(inst):
    return brute_force_optimum(inst)[1]


def _cfg(tmp_path, optimum, **kw):
    base = dict(architectures=("IAC", "PA", "PAwV"), instance_counts=(1, 2), repeats=2,
                solution_budget=40, best_known_cost=optimum, output_dir=tmp_path,
                checkpoints=(90.0, 99.0, 100.0))
    base.update(kw)
    return ExperimentConfig(**base)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_single_cell_gives_one_column(tmp_path, inst, optimum):
    cfg = _cfg(tmp_path, optimum, architectures=("PA",), instance_counts=(1,), repeats=1,
               solution_budget=100)
    res = run_matrix(cfg, inst)
    m = res.matrices()["PA"]
    assert m.instance_counts == [1]
    assert m.iterations == list(range(5, 101, 5))
    assert len(res.traces) == 1 and res.traces[0].solutions_constructed == 100


def test_columns_are_monotone_and_bounded(tmp_path, inst, optimum):
    res = run_matrix(_cfg(tmp_path, optimum), inst)
    for arch, m in res.matrices().items():
        for n in m.instance_counts:
            vals = [v for _, v in m.column(n)]
            assert vals == sorted(vals)
            assert all(0 < v <= 100.0 for v in vals)


def test_budget_accounting_per_cell(tmp_path, inst, optimum):
    res = run_matrix(_cfg(tmp_path, optimum, solution_budget=30, ants_per_instance=2), inst)
    for t in res.traces:
        cap = 30 // (t.instance_count * 2)
        assert t.iterations_executed == cap
        assert t.solutions_constructed == cap * t.instance_count * 2 <= 30


def test_seeds_shared_across_architectures(tmp_path, inst, optimum):
    res = run_matrix(_cfg(tmp_path, optimum), inst, persist=False)
    seeds = {}
    for t in res.traces:
        seeds.setdefault((t.instance_count, t.repeat), set()).add(t.seed)
    assert all(len(s) == 1 for s in seeds.values())
    assert len({next(iter(s)) for s in seeds.values()}) == len(seeds)


def test_rerun_is_byte_identical(tmp_path, inst, optimum):
    outs = []
    for name in ("a", "b"):
        cfg = _cfg(tmp_path / name, optimum)
        emit_report(run_matrix(cfg, inst), parts=("convergence", "checkpoint", "runs"))
        outs.append({f: (tmp_path / name / f).read_bytes()
                     for f in ("convergence_matrix.csv", "checkpoint_table.csv", "runs.csv")})
    assert outs[0] == outs[1]


def test_parallel_jobs_match_serial(tmp_path, inst, optimum):
    a = run_matrix(_cfg(tmp_path / "a", optimum), inst)
    b = run_matrix(_cfg(tmp_path / "b", optimum, jobs=2), inst)
    assert a.traces == b.traces


def test_empty_architectures_give_header_only_tables(tmp_path, inst, optimum):
    cfg = _cfg(tmp_path, optimum, architectures=())
    emit_report(run_matrix(cfg, inst))
    assert _read(tmp_path / "convergence_matrix.csv") == [["architecture", "iteration", "1", "2"]]
    assert _read(tmp_path / "checkpoint_table.csv") == [["architecture", "checkpoint", "1", "2"]]
    assert len(_read(tmp_path / "runs.csv")) == 1


def test_report_reads_back_and_rescales(tmp_path, inst, optimum):
    cfg = _cfg(tmp_path, optimum)
    res = run_matrix(cfg, inst)
    traces = read_traces(tmp_path / "runs.csv")
    key = lambda t: (t.architecture, t.instance_count, t.repeat)
    assert [(key(t), t.seed, t.convergence) for t in sorted(traces, key=key)] == \
        [(key(t), t.seed, t.convergence) for t in sorted(res.traces, key=key)]
    half = res.matrices(optimum / 2)["PA"]
    full = res.matrices()["PA"]
    for cell, v in full.cells.items():
        assert half.cells[cell] == pytest.approx(v / 2, rel=1e-12)


def test_report_purity(tmp_path, inst, optimum):
    cfg = _cfg(tmp_path, optimum)
    res = run_matrix(cfg, inst, persist=False)
    before = [t for t in res.traces]
    emit_report(res, tmp_path / "x")
    emit_report(res, tmp_path / "y")
    assert res.traces == before
    for f in ("convergence_matrix.csv", "checkpoint_table.csv", "timing.csv", "runs.csv"):
        assert (tmp_path / "x" / f).read_bytes() == (tmp_path / "y" / f).read_bytes()


def _trace(costs, rep=0, arch="PA", n=1):
    conv = tuple((5 * (i + 1), c) for i, c in enumerate(costs))
    return RunTrace(arch, n, rep, rep, conv, 0, conv[-1][0])


def test_checkpoint_threshold_zero_hits_first_stride():
    t = checkpoint_iterations([_trace([200.0, 150.0, 100.0])], [0.0], 100.0)
    assert t.cells[("PA", 0.0, 1)] == 5


def test_checkpoint_quorum_policy():
    # 8 of 10 reach 100%: reported; 7 of 10: blank
    hit, miss = [300.0, 100.0], [300.0, 200.0]
    runs = [_trace(hit if r < 8 else miss, r) for r in range(10)]
    table = checkpoint_iterations(runs, [100.0], 100.0, reach_quorum=0.8)
    assert table.cells[("PA", 100.0, 1)] == 10
    assert table.reached[("PA", 100.0, 1)] == (8, 10)
    runs = [_trace(hit if r < 7 else miss, r) for r in range(10)]
    table = checkpoint_iterations(runs, [100.0], 100.0, reach_quorum=0.8)
    assert ("PA", 100.0, 1) not in table.cells


def test_convergence_matrix_mean_and_common_iterations():
    runs = [_trace([200.0, 100.0], 0), _trace([100.0, 100.0, 100.0], 1)]
    m = convergence_matrix(runs, "PA", 100.0)
    assert m.iterations == [5, 10]
    assert m.cells[(1, 5)] == pytest.approx((proximity(100, 200) + 100) / 2)


def test_timing_run(inst):
    cfg = ExperimentConfig(timing_iteration_cap=1, timing_repeats=2, best_known_cost=1.0)
    rec = timing_run(cfg, "pawv", 4, inst)
    assert rec.architecture == "PAwV" and rec.iterations == (1, 1)
    assert rec.seconds_per_iteration > 0


def test_timing_only_report_leaves_convergence_alone(tmp_path, inst, optimum):
    cfg = _cfg(tmp_path, optimum, timing_iteration_cap=2, timing_repeats=1)
    emit_report(run_matrix(cfg, inst))
    before = (tmp_path / "runs.csv").read_bytes()
    res = BenchResults(cfg, timings=[timing_run(cfg, "PA", 1, inst)])
    emit_report(res, parts=("timing",), meta_name="timing_meta.json")
    assert (tmp_path / "runs.csv").read_bytes() == before
    rows = _read(tmp_path / "timing.csv")
    assert rows[0] == ["architecture", "1"] and float(rows[2][1]) > 0


def test_config_validation():
    for bad in (dict(repeats=0), dict(checkpoints=(99.5, 99.0)), dict(instance_counts=(0,)),
                dict(best_known_cost=0.0), dict(reach_quorum=0.0), dict(jobs=0),
                dict(architectures=("ABC",)), dict(solution_budget=0)):
        with pytest.raises(ConfigError):
            ExperimentConfig(**bad)


def test_load_config(tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text('data_dir = "data"\nrepeats = 3\ninstance_counts = [1, 4]\n'
                 '[params]\nq0 = 0.5\n')
    cfg = load_config(p)
    assert cfg.data_dir == tmp_path / "data"
    assert cfg.repeats == 3 and cfg.instance_counts == (1, 4) and cfg.params.q0 == 0.5
    assert load_config(p, repeats=7).repeats == 7
    assert cfg.config_hash() == load_config(p).config_hash()


@pytest.mark.parametrize("text", ["bogus_key = 1\n", "repeats = \n", "[params]\nnope = 2\n"])
def test_load_config_errors(tmp_path, text):
    p = tmp_path / "exp.toml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_missing_data_dir_in_config():
    with pytest.raises(ConfigError):
        run_matrix(ExperimentConfig(instance_counts=(1,), repeats=1), persist=False)
