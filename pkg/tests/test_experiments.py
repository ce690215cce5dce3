import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fgs_wave.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from fgs_wave.config import load_run_config, load_sweep_doc
from fgs_wave.errors import ConfigError, InsufficientData
from fgs_wave.experiments import (SCENARIOS, ErrorSweepRecord, SweepConfig, emit_outputs, fit_scaling,
                                  get_scenario, run_sweep, summarize, table_rows, trial_seed)
from fgs_wave.model import Grid, SineSumVelocity
from fgs_wave.pipeline import FGSRun
from fgs_wave.reconstruction import energy_norm, energy_norm_diff

TINY = dict(scenario="gauss-1d", velocity="c2", k_values=[64.0], M_values=[10, 20, 40], repetitions=3,
            M0=400, seed=5, dt=1e-3, t_final=0.2)

RUN = {
    "dimension": 1, "wave_number": 64,
    "velocity": {"kind": "sine_sum", "params": {"base": 1.0, "amp": 0.25}},
    "initial_data": {"kind": "gaussian", "params": {"center": [0.0], "momentum": [-1.0], "widths": [2.0]}},
    "grid": {"bounds": [[-1.0, 1.0]]},
    "time": {"t_final": 0.2, "dt": 1e-3},
    "sampling": {"M": 200, "seed": 1},
}


@pytest.fixture(scope="module")
def tiny_result():
    return run_sweep(SweepConfig(**TINY))


def test_sweep_config_invariants():
    with pytest.raises(ConfigError):
        SweepConfig(**{**TINY, "M0": 399})
    with pytest.raises(ConfigError):
        SweepConfig(**{**TINY, "repetitions": 1})
    with pytest.raises(ConfigError):
        SweepConfig(**{**TINY, "scenario": "nope"})
    with pytest.raises(ConfigError):
        SweepConfig(**{**TINY, "velocity": "c3"})
    cfg = SweepConfig(scenario="gauss-1d")
    assert cfg.M0 >= 10 * max(cfg.M_values) and cfg.repetitions == 30


def test_scenarios_build_valid_problems():
    for sc in SCENARIOS.values():
        k = sc.k_values[0]
        data = sc.data(k)
        assert data.dim == sc.dim == sc.grid(k).dim
        assert sc.velocity("c2").dim == sc.dim
        assert sc.compensation_power == (sc.dim / 4 if sc.wkb else 0.0)


def test_tiny_sweep_records(tiny_result):
    res = tiny_result
    assert len(res.records) == 9
    assert {(r.M, r.repetition) for r in res.records} == {(M, r) for M in (10, 20, 40) for r in range(3)}
    assert all(r.E_S > 0 and math.isfinite(r.E_S) for r in res.records)
    r = res.records[0]
    assert r.seed == trial_seed(5, "gauss-1d", "c2", 64.0, r.M, r.repetition)
    assert r.E_S == pytest.approx((r.dt_l2 + r.grad_l2) / 64.0, rel=1e-14)
    assert [row["count"] for row in res.summary] == [3, 3, 3]


def test_outputs_are_reproducible(tiny_result, tmp_path):
    emit_outputs(tiny_result, tmp_path / "a")
    again = run_sweep(SweepConfig(**TINY))
    emit_outputs(again, tmp_path / "b")
    for name in ("records.csv", "summary.csv", "table.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    rerun = run_sweep(SweepConfig.from_dict(manifest))
    emit_outputs(rerun, tmp_path / "c")
    assert (tmp_path / "a" / "records.csv").read_bytes() == (tmp_path / "c" / "records.csv").read_bytes()
    with open(tmp_path / "a" / "timings.csv") as fh:
        assert len(list(csv.reader(fh))) == 10


def test_dump_fields_and_figures(tmp_path):
    res = run_sweep(SweepConfig(**{**TINY, "M_values": [10], "dump_fields": True, "figures": True}))
    paths = emit_outputs(res, tmp_path)
    names = {p.name for p in paths}
    assert "reference_k64.u.bin" in names and "fgs_k64_M10.du_dt.bin" in names
    assert (tmp_path / "sweep.png").exists()


def _record(k, M, rep, e):
    return ErrorSweepRecord("gauss-1d", "c1", float(k), M, rep, 0, e, e * k / 2, e * k / 2)


def test_empty_summary_writes_headers(tmp_path):
    assert summarize([]) == []
    res = run_sweep(SweepConfig(**{**TINY, "repetitions": 2, "M_values": [10]}))
    res.records, res.summary = [], []
    emit_outputs(res, tmp_path)
    assert (tmp_path / "summary.csv").read_text().count("\n") == 1
    assert (tmp_path / "records.csv").read_text().startswith("scenario,velocity,k,M")


@given(perm=st.permutations(range(8)))
def test_summary_ignores_record_order(perm):
    recs = [_record(64 * (1 + i // 4), 10 * (1 + (i // 2) % 2), i % 2, 0.1 + 0.01 * i) for i in range(8)]
    assert summarize([recs[i] for i in perm]) == summarize(recs)


def test_summary_statistics():
    recs = [_record(64, 10, r, e) for r, e in enumerate([0.3, 0.4])]
    row = summarize(recs, 0.25)[0]
    assert row["rms_E_S"] == pytest.approx(math.sqrt(0.125))
    assert row["mean_E_S"] == pytest.approx(0.35)
    assert row["std_E_S"] == pytest.approx(math.sqrt(0.005))
    assert row["compensated"] == pytest.approx(math.sqrt(0.125) / 64 ** 0.25)


def test_fit_scaling_recovers_power_law():
    recs = [_record(64, M, r, 2.0 * M ** -0.5) for M in (10, 40, 160) for r in range(2)]
    fit = fit_scaling(summarize(recs))
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    with pytest.raises(InsufficientData):
        fit_scaling(summarize(recs[:4]))
    mixed = summarize(recs + [_record(128, 10, 0, 1.0), _record(128, 10, 1, 1.0)])
    with pytest.raises(ConfigError):
        fit_scaling(mixed)
    assert fit_scaling(mixed, fixed=64.0).slope == pytest.approx(-0.5)


def test_table_layout():
    recs = [_record(k, M, 0, k / M) for k in (64, 128) for M in (10, 20)] + \
           [_record(k, M, 1, k / M) for k in (64, 128) for M in (10, 20)]
    head, rows = table_rows(summarize(recs))
    assert head == ["k", "10", "20"]
    assert [r[0] for r in rows] == [64.0, 128.0]
    assert rows[1][2] == pytest.approx(128 / 20)


def test_coarse_time_step_agrees_with_fine():
    sc = get_scenario("gauss-1d")
    k = 512.0
    fine = FGSRun(sc.data(k), sc.velocity("c2"), sc.grid(k), 0.5, 1e-4)
    coarse = FGSRun(sc.data(k), sc.velocity("c2"), sc.grid(k), 0.5, 1e-3)
    a, _ = fine.field(2000, 3)
    b, _ = coarse.field(2000, 3)
    assert energy_norm_diff(a, b).value < 1e-6 * energy_norm(a).value


def test_run_config_round_trip():
    cfg = load_run_config(RUN)
    assert cfg.k == 64.0 and cfg.M == 200 and isinstance(cfg.velocity, SineSumVelocity)
    assert isinstance(cfg.grid, Grid) and cfg.sampler == "auto"


@pytest.mark.parametrize("patch, where", [
    ({"dimension": 4}, "dimension"),
    ({"velocity": {"kind": "sine_sum", "params": {"base": -1}}}, "velocity"),
    ({"sampling": {"M": 0}}, "sampling"),
    ({"extra": 1}, "<root>"),
])
def test_run_config_errors_name_the_field(patch, where):
    with pytest.raises(ConfigError, match=where):
        load_run_config({**RUN, **patch})


def test_sweep_doc_validation():
    with pytest.raises(ConfigError):
        load_sweep_doc({"scenario": "gauss-1d", "repetitions": 1})
    assert load_sweep_doc({"scenario": "gauss-1d"})["scenario"] == "gauss-1d"


def test_cli_exit_codes(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps(RUN))
    assert main(["schema", "--out", str(tmp_path / "schemas")]) == EXIT_OK
    assert main(["sweep", "--out", str(tmp_path / "s"), "--scenario", "unknown"]) == EXIT_CONFIG
    assert main(["sweep", "--out", str(tmp_path / "s"), "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["reconstruct", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["traj", "--config", str(cfg), "--q", "0", "--p", "0"]) == EXIT_NUMERICAL


def test_cli_reconstruct_reference_compare(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps(RUN))
    assert main(["reconstruct", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    assert main(["reference", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    capsys.readouterr()
    assert main(["compare", "--fgs", str(tmp_path / "fgs.u.bin"), "--ref", str(tmp_path / "reference.u.bin")]) == 0
    out = capsys.readouterr().out
    value = float(out.split()[1])
    assert 0 < value < 1.0
    assert main(["sample", "--config", str(cfg), "--M", "5", "--out", str(tmp_path / "s.csv")]) == EXIT_OK
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["q_1", "p_1", "pi"] and len(rows) == 6
    assert np.isfinite(np.array(rows[1:], float)).all()


def test_cli_sweep_from_config(tmp_path):
    doc = {k: v for k, v in TINY.items()}
    doc["M_values"] = [10]
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(doc))
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert (tmp_path / "o" / "records.csv").exists()
    assert main(["sweep", "--config", str(tmp_path / "o" / "manifest.json"), "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "o" / "records.csv").read_bytes() == (tmp_path / "p" / "records.csv").read_bytes()
