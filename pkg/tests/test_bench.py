"""Tests for the trial harness, CSV persistence, and the scalar curve table."""

import csv
import dataclasses
import warnings

import numpy as np
import pytest

import structsynth.bench as bench
from structsynth import (
    BenchConfig,
    ValidationError,
    histogram,
    run_benchmark,
    scalar_curves,
    write_records_csv,
)
from structsynth.bench import run_trial

# Desk-scale protocol: small plant and short budgets so the whole module
# stays fast; the stock 100-trial protocol lives in the acceptance tests.
FAST = BenchConfig(
    num_subsystems=2,
    subsystem_dim=2,
    horizon=4,
    max_iterations=60,
    workers=1,
)


def _quiet_trial(config, target, trial):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_trial(config, target, trial)


def _timeless(record):
    return dataclasses.replace(record, con_seconds=0.0, ncon_seconds=0.0)


def test_trial_record_is_deterministic():
    a = _quiet_trial(FAST, "h2", 0)
    b = _quiet_trial(FAST, "h2", 0)
    assert _timeless(a) == _timeless(b)
    assert a.seed == FAST.base_seed
    assert a.target == "h2"
    assert a.status == "ok"


def test_opt_dominates_both_methods():
    for trial in range(3):
        for target in ("h2", "hinf"):
            r = _quiet_trial(FAST, target, trial)
            assert r.opt_norm <= min(r.con_norm, r.ncon_norm) * (1 + 1e-6)
            assert np.isfinite(r.log_con_ncon)
            assert r.log_con_opt >= -1e-9


def test_unmasked_h2_trials_reach_deadbeat_optimum():
    cfg = BenchConfig(
        num_subsystems=2,
        subsystem_dim=2,
        mask_fraction=0.0,
        horizon=4,
        max_iterations=400,
        workers=1,
    )
    r = _quiet_trial(cfg, "h2", 0)
    optimum = 4 * 4  # n * N with identity actuation
    assert r.opt_norm == pytest.approx(optimum, rel=1e-9)
    assert r.con_norm == pytest.approx(optimum, rel=1e-2)
    assert r.ncon_norm == pytest.approx(optimum, rel=1e-2)


def test_trial_seeds_shift_with_base_seed():
    shifted = BenchConfig(
        num_subsystems=2, subsystem_dim=2, horizon=4,
        max_iterations=60, workers=1, base_seed=7,
    )
    a = _quiet_trial(FAST, "h2", 7)
    b = _quiet_trial(shifted, "h2", 0)
    assert a.seed == b.seed == 7
    assert a.con_norm == b.con_norm
    assert a.ncon_norm == b.ncon_norm


def test_timeout_is_recorded():
    tiny = BenchConfig(
        num_subsystems=2, subsystem_dim=2, horizon=4,
        max_iterations=60, workers=1, timeout_seconds=1e-3,
    )
    r = _quiet_trial(tiny, "h2", 0)
    assert r.status == "timeout"
    assert np.isfinite(r.con_norm)


def test_run_benchmark_validates_inputs():
    with pytest.raises(ValidationError):
        run_benchmark(FAST, 0, "h2")
    with pytest.raises(ValidationError):
        run_benchmark(FAST, 1, "h1")


def test_records_independent_of_worker_count():
    serial = run_benchmark(FAST, 2, "h2")
    pooled = run_benchmark(dataclasses.replace(FAST, workers=2), 2, "h2")
    # Wall-clock fields differ run to run; everything else is identical.
    assert [_timeless(r) for r in serial] == [_timeless(r) for r in pooled]
    assert [r.trial for r in pooled] == [0, 1]


def test_worker_env_cap(monkeypatch):
    monkeypatch.setenv(bench.THREADS_ENV, "1")
    assert bench._resolve_workers(BenchConfig(workers=8)) == 1
    monkeypatch.setenv(bench.THREADS_ENV, "not-a-number")
    with pytest.raises(ValidationError):
        bench._resolve_workers(BenchConfig(workers=8))


def test_csv_round_trip(tmp_path):
    records = run_benchmark(FAST, 2, "hinf")
    path = tmp_path / "records.csv"
    write_records_csv(records, str(path))
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    for row, rec in zip(rows, records):
        assert int(row["trial"]) == rec.trial
        assert float(row["con_norm"]) == rec.con_norm  # repr round-trips
        assert row["status"] == rec.status
    assert list(rows[0]) == list(bench.CSV_FIELDS)


def test_histogram_basics():
    records = run_benchmark(FAST, 3, "h2")
    counts, edges = histogram(records, "log_con_ncon", bins=1)
    assert counts.sum() == 3
    counts, edges = histogram(records, "log_con_ncon", bins=5)
    assert counts.sum() == 3
    assert len(edges) == len(counts) + 1
    with pytest.raises(ValidationError):
        histogram(records, "log_con_ncon", bins=0)


def test_histogram_degenerate_and_empty():
    records = run_benchmark(FAST, 2, "h2")
    same = [records[0], records[0]]
    counts, edges = histogram(same, "con_norm", bins=4)
    assert counts.tolist() == [2]
    assert len(edges) == 2
    nan_records = [
        bench.TrialRecord(
            trial=0, seed=0, target="h2", con_norm=np.nan, ncon_norm=np.nan,
            opt_norm=np.nan, log_con_ncon=np.nan, log_con_opt=np.nan,
            aposteriori_h2=np.nan, con_seconds=0.0, ncon_seconds=0.0,
            con_iterations=0, ncon_iterations=0, status="error: x",
        )
    ]
    counts, _ = histogram(nan_records, "con_norm", bins=3)
    assert counts.sum() == 0


def test_scalar_curves_grid_and_anchors():
    table = scalar_curves()
    assert table.k.size == 401
    assert table.k[0] == pytest.approx(-2.0) and table.k[-1] == pytest.approx(2.0)
    i0 = int(np.argmin(np.abs(table.k)))
    assert table.k[i0] == pytest.approx(0.0, abs=1e-12)
    # k = 0 leaves the identity map: unit worst-case gain, tight bound.
    assert table.hinf[i0] == pytest.approx(1.0, rel=1e-12)
    assert table.ub_hinf[i0] == pytest.approx(1.0, rel=1e-12)
    assert table.h2[i0] == pytest.approx(100.0, rel=1e-12)


def test_scalar_curves_bounds_dominate():
    table = scalar_curves(horizon=30, k_min=-1.5, k_max=1.5, k_step=0.05)
    assert np.all(table.ub_h2 >= table.h2 * (1 - 1e-9))
    assert np.all(table.ub_hinf >= table.hinf * (1 - 1e-9))


def test_scalar_curves_monotone_in_instability():
    table = scalar_curves(horizon=25, k_min=0.0, k_max=2.0, k_step=0.05)
    for col in (table.h2, table.hinf, table.ub_h2, table.ub_hinf):
        assert np.all(np.diff(col) >= -1e-9 * np.maximum(1.0, col[:-1]))


def test_curve_rescaling_and_csv(tmp_path):
    table = scalar_curves(horizon=10, k_min=-1.0, k_max=1.0, k_step=0.1)
    cols = table.rescaled()
    for name in ("h2", "hinf", "ub_h2", "ub_hinf"):
        assert cols[name].min() == 0.0
        assert cols[name].max() == pytest.approx(1.0)
    path = tmp_path / "curves.csv"
    table.write_csv(str(path))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "h2", "hinf", "ub_h2", "ub_hinf"]
    assert len(rows) == 22
    values = np.array([[float(c) for c in row] for row in rows[1:]])
    assert np.all(values[:, 1:] >= 0.0) and np.all(values[:, 1:] <= 1.0)


def test_scalar_curves_validation():
    with pytest.raises(ValidationError):
        scalar_curves(horizon=1)
    with pytest.raises(ValidationError):
        scalar_curves(k_step=0.0)
    with pytest.raises(ValidationError):
        scalar_curves(k_min=1.0, k_max=0.0)
