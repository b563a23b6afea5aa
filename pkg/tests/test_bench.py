import math

import numpy as np
import pandas as pd
import pytest

import main
from app.bench.emit import emit, read_records, records_to_frame, usable_rows
from app.bench.harness import SweepHarness, l2_time_space_error
from app.discretization.sipg import assemble_mass
from app.errors import ConfigurationError, DependentBasisError
from app.models.sweep import CORE_COLUMNS, RECORD_COLUMNS, TIMING_COLUMNS, SweepConfig, SweepRecord
from app.models.trajectory import Trajectory
from app.reduction.enrichment import baseline


@pytest.fixture
def mass(small_space):
    return assemble_mass(small_space)


def _records(methods=("BPOD", "SAIM"), kinds=("YP",), ranks=(4,)):
    grid = [1.0 / r for r in range(80, 125, 5)]
    records = []
    # Reverse order so emission has to sort
    for eps in reversed(grid):
        for method in methods:
            for kind in kinds:
                for rank in ranks:
                    records.append(SweepRecord(epsilon=eps, method=method, kind=kind, l=rank,
                                               state_err=eps * 0.1 / rank, control_err=eps * 0.2,
                                               t_reduced=0.01, t_full=1.0))
    return records


def test_error_of_identical_trajectories(small_space, mass, rng):
    values = rng.standard_normal((7, small_space.n_dofs))
    traj = Trajectory(values, 1.0 / 6.0)
    assert l2_time_space_error(traj, traj, mass) == 0.0


def test_error_of_unit_shift(small_space, mass):
    ones = small_space.interpolate_constant(1.0)
    zero = Trajectory.zeros(10, small_space.n_dofs, 0.1)
    shifted = Trajectory(np.tile(ones, (11, 1)), 0.1)
    assert l2_time_space_error(shifted, zero, mass) == pytest.approx(1.0, rel=1e-12)


def test_error_uses_trapezoidal_weights(small_space, mass):
    ones = small_space.interpolate_constant(1.0)
    values = np.zeros((61, small_space.n_dofs))
    values[-1] = ones
    error = l2_time_space_error(values, np.zeros_like(values), mass, k=1.0 / 60.0)
    assert error == pytest.approx(math.sqrt(1.0 / 120.0), rel=1e-12)


def test_error_argument_checks(small_space, mass):
    a = np.zeros((4, small_space.n_dofs))
    with pytest.raises(ValueError):
        l2_time_space_error(a, a[:-1], mass, k=0.1)
    with pytest.raises(ValueError):
        l2_time_space_error(a, a, mass)


def test_record_row_order():
    record = SweepRecord(epsilon=0.01, method="ExtPOD", kind="P", l=3, state_err=1e-3)
    row = record.to_row()
    assert list(row) == RECORD_COLUMNS
    assert not record.failed
    assert math.isnan(row["t_full"])
    record.error = "SolverError: singular"
    assert record.failed


@pytest.mark.parametrize("changes", [
    {"grid": []},
    {"grid": [0.01, -0.01]},
    {"rank": None},
    {"gamma": 1e-2},
    {"gamma": 1.5, "rank": None},
    {"rank": 0},
    {"ranks": []},
    {"ranks": [4, 4]},
    {"ranks": [0, 3]},
    {"gradient_checks": -1},
    {"sensitivity_method": "AD"},
    {"jobs": 0},
    {"subdivisions": 0},
    {"grid": [1.0 / 200.0]},
    {"saim_anchors": (0.01, 0.01)},
])
def test_sweep_config_validation(changes):
    config = SweepConfig(**changes)
    with pytest.raises(ConfigurationError):
        config.validate()


def test_anchors_only_checked_for_saim():
    config = SweepConfig(grid=[1.0 / 200.0], methods=["BPOD"])
    assert config.validate() is config


def test_default_sweep_grid():
    config = SweepConfig().validate()
    assert len(config.grid) == 9
    assert config.grid[0] == pytest.approx(1.0 / 80.0)
    assert config.grid[-1] == pytest.approx(1.0 / 120.0)


def test_records_to_frame_sorts():
    frame = records_to_frame(_records())
    assert list(frame.columns) == RECORD_COLUMNS
    assert len(frame) == 18
    keys = list(zip(frame["epsilon"], frame["method"], frame["kind"]))
    assert keys == sorted(keys)
    with pytest.raises(ValueError):
        records_to_frame([])


def test_emit_writes_csv_and_plotdata(tmp_path):
    paths = emit(_records(), tmp_path)
    csv = tmp_path / "sweep.csv"
    assert csv in paths
    with open(csv) as f:
        assert f.readline().strip() == ",".join(RECORD_COLUMNS)
    frame = read_records(csv)
    assert len(frame) == 18

    plotdata = sorted((tmp_path / "plotdata").glob("*.dat"))
    assert [p.name for p in plotdata] == ["BPOD_YP.dat", "SAIM_YP.dat"]
    lines = plotdata[0].read_text().splitlines()
    assert lines[0] == "# inv_eps state_err control_err"
    data = np.loadtxt(plotdata[0])
    assert data.shape == (9, 3)
    np.testing.assert_allclose(data[:, 0], np.arange(80, 125, 5), rtol=1e-9)
    np.testing.assert_allclose(data[:, 1], 0.025 / data[:, 0], rtol=1e-9)


def test_emit_spectrum(tmp_path):
    table = np.column_stack([np.arange(1, 5), [4.0, 2.0, 1.0, 0.5], [0.1, -0.2, np.nan, np.nan]])
    paths = emit(_records(), tmp_path, formats=("csv",), spectrum={"YP": table})
    spectrum = tmp_path / "spectrum" / "spectrum_YP.dat"
    assert spectrum in paths
    data = np.loadtxt(spectrum)
    assert data.shape == (4, 3)
    np.testing.assert_allclose(data[:2, 2], [0.1, -0.2])
    assert np.all(np.isnan(data[2:, 2]))


def test_emit_rejects_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        emit(_records(), tmp_path, formats=("xlsx",))


def test_read_records_requires_columns(tmp_path):
    path = tmp_path / "broken.csv"
    pd.DataFrame({"epsilon": [0.01], "method": ["BPOD"]}).to_csv(path, index=False)
    with pytest.raises(ValueError):
        read_records(path)



def test_record_status():
    record = SweepRecord(epsilon=0.01, method="BPOD", kind="Y", l=5)
    assert record.rank == 5
    assert record.converged and record.usable
    assert math.isnan(record.sensitivity_seconds)
    record.converged = False
    assert not record.usable and not record.failed


def test_rank_rules():
    assert SweepConfig().rank_rules() == [(9, None)]
    assert SweepConfig(rank=None, gamma=0.05).rank_rules() == [(None, 0.05)]
    config = SweepConfig(ranks=[3, 6], rank=None).validate()
    assert config.rank_rules() == [(3, None), (6, None)]


def test_read_records_fills_status_columns(tmp_path):
    path = tmp_path / "core.csv"
    frame = records_to_frame(_records())
    frame[CORE_COLUMNS].to_csv(path, index=False)
    frame = read_records(path)
    assert list(frame.columns) == RECORD_COLUMNS
    assert (frame["rank"] == frame["l"]).all()
    assert frame["converged"].all() and frame["error"].isna().all()


def test_plotdata_leaves_out_unconverged_and_failed_rows(tmp_path):
    records = _records(methods=("BPOD",))
    records[0].converged = False
    records[1].error = "SolverError: singular"
    frame = records_to_frame(records)
    assert len(usable_rows(frame)) == 7
    (path,) = emit(frame, tmp_path, formats=("plotdata",))
    assert np.loadtxt(path).shape == (7, 3)


def test_unconverged_rows_survive_the_csv(tmp_path):
    records = _records(methods=("BPOD",))
    records[0].converged = False
    emit(records, tmp_path, formats=("csv",))
    frame = read_records(tmp_path / "sweep.csv")
    assert frame["converged"].sum() == 8
    assert not frame.loc[frame["epsilon"].idxmin(), "converged"]


def test_plotdata_over_a_rank_axis(tmp_path):
    emit(_records(methods=("BPOD",), ranks=(3, 6)), tmp_path, formats=("plotdata",))
    names = sorted(p.name for p in (tmp_path / "plotdata").glob("*.dat"))
    assert "BPOD_YP_l3.dat" in names and "BPOD_YP_l6.dat" in names
    assert "BPOD_YP.dat" not in names
    assert len([n for n in names if "_vs_rank_" in n]) == 9

    by_rank = tmp_path / "plotdata" / "BPOD_YP_vs_rank_80.dat"
    assert by_rank.read_text().splitlines()[0] == "# rank state_err control_err"
    data = np.loadtxt(by_rank)
    np.testing.assert_allclose(data[:, 0], [3, 6])
    np.testing.assert_allclose(data[:, 1], [0.1 / 80 / 3, 0.1 / 80 / 6], rtol=1e-9)

@pytest.fixture(scope="module")
def desk_sweep(desk_setup):
    config = SweepConfig(subdivisions=8, time_steps=12, grid=[1.0e-2], methods=["BPOD", "ExtPOD"],
                         kinds=["YP"], gamma=1e-2, rank=None, sensitivity_method="CSE")
    harness = SweepHarness(config, desk_setup)
    return harness, harness.run()


@pytest.mark.slow
def test_extrapolation_at_the_nominal_value_is_the_baseline(desk_sweep):
    _, records = desk_sweep
    assert [r.method for r in records] == ["BPOD", "ExtPOD"]
    assert not any(r.failed for r in records)
    bpod, extpod = records
    assert extpod.l == bpod.l
    assert extpod.state_err == pytest.approx(bpod.state_err, rel=1e-10)
    assert extpod.control_err == pytest.approx(bpod.control_err, rel=1e-10)


@pytest.mark.slow
def test_benchmark_solution_is_reused(desk_sweep):
    harness, records = desk_sweep
    first = harness.full_solution(1.0e-2)
    assert harness.full_solution(1.0e-2) is first
    assert all(r.t_full == first.stats.wall_time for r in records)


@pytest.mark.slow
def test_spectrum_table(desk_sweep):
    harness, _ = desk_sweep
    table = harness.spectrum()["YP"]
    rank = harness.bases[next(iter(harness.bases))].rank
    assert table.shape[1] == 3
    assert np.all(np.isfinite(table[:rank, 2]))
    assert np.all(np.diff(table[:, 1]) <= 0.0)


@pytest.mark.slow
def test_sweep_is_deterministic(desk_setup, desk_sweep):
    _, records = desk_sweep
    config = SweepConfig(subdivisions=8, time_steps=12, grid=[1.0e-2], methods=["BPOD", "ExtPOD"],
                         kinds=["YP"], gamma=1e-2, rank=None, sensitivity_method="CSE")
    again = SweepHarness(config, desk_setup).run()
    first = records_to_frame(records).drop(columns=TIMING_COLUMNS)
    second = records_to_frame(again).drop(columns=TIMING_COLUMNS)
    pd.testing.assert_frame_equal(first, second)


@pytest.mark.slow
def test_failed_cell_is_recorded(desk_setup, monkeypatch):
    config = SweepConfig(subdivisions=8, time_steps=12, grid=[1.0e-2], methods=["BPOD"],
                         kinds=["Y", "P"], gamma=1e-2, rank=None)
    harness = SweepHarness(config, desk_setup)

    def build_basis(method, kind, epsilon, index=0):
        if kind.value == "P":
            raise DependentBasisError("collapsed", column=2)
        return baseline(harness.bases[kind, index], epsilon)

    monkeypatch.setattr(harness, "build_basis", build_basis)
    records = harness.run()
    assert [r.kind for r in records] == ["P", "Y"]
    failed, passed = records
    assert failed.failed and failed.error == "DependentBasisError: collapsed"
    assert not failed.converged and not failed.usable
    assert math.isnan(failed.state_err)
    assert not passed.failed and np.isfinite(passed.state_err)


@pytest.mark.slow
def test_unconverged_solves_are_flagged(desk_setup, tmp_path):
    config = SweepConfig(subdivisions=8, time_steps=12, grid=[1.0 / 80.0], methods=["BPOD"],
                         kinds=["Y"], gamma=1e-2, rank=None)
    options = {"max_iter": 1, "cg_max_iter": 1}
    (record,) = SweepHarness(config, desk_setup, optimizer_options=options).run()
    assert not record.failed
    assert not record.converged
    assert np.isfinite(record.state_err)

    emit([record], tmp_path)
    frame = read_records(tmp_path / "sweep.csv")
    assert not frame["converged"].any()
    assert not list((tmp_path / "plotdata").glob("*.dat"))
    assert main._report([record]) == 1


@pytest.mark.slow
def test_rank_axis_sweep(desk_setup):
    config = SweepConfig(subdivisions=8, time_steps=12, grid=[1.0e-2], methods=["BPOD", "ExtPOD"],
                         kinds=["Y"], rank=None, ranks=[2, 1], sensitivity_method="CSE")
    harness = SweepHarness(config, desk_setup)
    records = harness.run()
    assert [(r.method, r.rank) for r in records] == [("BPOD", 1), ("BPOD", 2), ("ExtPOD", 1), ("ExtPOD", 2)]
    assert all(r.usable for r in records)
    assert all(math.isnan(r.sensitivity_seconds) for r in records[:2])
    assert all(r.sensitivity_seconds > 0.0 for r in records[2:])
    assert harness.spectrum()["Y"].shape[1] == 3


@pytest.mark.slow
def test_gradient_check_uses_the_seed(desk_setup):
    config = SweepConfig(subdivisions=8, time_steps=12, grid=[1.0e-2], methods=["BPOD"],
                         kinds=["Y"], gamma=1e-2, rank=None, seed=7, gradient_checks=2)
    harness = SweepHarness(config, desk_setup)
    harness.prepare()
    assert harness.gradient_errors.shape == (2,)
    assert np.all(harness.gradient_errors < 1e-5)
