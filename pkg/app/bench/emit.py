"""
Result emission for parameter sweeps.

Writes the sorted record table as CSV, whitespace-separated plot data per
(method, kind) with columns 1/eps, state error and control error (and per
rank when the sweep has a rank axis), and the baseline spectra with their
sensitivities.
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from app.models.sweep import CORE_COLUMNS, RECORD_COLUMNS, SweepRecord
from app.utils.helpers import create_directory_if_not_exists

logger = logging.getLogger("sensipod.bench.emit")

FLOAT_FORMAT = "%.10e"


def records_to_frame(records):
    """Sorted DataFrame of sweep records in the emitted column order"""
    records = list(records)
    if not records:
        raise ValueError("No records to emit")
    rows = [r.to_row() for r in sorted(records, key=SweepRecord.sort_key)]
    return pd.DataFrame(rows, columns=RECORD_COLUMNS)


def read_records(path):
    """Read an emitted CSV back into a DataFrame; tables without the status columns are accepted"""
    frame = pd.read_csv(path)
    missing = [c for c in CORE_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path} lacks columns {missing}")
    if "rank" not in frame.columns:
        frame["rank"] = frame["l"]
    if "sensitivity_seconds" not in frame.columns:
        frame["sensitivity_seconds"] = np.nan
    if "converged" not in frame.columns:
        frame["converged"] = True
    if "error" not in frame.columns:
        frame["error"] = None
    return frame[RECORD_COLUMNS]


def usable_rows(frame):
    """Rows whose cell converged and did not raise"""
    mask = frame["converged"].astype(bool) & frame["error"].isna()
    return frame[mask]


def write_csv(frame, path):
    """Write the record table"""
    path = Path(path)
    create_directory_if_not_exists(path.parent)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {len(frame)} records to {path}")
    return path


def _write_columns(path, header, frame):
    with open(path, "w") as f:
        f.write("# " + " ".join(header) + "\n")
        frame.to_csv(f, sep=" ", header=False, index=False, float_format=FLOAT_FORMAT, na_rep="nan")


def _error_table(axis, values, group):
    return pd.DataFrame({
        axis: values,
        "state_err": group["state_err"].to_numpy(dtype=float),
        "control_err": group["control_err"].to_numpy(dtype=float),
    }).sort_values(axis)


def write_plotdata(frame, directory):
    """
    Error tables per (method, kind), rows by increasing 1/eps.
    A sweep with a single rank writes <method>_<kind>.dat; over a rank axis
    each rank gets <method>_<kind>_l<rank>.dat and each grid value an
    error-vs-rank table <method>_<kind>_vs_rank_<1/eps>.dat.
    Failed and non-converged rows are left out.
    """
    directory = create_directory_if_not_exists(directory)
    usable = usable_rows(frame)
    if len(usable) < len(frame):
        logger.warning(f"Left {len(frame) - len(usable)} failed or non-converged rows out of the plot data")

    paths = []
    for (method, kind), group in usable.groupby(["method", "kind"], sort=True):
        ranks = sorted(int(r) for r in group["rank"].unique())
        if len(ranks) == 1:
            data = _error_table("inv_eps", 1.0 / group["epsilon"].to_numpy(dtype=float), group)
            path = directory / f"{method}_{kind}.dat"
            _write_columns(path, list(data.columns), data)
            paths.append(path)
            continue
        for rank, by_rank in group.groupby("rank", sort=True):
            data = _error_table("inv_eps", 1.0 / by_rank["epsilon"].to_numpy(dtype=float), by_rank)
            path = directory / f"{method}_{kind}_l{int(rank)}.dat"
            _write_columns(path, list(data.columns), data)
            paths.append(path)
        for epsilon, by_eps in group.groupby("epsilon", sort=True):
            data = _error_table("rank", by_eps["rank"].to_numpy(dtype=int), by_eps)
            path = directory / f"{method}_{kind}_vs_rank_{1.0 / epsilon:.6g}.dat"
            _write_columns(path, list(data.columns), data)
            paths.append(path)
    logger.info(f"Wrote {len(paths)} plot data files to {directory}")
    return paths


def write_spectrum(spectrum, directory):
    """One file spectrum_<kind>.dat with index, sigma^2 and lambda_mu"""
    directory = create_directory_if_not_exists(directory)
    paths = []
    for kind, table in sorted(spectrum.items()):
        table = np.asarray(table, dtype=float)
        data = pd.DataFrame({
            "index": table[:, 0].astype(int),
            "sigma2": table[:, 1],
            "lambda_mu": table[:, 2],
        })
        path = directory / f"spectrum_{kind}.dat"
        _write_columns(path, list(data.columns), data)
        paths.append(path)
    return paths


def emit(records, out_dir, formats=("csv", "plotdata"), spectrum=None, name="sweep.csv"):
    """Write the requested formats for a record list or frame; returns the written paths"""
    frame = records if isinstance(records, pd.DataFrame) else records_to_frame(records)
    if frame.empty:
        raise ValueError("No records to emit")
    out_dir = create_directory_if_not_exists(out_dir)

    paths = []
    for fmt in formats:
        if fmt == "csv":
            paths.append(write_csv(frame, out_dir / name))
        elif fmt == "plotdata":
            paths.extend(write_plotdata(frame, out_dir / "plotdata"))
        else:
            raise ValueError(f"Unknown output format {fmt!r}")
    if spectrum:
        paths.extend(write_spectrum(spectrum, out_dir / "spectrum"))
    return paths
