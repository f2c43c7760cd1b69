"""CSV reports and the plot script of a sweep.

Floats are written with ``%.17g`` so a report reproduces the computed values
bit for bit; nothing time dependent is ever written into a CSV body.
"""
import os

import pandas as pd

from .exceptions import MissingArtifactError
from .tensor import EffectiveTensor
from .twoscale import COLUMNS

FLOAT_FORMAT = "%.17g"
SWEEP_CSV = "sweep.csv"
SWEEP_SUMMARY_CSV = "sweep_summary.csv"
PLOT_SCRIPT = "sweep.gp"


def write_csv(frame, path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def sweep_frame(report):
    frame = report.to_frame()
    frame.insert(1, "eps_value", [float(e) for e in report.eps])
    frame["eps"] = [str(e) for e in report.eps]
    return frame


def summary_frame(report):
    rows = [
        ("complete", report.complete),
        ("degenerate", report.degenerate),
        ("slope", "" if report.slope is None else report.slope),
        ("alpha", report.alpha),
        ("tensor_alpha0", report.tensor.alpha0 if report.tensor is not None else ""),
        (
            "tensor_consistency_gap",
            ""
            if report.tensor is None or report.tensor.consistency_gap is None
            else report.tensor.consistency_gap,
        ),
    ]
    rows.extend(("homog_" + key, value) for key, value in sorted(report.homog.items()))
    return pd.DataFrame(rows, columns=["key", "value"])


def tensor_frame(tensor, field=None, n_cell=None):
    """One row per entry; ``field`` and ``n_cell`` record where the tensor came
    from so :func:`read_tensor` can refuse a stale file."""
    gap = tensor.consistency_gap
    source = dict(field="" if field is None else repr(field), n_cell=n_cell or 0)
    rows = [
        dict(i=i, j=j, k=k, h=h, value=value, consistency_gap=gap, **source)
        for (i, j, k, h), value in tensor.entries()
    ]
    return pd.DataFrame(
        rows, columns=["i", "j", "k", "h", "value", "consistency_gap", "field", "n_cell"]
    )


def read_tensor(path, field=None, n_cell=None):
    """Load a tensor CSV written from :func:`tensor_frame`.

    :param field: When given, the coefficient field the tensor must belong to.
    :param n_cell: When given, the cell lattice it must have been solved on.
    :raises MissingArtifactError: The file is missing or belongs to another
                                  field or lattice.
    """
    if not os.path.exists(path):
        raise MissingArtifactError("no tensor file {}".format(path))
    frame = pd.read_csv(
        path, float_precision="round_trip", dtype={"field": str}, keep_default_na=False
    )
    if field is not None or n_cell is not None:
        stored_field = frame["field"].iloc[0] if "field" in frame else ""
        stored_n = int(frame["n_cell"].iloc[0]) if "n_cell" in frame else 0
        if field is not None and stored_field != repr(field):
            raise MissingArtifactError(
                "{} was assembled for {!r}, not {!r}".format(path, stored_field, field)
            )
        if n_cell is not None and stored_n != n_cell:
            raise MissingArtifactError(
                "{} was assembled on n_cell={}, not {}".format(path, stored_n, n_cell)
            )
    entries = {
        (int(r.i), int(r.j), int(r.k), int(r.h)): float(r.value) for r in frame.itertuples()
    }
    gap = frame["consistency_gap"].iloc[0] if "consistency_gap" in frame else None
    # an empty column reads back as strings
    gap = None if gap is None or isinstance(gap, str) or pd.isna(gap) else float(gap)
    return EffectiveTensor.from_entries(entries, consistency_gap=gap)


def corrector_frame(chi):
    rows = [
        dict(
            i=entry.i,
            k=entry.k,
            n_cell=entry.n_cell,
            iterations=entry.iterations,
            residual=entry.residual,
            max_abs=float(abs(entry.velocity).max()),
        )
        for entry in chi
    ]
    return pd.DataFrame(rows, columns=["i", "k", "n_cell", "iterations", "residual", "max_abs"])


def trajectory_frame(traj, stride=0):
    """Per-time-level norms of a trajectory: every ``stride``-th level and the
    final one (only the final one when ``stride`` is 0)."""
    grid = traj.grid
    last = len(traj) - 1
    levels = [last] if not stride else sorted(set(range(0, last + 1, stride)) | {last})
    rows = []
    for index in levels:
        state = traj[index]
        rows.append(
            dict(
                step=index,
                t=state.t,
                velocity_l2=grid.inner(state.u, state.u) ** 0.5,
                pressure_l2=(float((state.p ** 2).sum()) * grid.h ** 2) ** 0.5,
                divergence=state.divergence(grid),
                pressure_mean=state.pressure_mean(),
            )
        )
    return pd.DataFrame(
        rows, columns=["step", "t", "velocity_l2", "pressure_l2", "divergence", "pressure_mean"]
    )


def plot_script(csv_name=SWEEP_CSV):
    """A gnuplot script drawing the log-log error curves of a sweep CSV."""
    col = {name: COLUMNS.index(name) + 2 for name in COLUMNS}
    return "\n".join(
        [
            "set datafile separator ','",
            "set logscale xy",
            "set key top left autotitle columnhead",
            "set xlabel 'eps'",
            "set ylabel 'error'",
            "set terminal pngcairo size 800,600",
            "set output 'sweep.png'",
            "plot '{0}' using 2:{1} with linespoints title 'L2(Q) velocity', \\".format(
                csv_name, col["l2q_error"]
            ),
            "     '{0}' using 2:{1} with linespoints title 'gradient', \\".format(
                csv_name, col["gradient_error"]
            ),
            "     '{0}' using 2:{1} with linespoints title 'corrected gradient'".format(
                csv_name, col["corrector_error"]
            ),
            "",
        ]
    )


def write_sweep(report, directory):
    """Write the sweep CSV, its summary and the plot script into ``directory``.

    :return: The list of written paths.
    """
    os.makedirs(directory, exist_ok=True)
    paths = [
        write_csv(sweep_frame(report), os.path.join(directory, SWEEP_CSV)),
        write_csv(summary_frame(report), os.path.join(directory, SWEEP_SUMMARY_CSV)),
    ]
    path = os.path.join(directory, PLOT_SCRIPT)
    with open(path, "w") as f:
        f.write(plot_script())
    paths.append(path)
    return paths


def read_sweep(directory):
    """Load a sweep CSV written by :func:`write_sweep`."""
    return pd.read_csv(
        os.path.join(directory, SWEEP_CSV), dtype={"eps": str}, float_precision="round_trip"
    )
