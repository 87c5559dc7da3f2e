"""CSV output for sweep results plus a companion gnuplot script."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

from .experiment import SweepRow

HEADER = ("scheme", "scenario", "snr_db", "metric", "value", "stderr", "n")


def _num(v: float) -> str:
    return format(v, ".17g")


def emit_results(rows: Iterable[SweepRow], path, plot: bool = True) -> Path:
    """Write ``rows`` as CSV; with ``plot`` also write ``<stem>.gp`` next to it."""
    path = Path(path)
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in rows:
            w.writerow([r.scheme, r.scenario, _num(r.snr_db), r.metric, _num(r.value), _num(r.stderr), r.n])
    if plot:
        write_gnuplot(rows, path)
    return path


def read_results(path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != HEADER:
            raise ValueError(f"{path}: unexpected header")
        return [SweepRow(s, sc, float(snr), m, float(v), float(se), int(n)) for s, sc, snr, m, v, se, n in reader]


def write_gnuplot(rows: list[SweepRow], csv_path: Path) -> Path:
    """Log-scale plot of value vs SNR, one line per scheme (error bars from stderr)."""
    metric = rows[0].metric if rows else "value"
    schemes = list(dict.fromkeys(r.scheme for r in rows))
    gp = csv_path.with_suffix(".gp")
    lines = [
        "set datafile separator ','",
        "set logscale y",
        "set xlabel 'SNR (dB)'",
        f"set ylabel '{metric.upper()}'",
        "set key bottom left",
        "set grid",
        f"set terminal pngcairo size 800,600",
        f"set output '{csv_path.stem}.png'",
    ]
    plots = [
        f"'{csv_path.name}' using (strcol(1) eq '{s}' ? $3 : 1/0):5:6 with yerrorlines title '{s}'"
        for s in schemes
    ]
    lines.append("plot " + ", \\\n     ".join(plots) if plots else "# no results")
    gp.write_text("\n".join(lines) + "\n")
    return gp
