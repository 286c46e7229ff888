"""Trace CSV I/O and iteration performance profiles."""

import csv
import math

import numpy as np

from .solvers import TRACE_COLUMNS, IterationRecord, IterationTrace

_INT_COLUMNS = {"iter", "restarts", "comm_rounds", "master_calls"}


def write_trace_csv(trace, path_or_file):
    """Write a trace with the stable column set ``TRACE_COLUMNS``.

    Floats are written with ``repr`` so every row parses back exactly.
    """
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in trace:
            w.writerow([str(getattr(rec, c)) if c in _INT_COLUMNS else repr(float(getattr(rec, c))) for c in TRACE_COLUMNS])
    finally:
        if own:
            fh.close()


def read_trace_csv(path_or_file):
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, newline="", encoding="utf-8") if own else path_or_file
    try:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
        out = IterationTrace()
        for row in reader:
            out.append(
                IterationRecord(**{c: int(row[c]) if c in _INT_COLUMNS else float(row[c]) for c in TRACE_COLUMNS})
            )
        return out
    finally:
        if own:
            fh.close()


def threshold(F0, Fstar, delta):
    """``F_delta = F* + delta (F0 - F*)``."""
    return Fstar + delta * (F0 - Fstar)


def iterations_to_threshold(F, F0, Fstar, delta):
    """First ``k`` with ``F[k] <= F_delta``, or ``inf`` if never reached."""
    Fd = threshold(F0, Fstar, delta)
    hit = np.flatnonzero(np.asarray(F, dtype=float) <= Fd)
    return int(hit[0]) if hit.size else math.inf


def performance_profile(runs, delta, ks=None):
    """Percentage of runs solved within ``k`` iterations.

    Parameters
    ----------
    runs : sequence of (F, F0, Fstar)
        ``F`` is the objective column of one run.
    delta : float
    ks : array of int, optional
        Evaluation grid; defaults to ``0..max trace length``.

    Returns
    -------
    solved_at : list
        ``I_delta`` per run (``inf`` if unsolved).
    ks : ndarray
    percent : ndarray
        ``100 * |{p : I_delta(p) <= k}| / |P|`` for each ``k``.

    Examples
    --------
    >>> at, ks, pct = performance_profile([([5, 4, 1], 5, 1), ([5, 5, 5], 5, 1)], 0.5)
    >>> at, pct.tolist()
    ([2, inf], [0.0, 0.0, 50.0])
    """
    solved = [iterations_to_threshold(F, F0, Fs, delta) for F, F0, Fs in runs]
    if ks is None:
        kmax = max((len(F) for F, _, _ in runs), default=1)
        ks = np.arange(kmax)
    ks = np.asarray(ks)
    arr = np.array(solved, dtype=float)
    pct = np.array([100.0 * np.mean(arr <= k) for k in ks]) if len(arr) else np.zeros(len(ks))
    return solved, ks, pct
