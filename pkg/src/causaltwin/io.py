"""Text file formats: series blocks, coupling tables, trajectories, TFDs.

Floats are written with 17 significant digits so every file round-trips
exactly. Tabular outputs carry a JSON sidecar (``<name>.json``) with
metadata.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import CausalGraph, CouplingSet, ParamLayout, graph_to_dict
from .spectral import TfdMatrix
from .svar import MultichannelSeries

FLOAT_FMT = "%.17g"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def fmt(x: float) -> str:
    return FLOAT_FMT % x


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: str | Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sidecar(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


# -- series blocks ----------------------------------------------------------


def load_block(path: str | Path, expected_channels: int | None = None,
               sample_rate: float | None = None) -> MultichannelSeries:
    """Read whitespace-separated numeric columns, one row per sample.

    An optional first line ``# label label ... [sample_rate=<hz>]`` names
    the channels. Headerless files (the NASA bearing layout) get default
    labels and ``G`` from the column count. Blank lines are skipped.
    """
    labels: list[str] = []
    rows: list[list[float]] = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                if rows:
                    continue
                for tok in text[1:].split():
                    if tok.startswith("sample_rate="):
                        sample_rate = float(tok.split("=", 1)[1])
                    else:
                        labels.append(tok)
                continue
            cells = text.split()
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DataError(f"{path}: row {lineno} has {len(cells)} columns, expected {width}")
            row = []
            for col, cell in enumerate(cells, start=1):
                try:
                    row.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: non-numeric cell {cell!r} at row {lineno}, column {col}") from None
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    if expected_channels is not None and width != expected_channels:
        raise DataError(f"{path}: {width} channels, expected {expected_channels}")
    if labels and len(labels) != width:
        raise DataError(f"{path}: header names {len(labels)} channels, data has {width}")
    try:
        return MultichannelSeries(np.array(rows), sample_rate, tuple(labels))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def select_columns(series: MultichannelSeries, columns: Sequence[int], source="series") -> MultichannelSeries:
    """Keep the given 1-based columns, in order (e.g. one sensor per bearing).

    The result gets default labels so it lines up with a graph over
    ``len(columns)`` nodes.
    """
    idx = [int(c) - 1 for c in columns]
    if any(not 0 <= i < series.n_channels for i in idx):
        raise DataError(f"{source}: columns {list(columns)} outside 1..{series.n_channels}")
    return MultichannelSeries(series.data[:, idx], series.sample_rate)


def save_block(series: MultichannelSeries, path: str | Path, header: bool = True) -> None:
    with open(path, "w") as fh:
        if header:
            head = " ".join(series.channel_labels)
            if series.sample_rate is not None:
                head += f" sample_rate={fmt(series.sample_rate)}"
            fh.write(f"# {head}\n")
        for row in series.data:
            fh.write(" ".join(fmt(v) for v in row))
            fh.write("\n")


# -- coupling tables --------------------------------------------------------

COUPLING_COLUMNS = ["lag", "effect", "cause", "k"]


def save_couplings(path: str | Path, couplings: CouplingSet, graph: CausalGraph,
                   meta: dict | None = None) -> None:
    """One row per graph edge (ParamLayout order) plus a JSON sidecar."""
    layout = ParamLayout.from_graph(graph)
    labels = graph.node_labels
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COUPLING_COLUMNS)
        for m, e, c in layout.triples:
            w.writerow([m, labels[e], labels[c], fmt(couplings[m][e, c])])
    doc = {"graph": graph_to_dict(graph)}
    doc.update(meta or {})
    write_json(sidecar(path), doc)


def load_couplings(path: str | Path, graph: CausalGraph) -> CouplingSet:
    a = np.zeros((graph.lag_order + 1, graph.node_count, graph.node_count))
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:4] != COUPLING_COLUMNS:
            raise DataError(f"{path}: expected columns {COUPLING_COLUMNS}")
        for row in reader:
            m = int(row["lag"])
            e, c = graph.index(row["effect"]), graph.index(row["cause"])
            if (c, e) not in graph.edges(m):
                raise DataError(f"{path}: edge {row['cause']}->{row['effect']} lag {m} not in graph")
            a[m, e, c] = float(row["k"])
    return CouplingSet(a)


# -- learner trajectories ---------------------------------------------------


def save_trajectory(path: str | Path, steps, errors, trajectory, labels: Sequence[str],
                    meta: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "E", *labels])
        for n, err, row in zip(steps, errors, trajectory):
            w.writerow([int(n), fmt(err), *(fmt(v) for v in row)])
    if meta is not None:
        write_json(sidecar(path), meta)


def load_trajectory(path: str | Path):
    """Return ``(steps, errors, trajectory, labels)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return arr[:, 0].astype(int), arr[:, 1], arr[:, 2:], header[2:]


# -- TFD matrices -----------------------------------------------------------


def save_tfd(path: str | Path, tfd: TfdMatrix) -> None:
    """First row: frequency axis (leading cell ``time\\freq``); then one
    row per slice led by its time stamp."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time\\freq", *(fmt(f) for f in tfd.freq_axis)])
        for t, row in zip(tfd.time_axis, tfd.power):
            w.writerow([fmt(t), *(fmt(v) for v in row)])
    write_json(sidecar(path), {
        "window_len": tfd.window_len, "hop": tfd.hop, "nfft": tfd.nfft, "window": tfd.window,
    })


def load_tfd(path: str | Path) -> TfdMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    freq = np.array(rows[0][1:], dtype=float)
    body = np.array([r for r in rows[1:] if r], dtype=float)
    meta_path = sidecar(path)
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return TfdMatrix(
        body[:, 1:], body[:, 0], freq,
        meta.get("window_len", 0), meta.get("hop", 0), meta.get("nfft", 2 * (freq.size - 1)),
        meta.get("window", "unknown"),
    )
