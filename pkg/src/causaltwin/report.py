"""SVG/CSV report bundle rendered from stage output files.

Everything is read back from disk so every plotted number traces to a
file in the manifest. SVG output is made reproducible by fixing the
hash salt and dropping the date stamp.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .io import fmt, load_tfd, load_trajectory  # noqa: E402
from .spectral import TfdMatrix, collapse_spectrum  # noqa: E402

SVG_RC = {"svg.hashsalt": "causaltwin", "svg.fonttype": "none", "path.simplify": False}
SUMMARY_COLUMNS = [
    "scenario", "target", "reference_block",
    "band_ratio_baseline", "band_ratio_scenario", "band_ratio_reference",
    "similarity_baseline_reference", "similarity_scenario_reference", "identical_to_baseline",
]


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_trajectories(traj_path: str | Path, out_path: str | Path) -> Path:
    """One SVG with a labeled trace per coupling."""
    steps, errors, traj, labels = load_trajectory(traj_path)
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(8, 4.5))
        for j, label in enumerate(labels):
            ax.plot(steps, traj[:, j], lw=1.0, label=label, gid=f"trace_{j}")
        ax.set_xlabel("sample")
        ax.set_ylabel("smoothed coupling")
        ax.set_title(Path(traj_path).stem)
        ax.legend(loc="upper left", fontsize="small", ncol=2)
        return _save(fig, Path(out_path))


def plot_tfd(tfd: TfdMatrix, out_path: str | Path, title: str = "") -> Path:
    """Heatmap of ``log10`` power with the collapsed spectrum in a side panel."""
    import numpy as np

    spectrum = collapse_spectrum(tfd)
    logp = np.log10(np.maximum(tfd.power, 1e-12))
    extent = [tfd.freq_axis[0], tfd.freq_axis[-1], tfd.time_axis[0], tfd.time_axis[-1]]
    with plt.rc_context(SVG_RC):
        fig, (ax, side) = plt.subplots(
            1, 2, figsize=(9, 4.5), gridspec_kw={"width_ratios": [3, 1]}, sharey=False
        )
        im = ax.imshow(logp, aspect="auto", origin="lower", extent=extent, interpolation="nearest", gid="tfd")
        ax.set_xlabel("frequency")
        ax.set_ylabel("time")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, label="log10 power")
        side.semilogy(tfd.freq_axis, np.maximum(spectrum, 1e-12), lw=1.0, gid="collapsed")
        side.set_xlabel("frequency")
        side.set_title("collapsed")
        return _save(fig, Path(out_path))


def write_summary(summary_json: str | Path, out_path: str | Path) -> Path:
    """Tabulate the scenario summary; values are copied, not recomputed."""
    doc = json.loads(Path(summary_json).read_text())
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in doc["rows"]:
            w.writerow([fmt(row[c]) if isinstance(row[c], float) else row[c] for c in SUMMARY_COLUMNS])
    return Path(out_path)


def emit_report(run_dir: str | Path) -> list[Path]:
    run_dir = Path(run_dir)
    out = run_dir / "report"
    written: list[Path] = []
    trajectories = sorted((run_dir / "train").glob("trajectory_*.csv"))
    tfds = sorted((run_dir / "scenarios").glob("*/tfd_*.csv")) + sorted((run_dir / "tfd").glob("*.csv"))
    summary = run_dir / "scenarios" / "summary.json"
    if not trajectories and not tfds and not summary.exists():
        raise FileNotFoundError(f"{run_dir}: no stage outputs to report on")
    out.mkdir(exist_ok=True)
    for tp in trajectories:
        written.append(plot_trajectories(tp, out / f"{tp.stem}.svg"))
    for fp in tfds:
        name = fp.stem if fp.parent.name == "tfd" else f"{fp.parent.name}_{fp.stem}"
        written.append(plot_tfd(load_tfd(fp), out / f"{name}.svg", title=name))
    if summary.exists():
        written.append(write_summary(summary, out / "summary.csv"))
    return written
