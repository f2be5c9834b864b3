"""Synthetic multi-block datasets with scheduled coupling drift.

Stands in for the day-by-day run-to-failure recordings: each block is
drawn from its own coupling set, and a schedule ramps selected couplings
linearly from the first block to the last.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import CausalGraph, CouplingSet, GraphError
from .io import save_block, save_couplings
from .svar import MultichannelSeries, NoiseSpec, UnstableSystemError, companion_spectral_radius, \
    generate_series, STABILITY_LIMIT


@dataclass(frozen=True)
class Ramp:
    cause: int
    effect: int
    lag: int
    start: float
    stop: float


@dataclass(frozen=True)
class SynthSpec:
    graph: CausalGraph
    couplings: CouplingSet
    noise: NoiseSpec
    n_blocks: int = 1
    n_samples: int = 10000
    schedule: tuple[Ramp, ...] = ()
    burn_in: int | None = None
    sample_rate: float | None = None


def block_seed(seed: int, block: int) -> int:
    return int(np.random.SeedSequence([seed, block]).generate_state(1, dtype=np.uint64)[0])


def block_couplings(spec: SynthSpec, block: int) -> CouplingSet:
    a = np.array(spec.couplings.matrices)
    frac = block / (spec.n_blocks - 1) if spec.n_blocks > 1 else 0.0
    for r in spec.schedule:
        if (r.cause, r.effect) not in spec.graph.edges(r.lag):
            raise GraphError(f"scheduled edge {r.cause + 1}->{r.effect + 1} lag {r.lag} not in graph")
        a[r.lag, r.effect, r.cause] = r.start + frac * (r.stop - r.start)
    return CouplingSet(a)


def generate_blocks(spec: SynthSpec) -> list[tuple[MultichannelSeries, CouplingSet]]:
    sets = [block_couplings(spec, b) for b in range(spec.n_blocks)]
    # check every schedule point before drawing anything
    for b, cs in enumerate(sets):
        radius = companion_spectral_radius(cs)
        if radius >= STABILITY_LIMIT:
            raise UnstableSystemError(f"block {b}: companion spectral radius {radius:.6f}")
    out = []
    for b, cs in enumerate(sets):
        noise = NoiseSpec(spec.noise.kind, spec.noise.scale, block_seed(spec.noise.seed, b))
        series = generate_series(spec.graph, cs, noise, spec.n_samples, spec.burn_in, spec.sample_rate)
        out.append((series, cs))
    return out


def synth_dataset(spec: SynthSpec, out_dir: str | Path) -> list[tuple[Path, Path]]:
    """Write ``block_XX.txt`` and ``truth_XX.csv`` per block; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for b, (series, cs) in enumerate(generate_blocks(spec)):
        data_path = out_dir / f"block_{b:02d}.txt"
        truth_path = out_dir / f"truth_{b:02d}.csv"
        save_block(series, data_path)
        save_couplings(truth_path, cs, spec.graph, {"source": "truth", "block": b})
        paths.append((data_path, truth_path))
    return paths
