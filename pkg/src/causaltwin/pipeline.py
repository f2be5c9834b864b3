"""Experiment configuration and the staged ``run`` pipeline.

Stages: validate graph -> data (load or synthesize) -> train / fit per
block -> scenarios (what-if, counterfactual) -> TFDs -> report. Every
output goes under the configured output directory and is listed with its
checksum in ``manifest.json``. Wall-clock times go to ``timings.json``,
outside the manifest, so manifests of identical runs are byte-identical.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import ols_svar_fit
from .graph import CausalGraph, CouplingSet, GraphError, load_graph, validate_graph
from .imrnns import NetworkConfig, train_online
from .io import DataError, load_block, load_couplings, save_block, save_couplings, save_tfd, save_trajectory, \
    select_columns, sha256, write_json
from .spectral import band_power_ratio, collapse_spectrum, spectral_similarity, spectrogram
from .svar import NoiseSpec, counterfactual_remove, whatif_run
from .synth import Ramp, SynthSpec, synth_dataset

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class TfdParams:
    window_len: int = 256
    hop: int = 128
    nfft: int = 256
    window: str = "hann"
    split_freq: float = 0.15
    channels: list[str] = field(default_factory=list)


@dataclass
class Scenario:
    name: str
    kind: str  # "whatif" | "counterfactual"
    targets: list[str]
    block: int = 0
    couplings_from: str = "fit"  # "fit" | "train" | "truth"
    overrides: list[dict] = field(default_factory=list)
    remove: dict = field(default_factory=dict)
    reference_block: int | None = None
    closed_loop: bool = False


@dataclass
class ExperimentConfig:
    graph: Path
    data: dict
    output_dir: Path
    seed: int = 0
    learner: NetworkConfig = field(default_factory=NetworkConfig)
    train: bool = True
    fit: bool = True
    carry_over: bool = False
    scenarios: list[Scenario] = field(default_factory=list)
    tfd: TfdParams = field(default_factory=TfdParams)
    report: bool = True
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _pick(cls, doc: dict, what: str):
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown {what} field(s): {sorted(unknown)}")
    return cls(**doc)


def config_from_dict(doc: dict, base_dir: Path = Path("."), output_dir: str | None = None) -> ExperimentConfig:
    try:
        graph = doc["graph"]
        data = doc["data"]
    except KeyError as exc:
        raise ConfigError(f"config missing field {exc}") from None
    out = output_dir or doc.get("output_dir")
    if out is None:
        raise ConfigError("no output_dir in config or on the command line")
    learner = dict(doc.get("learner", {}))
    learner.setdefault("seed", doc.get("seed", 0))
    stages = doc.get("stages", {})
    cfg = ExperimentConfig(
        graph=Path(graph),
        data=data,
        output_dir=Path(out),
        seed=int(doc.get("seed", 0)),
        learner=_pick(NetworkConfig, learner, "learner"),
        train=bool(stages.get("train", True)),
        fit=bool(stages.get("fit", True)),
        carry_over=bool(doc.get("carry_over", False)),
        scenarios=[_pick(Scenario, s, "scenario") for s in doc.get("scenarios", [])],
        tfd=_pick(TfdParams, doc.get("tfd", {}), "tfd"),
        report=bool(doc.get("report", True)),
        base_dir=base_dir,
        raw={k: v for k, v in doc.items() if k != "output_dir"},
    )
    if not cfg.output_dir.is_absolute():
        cfg.output_dir = Path.cwd() / cfg.output_dir if output_dir else base_dir / cfg.output_dir
    if "files" not in data and "synthetic" not in data:
        raise ConfigError("data must give 'files' or 'synthetic'")
    for s in cfg.scenarios:
        if s.kind not in ("whatif", "counterfactual"):
            raise ConfigError(f"scenario {s.name}: unknown kind {s.kind!r}")
        if s.couplings_from not in ("fit", "train", "truth"):
            raise ConfigError(f"scenario {s.name}: couplings_from must be fit, train or truth")
    return cfg


def load_config(path: str | Path, output_dir: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(doc, path.parent, output_dir)


def _edge_value(graph: CausalGraph, item: dict) -> tuple[int, int, int, float]:
    return graph.index(item["cause"]), graph.index(item["effect"]), int(item.get("lag", 0)), float(item.get("value", 0.0))


def synth_spec_from_config(graph: CausalGraph, syn: dict, seed: int) -> SynthSpec:
    values = {}
    for item in syn.get("couplings", []):
        c, e, m, v = _edge_value(graph, item)
        values[(c, e, m)] = v
    noise = syn.get("noise", {})
    schedule = []
    for item in syn.get("schedule", []):
        c, e, m, _ = _edge_value(graph, item)
        schedule.append(Ramp(c, e, m, float(item["start"]), float(item["stop"])))
    return SynthSpec(
        graph=graph,
        couplings=CouplingSet.from_edges(graph, values),
        noise=NoiseSpec(noise.get("kind", "laplace"), noise.get("scale", 1.0), int(noise.get("seed", seed))),
        n_blocks=int(syn.get("n_blocks", 1)),
        n_samples=int(syn.get("n_samples", 10000)),
        schedule=tuple(schedule),
        burn_in=syn.get("burn_in"),
        sample_rate=syn.get("sample_rate"),
    )


def apply_overrides(couplings: CouplingSet, graph: CausalGraph, overrides: list[dict]) -> CouplingSet:
    a = np.array(couplings.matrices)
    for item in overrides:
        c, e, m, v = _edge_value(graph, item)
        if (c, e) not in graph.edges(m):
            raise GraphError(f"override edge {item['cause']}->{item['effect']} lag {m} not in graph")
        a[m, e, c] = v
    return CouplingSet(a)


def removal_couplings(couplings: CouplingSet, graph: CausalGraph, remove: dict) -> CouplingSet:
    edges = []
    for item in remove.get("edges", []):
        c, e = graph.index(item["cause"]), graph.index(item["effect"])
        edges.append((c, e, int(item["lag"])) if "lag" in item else (c, e))
    node = graph.index(remove["node"]) if "node" in remove else None
    effect = graph.index(remove["effect"]) if "effect" in remove and node is not None else None
    return counterfactual_remove(couplings, edges, node=node, effect=effect, graph=graph)


class _Run:
    """Mutable bookkeeping for one pipeline execution."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = cfg.output_dir
        self.stages: dict[str, dict] = {}
        self.timings: dict[str, float] = {}
        self.inputs: dict[str, str] = {}

    def rel(self, p: Path) -> str:
        return Path(p).relative_to(self.out).as_posix()

    def record(self, stage: str, paths) -> None:
        entry = self.stages.setdefault(stage, {"status": "ok", "outputs": {}})
        for p in paths:
            entry["outputs"][self.rel(p)] = sha256(p)

    def manifest(self, complete: bool, failed: StageError | None = None) -> dict:
        doc = {
            "tool": "causaltwin",
            "version": __version__,
            "config": self.cfg.raw,
            "inputs": dict(sorted(self.inputs.items())),
            "stages": self.stages,
            "complete": complete,
        }
        if failed is not None:
            doc["failed_stage"] = failed.stage
            doc["error"] = str(failed.cause)
        return doc


def run(cfg: ExperimentConfig) -> dict:
    """Execute all configured stages and write ``manifest.json``.

    On failure the manifest is still written, flagged incomplete, and the
    :class:`StageError` is re-raised.
    """
    r = _Run(cfg)
    r.out.mkdir(parents=True, exist_ok=True)
    ctx: dict = {}
    stages = [
        ("validate", _stage_validate),
        ("data", _stage_data),
        ("train", _stage_train),
        ("fit", _stage_fit),
        ("scenarios", _stage_scenarios),
        ("tfd", _stage_tfd),
        ("report", _stage_report),
    ]
    try:
        for name, fn in stages:
            t0 = time.perf_counter()
            try:
                fn(r, ctx)
            except StageError:
                raise
            except Exception as exc:
                r.stages.setdefault(name, {"status": "failed", "outputs": {}})["status"] = "failed"
                raise StageError(name, exc) from exc
            r.timings[name] = time.perf_counter() - t0
    except StageError as err:
        write_json(r.out / "manifest.json", r.manifest(False, err))
        write_json(r.out / "timings.json", r.timings)
        raise
    doc = r.manifest(True)
    write_json(r.out / "manifest.json", doc)
    write_json(r.out / "timings.json", r.timings)
    return doc


def _stage_validate(r: _Run, ctx: dict) -> None:
    path = r.cfg.resolve(r.cfg.graph)
    r.inputs[str(r.cfg.graph)] = sha256(path)
    graph = load_graph(path)
    report = validate_graph(graph)
    if not report.ok:
        raise GraphError("; ".join(report.violations))
    ctx["graph"] = graph
    r.stages["validate"] = {"status": "ok", "outputs": {}, "violations": []}


def _stage_data(r: _Run, ctx: dict) -> None:
    graph: CausalGraph = ctx["graph"]
    data = r.cfg.data
    out = r.out / "data"
    out.mkdir(exist_ok=True)
    blocks, truths = [], []
    if "synthetic" in data:
        spec = synth_spec_from_config(graph, data["synthetic"], r.cfg.seed)
        paths = synth_dataset(spec, out)
        for dp, tp in paths:
            blocks.append(load_block(dp, graph.node_count))
            truths.append(load_couplings(tp, graph))
            r.record("data", [dp, tp, tp.with_suffix(".json")])
    else:
        for f in data["files"]:
            src = r.cfg.resolve(f)
            if not src.exists():
                raise DataError(f"missing input file {src}")
            r.inputs[str(f)] = sha256(src)
            series = load_block(src, sample_rate=data.get("sample_rate"))
            if "columns" in data:
                series = select_columns(series, data["columns"], src)
            if series.n_channels != graph.node_count:
                raise DataError(f"{src}: {series.n_channels} channels, graph has {graph.node_count} nodes")
            blocks.append(series)
        r.stages["data"] = {"status": "ok", "outputs": {}}
    ctx["blocks"] = blocks
    ctx["truths"] = truths


def _stage_train(r: _Run, ctx: dict) -> None:
    ctx["train"] = []
    if not r.cfg.train:
        return
    graph = ctx["graph"]
    out = r.out / "train"
    out.mkdir(exist_ok=True)
    state = None
    cfg = r.cfg.learner
    for b, series in enumerate(ctx["blocks"]):
        res = train_online(series, graph, cfg, state=state if r.cfg.carry_over else None)
        state = res.state
        meta = {"source": "imrnns", "block": b, "config": asdict(cfg),
                "layout": [list(t) for t in res.layout.triples],
                "normalized": cfg.normalize}
        cp = out / f"couplings_{b:02d}.csv"
        tp = out / f"trajectory_{b:02d}.csv"
        save_couplings(cp, res.couplings, graph, meta)
        save_trajectory(tp, res.steps, res.errors, res.trajectory, res.layout.labels(graph.node_labels), meta)
        r.record("train", [cp, cp.with_suffix(".json"), tp, tp.with_suffix(".json")])
        ctx["train"].append(res.couplings)


def _stage_fit(r: _Run, ctx: dict) -> None:
    ctx["fit"] = []
    if not r.cfg.fit:
        return
    graph = ctx["graph"]
    out = r.out / "fit"
    out.mkdir(exist_ok=True)
    for b, series in enumerate(ctx["blocks"]):
        rep = ols_svar_fit(series, graph)
        path = out / f"couplings_{b:02d}.csv"
        meta = {"source": "ols", "block": b, "n_obs": rep.n_obs,
                "residual_variance": [float(v) for v in rep.residual_variance]}
        if ctx["truths"]:
            err = np.abs(rep.couplings.matrices - ctx["truths"][b].matrices).max()
            meta["max_abs_error_vs_truth"] = float(err)
        save_couplings(path, rep.couplings, graph, meta)
        if rep.std_errors is not None:
            save_couplings(out / f"stderr_{b:02d}.csv", rep.std_errors, graph, {"source": "ols-stderr", "block": b})
            r.record("fit", [out / f"stderr_{b:02d}.csv", out / f"stderr_{b:02d}.json"])
        r.record("fit", [path, path.with_suffix(".json")])
        ctx["fit"].append(rep.couplings)


def _tfd_of(r: _Run, series, channel: int):
    p = r.cfg.tfd
    return spectrogram(series.channel(channel), p.window_len, p.hop, p.nfft, p.window, series.sample_rate)


def _stage_scenarios(r: _Run, ctx: dict) -> None:
    graph: CausalGraph = ctx["graph"]
    p = r.cfg.tfd
    rows = []
    for s in r.cfg.scenarios:
        source = ctx.get(s.couplings_from) or []
        if s.couplings_from == "truth":
            source = ctx["truths"]
        if not source:
            raise ConfigError(f"scenario {s.name}: no {s.couplings_from} couplings available")
        base = source[s.block]
        modified = apply_overrides(base, graph, s.overrides) if s.kind == "whatif" \
            else removal_couplings(base, graph, s.remove)
        targets = [graph.index(t) for t in s.targets]
        driver = ctx["blocks"][s.block]
        baseline = whatif_run(base, driver, targets, s.closed_loop)
        scenario = whatif_run(modified, driver, targets, s.closed_loop)
        out = r.out / "scenarios" / s.name
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for tag, series in (("baseline", baseline), ("scenario", scenario)):
            path = out / f"{tag}.txt"
            save_block(series, path)
            written.append(path)
        cpath = out / "couplings.csv"
        save_couplings(cpath, modified, graph, {"source": s.couplings_from, "scenario": s.name, "kind": s.kind})
        written += [cpath, cpath.with_suffix(".json")]
        ref_block = s.reference_block if s.reference_block is not None else s.block
        reference = ctx["blocks"][ref_block]
        for t in targets:
            label = graph.node_labels[t]
            tfds = {
                "baseline": _tfd_of(r, baseline, t),
                "scenario": _tfd_of(r, scenario, t),
                "reference": _tfd_of(r, reference, t),
            }
            spectra = {k: collapse_spectrum(v) for k, v in tfds.items()}
            for k, v in tfds.items():
                path = out / f"tfd_{label}_{k}.csv"
                save_tfd(path, v)
                written += [path, path.with_suffix(".json")]
            f = tfds["baseline"].freq_axis
            rows.append({
                "scenario": s.name,
                "target": label,
                "reference_block": ref_block,
                "band_ratio_baseline": band_power_ratio(spectra["baseline"], f, p.split_freq),
                "band_ratio_scenario": band_power_ratio(spectra["scenario"], f, p.split_freq),
                "band_ratio_reference": band_power_ratio(spectra["reference"], f, p.split_freq),
                "similarity_baseline_reference": spectral_similarity(spectra["baseline"], spectra["reference"]),
                "similarity_scenario_reference": spectral_similarity(spectra["scenario"], spectra["reference"]),
                "identical_to_baseline": bool(np.array_equal(baseline.data, scenario.data)),
            })
        r.record("scenarios", written)
    summary = r.out / "scenarios" / "summary.json"
    summary.parent.mkdir(exist_ok=True)
    write_json(summary, {"split_freq": p.split_freq, "rows": rows})
    r.record("scenarios", [summary])


def _stage_tfd(r: _Run, ctx: dict) -> None:
    graph: CausalGraph = ctx["graph"]
    channels = r.cfg.tfd.channels
    if not channels:
        r.stages["tfd"] = {"status": "ok", "outputs": {}}
        return
    out = r.out / "tfd"
    out.mkdir(exist_ok=True)
    for b, series in enumerate(ctx["blocks"]):
        for label in channels:
            t = graph.index(label)
            path = out / f"block_{b:02d}_{graph.node_labels[t]}.csv"
            save_tfd(path, _tfd_of(r, series, t))
            r.record("tfd", [path, path.with_suffix(".json")])


def _stage_report(r: _Run, ctx: dict) -> None:
    if not r.cfg.report:
        return
    from .report import emit_report

    paths = emit_report(r.out)
    r.record("report", paths)
