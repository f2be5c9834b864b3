"""Command line entry point: ``causaltwin <verb> [options]``.

Every verb accepts ``--config``; explicit flags override config values.
Exit codes: 0 success, 1 validation failure, 2 data error, 3 divergence,
4 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .baselines import RankDeficientError, ols_svar_fit
from .graph import GraphError, load_graph, validate_graph
from .imrnns import DivergenceError, NetworkConfig, train_online
from .io import DataError, load_block, load_couplings, save_block, save_couplings, save_tfd, save_trajectory
from .pipeline import ConfigError, StageError, apply_overrides, load_config, removal_couplings, run, \
    synth_spec_from_config
from .report import emit_report
from .spectral import spectrogram
from .svar import UnstableSystemError, whatif_run
from .synth import synth_dataset

log = logging.getLogger("causaltwin")

EXIT_OK, EXIT_VALIDATION, EXIT_DATA, EXIT_DIVERGENCE, EXIT_INTERNAL = 0, 1, 2, 3, 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return exit_code_for(exc.cause)
    if isinstance(exc, DivergenceError):
        return EXIT_DIVERGENCE
    if isinstance(exc, (GraphError, ConfigError, UnstableSystemError)):
        return EXIT_VALIDATION
    if isinstance(exc, (DataError, RankDeficientError, FileNotFoundError)):
        return EXIT_DATA
    return EXIT_INTERNAL


def _config_doc(args) -> tuple[dict, Path]:
    if getattr(args, "config", None):
        path = Path(args.config)
        return json.loads(path.read_text()), path.parent
    return {}, Path(".")


def _graph(args, doc: dict, base: Path):
    path = args.graph or (base / doc["graph"] if "graph" in doc else None)
    if path is None:
        raise ConfigError("no graph given (--graph or config 'graph')")
    return load_graph(path)


def _data_files(args, doc: dict, base: Path) -> list[Path]:
    if args.data:
        return [Path(p) for p in args.data]
    files = doc.get("data", {}).get("files")
    if not files:
        raise ConfigError("no data files given (--data or config data.files)")
    return [base / f for f in files]


def _out(args, doc: dict, base: Path, default: str) -> Path:
    if getattr(args, "output_dir", None):
        return Path(args.output_dir)
    if "output_dir" in doc:
        return base / doc["output_dir"]
    return Path(default)


def _learner(doc: dict, args) -> NetworkConfig:
    try:
        cfg = NetworkConfig(**{"seed": doc.get("seed", 0), **doc.get("learner", {})})
        overrides = {}
        for name in ("learning_rate", "hidden_size", "smoothing", "seed"):
            val = getattr(args, name, None)
            if val is not None:
                overrides[name] = val
        if args.no_normalize:
            overrides["normalize"] = False
        if "hidden_size" in overrides:
            # context is a slice of the hidden layer, so it shrinks along with it
            overrides["context_size"] = min(cfg.context_size, overrides["hidden_size"]) \
                if "context_size" in doc.get("learner", {}) else overrides["hidden_size"]
        return replace(cfg, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"learner settings: {exc}") from None


def _parse_edge(text: str) -> dict:
    """``CAUSE:EFFECT[:LAG][=VALUE]``"""
    value = None
    if "=" in text:
        text, value = text.split("=", 1)
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ConfigError(f"cannot parse edge {text!r}; expected CAUSE:EFFECT[:LAG]")
    item = {"cause": parts[0], "effect": parts[1]}
    if len(parts) == 3:
        item["lag"] = int(parts[2])
    if value is not None:
        item["value"] = float(value)
    return item


# -- verbs ------------------------------------------------------------------


def cmd_validate(args) -> int:
    doc, base = _config_doc(args)
    graph = _graph(args, doc, base)
    report = validate_graph(graph)
    if report.ok:
        print(f"ok: {graph.node_count} nodes, lag order {graph.lag_order}, {graph.edge_count} edges")
        return EXIT_OK
    for v in report.violations:
        print(f"violation: {v}")
    return EXIT_VALIDATION


def cmd_synth(args) -> int:
    doc, base = _config_doc(args)
    graph = _graph(args, doc, base)
    syn = doc.get("data", {}).get("synthetic")
    if syn is None:
        raise ConfigError("config has no data.synthetic section")
    spec = synth_spec_from_config(graph, syn, int(doc.get("seed", 0)))
    out = _out(args, doc, base, "synthetic")
    for dp, tp in synth_dataset(spec, out):
        print(dp)
    return EXIT_OK


def cmd_train(args) -> int:
    doc, base = _config_doc(args)
    graph = _graph(args, doc, base)
    cfg = _learner(doc, args)
    out = _out(args, doc, base, "train")
    out.mkdir(parents=True, exist_ok=True)
    state = None
    for b, path in enumerate(_data_files(args, doc, base)):
        series = load_block(path, graph.node_count)
        res = train_online(series, graph, cfg, state=state if args.carry_over else None)
        state = res.state
        meta = {"source": "imrnns", "input": str(path), "config": asdict(cfg),
                "layout": [list(t) for t in res.layout.triples], "normalized": cfg.normalize}
        save_couplings(out / f"couplings_{b:02d}.csv", res.couplings, graph, meta)
        save_trajectory(out / f"trajectory_{b:02d}.csv", res.steps, res.errors, res.trajectory,
                        res.layout.labels(graph.node_labels), meta)
        print(out / f"couplings_{b:02d}.csv")
    return EXIT_OK


def cmd_fit(args) -> int:
    doc, base = _config_doc(args)
    graph = _graph(args, doc, base)
    out = _out(args, doc, base, "fit")
    out.mkdir(parents=True, exist_ok=True)
    for b, path in enumerate(_data_files(args, doc, base)):
        rep = ols_svar_fit(load_block(path, graph.node_count), graph)
        save_couplings(out / f"couplings_{b:02d}.csv", rep.couplings, graph,
                       {"source": "ols", "input": str(path), "n_obs": rep.n_obs,
                        "residual_variance": rep.residual_variance.tolist()})
        print(out / f"couplings_{b:02d}.csv")
    return EXIT_OK


def _simulate(args, modify) -> int:
    doc, base = _config_doc(args)
    graph = _graph(args, doc, base)
    couplings = load_couplings(args.couplings, graph)
    driver = load_block(_data_files(args, doc, base)[0], graph.node_count)
    targets = [graph.index(t) for t in args.targets]
    modified = modify(couplings, graph)
    result = whatif_run(modified, driver, targets, closed_loop=args.closed_loop)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_block(result, out)
    save_couplings(out.with_name(out.stem + "_couplings.csv"), modified, graph, {"source": str(args.couplings)})
    print(out)
    return EXIT_OK


def cmd_whatif(args) -> int:
    overrides = [_parse_edge(s) for s in args.set or []]
    return _simulate(args, lambda k, g: apply_overrides(k, g, overrides))


def cmd_counterfactual(args) -> int:
    remove: dict = {}
    if args.remove_node:
        remove["node"] = args.remove_node
        if args.effect:
            remove["effect"] = args.effect
    if args.remove_edge:
        remove["edges"] = [_parse_edge(s) for s in args.remove_edge]
    if not remove:
        raise ConfigError("nothing to remove: give --remove-node or --remove-edge")
    return _simulate(args, lambda k, g: removal_couplings(k, g, remove))


def cmd_tfd(args) -> int:
    doc, base = _config_doc(args)
    p = {"window_len": 256, "hop": 128, "nfft": 256, "window": "hann", **doc.get("tfd", {})}
    for name in ("window_len", "hop", "nfft", "window"):
        if getattr(args, name) is not None:
            p[name] = getattr(args, name)
    series = load_block(_data_files(args, doc, base)[0])
    labels = list(series.channel_labels)
    channels = args.channel or p.get("channels") or labels
    out = _out(args, doc, base, "tfd")
    out.mkdir(parents=True, exist_ok=True)
    for ch in channels:
        idx = labels.index(ch) if ch in labels else int(ch) - 1
        tfd = spectrogram(series.channel(idx), p["window_len"], p["hop"], p["nfft"], p["window"],
                          series.sample_rate)
        path = out / f"tfd_{labels[idx]}.csv"
        save_tfd(path, tfd)
        print(path)
    return EXIT_OK


def cmd_report(args) -> int:
    for p in emit_report(args.run_dir):
        print(p)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.output_dir)
    manifest = run(cfg)
    print(cfg.output_dir / "manifest.json")
    return EXIT_OK if manifest["complete"] else EXIT_INTERNAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causaltwin", description="Learning causal digital twin toolkit")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, graph=True, data=True, out=True):
        sp.add_argument("--config", help="JSON experiment config")
        if graph:
            sp.add_argument("--graph", help="graph JSON file")
        if data:
            sp.add_argument("--data", nargs="+", help="whitespace-separated block files")
        if out:
            sp.add_argument("--output-dir", help="output directory")

    sp = sub.add_parser("validate", help="check a causal graph file")
    common(sp, data=False, out=False)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("synth", help="write synthetic block files and ground truth")
    common(sp, data=False)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="online learner, one run per block")
    common(sp)
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--hidden-size", type=int)
    sp.add_argument("--smoothing", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--no-normalize", action="store_true")
    sp.add_argument("--carry-over", action="store_true", help="continue network state across blocks")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("fit", help="least-squares SVAR fit per block")
    common(sp)
    sp.set_defaults(func=cmd_fit)

    for name, func, helptext in (("whatif", cmd_whatif, "re-simulate targets with altered couplings"),
                                 ("counterfactual", cmd_counterfactual, "re-simulate with influences removed")):
        sp = sub.add_parser(name, help=helptext)
        common(sp, out=False)
        sp.add_argument("--couplings", required=True, help="coupling CSV")
        sp.add_argument("--targets", nargs="+", required=True, help="target node labels")
        sp.add_argument("--output", required=True, help="output series file")
        sp.add_argument("--closed-loop", action="store_true")
        if name == "whatif":
            sp.add_argument("--set", nargs="+", metavar="CAUSE:EFFECT[:LAG]=VALUE")
        else:
            sp.add_argument("--remove-node")
            sp.add_argument("--effect")
            sp.add_argument("--remove-edge", nargs="+", metavar="CAUSE:EFFECT[:LAG]")
        sp.set_defaults(func=func)

    sp = sub.add_parser("tfd", help="spectrogram of block channels")
    common(sp, graph=False)
    sp.add_argument("--channel", nargs="+")
    sp.add_argument("--window-len", type=int)
    sp.add_argument("--hop", type=int)
    sp.add_argument("--nfft", type=int)
    sp.add_argument("--window")
    sp.set_defaults(func=cmd_tfd)

    sp = sub.add_parser("report", help="render SVG/CSV report from a run directory")
    sp.add_argument("--run-dir", required=True)
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("run", help="full pipeline from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--output-dir")
    sp.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001
        code = exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        if code == EXIT_INTERNAL:
            log.exception("internal error")
        return code


if __name__ == "__main__":
    sys.exit(main())
