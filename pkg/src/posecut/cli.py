"""Command-line pipeline: synth / inject / decimate / pcm / gc / optimize / run / eval.

Every stage reads and writes g2o files so intermediate results can be
inspected.  ``run`` chains them and writes one report line per
(dataset, variant).

Exit codes: 0 success, 1 usage error, 2 parse/format error, 3 numerical or
feasibility failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from posecut import g2o
from posecut.errors import FormatError, NumericalError, PosecutError
from posecut.evaluation import REPORT_HEADER, EvalReport, align_and_rmse, edge_metrics, report_line
from posecut.multicut import FULL_GRAPH, LANDMARK_ONLY, SupportConfig, graph_cut
from posecut.optimizer import Estimate, LmConfig, initial_guess, levenberg_marquardt
from posecut.pcm import PcmConfig, pcm_select
from posecut.posegraph import PoseGraph, decimate
from posecut.synth import SynthConfig, generate_multisession, inject_outliers

log = logging.getLogger("posecut")

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class StageError(Exception):
    """Wraps a stage failure with the stage name; keeps the original for exit-code mapping."""

    def __init__(self, stage, exc):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.original = exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- configuration --------------------------------------------------------------

def parse_config_text(text: str) -> Dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment.  Dashes in keys become underscores."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise UsageError(f"config line {lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def parse_seeds(text: str) -> List[int]:
    """``N`` or ``N..M`` (inclusive)."""
    try:
        if ".." in text:
            lo, hi = (int(p) for p in text.split("..", 1))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(text)]
    except ValueError:
        raise UsageError(f"bad seed range {text!r}; use N or N..M") from None


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {v!r}")


@dataclass
class PipelineConfig:
    pcm: bool = True
    gc: bool = True
    synth: SynthConfig = field(default_factory=SynthConfig)
    pcm_cfg: PcmConfig = field(default_factory=PcmConfig)
    support: SupportConfig = field(default_factory=SupportConfig)
    lm: LmConfig = field(default_factory=LmConfig)
    input: Optional[str] = None
    labels: Optional[str] = None
    ground_truth: Optional[str] = None
    output: Optional[str] = None
    report: Optional[str] = None
    seeds: List[int] = field(default_factory=lambda: [0])
    timing: bool = False

    def variants(self) -> List[str]:
        if self.pcm and self.gc:
            return ["pcm", "pcm+gc"]
        if self.pcm:
            return ["pcm"]
        if self.gc:
            return ["gc"]
        return ["none"]


# -- argument handling ----------------------------------------------------------

def _add_common(p, *, io=True):
    p.add_argument("--config", help="flat key = value file; flags override it")
    if io:
        p.add_argument("--input", help="input g2o file")
        p.add_argument("--output", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_pcm(p):
    p.add_argument("--gamma-t", type=float, help="PCM translation threshold, meters (2.0)")
    p.add_argument("--gamma-r", type=float, help="PCM rotation threshold, radians (0.5)")


def _add_gc(p):
    p.add_argument("--delta", type=int, help="support window in frames (1)")
    p.add_argument("--mode", choices=[LANDMARK_ONLY, FULL_GRAPH], help="multicut instance (landmark-only)")
    p.add_argument("--theta-odo", type=float, help="odometry edge cost in full mode (1.0)")


def _add_synth(p):
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--seeds", help="seed range N..M (inclusive)")
    p.add_argument("--outlier-rate", type=float, help="fraction of landmark edges that are outliers (0.10)")
    p.add_argument("--dim", type=int, choices=[2, 3], help="2 for SE(2), 3 for SE(3)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="posecut", description="Outlier-robust multi-session pose-graph pipeline.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate labeled synthetic datasets")
    _add_common(p, io=False)
    p.add_argument("--output", help="output directory")
    _add_synth(p)

    p = sub.add_parser("inject", help="add random incorrect landmark edges")
    _add_common(p)
    p.add_argument("--labels", help="existing label sidecar")
    p.add_argument("--ground-truth", help="g2o whose vertices are ground truth (default: the input's)")
    _add_synth(p)

    p = sub.add_parser("decimate", help="keep every k-th frame")
    _add_common(p)
    p.add_argument("--factor", type=int, default=10, help="keep 1 frame in FACTOR (10)")

    p = sub.add_parser("pcm", help="pairwise-consistency filter")
    _add_common(p)
    _add_pcm(p)

    p = sub.add_parser("gc", help="support-weighted multicut filter")
    _add_common(p)
    _add_gc(p)

    p = sub.add_parser("optimize", help="Levenberg-Marquardt from dead-reckoned start")
    _add_common(p)

    p = sub.add_parser("eval", help="score an estimate against ground truth")
    _add_common(p, io=False)
    p.add_argument("--input", help="estimate g2o (vertex poses)")
    p.add_argument("--ground-truth", help="ground-truth g2o (vertex poses)")
    p.add_argument("--labels", help="label sidecar; edges missing from --input count as removed")
    p.add_argument("--report", help="append the report line here instead of stdout")
    p.add_argument("--dataset", default=None, help="dataset name for the report")
    p.add_argument("--variant", default="estimate", help="variant name for the report")

    p = sub.add_parser("run", help="full pipeline over seeds or an input file")
    _add_common(p)
    p.add_argument("--labels", help="label sidecar for --input")
    p.add_argument("--ground-truth", help="ground-truth g2o for --input (default: its vertices)")
    p.add_argument("--report", help="report path (default OUTPUT/report.tsv)")
    p.add_argument("--no-pcm", action="store_true", default=None, help="skip PCM")
    p.add_argument("--no-gc", action="store_true", default=None, help="skip the multicut stage")
    p.add_argument("--timing", action="store_true", default=None, help="fill wall_ms (reports stop being reproducible)")
    _add_pcm(p)
    _add_gc(p)
    _add_synth(p)
    return ap


_SYNTH_KEYS = {
    "frames_per_session": int, "step_length": float, "turn_probability": float,
    "revisit_radius": float, "min_outlier_distance": float, "arena_size": float,
    "sessions": int,
}


def resolve(ns: argparse.Namespace) -> PipelineConfig:
    """Merge config file values under command-line flags."""
    file_vals = {}
    if getattr(ns, "config", None):
        try:
            with open(ns.config, encoding="utf-8") as fh:
                file_vals = parse_config_text(fh.read())
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None

    def get(key, conv=str, default=None):
        v = getattr(ns, key, None)
        if v is not None:
            return v
        if key in file_vals:
            try:
                return conv(file_vals[key])
            except ValueError:
                raise UsageError(f"config key {key}: bad value {file_vals[key]!r}") from None
        return default

    cfg = PipelineConfig()
    try:
        skw = {k: get(k, conv) for k, conv in _SYNTH_KEYS.items() if get(k, conv) is not None}
        if get("odom_sigma_t", float) is not None or get("odom_sigma_r", float) is not None:
            base = SynthConfig().odom_noise_sigma
            skw["odom_noise_sigma"] = (get("odom_sigma_t", float, base[0]), get("odom_sigma_r", float, base[1]))
        if get("outlier_rate", float) is not None:
            skw["outlier_rate"] = get("outlier_rate", float)
        if get("dim", int) is not None:
            skw["dim"] = get("dim", int)
        cfg.synth = SynthConfig(**skw)
        cfg.pcm_cfg = PcmConfig(gamma_t=get("gamma_t", float, 2.0), gamma_r=get("gamma_r", float, 0.5),
                                exact_clique_limit=get("exact_clique_limit", int, 150))
        mode = get("mode", str, LANDMARK_ONLY)
        if mode not in (LANDMARK_ONLY, FULL_GRAPH):
            raise UsageError(f"unknown mode {mode!r}")
        cfg.support = SupportConfig(delta=get("delta", int, 1), mode=mode, theta_odo=get("theta_odo", float, 1.0))
        cfg.lm = LmConfig(max_iterations=get("max_iterations", int, 100))
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    cfg.pcm = not _bool(ns.no_pcm) if getattr(ns, "no_pcm", None) else _bool(get("pcm", str, "true"))
    cfg.gc = not _bool(ns.no_gc) if getattr(ns, "no_gc", None) else _bool(get("gc", str, "true"))
    cfg.timing = _bool(get("timing", str, "false"))
    for key in ("input", "labels", "ground_truth", "output", "report"):
        setattr(cfg, key, get(key))
    # a seed flag of either form beats either config key
    if getattr(ns, "seeds", None) is not None:
        cfg.seeds = parse_seeds(str(ns.seeds))
    elif getattr(ns, "seed", None) is not None:
        cfg.seeds = [ns.seed]
    elif "seeds" in file_vals:
        cfg.seeds = parse_seeds(file_vals["seeds"])
    elif "seed" in file_vals:
        cfg.seeds = [get("seed", int)]
    return cfg


# -- stage helpers --------------------------------------------------------------

def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (PosecutError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def _need(value, flag):
    if not value:
        raise UsageError(f"{flag} is required")
    return value


def _outdir(path) -> str:
    path = _need(path, "--output")
    os.makedirs(path, exist_ok=True)
    return path


def _stem(path) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _estimate_of(g: PoseGraph) -> Estimate:
    missing = [n for n, p in g.nodes.items() if p is None]
    if missing:
        raise UsageError(f"graph lacks vertex poses for {len(missing)} node(s)")
    return Estimate(dict(g.nodes))


def with_poses(g: PoseGraph, est: Estimate) -> PoseGraph:
    out = g.copy()
    for n in out.nodes:
        out.nodes[n] = est.poses.get(n, out.nodes[n])
    return out


def write_trajectory(est: Estimate, path, offset=g2o.DEFAULT_SESSION_OFFSET):
    """``node_id x y [z]`` per line, tab separated."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for n in est.nodes():
            fh.write("\t".join([str(g2o.encode(n, offset))] + ["%.9f" % v for v in est[n].translation]) + "\n")


def removed_pairs(before: PoseGraph, after_ids) -> set:
    keep = set(after_ids)
    return {(e.source, e.target) for i, e in before.landmark_edges() if i not in keep}


@dataclass
class VariantResult:
    variant: str
    graph: PoseGraph
    estimate: Estimate
    report: EvalReport
    wall_ms: float


def run_variants(g: PoseGraph, truth: Estimate, labels, cfg: PipelineConfig) -> List[VariantResult]:
    """PCM once, then each variant's GC/optimize/eval.  PCM output is shared so
    turning GC on or off cannot change it."""
    results = []
    t0 = time.perf_counter()
    pcm_graph = None
    if cfg.pcm:
        keep = set(_stage("pcm", pcm_select, g, cfg.pcm_cfg))
        pcm_graph = g.without_edges(i for i in g.landmark_ids() if i not in keep)
    t_pcm = time.perf_counter() - t0
    for variant in cfg.variants():
        t1 = time.perf_counter()
        h = pcm_graph if variant.startswith("pcm") else g
        if variant.endswith("gc"):
            h, _ = _stage("gc", graph_cut, h, cfg.support)
        res = _stage("optimize", levenberg_marquardt, h, _stage("initialize", initial_guess, h), cfg.lm)
        rep = _stage("eval", align_and_rmse, res.estimate, truth)
        if labels is not None:
            rep.precision, rep.recall, rep.f1 = edge_metrics(removed_pairs(g, h.edges), labels)
        wall = (time.perf_counter() - t1 + (t_pcm if cfg.pcm else 0.0)) * 1000.0
        results.append(VariantResult(variant, h, res.estimate, rep, wall))
    return results


# -- commands -------------------------------------------------------------------

def cmd_synth(cfg: PipelineConfig, ns) -> int:
    out = _outdir(cfg.output)
    for seed in cfg.seeds:
        ds = _stage("synth", generate_multisession, replace(cfg.synth, seed=seed))
        base = os.path.join(out, f"synth_seed{seed}")
        g2o.save_g2o(ds.graph, base + ".g2o")
        g2o.save_labels(ds.labels, base + ".labels")
        print(f"{base}.g2o\t{len(ds.graph.nodes)} nodes\t{len(ds.graph.edges)} edges")
    return EXIT_OK


def cmd_inject(cfg: PipelineConfig, ns) -> int:
    g = g2o.load_g2o(_need(cfg.input, "--input"))
    truth = _estimate_of(g2o.load_g2o(cfg.ground_truth) if cfg.ground_truth else g)
    labels = g2o.load_labels(cfg.labels) if cfg.labels else None
    out = _outdir(cfg.output)
    g2, lab = _stage("inject", inject_outliers, g, cfg.synth.outlier_rate, cfg.seeds[0], truth,
                     cfg.synth.min_outlier_distance, labels)
    base = os.path.join(out, _stem(cfg.input) + "_inject")
    g2o.save_g2o(g2, base + ".g2o")
    g2o.save_labels(lab, base + ".labels")
    print(f"{base}.g2o\t{len(g2.edges) - len(g.edges)} edges added")
    return EXIT_OK


def cmd_decimate(cfg: PipelineConfig, ns) -> int:
    if ns.factor < 1:
        raise UsageError("--factor must be >= 1")
    g = g2o.load_g2o(_need(cfg.input, "--input"))
    h = _stage("decimate", decimate, g, ns.factor)
    path = os.path.join(_outdir(cfg.output), _stem(cfg.input) + f"_dec{ns.factor}.g2o")
    g2o.save_g2o(h, path)
    print(f"{path}\t{len(h.nodes)} nodes\t{len(h.edges)} edges")
    return EXIT_OK


def cmd_pcm(cfg: PipelineConfig, ns) -> int:
    g = g2o.load_g2o(_need(cfg.input, "--input"))
    keep = set(_stage("pcm", pcm_select, g, cfg.pcm_cfg))
    h = g.without_edges(i for i in g.landmark_ids() if i not in keep)
    path = os.path.join(_outdir(cfg.output), _stem(cfg.input) + "_pcm.g2o")
    g2o.save_g2o(h, path)
    print(f"{path}\tkept {len(keep)} of {len(g.landmark_ids())} landmark edges")
    return EXIT_OK


def cmd_gc(cfg: PipelineConfig, ns) -> int:
    g = g2o.load_g2o(_need(cfg.input, "--input"))
    h, removed = _stage("gc", graph_cut, g, cfg.support)
    path = os.path.join(_outdir(cfg.output), _stem(cfg.input) + "_gc.g2o")
    g2o.save_g2o(h, path)
    print(f"{path}\tremoved {len(removed)} of {len(g.landmark_ids())} landmark edges")
    return EXIT_OK


def cmd_optimize(cfg: PipelineConfig, ns) -> int:
    g = g2o.load_g2o(_need(cfg.input, "--input"))
    res = _stage("optimize", levenberg_marquardt, g, _stage("initialize", initial_guess, g), cfg.lm)
    base = os.path.join(_outdir(cfg.output), _stem(cfg.input) + "_opt")
    g2o.save_g2o(with_poses(g, res.estimate), base + ".g2o")
    write_trajectory(res.estimate, base + ".tsv")
    print(f"{base}.g2o\terror {res.errors[0]:.6g} -> {res.errors[-1]:.6g} in {res.iterations} iterations")
    return EXIT_OK


def cmd_eval(cfg: PipelineConfig, ns) -> int:
    g = g2o.load_g2o(_need(cfg.input, "--input"))
    truth = _estimate_of(g2o.load_g2o(_need(cfg.ground_truth, "--ground-truth")))
    rep = _stage("eval", align_and_rmse, _estimate_of(g), truth)
    if cfg.labels:
        labels = g2o.load_labels(cfg.labels)
        present = {(e.source, e.target) for _, e in g.landmark_edges()}
        rep.precision, rep.recall, rep.f1 = edge_metrics(set(labels) - present, labels)
    line = report_line(ns.dataset or _stem(cfg.input), ns.variant, rep)
    if cfg.report:
        with open(cfg.report, "a", encoding="ascii", newline="\n") as fh:
            fh.write(line + "\n")
    else:
        print(line)
    return EXIT_OK


def cmd_run(cfg: PipelineConfig, ns) -> int:
    out = _outdir(cfg.output)
    lines = [REPORT_HEADER]
    jobs = []
    if cfg.input:
        g = g2o.load_g2o(cfg.input)
        truth = _estimate_of(g2o.load_g2o(cfg.ground_truth) if cfg.ground_truth else g)
        labels = g2o.load_labels(cfg.labels) if cfg.labels else None
        jobs.append((_stem(cfg.input), lambda g=g, t=truth, lab=labels: (g, t, lab)))
    else:
        for seed in cfg.seeds:
            def make(seed=seed):
                ds = _stage("synth", generate_multisession, replace(cfg.synth, seed=seed))
                return ds.graph, ds.ground_truth, ds.labels
            jobs.append((f"seed{seed}", make))
    for name, make in jobs:
        g, truth, labels = make()
        for r in run_variants(g, truth, labels, cfg):
            tag = r.variant.replace("+", "_")
            base = os.path.join(out, f"{name}_{tag}")
            g2o.save_g2o(with_poses(r.graph, r.estimate), base + ".g2o")
            write_trajectory(r.estimate, base + ".tsv")
            lines.append(report_line(name, r.variant, r.report, r.wall_ms if cfg.timing else None))
            log.info("%s %s rmse %.4f", name, r.variant, r.report.rmse)
    report = cfg.report or os.path.join(out, "report.tsv")
    with open(report, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth, "inject": cmd_inject, "decimate": cmd_decimate, "pcm": cmd_pcm,
    "gc": cmd_gc, "optimize": cmd_optimize, "eval": cmd_eval, "run": cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if not ns.command:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve(ns)
        return COMMANDS[ns.command](cfg, ns)
    except UsageError as exc:
        print(f"posecut: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"posecut: {exc}", file=sys.stderr)
        if isinstance(exc.original, FormatError):
            return EXIT_FORMAT
        return EXIT_NUMERIC
    except FormatError as exc:
        print(f"posecut: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericalError as exc:
        print(f"posecut: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"posecut: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
