"""Multi-seed experiment execution, result files, and mean±std report tables."""
from __future__ import annotations

import csv
import glob as globlib
import io
import json
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .config import Experiment
from .errors import ConfigError, LrgaeError, TrainingError
from .evaluation import ProbeConfig, clustering_nmi, link_metrics, linear_probe
from .graph import Graph, link_split, node_split
from .train import embed, score_pairs, train
from .views import check_compatible

METRIC_ORDER = ("accuracy", "auc", "ap", "nmi")
TIMING_KEYS = ("wall_clock_s", "total_wall_clock_s")


def versions() -> dict:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"lrgae": own, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def thread_count() -> int:
    raw = os.environ.get("LRGAE_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"must be a positive integer, got {raw!r}", "LRGAE_THREADS") from None
    if value < 1:
        raise ConfigError(f"must be a positive integer, got {raw!r}", "LRGAE_THREADS")
    return value


def _warm(g: Graph) -> None:
    """Fill the graph's lazy caches before threads share it."""
    _ = g.x, g.degrees, g.edge_keys, g.adjacency_lists, g.normalized_adj


def evaluate_task(exp: Experiment, g: Graph, train_graph: Graph, params, enc, seed: int, split) -> dict:
    """Task metrics for trained ``params``; ``split`` is the node or link split of this seed."""
    ev = exp.model.eval
    if exp.task == "link_prediction":
        pos = score_pairs(train_graph, split.test_pos, enc, exp.decoder, exp.view, params, exp.model.embed_mode)
        neg = score_pairs(train_graph, split.test_neg, enc, exp.decoder, exp.view, params, exp.model.embed_mode)
        auc, ap = link_metrics(pos, neg)
        return {"auc": auc, "ap": ap}
    z = embed(g, enc, params, exp.model.embed_mode)
    if exp.task == "node_classification":
        probe = ProbeConfig(ev.probe_epochs, ev.probe_learning_rate, ev.probe_weight_decay)
        return {"accuracy": linear_probe(z, g.labels, split, probe)}
    return {"nmi": clustering_nmi(z, g.labels, g.num_classes, ev.kmeans_restarts, seed)}


def run_seed(exp: Experiment, g: Graph, seed: int) -> dict:
    """Split, pretrain, embed and evaluate one seed. Errors carry the seed."""
    enc = exp.encoder(g.num_features)
    cfg = exp.train_config(seed)
    ev = exp.model.eval
    try:
        if exp.task == "link_prediction":
            split = link_split(g, tuple(ev.link_split), seed)
            train_graph = g.with_edges(split.train_edges)
        else:
            if g.labels is None:
                raise ConfigError(f"task {exp.task} needs node labels", "dataset")
            split = node_split(g, tuple(ev.node_split), seed) if exp.task == "node_classification" else None
            train_graph = g

        def periodic(params, epoch):
            return evaluate_task(exp, g, train_graph, params, enc, seed, split)

        params, record = train(
            train_graph, exp.aug_a, exp.aug_b, exp.view, enc, exp.decoder, exp.loss, exp.neg, cfg, evaluate=periodic
        )
        metrics = evaluate_task(exp, g, train_graph, params, enc, seed, split)
    except (ConfigError, TrainingError):
        raise
    except LrgaeError as exc:
        raise TrainingError(f"seed {seed}: {exc}") from exc
    entry = {
        "seed": seed,
        "metrics": metrics,
        "epochs": cfg.epochs,
        "loss_history": record.losses,
        "wall_clock_s": record.wall_clock_s,
    }
    if record.metrics:
        entry["eval_history"] = record.metrics
    return entry


def aggregate(per_seed: list[dict]) -> dict:
    """Mean and population std of every metric over the per-seed entries."""
    names = sorted({k for e in per_seed for k in e["metrics"]}, key=_metric_key)
    out = {}
    for name in names:
        values = np.array([e["metrics"][name] for e in per_seed if name in e["metrics"]], dtype=np.float64)
        out[name] = {"mean": float(values.mean()), "std": float(values.std(ddof=0))}
    return out


def _metric_key(name: str):
    return (METRIC_ORDER.index(name) if name in METRIC_ORDER else len(METRIC_ORDER), name)


def run_experiment(exp: Experiment, threads: int | None = None) -> dict:
    """Execute every seed of ``exp`` and assemble the result report."""
    started = time.perf_counter()
    g = exp.load_dataset()
    enc = exp.encoder(g.num_features)
    check_compatible(exp.view, exp.loss, exp.decoder, enc.num_layers, enc.layer_dim)
    _warm(g)
    threads = threads if threads is not None else thread_count()
    seeds = exp.seeds
    if threads > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(seeds))) as pool:
            entries = list(pool.map(lambda s: run_seed(exp, g, s), seeds))
    else:
        entries = [run_seed(exp, g, s) for s in seeds]
    entries.sort(key=lambda e: e["seed"])
    return {
        "dataset": exp.model.dataset.display_name(),
        "method": exp.method,
        "task": exp.task,
        "case": exp.view.case,
        "config": exp.snapshot(),
        "per_seed": entries,
        "aggregate": aggregate(entries),
        "std_convention": "population",
        "versions": versions(),
        "total_wall_clock_s": time.perf_counter() - started,
    }


def report_body(report: dict) -> dict:
    """The report without wall-clock fields: equal across reruns of one config."""
    if isinstance(report, dict):
        return {k: report_body(v) for k, v in report.items() if k not in TIMING_KEYS}
    if isinstance(report, list):
        return [report_body(v) for v in report]
    return report


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False) + "\n"


def summary_lines(report: dict) -> list[str]:
    lines = [f"{report['dataset']} / {report['method']} / {report['task']} ({len(report['per_seed'])} seeds)"]
    for name, agg in report["aggregate"].items():
        lines.append(f"  {name}: {format_cell(agg['mean'], agg['std'])}")
    return lines


# --------------------------------------------------------------------------- report tables


def format_cell(mean: float, std: float) -> str:
    """Fractions as percentages with one decimal: 0.965, 0.005 -> '96.5±0.5'."""
    return f"{100.0 * mean:.1f}±{100.0 * std:.1f}"


def collect(pattern: str) -> list[Path]:
    return sorted(Path(p) for p in globlib.glob(pattern, recursive=True) if Path(p).is_file())


def build_table(reports: list[dict]) -> tuple[list[str], list[list[str]]]:
    """One row per (dataset, method); seeds from all matching reports are pooled."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for rep in reports:
        groups.setdefault((rep["dataset"], rep["method"]), []).extend(rep["per_seed"])
    metrics = sorted({m for entries in groups.values() for e in entries for m in e["metrics"]}, key=_metric_key)
    header = ["dataset", "method", *metrics]
    rows = []
    for (dataset, method), entries in sorted(groups.items()):
        row = [dataset, method]
        for m in metrics:
            values = np.array([100.0 * e["metrics"][m] for e in entries if m in e["metrics"]])
            row.append("" if len(values) == 0 else f"{values.mean():.1f}±{values.std(ddof=0):.1f}")
        rows.append(row)
    return header, rows


def render_text(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*r) for r in rows]
    return "\n".join(lines) + "\n"


def render_csv(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def load_reports(paths: list[Path]) -> list[dict]:
    reports = []
    for p in paths:
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p} is not valid JSON ({exc.msg})", "report") from None
        if not isinstance(data, dict) or not {"dataset", "method", "per_seed"} <= data.keys():
            raise ConfigError(f"{p} is not a result file", "report")
        reports.append(data)
    return reports
