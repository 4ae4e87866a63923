"""Ablation grid runner, aggregation and report emission.

One experiment runs every (bias config, image, seed) combination against a
single oracle/criterion pair, records the full per-query trace, and
aggregates success-at-checkpoint rates plus the median query count until
success. Median queries count initialization queries and are suppressed
("-") whenever the final success rate is at most 0.5.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, build_criterion, build_oracle, build_surrogate, generate_instances
from .engine import AttackResult, run_bba
from .errors import InitializationError
from .surrogate import make_gradient_provider


def fmt(value: float) -> str:
    """Canonical numeric formatting for all emitted files: 6 significant digits."""
    return "%.6g" % value


@dataclass
class RunRecord:
    config_index: int
    image_index: int
    seed: int
    result: AttackResult | None
    init_failed: bool
    success_query: float  # first query index at/below threshold, inf if never

    @property
    def run_id(self) -> str:
        return f"cfg{self.config_index}_img{self.image_index:02d}_seed{self.seed}"


@dataclass
class ConfigSummary:
    bias_label: str
    bias_flags: tuple[bool, bool, bool]
    gradient_weight: float
    success_rates: dict
    median_queries: float | None  # None means suppressed


@dataclass
class ExperimentReport:
    threshold: float
    threshold_rule: str
    budget: int
    checkpoints: list
    runs: list
    summaries: list


def first_success_query(result: AttackResult, threshold: float) -> float:
    for entry in result.trace:
        if entry.best_distance <= threshold:
            return float(entry.query_index)
    return math.inf


def summarize_runs(runs, bias_configs, checkpoints) -> list:
    summaries = []
    for cfg_i, bias in enumerate(bias_configs):
        mine = [r for r in runs if r.config_index == cfg_i]
        rates = {}
        for cp in checkpoints:
            hits = sum(1 for r in mine if r.success_query <= cp)
            rates[cp] = hits / len(mine) if mine else 0.0
        final_rate = rates[checkpoints[-1]] if checkpoints else 0.0
        median = float(np.median([r.success_query for r in mine])) if mine else math.inf
        summaries.append(ConfigSummary(
            bias_label=bias.label(),
            bias_flags=(bias.use_perlin, bias.use_mask, bias.use_gradient),
            gradient_weight=bias.gradient_weight,
            success_rates=rates,
            median_queries=median if final_rate > 0.5 else None,
        ))
    return summaries


def run_ablation(config: ExperimentConfig, instances: list | None = None) -> ExperimentReport:
    """Run the full (bias config x image x seed) grid.

    A run whose initialization fails is recorded as a non-success and the
    grid carries on. Runs are deterministic in (config, seeds), so repeated
    invocations produce identical reports.
    """
    oracle = build_oracle(config.oracle_spec)
    criterion = build_criterion(config.criterion_spec)
    if instances is None:
        instances = generate_instances(config.images_spec, oracle)

    surrogate_setup = None
    if config.surrogate_spec is not None:
        surrogate_setup = build_surrogate(config.surrogate_spec, oracle)

    runs = []
    for cfg_i, bias in enumerate(config.bias_grid):
        for img_i, instance in enumerate(instances):
            provider = None
            if bias.use_gradient and surrogate_setup is not None:
                provider = make_gradient_provider(surrogate_setup.model, instance.x_orig,
                                                  surrogate_setup.target_class,
                                                  surrogate_setup.retreat_fraction)
            for seed in config.seeds:
                try:
                    result = run_bba(
                        oracle, criterion, instance.x_orig, instance.pool, bias,
                        budget=config.budget, threshold=config.threshold,
                        rng=np.random.default_rng(seed), step_sizes=config.step_sizes,
                        gradient_provider=provider, perlin_frequency=config.perlin_frequency,
                        step_mode=config.step_mode,
                    )
                    record = RunRecord(cfg_i, img_i, seed, result, False,
                                       first_success_query(result, config.threshold))
                except InitializationError:
                    record = RunRecord(cfg_i, img_i, seed, None, True, math.inf)
                runs.append(record)

    summaries = summarize_runs(runs, config.bias_grid, config.checkpoints)
    return ExperimentReport(threshold=config.threshold, threshold_rule=config.threshold_rule,
                            budget=config.budget, checkpoints=config.checkpoints,
                            runs=runs, summaries=summaries)


# ---------------------------------------------------------------------------
# Emission: summary table, per-run traces, plot data.
# ---------------------------------------------------------------------------


def _summary_rows(report: ExperimentReport):
    for summary in report.summaries:
        row = {
            "perlin": "yes" if summary.bias_flags[0] else "no",
            "mask": "yes" if summary.bias_flags[1] else "no",
            "gradient": "yes" if summary.bias_flags[2] else "no",
            "gradient_weight": fmt(summary.gradient_weight),
        }
        for cp in report.checkpoints:
            row[f"success_at_{cp}"] = fmt(summary.success_rates[cp])
        row["median_queries"] = "-" if summary.median_queries is None else fmt(summary.median_queries)
        yield row


def write_trace_file(path: Path, trace) -> None:
    lines = ["query_index,best_distance,adversarial"]
    for entry in trace:
        lines.append(f"{entry.query_index},{fmt(entry.best_distance)},{1 if entry.adversarial else 0}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def emit_report(report: ExperimentReport, out_dir, formats=("csv", "json")) -> dict:
    """Write summary, per-run traces and plot data; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {"traces": []}

    rows = list(_summary_rows(report))
    columns = list(rows[0].keys()) if rows else ["perlin", "mask", "gradient", "gradient_weight",
                                                 *(f"success_at_{c}" for c in report.checkpoints),
                                                 "median_queries"]
    if "csv" in formats:
        path = out / "summary.csv"
        lines = [",".join(columns)]
        lines += [",".join(row[c] for c in columns) for row in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        written["summary_csv"] = path
    if "json" in formats:
        path = out / "summary.json"
        doc = {
            "threshold": report.threshold,
            "threshold_rule": report.threshold_rule,
            "budget": report.budget,
            "checkpoints": report.checkpoints,
            "median_includes_initialization_queries": True,
            "rows": rows,
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
        written["summary_json"] = path

    trace_dir = out / "traces"
    trace_dir.mkdir(exist_ok=True)
    for record in report.runs:
        path = trace_dir / f"run_{record.run_id}.csv"
        write_trace_file(path, record.result.trace if record.result is not None else [])
        written["traces"].append(path)

    plot_path = out / "plot_data.csv"
    lines = ["config_index,bias,query_index,median_best_distance"]
    for cfg_i, summary in enumerate(report.summaries):
        mine = [r for r in report.runs if r.config_index == cfg_i and r.result is not None]
        if not mine:
            continue
        # Distance after each query, carrying the last value for short runs.
        curves = []
        for record in mine:
            best = [entry.best_distance for entry in record.result.trace]
            if len(best) < report.budget:
                best = best + [best[-1]] * (report.budget - len(best))
            curves.append(best)
        median_curve = np.median(np.asarray(curves), axis=0)
        for q, value in enumerate(median_curve, start=1):
            lines.append(f"{cfg_i},{summary.bias_label},{q},{fmt(value)}")
    plot_path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    written["plot_data"] = plot_path
    return written


# ---------------------------------------------------------------------------
# Round-trip parsing, used by tests to re-aggregate from raw files.
# ---------------------------------------------------------------------------


def parse_trace_file(path) -> list[tuple[int, float, bool]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "query_index,best_distance,adversarial":
        raise ValueError(f"{path}: bad trace header")
    parsed = []
    for line in lines[1:]:
        idx, dist, adv = line.split(",")
        parsed.append((int(idx), float(dist), adv == "1"))
    return parsed


def parse_summary_csv(path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]
