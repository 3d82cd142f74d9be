"""Readers over persisted runs: summaries, paper-style tables and plot data.

Everything here works from ``generations.csv`` alone, so re-running a report
never re-simulates anything.
"""
from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, model_label, parse_model
from .environments import Mode
from .metrics import CSV_COLUMNS, describe, forgetting_gap, format_float, recovery_time, task_balance

TABLES = ("single_task", "forgetting", "recovery", "switching_rates", "multitask")
_INT_COLS = {"generation", "patterns_reused_this_gen", "patterns_new_this_gen", "eval_budget_used",
             "measurement_evals_used"}
_STR_COLS = {"replicate_id", "model", "current_task"}


class MissingRunError(FileNotFoundError):
    pass


@dataclass
class RunData:
    config: ExperimentConfig
    rows: list[dict]
    path: Path | None = None

    @property
    def models(self) -> list[str]:
        return [model_label(parse_model(m)) for m in self.config.models]


def _parse_value(col: str, v: str):
    if col in _STR_COLS:
        return v
    if col in _INT_COLS:
        return int(v)
    if v == "":
        return None
    if col == "per_task_fitness":
        return {k: float(x) for k, x in (kv.split("=") for kv in v.split(";"))}
    return float(v)


def parse_generations(text: str, path: Path | None = None) -> RunData:
    cfg = None
    body = []
    for line in text.splitlines():
        if line.startswith("# config: "):
            cfg = ExperimentConfig.from_dict(json.loads(line[len("# config: "):]))
        elif not line.startswith("#"):
            body.append(line)
    if cfg is None:
        raise ValueError(f"{path or 'csv'}: missing provenance config line")
    reader = csv.DictReader(io.StringIO("\n".join(body)))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"{path or 'csv'}: unexpected columns {reader.fieldnames}")
    rows = [{k: _parse_value(k, v) for k, v in r.items()} for r in reader]
    return RunData(cfg, rows, path)


def read_generations(path: str | Path) -> RunData:
    path = Path(path)
    return parse_generations(path.read_text(), path)


def _by_replicate(run: RunData) -> dict[tuple[str, str, str], list[dict]]:
    """Rows grouped by (model, task, replicate); task is '' unless stationary."""
    stationary = run.config.mode is Mode.STATIONARY
    groups: dict[tuple[str, str, str], list[dict]] = defaultdict(list)
    for r in run.rows:
        task = r["current_task"] if stationary else ""
        groups[(r["model"], task, r["replicate_id"])].append(r)
    for rows in groups.values():
        rows.sort(key=lambda r: r["generation"])
    return groups


# -- analyses ----------------------------------------------------------------


def final_fitness(run: RunData) -> dict[str, dict[str, list[float]]]:
    """model -> task -> final best fitness per replicate."""
    out: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for (model, task, _), rows in _by_replicate(run).items():
        out[model][task or rows[-1]["current_task"]].append(rows[-1]["best_fitness"])
    return out


def replicate_means(run: RunData) -> dict[str, list[float]]:
    """model -> per-replicate final best fitness averaged over the stationary shapes."""
    acc: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for (model, _, rep), rows in _by_replicate(run).items():
        acc[model][rep].append(rows[-1]["best_fitness"])
    return {m: [float(np.mean(v)) for _, v in sorted(reps.items())] for m, reps in acc.items()}


def segments(run: RunData):
    """Yield ``(model, replicate, segment_index, rows)`` for a switching run."""
    interval = run.config.interval
    for (model, _, rep), rows in _by_replicate(run).items():
        for k in range(0, len(rows), interval):
            yield model, rep, k // interval, rows[k:k + interval]


def segment_metrics(run: RunData) -> dict[str, dict]:
    thr = run.config.recovery_threshold
    per_model: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for model, rep, k, rows in segments(run):
        rec = recovery_time([r["best_fitness"] for r in rows], thr, len(rows))
        end = rows[-1]
        d = per_model[model]
        (d["censored"] if rec.censored else d["recovery"]).append(rec.generations)
        if end["all_tasks_fitness"] is not None:
            d["current"].append(end["best_fitness"])
            d["all_tasks"].append(end["all_tasks_fitness"])
            d["gap"].append(forgetting_gap(end["best_fitness"], end["all_tasks_fitness"]))
    out = {}
    for model, d in per_model.items():
        rec = d["recovery"]
        out[model] = {
            "current_task": describe(d["current"]).to_dict(),
            "all_tasks": describe(d["all_tasks"]).to_dict(),
            "forgetting_gap": describe(d["gap"]).to_dict(),
            "recovery": {
                **describe(rec).to_dict(),
                "min": min(rec) if rec else None,
                "max": max(rec) if rec else None,
                "censored": len(d["censored"]),
                "segments": len(rec) + len(d["censored"]),
            },
        }
    return out


def multitask_metrics(run: RunData) -> dict[str, dict]:
    per_model: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for (model, _, _), rows in _by_replicate(run).items():
        end = rows[-1]
        per_model[model]["avg"].append(end["best_fitness"])
        for t, f in (end["per_task_fitness"] or {}).items():
            per_model[model][t].append(f)
    out = {}
    for model, d in per_model.items():
        tasks = [t for t in run.config.shapes if t in d]
        means = {t: float(np.mean(d[t])) for t in tasks}
        out[model] = {
            "avg": describe(d["avg"]).to_dict(),
            "per_task": {t: describe(d[t]).to_dict() for t in tasks},
            "task_balance": task_balance(list(means.values())) if len(means) >= 2 else None,
        }
    return out


def summarize(run: RunData) -> dict:
    mode = run.config.mode
    summary: dict = {"experiment": run.config.name, "schedule": mode.value, "models": {}}
    finals = final_fitness(run)
    for model in run.models:
        per_task = finals.get(model, {})
        entry = {
            "final_best_fitness": {t: describe(v).to_dict() for t, v in per_task.items()},
            "final_best_per_replicate": {t: v for t, v in per_task.items()},
        }
        summary["models"][model] = entry
    if mode is Mode.STATIONARY:
        for model, v in replicate_means(run).items():
            summary["models"][model]["mean_over_tasks"] = describe(v).to_dict()
    if mode is Mode.SWITCHING:
        for model, m in segment_metrics(run).items():
            summary["models"][model].update(m)
    if mode is Mode.MULTITASK:
        for model, m in multitask_metrics(run).items():
            summary["models"][model].update(m)
    return summary


# -- run directories and tables ----------------------------------------------


def load_run_dir(run_dir: str | Path) -> dict[str, RunData]:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise MissingRunError(f"run directory {run_dir} does not exist")
    runs = {}
    for csv_path in sorted(run_dir.glob("*/generations.csv")):
        run = read_generations(csv_path)
        runs[csv_path.parent.name] = run
    if (run_dir / "generations.csv").exists():
        runs[run_dir.name] = read_generations(run_dir / "generations.csv")
    if not runs:
        raise MissingRunError(f"no experiments found in {run_dir}")
    return runs


def _pick(runs: dict[str, RunData], mode: Mode, interval: int | None = None, what: str = "") -> list[RunData]:
    found = [r for r in runs.values() if r.config.mode is mode and (interval is None or r.config.interval == interval)]
    if not found:
        raise MissingRunError(f"missing experiment: no {what or mode.value} run in this directory")
    return found


def markdown_table(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines)


def _f(x, digits: int = 1) -> str:
    return "n/a" if x is None or (isinstance(x, float) and np.isnan(x)) else f"{x:.{digits}f}"


def _fast_switching(runs):
    cands = _pick(runs, Mode.SWITCHING, what="switching")
    return min(cands, key=lambda r: r.config.interval)


def table_single_task(runs) -> str:
    run = _pick(runs, Mode.STATIONARY, what="stationary (single-task)")[0]
    finals = final_fitness(run)
    reps = replicate_means(run)
    shapes = run.config.shapes
    rows = []
    for model in run.models:
        per = finals.get(model, {})
        # the interval is over replicates, each averaged across the shapes
        overall = describe(reps.get(model, []))
        cells = [_f(np.mean(per[s])) if s in per else "n/a" for s in shapes]
        rows.append([model, *cells, _f(overall.mean), f"±{_f(overall.half_width)}"])
    return markdown_table(["Model", *shapes, "Mean", "95% CI"], rows)


def table_forgetting(runs) -> str:
    run = _fast_switching(runs)
    m = segment_metrics(run)
    rows = [
        [model, _f(m[model]["current_task"]["mean"]), _f(m[model]["all_tasks"]["mean"]), _f(m[model]["forgetting_gap"]["mean"])]
        for model in run.models if model in m
    ]
    return markdown_table(["Model", "Current Task", "All Tasks", "Forgetting Gap"], rows)


def table_recovery(runs) -> str:
    run = _fast_switching(runs)
    m = segment_metrics(run)
    rows = []
    for model in run.models:
        if model not in m:
            continue
        r = m[model]["recovery"]
        rows.append([model, _f(r["mean"]), _f(r["sd"]), _f(r["min"], 0), _f(r["max"], 0),
                     f"{r['censored']}/{r['segments']}"])
    return markdown_table(["Model", "Mean", "Std Dev", "Min", "Max", "Censored"], rows)


def table_switching_rates(runs) -> str:
    cands = sorted(_pick(runs, Mode.SWITCHING, what="switching"), key=lambda r: r.config.interval)
    metrics = [(r.config.interval, segment_metrics(r)) for r in cands]
    models = list(dict.fromkeys(m for r in cands for m in r.models))
    rows = []
    for model in models:
        cells = [_f(m[model]["recovery"]["mean"]) if model in m else "n/a" for _, m in metrics]
        rows.append([model, *cells])
    return markdown_table(["Model", *[f"Every {i} gens" for i, _ in metrics]], rows)


def table_multitask(runs) -> str:
    run = _pick(runs, Mode.MULTITASK, what="multitask")[0]
    m = multitask_metrics(run)
    shapes = run.config.shapes
    rows = []
    for model in run.models:
        if model not in m:
            continue
        d = m[model]
        rows.append([model, _f(d["avg"]["mean"]), *[_f(d["per_task"][s]["mean"]) for s in shapes],
                     _f(d["task_balance"])])
    return markdown_table(["Model", "Avg", *shapes, "Task Balance"], rows)


_RENDER = {
    "single_task": table_single_task,
    "forgetting": table_forgetting,
    "recovery": table_recovery,
    "switching_rates": table_switching_rates,
    "multitask": table_multitask,
}


def report(run_dir: str | Path, table: str) -> str:
    if table not in _RENDER:
        raise ValueError(f"unknown table {table!r}; choose from {TABLES}")
    return _RENDER[table](load_run_dir(run_dir))


# -- plot data ---------------------------------------------------------------


def switch_annotations(run: RunData) -> list[tuple[str, str, int, str, str]]:
    """(model, replicate, generation, from_task, to_task) at every switch."""
    if run.config.mode is not Mode.SWITCHING:
        return []
    out = []
    interval = run.config.interval
    for (model, _, rep), rows in _by_replicate(run).items():
        for prev, cur in zip(rows, rows[1:]):
            if cur["generation"] % interval == 0:
                out.append((model, rep, cur["generation"], prev["current_task"], cur["current_task"]))
    return out


def plot_data(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Write tidy ``curves.csv`` and ``switches.csv`` for external plotting."""
    runs = load_run_dir(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else Path(run_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves, switches = io.StringIO(), io.StringIO()
    cw = csv.writer(curves, lineterminator="\n")
    sw = csv.writer(switches, lineterminator="\n")
    cw.writerow(["experiment", "generation", "model", "replicate", "best_fitness", "current_task"])
    sw.writerow(["experiment", "model", "replicate", "generation", "from_task", "to_task"])
    for name, run in runs.items():
        for r in run.rows:
            cw.writerow([name, r["generation"], r["model"], r["replicate_id"], format_float(r["best_fitness"]),
                         r["current_task"]])
        for model, rep, g, a, b in switch_annotations(run):
            sw.writerow([name, model, rep, g, a, b])
    paths = [out_dir / "curves.csv", out_dir / "switches.csv"]
    paths[0].write_text(curves.getvalue())
    paths[1].write_text(switches.getvalue())
    return paths
