"""Task dispatch, CSV artifacts, the run registry and parameter sweeps.

Each run writes its artifacts under ``<out>/<run_id>/`` and appends one JSON
line to ``<out>/registry.jsonl``.  The run id is a content hash of the
resolved configuration, and artifact bytes depend only on the configuration,
so re-running a configuration reproduces both exactly.  Only the registry
line carries a timestamp.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import fit_exponent, moments, re_ledger, variance_profile
from .config import ConfigError, ExperimentConfig
from .exact import BudgetExceededError, enumerate_measure
from .kernel import CouplingKernel, cross_sums
from .observables import energy_observable, site_height, site_name
from .sampler import run_chain

__all__ = [
    "RegistryEntry",
    "CSV_HEADERS",
    "run_task",
    "execute_task",
    "sweep",
    "SweepResult",
    "write_csv",
    "read_registry",
]

REGISTRY = "registry.jsonl"

CSV_HEADERS = {
    "moments": ["alpha", "beta", "p", "n", "mean_abs", "mean_abs_se", "second_moment", "second_moment_se"],
    "ledger": ["alpha", "beta", "p", "t", "n", "formula", "bound"],
    "profile": ["n", "variance", "se"],
    "fit": ["slope", "ci_lo", "ci_hi", "r2"],
    "tailsum": ["n", "cross_sum"],
}


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def write_csv(path, header, rows) -> None:
    """Write rows with shortest round-trip float formatting and ``\\n`` line endings."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


@dataclass
class RegistryEntry:
    run_id: str
    task: str
    config: dict
    artifacts: list[str]
    summary: dict
    timestamp: str = ""
    status: str = "ok"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _model_cols(config: ExperimentConfig) -> list:
    return [config["model.alpha"], config["model.beta"], config["model.p"]]


def _task_exact(config: ExperimentConfig, out: str) -> tuple[list[str], dict]:
    dist = enumerate_measure(
        config.window(), config["exact.kmax"], config["geometry.omega"], config.model_params(),
        config["model.eps"], config["exact.budget"],
    )
    dist.to_csv(os.path.join(out, "distribution.csv"))
    rep = moments(dist)
    write_csv(
        os.path.join(out, "moments.csv"), CSV_HEADERS["moments"],
        [_model_cols(config) + [config["geometry.n"], rep.mean_abs, 0.0, rep.second_moment, 0.0]],
    )
    summary = {
        "n_states": dist.n_states,
        "log_z": dist.log_z,
        "boundary_mass": dist.boundary_mass,
        "mean": rep.mean,
        "mean_abs": rep.mean_abs,
        "second_moment": rep.second_moment,
    }
    return ["distribution.csv", "moments.csv"], summary


def _task_sample(config: ExperimentConfig, out: str) -> tuple[list[str], dict]:
    params = config.model_params()
    lo, hi = config.window()
    omega = config["geometry.omega"]
    observables = {
        site_name(0): site_height(0, lo),
        "energy": energy_observable(params, lo, omega, config["model.eps"]),
    }
    rec = run_chain(
        params, (lo, hi), config.proposal(), config.schedule(), observables,
        seed=config["run.seed"], omega=omega, eps=config["model.eps"],
    )
    rec.write_series_csv(os.path.join(out, "series.csv"))
    with open(os.path.join(out, "record.jsonl"), "w") as fh:
        fh.write(json.dumps(rec.json_entry("series.csv"), sort_keys=True) + "\n")
    summary = {"acceptance_rate": rec.acceptance_rate, "n_measurements": int(rec.sweeps.size)}
    artifacts = ["series.csv", "record.jsonl"]
    if rec.sweeps.size:
        rep = moments(rec)
        write_csv(
            os.path.join(out, "moments.csv"), CSV_HEADERS["moments"],
            [_model_cols(config) + [config["geometry.n"], rep.mean_abs, rep.mean_abs_se,
                                    rep.second_moment, rep.second_moment_se]],
        )
        artifacts.append("moments.csv")
        summary.update(
            mean_abs=rep.mean_abs, mean_abs_se=rep.mean_abs_se,
            second_moment=rep.second_moment, second_moment_se=rep.second_moment_se,
            autocorrelation_time=rep.autocorrelation_time,
        )
    return artifacts, summary


def _task_ledger(config: ExperimentConfig, out: str) -> tuple[list[str], dict]:
    dist = enumerate_measure(
        config.window(), config["exact.kmax"], config["geometry.omega"], config.model_params(),
        config["model.eps"], config["exact.budget"],
    )
    rows, worst_slack, all_hold = [], float("inf"), True
    for n in config["ledger.n"]:
        for t in config["ledger.t"]:
            led = re_ledger(dist, t, n, strict=False)
            rows.append(_model_cols(config) + [t, n, led.formula_value, led.bound_value])
            worst_slack = min(worst_slack, led.slack)
            all_hold = all_hold and led.holds
    write_csv(os.path.join(out, "ledger.csv"), CSV_HEADERS["ledger"], rows)
    summary = {"all_hold": all_hold, "min_slack": worst_slack, "boundary_mass": dist.boundary_mass}
    return ["ledger.csv"], summary


def _task_tailsum(config: ExperimentConfig, out: str) -> tuple[list[str], dict]:
    ns = np.array(sorted(set(config["tailsum.n_grid"])))
    kernel = CouplingKernel(config["model.alpha"], config["model.amplitude"])
    xs = cross_sums(kernel, ns, config["model.eps"])
    write_csv(os.path.join(out, "tailsum.csv"), CSV_HEADERS["tailsum"], zip(ns.tolist(), xs.tolist()))
    summary: dict = {"x_final": float(xs[-1]), "x_sup": float(xs.max())}
    if ns.size >= 4:
        summary["loglog_slope"] = fit_exponent(ns, xs).slope
    inc = np.diff(xs)
    if inc.size >= 4 and np.all(inc > 0):
        summary["increment_slope"] = fit_exponent(ns[:-1], inc).slope
    return ["tailsum.csv"], summary


def _fit_rows(fit) -> list:
    return [[fit.slope, fit.ci_lo, fit.ci_hi, fit.r2]]


def _task_profile(config: ExperimentConfig, out: str) -> tuple[list[str], dict]:
    points = variance_profile(
        config.model_params(), config["profile.sizes"], config.schedule(), config["run.seed"], config.proposal()
    )
    write_csv(os.path.join(out, "profile.csv"), CSV_HEADERS["profile"], [[p.n, p.variance, p.se] for p in points])
    artifacts = ["profile.csv"]
    summary: dict = {"variance_max": max(p.variance for p in points)}
    if len(points) >= 4 and all(p.variance > 0 for p in points):
        fit = fit_exponent([p.n for p in points], [p.variance for p in points])
        write_csv(os.path.join(out, "fit.csv"), CSV_HEADERS["fit"], _fit_rows(fit))
        artifacts.append("fit.csv")
        summary.update(slope=fit.slope, ci_lo=fit.ci_lo, ci_hi=fit.ci_hi, r2=fit.r2)
    return artifacts, summary


def _read_columns(path: str, x_col: str, y_col: str) -> tuple[list[float], list[float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or x_col not in reader.fieldnames or y_col not in reader.fieldnames:
            raise ConfigError([f"fit.input {path!r} lacks columns {x_col!r} and {y_col!r}"])
        rows = list(reader)
    return [float(r[x_col]) for r in rows], [float(r[y_col]) for r in rows]


def _task_fit(config: ExperimentConfig, out: str) -> tuple[list[str], dict]:
    if config["fit.xs"] is not None:
        xs, ys = config["fit.xs"], config["fit.ys"]
    else:
        xs, ys = _read_columns(config["fit.input"], config["fit.x_column"], config["fit.y_column"])
    try:
        fit = fit_exponent(xs, ys)
    except ValueError as exc:
        raise ConfigError([f"fit: {exc}"]) from None
    write_csv(os.path.join(out, "fit.csv"), CSV_HEADERS["fit"], _fit_rows(fit))
    return ["fit.csv"], {"slope": fit.slope, "ci_lo": fit.ci_lo, "ci_hi": fit.ci_hi, "r2": fit.r2}


_TASKS = {
    "exact": _task_exact,
    "sample": _task_sample,
    "ledger": _task_ledger,
    "tailsum": _task_tailsum,
    "profile": _task_profile,
    "fit": _task_fit,
}


def execute_task(config: ExperimentConfig, out_dir: str | None = None) -> RegistryEntry:
    """Run one task and write its artifacts, without touching the registry."""
    out_dir = out_dir if out_dir is not None else config["output.dir"]
    run_id = config.run_id()
    run_dir = os.path.join(out_dir, run_id)
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.txt"), "w") as fh:
        fh.write(config.emit(include_grid=False))
    artifacts, summary = _TASKS[config.task](config, run_dir)
    snapshot = {k: (list(v) if isinstance(v, tuple) else v) for k, v in config.values.items()
                if v is not None and not k.startswith("grid.")}
    return RegistryEntry(
        run_id=run_id,
        task=config.task,
        config=snapshot,
        artifacts=[os.path.join(run_id, a) for a in ["config.txt", *artifacts]],
        summary=summary,
    )


def _append_registry(out_dir: str, entry: RegistryEntry) -> None:
    entry.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    with open(os.path.join(out_dir, REGISTRY), "a") as fh:
        fh.write(entry.to_json() + "\n")


def read_registry(out_dir: str) -> list[dict]:
    path = os.path.join(out_dir, REGISTRY)
    if not os.path.exists(path):
        return []
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def run_task(config: ExperimentConfig, out_dir: str | None = None) -> RegistryEntry:
    """Run one task, write its artifacts and append its registry line."""
    out_dir = out_dir if out_dir is not None else config["output.dir"]
    os.makedirs(out_dir, exist_ok=True)
    entry = execute_task(config, out_dir)
    _append_registry(out_dir, entry)
    return entry


@dataclass
class SweepResult:
    entries: list[RegistryEntry] = field(default_factory=list)
    failures: list[tuple[dict, str]] = field(default_factory=list)
    summary_path: str = ""


def _sweep_cell(config: ExperimentConfig, out_dir: str):
    try:
        return execute_task(config, out_dir), None
    except (BudgetExceededError, ConfigError, ValueError, ArithmeticError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def sweep(config: ExperimentConfig, out_dir: str | None = None, jobs: int = 1) -> SweepResult:
    """Expand the grid, run every cell and merge the summaries.

    A failing cell is recorded in the summary and does not stop the sweep.
    Registry lines are appended by this process only, in grid order.
    """
    out_dir = out_dir if out_dir is not None else config["output.dir"]
    os.makedirs(out_dir, exist_ok=True)
    cells = config.cells() or [{}]
    if len(cells) > config["grid.cap"]:
        raise ConfigError([f"grid has {len(cells)} cells, above grid.cap = {config['grid.cap']}"])
    cell_configs = [config.with_values(c) for c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            outcomes = list(pool.map(_sweep_cell, cell_configs, [out_dir] * len(cell_configs)))
    else:
        outcomes = [_sweep_cell(c, out_dir) for c in cell_configs]

    result = SweepResult()
    rows = []
    keys = sorted(config.grid)
    for cell, cfg, (entry, error) in zip(cells, cell_configs, outcomes):
        if entry is not None:
            _append_registry(out_dir, entry)
            result.entries.append(entry)
            rows.append((cell, cfg.run_id(), "ok", "", entry.summary))
        else:
            result.failures.append((cell, error))
            rows.append((cell, cfg.run_id(), "failed", error, {}))
    stat_keys = sorted({k for *_, s in rows for k in s})
    rows.sort(key=lambda r: tuple(_sort_key(r[0][k]) for k in keys))
    result.summary_path = os.path.join(out_dir, "sweep_summary.csv")
    write_csv(
        result.summary_path,
        keys + ["run_id", "status", "error"] + stat_keys,
        [[cell[k] for k in keys] + [rid, status, err] + [s.get(k) for k in stat_keys]
         for cell, rid, status, err, s in rows],
    )
    return result


def _sort_key(value):
    return tuple(value) if isinstance(value, tuple) else (value,)
